"""Model toolkit for a Bose-Einstein condensate coupled to an optical cavity.

Modules: ``atomic`` (Rb-87 D2 dipole structure), ``geometry`` (cavity mode
and transport kinematics), ``hamiltonian`` (single-excitation spectrum),
``gpe`` (condensate ground state and mode overlap), ``scan`` (photon-count
traces), ``fitting`` (least squares) and ``cli``.
"""

__version__ = "0.1.0"
