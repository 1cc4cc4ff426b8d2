import numpy as np
import pytest

from bec_cavity.geometry import (
    CavityGeometry, TransportProfile, cavity_derived, figures_of_merit, recoil_frequency, transport_kinematics,
)
from bec_cavity.gpe import u0_empirical


def test_experimental_cavity():
    d = cavity_derived(CavityGeometry())
    assert d.transverse_spacing_MHz == pytest.approx(18590, rel=2e-3)
    assert d.waist == pytest.approx(25.3e-6, rel=5e-3)
    assert d.fsr_MHz == pytest.approx(299792458 / (2 * 176e-6) / 1e6)


def test_confocal_limit_spacing_is_half_fsr():
    d = cavity_derived(CavityGeometry(length=0.1, mirror_radius=0.1))
    assert d.transverse_spacing_MHz == pytest.approx(d.fsr_MHz / 2, rel=1e-12)


def test_unstable_resonator_rejected():
    with pytest.raises(ValueError):
        CavityGeometry(length=0.2, mirror_radius=0.1)
    with pytest.raises(ValueError):
        CavityGeometry(length=-1e-6)


@pytest.mark.parametrize("R", [0.01, 0.075, 0.5])
def test_gouy_fraction_monotone_in_length(R):
    lengths = np.linspace(1e-5, 1.9 * R, 40)
    derived = [cavity_derived(CavityGeometry(length=L, mirror_radius=R)) for L in lengths]
    fraction = [d.transverse_spacing_MHz / d.fsr_MHz for d in derived]
    assert np.all(np.diff(fraction) > 0)
    assert 0 < fraction[0] and fraction[-1] < 1


def test_figures_of_merit():
    u0 = u0_empirical(154_000)
    fom = figures_of_merit(10.6, u0 * 14.4, 154_000, 1.3, 3.0)
    assert fom.critical_photon_number == pytest.approx(9 / (2 * 10.6 ** 2), rel=1e-14)
    assert round(fom.critical_photon_number, 2) == 0.04
    assert fom.cooperativity == pytest.approx(1.66e6, rel=5e-3)
    assert fom.recoil_Hz == pytest.approx(3332, rel=1e-3)
    with pytest.raises(ValueError):
        figures_of_merit(10.6, 0.0, 1, 1.3, 3.0)


def test_recoil_scales_inverse_square():
    assert recoil_frequency(400e-9) / recoil_frequency(800e-9) == pytest.approx(4.0)


def test_transport():
    k = transport_kinematics(TransportProfile())
    assert k.a_max == pytest.approx(22.35, rel=1e-3)
    assert k.distance == pytest.approx(35.57e-3, rel=1e-3)
    assert k.x[-1] == pytest.approx(k.distance, rel=1e-12)
    assert k.v[0] == 0.0 and k.v[-1] == pytest.approx(0.0, abs=1e-12)
    assert np.max(k.v) == pytest.approx(k.v_max, rel=1e-6)
    # v is the derivative of x, a the derivative of v
    assert np.gradient(k.x, k.t)[1:-1] == pytest.approx(k.v[1:-1], abs=1e-3 * k.v_max)
    assert np.gradient(k.v, k.t)[1:-1] == pytest.approx(k.a[1:-1], rel=1e-3, abs=1e-3)


def test_transport_validation():
    with pytest.raises(ValueError):
        TransportProfile(duration=0)
    with pytest.raises(ValueError):
        TransportProfile(samples=1)
