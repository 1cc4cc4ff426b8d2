import numpy as np
import pytest

from bec_cavity import hamiltonian as ham
from bec_cavity.errors import FitError
from bec_cavity.fitting import (
    FULL_FORMULA, PURE_SQRT, FitProblem, SpectrumPoint, curve_problem, fit_spectrum, fit_sqrt_law, jacobian,
    least_squares, sqrt_law_model, synthetic_spectrum,
)
from bec_cavity.hamiltonian import closed_form_lower_branch


def test_linear_exact():
    x = np.linspace(1, 10, 10)
    res = least_squares(curve_problem(x, 3.25 * x, lambda p, x: p[0] * x, [1.0], ["a"]))
    assert res["a"] == pytest.approx(3.25, abs=1e-10)
    assert res.converged and res.residual_norm <= res.initial_residual_norm


def test_rosenbrock():
    prob = FitProblem(lambda p: np.array([10 * (p[1] - p[0] ** 2), 1 - p[0]]), [-1.2, 1.0], ["x", "y"])
    res = least_squares(prob)
    assert res.iterations <= 200
    assert res.x == pytest.approx([1.0, 1.0], abs=1e-8)


def test_bounds_are_enforced_by_projection():
    x = np.linspace(0, 1, 20)
    prob = curve_problem(x, 5 * x, lambda p, x: p[0] * x, [1.0], ["a"], lower=[0.0], upper=[2.0])
    res = least_squares(prob)
    assert res["a"] == pytest.approx(2.0)
    with pytest.raises(ValueError):
        FitProblem(lambda p: p, [3.0], ["a"], lower=[0.0], upper=[2.0])


def test_objective_never_increases():
    rng = np.random.default_rng(1)
    x = np.linspace(0, 3, 30)
    y = 2 * np.exp(-1.3 * x) + 0.01 * rng.normal(size=x.size)
    for start in ([0.1, 0.1], [5.0, 4.0], [2.0, 1.3]):
        res = least_squares(curve_problem(x, y, lambda p, x: p[0] * np.exp(-p[1] * x), start, ["A", "k"]))
        assert res.residual_norm <= res.initial_residual_norm + 1e-15
        assert np.all(res.stderr >= 0)


def test_sqrt_law_recovery_with_noise():
    N = np.geomspace(2500, 2e5, 12)
    est = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        y = 14.4 * np.sqrt(N) * (1 + 0.01 * rng.normal(size=N.size))
        res = least_squares(curve_problem(N, y, lambda p, n: p[0] * np.sqrt(n), [10.0], ["g"]))
        est.append(res["g"])
    assert np.mean(est) == pytest.approx(14.4, rel=0.01)


def test_jacobian_forward_matches_central():
    fun = lambda p: np.array([p[0] ** 2 * p[1], np.sin(p[1]) + p[0], np.exp(0.1 * p[0])])  # noqa: E731
    x = np.array([1.3, 0.7])
    jf = jacobian(fun, x)
    jc = jacobian(fun, x, method="central")
    assert np.allclose(jf, jc, rtol=1e-6, atol=1e-8)


def test_singular_normal_matrix_flagged():
    x = np.linspace(0, 1, 10)
    prob = curve_problem(x, 2 * x, lambda p, x: (p[0] + p[1]) * x, [0.5, 0.5], ["a", "b"])
    res = least_squares(prob)
    assert res.singular
    assert res["a"] + res["b"] == pytest.approx(2.0, abs=1e-8)


def test_residual_failure_is_reported():
    def bad(p):
        raise RuntimeError("boom")
    with pytest.raises(FitError, match="a=1"):
        least_squares(FitProblem(bad, [1.0], ["a"]))


def test_permutation_invariance():
    rng = np.random.default_rng(4)
    x = np.linspace(0, 3, 25)
    y = 1.5 * x ** 2 - x + 0.05 * rng.normal(size=x.size)
    model = lambda p, x: p[0] * x ** 2 + p[1] * x  # noqa: E731
    a = least_squares(curve_problem(x, y, model, [1.0, 0.0], ["a", "b"]))
    perm = rng.permutation(x.size)
    b = least_squares(curve_problem(x[perm], y[perm], model, [1.0, 0.0], ["a", "b"]))
    assert np.allclose(a.x, b.x, atol=1e-10)


# --- sqrt law -------------------------------------------------------------------

def closed_form_data(g_plus=14.4, g_minus=11.3, r=1.2, dt=18500.0):
    N = np.geomspace(2500, 2e5, 12)
    rows = [(n, v, ham.PLUS) for n, v in zip(N, closed_form_lower_branch(N, g_plus, r, dt))]
    rows += [(n, v, ham.MINUS) for n, v in zip(N, closed_form_lower_branch(N, g_minus, r, dt))]
    return rows


def test_full_formula_self_consistency():
    res = fit_sqrt_law(closed_form_data(), FULL_FORMULA)
    assert res[ham.PLUS]["g"] == pytest.approx(14.4, rel=1e-6)
    assert res[ham.MINUS]["g"] == pytest.approx(11.3, rel=1e-6)


def test_pure_sqrt_on_full_data_shows_positive_curvature():
    res = fit_sqrt_law(closed_form_data(), PURE_SQRT)[ham.PLUS]
    resid = res.residuals  # model - data, ordered by N
    # the transverse term grows like N: pure sqrt underestimates at both ends, overshoots in between
    assert resid[0] > 0 or resid[-1] < 0
    assert resid[-1] < 0


def test_sqrt_law_errors():
    with pytest.raises(FitError):
        fit_sqrt_law([(1e4, 100, ham.PLUS)] * 3)
    with pytest.raises(FitError):
        fit_sqrt_law([(1e4, 100, ham.PLUS), (2e4, 140, ham.PLUS)])
    with pytest.raises(ValueError):
        sqrt_law_model("cubic", 1.2, 18500)


# --- spectrum fit -------------------------------------------------------------

def test_spectrum_fit_zero_noise_exact():
    truth = ham.SystemConfig()
    grid = np.linspace(-8000, 4000, 49)
    pts = synthetic_spectrum(truth, grid, noise_MHz=0.0)
    start = {(1, -1): 120_000.0, (2, -1): 4000.0, "r": 1.0}
    fit = fit_spectrum(pts, truth, noise_MHz=25.0, initial=start)
    assert fit.populations[(1, -1)] == pytest.approx(154_000, rel=1e-4)
    assert fit.populations[(2, -1)] == pytest.approx(2700, rel=1e-3)
    assert fit.r == pytest.approx(1.2, abs=1e-4)


def test_spectrum_fit_reports_unmatched_points():
    truth = ham.SystemConfig()
    pts = synthetic_spectrum(truth, np.linspace(-8000, 4000, 25), noise_MHz=0.0)
    # a sigma- datum where the model has no sigma- resonance at all
    cfg = ham.SystemConfig(g_minus=11.3)
    fit = fit_spectrum(pts, cfg, fit_r=False, min_weight=0.02)
    assert fit.excluded == []
    with pytest.raises(FitError):
        fit_spectrum([], cfg)
    with pytest.raises(FitError):
        fit_spectrum([SpectrumPoint(0.0, 0.0, "x")], cfg)
