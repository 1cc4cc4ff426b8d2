import math

import numpy as np
import pytest

from bec_cavity.scan import (
    MINUS, PLUS, Resonance, ScanConfig, ScanTrace, expected_rates, read_trace_csv, sliding_average,
    smooth_and_detect, synthesize_scan, write_trace_csv,
)


def test_dark_only_trace():
    scan = ScanConfig(start_MHz=-100, stop_MHz=100, speed_MHz_per_ms=0.025, bin_time=1e-3, average_window=2e-2)
    assert scan.duration == pytest.approx(8.0)
    tr = synthesize_scan([], scan, seed=3)
    total = tr.counts_plus.sum()
    assert abs(total - 480) < 5 * math.sqrt(480)
    assert tr.counts_plus.dtype.kind == "i" and tr.counts_plus.min() >= 0


def test_zero_efficiency_gives_dark_counts_only():
    scan = ScanConfig(efficiency=0.0)
    rates = expected_rates([Resonance(-4106, PLUS, 1.0, 0.0)], scan, np.array([-4106.0]))
    assert rates[PLUS][0] == pytest.approx(scan.dark_rate)


def test_peak_rate_and_width():
    scan = ScanConfig()
    d = np.linspace(-4120, -4092, 28001)
    rates = expected_rates([Resonance(-4106, PLUS, 1.0, 0.0)], scan, d)[PLUS] - scan.dark_rate
    assert rates.max() == pytest.approx(scan.n_bar * 2 * 2 * math.pi * 1.3e6 * 0.05, rel=1e-9)
    above = d[rates >= rates.max() / 2]
    assert above[-1] - above[0] == pytest.approx(2 * 1.3, abs=3e-3)  # FWHM = 2 kappa


def test_fixed_seed_is_bit_identical():
    res = [Resonance(-4106, PLUS, 0.6, 0.4)]
    a = synthesize_scan(res, ScanConfig(), seed=11)
    b = synthesize_scan(res, ScanConfig(), seed=11)
    c = synthesize_scan(res, ScanConfig(), seed=12)
    assert a.counts_plus.tobytes() == b.counts_plus.tobytes()
    assert a.counts_plus.tobytes() != c.counts_plus.tobytes() or a.counts_minus.tobytes() != c.counts_minus.tobytes()


def test_mean_converges_to_expected_rate():
    scan = ScanConfig(start_MHz=-4110, stop_MHz=-4102, n_bar=0.04)
    res = [Resonance(-4106, PLUS, 1.0, 0.0)]
    rng_sum = np.zeros(scan.n_bins)
    n = 1000
    for s in range(n):
        rng_sum += synthesize_scan(res, scan, seed=s).counts_plus
    tr = synthesize_scan(res, scan, seed=0)
    mean = expected_rates(res, scan, tr.delta_p)[PLUS] * scan.bin_time
    # binned means over 100-bin blocks keep the check sharp at low rates
    blocks = slice(0, scan.n_bins // 100 * 100)
    emp = (rng_sum[blocks] / n).reshape(-1, 100).sum(axis=1)
    exp = mean[blocks].reshape(-1, 100).sum(axis=1)
    assert np.all(np.abs(emp - exp) <= 3 * np.sqrt(exp / n) + 1e-12)


def test_sliding_average_interior_exact():
    rng = np.random.default_rng(0)
    counts = rng.poisson(2.0, 1000)
    w = 51
    avg = sliding_average(counts, w)
    for i in (100, 500, 900):
        assert avg[i] == pytest.approx(counts[i - w // 2:i + w // 2 + 1].mean())
    # total preserved up to the edges
    assert avg.sum() * 1 == pytest.approx(counts.sum(), rel=0.05)
    even = sliding_average(np.ones(100), 10)
    assert np.allclose(even[10:-10], 1.0)


def test_window_longer_than_trace():
    scan = ScanConfig(start_MHz=-4106, stop_MHz=-4105.99, average_window=2e-3)
    tr = synthesize_scan([], scan, seed=0)
    with pytest.raises(ValueError):
        smooth_and_detect(tr, scan)


def test_noiseless_trace_exact_centre():
    scan = ScanConfig()
    tr0 = synthesize_scan([], scan, seed=0)
    centre = -4106.0
    rates = expected_rates([Resonance(centre, PLUS, 1.0, 0.0)], scan, tr0.delta_p)
    tr = ScanTrace(scan.start_MHz, scan.speed_MHz_per_ms, scan.bin_time,
                   rates[PLUS] * scan.bin_time, rates[MINUS] * scan.bin_time)
    peaks = smooth_and_detect(tr, scan, channels=(PLUS,))
    assert len(peaks) == 1
    bin_MHz = scan.speed_MHz_per_ms * 1e3 * scan.bin_time
    assert abs(peaks[0].center_MHz - centre) <= bin_MHz


def test_close_pair_merges():
    scan = ScanConfig()
    res = [Resonance(-4106.85, PLUS, 1.0, 0.0), Resonance(-4105.15, PLUS, 1.0, 0.0)]
    tr0 = synthesize_scan([], scan, seed=0)
    rates = expected_rates(res, scan, tr0.delta_p)
    tr = ScanTrace(scan.start_MHz, scan.speed_MHz_per_ms, scan.bin_time,
                   rates[PLUS] * scan.bin_time, rates[MINUS] * scan.bin_time)
    peaks = smooth_and_detect(tr, scan, channels=(PLUS,))
    assert len(peaks) == 1
    assert peaks[0].center_MHz == pytest.approx(-4106.0, abs=0.1)


def test_detection_on_noisy_trace_finds_the_peak():
    scan = ScanConfig(n_bar=0.04)
    hits = 0
    for seed in range(20):
        tr = synthesize_scan([Resonance(-4106, PLUS, 0.5, 0.5)], scan, seed=seed)
        peaks = [p for p in smooth_and_detect(tr, scan) if p.channel == PLUS]
        hits += len(peaks) == 1 and abs(peaks[0].center_MHz + 4106) < 25
    assert hits >= 18


def test_resonance_outside_window_rejected():
    with pytest.raises(ValueError):
        synthesize_scan([Resonance(0.0, PLUS, 1, 0)], ScanConfig())


def test_config_validation(caplog):
    with pytest.raises(ValueError):
        ScanConfig(bin_time=3e-3)
    with pytest.raises(ValueError):
        ScanConfig(efficiency=1.5)
    with caplog.at_level("WARNING"):
        ScanConfig(n_bar=1.0)
    assert "critical photon number" in caplog.text


def test_csv_round_trip(tmp_path):
    tr = synthesize_scan([Resonance(-4106, MINUS, 0.5, 0.5)], ScanConfig(), seed=5)
    p = tmp_path / "trace.csv"
    write_trace_csv(tr, p)
    back = read_trace_csv(p)
    assert np.array_equal(back.counts_plus, tr.counts_plus)
    assert np.array_equal(back.counts_minus, tr.counts_minus)
    assert np.array_equal(back.t, tr.t) and np.array_equal(back.delta_p, tr.delta_p)
    assert back.speed_MHz_per_ms == pytest.approx(25.0, rel=1e-9)
    assert back.bin_time == pytest.approx(tr.bin_time, rel=1e-9)


def test_csv_rejects_bad_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b,c,d\n1,2,3,4\n")
    with pytest.raises(ValueError):
        read_trace_csv(p)
