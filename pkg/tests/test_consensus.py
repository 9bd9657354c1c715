import math

import numpy as np
import pytest

from relaykey import (
    BitDecision,
    CalibrationError,
    ChannelParams,
    Link,
    QuantizerThresholds,
    calibrate_thresholds,
    estimate_consensus,
    extract_key_pair,
    quantize,
    simulate_probe_pair,
    unfold,
)
from relaykey.consensus import _estimate, blocks_for_stderr, unfolded_moments
from relaykey.validation import consensus_quadrature

TH = QuantizerThresholds(-1.0, 1.0)


def test_quantize_levels():
    assert quantize(TH.q_p + 1, TH) is BitDecision.Bit1
    assert quantize(TH.q_m - 1, TH) is BitDecision.Bit0
    assert quantize(0.5 * (TH.q_m + TH.q_p), TH) is BitDecision.Discard
    assert quantize(1.0, TH) is BitDecision.Discard
    assert quantize(-1.0, TH) is BitDecision.Discard


def test_thresholds_ordering():
    with pytest.raises(ValueError):
        QuantizerThresholds(1.0, 1.0)
    t = QuantizerThresholds.symmetric(3.0, 0.0)
    assert t.q_m < 3.0 < t.q_p
    assert QuantizerThresholds.symmetric(1.0, 0.5).half_width == 0.5


def test_unfold_order():
    y = np.array([1 + 2j, 3 - 4j])
    assert unfold(y).tolist() == [1, 2, 3, -4]


def test_extract_identical():
    kx, kr, kept = extract_key_pair([2, 0, -2], [2, 0, -2], TH)
    assert kx.tolist() == kr.tolist() == [1, 0]
    assert kept.tolist() == [0, 2]


def test_extract_one_sided_discard():
    kx, kr, kept = extract_key_pair([2, 2], [0, 2], TH)
    assert kx.size == kr.size == 1
    assert kept.tolist() == [1]


def test_extract_mismatch():
    kx, kr, _ = extract_key_pair([2], [-2], TH)
    assert kx.tolist() == [1] and kr.tolist() == [0]


def test_extract_length_mismatch():
    with pytest.raises(ValueError):
        extract_key_pair([1, 2], [1], TH)


def test_extract_symmetry(rng):
    x, r = rng.normal(size=500), rng.normal(size=500)
    kx, kr, kept = extract_key_pair(x, r, TH)
    kr2, kx2, kept2 = extract_key_pair(r, x, TH)
    assert np.array_equal(kx, kx2) and np.array_equal(kr, kr2)
    assert np.array_equal(kept, kept2)


def test_guard_band_monotone_matched_draws(rng):
    ch = ChannelParams.from_snr_db(15.0, 0.7)
    mean, var, _ = unfolded_moments(ch, 0.5, Link.AR)
    y_n, y_r = simulate_probe_pair(ch, 0.5, Link.AR, 50_000, rng)
    x, r = unfold(y_n), unfold(y_r)
    prev_kept, prev_miss = None, None
    for g in np.linspace(0, 3 * math.sqrt(var), 20):
        _, _, kept = extract_key_pair(x, r, QuantizerThresholds.symmetric(mean, g))
        kx, kr, _ = extract_key_pair(x, r, QuantizerThresholds.symmetric(mean, g))
        kept_set, miss_set = set(kept.tolist()), set(kept[kx != kr].tolist())
        if prev_kept is not None:
            assert kept_set <= prev_kept and miss_set <= prev_miss
        prev_kept, prev_miss = kept_set, miss_set


def test_estimate_extremes(rng):
    ch = ChannelParams.from_snr_db(20.0, 0.9)
    below = QuantizerThresholds(-1e9 - 1, -1e9)
    est = estimate_consensus(ch, 0.5, Link.AR, below, 1000, rng)
    assert est.p_hat == 1.0
    wide = QuantizerThresholds(-1e9, 1e9)
    est = estimate_consensus(ch, 0.5, Link.AR, wide, 1000, rng)
    assert est.p_hat == 0.0 and est.n_kept == 0 and est.delta_hat == 0.0


def test_blocks_for_stderr():
    n = blocks_for_stderr(1e-3)
    assert math.sqrt(0.25 / (2 * n)) <= 1e-3
    assert math.sqrt(0.25 / (2 * (n - 1))) > 1e-3


def test_quadrature_oracle_at_anchor(rng):
    ch = ChannelParams.from_snr_db(20.0, 0.9)
    th, _ = calibrate_thresholds(ch, 0.5, Link.AR, 1e-3, None, rng)
    est = estimate_consensus(ch, 0.5, Link.AR, th, None, rng)
    exact = consensus_quadrature(ch, 0.5, Link.AR, th)
    assert abs(est.p_hat - exact) <= 3 * est.std_err


def test_quadrature_oracle_is_a_probability():
    ch = ChannelParams.from_snr_db(10.0, 0.5)
    mean, _, _ = unfolded_moments(ch, 0.5, Link.AR)
    assert consensus_quadrature(ch, 0.5, Link.AR,
                                QuantizerThresholds.symmetric(mean, 0.0)) == pytest.approx(1.0, abs=1e-8)


def test_calibration_noiseless(rng):
    ch = ChannelParams(c_ar=0.5, c_br=0.5, p_total=100.0, gamma=0.0)
    th, est = calibrate_thresholds(ch, 0.5, Link.AR, 1e-3, 20_000, rng)
    assert th.half_width < 1e-12
    assert est.p_hat == 1.0 and est.delta_hat == 0.0


def test_calibration_loose_target(rng):
    ch = ChannelParams.from_snr_db(10.0, 0.5)
    th, est = calibrate_thresholds(ch, 0.5, Link.AR, 0.5, 20_000, rng)
    assert th.half_width < 1e-12
    assert est.delta_hat <= 0.5


def test_calibration_minimality(rng):
    ch = ChannelParams.from_snr_db(20.0, 0.9)
    n = blocks_for_stderr(1e-3)
    mean, _, _ = unfolded_moments(ch, 0.5, Link.AR)
    # replay the calibration draws to re-run the estimator at g/2
    th, est = calibrate_thresholds(ch, 0.5, Link.AR, 1e-3, n, np.random.default_rng(77))
    y_n, y_r = simulate_probe_pair(ch, 0.5, Link.AR, n, np.random.default_rng(77))
    x, r = unfold(y_n), unfold(y_r)
    assert est.delta_hat <= 1e-3
    assert _estimate(x, r, th).delta_hat == est.delta_hat
    half = QuantizerThresholds.symmetric(mean, th.half_width / 2)
    assert _estimate(x, r, half).delta_hat > 1e-3
    assert th.center == pytest.approx(mean)


def test_calibration_failure_carries_best(rng):
    ch = ChannelParams.from_snr_db(-20.0, 0.5)
    with pytest.raises(CalibrationError) as info:
        calibrate_thresholds(ch, 0.5, Link.AR, 1e-9, 2000, rng)
    assert info.value.best_delta > 1e-9


def test_expected_key_length(model_20_05):
    ch = ChannelParams.from_snr_db(20.0, 0.5)
    th, _ = calibrate_thresholds(ch, 0.5, Link.AR, 1e-3, None, np.random.default_rng(3))
    est = estimate_consensus(ch, 0.5, Link.AR, th, None, np.random.default_rng(4))
    rng = np.random.default_rng(5)
    L, runs = 200, 2000
    lengths = []
    for _ in range(runs):
        y_n, y_r = simulate_probe_pair(ch, 0.5, Link.AR, L, rng)
        lengths.append(extract_key_pair(unfold(y_n), unfold(y_r), th)[0].size)
    ratio = np.mean(lengths) / (2 * L)
    se = math.sqrt(est.std_err ** 2 + np.var(lengths) / runs / (2 * L) ** 2)
    assert abs(ratio - est.p_hat) <= 3 * se
