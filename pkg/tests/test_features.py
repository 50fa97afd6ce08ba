import math

import numpy as np
import oracles
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from leakdetect import features as F
from leakdetect.banding import BandedSeries
from leakdetect.features import EntropyEdges, FeatureConfig, FeatureError, WindowConfig

EDGES = np.array([1.0, 2.0, 3.0, 4.0])


def close(a, b, rel=1e-9, abs_=1e-12):
    return math.isclose(a, b, rel_tol=rel, abs_tol=abs_)


# ---------------------------------------------------------------- framing


def test_frame_windows_stride_grid():
    starts = [s for s, _ in F.frame_windows(30, WindowConfig(10, 7))]
    assert starts == [k * 3 for k in range(7) if k * 3 <= 20]
    assert starts == [0, 3, 6, 9, 12, 15, 18]


@pytest.mark.parametrize("overlap", [3, 5, 7])
def test_single_window_when_length_equals_window(overlap):
    assert F.frame_windows(10, WindowConfig(10, overlap)) == [(0, 10)]


def test_series_shorter_than_window():
    with pytest.raises(FeatureError):
        F.frame_windows(9, WindowConfig(10, 7))


@pytest.mark.parametrize("overlap", [0, 10, 11, -1])
def test_bad_overlap(overlap):
    with pytest.raises(FeatureError):
        WindowConfig(10, overlap)


def test_preset_row_count():
    assert len(F.frame_windows(3096, WindowConfig(10, 7))) == (3096 - 10) // 3 + 1 == 1029


@given(st.integers(10, 400), st.sampled_from([3, 5, 7]))
def test_windows_inside_series(n, overlap):
    w = F.frame_windows(n, WindowConfig(10, overlap))
    assert all(0 <= s and e == s + 10 and e <= n for s, e in w)
    # the next window on the grid would not fit
    assert w[-1][0] + (10 - overlap) + 10 > n


def test_label_window():
    assert F.label_window([1] * 10) == 1
    assert F.label_window([1] * 9 + [0]) == 0
    assert F.label_window([0] * 10) == 0


def test_label_window_preset_boundary():
    from leakdetect.dataset import LeakAnnotation, expand_labels
    from leakdetect.synth import PRESET_LEAKS

    y = expand_labels(LeakAnnotation(PRESET_LEAKS["Leak_process"]), 3096)
    assert F.label_window(y[1191:1201]) == 1
    assert F.label_window(y[1188:1198]) == 0


# ------------------------------------------------------------ basic stats


def test_basic_stats_worked_example():
    s = F.basic_stats([1, -3, 2])
    srm = ((1 + math.sqrt(3) + math.sqrt(2)) / 3) ** 2
    assert s["peak"] == 3
    assert s["energy"] == 14
    assert close(s["rms"], math.sqrt(14 / 3))
    assert close(s["impulse_factor"], 1.5)
    assert close(s["shape_factor"], math.sqrt(14 / 3) / 2)
    assert s["peak_to_peak"] == 5
    assert close(s["srm"], srm)
    assert close(s["clearance_factor"], 3 / srm)
    assert s["margin_factor"] == s["clearance_factor"]
    assert close(s["crest_factor"], 3 / math.sqrt(14 / 3))
    assert s["index_max"] == 1
    assert close(s["index_min"], 1 / 3)
    assert abs(s["rms"] - 2.160247) < 1e-6
    assert abs(s["shape_factor"] - 1.080123) < 1e-6
    assert abs(s["srm"] - 1.910168) < 1e-6
    assert abs(s["clearance_factor"] - 1.570542) < 1e-6
    assert abs(s["crest_factor"] - 1.388730) < 1e-6


@pytest.mark.parametrize("c", [0.3, 1.0, 7.25, 1e6])
def test_basic_stats_constant(c):
    s = F.basic_stats([c] * 10)
    for k in ("impulse_factor", "crest_factor", "shape_factor", "clearance_factor", "margin_factor"):
        assert close(s[k], 1.0), k
    assert s["peak_to_peak"] == 0
    assert s["kurtosis"] == 0 and s["skewness"] == 0


def test_basic_stats_zeros():
    s = F.basic_stats([0.0] * 10)
    assert s["peak"] == 0 and s["energy"] == 0
    for k in ("impulse_factor", "crest_factor", "shape_factor", "clearance_factor", "margin_factor"):
        assert s[k] == 0


def test_zero_guards_are_counted():
    w = np.zeros((1, 10))
    _, guards = F.window_features(w, EDGES, FeatureConfig())
    assert guards[0].sum() > 0


finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
window = arrays(np.float64, 10, elements=finite).filter(lambda x: np.ptp(x) > 1e-3 * max(1, np.abs(x).max()))


@given(window, st.floats(0.01, 100))
def test_scale_behaviour(x, a):
    s0, s1 = F.basic_stats(x), F.basic_stats(a * x)
    for k in ("impulse_factor", "crest_factor", "shape_factor", "clearance_factor", "margin_factor"):
        assert close(s1[k], s0[k], rel=1e-9, abs_=1e-9), k
    assert close(s1["energy"], a * a * s0["energy"], abs_=1e-9)
    assert close(s1["peak"], a * s0["peak"])
    assert close(s1["peak_to_peak"], a * s0["peak_to_peak"], abs_=1e-9)
    for t in (1, 2, 3, 4, 5):
        assert close(F.autocorr(a * x, t), F.autocorr(x, t), abs_=1e-9)


@given(window, st.floats(-100, 100))
def test_shift_behaviour(x, b):
    s0, s1 = F.basic_stats(x), F.basic_stats(x + b)
    assert close(s1["kurtosis"], s0["kurtosis"], rel=1e-6, abs_=1e-6)
    assert close(s1["skewness"], s0["skewness"], rel=1e-6, abs_=1e-6)
    for t in (1, 2, 3):
        assert close(F.autocorr(x + b, t), F.autocorr(x, t), rel=1e-6, abs_=1e-6)


# ------------------------------------------------------ autocorr and pct


def test_autocorr_example():
    assert close(F.autocorr([1, 2, 3, 4], 1), 0.25)


def test_autocorr_constant():
    assert F.autocorr([5.0] * 10, 1) == 0


def test_autocorr_alternating():
    x = [2.0, 7.0] * 5
    assert close(F.autocorr(x, 2), oracles.autocorr(x, 2))
    assert F.autocorr(x, 2) > 0


@pytest.mark.parametrize("t", [0, 4])
def test_autocorr_lag_bounds(t):
    with pytest.raises(FeatureError):
        F.autocorr([1, 2, 3, 4], t)


def test_pct_examples():
    assert F.pct_change([3.0] * 10, 1) == 0
    assert close(F.pct_change([1, 2, 4, 8], 1), 100.0)
    # the step from 0 is skipped: only 5 -> 10 counts
    assert close(F.pct_change([0, 5, 10], 1), 100.0)
    assert F.pct_change([0.0, 0.0, 0.0], 1) == 0


# --------------------------------------------------------------- entropy


def test_shannon_single_bin():
    assert F.shannon_entropy([0.1] * 10, EDGES) == 0


def test_shannon_uniform_over_five_bins():
    x = [0.5, 0.5, 1.5, 1.5, 2.5, 2.5, 3.5, 3.5, 4.5, 4.5]
    assert close(F.shannon_entropy(x, EDGES), math.log2(5))
    assert round(F.shannon_entropy(x, EDGES), 6) == 2.321928


def test_shannon_needs_edges():
    with pytest.raises(FeatureError):
        F.shannon_entropy([1.0] * 10, None)


def test_rate_entropy_deterministic_sequences():
    assert F.rate_entropy([0.5] * 10, EDGES) == 0
    cycle = [0.5, 2.5, 4.5] * 4
    assert F.rate_entropy(cycle, EDGES) == 0


def test_rate_entropy_matches_chain_rule(rng):
    for _ in range(50):
        x = rng.uniform(0, 5, 10)
        assert close(F.rate_entropy(x, EDGES), oracles.rate_entropy(x, EDGES), rel=1e-12, abs_=1e-12)


def test_rate_entropy_iid_approaches_log2_5(rng):
    x = rng.integers(0, 5, 200_000) + 0.5
    assert abs(F.rate_entropy(x, EDGES) - math.log2(5)) < 0.01


def test_apen_sampen_constant():
    assert F.apen([2.0] * 10) == 0
    assert F.sampen([2.0] * 10) == 0


def test_sampen_regular_sequence():
    assert F.sampen([1, 2] * 5) == 0


def test_apen_sampen_match_template_oracle(rng):
    for _ in range(20):
        x = rng.normal(size=10)
        assert close(F.apen(x), oracles.apen(list(x)), rel=1e-12, abs_=1e-12)
        assert close(F.sampen(x), oracles.sampen(list(x)), rel=1e-12, abs_=1e-12)


def test_sampen_fallback_without_matches():
    # strictly increasing steps far apart: no template pairs within r
    x = [0, 1, 3, 7, 15, 31, 63, 127, 255, 511]
    b = 0
    assert F.sampen(x, r_factor=1e-6) == math.log(b + 1)


def test_entropy_window_too_short():
    with pytest.raises(FeatureError):
        F.apen([1.0, 2.0, 3.0])
    with pytest.raises(FeatureError):
        F.rate_entropy([1.0, 2.0], EDGES)


# --------------------------------------------------------- full featurize


def test_feature_count_identity():
    fcfg = FeatureConfig()
    assert fcfg.n_features == 14 + 5 + 3 + 4 == 26
    names = fcfg.feature_names()
    assert names[:14] == list(F.BASIC_NAMES)
    assert names[-4:] == ["shannon_entropy", "rate_entropy", "apen", "sampen"]


def test_window_features_match_oracles(rng):
    w = rng.lognormal(size=(40, 10))
    edges = np.quantile(rng.lognormal(size=500), [0.05, 0.1, 0.95, 0.99])
    vals, _ = F.window_features(w, edges, FeatureConfig())
    for row, x in zip(vals, w):
        expect = oracles.all_features(list(x), list(edges))
        for got, exp in zip(row, expect):
            assert close(got, exp)


def _banded(values, bands):
    return BandedSeries(tuple(bands), np.asarray(values, dtype=float))


def test_featurize_shape_and_order(rng):
    bands = [(2000.0, 4000.0), (0.0, 2000.0)]
    values = rng.lognormal(size=(2, 100))
    labels = np.zeros(100, dtype=int)
    labels[20:60] = 1
    banded = _banded(values, bands)
    edges = F.fit_entropy_edges(banded, labels, FeatureConfig().entropy_quantiles)
    frame = F.featurize(banded, labels, WindowConfig(10, 7), FeatureConfig(), edges)
    assert frame.X.shape == (len(F.frame_windows(100, WindowConfig(10, 7))), 52)
    assert frame.columns[0] == "0_2k__peak"
    assert frame.columns[26] == "2k_4k__peak"
    assert frame.columns[-1] == "2k_4k__sampen"
    # a row equals the per-band blocks in ascending band order
    w0 = values[1, :10]
    w1 = values[0, :10]
    expect = (oracles.all_features(list(w0), list(edges.for_band((0.0, 2000.0))))
              + oracles.all_features(list(w1), list(edges.for_band((2000.0, 4000.0)))))
    assert all(close(a, b) for a, b in zip(frame.X[0], expect))
    assert frame.y.tolist() == [F.label_window(labels[s:s + 10]) for s in frame.window_start_s]


def test_featurize_one_band(rng):
    banded = _banded(rng.lognormal(size=(1, 40)), [(0.0, 1000.0)])
    labels = np.ones(40, dtype=int)
    edges = F.fit_entropy_edges(banded, labels, (0.05, 0.1, 0.95, 0.99))
    frame = F.featurize(banded, labels, WindowConfig(10, 5), FeatureConfig(), edges)
    assert frame.X.shape[1] == 26


def test_featurize_without_labels(rng):
    banded = _banded(rng.lognormal(size=(2, 30)), [(0.0, 1000.0), (1000.0, 2000.0)])
    edges = EntropyEdges((0.5,), {(0.0, 1000.0): (1.0,), (1000.0, 2000.0): (1.0,)})
    frame = F.featurize(banded, None, WindowConfig(10, 5), FeatureConfig(entropy_quantiles=(0.5,)), edges)
    assert frame.y.sum() == 0 and frame.n_rows == 5


def test_featurize_missing_edges(rng):
    banded = _banded(rng.lognormal(size=(2, 30)), [(0.0, 1000.0), (1000.0, 2000.0)])
    edges = EntropyEdges((0.5,), {(0.0, 1000.0): (1.0,)})
    with pytest.raises(FeatureError):
        F.featurize(banded, None, WindowConfig(10, 5), FeatureConfig(), edges)


def test_entropy_edges_use_leak_seconds_only():
    values = np.arange(20, dtype=float)[None, :]
    labels = np.array([0] * 10 + [1] * 10)
    banded = _banded(values, [(0.0, 1000.0)])
    edges = F.fit_entropy_edges(banded, labels, (0.05, 0.1, 0.95, 0.99))
    leak = list(range(10, 20))
    expect = [oracles.quantile7(leak, q) for q in (0.05, 0.1, 0.95, 0.99)]
    assert list(edges.for_band((0.0, 1000.0))) == pytest.approx(expect, rel=1e-15)
    with pytest.raises(FeatureError):
        F.fit_entropy_edges(banded, np.zeros(20), (0.5,))


def test_entropy_edges_roundtrip():
    e = EntropyEdges((0.05, 0.95), {(0.0, 1000.0): (0.1 + 0.2, 1 / 3)})
    back = EntropyEdges.from_dict(e.to_dict())
    assert back.quantiles == e.quantiles
    assert back.edges == e.edges


def test_leak_windows_have_higher_shannon_entropy(small):
    from leakdetect.banding import BandingConfig, aggregate

    banded = aggregate(small.spectrogram, BandingConfig(1000, "mean")).restrict([(1000.0, 2000.0)])
    labels = small.labels
    edges = F.fit_entropy_edges(banded, labels, FeatureConfig().entropy_quantiles)
    frame = F.featurize(banded, labels, WindowConfig(10, 7), FeatureConfig(), edges)
    col = frame.columns.index("1k_2k__shannon_entropy")
    ent = frame.X[:, col]
    assert ent[frame.y == 1].mean() > ent[frame.y == 0].mean()


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 10), elements=st.floats(0, 1e4, allow_nan=False)))
def test_features_always_finite(w):
    vals, _ = F.window_features(w, EDGES, FeatureConfig())
    assert np.all(np.isfinite(vals))


def test_feature_config_validation():
    with pytest.raises(FeatureError):
        FeatureConfig(entropy_quantiles=(0.5, 0.2))
    with pytest.raises(FeatureError):
        FeatureConfig(autocorr_lags=(0,))
    with pytest.raises(FeatureError):
        FeatureConfig(autocorr_lags=(10,)).check_window(10)
