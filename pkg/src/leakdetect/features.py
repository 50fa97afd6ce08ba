"""Time-based features over overlapping windows of two sub-band series.

Each band contributes 26 columns per window, in this order:

    peak, impulse_factor, srm, clearance_factor, rms, margin_factor, energy,
    crest_factor, peak_to_peak, kurtosis, skewness, shape_factor,
    index_max, index_min, acf_1..acf_5, pct_1..pct_3, shannon_entropy,
    rate_entropy, apen, sampen

Columns are prefixed with the band name (``0_2k__peak``) and bands appear in
ascending frequency order.

Ratio features, autocorrelations and moment statistics return 0 instead of
dividing by zero; the number of guarded values per column is kept on the
resulting :class:`FeatureFrame`.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .banding import Band, BandedSeries, _khz

log = logging.getLogger(__name__)

BASIC_NAMES = (
    "peak", "impulse_factor", "srm", "clearance_factor", "rms", "margin_factor",
    "energy", "crest_factor", "peak_to_peak", "kurtosis", "skewness",
    "shape_factor", "index_max", "index_min",
)
R_FLOOR = 1e-12
# a step whose base value is this small relative to the window peak is skipped
PCT_EPS = 1e-12
_ZERO_VAR_RTOL = 1e-12
_SAMPEN_LOG_LIMIT = 5


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class WindowConfig:
    window_s: int = 10
    overlap_s: int = 7

    def __post_init__(self):
        if not 0 < self.overlap_s < self.window_s:
            raise FeatureError(
                f"overlap must satisfy 0 < overlap < window, got {self.overlap_s}/{self.window_s}"
            )

    @property
    def stride_s(self) -> int:
        return self.window_s - self.overlap_s


@dataclass(frozen=True)
class FeatureConfig:
    autocorr_lags: tuple[int, ...] = (1, 2, 3, 4, 5)
    pct_lags: tuple[int, ...] = (1, 2, 3)
    entropy_quantiles: tuple[float, ...] = (0.05, 0.10, 0.95, 0.99)
    apen_m: int = 2
    apen_r_factor: float = 0.2
    entropy_log_base: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "autocorr_lags", tuple(int(t) for t in self.autocorr_lags))
        object.__setattr__(self, "pct_lags", tuple(int(t) for t in self.pct_lags))
        object.__setattr__(self, "entropy_quantiles", tuple(float(q) for q in self.entropy_quantiles))
        q = self.entropy_quantiles
        if not q or any(not 0 < v < 1 for v in q) or any(b <= a for a, b in zip(q, q[1:])):
            raise FeatureError("entropy quantiles must be strictly increasing in (0, 1)")
        if any(t < 1 for t in self.autocorr_lags + self.pct_lags):
            raise FeatureError("lags must be >= 1")
        if self.apen_m < 1 or not self.apen_r_factor > 0:
            raise FeatureError("apen_m must be >= 1 and apen_r_factor > 0")

    def check_window(self, window_s: int) -> None:
        if max(self.autocorr_lags + self.pct_lags) >= window_s:
            raise FeatureError("lags must be shorter than the window")
        if window_s < self.apen_m + 2:
            raise FeatureError("window too short for ApEn/SampEn")

    def feature_names(self) -> list[str]:
        return [
            *BASIC_NAMES,
            *(f"acf_{t}" for t in self.autocorr_lags),
            *(f"pct_{t}" for t in self.pct_lags),
            "shannon_entropy", "rate_entropy", "apen", "sampen",
        ]

    @property
    def n_features(self) -> int:
        return len(self.feature_names())


# ---------------------------------------------------------------- framing


def frame_windows(series_len: int, wcfg: WindowConfig) -> list[tuple[int, int]]:
    """Half-open windows ``[start, start + window_s)`` on the stride grid."""
    if series_len < wcfg.window_s:
        raise FeatureError(f"series of {series_len} s is shorter than one {wcfg.window_s} s window")
    last = series_len - wcfg.window_s
    return [(s, s + wcfg.window_s) for s in range(0, last + 1, wcfg.stride_s)]


def label_window(window_labels: Sequence[int]) -> int:
    """A window is a leak only if every second in it is a leak second."""
    return int(bool(np.all(np.asarray(window_labels) == 1)))


# ------------------------------------------------------- batched kernels
# All _batch_* helpers take a (windows x N) matrix and return one value per
# window (plus a guard mask where a denominator can vanish).


def _safe_div(num: np.ndarray, den: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    zero = den == 0
    out = np.divide(num, np.where(zero, 1.0, den))
    out[zero] = 0.0
    return out, zero


def _zero_variance(w: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    scale = np.max(np.abs(w), axis=1)
    return sigma <= _ZERO_VAR_RTOL * scale


def _batch_basic(w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = w.shape[1]
    a = np.abs(w)
    peak = a.max(axis=1)
    mean_abs = a.mean(axis=1)
    srm = np.sqrt(a).mean(axis=1) ** 2
    energy = np.sum(w * w, axis=1)
    rms = np.sqrt(energy / n)
    mu = w.mean(axis=1)
    dev = w - mu[:, None]
    sigma = np.sqrt(np.mean(dev * dev, axis=1))
    flat = _zero_variance(w, sigma)
    z = dev / np.where(flat, 1.0, sigma)[:, None]
    kurt = np.where(flat, 0.0, np.mean(z**4, axis=1))
    skew = np.where(flat, 0.0, np.mean(z**3, axis=1))

    impulse, g_imp = _safe_div(peak, mean_abs)
    clearance, g_clr = _safe_div(peak, srm)
    crest, g_crest = _safe_div(peak, rms)
    shape, g_shape = _safe_div(rms, mean_abs)
    cols = [
        peak, impulse, srm, clearance, rms, clearance.copy(), energy, crest,
        w.max(axis=1) - w.min(axis=1), kurt, skew, shape, peak / n, a.min(axis=1) / n,
    ]
    none = np.zeros_like(flat)
    guards = [none, g_imp, none, g_clr, none, g_clr, none, g_crest, none, flat, flat, g_shape, none, none]
    return np.column_stack(cols), np.column_stack(guards)


def _batch_autocorr(w: np.ndarray, t: int) -> tuple[np.ndarray, np.ndarray]:
    dev = w - w.mean(axis=1, keepdims=True)
    num = np.sum(dev[:, :-t] * dev[:, t:], axis=1)
    den = np.sum(dev * dev, axis=1)
    flat = _zero_variance(w, np.sqrt(den / w.shape[1]))
    out = np.where(flat, 0.0, num / np.where(flat, 1.0, den))
    return out, flat


def _batch_pct(w: np.ndarray, t: int) -> tuple[np.ndarray, np.ndarray]:
    base = w[:, :-t]
    step = w[:, t:] - base
    eps = PCT_EPS * np.max(np.abs(w), axis=1, keepdims=True)
    ok = np.abs(base) > eps
    vals = np.where(ok, step * 100.0 / np.where(ok, np.abs(base), 1.0), 0.0)
    count = ok.sum(axis=1)
    none = count == 0
    out = vals.sum(axis=1) / np.where(none, 1, count)
    return np.where(none, 0.0, out), ~ok.all(axis=1)


def _symbols(w: np.ndarray, edges: np.ndarray) -> np.ndarray:
    return np.searchsorted(np.asarray(edges, dtype=np.float64), w, side="right")


def _plogp(p: np.ndarray, base: float) -> np.ndarray:
    out = np.zeros_like(p, dtype=np.float64)
    nz = p > 0
    out[nz] = p[nz] * np.log(p[nz]) / math.log(base)
    return out


def _batch_shannon(w: np.ndarray, edges: np.ndarray, base: float) -> np.ndarray:
    nsym = len(edges) + 1
    s = _symbols(w, edges)
    rows = np.repeat(np.arange(w.shape[0]), w.shape[1])
    counts = np.zeros((w.shape[0], nsym))
    np.add.at(counts, (rows, s.ravel()), 1.0)
    p = counts / w.shape[1]
    return -_plogp(p, base).sum(axis=1)


def _batch_rate_entropy(w: np.ndarray, edges: np.ndarray, base: float) -> np.ndarray:
    # H(X_n | X_{n-1}, X_{n-2}) = -sum p(a,b,c) log p(c | a,b), counted over
    # the N-2 positions that have two predecessors.
    nsym = len(edges) + 1
    s = _symbols(w, edges)
    n_win, n = s.shape
    ctx = s[:, :-2] * nsym + s[:, 1:-1]
    tri = ctx * nsym + s[:, 2:]
    rows = np.repeat(np.arange(n_win), n - 2)
    tri_counts = np.zeros((n_win, nsym**3))
    ctx_counts = np.zeros((n_win, nsym**2))
    np.add.at(tri_counts, (rows, tri.ravel()), 1.0)
    np.add.at(ctx_counts, (rows, ctx.ravel()), 1.0)
    out = np.zeros(n_win)
    for i in range(n_win):
        nz = np.flatnonzero(tri_counts[i])
        c_tri = tri_counts[i, nz]
        c_ctx = ctx_counts[i, nz // nsym]
        out[i] = -np.sum(c_tri * np.log(c_tri / c_ctx)) / ((n - 2) * math.log(base))
    return out


def _tolerance(w: np.ndarray, r_factor: float) -> np.ndarray:
    sigma = w.std(axis=1)
    flat = _zero_variance(w, sigma) | (sigma == 0)
    return np.where(flat, R_FLOOR, r_factor * sigma)


def _match_matrix(w: np.ndarray, m: int, count: int, r: np.ndarray) -> np.ndarray:
    """(windows x count x count) booleans: Chebyshev distance of m-templates <= r."""
    tmpl = sliding_window_view(w, m, axis=1)[:, :count, :]
    dist = np.max(np.abs(tmpl[:, :, None, :] - tmpl[:, None, :, :]), axis=3)
    return dist <= r[:, None, None]


def _batch_apen(w: np.ndarray, m: int, r_factor: float) -> np.ndarray:
    n = w.shape[1]
    r = _tolerance(w, r_factor)

    def phi(k: int) -> np.ndarray:
        cnt = n - k + 1
        c = _match_matrix(w, k, cnt, r).sum(axis=2) / cnt
        return np.log(c).mean(axis=1)

    return phi(m) - phi(m + 1)


_sampen_fallbacks = 0


def _batch_sampen(w: np.ndarray, m: int, r_factor: float) -> np.ndarray:
    global _sampen_fallbacks
    n = w.shape[1]
    r = _tolerance(w, r_factor)
    cnt = n - m
    iu = np.triu_indices(cnt, k=1)
    b = _match_matrix(w, m, cnt, r)[:, iu[0], iu[1]].sum(axis=1).astype(np.float64)
    a = _match_matrix(w, m + 1, cnt, r)[:, iu[0], iu[1]].sum(axis=1).astype(np.float64)
    bad = (a == 0) | (b == 0)
    out = np.empty_like(a)
    out[~bad] = -np.log(a[~bad] / b[~bad])
    out[bad] = np.log(b[bad] + 1.0)
    if bad.any():
        _sampen_fallbacks += int(bad.sum())
        if _sampen_fallbacks <= _SAMPEN_LOG_LIMIT:
            log.info("SampEn: %d window(s) without template matches; using -ln(1/(B+1))", int(bad.sum()))
    return out


# ------------------------------------------------- single-window wrappers


def _as_window(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)[None, :]


def basic_stats(x) -> dict[str, float]:
    w = _as_window(x)
    if w.shape[1] < 2:
        raise FeatureError("basic statistics need at least two samples")
    vals, _ = _batch_basic(w)
    return dict(zip(BASIC_NAMES, vals[0].tolist()))


def autocorr(x, t: int) -> float:
    w = _as_window(x)
    if not 1 <= t < w.shape[1]:
        raise FeatureError("lag must satisfy 1 <= t < N")
    return float(_batch_autocorr(w, t)[0][0])


def pct_change(x, t: int) -> float:
    w = _as_window(x)
    if not 1 <= t < w.shape[1]:
        raise FeatureError("lag must satisfy 1 <= t < N")
    return float(_batch_pct(w, t)[0][0])


def shannon_entropy(x, edges, base: float = 2.0) -> float:
    if edges is None:
        raise FeatureError("entropy bin edges are required")
    return float(_batch_shannon(_as_window(x), np.asarray(edges), base)[0])


def rate_entropy(x, edges, base: float = 2.0) -> float:
    if edges is None:
        raise FeatureError("entropy bin edges are required")
    w = _as_window(x)
    if w.shape[1] < 3:
        raise FeatureError("rate entropy needs at least three samples")
    return float(_batch_rate_entropy(w, np.asarray(edges), base)[0])


def apen(x, m: int = 2, r_factor: float = 0.2) -> float:
    """Approximate entropy with self-matches counted."""
    w = _as_window(x)
    if w.shape[1] < m + 2:
        raise FeatureError(f"ApEn needs N >= m + 2 = {m + 2}")
    return float(_batch_apen(w, m, r_factor)[0])


def sampen(x, m: int = 2, r_factor: float = 0.2) -> float:
    """Sample entropy -ln(A/B) without self-matches."""
    w = _as_window(x)
    if w.shape[1] < m + 2:
        raise FeatureError(f"SampEn needs N >= m + 2 = {m + 2}")
    return float(_batch_sampen(w, m, r_factor)[0])


def window_features(w: np.ndarray, edges, fcfg: FeatureConfig) -> tuple[np.ndarray, np.ndarray]:
    """All features for a (windows x N) matrix of one band; returns (values, guards)."""
    w = np.asarray(w, dtype=np.float64)
    fcfg.check_window(w.shape[1])
    edges = np.asarray(edges, dtype=np.float64)
    basic, g_basic = _batch_basic(w)
    cols = [basic]
    guards = [g_basic]
    for t in fcfg.autocorr_lags:
        v, g = _batch_autocorr(w, t)
        cols.append(v[:, None])
        guards.append(g[:, None])
    for t in fcfg.pct_lags:
        v, g = _batch_pct(w, t)
        cols.append(v[:, None])
        guards.append(g[:, None])
    base = fcfg.entropy_log_base
    tail = [
        _batch_shannon(w, edges, base),
        _batch_rate_entropy(w, edges, base),
        _batch_apen(w, fcfg.apen_m, fcfg.apen_r_factor),
        _batch_sampen(w, fcfg.apen_m, fcfg.apen_r_factor),
    ]
    cols.append(np.column_stack(tail))
    guards.append(np.zeros((w.shape[0], 4), dtype=bool))
    return np.hstack(cols), np.hstack(guards)


# --------------------------------------------------------- entropy edges


def band_label(band: Band) -> str:
    return f"{_khz(band[0])}_{_khz(band[1])}"


@dataclass(frozen=True)
class EntropyEdges:
    """Per-band quantile edges used to bin values for the entropy features."""

    quantiles: tuple[float, ...]
    edges: Mapping[Band, tuple[float, ...]]

    def for_band(self, band: Band) -> np.ndarray:
        try:
            return np.asarray(self.edges[tuple(band)], dtype=np.float64)
        except KeyError:
            raise FeatureError(f"no entropy edges fitted for band {band}") from None

    def to_dict(self) -> dict:
        return {
            "quantiles": [q.hex() for q in self.quantiles],
            "bands": [
                {"band": [float(b[0]).hex(), float(b[1]).hex()], "edges": [float(e).hex() for e in ed]}
                for b, ed in sorted(self.edges.items())
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "EntropyEdges":
        edges = {
            (float.fromhex(item["band"][0]), float.fromhex(item["band"][1])): tuple(
                float.fromhex(e) for e in item["edges"]
            )
            for item in d["bands"]
        }
        return cls(tuple(float.fromhex(q) for q in d["quantiles"]), edges)


def fit_entropy_edges(banded: BandedSeries, labels, quantiles: Sequence[float]) -> EntropyEdges:
    """Quantiles of each band's values over the leak-labelled seconds."""
    labels = np.asarray(labels)
    leak = labels == 1
    if not leak.any():
        raise FeatureError("cannot fit entropy edges without leak-labelled seconds")
    edges = {}
    for band, series in zip(banded.bands, banded.values):
        q = np.quantile(series[leak], list(quantiles), method="linear")
        edges[tuple(band)] = tuple(float(v) for v in q)
    return EntropyEdges(tuple(float(q) for q in quantiles), edges)


# ------------------------------------------------------------- featurize


@dataclass(frozen=True, eq=False)
class FeatureFrame:
    X: np.ndarray
    y: np.ndarray
    window_start_s: np.ndarray
    columns: tuple[str, ...]
    guard_counts: Mapping[str, int] = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([*self.columns, "label", "window_start_s"])
        for row, lab, start in zip(self.X.tolist(), self.y.tolist(), self.window_start_s.tolist()):
            w.writerow([*map(repr, row), lab, start])
        return buf.getvalue()


def column_names(bands: Sequence[Band], fcfg: FeatureConfig) -> list[str]:
    names = fcfg.feature_names()
    return [f"{band_label(b)}__{n}" for b in sorted(tuple(b) for b in bands) for n in names]


def featurize(banded: BandedSeries, labels, wcfg: WindowConfig, fcfg: FeatureConfig,
              edges: EntropyEdges) -> FeatureFrame:
    """Window every band of ``banded`` and compute the per-band feature block.

    ``labels`` may be None for unlabelled data (all window labels are then 0).
    """
    windows = frame_windows(banded.values.shape[1], wcfg)
    starts = np.array([s for s, _ in windows], dtype=np.int64)
    bands = sorted(tuple(b) for b in banded.bands)
    blocks, guard_blocks = [], []
    for band in bands:
        series = banded.row(band)
        w = sliding_window_view(series, wcfg.window_s)[starts]
        vals, guards = window_features(w, edges.for_band(band), fcfg)
        blocks.append(vals)
        guard_blocks.append(guards)
    X = np.hstack(blocks)
    G = np.hstack(guard_blocks)
    if labels is None:
        y = np.zeros(len(starts), dtype=np.int8)
    else:
        labels = np.asarray(labels)
        if labels.shape[0] != banded.values.shape[1]:
            raise FeatureError("label vector length does not match series length")
        lw = sliding_window_view(labels, wcfg.window_s)[starts]
        y = np.all(lw == 1, axis=1).astype(np.int8)
    cols = tuple(column_names(bands, fcfg))
    if not np.all(np.isfinite(X)):
        raise FeatureError("non-finite feature values")
    counts = {c: int(n) for c, n in zip(cols, G.sum(axis=0)) if n}
    return FeatureFrame(X, y, starts, cols, counts)
