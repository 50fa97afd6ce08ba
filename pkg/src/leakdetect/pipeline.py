"""Model selection and evaluation protocol.

1. ``grid_search`` trains one SVM per parameter combination on the training
   partition (band pair = two best-correlated bands on that partition) and
   picks the sliding window and SVM hyper-parameters by validation F1.
2. ``qualify_band_combos`` re-scores every (granularity, metric, band pair)
   candidate on validation with those hyper-parameters.
3. ``evaluate_band_combos`` retrains the qualified candidates on
   train + validation and measures them on the test partition.
4. ``train_final`` fits the winning configuration on the whole dataset and
   ``transfer_evaluate`` applies it, frozen, to other datasets.
"""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import svm
from .banding import (
    GRANULARITIES, METRICS, BandedSeries, BandingConfig, BandingError, BandPair,
    aggregate, candidate_pairs, parse_band_name, rank_bands, select_band_pair,
)
from .dataset import Dataset, Spectrogram
from .features import (
    EntropyEdges, FeatureConfig, FeatureError, FeatureFrame, WindowConfig,
    featurize, fit_entropy_edges, frame_windows,
)
from .metrics import Metrics, compute_metrics

log = logging.getLogger(__name__)

Range = tuple[int, int]


class PipelineError(ValueError):
    pass


# ------------------------------------------------------------------ split


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.6
    validation: float = 0.2
    test: float = 0.2

    def __post_init__(self):
        fr = (self.train, self.validation, self.test)
        if any(not f > 0 for f in fr):
            raise PipelineError("split fractions must be positive")
        if not math.isclose(sum(fr), 1.0, abs_tol=1e-9):
            raise PipelineError(f"split fractions must sum to 1, got {sum(fr):g}")


def split_chronological(duration_s: int, spec: SplitSpec, window_s: int = 1) -> tuple[Range, Range, Range]:
    """Contiguous train/validation/test second ranges; the remainder goes to test."""
    n_train = math.floor(spec.train * duration_s)
    n_val = math.floor(spec.validation * duration_s)
    ranges = ((0, n_train), (n_train, n_train + n_val), (n_train + n_val, duration_s))
    for name, (a, b) in zip(("train", "validation", "test"), ranges):
        if b - a < window_s:
            raise PipelineError(f"{name} partition [{a},{b}) is shorter than one {window_s} s window")
    return ranges


# ------------------------------------------------------------ parameters


@dataclass(frozen=True)
class ParamGrid:
    granularity: tuple[int, ...] = GRANULARITIES
    sliding_window: tuple[int, ...] = (3, 5, 7)
    kernel: tuple[str, ...] = ("linear", "rbf")
    C: tuple[float, ...] = (1, 10, 100, 1000)
    gamma: tuple[float, ...] = (1, 0.1, 0.001, 0.0001)
    metric: tuple[str, ...] = METRICS

    def __post_init__(self):
        for name in ("granularity", "sliding_window", "kernel", "C", "gamma", "metric"):
            vals = tuple(getattr(self, name))
            if not vals:
                raise PipelineError(f"grid axis {name!r} is empty")
            object.__setattr__(self, name, vals)
        for g in self.granularity:
            BandingConfig(g, self.metric[0])
        for m in self.metric:
            BandingConfig(self.granularity[0], m)
        for k in self.kernel:
            if k not in ("linear", "rbf"):
                raise PipelineError(f"unknown kernel {k!r}")

    def svm_params(self) -> list[tuple[str, float, float | None]]:
        out = []
        for kernel in self.kernel:
            gammas = self.gamma if kernel == "rbf" else (None,)
            for C, gamma in itertools.product(self.C, gammas):
                out.append((kernel, float(C), None if gamma is None else float(gamma)))
        return out

    @property
    def effective_size(self) -> int:
        return len(self.granularity) * len(self.metric) * len(self.sliding_window) * len(self.svm_params())

    @property
    def nominal_size(self) -> int:
        """Size counting gamma for every kernel (864 for the default grid)."""
        return (len(self.granularity) * len(self.sliding_window) * len(self.kernel)
                * len(self.C) * len(self.gamma) * len(self.metric))


@dataclass(frozen=True)
class HyperParams:
    overlap_s: int
    kernel: str
    C: float
    gamma: float | None = None

    @property
    def kernel_spec(self) -> svm.KernelSpec:
        return svm.KernelSpec(self.kernel, self.gamma)

    def to_dict(self) -> dict:
        return {"sliding_window": self.overlap_s, "kernel": self.kernel, "C": self.C, "gamma": self.gamma}

    @classmethod
    def from_dict(cls, d: Mapping) -> "HyperParams":
        kernel = d["kernel"]
        svm.KernelSpec(kernel, d.get("gamma") if kernel == "rbf" else None)
        gamma = d.get("gamma") if kernel == "rbf" else None
        return cls(int(d["sliding_window"]), kernel, float(d["C"]), None if gamma is None else float(gamma))


@dataclass(frozen=True)
class BandCombo:
    granularity_hz: int
    metric: str
    pair: BandPair

    @property
    def name(self) -> str:
        return f"{self.metric}_{self.granularity_hz}_{self.pair.name}"

    def to_dict(self) -> dict:
        return {"granularity_hz": self.granularity_hz, "metric": self.metric, "band_pair": self.pair.name}

    @classmethod
    def from_dict(cls, d: Mapping) -> "BandCombo":
        BandingConfig(int(d["granularity_hz"]), d["metric"])
        return cls(int(d["granularity_hz"]), d["metric"], parse_band_name(d["band_pair"]))


@dataclass(frozen=True)
class PipelineOptions:
    """Settings shared by every stage that are not part of the search grid."""

    window_s: int = 10
    features: FeatureConfig = field(default_factory=FeatureConfig)
    svm_tol: float = 1e-3
    svm_max_passes: int = 1000
    top_k: int = 5
    qualify_f1: float = 0.8
    workers: int = 1

    def window(self, overlap_s: int) -> WindowConfig:
        return WindowConfig(self.window_s, overlap_s)


# --------------------------------------------------------------- results


@dataclass(frozen=True)
class ComboResult:
    stage: str
    granularity_hz: int
    metric: str
    overlap_s: int
    kernel: str
    C: float
    gamma: float | None
    band_pair: str = ""
    validation: Metrics | None = None
    test: Metrics | None = None
    skip_reason: str = ""
    converged: bool | None = None
    n_train_windows: int = 0

    @property
    def key(self) -> tuple:
        return (self.stage, self.granularity_hz, self.metric, self.overlap_s, self.kernel,
                self.C, -1.0 if self.gamma is None else self.gamma, self.band_pair)

    @property
    def hyper(self) -> HyperParams:
        return HyperParams(self.overlap_s, self.kernel, self.C, self.gamma)

    @property
    def combo(self) -> BandCombo:
        return BandCombo(self.granularity_hz, self.metric, parse_band_name(self.band_pair))


def _score(v: float | None) -> float:
    return -math.inf if v is None else v


# Selection compares ratios exactly: two mathematically equal F1 values must
# tie (and fall through to the next criterion) even when their floating-point
# evaluations differ in the last bit.
_WORST = Fraction(-1)


def _exact(num: int, den: int) -> Fraction:
    return _WORST if den == 0 else Fraction(num, den)


def _exact_f1(m: Metrics | None) -> Fraction:
    if m is None or m.f1 is None:
        return _WORST
    return Fraction(2 * m.tp, 2 * m.tp + m.fp + m.fn)


def _exact_precision(m: Metrics | None) -> Fraction:
    return _WORST if m is None else _exact(m.tp, m.tp + m.fp)


def _exact_specificity(m: Metrics | None) -> Fraction:
    return _WORST if m is None else _exact(m.tn, m.tn + m.fp)


def selection_key(r: ComboResult) -> tuple:
    """Sort key (ascending = better) for validation-based selection."""
    m = r.validation
    return (-_exact_f1(m), -_exact_precision(m), r.C, 0 if r.kernel == "linear" else 1, r.key)


def holdout_selection_key(r: ComboResult, val: Metrics | None) -> tuple:
    """Sort key for the test-partition stage: F1, then specificity, then validation F1."""
    return (-_exact_f1(r.test), -_exact_specificity(r.test), -_exact_f1(val), r.key)


@dataclass
class GridResult:
    rows: list[ComboResult]
    best: ComboResult | None

    @property
    def hyper(self) -> HyperParams | None:
        return None if self.best is None else self.best.hyper


# ------------------------------------------------------------ core steps


def _pm1(y: np.ndarray) -> np.ndarray:
    return np.where(np.asarray(y) == 1, 1.0, -1.0)


def _slice_labels(labels: np.ndarray, r: Range) -> np.ndarray:
    return labels[r[0] : r[1]]


def build_frames(banded: BandedSeries, labels: np.ndarray, pair: BandPair, fit_range: Range,
                 eval_ranges: Sequence[Range], wcfg: WindowConfig, fcfg: FeatureConfig
                 ) -> tuple[EntropyEdges, FeatureFrame, list[FeatureFrame]]:
    """Fit entropy edges on ``fit_range`` only and featurize every range separately."""
    sub = banded.restrict(pair.bands)
    fit_b = sub.slice_seconds(*fit_range)
    fit_y = _slice_labels(labels, fit_range)
    edges = fit_entropy_edges(fit_b, fit_y, fcfg.entropy_quantiles)
    fit_frame = featurize(fit_b, fit_y, wcfg, fcfg, edges)
    others = [featurize(sub.slice_seconds(*r), _slice_labels(labels, r), wcfg, fcfg, edges)
              for r in eval_ranges]
    return edges, fit_frame, others


def pipeline_meta(combo: BandCombo, wcfg: WindowConfig, fcfg: FeatureConfig,
                  edges: EntropyEdges, hyper: HyperParams) -> dict:
    return {
        "granularity_hz": combo.granularity_hz,
        "metric": combo.metric,
        "band_pair": combo.pair.name,
        "window_s": wcfg.window_s,
        "overlap_s": wcfg.overlap_s,
        "features": {
            "autocorr_lags": list(fcfg.autocorr_lags),
            "pct_lags": list(fcfg.pct_lags),
            "entropy_quantiles": list(fcfg.entropy_quantiles),
            "apen_m": fcfg.apen_m,
            "apen_r_factor": fcfg.apen_r_factor,
            "entropy_log_base": fcfg.entropy_log_base,
        },
        "entropy_edges": edges.to_dict(),
        "hyper": hyper.to_dict(),
    }


def fit_model(frame: FeatureFrame, hyper: HyperParams, opts: PipelineOptions,
              meta: Mapping | None = None) -> svm.SvmModel:
    if np.unique(frame.y).size < 2:
        raise PipelineError("training windows contain a single class")
    return svm.train(frame.X, _pm1(frame.y), C=hyper.C, kernel=hyper.kernel_spec,
                     tol=opts.svm_tol, max_passes=opts.svm_max_passes,
                     feature_order=frame.columns, pipeline_meta=meta)


def _evaluate(model: svm.SvmModel, frame: FeatureFrame) -> Metrics:
    return compute_metrics(frame.y, svm.predict(model, frame.X))


class BandedCache:
    """Stage-1 aggregation of one spectrogram, memoised per (granularity, metric)."""

    def __init__(self, spectrogram: Spectrogram):
        self.spectrogram = spectrogram
        self._cache: dict[tuple[int, str], BandedSeries] = {}

    def get(self, granularity_hz: int, metric: str) -> BandedSeries:
        key = (int(granularity_hz), metric)
        if key not in self._cache:
            self._cache[key] = aggregate(self.spectrogram, BandingConfig(*key))
        return self._cache[key]


def _check_leaks(labels: np.ndarray, ranges: Iterable[Range], names: Iterable[str]) -> str:
    for name, r in zip(names, ranges):
        if not _slice_labels(labels, r).any():
            return f"no leak seconds in {name} partition"
    return ""


# ------------------------------------------------------------ grid search


def _grid_group(banded: BandedSeries, labels: np.ndarray, ranges: tuple[Range, Range, Range],
                overlap_s: int, svm_params: Sequence[tuple[str, float, float | None]],
                opts: PipelineOptions) -> list[ComboResult]:
    """All SVM settings for one (granularity, metric, sliding window) feature set."""
    cfg = banded.config
    train_r, val_r, _ = ranges

    def row(kernel, C, gamma, **kw) -> ComboResult:
        return ComboResult("grid", cfg.granularity_hz, cfg.metric, overlap_s, kernel, C, gamma, **kw)

    try:
        ranking = rank_bands(banded.slice_seconds(*train_r), _slice_labels(labels, train_r))
        pair = select_band_pair(ranking, "top2")
        wcfg = opts.window(overlap_s)
        _, train_f, (val_f,) = build_frames(banded, labels, pair, train_r, [val_r], wcfg, opts.features)
        if np.unique(train_f.y).size < 2:
            raise PipelineError("training windows contain a single class")
    except (BandingError, FeatureError, PipelineError) as exc:
        return [row(k, C, g, skip_reason=str(exc)) for k, C, g in svm_params]

    out = []
    for kernel, C, gamma in svm_params:
        hyper = HyperParams(overlap_s, kernel, C, gamma)
        model = fit_model(train_f, hyper, opts)
        out.append(row(kernel, C, gamma, band_pair=pair.name, validation=_evaluate(model, val_f),
                       converged=model.converged, n_train_windows=train_f.n_rows))
    return out


def _run_tasks(fn, tasks: list[tuple], workers: int) -> list:
    if workers <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *t) for t in tasks]
        return [f.result() for f in futures]


def grid_search(dataset: Dataset, grid: ParamGrid | None = None, split: SplitSpec | None = None,
                opts: PipelineOptions | None = None, cache: BandedCache | None = None) -> GridResult:
    grid = grid or ParamGrid()
    split = split or SplitSpec()
    opts = opts or PipelineOptions()
    cache = cache or BandedCache(dataset.spectrogram)
    labels = dataset.labels
    ranges = split_chronological(dataset.duration_s, split, opts.window_s)
    params = grid.svm_params()

    reason = _check_leaks(labels, ranges[:2], ("train", "validation"))
    rows: list[ComboResult] = []
    if reason:
        for g, m, o in itertools.product(grid.granularity, grid.metric, grid.sliding_window):
            rows += [ComboResult("grid", g, m, o, k, C, gm, skip_reason=reason) for k, C, gm in params]
    else:
        tasks = [
            (cache.get(g, m), labels, ranges, o, params, opts)
            for g, m, o in itertools.product(grid.granularity, grid.metric, grid.sliding_window)
        ]
        for group in _run_tasks(_grid_group, tasks, opts.workers):
            rows += group
    for r in rows:
        if r.skip_reason:
            log.info("skipped %s: %s", r.key, r.skip_reason)
    rows.sort(key=lambda r: r.key)
    scored = [r for r in rows if not r.skip_reason]
    best = min(scored, key=selection_key) if scored else None
    return GridResult(rows, best)


# ------------------------------------------------------ band combinations


def _score_candidate(banded: BandedSeries, labels: np.ndarray, ranges, combo: BandCombo,
                     hyper: HyperParams, opts: PipelineOptions, stage: str) -> ComboResult:
    train_r, val_r, test_r = ranges
    wcfg = opts.window(hyper.overlap_s)
    base = dict(band_pair=combo.pair.name)
    try:
        if stage == "qualify":
            _, fit_f, (ev,) = build_frames(banded, labels, combo.pair, train_r, [val_r], wcfg, opts.features)
        else:
            _, fit_f, (ev,) = build_frames(banded, labels, combo.pair, (train_r[0], val_r[1]), [test_r],
                                           wcfg, opts.features)
        model = fit_model(fit_f, hyper, opts)
    except (BandingError, FeatureError, PipelineError) as exc:
        return ComboResult(stage, combo.granularity_hz, combo.metric, hyper.overlap_s, hyper.kernel,
                           hyper.C, hyper.gamma, skip_reason=str(exc), **base)
    m = _evaluate(model, ev)
    kw = {"validation": m} if stage == "qualify" else {"test": m}
    return ComboResult(stage, combo.granularity_hz, combo.metric, hyper.overlap_s, hyper.kernel,
                       hyper.C, hyper.gamma, converged=model.converged,
                       n_train_windows=fit_f.n_rows, **base, **kw)


def candidate_combos(dataset: Dataset, grid: ParamGrid, split: SplitSpec, opts: PipelineOptions,
                     cache: BandedCache | None = None) -> list[BandCombo]:
    """Pairs from the top-k correlated bands (on train) for each granularity and metric."""
    cache = cache or BandedCache(dataset.spectrogram)
    labels = dataset.labels
    train_r = split_chronological(dataset.duration_s, split, opts.window_s)[0]
    out = []
    for g, m in itertools.product(grid.granularity, grid.metric):
        banded = cache.get(g, m)
        try:
            ranking = rank_bands(banded.slice_seconds(*train_r), _slice_labels(labels, train_r))
        except BandingError as exc:
            log.info("no candidates for %s/%s: %s", g, m, exc)
            continue
        out += [BandCombo(g, m, p) for p in candidate_pairs(ranking, opts.top_k)]
    return out


def qualify_band_combos(dataset: Dataset, hyper: HyperParams, combos: Sequence[BandCombo],
                        split: SplitSpec | None = None, opts: PipelineOptions | None = None,
                        cache: BandedCache | None = None) -> list[ComboResult]:
    split = split or SplitSpec()
    opts = opts or PipelineOptions()
    cache = cache or BandedCache(dataset.spectrogram)
    ranges = split_chronological(dataset.duration_s, split, opts.window_s)
    labels = dataset.labels
    tasks = [(cache.get(c.granularity_hz, c.metric), labels, ranges, c, hyper, opts, "qualify") for c in combos]
    return _run_tasks(_score_candidate, tasks, opts.workers)


def evaluate_band_combos(dataset: Dataset, hyper: HyperParams, combos: Sequence[BandCombo],
                         split: SplitSpec | None = None, opts: PipelineOptions | None = None,
                         cache: BandedCache | None = None) -> list[ComboResult]:
    """Train each combo on train + validation and score it on the test partition."""
    split = split or SplitSpec()
    opts = opts or PipelineOptions()
    cache = cache or BandedCache(dataset.spectrogram)
    ranges = split_chronological(dataset.duration_s, split, opts.window_s)
    labels = dataset.labels
    tasks = [(cache.get(c.granularity_hz, c.metric), labels, ranges, c, hyper, opts, "test") for c in combos]
    return _run_tasks(_score_candidate, tasks, opts.workers)


# ------------------------------------------------------ final + transfer


def train_final(dataset: Dataset, hyper: HyperParams, combo: BandCombo,
                opts: PipelineOptions | None = None, cache: BandedCache | None = None) -> svm.SvmModel:
    """Fit the chosen configuration on the whole dataset."""
    opts = opts or PipelineOptions()
    cache = cache or BandedCache(dataset.spectrogram)
    banded = cache.get(combo.granularity_hz, combo.metric)
    wcfg = opts.window(hyper.overlap_s)
    edges, frame, _ = build_frames(banded, dataset.labels, combo.pair, (0, dataset.duration_s), [],
                                   wcfg, opts.features)
    meta = pipeline_meta(combo, wcfg, opts.features, edges, hyper)
    return fit_model(frame, hyper, opts, meta)


def model_configuration(model: svm.SvmModel) -> tuple[BandCombo, WindowConfig, FeatureConfig, EntropyEdges]:
    meta = model.pipeline_meta
    try:
        combo = BandCombo(int(meta["granularity_hz"]), meta["metric"], parse_band_name(meta["band_pair"]))
        wcfg = WindowConfig(int(meta["window_s"]), int(meta["overlap_s"]))
        f = meta["features"]
        fcfg = FeatureConfig(tuple(f["autocorr_lags"]), tuple(f["pct_lags"]), tuple(f["entropy_quantiles"]),
                             int(f["apen_m"]), float(f["apen_r_factor"]), float(f["entropy_log_base"]))
        edges = EntropyEdges.from_dict(meta["entropy_edges"])
    except (KeyError, TypeError, ValueError) as exc:
        raise PipelineError(f"model has incomplete pipeline metadata: {exc}") from None
    return combo, wcfg, fcfg, edges


def featurize_for_model(model: svm.SvmModel, spectrogram: Spectrogram, labels=None) -> FeatureFrame:
    """Apply a trained model's frozen preprocessing to new data."""
    combo, wcfg, fcfg, edges = model_configuration(model)
    if spectrogram.duration_s < wcfg.window_s:
        raise PipelineError(f"dataset of {spectrogram.duration_s} s is shorter than one {wcfg.window_s} s window")
    banded = aggregate(spectrogram, BandingConfig(combo.granularity_hz, combo.metric))
    frame = featurize(banded.restrict(combo.pair.bands), labels, wcfg, fcfg, edges)
    if model.feature_order and tuple(frame.columns) != tuple(model.feature_order):
        raise PipelineError("feature columns do not match the model's feature order")
    return frame


def transfer_evaluate(model: svm.SvmModel, targets: Sequence[Dataset]) -> dict[str, Metrics]:
    out = {}
    for ds in targets:
        frame = featurize_for_model(model, ds.spectrogram, ds.labels)
        out[ds.name] = _evaluate(model, frame)
    return out


def artifact_digest(model: svm.SvmModel) -> str:
    """SHA-256 over the fitted statistics (entropy edges and standardizer)."""
    h = hashlib.sha256()
    h.update(json.dumps(model.pipeline_meta.get("entropy_edges"), sort_keys=True).encode())
    h.update(np.ascontiguousarray(model.standardizer.mean).tobytes())
    h.update(np.ascontiguousarray(model.standardizer.std).tobytes())
    return h.hexdigest()


# --------------------------------------------------------- full protocol


@dataclass
class ProtocolResult:
    grid: GridResult
    qualified: list[ComboResult]
    tested: list[ComboResult]
    hyper: HyperParams
    combo: BandCombo

    @property
    def ledger_rows(self) -> list[ComboResult]:
        return [*self.grid.rows, *self.qualified, *self.tested]

    def selected_params(self) -> dict:
        return {"hyper": self.hyper.to_dict(), "combo": self.combo.to_dict()}


def select_combo(qualified: Sequence[ComboResult], tested: Sequence[ComboResult]) -> ComboResult:
    val = {(r.granularity_hz, r.metric, r.band_pair): r.validation for r in qualified}
    ok = [r for r in tested if not r.skip_reason]
    if not ok:
        raise PipelineError("no band combination could be evaluated on the test partition")
    return min(ok, key=lambda r: holdout_selection_key(r, val.get((r.granularity_hz, r.metric, r.band_pair))))


def run_protocol(dataset: Dataset, grid: ParamGrid | None = None, split: SplitSpec | None = None,
                 opts: PipelineOptions | None = None) -> ProtocolResult:
    grid = grid or ParamGrid()
    split = split or SplitSpec()
    opts = opts or PipelineOptions()
    cache = BandedCache(dataset.spectrogram)
    gres = grid_search(dataset, grid, split, opts, cache)
    if gres.best is None:
        raise PipelineError("every grid combination was skipped")
    hyper = gres.best.hyper
    combos = candidate_combos(dataset, grid, split, opts, cache)
    qualified = qualify_band_combos(dataset, hyper, combos, split, opts, cache)
    passing = [r for r in qualified if not r.skip_reason and r.validation
               and _score(r.validation.f1) >= opts.qualify_f1]
    if not passing:
        # nothing clears the bar: carry the grid winner's own combination forward
        passing = [replace(gres.best, stage="qualify")]
    tested = evaluate_band_combos(dataset, hyper, [r.combo for r in passing], split, opts, cache)
    winner = select_combo(qualified, tested)
    return ProtocolResult(gres, qualified, tested, hyper, winner.combo)


# ----------------------------------------------------------------- ledger

LEDGER_FIELDS = [
    "stage", "granularity_hz", "metric", "sliding_window", "kernel", "C", "gamma", "band_pair",
    *(f"val_{k}" for k in ("tp", "fp", "tn", "fn", "accuracy", "precision", "recall", "specificity", "f1")),
    *(f"test_{k}" for k in ("tp", "fp", "tn", "fn", "accuracy", "precision", "recall", "specificity", "f1")),
    "converged", "n_train_windows", "skip_reason",
]


def _cell(v) -> str:
    if v is None:
        return "N/A"
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _metric_cells(prefix: str, m: Metrics | None) -> dict:
    keys = ("tp", "fp", "tn", "fn", "accuracy", "precision", "recall", "specificity", "f1")
    if m is None:
        return {f"{prefix}_{k}": "" for k in keys}
    d = m.as_dict()
    return {f"{prefix}_{k}": _cell(d[k]) for k in keys}


def ledger_csv(rows: Sequence[ComboResult]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=LEDGER_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({
            "stage": r.stage, "granularity_hz": r.granularity_hz, "metric": r.metric,
            "sliding_window": r.overlap_s, "kernel": r.kernel, "C": _cell(r.C),
            "gamma": "" if r.gamma is None else _cell(r.gamma), "band_pair": r.band_pair,
            **_metric_cells("val", r.validation), **_metric_cells("test", r.test),
            "converged": "" if r.converged is None else _cell(r.converged),
            "n_train_windows": r.n_train_windows, "skip_reason": r.skip_reason,
        })
    return buf.getvalue()


def _parse_metrics(row: Mapping[str, str], prefix: str) -> Metrics | None:
    if not row.get(f"{prefix}_tp"):
        return None
    return Metrics(*(int(row[f"{prefix}_{k}"]) for k in ("tp", "fp", "tn", "fn")))


def read_ledger(text: str) -> list[ComboResult]:
    """Parse a ledger produced by :func:`ledger_csv`; errors name the line."""
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        return []
    missing = [f for f in ("stage", "granularity_hz", "metric", "band_pair") if f not in reader.fieldnames]
    if missing:
        raise PipelineError(f"line 1: ledger header lacks {missing}")
    rows = []
    for row in reader:
        line = reader.line_num
        try:
            if None in row or any(v is None for v in row.values()):
                raise ValueError("wrong number of fields")
            gamma = row.get("gamma") or ""
            rows.append(ComboResult(
                stage=row["stage"], granularity_hz=int(row["granularity_hz"]), metric=row["metric"],
                overlap_s=int(row["sliding_window"]), kernel=row["kernel"], C=float(row["C"]),
                gamma=float(gamma) if gamma else None, band_pair=row["band_pair"],
                validation=_parse_metrics(row, "val"), test=_parse_metrics(row, "test"),
                skip_reason=row.get("skip_reason", ""),
                converged=None if not row.get("converged") else row["converged"] == "true",
                n_train_windows=int(row.get("n_train_windows") or 0),
            ))
        except (KeyError, ValueError, TypeError) as exc:
            raise PipelineError(f"line {line}: malformed ledger row ({exc})") from None
    return rows


PR_FIELDS = ["series", "stage", "granularity_hz", "metric", "band_pair", "split", "precision", "recall"]


def precision_recall_series(rows: Sequence[ComboResult]) -> str:
    """One precision/recall point per combination, test split when available."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PR_FIELDS)
    for r in rows:
        m, split = (r.test, "test") if r.test is not None else (r.validation, "validation")
        series = f"{r.metric}_{r.granularity_hz}_{r.band_pair or 'skipped'}_w{r.overlap_s}_{r.kernel}_C{r.C:g}"
        if r.gamma is not None:
            series += f"_g{r.gamma:g}"
        prec = _cell(m.precision) if m else "N/A"
        rec = _cell(m.recall) if m else "N/A"
        w.writerow([series, r.stage, r.granularity_hz, r.metric, r.band_pair, split if m else "", prec, rec])
    return buf.getvalue()


def window_count(duration_s: int, wcfg: WindowConfig) -> int:
    return len(frame_windows(duration_s, wcfg))
