"""Sub-band aggregation of PSD spectrograms and correlation-based band ranking."""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .dataset import Spectrogram

GRANULARITIES = (1000, 2000, 5000)
METRICS = ("mean", "median", "iqr")

Band = tuple[float, float]


class BandingError(ValueError):
    pass


@dataclass(frozen=True)
class BandingConfig:
    granularity_hz: int
    metric: str

    def __post_init__(self):
        if self.granularity_hz not in GRANULARITIES:
            raise BandingError(f"granularity must be one of {GRANULARITIES}, got {self.granularity_hz}")
        if self.metric not in METRICS:
            raise BandingError(f"metric must be one of {METRICS}, got {self.metric!r}")


@dataclass(frozen=True, eq=False)
class BandedSeries:
    bands: tuple[Band, ...]
    values: np.ndarray  # bands x seconds
    config: BandingConfig | None = None

    def row(self, band: Band) -> np.ndarray:
        try:
            return self.values[self.bands.index(tuple(band))]
        except ValueError:
            raise BandingError(f"band {band} not present") from None

    def restrict(self, bands: Sequence[Band]) -> "BandedSeries":
        bands = tuple(tuple(b) for b in bands)
        return BandedSeries(bands, np.vstack([self.row(b) for b in bands]), self.config)

    def slice_seconds(self, start: int, stop: int) -> "BandedSeries":
        return BandedSeries(self.bands, self.values[:, start:stop], self.config)


def band_edges(max_freq_hz: float, granularity_hz: float) -> tuple[Band, ...]:
    n = math.ceil(max_freq_hz / granularity_hz)
    return tuple(
        (float(k * granularity_hz), float(min((k + 1) * granularity_hz, max_freq_hz))) for k in range(n)
    )


def _reduce(block: np.ndarray, metric: str) -> np.ndarray:
    if metric == "mean":
        return block.mean(axis=0)
    if metric == "median":
        return np.median(block, axis=0)
    q1, q3 = np.percentile(block, [25.0, 75.0], axis=0, method="linear")
    return q3 - q1


def aggregate(spec: Spectrogram, cfg: BandingConfig) -> BandedSeries:
    """Collapse frequency bins into fixed-width sub-bands.

    A bin belongs to the band containing its centre frequency; the last band
    may be narrower than the granularity.
    """
    if cfg.granularity_hz > spec.max_freq_hz:
        raise BandingError("granularity exceeds the spectrogram's frequency range")
    bands = band_edges(spec.max_freq_hz, cfg.granularity_hz)
    idx = np.floor(spec.bin_centers_hz() / cfg.granularity_hz).astype(int)
    values = np.empty((len(bands), spec.duration_s))
    # bin centres are increasing, so each band is a contiguous slice of rows
    bounds = np.searchsorted(idx, np.arange(len(bands) + 1))
    for k in range(len(bands)):
        lo, hi = bounds[k], bounds[k + 1]
        if hi <= lo:
            raise BandingError(f"band {bands[k]} contains no frequency bins")
        values[k] = _reduce(spec.psd[lo:hi], cfg.metric)
    return BandedSeries(bands, values, cfg)


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    dx = x - x.mean()
    dy = y - y.mean()
    denom = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if denom == 0.0:
        return float("nan")
    return float(np.clip((dx @ dy) / denom, -1.0, 1.0))


@dataclass(frozen=True)
class RankEntry:
    band: Band
    r: float
    rank: int


@dataclass(frozen=True)
class BandRanking:
    entries: tuple[RankEntry, ...]
    excluded: tuple[tuple[Band, str], ...] = field(default_factory=tuple)

    @property
    def bands(self) -> list[Band]:
        return [e.band for e in self.entries]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["band_lo_hz", "band_hi_hz", "r", "abs_rank"])
        for e in self.entries:
            w.writerow([_fmt_hz(e.band[0]), _fmt_hz(e.band[1]), repr(e.r), e.rank])
        return buf.getvalue()


def rank_bands(banded: BandedSeries, labels: np.ndarray) -> BandRanking:
    """Rank bands by |Pearson r| between their series and the 0/1 labels."""
    labels = np.asarray(labels, dtype=np.float64)
    if labels.shape[0] != banded.values.shape[1]:
        raise BandingError("label vector length does not match series length")
    if np.unique(labels).size < 2:
        raise BandingError("labels contain a single class; correlation undefined")
    scored = []
    excluded = []
    for band, series in zip(banded.bands, banded.values):
        if np.ptp(series) == 0.0:
            excluded.append((band, "zero variance"))
            continue
        scored.append((band, pearson(series, labels)))
    scored.sort(key=lambda br: (-abs(br[1]), br[0]))
    entries = tuple(RankEntry(b, r, i + 1) for i, (b, r) in enumerate(scored))
    return BandRanking(entries, tuple(excluded))


def _fmt_hz(v: float) -> str:
    return f"{v:g}"


def _khz(v: float) -> str:
    if v == 0:
        return "0"
    if v % 1000 == 0:
        return f"{int(v) // 1000}k"
    return f"{v / 1000:g}k"


@dataclass(frozen=True)
class BandPair:
    bands: tuple[Band, Band]

    def __post_init__(self):
        a, b = (tuple(float(v) for v in band) for band in self.bands)
        if a == b:
            raise BandingError("band pair needs two distinct bands")
        object.__setattr__(self, "bands", tuple(sorted((a, b))))

    @property
    def name(self) -> str:
        return "band_" + "_".join(_khz(v) for band in self.bands for v in band)

    def __str__(self) -> str:
        return self.name


def parse_band_name(name: str) -> BandPair:
    """Inverse of :attr:`BandPair.name`, e.g. ``band_0_2k_2k_4k``."""
    parts = name.split("_")
    if len(parts) != 5 or parts[0] != "band":
        raise BandingError(f"not a band pair name: {name!r}")

    def hz(tok: str) -> float:
        try:
            return float(tok[:-1]) * 1000 if tok.endswith("k") else float(tok)
        except ValueError:
            raise BandingError(f"not a band pair name: {name!r}") from None

    v = [hz(t) for t in parts[1:]]
    return BandPair(((v[0], v[1]), (v[2], v[3])))


PairStrategy = Union[str, Sequence[Band]]


def select_band_pair(ranking: BandRanking, strategy: PairStrategy = "top2") -> BandPair:
    if isinstance(strategy, str):
        if strategy != "top2":
            raise BandingError(f"unknown strategy {strategy!r}")
        if len(ranking.entries) < 2:
            raise BandingError("ranking has fewer than two bands")
        return BandPair((ranking.entries[0].band, ranking.entries[1].band))
    bands = [tuple(float(v) for v in b) for b in strategy]
    if len(bands) != 2:
        raise BandingError("explicit strategy needs exactly two bands")
    if bands[0] == bands[1]:
        raise BandingError("duplicate bands in explicit pair")
    return BandPair((bands[0], bands[1]))


def candidate_pairs(ranking: BandRanking, top_k: int = 5) -> list[BandPair]:
    """All pairs drawn from the ``top_k`` best-ranked bands, best first."""
    top = [e.band for e in ranking.entries[:top_k]]
    return [BandPair((a, b)) for a, b in itertools.combinations(top, 2)]
