"""PSD spectrogram datasets and leak annotations.

A spectrogram is stored as a plain-text matrix with one frequency bin per row
and one column per second. Annotations are ``start,end`` lines of inclusive
second indices.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._io import atomic_write_text

SAMPLE_RATE_HZ = 131072
MAX_FREQ_HZ = 65536
N_BINS = 5000


class DatasetError(ValueError):
    """Base class for dataset problems."""


class FormatError(DatasetError):
    pass


class ValidationError(DatasetError):
    pass


class BoundsError(DatasetError):
    pass


@dataclass(frozen=True, eq=False)
class Spectrogram:
    psd: np.ndarray
    sample_rate_hz: float = SAMPLE_RATE_HZ
    max_freq_hz: float = MAX_FREQ_HZ

    def __post_init__(self):
        psd = np.array(self.psd, dtype=np.float64, copy=True)
        if psd.ndim != 2 or psd.size == 0:
            raise FormatError(f"PSD must be a non-empty 2-D matrix, got shape {psd.shape}")
        if not np.all(np.isfinite(psd)):
            raise ValidationError("PSD contains non-finite values")
        if np.any(psd < 0):
            raise ValidationError("PSD contains negative values")
        psd.setflags(write=False)
        object.__setattr__(self, "psd", psd)

    @property
    def n_bins(self) -> int:
        return self.psd.shape[0]

    @property
    def duration_s(self) -> int:
        return self.psd.shape[1]

    @property
    def bin_width_hz(self) -> float:
        return self.max_freq_hz / self.n_bins

    def bin_centers_hz(self) -> np.ndarray:
        return (np.arange(self.n_bins) + 0.5) * self.bin_width_hz

    def slice_seconds(self, start: int, stop: int) -> "Spectrogram":
        return Spectrogram(self.psd[:, start:stop], self.sample_rate_hz, self.max_freq_hz)


@dataclass(frozen=True)
class LeakAnnotation:
    intervals: tuple[tuple[int, int], ...] = field(default_factory=tuple)

    def __post_init__(self):
        ivs = tuple((int(s), int(e)) for s, e in self.intervals)
        prev_end = -1
        for s, e in ivs:
            if s < 0 or s > e:
                raise ValidationError(f"bad interval [{s}:{e}]")
            if s <= prev_end:
                raise ValidationError("intervals must be sorted and non-overlapping")
            prev_end = e
        object.__setattr__(self, "intervals", ivs)

    @property
    def total_seconds(self) -> int:
        return sum(e - s + 1 for s, e in self.intervals)

    def check_fits(self, duration_s: int) -> None:
        if self.intervals and self.intervals[-1][1] >= duration_s:
            raise BoundsError(
                f"interval {self.intervals[-1]} exceeds duration {duration_s}"
            )


def expand_labels(ann: LeakAnnotation, duration_s: int) -> np.ndarray:
    """Per-second 0/1 label vector; interval endpoints are inclusive."""
    ann.check_fits(duration_s)
    labels = np.zeros(duration_s, dtype=np.int8)
    for s, e in ann.intervals:
        labels[s : e + 1] = 1
    return labels


def intervals_from_labels(labels: Sequence[int]) -> LeakAnnotation:
    """Inverse of :func:`expand_labels` (adjacent intervals come back merged)."""
    y = np.asarray(labels).astype(bool)
    padded = np.concatenate([[False], y, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    starts, stops = edges[0::2], edges[1::2]
    return LeakAnnotation(tuple((int(s), int(e) - 1) for s, e in zip(starts, stops)))


_SPLIT = re.compile(r"[,\s]+")


def _parse_matrix(text: str) -> np.ndarray:
    rows = []
    width = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            row = [float(tok) for tok in _SPLIT.split(line) if tok]
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise FormatError(f"line {lineno}: expected {width} columns, got {len(row)}")
        rows.append(row)
    if not rows:
        raise FormatError("empty spectrogram file")
    return np.array(rows, dtype=np.float64)


def _read_matrix_fast(path: Path) -> np.ndarray | None:
    # pandas' C parser handles the 5000 x ~3000 case in seconds; any irregularity
    # falls back to the strict line parser so error messages stay precise.
    try:
        import pandas as pd

        with open(path, "r") as fh:
            first = fh.readline()
        sep = "," if "," in first else r"\s+"
        frame = pd.read_csv(path, sep=sep, header=None, dtype=np.float64,
                            engine="c", float_precision="round_trip",
                            skip_blank_lines=True)
        if frame.isna().to_numpy().any():
            return None
        return frame.to_numpy()
    except Exception:
        return None


def load_spectrogram(path: str | Path, expected_bins: int | None = None,
                     sample_rate_hz: float = SAMPLE_RATE_HZ,
                     max_freq_hz: float = MAX_FREQ_HZ) -> Spectrogram:
    path = Path(path)
    if path.suffix == ".npy":
        psd = np.load(path, allow_pickle=False)
    else:
        psd = _read_matrix_fast(path)
        if psd is None:
            psd = _parse_matrix(path.read_text())
    if psd.size == 0:
        raise FormatError("empty spectrogram file")
    if psd.ndim == 1:
        psd = psd[None, :]
    if expected_bins is not None and psd.shape[0] != expected_bins:
        raise FormatError(f"expected {expected_bins} frequency bins, got {psd.shape[0]}")
    return Spectrogram(psd, sample_rate_hz, max_freq_hz)


def format_matrix(psd: np.ndarray) -> str:
    """Render the matrix with ``repr``-exact floats, comma separated."""
    buf = io.StringIO()
    for row in np.asarray(psd, dtype=np.float64):
        buf.write(",".join(map(repr, row.tolist())))
        buf.write("\n")
    return buf.getvalue()


def save_spectrogram(spec: Spectrogram, path: str | Path) -> None:
    path = Path(path)
    if path.suffix == ".npy":
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp.npy")
        np.save(tmp, spec.psd)
        tmp.replace(path)
        return
    atomic_write_text(path, format_matrix(spec.psd))


def parse_annotation(text: str) -> LeakAnnotation:
    intervals = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p for p in _SPLIT.split(line) if p]
        if len(parts) != 2:
            raise FormatError(f"annotation line {lineno}: expected 'start,end'")
        try:
            intervals.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise FormatError(f"annotation line {lineno}: non-integer bound") from None
    return LeakAnnotation(tuple(intervals))


def load_annotation(path: str | Path) -> LeakAnnotation:
    return parse_annotation(Path(path).read_text())


def format_annotation(ann: LeakAnnotation) -> str:
    lines = ["# start,end (inclusive seconds)"]
    lines += [f"{s},{e}" for s, e in ann.intervals]
    return "\n".join(lines) + "\n"


def save_annotation(ann: LeakAnnotation, path: str | Path) -> None:
    atomic_write_text(Path(path), format_annotation(ann))


@dataclass(frozen=True, eq=False)
class Dataset:
    """A spectrogram with its per-second labels."""

    name: str
    spectrogram: Spectrogram
    annotation: LeakAnnotation

    def __post_init__(self):
        self.annotation.check_fits(self.spectrogram.duration_s)

    @property
    def labels(self) -> np.ndarray:
        return expand_labels(self.annotation, self.spectrogram.duration_s)

    @property
    def duration_s(self) -> int:
        return self.spectrogram.duration_s


def merge_intervals(intervals: Iterable[tuple[int, int]]) -> LeakAnnotation:
    merged: list[list[int]] = []
    for s, e in sorted(intervals):
        if merged and s <= merged[-1][1] + 1:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    return LeakAnnotation(tuple((s, e) for s, e in merged))
