"""Small synthetic fixtures shared by the test modules."""

from __future__ import annotations

from leakdetect import synth
from leakdetect.dataset import Dataset
from leakdetect.synth import LeakSpec, SynthConfig

SMALL_LEAKS = ((60, 100), (180, 230), (330, 370), (430, 470), (520, 560))


def small_config(seed: int = 0, leaks=SMALL_LEAKS, snr_db: float = 10.0, process=()) -> SynthConfig:
    """A 600 s, 500-bin stand-in for the full-size presets (fast to featurize)."""
    return SynthConfig(
        duration_s=600, n_bins=500, seed=seed,
        leak_spec=tuple(LeakSpec(iv, (500.0, 4000.0), snr_db) for iv in leaks),
        process_spec=tuple(process),
    )


def small_dataset(seed: int = 0, **kw) -> Dataset:
    spec, ann = synth.generate(small_config(seed, **kw))
    return Dataset(f"small{seed}", spec, ann)
