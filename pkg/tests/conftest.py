from __future__ import annotations

import numpy as np
import pytest
from helpers import small_dataset

from leakdetect import synth
from leakdetect.dataset import Dataset


@pytest.fixture
def small():
    return small_dataset(0)


@pytest.fixture(scope="session")
def presets():
    """The three full-size presets (seeds 0, 1, 2)."""
    out = {}
    for i, name in enumerate(("Leak_process", "Leak_noprocess", "NoLeak_noprocess")):
        spec, ann = synth.generate(synth.reference_preset(name, seed=i))
        out[name] = Dataset(name, spec, ann)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
