import pytest

from leakdetect import config as C
from leakdetect.config import ConfigError


def test_defaults():
    cfg = C.load_config(None)
    assert cfg.seed == 0 and cfg.workers == 1 and cfg.grid.effective_size == 540


def test_yaml_and_json(tmp_path):
    y = tmp_path / "c.yaml"
    y.write_text("seed: 3\ngrid:\n  kernel: [linear]\n  C: [1, 10]\nsplit:\n  train: 0.5\n  validation: 0.25\n"
                 "  test: 0.25\n")
    cfg = C.load_config(y)
    assert cfg.seed == 3 and cfg.grid.kernel == ("linear",) and cfg.split.train == 0.5
    j = tmp_path / "c.json"
    j.write_text('{"workers": 2, "dataset": {"spectrogram": "a.txt", "annotation": "a.ann"}}')
    cfg = C.load_config(j)
    assert cfg.workers == 2 and cfg.dataset.annotation == "a.ann"


@pytest.mark.parametrize("data", [
    {"sed": 1},
    {"grid": {"kernels": ["linear"]}},
    {"features": {"bogus": 1}},
    {"dataset": {"spectrogram": "x", "extra": 1}},
    {"workers": 0},
    {"seed": "abc"},
    {"grid": {"kernel": ["poly"]}},
    {"targets": {"spectrogram": "x"}},
])
def test_rejected(data):
    with pytest.raises(ConfigError):
        C.from_mapping(data)


def test_unparseable(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("seed: [1,\n")
    with pytest.raises(ConfigError):
        C.load_config(p)
    with pytest.raises(ConfigError):
        C.load_config(tmp_path / "missing.yaml")


def test_env_overrides():
    cfg = C.apply_env(C.from_mapping({"seed": 1}), {"LEAKDETECT_SEED": "9", "LEAKDETECT_OUT": "o"})
    assert cfg.seed == 9 and cfg.out == "o"
    with pytest.raises(ConfigError):
        C.apply_env(C.RunConfig(), {"LEAKDETECT_WORKERS": "many"})


def test_synth_forms():
    [(name, cfg)] = C.synth_configs({"preset": "leak_process"}, 4)
    assert name == "Leak_process" and cfg.seed == 4
    many = C.synth_configs({"presets": ["leak_process", "noleak_noprocess"]}, 0)
    assert [n for n, _ in many] == ["Leak_process", "NoLeak_noprocess"]
    assert [c.seed for _, c in many] == [0, 1]
    [(name, cfg)] = C.synth_configs({
        "name": "mine", "duration_s": 100, "n_bins": 50,
        "leak_spec": [{"interval": [10, 20], "band_hz": [0, 1000], "snr_db": 5}],
        "process_spec": [{"interval": [0, 99], "band_hz": [40000, 45000], "snr_db": 10,
                          "modulation_period_s": 20}],
    }, 7)
    assert name == "mine" and cfg.seed == 7 and cfg.leak_spec[0].interval == (10, 20)
    for bad in ({"preset": "x"}, {"preset": "leak_process", "foo": 1}, {"durations": 5},
                {"duration_s": 100, "leak_spec": [{"interval": [1, 2]}]}):
        with pytest.raises(ConfigError):
            C.synth_configs(bad, 0)
