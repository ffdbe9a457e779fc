import json

import pytest

from desot.pipeline import RunConfig, run_all

TINY = {
    "generator": {"classes": 6, "tail_exponent": 0.8, "seed": 0, "max_per_class": 60,
                  "min_per_class": 12, "size": 8},
    "members": 3,
    "seq_len": 5,
    "seeds": [0, 10],
    "hidden": [16],
    "epochs": 3,
    "batch_size": 32,
    "learning_rate": 0.005,
    "ood_classes": ["red_ring"],
    "minority_max_count": 15,
    "hist_bins": 8,
    "sweep_kinds": ["gaussian_noise", "rotation"],
    "sweep_severities": [0, 2, 5],
}


def tiny_config(tmp_path, **overrides):
    values = dict(TINY, data_path=str(tmp_path / "glyphs.dset"), out_dir=str(tmp_path / "run"))
    values.update(overrides)
    return RunConfig.from_dict(values)


@pytest.fixture(scope="session")
def tiny_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny")
    cfg = tiny_config(root)
    run_all(cfg)
    return cfg


@pytest.fixture
def tiny_config_file(tmp_path):
    values = dict(TINY, data_path=str(tmp_path / "glyphs.dset"), out_dir=str(tmp_path / "run"))
    path = tmp_path / "config.json"
    path.write_text(json.dumps(values))
    return path


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        ok, detail = RESULTS[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
