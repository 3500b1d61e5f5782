import json
import os

import numpy as np
import pytest

from nhbm import io
from nhbm.config import ConfigError, load_config, parse_complex
from nhbm.process import ProcessConfig, run_ensemble


def test_atomic_write_leaves_no_temporaries(tmp_path):
    path = tmp_path / "sub" / "x.txt"
    io.atomic_write_text(path, "hello")
    assert path.read_text() == "hello"
    assert os.listdir(path.parent) == ["x.txt"]


def test_dataset_roundtrip(tmp_path):
    cfg = ProcessConfig(n=3, t_end=0.02, dt=0.01, m0=np.diag([1, 2, 3]), n_traj=2)
    records = run_ensemble(cfg)
    path = tmp_path / "d.jsonl"
    io.write_dataset(path, records)
    rows = io.read_dataset(path)
    assert len(rows) == 6
    assert [r["traj"] for r in rows] == [0, 0, 0, 1, 1, 1]
    assert np.array_equal(rows[4]["lambda"], records[1].frames[1].lam)
    assert np.array_equal(rows[4]["overlap"], records[1].frames[1].overlap)


def test_table_formats(tmp_path):
    rows = [{"a": 0.1, "b": True}, {"a": 1 / 3, "b": False}]
    io.write_table(tmp_path / "t.csv", rows, ["a", "b"])
    back = io.read_csv(tmp_path / "t.csv")
    assert back["a"][1] == 1 / 3 and list(back["b"]) == [1.0, 0.0]
    data = json.loads(io.table_text(rows, ["a", "b"], "json"))
    assert data[0] == {"a": 0.1, "b": True}


def write(tmp_path, text, name="c.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_config_with_matrix_file(tmp_path):
    (tmp_path / "m.txt").write_text("2\n0,0 1,0\n0,0 1,0\n")
    cfg = load_config(write(tmp_path, "n: 2\nt_end: 1\ndt: 0.5\nm0: m.txt\nseed: 4\n"))
    pc = cfg.process()
    assert np.allclose(pc.m0, [[0, 1], [0, 1]]) and pc.seed == 4 and not pc.allow_degenerate_start
    assert cfg.process(seed_override=9).seed == 9


def test_builtin_start_allows_degeneracy(tmp_path):
    cfg = load_config(write(tmp_path, "n: 4\nt_end: 1\ndt: 0.5\nm0: two_sources:1\n"))
    assert cfg.process().allow_degenerate_start
    assert cfg.m0_is_builtin


@pytest.mark.parametrize("text", ["", "n: 0\n", "[1, 2]\n", "n: 2\nt_end: 1\ndt: x\n", "n: [\n"])
def test_invalid_configs(tmp_path, text):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, text)).process()


def test_missing_matrix_file(tmp_path):
    cfg = load_config(write(tmp_path, "n: 2\nm0: nowhere.txt\n"))
    with pytest.raises(ConfigError):
        cfg.m0()


def test_parse_complex_forms():
    assert parse_complex([1, -2]) == 1 - 2j
    assert parse_complex("1 + 2j") == 1 + 2j
    assert parse_complex(3) == 3
    with pytest.raises(ConfigError):
        parse_complex("abc")
