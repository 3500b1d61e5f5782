import numpy as np
import pytest

from nhbm.errors import DegenerateSpectrum
from nhbm.process import (ProcessConfig, builtin_matrix, run_ensemble, run_trajectory, sample_increment,
                          stream, two_sources)


def test_streams_are_reproducible_and_distinct():
    a = stream(1, 2, 3).standard_normal(4)
    assert np.array_equal(a, stream(1, 2, 3).standard_normal(4))
    for other in (stream(1, 2, 4), stream(1, 3, 3), stream(2, 2, 3), stream(1, 2, 3, purpose=1)):
        assert not np.allclose(a, other.standard_normal(4))


def test_increment_second_moments():
    n, dt = 3, 0.5
    dm = sample_increment(n, dt, stream(0, 0, 0), size=200000)
    assert np.allclose(np.mean(np.abs(dm) ** 2, axis=0), dt / n, rtol=0.02)
    assert np.allclose(np.mean(dm**2, axis=0), 0, atol=0.01 * dt / n)


def test_builtin_starts():
    assert np.array_equal(builtin_matrix("null", 3), np.zeros((3, 3)))
    assert np.allclose(np.diag(builtin_matrix("two_sources:1+1j", 4)), [1 + 1j, 1 + 1j, -1 - 1j, -1 - 1j])
    assert builtin_matrix("data/m.txt", 3) is None
    with pytest.raises(ValueError):
        two_sources(3, 1)


def test_scalar_process_has_unit_overlap():
    cfg = ProcessConfig(n=1, t_end=0.1, dt=0.01, m0=np.zeros((1, 1)))
    rec = run_trajectory(cfg, 0)
    assert len(rec.frames) == 11
    assert all(np.allclose(f.overlap, 1) for f in rec.frames)


def test_degenerate_start_needs_permission():
    cfg = ProcessConfig(n=3, t_end=0.02, dt=0.01, m0=np.zeros((3, 3)))
    with pytest.raises(DegenerateSpectrum):
        run_trajectory(cfg, 0)
    ok = ProcessConfig(n=3, t_end=0.02, dt=0.01, m0=np.zeros((3, 3)), allow_degenerate_start=True)
    rec = run_trajectory(ok, 0)
    assert [f.t for f in rec.frames] == [0.01, 0.02]


def test_ensemble_independent_of_workers():
    cfg = ProcessConfig(n=4, t_end=0.05, dt=0.01, m0=np.diag([1, 2, 3, 4]), seed=9, n_traj=4)
    one = run_ensemble(cfg, workers=1)
    many = run_ensemble(cfg, workers=3)
    for a, b in zip(one, many):
        assert a.traj_index == b.traj_index
        assert all(np.array_equal(x.lam, y.lam) for x, y in zip(a.frames, b.frames))


def test_decimation_keeps_last_frame():
    cfg = ProcessConfig(n=2, t_end=0.05, dt=0.01, m0=np.diag([1, 2]), decimate=2)
    rec = run_trajectory(cfg, 0)
    assert np.allclose(rec.times, [0, 0.02, 0.04, 0.05])


def test_labels_follow_continuous_paths():
    cfg = ProcessConfig(n=3, t_end=0.1, dt=1e-4, m0=np.diag([0, 1, 2]), seed=5, decimate=100)
    rec = run_trajectory(cfg, 0)
    # small diffusion: each label stays near its start
    assert np.allclose(rec.frames[-1].lam, [0, 1, 2], atol=0.5)
    assert rec.displacement_violations == 0


def test_config_validation():
    with pytest.raises(ValueError):
        ProcessConfig(n=2, t_end=1, dt=0, m0=np.zeros((2, 2)))
    with pytest.raises(ValueError):
        ProcessConfig(n=2, t_end=1, dt=0.1, m0=np.zeros((3, 3)))
