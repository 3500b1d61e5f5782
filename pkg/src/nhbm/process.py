"""Exact sampling of the complex matrix Brownian motion and ensembles.

Random numbers come from a counter-based generator (Philox) keyed by
``(seed, trajectory index)`` with the step number and purpose encoded in
the counter, so every increment is a pure function of its coordinates and
ensembles are independent of worker count and scheduling.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import AmbiguousMatching, DegenerateSpectrum, EnsembleError, NumericError
from .frame import build_frame, match_permutation, relabel
from .linalg import DEFAULT_GAP_TOL, as_matrix

MAIN_STREAM = 0
RETRY_STREAM = 1
_U64 = 2**64


def stream(seed, traj_index, step, purpose=MAIN_STREAM):
    """Independent generator for one ``(seed, trajectory, step, purpose)``."""
    key = (int(seed) % _U64) + ((int(traj_index) % _U64) << 64)
    counter = (int(step) << 64) + (int(purpose) << 128)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def sample_increment(n, dt, rng, size=None):
    """Complex Gaussian increment with ``E|dM_jk|^2 = dt/n``.

    With ``size`` given, returns a batch of shape ``(size, n, n)``.
    """
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    shape = (2, n, n) if size is None else (2, size, n, n)
    g = rng.standard_normal(shape)
    return (g[0] + 1j * g[1]) * math.sqrt(dt / (2 * n))


def advance(m, dt, rng):
    """One exact step ``m + dM``."""
    m = as_matrix(m)
    return m + sample_increment(m.shape[0], dt, rng)


def null_matrix(n):
    return np.zeros((n, n), dtype=np.complex128)


def two_sources(n, c):
    """Diagonal start with half the eigenvalues at ``c`` and half at ``-c``."""
    if n % 2:
        raise ValueError("two-source start needs even n")
    d = np.concatenate([np.full(n // 2, c), np.full(n // 2, -c)])
    return np.diag(d).astype(np.complex128)


def builtin_matrix(spec, n):
    """Resolve ``"null"`` or ``"two_sources:c"``; None if not a builtin."""
    spec = str(spec).strip()
    if spec == "null":
        return null_matrix(n)
    if spec.startswith("two_sources:"):
        return two_sources(n, complex(spec.split(":", 1)[1]))
    return None


@dataclass(frozen=True)
class ProcessConfig:
    n: int
    t_end: float
    dt: float
    m0: np.ndarray
    seed: int = 0
    n_traj: int = 1
    gap_tol: float = DEFAULT_GAP_TOL
    decimate: int = 1
    store_matrices: bool = False
    allow_degenerate_start: bool = False

    def __post_init__(self):
        if self.n < 1 or self.n_traj < 1:
            raise ValueError("n and n_traj must be positive")
        if not self.dt > 0 or self.t_end < self.dt * (1 - 1e-12):
            raise ValueError("need dt > 0 and t_end >= dt")
        if self.decimate < 1:
            raise ValueError("decimate must be positive")
        m0 = as_matrix(self.m0)
        if m0.shape != (self.n, self.n):
            raise ValueError(f"m0 has shape {m0.shape}, expected ({self.n}, {self.n})")
        object.__setattr__(self, "m0", m0)

    @property
    def n_steps(self):
        return max(1, int(math.ceil(self.t_end / self.dt - 1e-9)))

    def step_time(self, k):
        return min(k * self.dt, self.t_end) if k < self.n_steps else self.t_end


@dataclass
class TrajectoryRecord:
    traj_index: int
    times: list = field(default_factory=list)
    frames: list = field(default_factory=list)
    matrices: list = None
    permutation_log: list = field(default_factory=list)
    retries: int = 0
    min_gap_seen: float = math.inf
    displacement_violations: int = 0
    n_steps: int = 0

    @property
    def displacement_fraction(self):
        return self.displacement_violations / max(1, self.n_steps)


def run_trajectory(config, traj_index):
    """Sample one path and its relabeled spectral frames.

    Frames are built at every step so eigenvalue labels follow continuous
    paths; every ``decimate``-th one (and the last) is stored.

    Raises
    ------
    DegenerateSpectrum, AmbiguousMatching
        If near-degeneracy persists after one retry of the failing step
        as two half steps.
    """
    cfg = config
    rec = TrajectoryRecord(traj_index, matrices=[] if cfg.store_matrices else None)
    m = cfg.m0.copy()
    prev = None
    try:
        prev = build_frame(m, 0.0, cfg.gap_tol)
    except DegenerateSpectrum:
        if not cfg.allow_degenerate_start:
            raise
    if prev is not None:
        rec.times.append(0.0)
        rec.frames.append(prev)
        rec.min_gap_seen = prev.min_gap
        if cfg.store_matrices:
            rec.matrices.append(m.copy())
    n_steps = cfg.n_steps
    t_prev = 0.0
    for k in range(1, n_steps + 1):
        t = cfg.step_time(k)
        h = t - t_prev
        m_new = m + sample_increment(cfg.n, h, stream(cfg.seed, traj_index, k))
        try:
            frame, perm = _step(m_new, t, prev, cfg.gap_tol)
        except (DegenerateSpectrum, AmbiguousMatching):
            rng = stream(cfg.seed, traj_index, k, RETRY_STREAM)
            m_mid = m + sample_increment(cfg.n, h / 2, rng)
            m_new = m_mid + sample_increment(cfg.n, h / 2, rng)
            try:
                mid, _ = _step(m_mid, t - h / 2, prev, cfg.gap_tol)
                frame, perm = _step(m_new, t, mid, cfg.gap_tol)
            except DegenerateSpectrum as exc:
                exc.t = t
                raise
            rec.retries += 1
        if perm is not None and not np.array_equal(perm, np.arange(cfg.n)):
            rec.permutation_log.append((k, [int(p) for p in perm]))
        if prev is not None:
            disp = np.abs(frame.lam - prev.lam).max()
            bound = 10 * math.sqrt(h) * (1 + np.abs(prev.lam).max())
            rec.displacement_violations += int(disp > bound)
        rec.min_gap_seen = min(rec.min_gap_seen, frame.min_gap)
        rec.n_steps += 1
        if k % cfg.decimate == 0 or k == n_steps:
            rec.times.append(t)
            rec.frames.append(frame)
            if cfg.store_matrices:
                rec.matrices.append(m_new.copy())
        prev = frame
        m = m_new
        t_prev = t
    return rec


def _step(m, t, prev, gap_tol):
    frame = build_frame(m, t, gap_tol)
    if prev is None:
        return frame, None
    perm = match_permutation(prev.lam, frame.lam)
    return relabel(frame, perm), perm


def run_ensemble(config, workers=1, reduce=None):
    """Run ``config.n_traj`` trajectories.

    Parameters
    ----------
    workers : int
        Thread count. Results do not depend on it.
    reduce : callable, optional
        Applied to each record as it completes (streamed reduction); the
        returned list then holds reductions instead of records.

    Returns
    -------
    list
        Ordered by trajectory index.

    Raises
    ------
    EnsembleError
        Listing every failed trajectory index with its error.
    """

    def job(k):
        try:
            rec = run_trajectory(config, k)
            return (reduce(rec) if reduce else rec), None
        except NumericError as exc:
            return None, exc

    indices = range(config.n_traj)
    if workers <= 1:
        outcomes = [job(k) for k in indices]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(job, indices))
    failures = [(k, err) for k, (_, err) in zip(indices, outcomes) if err is not None]
    if failures:
        raise EnsembleError(failures)
    return [res for res, _ in outcomes]
