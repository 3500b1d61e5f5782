"""Bi-orthogonal eigenvector frames and the eigenvector-overlap matrix."""
from dataclasses import dataclass
from itertools import permutations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import AmbiguousMatching, ZeroGaugeFactor
from .linalg import DEFAULT_GAP_TOL, as_matrix, eigen_decompose, inverse


@dataclass(frozen=True)
class SpectralFrame:
    """Eigenvalues, right/left eigenvectors, Gram matrices and overlaps.

    ``s`` holds right eigenvectors as columns, ``s_inv`` the left ones as
    rows. ``a = s^H s``, ``a_inv = s_inv s_inv^H`` and
    ``overlap[j, k] = a_inv[j, k] * a[k, j]``.
    """

    t: float
    lam: np.ndarray
    s: np.ndarray
    s_inv: np.ndarray
    a: np.ndarray
    a_inv: np.ndarray
    overlap: np.ndarray
    min_gap: float

    @property
    def n(self):
        return self.lam.shape[0]


def _assemble(t, lam, s, s_inv, min_gap):
    a = s.conj().T @ s
    a_inv = s_inv @ s_inv.conj().T
    overlap = a_inv * a.T
    return SpectralFrame(float(t), lam, s, s_inv, a, a_inv, overlap, float(min_gap))


def build_frame(m, t=0.0, gap_tol=DEFAULT_GAP_TOL, backend="qr"):
    """Spectral frame of ``m`` at time ``t``.

    Raises
    ------
    DegenerateSpectrum
        Propagated from the eigensolver.
    """
    eig = eigen_decompose(m, gap_tol=gap_tol, backend=backend)
    s = eig.right_vectors
    return _assemble(t, eig.lam, s, inverse(s), eig.min_gap)


def relabel(frame, perm):
    """Frame with eigen-index ``j`` taken from old index ``perm[j]``."""
    perm = np.asarray(perm)
    if np.array_equal(perm, np.arange(frame.n)):
        return frame
    return _assemble(frame.t, frame.lam[perm], frame.s[:, perm], frame.s_inv[perm, :], frame.min_gap)


def gauge_transform(frame, c):
    """Rescale right eigenvectors by ``c`` and left ones by ``1/c``.

    Raises
    ------
    ZeroGaugeFactor
        If any factor is zero.
    ValueError
        If a modulus lies outside ``[1e-6, 1e6]``.
    """
    c = np.asarray(c, dtype=np.complex128)
    if c.shape != (frame.n,):
        raise ValueError(f"expected {frame.n} gauge factors")
    mod = np.abs(c)
    if np.any(mod == 0):
        raise ZeroGaugeFactor("gauge factor must be nonzero")
    if np.any(mod < 1e-6) or np.any(mod > 1e6):
        raise ValueError("gauge factor moduli must lie in [1e-6, 1e6]")
    return _assemble(frame.t, frame.lam, frame.s * c[None, :], frame.s_inv / c[:, None], frame.min_gap)


def frame_diagnostics(frame, m=None):
    """Residuals of the frame invariants and whether each passes.

    Returns a dict mapping invariant name to ``(value, threshold, ok)``.
    """
    n = frame.n
    out = {}

    def put(name, value, threshold, ok=None):
        value = float(value)
        out[name] = (value, threshold, value <= threshold if ok is None else ok)

    eye = np.eye(n)
    put("biorthogonality", np.abs(frame.s_inv @ frame.s - eye).max(), 1e-10 * n)
    if m is not None:
        m = as_matrix(m)
        recon = frame.s @ (frame.lam[:, None] * frame.s_inv)
        put("reconstruction", np.linalg.norm(m - recon), 1e-9 * np.linalg.norm(m) * n)
    o = frame.overlap
    put("overlap_hermitian", np.abs(o - o.conj().T).max(), 1e-12 * np.abs(o).max())
    diag = np.diag(o)
    low = max(0.0, 1 - diag.real.min())
    put("overlap_diag_lower", low, 1e-9)
    put("overlap_diag_imag", (np.abs(diag.imag) / np.abs(diag)).max(), 1e-9)
    put("overlap_row_sum", np.abs(o.sum(axis=1) - 1).max(), 1e-8)
    return out


def _row_min_certificate(cost, tol):
    """Assignment if every row's minimum lies in a distinct column and the
    runner-up in every row is worse by more than ``tol``; else None."""
    n = cost.shape[0]
    cols = np.argmin(cost, axis=1)
    if len(set(cols.tolist())) != n:
        return None
    part = np.partition(cost, 1, axis=1)
    if np.min(part[:, 1] - part[:, 0]) <= tol:
        return None
    return cols


def match_permutation(prev, nxt, ambiguity_tol=1e-12):
    """Optimal assignment of new eigenvalues to previous labels.

    Returns ``perm`` such that ``nxt[perm[j]]`` continues ``prev[j]``,
    minimizing ``sum_j |prev[j] - nxt[perm[j]]|``.

    Raises
    ------
    AmbiguousMatching
        If the best and second-best assignments differ in cost by less
        than ``ambiguity_tol``.
    """
    prev = np.asarray(prev, dtype=np.complex128)
    nxt = np.asarray(nxt, dtype=np.complex128)
    if prev.shape != nxt.shape:
        raise ValueError("eigenvalue lists differ in length")
    n = prev.shape[0]
    if n == 1:
        return np.zeros(1, dtype=int)
    cost = np.abs(prev[:, None] - nxt[None, :])
    quick = _row_min_certificate(cost, ambiguity_tol)
    if quick is not None:
        return quick
    if n <= 3:
        rows = np.arange(n)
        scored = sorted((cost[rows, list(p)].sum(), p) for p in permutations(range(n)))
        best, second = scored[0], scored[1]
        if second[0] - best[0] < ambiguity_tol:
            raise AmbiguousMatching(f"assignment costs {best[0]:.3e} and {second[0]:.3e} tie")
        return np.array(best[1])
    rows, cols = linear_sum_assignment(cost)
    best = cost[rows, cols].sum()
    big = cost.max() * (n + 1) + 1.0
    second = np.inf
    for i in range(n):
        trial = cost.copy()
        trial[i, cols[i]] = big
        r2, c2 = linear_sum_assignment(trial)
        second = min(second, trial[r2, c2].sum())
    if second - best < ambiguity_tol:
        raise AmbiguousMatching(f"assignment costs {best:.3e} and {second:.3e} tie")
    return cols


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Finite atomic measure on the complex plane."""

    locations: np.ndarray
    weights: np.ndarray

    @property
    def mass(self):
        return float(self.weights.sum())


def empirical_measures(frame):
    """Eigenvalue measure (weights 1/n) and overlap measure (Re O_jj / n^2)."""
    n = frame.n
    xi = EmpiricalMeasure(frame.lam.copy(), np.full(n, 1.0 / n))
    theta = EmpiricalMeasure(frame.lam.copy(), np.diag(frame.overlap).real / n**2)
    return xi, theta


def pairing(measure, phi):
    """Integral of ``phi`` against an atomic measure."""
    try:
        vals = np.asarray(phi(measure.locations), dtype=np.complex128)
        if vals.shape != measure.locations.shape:
            raise ValueError
    except (TypeError, ValueError):
        vals = np.array([phi(z) for z in measure.locations], dtype=np.complex128)
    return complex(np.sum(measure.weights * vals))


def _pair(z):
    return [float(z.real), float(z.imag)]


def frame_to_dict(frame):
    """JSON-ready dump: t, lambda, overlap, min_gap."""
    return {
        "t": frame.t,
        "lambda": [_pair(z) for z in frame.lam],
        "overlap": [[_pair(z) for z in row] for row in frame.overlap],
        "min_gap": frame.min_gap,
    }


def dict_to_arrays(d):
    """Inverse of ``frame_to_dict`` for the dumped fields."""
    lam = np.array([complex(*p) for p in d["lambda"]])
    overlap = np.array([[complex(*p) for p in row] for row in d["overlap"]])
    return float(d["t"]), lam, overlap, float(d["min_gap"])
