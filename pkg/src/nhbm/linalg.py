"""Dense complex linear algebra.

Nonsymmetric eigendecomposition (hand-built QR solver behind a backend
seam), pivoted linear solves, Hermitian log-determinants, and the matrix
text format used for fixtures.
"""
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import _eigen
from .errors import DegenerateSpectrum, NoConvergence, NotPositiveDefinite, SingularMatrix

DEFAULT_GAP_TOL = 1e-10


def as_matrix(m):
    """Validate and convert to a square, finite complex128 array."""
    a = np.asarray(m, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


@dataclass(frozen=True)
class EigenResult:
    """Ordered eigenvalues, matching unit right eigenvectors, smallest gap."""

    lam: np.ndarray
    right_vectors: np.ndarray
    min_gap: float


def _qr_backend(m):
    lam, vecs, gap, ok = _eigen.eig_qr(np.ascontiguousarray(m))
    if not ok:
        raise NoConvergence(f"QR iteration exceeded {40 * m.shape[0]} sweeps")
    return lam, vecs, gap


def _lapack_backend(m):
    lam, vecs = np.linalg.eig(m)
    lam, vecs, gap = _eigen.finish(lam.astype(np.complex128), np.ascontiguousarray(vecs))
    return lam, vecs, gap


BACKENDS = {"qr": _qr_backend, "lapack": _lapack_backend}


def eigen_decompose(m, gap_tol=DEFAULT_GAP_TOL, backend="qr"):
    """Eigendecomposition of a simple-spectrum matrix.

    Parameters
    ----------
    m : array_like, shape (n, n)
    gap_tol : float
        Minimum admissible distance between two eigenvalues.
    backend : {"qr", "lapack"}
        ``"qr"`` is the built-in balanced Hessenberg/QR solver.

    Returns
    -------
    EigenResult
        Eigenvalues sorted by real then imaginary part; column ``j`` of
        ``right_vectors`` has unit norm and its largest entry real positive.

    Raises
    ------
    DegenerateSpectrum
        If the smallest eigenvalue gap is below ``gap_tol``.
    NoConvergence
        If the QR sweep budget (40 n) is exhausted.
    """
    a = as_matrix(m)
    lam, vecs, gap = BACKENDS[backend](a)
    if a.shape[0] > 1 and gap < gap_tol:
        raise DegenerateSpectrum(gap, gap_tol)
    return EigenResult(lam, vecs, float(gap))


def eigen_decompose_batch(ms):
    """Batched built-in solver without gap checks.

    Returns ``(lam, vecs, gaps)`` with leading batch axis.
    """
    ms = np.ascontiguousarray(ms, dtype=np.complex128)
    lam, vecs, gaps, ok = _eigen.eig_qr_batch(ms)
    if not ok.all():
        raise NoConvergence(f"QR iteration failed for {int((~ok).sum())} matrices in batch")
    return lam, vecs, gaps


def solve_linear(a, b):
    """Solve ``a x = b`` by LU factorization with partial pivoting.

    Raises
    ------
    SingularMatrix
        If a pivot magnitude is below ``1e-14 * ||a||_F``.
    """
    a = as_matrix(a)
    b = np.asarray(b, dtype=np.complex128)
    with warnings.catch_warnings():
        # exact zero pivots are reported below as SingularMatrix
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    threshold = 1e-14 * np.linalg.norm(a)
    smallest = np.abs(np.diag(lu)).min()
    if smallest < threshold:
        raise SingularMatrix(f"pivot {smallest:.3e} below {threshold:.3e}")
    return scipy.linalg.lu_solve((lu, piv), b, check_finite=False)


def inverse(a):
    """``solve_linear(a, I)``."""
    a = as_matrix(a)
    return solve_linear(a, np.eye(a.shape[0], dtype=np.complex128))


def logdet_hpd(h):
    """log det of a Hermitian positive-definite matrix via Cholesky.

    Raises
    ------
    NotPositiveDefinite
        If the factorization meets a non-positive pivot.
    ValueError
        If ``h`` is not Hermitian within ``1e-12 ||h||_F``.
    """
    h = as_matrix(h)
    if np.abs(h - h.conj().T).max() > 1e-12 * np.linalg.norm(h):
        raise ValueError("matrix is not Hermitian")
    try:
        chol = np.linalg.cholesky(h)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    pivots = np.diag(chol).real
    if np.any(pivots <= 0):
        raise NotPositiveDefinite("non-positive pivot")
    return 2.0 * float(np.sum(np.log(pivots)))


def format_matrix(m):
    """Serialize to the fixture text format (17 significant digits)."""
    m = as_matrix(m)
    lines = [str(m.shape[0])]
    for row in m:
        lines.append(" ".join(f"{v.real:.17g},{v.imag:.17g}" for v in row))
    return "\n".join(lines) + "\n"


def parse_matrix(text):
    """Parse the fixture text format."""
    rows = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
    if not rows:
        raise ValueError("empty matrix text")
    n = int(rows[0][0])
    body = rows[1:]
    if len(body) != n or any(len(r) != n for r in body):
        raise ValueError(f"expected {n} rows of {n} entries")
    out = np.empty((n, n), dtype=np.complex128)
    for i, row in enumerate(body):
        for j, tok in enumerate(row):
            re, im = tok.split(",")
            out[i, j] = complex(float(re), float(im))
    return as_matrix(out)


def read_matrix(path):
    with open(path) as fh:
        return parse_matrix(fh.read())


def write_matrix(path, m):
    from .io import atomic_write_text

    atomic_write_text(path, format_matrix(m))
