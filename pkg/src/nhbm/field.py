"""Regularized Fuglede-Kadison determinant field and its derivatives.

For a matrix ``m``, a point ``z`` and a regularization ``w != 0``::

    hhat   = (m^H - conj(z)) (m - z) + |w|^2 I
    psi    = log det(hhat) / (2n)
    fk_det = exp(n psi) = det(hhat)^(1/2)

Scalar evaluators take one ``(z, w, m)``; the ``*_grid`` variants
vectorize over an array of ``z`` values and ``*_batch`` over a stack of
matrices.
"""
import math
from dataclasses import dataclass

import numpy as np

from .errors import GridTooCoarse, NotPositiveDefinite
from .frame import build_frame, empirical_measures, pairing
from .linalg import as_matrix, inverse, logdet_hpd


def _check_w(w):
    if w == 0:
        raise ValueError("w must be nonzero")


def hhat(z, w, m):
    """Hermitian positive-definite Gram matrix, symmetrized after the product."""
    _check_w(w)
    m = as_matrix(m)
    n = m.shape[0]
    shifted = m - z * np.eye(n)
    h = shifted.conj().T @ shifted + abs(w) ** 2 * np.eye(n)
    return 0.5 * (h + h.conj().T)


def psi(z, w, m):
    """``log det hhat / (2n)``."""
    m = as_matrix(m)
    return logdet_hpd(hhat(z, w, m)) / (2 * m.shape[0])


def fk_det(z, w, m):
    """Regularized determinant ``exp(n psi)``."""
    m = as_matrix(m)
    return math.exp(m.shape[0] * psi(z, w, m))


def _hinv(z, w, m):
    return inverse(hhat(z, w, m))


def dpsi_dw(z, w, m):
    """``conj(w) Tr(hhat^-1) / (2n)``."""
    m = as_matrix(m)
    n = m.shape[0]
    return complex(np.conj(w) * np.trace(_hinv(z, w, m)).real / (2 * n))


def lap_w_psi(z, w, m):
    """Laplacian in ``w``: ``(2/n)(Tr hhat^-1 - |w|^2 Tr hhat^-2)``."""
    m = as_matrix(m)
    n = m.shape[0]
    hi = _hinv(z, w, m)
    tr1 = np.trace(hi).real
    tr2 = np.trace(hi @ hi).real
    return float(2.0 / n * (tr1 - abs(w) ** 2 * tr2))


def dpsi_dm(z, w, m):
    """Wirtinger gradients in the matrix entries.

    Returns ``(d_m, d_mbar)`` with ``d_m[j, k] = d psi / d m_jk`` and
    ``d_mbar[j, k] = d psi / d conj(m_jk)``.
    """
    m = as_matrix(m)
    n = m.shape[0]
    hi = _hinv(z, w, m)
    shifted = m - z * np.eye(n)
    d_m = (hi @ shifted.conj().T).T / (2 * n)
    d_mbar = (shifted @ hi) / (2 * n)
    return d_m, d_mbar


def m_laplacian_identity(z, w, m):
    """Both sides of ``sum_jk d^2 psi / (dm_jk dconj(m_jk)) = 2n |dpsi/dw|^2``.

    The left side is accumulated entry by entry from the second Wirtinger
    derivative ``(1/2n)[(hhat^-1)_kk - ((m-z) hhat^-1 (m-z)^H)_jj (hhat^-1)_kk]``;
    the right side comes from ``dpsi_dw``.
    """
    m = as_matrix(m)
    n = m.shape[0]
    hi = _hinv(z, w, m)
    shifted = m - z * np.eye(n)
    g = shifted @ hi @ shifted.conj().T
    hk = np.diag(hi).real
    gj = np.diag(g).real
    lhs = float(np.sum(hk[None, :] - gj[:, None] * hk[None, :]) / (2 * n))
    rhs = float(2 * n * abs(dpsi_dw(z, w, m)) ** 2)
    return lhs, rhs


def lap_z_step(w):
    return max(1e-5, abs(w) / 100)


def lap_z_psi(z, w, m, h=None):
    """5-point finite-difference Laplacian of psi in z."""
    h = lap_z_step(w) if h is None else h
    acc = psi(z + h, w, m) + psi(z - h, w, m) + psi(z + 1j * h, w, m) + psi(z - 1j * h, w, m)
    return (acc - 4 * psi(z, w, m)) / h**2


def lap_z_psi_closed(z, w, m):
    """Closed-form Laplacian in z, ``4 d_z d_zbar psi``::

        (2/n)[Tr hhat^-1 - Tr(hhat^-1 (m-z)^H hhat^-1 (m-z))]

    Used as an oracle for the difference scheme.
    """
    m = as_matrix(m)
    n = m.shape[0]
    hi = _hinv(z, w, m)
    shifted = m - z * np.eye(n)
    inner = np.trace(hi @ shifted.conj().T @ hi @ shifted).real
    return float(2.0 / n * (np.trace(hi).real - inner))


def mu_densities(z, w, m):
    """Densities of the regularized eigenvalue and overlap measures at ``z``.

    ``mu_lambda = lap_z psi / (2 pi)`` by finite differences; ``mu_overlap
    = (4/pi)|dpsi/dw|^2``.
    """
    mu_lambda = lap_z_psi(z, w, m) / (2 * math.pi)
    mu_overlap = 4 / math.pi * abs(dpsi_dw(z, w, m)) ** 2
    return float(mu_lambda), float(mu_overlap)


def spde_coefficients(z, w, m):
    """Drift and quadratic-variation rates of psi, and the drift of fk_det.

    Returns ``(psi_drift, psi_qv, fk_drift)`` with ``psi_drift =
    2|dpsi/dw|^2``, ``psi_qv = lap_w psi / (4 n^2)`` and ``fk_drift =
    (1/2n)(d_w d_wbar D + 3 |d_w D|^2 / D)`` where ``D = exp(n psi)``.
    """
    m = as_matrix(m)
    n = m.shape[0]
    p = psi(z, w, m)
    g = dpsi_dw(z, w, m)
    lap = lap_w_psi(z, w, m)
    det = math.exp(n * p)
    d_w = n * det * g
    d_w_wbar = n * det * (lap / 4 + n * abs(g) ** 2)
    fk_drift = (d_w_wbar + 3 * abs(d_w) ** 2 / det) / (2 * n)
    return 2 * abs(g) ** 2, lap / (4 * n**2), float(fk_drift)


def psi_martingale_increment(z, w, m, dm):
    """First-order change of psi along ``dm``::

        (1/2n){Tr[hhat^-1 (m-z)^H dM] + Tr[(m-z) hhat^-1 dM^H]}
    """
    m = as_matrix(m)
    n = m.shape[0]
    hi = _hinv(z, w, m)
    shifted = m - z * np.eye(n)
    dm = np.asarray(dm, dtype=np.complex128)
    val = np.trace(hi @ shifted.conj().T @ dm) + np.trace(shifted @ hi @ dm.conj().T)
    return float(val.real / (2 * n))


def fk_martingale_increment(z, w, m, dm):
    """First-order change of fk_det along ``dm`` from its entry gradients."""
    m = as_matrix(m)
    n = m.shape[0]
    det = fk_det(z, w, m)
    d_m, d_mbar = dpsi_dm(z, w, m)
    dm = np.asarray(dm, dtype=np.complex128)
    val = n * det * (np.sum(d_m * dm) + np.sum(d_mbar * dm.conj()))
    return float(val.real)


@dataclass(frozen=True)
class FieldSample:
    z: complex
    w: complex
    psi: float
    fk_det: float
    dpsi_dw: complex
    lap_w_psi: float
    mu_lambda: float
    mu_overlap: float


def field_sample(z, w, m):
    m = as_matrix(m)
    p = psi(z, w, m)
    mu_l, mu_o = mu_densities(z, w, m)
    return FieldSample(complex(z), complex(w), p, math.exp(m.shape[0] * p), dpsi_dw(z, w, m),
                       lap_w_psi(z, w, m), mu_l, mu_o)


# ---- vectorized evaluators ---------------------------------------------------

def _gram_stack(shifted, w):
    n = shifted.shape[-1]
    h = np.swapaxes(shifted.conj(), -1, -2) @ shifted + abs(w) ** 2 * np.eye(n)
    return 0.5 * (h + np.swapaxes(h.conj(), -1, -2))


def _logdet_stack(h):
    try:
        chol = np.linalg.cholesky(h)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    return 2.0 * np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1).real), axis=-1)


def psi_batch(z, w, ms):
    """psi at one ``(z, w)`` for a stack of matrices ``(B, n, n)``."""
    _check_w(w)
    ms = np.asarray(ms, dtype=np.complex128)
    n = ms.shape[-1]
    return _logdet_stack(_gram_stack(ms - z * np.eye(n), w)) / (2 * n)


def psi_grid(zs, w, m):
    """psi at an array of points for one matrix."""
    _check_w(w)
    m = as_matrix(m)
    n = m.shape[0]
    zs = np.asarray(zs, dtype=np.complex128)
    flat = zs.reshape(-1)
    out = np.empty(flat.shape[0])
    for lo in range(0, flat.shape[0], 65536):
        chunk = flat[lo:lo + 65536]
        shifted = m[None, :, :] - chunk[:, None, None] * np.eye(n)
        out[lo:lo + 65536] = _logdet_stack(_gram_stack(shifted, w)) / (2 * n)
    return out.reshape(zs.shape)


def trace_hinv_grid(zs, w, m):
    """``Tr hhat^-1`` at an array of points for one matrix."""
    _check_w(w)
    m = as_matrix(m)
    n = m.shape[0]
    zs = np.asarray(zs, dtype=np.complex128)
    flat = zs.reshape(-1)
    out = np.empty(flat.shape[0])
    for lo in range(0, flat.shape[0], 65536):
        chunk = flat[lo:lo + 65536]
        shifted = m[None, :, :] - chunk[:, None, None] * np.eye(n)
        h = _gram_stack(shifted, w)
        out[lo:lo + 65536] = np.trace(np.linalg.inv(h), axis1=-2, axis2=-1).real
    return out.reshape(zs.shape)


def mu_densities_grid(zs, w, m):
    """Vectorized ``mu_densities`` over an array of points."""
    m = as_matrix(m)
    n = m.shape[0]
    zs = np.asarray(zs, dtype=np.complex128)
    h = lap_z_step(w)
    acc = sum(psi_grid(zs + d, w, m) for d in (h, -h, 1j * h, -1j * h))
    lap = (acc - 4 * psi_grid(zs, w, m)) / h**2
    g = abs(w) * trace_hinv_grid(zs, w, m) / (2 * n)
    return lap / (2 * math.pi), 4 / math.pi * g**2


def field_grid(m, xs, ys, w_sequence, t=0.0):
    """Field samples on the tensor grid ``xs x ys`` for each ``w``.

    Returns a list of row dicts in CSV column order.
    """
    m = as_matrix(m)
    n = m.shape[0]
    w_sequence = [complex(w) for w in w_sequence]
    mods = [abs(w) for w in w_sequence]
    if any(b >= a for a, b in zip(mods, mods[1:])) or min(mods) <= 0:
        raise ValueError("w moduli must be positive and strictly decreasing")
    zz = (np.asarray(xs)[None, :] + 1j * np.asarray(ys)[:, None]).reshape(-1)
    if zz.size == 0:
        raise ValueError("empty grid")
    rows = []
    for w in w_sequence:
        p = psi_grid(zz, w, m)
        tr = trace_hinv_grid(zz, w, m)
        g = np.conj(w) * tr / (2 * n)
        mu_l, mu_o = mu_densities_grid(zz, w, m)
        for i, z in enumerate(zz):
            rows.append({
                "t": t, "re_z": z.real, "im_z": z.imag, "re_w": w.real, "im_w": w.imag,
                "psi": p[i], "fk_det": math.exp(n * p[i]),
                "re_dpsi_dw": g[i].real, "im_dpsi_dw": g[i].imag,
                "mu_lambda": mu_l[i], "mu_overlap": mu_o[i],
            })
    return rows


# ---- w -> 0 limits ------------------------------------------------------------

def check_grid_resolution(xs, ys, atoms, w):
    """Raise GridTooCoarse if a tensor grid is coarser than ``|w|/4``
    anywhere within ``10|w|`` of an atom."""
    r = abs(w)
    for axis_nodes, coords in ((np.asarray(xs), np.real(atoms)), (np.asarray(ys), np.imag(atoms))):
        steps = np.diff(axis_nodes)
        mids = 0.5 * (axis_nodes[1:] + axis_nodes[:-1])
        for c in coords:
            near = np.abs(mids - c) <= 10 * r + 0.5 * np.abs(steps)
            if np.any(steps[near] > r / 4):
                raise GridTooCoarse(f"grid step {steps[near].max():.3e} > |w|/4 = {r / 4:.3e} near atom")


def _bump(s):
    """Smooth step: 1 for s <= 0, 0 for s >= 1."""
    s = np.clip(s, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(s < 1, np.exp(-1.0 / np.maximum(1 - s, 1e-300)), 0.0)
        b = np.where(s > 0, np.exp(-1.0 / np.maximum(s, 1e-300)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class Quadrature:
    nodes: np.ndarray
    weights: np.ndarray


def atom_quadrature(atoms, w, extent, gl_order=8, n_angles=64):
    """Nodes and weights resolving the regularized peaks at each atom.

    A smooth partition of unity splits the plane into polar patches around
    the atoms (graded Gauss-Legendre panels in radius down to ``|w|/8``,
    trapezoid in angle) and a Cartesian trapezoid remainder on
    ``[-extent, extent]^2`` shifted to the atoms' centroid.
    """
    atoms = np.asarray(atoms, dtype=np.complex128)
    r = abs(w)
    k = atoms.shape[0]
    if k > 1:
        dist = np.abs(atoms[:, None] - atoms[None, :]) + np.diag(np.full(k, np.inf))
        radii = np.minimum(0.5, 0.3 * dist.min(axis=1))
    else:
        radii = np.array([0.5])
    gl_x, gl_w = np.polynomial.legendre.leggauss(gl_order)
    theta = 2 * np.pi * np.arange(n_angles) / n_angles
    nodes, weights = [], []
    for a, rho in zip(atoms, radii):
        breaks = [0.0]
        edge = min(r / 8, rho / 64)
        while edge < rho:
            breaks.append(edge)
            edge *= 2
        breaks.append(rho)
        for lo, hi in zip(breaks[:-1], breaks[1:]):
            rad = 0.5 * (hi - lo) * gl_x + 0.5 * (hi + lo)
            rw = 0.5 * (hi - lo) * gl_w
            chi = _bump((rad - rho / 2) / (rho / 2))
            pts = a + rad[:, None] * np.exp(1j * theta)[None, :]
            wts = (rw * rad * chi)[:, None] * np.full(n_angles, 2 * np.pi / n_angles)[None, :]
            nodes.append(pts.ravel())
            weights.append(wts.ravel())
    h = radii.min() / 8
    centre = atoms.mean()
    half = int(math.ceil(extent / h))
    ax = h * np.arange(-half, half + 1)
    grid = (centre.real + ax)[None, :] + 1j * (centre.imag + ax)[:, None]
    grid = grid.ravel()
    rest = np.ones(grid.shape[0])
    for a, rho in zip(atoms, radii):
        rest -= _bump((np.abs(grid - a) - rho / 2) / (rho / 2))
    keep = rest > 0
    nodes.append(grid[keep])
    weights.append(rest[keep] * h * h)
    return Quadrature(np.concatenate(nodes), np.concatenate(weights))


@dataclass(frozen=True)
class PairingLimit:
    w_moduli: list
    xi_pairings: list
    theta_pairings: list
    xi_exact: complex
    theta_exact: complex

    @property
    def xi_limit(self):
        return self.xi_pairings[-1]

    @property
    def theta_limit(self):
        return self.theta_pairings[-1]

    @property
    def xi_errors(self):
        return [abs(p - self.xi_exact) for p in self.xi_pairings]

    @property
    def theta_errors(self):
        return [abs(p - self.theta_exact) for p in self.theta_pairings]


def _phi_values(phi, zs):
    vals = np.asarray(phi(zs), dtype=np.complex128)
    if vals.shape != zs.shape:
        vals = np.broadcast_to(vals, zs.shape)
    return vals


def pairing_limit_w0(m, phi, w_sequence=(1e-1, 1e-2, 1e-3), extent=6.0, grid=None):
    """Integrate both regularized measures against ``phi`` along ``w -> 0``.

    Parameters
    ----------
    phi : callable
        Vectorized test function of a complex array.
    extent : float
        Half-width of the square covering the support of ``phi``.
    grid : (xs, ys), optional
        Tensor grid with trapezoid weights instead of the atom-adapted
        quadrature; checked for resolution.

    Returns
    -------
    PairingLimit
        Pairings per ``w`` (the last is the limit estimate) and the exact
        atomic values.

    Raises
    ------
    GridTooCoarse
        If a supplied grid does not resolve ``|w|`` near the atoms.
    """
    m = as_matrix(m)
    frame = build_frame(m)
    xi, theta = empirical_measures(frame)
    mods = [abs(w) for w in w_sequence]
    if any(b >= a for a, b in zip(mods, mods[1:])) or min(mods) <= 0:
        raise ValueError("w moduli must be positive and strictly decreasing")
    xi_p, th_p = [], []
    for w in w_sequence:
        if grid is not None:
            xs, ys = (np.asarray(g, dtype=float) for g in grid)
            check_grid_resolution(xs, ys, frame.lam, w)
            wx = np.gradient(xs) if xs.size > 1 else np.ones(1)
            wy = np.gradient(ys) if ys.size > 1 else np.ones(1)
            quad = Quadrature((xs[None, :] + 1j * ys[:, None]).ravel(), (wy[:, None] * wx[None, :]).ravel())
        else:
            quad = atom_quadrature(frame.lam, w, extent)
        mu_l, mu_o = mu_densities_grid(quad.nodes, w, m)
        vals = _phi_values(phi, quad.nodes) * quad.weights
        xi_p.append(complex(np.sum(vals * mu_l)))
        th_p.append(complex(np.sum(vals * mu_o)))
    return PairingLimit(mods, xi_p, th_p, pairing(xi, phi), pairing(theta, phi))
