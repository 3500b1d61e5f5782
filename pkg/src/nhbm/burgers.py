"""Deterministic densities from the inviscid Burgers equation.

Initial data come from the regularized log-determinant of ``m0``. Writing
the eigenvalues of ``(m0 - z)^H (m0 - z)`` as ``s2`` (one row per node)::

    phi0(z, r)  = (1/2n) sum log(s2 + r^2)
    vhat0(z, r) = (r/2n) sum 1/(s2 + r^2)      (= d phi0 / dr / 2)

The solution along characteristics is ``vhat(z, r; t) = vhat0(z, r + 2t
vhat)`` and ``phi(z, r; t) = phi0(z, r0) - 2t vhat0(z, r0)^2`` with ``r0 =
r + 2t vhat``. Densities at time ``t`` are ``rho = lap_z phi(z, 0; t) /
(2 pi)`` and ``overlap = (4/pi) vhat(z, 0; t)^2``.
"""
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import NoRoot, NotPositiveDefinite, NumericError, RemovableSingularity, ShockDetected
from .linalg import as_matrix, inverse, logdet_hpd

RESIDUAL_TOL = 1e-10


def gram_spectrum(zs, m0):
    """Eigenvalues of ``(m0 - z)^H (m0 - z)`` for each node, shape ``(..., n)``."""
    m0 = as_matrix(m0)
    n = m0.shape[0]
    zs = np.asarray(zs, dtype=np.complex128)
    flat = zs.reshape(-1)
    shifted = m0[None, :, :] - flat[:, None, None] * np.eye(n)
    gram = np.swapaxes(shifted.conj(), 1, 2) @ shifted
    s2 = np.clip(np.linalg.eigvalsh(0.5 * (gram + np.swapaxes(gram.conj(), 1, 2))), 0.0, None)
    return s2.reshape(zs.shape + (n,))


def _phi0(s2, r):
    r = np.asarray(r, dtype=float)[..., None]
    return np.sum(np.log(s2 + r * r), axis=-1) / (2 * s2.shape[-1])


def _vhat0(s2, r):
    r = np.asarray(r, dtype=float)[..., None]
    return (r[..., 0] * np.sum(1.0 / (s2 + r * r), axis=-1)) / (2 * s2.shape[-1])


def _dvhat0_dr(s2, r):
    r = np.asarray(r, dtype=float)[..., None]
    d = s2 + r * r
    return np.sum((s2 - r * r) / (d * d), axis=-1) / (2 * s2.shape[-1])


def _gram(z, r, m0):
    m0 = as_matrix(m0)
    n = m0.shape[0]
    shifted = m0 - z * np.eye(n)
    h = shifted.conj().T @ shifted + r * r * np.eye(n)
    return 0.5 * (h + h.conj().T)


def initial_phi(z, r, m0):
    """``log det[(m0-z)^H (m0-z) + r^2] / (2n)``.

    Raises
    ------
    NotPositiveDefinite
        At ``r = 0`` with ``z`` on the spectrum of ``m0``.
    """
    m0 = as_matrix(m0)
    return logdet_hpd(_gram(z, r, m0)) / (2 * m0.shape[0])


def initial_vhat(z, r, m0):
    """``(r/2n) Tr hhat^-1``."""
    m0 = as_matrix(m0)
    if r == 0:
        return 0.0
    return float(r * np.trace(inverse(_gram(z, r, m0))).real / (2 * m0.shape[0]))


def _positive_root_r0(s2, t):
    """Positive fixed point at ``r = 0`` for each node.

    With ``s = 2 t u`` the condition is ``2t g(s) = 1`` where ``g(s) = (1/2n)
    sum 1/(s2 + s^2)`` is strictly decreasing, so the positive root is
    unique and exists iff ``2t g(0) > 1``. Solved by Newton's method
    safeguarded by bisection. Returns ``(u, exists)``.
    """
    n = s2.shape[-1]
    with np.errstate(divide="ignore"):
        g0 = np.sum(1.0 / s2, axis=-1) / (2 * n)
    exists = 2 * t * g0 > 1
    lo = np.zeros(s2.shape[:-1])
    hi = np.full(s2.shape[:-1], math.sqrt(t) * (1 + 1e-12) + 1e-300)
    s = 0.5 * hi
    for _ in range(200):
        d = s2 + (s * s)[..., None]
        h = 2 * t * np.sum(1.0 / d, axis=-1) / (2 * n) - 1
        dh = -2 * t * np.sum(2 * s[..., None] / (d * d), axis=-1) / (2 * n)
        lo = np.where(h > 0, s, lo)
        hi = np.where(h > 0, hi, s)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = s - h / dh
        inside = (newton > lo) & (newton < hi) & np.isfinite(newton)
        s_new = np.where(inside, newton, 0.5 * (lo + hi))
        done = np.abs(s_new - s) <= 1e-15 * np.maximum(s_new, 1e-300)
        s = s_new
        if np.all(done | ~exists):
            break
    u = np.where(exists, s / (2 * t), 0.0)
    return u, exists


def _continuation(s2, r, t, steps, shock_guard):
    """Continuation in ``t' = t k/steps`` for ``r > 0`` (vectorized).

    Each step solves ``F(r0) = r0 - r - 2t' vhat0(r0) = 0`` for the
    characteristic foot ``r0`` by Newton's method safeguarded by bisection
    on ``[previous r0, r + 2t' sup vhat0]``; pre-shock the foot moves
    outward monotonically so this bracket holds the continued root.
    Returns ``u = (r0 - r)/(2t)``.

    Raises
    ------
    ShockDetected
        If ``1 - 2t' d vhat0/dr`` at an accepted root falls below
        ``shock_guard``.
    """
    n = s2.shape[-1]
    sigma = np.sqrt(s2)
    sup_terms = np.where(sigma >= r, 0.5 / np.maximum(sigma, 1e-300), r / (s2 + r * r))
    vsup = np.sum(sup_terms, axis=-1) / (2 * n)
    x = np.full(s2.shape[:-1], float(r))
    for k in range(1, steps + 1):
        tk = t * k / steps
        lo = x.copy()
        hi = r + 2 * tk * vsup * (1 + 1e-12) + 1e-300
        for _ in range(200):
            f = x - r - 2 * tk * _vhat0(s2, x)
            df = 1 - 2 * tk * _dvhat0_dr(s2, x)
            lo = np.where(f < 0, x, lo)
            hi = np.where(f < 0, hi, x)
            with np.errstate(divide="ignore", invalid="ignore"):
                newton = x - f / df
            ok = (newton > lo) & (newton < hi) & np.isfinite(newton)
            x_new = np.where(ok, newton, 0.5 * (lo + hi))
            done = np.abs(x_new - x) <= 1e-15 * np.maximum(x_new, 1e-300)
            x = x_new
            if np.all(done):
                break
        deriv = 1 - 2 * tk * _dvhat0_dr(s2, x)
        if np.any(deriv < shock_guard):
            bad = int(np.flatnonzero((deriv < shock_guard).reshape(-1))[0])
            raise ShockDetected(f"characteristic map derivative below {shock_guard:g} at t={tk:g}",
                                t=tk, z=bad)
    return (x - r) / (2 * t)


@dataclass(frozen=True)
class BurgersSolution:
    """Characteristic solver for one initial matrix.

    Parameters
    ----------
    m0 : array_like
        Initial matrix.
    continuation_steps : int
        Uniform steps in ``t`` for ``r > 0``.
    shock_guard : float
        Minimum allowed ``|1 - 2t d vhat0/dr|``.
    """

    m0: np.ndarray
    continuation_steps: int = 32
    shock_guard: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "m0", as_matrix(self.m0))

    @property
    def n(self):
        return self.m0.shape[0]

    def vhat_nodes(self, s2, r, t):
        """Fixed point for nodes with Gram spectra ``s2``.

        Returns ``(u, in_support)``; nodes without a positive root at
        ``r = 0`` get ``u = 0`` and ``in_support = False``.
        """
        if t <= 0:
            return _vhat0(s2, r), np.ones(s2.shape[:-1], dtype=bool)
        if r == 0:
            u, exists = _positive_root_r0(s2, t)
        else:
            u = _continuation(s2, r, t, self.continuation_steps, self.shock_guard)
            exists = np.ones(u.shape, dtype=bool)
        resid = np.abs(u - _vhat0(s2, r + 2 * t * u))
        if np.any(resid[exists] > RESIDUAL_TOL):
            raise NumericError(f"fixed-point residual {resid[exists].max():.3e} exceeds {RESIDUAL_TOL}")
        return u, exists

    def vhat(self, z, r, t):
        """Scalar fixed point; raises NoRoot outside the support at ``r = 0``."""
        try:
            u, exists = self.vhat_nodes(gram_spectrum(np.array([z]), self.m0), r, t)
        except ShockDetected as exc:
            exc.z = complex(z)
            raise
        if not exists[0]:
            raise NoRoot(f"no positive root at z={z}, t={t}")
        return float(u[0])

    def phi_nodes(self, s2, r, t):
        u, exists = self.vhat_nodes(s2, r, t)
        return _phi0(s2, r + 2 * t * u) - 2 * t * u * u, u, exists

    def phi(self, z, r, t):
        """Potential along characteristics (trivial root off the support)."""
        p, _, _ = self.phi_nodes(gram_spectrum(np.array([z]), self.m0), r, t)
        return float(p[0])

    def densities(self, t, zs, fd_step):
        """``(rho, overlap_density, in_support)`` at nodes ``zs``."""
        zs = np.asarray(zs, dtype=np.complex128)
        h = fd_step
        stencil = [zs, zs + h, zs - h, zs + 1j * h, zs - 1j * h]
        phis = []
        for k, pts in enumerate(stencil):
            p, u, exists = self.phi_nodes(gram_spectrum(pts, self.m0), 0.0, t)
            if k == 0:
                u0, mask = u, exists
            phis.append(p)
        lap = (phis[1] + phis[2] + phis[3] + phis[4] - 4 * phis[0]) / (h * h)
        rho = lap / (2 * math.pi)
        overlap = np.where(mask, 4 / math.pi * u0 * u0, 0.0)
        return rho, overlap, mask


def solve_vhat(z, r, t, m0, **kwargs):
    """Fixed point ``u = vhat0(z, r + 2tu)`` on the physical branch.

    Raises
    ------
    NoRoot
        At ``r = 0`` outside the support.
    ShockDetected
        If characteristics cross during continuation.
    """
    return BurgersSolution(m0, **kwargs).vhat(z, r, t)


def phi_along(z, r, t, m0, **kwargs):
    """``phi0(z, r0) - 2t vhat0(z, r0)^2`` with ``r0 = r + 2t vhat``."""
    return BurgersSolution(m0, **kwargs).phi(z, r, t)


@dataclass(frozen=True)
class DensityField:
    t: float
    xs: np.ndarray
    ys: np.ndarray
    rho: np.ndarray
    overlap_density: np.ndarray
    support_mask: np.ndarray

    @property
    def cell_area(self):
        return float((self.xs[1] - self.xs[0]) * (self.ys[1] - self.ys[0]))

    @property
    def nodes(self):
        return self.xs[None, :] + 1j * self.ys[:, None]

    def mass(self):
        """Riemann sums of ``rho`` and ``overlap_density``."""
        return float(self.rho.sum() * self.cell_area), float(self.overlap_density.sum() * self.cell_area)


def grid_axes(extent, resolution, centre=0j):
    """Uniform square grid ``[-extent, extent]^2`` around ``centre``."""
    if resolution < 2:
        raise ValueError("grid resolution must be at least 2")
    ax = np.linspace(-extent, extent, resolution)
    return centre.real + ax, centre.imag + ax


def density_fields(t, xs, ys, m0, fd_step=None, **kwargs):
    """Eigenvalue and overlap densities on a tensor grid at time ``t``.

    ``fd_step`` defaults to ``min(grid spacing, 1e-4)``.

    Raises
    ------
    ShockDetected
        Propagated from the characteristic solver.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    spacing = min(xs[1] - xs[0], ys[1] - ys[0])
    h = min(spacing, 1e-4) if fd_step is None else fd_step
    zs = xs[None, :] + 1j * ys[:, None]
    rho, overlap, mask = BurgersSolution(m0, **kwargs).densities(t, zs, h)
    return DensityField(float(t), xs, ys, rho, overlap, mask)


def origin_source_closed(t, z):
    """Single source at the origin: ``(rho, overlap, in_support)``."""
    z = np.asarray(z, dtype=np.complex128)
    inside = np.abs(z) ** 2 <= t
    rho = np.where(inside, 1 / (math.pi * t), 0.0)
    overlap = np.where(inside, (t - np.abs(z) ** 2) / (math.pi * t * t), 0.0)
    return rho, overlap, inside


def two_source_closed(t, z, c):
    """Double source at ``c`` and ``-c``: ``(rho, overlap, in_support, flagged)``.

    ``rho`` is the printed closed form; where ``s = conj(z) c + z conj(c)``
    satisfies ``|s| < 1e-6`` it is replaced by its series
    ``(t - |c|^2 + 3|c|^2 s^2/t^2)/(pi t^2)`` and ``flagged`` is set (a
    RemovableSingularity warning is issued).
    """
    z = np.asarray(z, dtype=np.complex128)
    c = complex(c)
    cc = abs(c) ** 2
    zz = np.abs(z) ** 2
    s = (np.conj(z) * c + z * np.conj(c)).real
    root = np.sqrt(t * t + 4 * s * s)
    inside = t * (cc + zz) >= np.abs(c * c - z * z) ** 2
    flagged = np.abs(s) < 1e-6
    with np.errstate(divide="ignore", invalid="ignore"):
        printed = (root * (2 * s * s - t * cc) + t * t * cc) / (2 * math.pi * t * s * s * root)
    series = (t - cc + 3 * cc * s * s / (t * t)) / (math.pi * t * t)
    rho = np.where(flagged, series, printed)
    rho = np.where(inside, rho, 0.0)
    overlap = np.where(inside, (t / 2 - cc - zz + 0.5 * root) / (math.pi * t * t), 0.0)
    flagged = flagged & inside
    if np.any(flagged):
        warnings.warn("closed form evaluated by series near s = 0", RemovableSingularity, stacklevel=2)
    return rho, overlap, inside, flagged


def two_source_rho_stable(t, z, c):
    """Cancellation-free rearrangement of the two-source ``rho`` (no
    singularity at ``s = 0``); an algebraic cross-check of the printed form."""
    z = np.asarray(z, dtype=np.complex128)
    c = complex(c)
    cc = abs(c) ** 2
    s = (np.conj(z) * c + z * np.conj(c)).real
    root = np.sqrt(t * t + 4 * s * s)
    return (2 * root - 4 * t * cc / (t + root)) / (2 * math.pi * t * root)


def interior_mask(mask, margin=2):
    """Nodes whose ``margin``-neighbourhood lies entirely on one side of a
    boolean mask boundary (and away from the grid edge)."""
    mask = np.asarray(mask, dtype=bool)
    ok = np.ones_like(mask)
    ny, nx = mask.shape
    for dy in range(-margin, margin + 1):
        for dx in range(-margin, margin + 1):
            shifted = np.zeros_like(mask)
            ys = slice(max(0, dy), ny + min(0, dy))
            yd = slice(max(0, -dy), ny + min(0, -dy))
            xs = slice(max(0, dx), nx + min(0, dx))
            xd = slice(max(0, -dx), nx + min(0, -dx))
            shifted[yd, xd] = mask[ys, xs]
            same = shifted == mask
            valid = np.zeros_like(mask)
            valid[yd, xd] = True
            ok &= same & valid
    return ok


def continuity_residual(t, xs, ys, m0, dt=1e-3, fd_step=1e-3, margin=2):
    """Residual of ``d rho/dt = lap_z overlap / 4`` at interior nodes.

    ``d rho/dt`` by central differences in time; the Laplacian of the
    overlap density by a 5-point stencil of width ``fd_step`` around each
    node. Returns the residuals at nodes at least ``margin`` grid steps
    from the support boundary at all three times.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    solver = BurgersSolution(m0)
    before = density_fields(t - dt, xs, ys, m0)
    now = density_fields(t, xs, ys, m0)
    after = density_fields(t + dt, xs, ys, m0)
    zs = now.nodes
    h = fd_step
    vals = []
    for pts in (zs, zs + h, zs - h, zs + 1j * h, zs - 1j * h):
        u, exists = solver.vhat_nodes(gram_spectrum(pts, solver.m0), 0.0, t)
        vals.append(np.where(exists, 4 / math.pi * u * u, 0.0))
    lap = (vals[1] + vals[2] + vals[3] + vals[4] - 4 * vals[0]) / (h * h)
    drho = (after.rho - before.rho) / (2 * dt)
    keep = np.ones(zs.shape, dtype=bool)
    for fld in (before, now, after):
        keep &= interior_mask(fld.support_mask, margin)
    return (drho - lap / 4)[keep]
