"""Verification suites behind ``nhbm verify``.

Each suite returns report rows ``{observable, predicted, estimate,
std_error, z_score, pass}``. Statistical rows report rates per unit time.
Deterministic rows put the tolerance in ``std_error``, the residual in
``estimate`` and pass when ``residual <= tolerance``.
"""
import math

import numpy as np

from . import field
from .errors import DegenerateSpectrum
from .frame import build_frame, frame_diagnostics, gauge_transform
from .sde import MomentEstimate, Observable, lambda_covariation_test, one_step_moment_test, verification_row


def tolerance_row(label, residual, tol):
    residual = float(residual)
    return {
        "observable": label,
        "predicted": [0.0, 0.0],
        "estimate": [residual, 0.0],
        "std_error": float(tol),
        "z_score": residual / tol if tol > 0 else math.inf,
        "pass": bool(residual <= tol),
    }


def random_ginibre(rng, n):
    return (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / math.sqrt(2 * n)


def _frame_rows(prefix, m, rng):
    frame = build_frame(m)
    rows = [tolerance_row(f"{prefix}:{name}", value, tol)
            for name, (value, tol, _) in frame_diagnostics(frame, m).items()]
    c = rng.uniform(0.1, 10, frame.n) * np.exp(2j * math.pi * rng.uniform(size=frame.n))
    moved = gauge_transform(frame, c)
    rows.append(tolerance_row(f"{prefix}:gauge_invariance", np.abs(moved.overlap - frame.overlap).max(), 1e-10))
    return rows


def frames_suite(m0, seed=0, n_random=20):
    """Frame invariants at ``m0`` (when simple) and at random matrices."""
    rng = np.random.default_rng([seed, 101])
    rows = []
    try:
        rows += _frame_rows("frames:m0", m0, rng)
    except DegenerateSpectrum:
        pass
    n = m0.shape[0]
    worst = {}
    for _ in range(n_random):
        for row in _frame_rows(f"frames:random{n}", random_ginibre(rng, n), rng):
            if row["observable"] not in worst or row["z_score"] > worst[row["observable"]]["z_score"]:
                worst[row["observable"]] = row
    return rows + list(worst.values())


def _scaled_row(obs, est, predicted, dt):
    rate_est = MomentEstimate(est.value / dt, est.std_error / dt, est.n_samples)
    return verification_row(obs.label, predicted / dt, rate_est)


def sde_suite(m, samples=100000, dt=1e-6, seed=0, indices=None):
    """One-step Monte Carlo checks of eigenvalue and overlap laws at ``m``."""
    n = m.shape[0]
    if indices is None:
        indices = [(j, k) for j in range(n) for k in range(n)]
    rows = []
    cov, hol, predicted = lambda_covariation_test(m, dt, samples, seed=seed)
    for j, k in indices:
        rows.append(_scaled_row(Observable("lambda_cov", j, k), cov[j, k], predicted[j, k], dt))
    for j, k in indices:
        rows.append(_scaled_row(Observable("lambda_hol", j, k), hol[j, k], 0.0, dt))
    for kind in ["overlap_drift", "overlap_qv", "overlap_qv_linearized", "overlap_martingale"]:
        for j, k in indices:
            obs = Observable(kind, j, k)
            est, predicted, _ = one_step_moment_test(m, dt, samples, obs, seed=seed)
            rows.append(_scaled_row(obs, est, predicted, dt))
    return rows


def spde_suite(m, points, samples=100000, dt=1e-5, seed=0):
    """Drift and quadratic variation of psi at each ``(z, w)`` point."""
    rows = []
    for z, w in points:
        for kind in ("psi_drift", "psi_qv"):
            obs = Observable(kind, z=complex(z), w=complex(w))
            est, predicted, _ = one_step_moment_test(m, dt, samples, obs, seed=seed)
            rows.append(_scaled_row(obs, est, predicted, dt))
    return rows


def _rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def fd_laplacian(f, x, h):
    """Fourth-order central-difference Laplacian of ``f`` at complex ``x``."""
    acc = -30 * f(x) * 2
    for d in (h, 1j * h):
        acc += 16 * (f(x + d) + f(x - d)) - (f(x + 2 * d) + f(x - 2 * d))
    return acc / (12 * h * h)


def derivative_residuals(z, w, m, h=1e-5):
    """Relative errors of the closed-form derivatives against central
    differences, and the relative mismatch of the m-Laplacian identity."""
    n = m.shape[0]
    f = lambda ww: field.psi(z, ww, m)
    d_re = (f(w + h) - f(w - h)) / (2 * h)
    d_im = (f(w + 1j * h) - f(w - 1j * h)) / (2 * h)
    out = {"dpsi_dw": _rel(field.dpsi_dw(z, w, m), 0.5 * (d_re - 1j * d_im))}
    lap = fd_laplacian(f, w, 1e-3)
    out["lap_w_psi"] = _rel(field.lap_w_psi(z, w, m), lap)
    d_m, d_mbar = field.dpsi_dm(z, w, m)
    worst_m = worst_mbar = 0.0
    scale = max(np.abs(d_m).max(), 1e-300)
    for j in range(n):
        for k in range(n):
            e = np.zeros((n, n), dtype=complex)
            e[j, k] = 1
            g = lambda dm: field.psi(z, w, m + dm)
            a = (g(h * e) - g(-h * e)) / (2 * h)
            b = (g(1j * h * e) - g(-1j * h * e)) / (2 * h)
            worst_m = max(worst_m, abs(d_m[j, k] - 0.5 * (a - 1j * b)) / scale)
            worst_mbar = max(worst_mbar, abs(d_mbar[j, k] - 0.5 * (a + 1j * b)) / scale)
    out["dpsi_dm"] = worst_m
    out["dpsi_dmbar"] = worst_mbar
    lhs, rhs = field.m_laplacian_identity(z, w, m)
    out["m_laplacian"] = _rel(lhs, rhs)
    return out


def fk_suite(m, seed=0, n_points=10, w_sequence=(1e-1, 1e-2, 1e-3)):
    """Derivative identities, determinant properties and w -> 0 limits."""
    rng = np.random.default_rng([seed, 202])
    n = m.shape[0]
    tol = {"dpsi_dw": 1e-6, "lap_w_psi": 1e-6, "dpsi_dm": 1e-6, "dpsi_dmbar": 1e-6, "m_laplacian": 1e-12}
    worst = dict.fromkeys(tol, 0.0)
    for _ in range(n_points):
        z = complex(*rng.normal(size=2))
        w = complex(*rng.normal(size=2))
        for key, val in derivative_residuals(z, w, m).items():
            worst[key] = max(worst[key], val)
    rows = [tolerance_row(f"fk:{key}", worst[key], tol[key]) for key in tol]
    rows.append(tolerance_row("fk:det_identity", abs(field.fk_det(0, 1e-9, np.eye(n)) - 1), 1e-8))
    g = random_ginibre(rng, n) + 2 * np.eye(n)
    rows.append(tolerance_row("fk:det_modulus", _rel(field.fk_det(0, 1e-9, g), abs(np.linalg.det(g))), 1e-8))
    c = complex(*rng.normal(size=2))
    rows.append(tolerance_row("fk:det_scaling",
                              _rel(field.fk_det(0, 1e-9, c * g), abs(c) ** n * field.fk_det(0, 1e-9, g)), 1e-8))
    if n <= 3:
        phi = lambda zz: np.exp(-np.abs(zz) ** 2)
        try:
            res = field.pairing_limit_w0(m, phi, w_sequence)
        except DegenerateSpectrum:
            return rows
        for name, errs in (("xi", res.xi_errors), ("theta", res.theta_errors)):
            monotone = all(b < a for a, b in zip(errs, errs[1:]))
            rows.append(tolerance_row(f"fk:pairing_{name}_final_error", errs[-1], 1e-2))
            rows.append(tolerance_row(f"fk:pairing_{name}_monotone", 0.0 if monotone else 1.0, 0.5))
    return rows
