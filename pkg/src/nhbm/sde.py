"""Coefficient formulas of the eigenvalue/overlap SDEs and Monte Carlo checks.

Indices are 0-based. Rates are per unit time.

Drifts are estimated with antithetic pairs, ``(f(M+dM) + f(M-dM))/2 -
f(M)``, which cancels the martingale part exactly; this keeps the standard
error at order ``dt`` so that an ``O(dt)`` drift is resolved with a
moderate number of samples.
"""
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSpectrum, InsufficientSamples
from .field import dpsi_dw, lap_w_psi, psi, psi_batch
from .frame import build_frame, match_permutation
from .linalg import DEFAULT_GAP_TOL, as_matrix, eigen_decompose_batch
from .process import sample_increment, stream

# stream purposes for one-step sampling (disjoint from trajectory streams)
MOMENT_STREAM = 7
RELATION_STREAM = 8


def _check_gap(frame, gap_tol):
    if frame.n > 1 and frame.min_gap < gap_tol:
        raise DegenerateSpectrum(frame.min_gap, gap_tol, frame.t)


def _inverse_gaps(lam, j, conj=False):
    diff = lam[j] - lam
    if conj:
        diff = diff.conj()
    out = np.zeros_like(lam)
    mask = np.arange(lam.shape[0]) != j
    out[mask] = 1.0 / diff[mask]
    return out


def lambda_covariation_formula(frame, j, k):
    """Rate of ``<dL_j, conj(dL_k)>``: ``O_jk / n``."""
    return complex(frame.overlap[j, k] / frame.n)


def overlap_drift_formula(frame, j, k, gap_tol=DEFAULT_GAP_TOL):
    """Drift rate of ``O_jk``::

        (2/n) sum_{l != j, m != k} (O_jk O_lm + O_lk O_jm)
                                   / ((L_j - L_l) conj(L_k - L_m))
    """
    _check_gap(frame, gap_tol)
    o = frame.overlap
    d1 = _inverse_gaps(frame.lam, j)
    d2 = _inverse_gaps(frame.lam, k, conj=True)
    terms = (o[j, k] * o + np.outer(o[:, k], o[j, :])) * np.outer(d1, d2)
    return complex(2.0 / frame.n * terms.sum())


def permanent2(a, b, c, d):
    """Permanent of ``[[a, b], [c, d]]``."""
    return a * d + b * c


def overlap_qv_formula(frame, j, k, gap_tol=DEFAULT_GAP_TOL):
    """Quadratic-variation rate of ``O_jk`` from the permanent expression::

        (O_jk/n) sum_{l != j, m != k} per([[A_kl A_mj, A_kl A_mj + A_kj A_ml],
                                          [Ai_lk Ai_jm, Ai_lk Ai_jm + Ai_jk Ai_lm]])
                                      / ((L_j - L_l) conj(L_k - L_m))
    """
    _check_gap(frame, gap_tol)
    a, ai = frame.a, frame.a_inv
    d1 = _inverse_gaps(frame.lam, j)
    d2 = _inverse_gaps(frame.lam, k, conj=True)
    top_left = np.outer(a[k, :], a[:, j])            # A_kl A_mj
    top_right = top_left + a[k, j] * a.T             # + A_kj A_ml
    bottom_left = np.outer(ai[:, k], ai[j, :])       # Ai_lk Ai_jm
    bottom_right = bottom_left + ai[j, k] * ai       # + Ai_jk Ai_lm
    per = permanent2(top_left, top_right, bottom_left, bottom_right)
    return complex(frame.overlap[j, k] / frame.n * (per * np.outer(d1, d2)).sum())


def overlap_martingale_increment(frame, dm, j, k, gap_tol=DEFAULT_GAP_TOL):
    """Martingale increment of ``O_jk`` for a matrix increment ``dm``.

    With ``X = S^-1 dM S``::

        sum_{l != j} [Ai_jk A_kl X_lj + A_kj Ai_lk X_jl] / (L_j - L_l)
      + sum_{l != k} [Ai_jk A_lj conj(X_lk) + A_kj Ai_jl conj(X_kl)] / conj(L_k - L_l)

    ``dm`` may carry a leading batch axis.
    """
    _check_gap(frame, gap_tol)
    a, ai = frame.a, frame.a_inv
    dm = np.asarray(dm, dtype=np.complex128)
    x = frame.s_inv @ dm @ frame.s
    d1 = _inverse_gaps(frame.lam, j)
    d2 = _inverse_gaps(frame.lam, k, conj=True)
    hol = ai[j, k] * (a[k, :] * d1 * x[..., :, j]).sum(-1) + a[k, j] * (ai[:, k] * d1 * x[..., j, :]).sum(-1)
    anti = (ai[j, k] * (a[:, j] * d2 * x[..., :, k].conj()).sum(-1)
            + a[k, j] * (ai[j, :] * d2 * x[..., k, :].conj()).sum(-1))
    return hol + anti


def overlap_martingale_coefficients(frame, j, k, gap_tol=DEFAULT_GAP_TOL):
    """``(alpha, beta)`` with increment ``sum(alpha*dM) + sum(beta*conj(dM))``."""
    _check_gap(frame, gap_tol)
    a, ai, s, si = frame.a, frame.a_inv, frame.s, frame.s_inv
    d1 = _inverse_gaps(frame.lam, j)
    d2 = _inverse_gaps(frame.lam, k, conj=True)
    u = (d1 * a[k, :]) @ si            # u_a = sum_l d1_l A_kl Si_la
    v = s @ (d1 * ai[:, k])            # v_b = sum_l d1_l Ai_lk S_bl
    alpha = ai[j, k] * np.outer(u, s[:, j]) + a[k, j] * np.outer(si[j, :], v)
    p = (d2 * a[:, j]) @ si.conj()     # sum_l d2_l A_lj conj(Si_la)
    q = s.conj() @ (d2 * ai[j, :])     # sum_l d2_l Ai_jl conj(S_bl)
    beta = ai[j, k] * np.outer(p, s[:, k].conj()) + a[k, j] * np.outer(si[k, :].conj(), q)
    return alpha, beta


def overlap_qv_linearized(frame, j, k, gap_tol=DEFAULT_GAP_TOL):
    """Quadratic-variation rate of ``O_jk`` obtained directly from the
    martingale increment, ``(2/n) sum alpha*beta`` (uses ``E dM_ab^2 = 0``,
    ``E|dM_ab|^2 = dt/n``)."""
    alpha, beta = overlap_martingale_coefficients(frame, j, k, gap_tol)
    return complex(2.0 / frame.n * np.sum(alpha * beta))


@dataclass(frozen=True)
class MomentEstimate:
    value: complex
    std_error: float
    n_samples: int


def estimate_mean(samples):
    """Sample mean with standard error ``sqrt(var Re + var Im)/sqrt(N)``."""
    samples = np.asarray(samples, dtype=np.complex128)
    n = samples.shape[0]
    if n < 2:
        raise InsufficientSamples("need at least two samples")
    mean = np.mean(samples)
    var = np.var(samples.real, ddof=1) + np.var(samples.imag, ddof=1)
    return MomentEstimate(complex(mean), float(math.sqrt(var / n)), n)


def z_score(estimate, predicted):
    diff = abs(estimate.value - predicted)
    if estimate.std_error == 0:
        return 0.0 if diff == 0 else math.inf
    return float(diff / estimate.std_error)


@dataclass(frozen=True)
class Observable:
    """Target of a one-step moment test.

    ``kind`` is one of ``lambda_cov``, ``lambda_hol`` (holomorphic pairing
    ``<dL_j, dL_k>``), ``overlap_drift``, ``overlap_qv``,
    ``overlap_qv_linearized``, ``overlap_martingale``, ``psi_drift``,
    ``psi_qv``. Matrix-index kinds use ``j, k``; psi kinds use ``z, w``.
    """

    kind: str
    j: int = 0
    k: int = 0
    z: complex = 0j
    w: complex = 1 + 0j

    @property
    def label(self):
        if self.kind.startswith("psi"):
            return f"{self.kind}(z={self.z:.4g},w={self.w:.4g})"
        return f"{self.kind}({self.j},{self.k})"


KINDS = {"lambda_cov", "lambda_hol", "overlap_drift", "overlap_qv", "overlap_qv_linearized",
         "overlap_martingale", "psi_drift", "psi_qv"}


def batch_frames(ms, reference):
    """Eigenvalues and overlaps for a stack of perturbed matrices, with
    labels matched to the reference eigenvalues.

    Returns ``(lam, overlap)`` of shapes ``(B, n)`` and ``(B, n, n)``.
    """
    lam, s, _ = eigen_decompose_batch(ms)
    n = lam.shape[1]
    nearest = np.argmin(np.abs(reference[None, :, None] - lam[:, None, :]), axis=2)
    ok = np.all(np.sort(nearest, axis=1) == np.arange(n), axis=1)
    for b in np.flatnonzero(~ok):
        nearest[b] = match_permutation(reference, lam[b])
    rows = np.arange(lam.shape[0])[:, None]
    lam = lam[rows, nearest]
    s = s[rows, :, nearest].transpose(0, 2, 1)
    s_inv = np.linalg.inv(s)
    a = np.swapaxes(s.conj(), 1, 2) @ s
    a_inv = s_inv @ np.swapaxes(s_inv.conj(), 1, 2)
    return lam, a_inv * np.swapaxes(a, 1, 2)


def one_step_samples(m, dt, n_samples, observable, seed=0, gap_tol=DEFAULT_GAP_TOL, chunk=20000):
    """Per-sample values whose mean estimates ``predicted * dt``."""
    m = as_matrix(m)
    n = m.shape[0]
    obs = observable
    frame = None if obs.kind.startswith("psi") else build_frame(m, 0.0, gap_tol)
    out = []
    for c, lo in enumerate(range(0, n_samples, chunk)):
        size = min(chunk, n_samples - lo)
        dm = sample_increment(n, dt, stream(seed, c, 0, MOMENT_STREAM), size=size)
        if obs.kind == "overlap_martingale":
            out.append(overlap_martingale_increment(frame, dm, obs.j, obs.k, gap_tol))
            continue
        if obs.kind.startswith("psi"):
            base = psi(obs.z, obs.w, m)
            plus = psi_batch(obs.z, obs.w, m + dm) - base
            minus = psi_batch(obs.z, obs.w, m - dm) - base
            out.append(0.5 * (plus + minus) if obs.kind == "psi_drift" else 0.5 * (plus**2 + minus**2))
            continue
        lam_p, o_p = batch_frames(m + dm, frame.lam)
        lam_m, o_m = batch_frames(m - dm, frame.lam)
        j, k = obs.j, obs.k
        if obs.kind in ("lambda_cov", "lambda_hol"):
            dl_p = lam_p - frame.lam
            dl_m = lam_m - frame.lam
            if obs.kind == "lambda_cov":
                vals = 0.5 * (dl_p[:, j] * dl_p[:, k].conj() + dl_m[:, j] * dl_m[:, k].conj())
            else:
                vals = 0.5 * (dl_p[:, j] * dl_p[:, k] + dl_m[:, j] * dl_m[:, k])
        else:
            d_p = o_p[:, j, k] - frame.overlap[j, k]
            d_m = o_m[:, j, k] - frame.overlap[j, k]
            if obs.kind == "overlap_drift":
                vals = 0.5 * (d_p + d_m)
            else:
                vals = 0.5 * (d_p**2 + d_m**2)
        out.append(vals)
    return frame, np.concatenate(out)


def predicted_rate(frame, m, observable, gap_tol=DEFAULT_GAP_TOL):
    """Formula value per unit time for an observable at ``m``."""
    obs = observable
    n = m.shape[0]
    if obs.kind == "lambda_cov":
        return lambda_covariation_formula(frame, obs.j, obs.k)
    if obs.kind in ("lambda_hol", "overlap_martingale"):
        return 0j
    if obs.kind == "overlap_drift":
        return overlap_drift_formula(frame, obs.j, obs.k, gap_tol)
    if obs.kind == "overlap_qv":
        return overlap_qv_formula(frame, obs.j, obs.k, gap_tol)
    if obs.kind == "overlap_qv_linearized":
        return overlap_qv_linearized(frame, obs.j, obs.k, gap_tol)
    if obs.kind == "psi_drift":
        return complex(2 * abs(dpsi_dw(obs.z, obs.w, m)) ** 2)
    if obs.kind == "psi_qv":
        return complex(lap_w_psi(obs.z, obs.w, m) / (4 * n**2))
    raise ValueError(f"unknown observable {obs.kind!r}")


def one_step_moment_test(m, dt, n_samples, observable, seed=0, gap_tol=DEFAULT_GAP_TOL):
    """Monte Carlo conditional moment of one step against its formula.

    Returns
    -------
    (MomentEstimate, predicted, z_score)
        ``predicted`` is ``rate * dt``; ``z_score = |estimate - predicted| /
        std_error``.

    Raises
    ------
    InsufficientSamples
        If ``n_samples < 100``.
    """
    if n_samples < 100:
        raise InsufficientSamples(f"n_samples={n_samples} < 100")
    if observable.kind not in KINDS:
        raise ValueError(f"unknown observable {observable.kind!r}")
    frame, vals = one_step_samples(m, dt, n_samples, observable, seed, gap_tol)
    est = estimate_mean(vals)
    predicted = predicted_rate(frame, as_matrix(m), observable, gap_tol) * dt
    return est, predicted, z_score(est, predicted)


def lambda_covariation_test(m, dt, n_samples, seed=0, gap_tol=DEFAULT_GAP_TOL, chunk=20000):
    """All-pairs one-step covariations of the eigenvalues from one draw.

    Returns ``(cov, hol, predicted)``: ``n x n`` arrays of MomentEstimate
    for ``<dL_j, conj(dL_k)>`` and ``<dL_j, dL_k>``, and the predicted
    ``O_jk dt / n`` (the holomorphic prediction is 0).
    """
    if n_samples < 100:
        raise InsufficientSamples(f"n_samples={n_samples} < 100")
    m = as_matrix(m)
    n = m.shape[0]
    frame = build_frame(m, 0.0, gap_tol)
    cov_parts, hol_parts = [], []
    for c, lo in enumerate(range(0, n_samples, chunk)):
        size = min(chunk, n_samples - lo)
        dm = sample_increment(n, dt, stream(seed, c, 0, MOMENT_STREAM), size=size)
        dl = [batch_frames(m + sign * dm, frame.lam)[0] - frame.lam for sign in (1, -1)]
        cov_parts.append(0.5 * sum(d[:, :, None] * d[:, None, :].conj() for d in dl))
        hol_parts.append(0.5 * sum(d[:, :, None] * d[:, None, :] for d in dl))
    cov = np.concatenate(cov_parts)
    hol = np.concatenate(hol_parts)
    cov_est = np.empty((n, n), dtype=object)
    hol_est = np.empty((n, n), dtype=object)
    for j in range(n):
        for k in range(n):
            cov_est[j, k] = estimate_mean(cov[:, j, k])
            hol_est[j, k] = estimate_mean(hol[:, j, k])
    return cov_est, hol_est, frame.overlap * dt / n


def _xi_pairing(lam, phi):
    return np.mean(np.asarray(phi(lam), dtype=np.complex128), axis=-1)


def relation2_one_step(m, phi, lap_phi, dt, n_samples, seed=0, gap_tol=DEFAULT_GAP_TOL):
    """Drift-compensated increment of the eigenvalue pairing, one step.

    Samples ``<Xi(t+dt), phi> - <Xi(t), phi> - dt/(4 n^2) sum_j
    lap_phi(L_j) O_jj`` (antithetic) and returns ``(MomentEstimate,
    z_score)`` against 0. ``phi`` and ``lap_phi`` must be vectorized.
    """
    if n_samples < 100:
        raise InsufficientSamples(f"n_samples={n_samples} < 100")
    m = as_matrix(m)
    n = m.shape[0]
    frame = build_frame(m, 0.0, gap_tol)
    base = _xi_pairing(frame.lam, phi)
    comp = dt / (4 * n**2) * np.sum(np.asarray(lap_phi(frame.lam)) * np.diag(frame.overlap).real)
    dm = sample_increment(n, dt, stream(seed, 0, 0, RELATION_STREAM), size=n_samples)
    lam_p, _, _ = eigen_decompose_batch(m + dm)
    lam_m, _, _ = eigen_decompose_batch(m - dm)
    vals = 0.5 * (_xi_pairing(lam_p, phi) + _xi_pairing(lam_m, phi)) - base - comp
    est = estimate_mean(vals)
    return est, z_score(est, 0.0)


def relation2_test(records, phi, lap_phi):
    """Drift-compensated pairing increments along stored trajectories.

    Uses consecutive frames of each record (stored every step). Returns
    ``(MomentEstimate, z_score)`` of the mean increment against 0.
    """
    vals = []
    for rec in records:
        for prev, cur in zip(rec.frames[:-1], rec.frames[1:]):
            n = prev.n
            h = cur.t - prev.t
            comp = h / (4 * n**2) * np.sum(np.asarray(lap_phi(prev.lam)) * np.diag(prev.overlap).real)
            vals.append(_xi_pairing(cur.lam, phi) - _xi_pairing(prev.lam, phi) - comp)
    est = estimate_mean(np.array(vals))
    return est, z_score(est, 0.0)


def trajectory_drift_ratio(records, j, k, gap_tol=DEFAULT_GAP_TOL):
    """Regression slope of overlap increments on the predicted drift.

    Fits ``dO_jk = beta * drift(frame) * dt + noise`` over all consecutive
    frame pairs; ``beta = 1`` when the printed drift is right. Returns a
    MomentEstimate of ``beta`` (real part).
    """
    x, y = [], []
    for rec in records:
        for prev, cur in zip(rec.frames[:-1], rec.frames[1:]):
            h = cur.t - prev.t
            x.append(overlap_drift_formula(prev, j, k, gap_tol) * h)
            y.append(cur.overlap[j, k] - prev.overlap[j, k])
    x = np.array(x)
    y = np.array(y)
    sxx = np.sum(np.abs(x) ** 2)
    beta = np.sum(y * x.conj()) / sxx
    resid = y - beta * x
    se = math.sqrt(np.sum(np.abs(resid) ** 2 * np.abs(x) ** 2)) / sxx
    return MomentEstimate(complex(beta.real), float(se), len(y))


def verification_row(observable_label, predicted, estimate, threshold=3.0):
    """One entry of the JSON verification report."""
    z = z_score(estimate, predicted)
    return {
        "observable": observable_label,
        "predicted": [float(np.real(predicted)), float(np.imag(predicted))],
        "estimate": [estimate.value.real, estimate.value.imag],
        "std_error": estimate.std_error,
        "z_score": z,
        "pass": bool(z <= threshold),
    }
