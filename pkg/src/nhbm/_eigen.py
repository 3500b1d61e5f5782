"""Compiled eigensolver kernels.

Balancing, Householder reduction to Hessenberg form, single-shift complex
QR iteration to Schur form, and eigenvectors by back-substitution on the
triangular factor. Everything runs in numba so that batches of small
matrices (Monte Carlo) do not pay Python overhead per matrix.
"""
import numpy as np
from numba import njit

EPS = np.finfo(np.float64).eps
SAFE_MIN = np.finfo(np.float64).tiny


@njit(cache=True, nogil=True)
def balance(a):
    """Diagonal similarity scaling by powers of two (in place).

    Returns the scale vector ``d`` such that the balanced matrix equals
    ``D^{-1} A D``. Eigenvectors of the original are ``D @ v``.
    """
    n = a.shape[0]
    d = np.ones(n)
    radix = 2.0
    sqrdx = radix * radix
    for _ in range(200):
        done = True
        for i in range(n):
            c = 0.0
            r = 0.0
            for j in range(n):
                if j != i:
                    c += abs(a[j, i])
                    r += abs(a[i, j])
            if c == 0.0 or r == 0.0:
                continue
            g = r / radix
            f = 1.0
            s = c + r
            while c < g:
                f *= radix
                c *= sqrdx
            g = r * radix
            while c > g:
                f /= radix
                c /= sqrdx
            if (c + r) / f < 0.95 * s:
                done = False
                g = 1.0 / f
                d[i] *= f
                for j in range(n):
                    a[i, j] *= g
                for j in range(n):
                    a[j, i] *= f
        if done:
            break
    return d


@njit(cache=True, nogil=True)
def hessenberg(h, q):
    """Householder reduction of ``h`` to upper Hessenberg form (in place).

    ``q`` accumulates the unitary transform, ``A = Q H Q^H``.
    """
    n = h.shape[0]
    v = np.empty(n, dtype=np.complex128)
    for k in range(n - 2):
        alpha = 0.0
        for i in range(k + 1, n):
            alpha += h[i, k].real ** 2 + h[i, k].imag ** 2
        alpha = np.sqrt(alpha)
        if alpha == 0.0:
            continue
        x0 = h[k + 1, k]
        ax0 = abs(x0)
        phase = x0 / ax0 if ax0 > 0.0 else 1.0 + 0.0j
        m = n - k - 1
        for i in range(m):
            v[i] = h[k + 1 + i, k]
        v[0] += phase * alpha
        vn2 = 0.0
        for i in range(m):
            vn2 += v[i].real ** 2 + v[i].imag ** 2
        beta = 2.0 / vn2
        # left: rows k+1.., all columns from k
        for j in range(k, n):
            acc = 0.0j
            for i in range(m):
                acc += np.conj(v[i]) * h[k + 1 + i, j]
            acc *= beta
            for i in range(m):
                h[k + 1 + i, j] -= v[i] * acc
        # right: columns k+1.., all rows
        for i in range(n):
            acc = 0.0j
            for jj in range(m):
                acc += h[i, k + 1 + jj] * v[jj]
            acc *= beta
            for jj in range(m):
                h[i, k + 1 + jj] -= acc * np.conj(v[jj])
        for i in range(n):
            acc = 0.0j
            for jj in range(m):
                acc += q[i, k + 1 + jj] * v[jj]
            acc *= beta
            for jj in range(m):
                q[i, k + 1 + jj] -= acc * np.conj(v[jj])
        h[k + 1, k] = -phase * alpha
        for i in range(k + 2, n):
            h[i, k] = 0.0


@njit(cache=True, nogil=True)
def schur_qr(h, z, max_sweeps):
    """Shifted complex QR iteration on a Hessenberg matrix (in place).

    On success ``h`` is upper triangular and ``z`` has absorbed the
    transformations. Returns the number of sweeps used, or -1 when the
    budget is exhausted.
    """
    n = h.shape[0]
    hnorm = 0.0
    for i in range(n):
        for j in range(n):
            hnorm = max(hnorm, abs(h[i, j]))
    if hnorm == 0.0:
        return 0
    ihi = n - 1
    sweeps = 0
    its = 0
    while ihi > 0:
        l = ihi
        while l > 0:
            s = abs(h[l - 1, l - 1]) + abs(h[l, l])
            if s == 0.0:
                s = hnorm
            if abs(h[l, l - 1]) <= EPS * s:
                h[l, l - 1] = 0.0
                break
            l -= 1
        if l == ihi:
            ihi -= 1
            its = 0
            continue
        if sweeps >= max_sweeps:
            return -1
        sweeps += 1
        its += 1
        if its % 10 == 0:
            # exceptional shift to break cycles
            mu = h[ihi, ihi] + 0.75 * abs(h[ihi, ihi - 1])
        else:
            a = h[ihi - 1, ihi - 1]
            b = h[ihi - 1, ihi]
            c = h[ihi, ihi - 1]
            d = h[ihi, ihi]
            half = 0.5 * (a + d)
            disc = np.sqrt(0.25 * (a - d) * (a - d) + b * c)
            mu1 = half + disc
            mu2 = half - disc
            mu = mu1 if abs(mu1 - d) <= abs(mu2 - d) else mu2
        x = h[l, l] - mu
        y = h[l + 1, l]
        for k in range(l, ihi):
            if k > l:
                x = h[k, k - 1]
                y = h[k + 1, k - 1]
            ax = abs(x)
            ay = abs(y)
            if ay == 0.0:
                continue
            if ax == 0.0:
                cs = 0.0
                sn = np.conj(y) / ay
            else:
                nrm = np.hypot(ax, ay)
                cs = ax / nrm
                sn = (x / ax) * np.conj(y) / nrm
            j0 = k - 1 if k > l else k
            for j in range(j0, n):
                t1 = h[k, j]
                t2 = h[k + 1, j]
                h[k, j] = cs * t1 + sn * t2
                h[k + 1, j] = -np.conj(sn) * t1 + cs * t2
            i1 = min(k + 2, ihi)
            for i in range(i1 + 1):
                t1 = h[i, k]
                t2 = h[i, k + 1]
                h[i, k] = cs * t1 + np.conj(sn) * t2
                h[i, k + 1] = -sn * t1 + cs * t2
            for i in range(n):
                t1 = z[i, k]
                t2 = z[i, k + 1]
                z[i, k] = cs * t1 + np.conj(sn) * t2
                z[i, k + 1] = -sn * t1 + cs * t2
            if k > l:
                h[k + 1, k - 1] = 0.0
    for i in range(1, n):
        for j in range(i):
            h[i, j] = 0.0
    return sweeps


@njit(cache=True, nogil=True)
def triangular_eigvecs(t):
    """Right eigenvectors of an upper triangular matrix (columns)."""
    n = t.shape[0]
    tnorm = 0.0
    for i in range(n):
        for j in range(i, n):
            tnorm = max(tnorm, abs(t[i, j]))
    small = max(EPS * tnorm, SAFE_MIN)
    y = np.zeros((n, n), dtype=np.complex128)
    for k in range(n):
        y[k, k] = 1.0
        lam = t[k, k]
        for j in range(k - 1, -1, -1):
            acc = 0.0j
            for i in range(j + 1, k + 1):
                acc += t[j, i] * y[i, k]
            den = t[j, j] - lam
            if abs(den) < small:
                den = small
            y[j, k] = -acc / den
    return y


@njit(cache=True, nogil=True)
def _lex_less(a, b):
    if a.real < b.real:
        return True
    if a.real > b.real:
        return False
    return a.imag < b.imag


@njit(cache=True, nogil=True)
def finish(lam, vecs):
    """Normalize columns, fix their phase, sort lexicographically.

    Returns (lambda, vectors, min_gap).
    """
    n = lam.shape[0]
    for k in range(n):
        nrm = 0.0
        for i in range(n):
            nrm += vecs[i, k].real ** 2 + vecs[i, k].imag ** 2
        nrm = np.sqrt(nrm)
        imax = 0
        amax = -1.0
        for i in range(n):
            av = abs(vecs[i, k])
            if av > amax * (1.0 + 1e-12):
                amax = av
                imax = i
        ph = np.conj(vecs[imax, k]) / (amax * nrm)
        for i in range(n):
            vecs[i, k] *= ph
        vecs[imax, k] = abs(vecs[imax, k])
    order = np.arange(n)
    for i in range(1, n):
        j = i
        while j > 0 and _lex_less(lam[order[j]], lam[order[j - 1]]):
            tmp = order[j]
            order[j] = order[j - 1]
            order[j - 1] = tmp
            j -= 1
    lam_s = np.empty(n, dtype=np.complex128)
    vec_s = np.empty((n, n), dtype=np.complex128)
    for k in range(n):
        lam_s[k] = lam[order[k]]
        for i in range(n):
            vec_s[i, k] = vecs[i, order[k]]
    gap = np.inf
    for j in range(n):
        for k in range(j + 1, n):
            gap = min(gap, abs(lam_s[j] - lam_s[k]))
    return lam_s, vec_s, gap


@njit(cache=True, nogil=True)
def eig_qr(m):
    """Full pipeline for one matrix. Returns (lambda, vectors, min_gap, ok)."""
    n = m.shape[0]
    h = m.copy()
    d = balance(h)
    q = np.eye(n, dtype=np.complex128)
    hessenberg(h, q)
    sweeps = schur_qr(h, q, 40 * n)
    lam = np.empty(n, dtype=np.complex128)
    if sweeps < 0:
        return lam, q, 0.0, False
    for i in range(n):
        lam[i] = h[i, i]
    y = triangular_eigvecs(h)
    v = q @ y
    for i in range(n):
        for k in range(n):
            v[i, k] *= d[i]
    lam_s, vec_s, gap = finish(lam, v)
    return lam_s, vec_s, gap, True


@njit(cache=True, nogil=True)
def eig_qr_batch(ms):
    """Batched ``eig_qr`` over the leading axis."""
    b = ms.shape[0]
    n = ms.shape[1]
    lams = np.empty((b, n), dtype=np.complex128)
    vecs = np.empty((b, n, n), dtype=np.complex128)
    gaps = np.empty(b)
    ok = np.empty(b, dtype=np.bool_)
    for i in range(b):
        lam, v, g, flag = eig_qr(ms[i])
        lams[i] = lam
        vecs[i] = v
        gaps[i] = g
        ok[i] = flag
    return lams, vecs, gaps, ok
