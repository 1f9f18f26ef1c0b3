"""Dense linear-algebra kernels (sizes up to ~32x32).

Every function here is numba-compatible and gets ``@njit`` applied unless the
fallback path is selected (see :mod:`buckcert._accel`).  Kernels never raise:
they return status flags that the public wrappers in :mod:`buckcert.numerics`
turn into exceptions.
"""

import numpy as np

from ._accel import NUMBA_ENABLED, maybe_njit

# Pade-13 numerator coefficients for the matrix exponential (Higham 2005).
_PADE13 = np.array([
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0,
    670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
    960960.0, 16380.0, 182.0, 1.0])
_PADE13_THETA = 5.371920351148152


@maybe_njit
def lu_factor(a, pivot_rel):
    """LU with partial pivoting.  Returns (lu, piv, ok).

    ok is False when a pivot falls below pivot_rel times the largest
    absolute entry of the input (singular to working precision).
    """
    n = a.shape[0]
    lu = a.copy()
    piv = np.empty(n, dtype=np.int64)
    scale = 0.0
    for i in range(n):
        for j in range(n):
            v = abs(a[i, j])
            if v > scale:
                scale = v
    ok = True
    for k in range(n):
        p = k
        big = abs(lu[k, k])
        for i in range(k + 1, n):
            v = abs(lu[i, k])
            if v > big:
                big = v
                p = i
        piv[k] = p
        if p != k:
            for j in range(n):
                tmp = lu[k, j]
                lu[k, j] = lu[p, j]
                lu[p, j] = tmp
        if big <= pivot_rel * scale or big == 0.0:
            ok = False
            lu[k, k] = 1.0  # keep factorization finite; caller rejects
        pk = lu[k, k]
        for i in range(k + 1, n):
            lu[i, k] /= pk
            m = lu[i, k]
            for j in range(k + 1, n):
                lu[i, j] -= m * lu[k, j]
    return lu, piv, ok


@maybe_njit
def lu_solve(lu, piv, b):
    """Solve with a factorization from lu_factor; b is (n, k)."""
    n = lu.shape[0]
    k = b.shape[1]
    x = b.copy()
    for col in range(k):
        for i in range(n):
            p = piv[i]
            if p != i:
                tmp = x[i, col]
                x[i, col] = x[p, col]
                x[p, col] = tmp
        for i in range(1, n):
            s = x[i, col]
            for j in range(i):
                s -= lu[i, j] * x[j, col]
            x[i, col] = s
        for i in range(n - 1, -1, -1):
            s = x[i, col]
            for j in range(i + 1, n):
                s -= lu[i, j] * x[j, col]
            x[i, col] = s / lu[i, i]
    return x


@maybe_njit
def solve_kernel(a, b, pivot_rel):
    lu, piv, ok = lu_factor(a, pivot_rel)
    if not ok:
        return b.copy(), False
    return lu_solve(lu, piv, b), True


@maybe_njit
def matexp_kernel(a, pivot_rel):
    """Scaling-and-squaring with the degree-13 Pade approximant."""
    n = a.shape[0]
    eye = np.eye(n)
    norm1 = 0.0
    for j in range(n):
        s = 0.0
        for i in range(n):
            s += abs(a[i, j])
        if s > norm1:
            norm1 = s
    s_pow = 0
    if norm1 > _PADE13_THETA:
        s_pow = int(np.ceil(np.log2(norm1 / _PADE13_THETA)))
    m = a / (2.0 ** s_pow)
    m2 = m @ m
    m4 = m2 @ m2
    m6 = m2 @ m4
    b = _PADE13
    u_inner = m6 @ (b[13] * m6 + b[11] * m4 + b[9] * m2)
    u = m @ (u_inner + b[7] * m6 + b[5] * m4 + b[3] * m2 + b[1] * eye)
    v = m6 @ (b[12] * m6 + b[10] * m4 + b[8] * m2) \
        + b[6] * m6 + b[4] * m4 + b[2] * m2 + b[0] * eye
    r, ok = solve_kernel(v - u, u + v, pivot_rel)
    if not ok:
        return eye.copy(), False
    for _ in range(s_pow):
        r = r @ r
    return r, True


@maybe_njit
def cholesky_kernel(a):
    """Lower Cholesky factor; ok=False when the matrix is not PD."""
    n = a.shape[0]
    L = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1):
            s = a[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            if i == j:
                if s <= 0.0 or np.isnan(s):
                    return L, False
                L[i, i] = np.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    return L, True


@maybe_njit
def jacobi_eig_kernel(a, rel_tol, max_sweeps):
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Returns (eigenvalues ascending, eigenvector columns, converged).
    """
    n = a.shape[0]
    s = a.copy()
    v = np.eye(n)
    if n == 1:
        w = np.empty(1)
        w[0] = s[0, 0]
        return w, v, True
    fro = 0.0
    for i in range(n):
        for j in range(n):
            fro += s[i, j] * s[i, j]
    fro = np.sqrt(fro)
    thresh = rel_tol * fro
    converged = fro == 0.0
    for _ in range(max_sweeps):
        off = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                off += s[i, j] * s[i, j]
        off = np.sqrt(2.0 * off)
        if off <= thresh:
            converged = True
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = s[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = 0.5 * (s[q, q] - s[p, p]) / apq
                t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                sn = t * c
                for k in range(n):
                    skp = s[k, p]
                    skq = s[k, q]
                    s[k, p] = c * skp - sn * skq
                    s[k, q] = sn * skp + c * skq
                for k in range(n):
                    spk = s[p, k]
                    sqk = s[q, k]
                    s[p, k] = c * spk - sn * sqk
                    s[q, k] = sn * spk + c * sqk
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - sn * vkq
                    v[k, q] = sn * vkp + c * vkq
    w = np.empty(n)
    for i in range(n):
        w[i] = s[i, i]
    # insertion sort ascending, carrying eigenvector columns
    for i in range(1, n):
        key = w[i]
        col = v[:, i].copy()
        j = i - 1
        while j >= 0 and w[j] > key:
            w[j + 1] = w[j]
            v[:, j + 1] = v[:, j]
            j -= 1
        w[j + 1] = key
        v[:, j + 1] = col
    return w, v, converged


@maybe_njit
def charpoly_kernel(a):
    """Monic characteristic polynomial by the Faddeev-LeVerrier recurrence."""
    n = a.shape[0]
    c = np.empty(n + 1)
    c[0] = 1.0
    mk = np.eye(n)
    for k in range(1, n + 1):
        mk = a @ mk
        tr = 0.0
        for i in range(n):
            tr += mk[i, i]
        ck = -tr / k
        c[k] = ck
        for i in range(n):
            mk[i, i] += ck
    return c


@maybe_njit
def routh_verdict_kernel(c, zero_rel):
    """Routh array verdict for a monic polynomial with coefficients c.

    Returns 1 (all roots strictly left half-plane), 0 (not), or -1 when a
    leading element is numerically zero (marginal / indeterminate).
    """
    n = c.shape[0] - 1
    if n == 0:
        return 1
    cmax = 0.0
    for i in range(n + 1):
        v = abs(c[i])
        if v > cmax:
            cmax = v
    tol = zero_rel * max(1.0, cmax)
    width = (n + 2) // 2 + 1
    table = np.zeros((n + 1, width))
    for j in range(width):
        idx = 2 * j
        if idx <= n:
            table[0, j] = c[idx]
        idx = 2 * j + 1
        if idx <= n and n >= 1:
            table[1, j] = c[idx]
    for i in range(2, n + 1):
        lead = table[i - 1, 0]
        if abs(lead) <= tol:
            return -1
        for j in range(width - 1):
            table[i, j] = (lead * table[i - 2, j + 1]
                           - table[i - 2, 0] * table[i - 1, j + 1]) / lead
    for i in range(n + 1):
        lead = table[i, 0]
        if abs(lead) <= tol:
            return -1
        if lead < 0.0:
            return 0
    return 1


def _affine_orbit_loop(e, w, x0, n):
    """States x_{k+1} = E x_k + w for k = 0..n-1; returns (n+1, m)."""
    m = x0.shape[0]
    out = np.empty((n + 1, m))
    out[0] = x0
    x = x0.copy()
    for k in range(n):
        x = e @ x + w
        out[k + 1] = x
    return out


def _affine_orbit_doubling(e, w, x0, n):
    """Same recursion, vectorised by repeated doubling (fallback path)."""
    m = x0.shape[0]
    out = np.empty((n + 1, m))
    out[0] = x0
    filled = 1
    ek = e.copy()
    sk = w.copy()
    while filled < n + 1:
        take = min(filled, n + 1 - filled)
        out[filled:filled + take] = out[:take] @ ek.T + sk
        filled += take
        if filled < n + 1:
            sk = ek @ sk + sk
            ek = ek @ ek
    return out


if NUMBA_ENABLED:
    affine_orbit = maybe_njit(_affine_orbit_loop)
else:
    affine_orbit = _affine_orbit_doubling


def warmup():
    """Trigger JIT compilation of every kernel on a tiny problem."""
    a = np.array([[-1.0, 0.5], [0.0, -2.0]])
    b = np.eye(2)
    solve_kernel(a, b, 1e-14)
    matexp_kernel(a, 1e-14)
    cholesky_kernel(np.array([[2.0, 0.3], [0.3, 1.0]]))
    jacobi_eig_kernel(np.array([[2.0, 1.0], [1.0, 2.0]]), 1e-14, 30)
    routh_verdict_kernel(charpoly_kernel(a), 1e-13)
    affine_orbit(a, np.zeros(2), np.ones(2), 4)
