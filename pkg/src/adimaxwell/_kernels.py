"""
Compiled inner loops: banded LU with partial pivoting, batched fiber solves and
banded operator application along one axis of a rank-3 array.

Factor storage mirrors LAPACK ``gbtrf``: for half-bandwidth ``k`` the array
``ab`` has shape ``(3k+1, n)`` and holds ``A[i, j]`` at ``ab[2k + i - j, j]``;
rows ``0..k-1`` receive the fill-in produced by row interchanges.

Operator storage is row-wise: ``band[i, d] = A[i, i - k + d]``.
"""
import numba as nb
import numpy as np

_opts = {"nogil": True, "cache": True}


@nb.njit(**_opts)
def band_lu(ab, ipiv, k, tol):
    """In-place LU of a band matrix. Returns -1 or the first singular row."""
    n = ab.shape[1]
    kv = 2 * k
    ju = 0
    for j in range(n):
        km = min(k, n - 1 - j)
        jp = 0
        best = abs(ab[kv, j])
        for t in range(1, km + 1):
            v = abs(ab[kv + t, j])
            if v > best:
                best = v
                jp = t
        ipiv[j] = j + jp
        if best <= tol:
            return j
        ju = max(ju, min(j + k + jp, n - 1))
        if jp != 0:
            for c in range(j, ju + 1):
                r0 = kv + j - c
                r1 = r0 + jp
                tmp = ab[r0, c]
                ab[r0, c] = ab[r1, c]
                ab[r1, c] = tmp
        piv = ab[kv, j]
        for t in range(1, km + 1):
            ab[kv + t, j] /= piv
        for c in range(j + 1, ju + 1):
            ujc = ab[kv + j - c, c]
            if ujc != 0.0:
                for t in range(1, km + 1):
                    ab[kv + j + t - c, c] -= ab[kv + t, j] * ujc
    return -1


@nb.njit(**_opts)
def _solve_columns_shared(ab, ipiv, k, b):
    n, m = b.shape
    kv = 2 * k
    for j in range(n - 1):
        p = ipiv[j]
        if p != j:
            for c in range(m):
                tmp = b[p, c]
                b[p, c] = b[j, c]
                b[j, c] = tmp
        for t in range(1, min(k, n - 1 - j) + 1):
            l = ab[kv + t, j]
            row = j + t
            for c in range(m):
                b[row, c] -= l * b[j, c]
    for j in range(n - 1, -1, -1):
        inv = 1.0 / ab[kv, j]
        for c in range(m):
            b[j, c] *= inv
        for i in range(max(0, j - kv), j):
            u = ab[kv + i - j, j]
            if u != 0.0:
                for c in range(m):
                    b[i, c] -= u * b[j, c]


@nb.njit(**_opts)
def band_solve_columns(abs_, ipivs, k, which, b):
    """Solve ``A_{which[c]} x = b[:, c]`` in place for every column ``c``.

    ``abs_``/``ipivs`` stack the factorizations; ``b`` is C-ordered (n, m).
    """
    n, m = b.shape
    kv = 2 * k
    if abs_.shape[0] == 1:
        _solve_columns_shared(abs_[0], ipivs[0], k, b)
        return
    # forward: row interchanges and unit lower factor
    for j in range(n - 1):
        lm = min(k, n - 1 - j)
        for c in range(m):
            f = which[c]
            p = ipivs[f, j]
            if p != j:
                tmp = b[p, c]
                b[p, c] = b[j, c]
                b[j, c] = tmp
        for t in range(1, lm + 1):
            row = j + t
            for c in range(m):
                b[row, c] -= abs_[which[c], kv + t, j] * b[j, c]
    # backward: upper factor with bandwidth 2k
    for j in range(n - 1, -1, -1):
        for c in range(m):
            b[j, c] /= abs_[which[c], kv, j]
        lo = max(0, j - kv)
        for i in range(lo, j):
            r = kv + i - j
            for c in range(m):
                b[i, c] -= abs_[which[c], r, j] * b[j, c]


@nb.njit(**_opts)
def _apply_rows(band, k, U, O):
    """``O = A U`` for C-ordered (n, m) blocks, looping over long rows."""
    n, m = U.shape
    w = 2 * k + 1
    for i in range(n):
        lo = max(0, k - i)
        hi = min(w, n - i + k)
        a = band[i, lo]
        j = i - k + lo
        for c in range(m):
            O[i, c] = a * U[j, c]
        for d in range(lo + 1, hi):
            a = band[i, d]
            j = i - k + d
            for c in range(m):
                O[i, c] += a * U[j, c]


@nb.njit(**_opts)
def _gather_last(u):
    # (n0, n1, n2) -> (n2, n0 * n1), fibers along the last axis become columns
    n0, n1, n2 = u.shape
    t = np.empty((n2, n0 * n1))
    for a in range(n0):
        for b in range(n1):
            col = a * n1 + b
            for c in range(n2):
                t[c, col] = u[a, b, c]
    return t


@nb.njit(**_opts)
def _scatter_last(t, u):
    n0, n1, n2 = u.shape
    for a in range(n0):
        for b in range(n1):
            col = a * n1 + b
            for c in range(n2):
                u[a, b, c] = t[c, col]


@nb.njit(**_opts)
def _gather_middle(u):
    # (n0, n1, n2) -> (n1, n0 * n2)
    n0, n1, n2 = u.shape
    t = np.empty((n1, n0 * n2))
    for a in range(n0):
        for i in range(n1):
            for c in range(n2):
                t[i, a * n2 + c] = u[a, i, c]
    return t


@nb.njit(**_opts)
def _scatter_middle(t, u):
    n0, n1, n2 = u.shape
    for a in range(n0):
        for i in range(n1):
            for c in range(n2):
                u[a, i, c] = t[i, a * n2 + c]


@nb.njit(**_opts)
def band_apply_axis(band, k, u, axis, out):
    """``out = A`` applied along ``axis`` of the rank-3 array ``u``."""
    n0, n1, n2 = u.shape
    if axis == 0:
        _apply_rows(band, k, u.reshape(n0, n1 * n2), out.reshape(n0, n1 * n2))
    elif axis == 1:
        t = _gather_middle(u)
        r = np.empty_like(t)
        _apply_rows(band, k, t, r)
        _scatter_middle(r, out)
    else:
        t = _gather_last(u)
        r = np.empty_like(t)
        _apply_rows(band, k, t, r)
        _scatter_last(r, out)
    return out


@nb.njit(**_opts)
def band_solve_axis(abs_, ipivs, k, which, u, axis):
    """Solve every fiber of ``u`` along ``axis`` in place.

    ``which`` has the fiber shape (``u.shape`` without ``axis``) and picks the
    factorization of each fiber from the stacks ``abs_``/``ipivs``.
    """
    n0, n1, n2 = u.shape
    if axis == 0:
        band_solve_columns(abs_, ipivs, k, which.reshape(n1 * n2), u.reshape(n0, n1 * n2))
    elif axis == 1:
        t = _gather_middle(u)
        band_solve_columns(abs_, ipivs, k, which.reshape(n0 * n2), t)
        _scatter_middle(t, u)
    else:
        t = _gather_last(u)
        band_solve_columns(abs_, ipivs, k, which.reshape(n0 * n1), t)
        _scatter_last(t, u)
    return u


def warmup():
    """Trigger compilation of every kernel on a tiny problem."""
    ab = np.zeros((4, 3))
    ab[2, :] = 1.0
    piv = np.zeros(3, dtype=np.int64)
    band_lu(ab, piv, 1, 0.0)
    b = np.ones((3, 2))
    band_solve_columns(ab[None], piv[None], 1, np.zeros(2, dtype=np.int64), b)
    u = np.ones((3, 3, 3))
    band = np.zeros((3, 3))
    for ax in range(3):
        band_apply_axis(band, 1, u, ax, np.empty_like(u))
        band_solve_axis(ab[None], piv[None], 1, np.zeros((3, 3), dtype=np.int64), u, ax)


# ---------------------------------------------------------------------------
# Fused time-step kernels.  They compose the kernels above in exactly the
# order used by the Python-level step, so both paths produce the same numbers;
# fusing only removes per-call dispatch overhead.


@nb.njit(**_opts)
def _kron(bands, ks, u, t1, t2, out):
    band_apply_axis(bands[0], ks[0], u, 0, t1)
    band_apply_axis(bands[1], ks[1], t1, 1, t2)
    band_apply_axis(bands[2], ks[2], t2, 2, out)
    return out


@nb.njit(**_opts)
def _deriv(M, A, ks, axis, u, t1, t2):
    out = np.empty_like(u)
    if axis == 0:
        return _kron((A[0], M[1], M[2]), ks, u, t1, t2, out)
    if axis == 1:
        return _kron((M[0], A[1], M[2]), ks, u, t1, t2, out)
    return _kron((M[0], M[1], A[2]), ks, u, t1, t2, out)


@nb.njit(**_opts)
def _solve_block(abs_, ipivs, whichs, axes, base, ks, x):
    for q in range(3):
        ax = axes[base + q]
        band_solve_axis(abs_[base + q], ipivs[base + q], ks[ax], whichs[base + q], x, ax)
    return x


@nb.njit(**_opts)
def fused_substep(substep, E0, E1, E2, H0, H1, H2, C2_prev,
                  M, A, B, ks, a_E, a_H, cc, masks,
                  e_abs, e_ipivs, e_whichs, e_axes,
                  h_abs, h_ipivs, h_whichs, h_axes):
    """One substep; returns ``(E', H', C2 E')`` as tuples of three tensors.

    ``substep`` is 1 or 2.  For substep 2, ``C2_prev`` carries ``C2 E`` of the
    incoming state (computed at the end of substep 1).
    """
    t1 = np.empty_like(E0)
    t2 = np.empty_like(E0)
    E = (E0, E1, E2)
    H = (H0, H1, H2)
    # curl of H, one tensor per test component
    CH0 = _deriv(M, A, ks, 1, H[2], t1, t2) - _deriv(M, A, ks, 2, H[1], t1, t2)
    CH1 = _deriv(M, A, ks, 2, H[0], t1, t2) - _deriv(M, A, ks, 0, H[2], t1, t2)
    CH2 = _deriv(M, A, ks, 0, H[1], t1, t2) - _deriv(M, A, ks, 1, H[0], t1, t2)
    if substep == 1:
        R0 = _kron((A[0], B[1], M[2]), ks, E[1], t1, t2, np.empty_like(E0))
        R1 = _kron((M[0], A[1], B[2]), ks, E[2], t1, t2, np.empty_like(E0))
        R2 = _kron((B[0], M[1], A[2]), ks, E[0], t1, t2, np.empty_like(E0))
    else:
        R0 = _kron((A[0], M[1], B[2]), ks, E[2], t1, t2, np.empty_like(E0))
        R1 = _kron((B[0], A[1], M[2]), ks, E[0], t1, t2, np.empty_like(E0))
        R2 = _kron((M[0], B[1], A[2]), ks, E[1], t1, t2, np.empty_like(E0))
    CH = (CH0, CH1, CH2)
    R = (R0, R1, R2)
    base = 9 * (substep - 1)
    out = []
    for comp in range(3):
        r = _kron((M[0], M[1], M[2]), ks, E[comp], t1, t2, np.empty_like(E0))
        r = r + a_E * CH[comp] + cc * R[comp]
        m = masks[comp]
        flat = r.reshape(-1)
        mflat = m.reshape(-1)
        for i in range(flat.shape[0]):
            if mflat[i]:
                flat[i] = 0.0
        out.append(_solve_block(e_abs, e_ipivs, e_whichs, e_axes, base + 3 * comp, ks, r))
    En = (out[0], out[1], out[2])
    if substep == 1:
        c1 = (_deriv(M, A, ks, 1, E[2], t1, t2), _deriv(M, A, ks, 2, E[0], t1, t2),
              _deriv(M, A, ks, 0, E[1], t1, t2))
        c2 = (_deriv(M, A, ks, 2, En[1], t1, t2), _deriv(M, A, ks, 0, En[2], t1, t2),
              _deriv(M, A, ks, 1, En[0], t1, t2))
    else:
        c2 = C2_prev
        c1 = (_deriv(M, A, ks, 1, En[2], t1, t2), _deriv(M, A, ks, 2, En[0], t1, t2),
              _deriv(M, A, ks, 0, En[1], t1, t2))
    Hn = []
    for comp in range(3):
        d = a_H * (c2[comp] - c1[comp])
        d = _solve_block(h_abs, h_ipivs, h_whichs, h_axes, 3 * comp, ks, d)
        Hn.append(H[comp] + d)
    return En, (Hn[0], Hn[1], Hn[2]), c2


@nb.njit(**_opts)
def fused_step(E0, E1, E2, H0, H1, H2, M, A, B, ks, a_E, a_H, cc, masks,
               e_abs, e_ipivs, e_whichs, e_axes, h_abs, h_ipivs, h_whichs, h_axes):
    """Both substeps in one call; returns ``(E, H)`` at the new time level."""
    Eh, Hh, c2 = fused_substep(1, E0, E1, E2, H0, H1, H2, (E0, E1, E2), M, A, B, ks,
                               a_E, a_H, cc, masks, e_abs, e_ipivs, e_whichs, e_axes,
                               h_abs, h_ipivs, h_whichs, h_axes)
    En, Hn, _ = fused_substep(2, Eh[0], Eh[1], Eh[2], Hh[0], Hh[1], Hh[2], c2, M, A, B, ks,
                              a_E, a_H, cc, masks, e_abs, e_ipivs, e_whichs, e_axes,
                              h_abs, h_ipivs, h_whichs, h_axes)
    return En, Hn
