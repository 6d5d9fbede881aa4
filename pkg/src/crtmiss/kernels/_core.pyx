# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled implementations of the two hot kernels.

Mirrors ``pybackend`` step for step: same profile criterion, the same
bracketing-grid plus golden-section trajectory on log(lam + eps), the same
Gibbs update order and the same pregenerated variates.  Differences
against the fallback come only from floating-point summation order.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, log1p, sqrt, isfinite

cnp.import_array()

name = "compiled"

# Optimiser constants; must match pybackend (a test asserts this).
LAMBDA_EPS = 1e-12
U_LO = float(np.log(1e-12))
U_HI = float(np.log(1e6))
GRID_POINTS = 48
GOLDEN_TOL = 1e-9
GOLDEN_MAX_ITER = 200

cdef double _C_LAMBDA_EPS = 1e-12
cdef double _C_GOLDEN_TOL = 1e-9
cdef int _C_GOLDEN_MAX_ITER = 200
cdef int _C_GRID_POINTS = 48
cdef double _LOG_2PI = log(2.0 * 3.14159265358979323846)
cdef double _INVPHI = (sqrt(5.0) - 1.0) / 2.0
cdef int _MAX_P = 8


cdef int _chol(const double* A, double* L, int p) noexcept nogil:
    """Lower Cholesky of the symmetric p x p matrix A; 0 on success."""
    cdef int i, j, k
    cdef double acc
    for i in range(p):
        for j in range(i + 1):
            acc = A[i * p + j]
            for k in range(j):
                acc -= L[i * p + k] * L[j * p + k]
            if i == j:
                if acc <= 0.0:
                    return 1
                L[i * p + j] = sqrt(acc)
            else:
                L[i * p + j] = acc / L[j * p + j]
    return 0


cdef void _chol_solve(const double* L, const double* b, double* out, int p) noexcept nogil:
    """Solve (L L') out = b given the lower factor L."""
    cdef int i, k
    cdef double acc
    for i in range(p):
        acc = b[i]
        for k in range(i):
            acc -= L[i * p + k] * out[k]
        out[i] = acc / L[i * p + i]
    for i in range(p - 1, -1, -1):
        acc = out[i]
        for k in range(i + 1, p):
            acc -= L[k * p + i] * out[k]
        out[i] = acc / L[i * p + i]


cdef void _upper_solve(const double* L, const double* b, double* out, int p) noexcept nogil:
    """Solve L' out = b (back substitution with the lower factor L)."""
    cdef int i, k
    cdef double acc
    for i in range(p - 1, -1, -1):
        acc = b[i]
        for k in range(i + 1, p):
            acc -= L[k * p + i] * out[k]
        out[i] = acc / L[i * p + i]


cdef double _criterion(
    double lam,
    const double* WtW,
    const double* Wty,
    double yty,
    const double* S,
    const double* t,
    const double* m,
    int K,
    int n,
    int p,
    double* Mbuf,
    double* Lbuf,
    double* vbuf,
    double* bbuf,
    double* sw2_out,
) noexcept nogil:
    """Profiled REML log-likelihood at lam; -inf when degenerate."""
    cdef int i, j, a
    cdef double c, q, rss, sw2, logdet_a, logdet_m, ll
    for i in range(p):
        for j in range(p):
            Mbuf[i * p + j] = WtW[i * p + j]
        vbuf[i] = Wty[i]
    q = yty
    logdet_a = 0.0
    for j in range(K):
        c = lam / (1.0 + lam * m[j])
        logdet_a += log1p(lam * m[j])
        for i in range(p):
            for a in range(p):
                Mbuf[i * p + a] -= c * S[j * p + i] * S[j * p + a]
            vbuf[i] -= c * t[j] * S[j * p + i]
        q -= c * t[j] * t[j]
    if _chol(Mbuf, Lbuf, p):
        return -1e308
    logdet_m = 0.0
    for i in range(p):
        logdet_m += 2.0 * log(Lbuf[i * p + i])
    _chol_solve(Lbuf, vbuf, bbuf, p)
    rss = q
    for i in range(p):
        rss -= vbuf[i] * bbuf[i]
    if rss <= 0.0:
        return -1e308
    sw2 = rss / (n - p)
    sw2_out[0] = sw2
    ll = -0.5 * ((n - p) * (log(sw2) + 1.0 + _LOG_2PI) + logdet_a + logdet_m)
    return ll


cdef double _golden(
    double a,
    double b,
    const double* WtW,
    const double* Wty,
    double yty,
    const double* S,
    const double* t,
    const double* m,
    int K,
    int n,
    int p,
    double* Mbuf,
    double* Lbuf,
    double* vbuf,
    double* bbuf,
    double* sw2buf,
) noexcept nogil:
    cdef double h = b - a
    cdef double c = b - _INVPHI * h
    cdef double d = a + _INVPHI * h
    cdef double lam, fc, fd
    cdef int it
    lam = exp(c) - _C_LAMBDA_EPS
    if lam < 0.0:
        lam = 0.0
    fc = _criterion(lam, WtW, Wty, yty, S, t, m, K, n, p, Mbuf, Lbuf, vbuf, bbuf, sw2buf)
    lam = exp(d) - _C_LAMBDA_EPS
    if lam < 0.0:
        lam = 0.0
    fd = _criterion(lam, WtW, Wty, yty, S, t, m, K, n, p, Mbuf, Lbuf, vbuf, bbuf, sw2buf)
    for it in range(_C_GOLDEN_MAX_ITER):
        if b - a <= _C_GOLDEN_TOL:
            break
        if fc >= fd:
            b = d
            d = c
            fd = fc
            h = b - a
            c = b - _INVPHI * h
            lam = exp(c) - _C_LAMBDA_EPS
            if lam < 0.0:
                lam = 0.0
            fc = _criterion(lam, WtW, Wty, yty, S, t, m, K, n, p, Mbuf, Lbuf, vbuf, bbuf, sw2buf)
        else:
            a = c
            c = d
            fc = fd
            h = b - a
            d = a + _INVPHI * h
            lam = exp(d) - _C_LAMBDA_EPS
            if lam < 0.0:
                lam = 0.0
            fd = _criterion(lam, WtW, Wty, yty, S, t, m, K, n, p, Mbuf, Lbuf, vbuf, bbuf, sw2buf)
    return 0.5 * (a + b)


def _suffstats(W, y, sizes):
    starts = np.zeros(len(sizes), dtype=np.int64)
    np.cumsum(sizes[:-1], out=starts[1:])
    S = np.add.reduceat(W, starts, axis=0)
    t = np.add.reduceat(y, starts)
    WtW = W.T @ W
    Wty = W.T @ y
    yty = float(y @ y)
    return WtW, Wty, yty, S, t, sizes.astype(np.float64)


def reml_profile_loglik(W, y, sizes, double lam):
    """Profiled REML log-likelihood at a given variance ratio lam."""
    W = np.ascontiguousarray(W, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    sizes = np.asarray(sizes, dtype=np.int64)
    cdef int n = W.shape[0]
    cdef int p = W.shape[1]
    WtW, Wty, yty, S, t, m = _suffstats(W, y, sizes)
    cdef double[:, ::1] WtW_v = np.ascontiguousarray(WtW)
    cdef double[::1] Wty_v = np.ascontiguousarray(Wty)
    cdef double[:, ::1] S_v = np.ascontiguousarray(S)
    cdef double[::1] t_v = np.ascontiguousarray(t)
    cdef double[::1] m_v = np.ascontiguousarray(m)
    cdef double yty_c = yty
    cdef int K = len(sizes)
    cdef double Mbuf[64]
    cdef double Lbuf[64]
    cdef double vbuf[8]
    cdef double bbuf[8]
    cdef double sw2 = 0.0
    if p > _MAX_P:
        raise ValueError(f"design width {p} exceeds compiled limit {_MAX_P}")
    cdef double ll = _criterion(
        lam, &WtW_v[0, 0], &Wty_v[0], yty_c, &S_v[0, 0], &t_v[0], &m_v[0],
        K, n, p, Mbuf, Lbuf, vbuf, bbuf, &sw2,
    )
    return ll if ll > -1e307 else float("-inf")


def reml_fit(W, y, sizes):
    """Fit the random-intercept model by profiled REML.

    Same contract as ``pybackend.reml_fit``.
    """
    W = np.ascontiguousarray(W, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    sizes = np.asarray(sizes, dtype=np.int64)
    cdef int n = W.shape[0]
    cdef int p = W.shape[1]
    cdef int K = len(sizes)
    if p > _MAX_P:
        raise ValueError(f"design width {p} exceeds compiled limit {_MAX_P}")
    WtW, Wty, yty, S, t, m = _suffstats(W, y, sizes)
    cdef double[:, ::1] WtW_v = np.ascontiguousarray(WtW)
    cdef double[::1] Wty_v = np.ascontiguousarray(Wty)
    cdef double[:, ::1] S_v = np.ascontiguousarray(S)
    cdef double[::1] t_v = np.ascontiguousarray(t)
    cdef double[::1] m_v = np.ascontiguousarray(m)
    cdef double yty_c = yty

    cdef double Mbuf[64]
    cdef double Lbuf[64]
    cdef double vbuf[8]
    cdef double bbuf[8]
    cdef double sw2buf = 0.0

    # Bracketing grid over u = log(lam + eps); replicate np.linspace exactly.
    cdef double u_lo = U_LO
    cdef double u_hi = U_HI
    cdef double step = (u_hi - u_lo) / (_C_GRID_POINTS - 1)
    cdef double best_ll = -1e308
    cdef double u, lam, ll
    cdef int i, i_best = 0
    for i in range(_C_GRID_POINTS):
        u = u_hi if i == _C_GRID_POINTS - 1 else u_lo + i * step
        lam = exp(u) - _C_LAMBDA_EPS
        if lam < 0.0:
            lam = 0.0
        ll = _criterion(
            lam, &WtW_v[0, 0], &Wty_v[0], yty_c, &S_v[0, 0], &t_v[0], &m_v[0],
            K, n, p, Mbuf, Lbuf, vbuf, bbuf, &sw2buf,
        )
        if ll > best_ll:
            best_ll = ll
            i_best = i
    if best_ll <= -1e307:
        nan_p = np.full(p, np.nan)
        return nan_p, np.full((p, p), np.nan), float("nan"), float("nan"), float("nan"), float("-inf")

    cdef double a = u_lo + (i_best - 1) * step if i_best > 0 else u_lo
    cdef double b
    if i_best + 1 <= _C_GRID_POINTS - 2:
        b = u_lo + (i_best + 1) * step
    else:
        b = u_hi
    cdef double u_hat
    u_hat = _golden(
        a, b, &WtW_v[0, 0], &Wty_v[0], yty_c, &S_v[0, 0], &t_v[0], &m_v[0],
        K, n, p, Mbuf, Lbuf, vbuf, bbuf, &sw2buf,
    )
    cdef double lam_hat = exp(u_hat) - _C_LAMBDA_EPS
    if lam_hat < 0.0:
        lam_hat = 0.0
    cdef double ll_hat = _criterion(
        lam_hat, &WtW_v[0, 0], &Wty_v[0], yty_c, &S_v[0, 0], &t_v[0], &m_v[0],
        K, n, p, Mbuf, Lbuf, vbuf, bbuf, &sw2buf,
    )
    cdef double ll_zero = _criterion(
        0.0, &WtW_v[0, 0], &Wty_v[0], yty_c, &S_v[0, 0], &t_v[0], &m_v[0],
        K, n, p, Mbuf, Lbuf, vbuf, bbuf, &sw2buf,
    )
    if ll_zero >= ll_hat or lam_hat < 1e-10:
        lam_hat = 0.0
        ll_hat = ll_zero

    # Final pass at lam_hat fills the buffers with M, L and beta.
    cdef double sw2 = 0.0
    ll = _criterion(
        lam_hat, &WtW_v[0, 0], &Wty_v[0], yty_c, &S_v[0, 0], &t_v[0], &m_v[0],
        K, n, p, Mbuf, Lbuf, vbuf, bbuf, &sw2,
    )
    if ll <= -1e307:
        nan_p = np.full(p, np.nan)
        return nan_p, np.full((p, p), np.nan), float("nan"), float("nan"), float("nan"), float("-inf")
    beta = np.empty(p)
    cdef double[::1] beta_v = beta
    for i in range(p):
        beta_v[i] = bbuf[i]
    vcov = np.empty((p, p))
    cdef double[:, ::1] vcov_v = vcov
    cdef double ei[8]
    cdef double col[8]
    cdef int jj, ii
    for jj in range(p):
        for ii in range(p):
            ei[ii] = 1.0 if ii == jj else 0.0
        _chol_solve(Lbuf, ei, col, p)
        for ii in range(p):
            vcov_v[ii, jj] = sw2 * col[ii]
    return beta, vcov, float(sw2), float(lam_hat * sw2), float(lam_hat), float(ll)


def gibbs_chain(
    W,
    y_init,
    starts,
    sizes,
    codes,
    mis_idx,
    double sw2_init,
    double sb2_init,
    double prior_scale,
    int burn_in,
    int thin,
    int n_save,
    z_beta,
    z_u,
    g_w,
    g_b,
    z_mis,
):
    """Run one blocked Gibbs chain; same contract as ``pybackend.gibbs_chain``."""
    cdef double[:, ::1] W_v = np.ascontiguousarray(W, dtype=np.float64)
    y_arr = np.ascontiguousarray(y_init, dtype=np.float64).copy()
    cdef double[::1] y = y_arr
    cdef long long[::1] starts_v = np.asarray(starts, dtype=np.int64)
    cdef long long[::1] sizes_v = np.asarray(sizes, dtype=np.int64)
    cdef double[::1] m_v = np.asarray(sizes, dtype=np.float64)
    cdef long long[::1] codes_v = np.asarray(codes, dtype=np.int64)
    cdef long long[::1] mis_v = np.asarray(mis_idx, dtype=np.int64)
    cdef double[:, ::1] z_beta_v = np.ascontiguousarray(z_beta, dtype=np.float64)
    cdef double[:, ::1] z_u_v = np.ascontiguousarray(z_u, dtype=np.float64)
    cdef double[::1] g_w_v = np.ascontiguousarray(g_w, dtype=np.float64)
    cdef double[::1] g_b_v = np.ascontiguousarray(g_b, dtype=np.float64)
    cdef double[:, ::1] z_mis_v

    cdef int n = W_v.shape[0]
    cdef int p = W_v.shape[1]
    cdef int K = m_v.shape[0]
    cdef int n_mis = mis_v.shape[0]
    cdef int total_sweeps = burn_in + n_save * thin
    if p > _MAX_P:
        raise ValueError(f"design width {p} exceeds compiled limit {_MAX_P}")
    if n_mis > 0:
        z_mis_v = np.ascontiguousarray(z_mis, dtype=np.float64)
    else:
        z_mis_v = np.zeros((total_sweeps, 1))

    WtW = np.asarray(W_v).T @ np.asarray(W_v)
    L_arr = np.linalg.cholesky(WtW)
    cdef double[:, ::1] L_v = np.ascontiguousarray(L_arr)

    y_draws = np.empty((n_save, n_mis))
    sw2_chain = np.empty(total_sweeps)
    sb2_chain = np.empty(total_sweeps)
    u_arr = np.zeros(K)
    cdef double[:, ::1] y_draws_v = y_draws if n_mis else np.zeros((max(n_save, 1), 1))
    cdef double[::1] sw2_chain_v = sw2_chain
    cdef double[::1] sb2_chain_v = sb2_chain
    cdef double[::1] u = u_arr

    cdef double rhs[8]
    cdef double half[8]
    cdef double mean_beta[8]
    cdef double zsolve[8]
    cdef double beta[8]
    r_arr = np.empty(n)
    cdef double[::1] r = r_arr

    cdef double sw2 = sw2_init
    cdef double sb2 = sb2_init
    cdef int s, i, j, a, saved = 0, status = 0
    cdef long long row
    cdef double acc, prec, ssr, ssb, sd_w, e_i

    with nogil:
        for s in range(total_sweeps):
            # beta | u, sw2, y
            for a in range(p):
                rhs[a] = 0.0
            for i in range(n):
                e_i = y[i] - u[codes_v[i]]
                for a in range(p):
                    rhs[a] += W_v[i, a] * e_i
            _chol_solve(&L_v[0, 0], rhs, mean_beta, p)
            for a in range(p):
                half[a] = z_beta_v[s, a]
            _upper_solve(&L_v[0, 0], half, zsolve, p)
            sd_w = sqrt(sw2)
            for a in range(p):
                beta[a] = mean_beta[a] + sd_w * zsolve[a]

            # u | beta, sw2, sb2, y
            for i in range(n):
                acc = y[i]
                for a in range(p):
                    acc -= W_v[i, a] * beta[a]
                r[i] = acc
            ssb = 0.0
            for j in range(K):
                acc = 0.0
                for i in range(<int>starts_v[j], <int>(starts_v[j] + sizes_v[j])):
                    acc += r[i]
                prec = m_v[j] / sw2 + 1.0 / sb2
                u[j] = acc / sw2 / prec + z_u_v[s, j] / sqrt(prec)
                ssb += u[j] * u[j]

            # sw2 | beta, u, y
            ssr = 0.0
            for i in range(n):
                acc = r[i] - u[codes_v[i]]
                ssr += acc * acc
            sw2 = (prior_scale + 0.5 * ssr) / g_w_v[s]

            # sb2 | u
            sb2 = (prior_scale + 0.5 * ssb) / g_b_v[s]

            # missing y | beta, u, sw2
            sd_w = sqrt(sw2)
            for i in range(n_mis):
                row = mis_v[i]
                acc = u[codes_v[row]]
                for a in range(p):
                    acc += W_v[row, a] * beta[a]
                y[row] = acc + sd_w * z_mis_v[s, i]

            sw2_chain_v[s] = sw2
            sb2_chain_v[s] = sb2
            if not (isfinite(sw2) and isfinite(sb2)):
                status = s + 1
                break

            if s >= burn_in and (s - burn_in + 1) % thin == 0:
                for i in range(n_mis):
                    y_draws_v[saved, i] = y[mis_v[i]]
                saved += 1

    return y_draws, sw2_chain, sb2_chain, status
