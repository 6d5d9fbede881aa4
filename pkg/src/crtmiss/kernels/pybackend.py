"""Pure-numpy implementations of the two hot kernels.

This module is the semantic reference: the compiled extension in
``_core.pyx`` mirrors these algorithms step for step (same profile
criterion, same golden-section trajectory, same per-sweep update order
and the same pregenerated random variates), so the two backends agree to
floating-point tolerance.

REML kernel
    Random-intercept linear mixed model with V = sigma_w2 * (I + lam Z Z'),
    lam = sigma_b2 / sigma_w2.  Fixed effects and sigma_w2 are profiled
    out in closed form using per-cluster sufficient statistics; the scalar
    profile criterion is maximised by a bracketing grid plus golden
    section on log(lam + eps), with an explicit candidate at lam = 0.

Gibbs kernel
    Blocked data-augmentation sampler for the same model with a flat prior
    on the fixed effects and inverse-gamma priors on both variances.  All
    random variates are pregenerated by the caller, which makes chains
    reproducible across backends and worker layouts.
"""

from __future__ import annotations

import numpy as np

name = "python"

# Optimiser constants; the compiled backend hardcodes the same values.
LAMBDA_EPS = 1e-12
U_LO = float(np.log(1e-12))
U_HI = float(np.log(1e6))
GRID_POINTS = 48
GOLDEN_TOL = 1e-9
GOLDEN_MAX_ITER = 200

_LOG_2PI = float(np.log(2.0 * np.pi))
_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


def _suffstats(W: np.ndarray, y: np.ndarray, sizes: np.ndarray):
    """Per-cluster sufficient statistics for the profiled REML criterion."""
    starts = np.zeros(len(sizes), dtype=np.int64)
    np.cumsum(sizes[:-1], out=starts[1:])
    S = np.add.reduceat(W, starts, axis=0)
    t = np.add.reduceat(y, starts)
    WtW = W.T @ W
    Wty = W.T @ y
    yty = float(y @ y)
    return WtW, Wty, yty, S, t, sizes.astype(np.float64)


def _criterion_terms(lam, WtW, Wty, yty, S, t, m, n, p):
    """Evaluate the profiled REML pieces at one lam.

    Returns (ll, M, v, sw2); ll is -inf when the design or residual
    variance degenerates at this lam.
    """
    c = lam / (1.0 + lam * m)
    M = WtW - (S * c[:, None]).T @ S
    v = Wty - S.T @ (c * t)
    q = yty - float(c @ (t * t))
    sign, logdet_m = np.linalg.slogdet(M)
    if sign <= 0:
        return -np.inf, M, v, np.nan
    beta = np.linalg.solve(M, v)
    rss = q - float(v @ beta)
    if not rss > 0:
        return -np.inf, M, v, np.nan
    sw2 = rss / (n - p)
    logdet_a = float(np.log1p(lam * m).sum())
    ll = -0.5 * ((n - p) * (np.log(sw2) + 1.0 + _LOG_2PI) + logdet_a + logdet_m)
    return float(ll), M, v, sw2


def reml_profile_loglik(W, y, sizes, lam: float) -> float:
    """Profiled REML log-likelihood at a given variance ratio lam."""
    W = np.ascontiguousarray(W, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    sizes = np.asarray(sizes, dtype=np.int64)
    n, p = W.shape
    WtW, Wty, yty, S, t, m = _suffstats(W, y, sizes)
    ll, _, _, _ = _criterion_terms(lam, WtW, Wty, yty, S, t, m, n, p)
    return ll


def _golden_max(f, a: float, b: float) -> float:
    """Golden-section maximisation on [a, b]; returns the midpoint."""
    h = b - a
    c = b - _INVPHI * h
    d = a + _INVPHI * h
    fc = f(c)
    fd = f(d)
    for _ in range(GOLDEN_MAX_ITER):
        if b - a <= GOLDEN_TOL:
            break
        if fc >= fd:
            b = d
            d = c
            fd = fc
            h = b - a
            c = b - _INVPHI * h
            fc = f(c)
        else:
            a = c
            c = d
            fc = fd
            h = b - a
            d = a + _INVPHI * h
            fd = f(d)
    return 0.5 * (a + b)


def reml_fit(W, y, sizes):
    """Fit the random-intercept model by profiled REML.

    Args:
        W: (n, p) fixed-effects design, rows sorted by cluster.
        y: (n,) outcomes in the same order.
        sizes: (K,) per-cluster row counts, in row order.

    Returns:
        Tuple ``(beta, vcov, sigma_w2, sigma_b2, lam, loglik)``; loglik is
        ``-inf`` (with NaN components) when no lam yields a valid fit.
    """
    W = np.ascontiguousarray(W, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    sizes = np.asarray(sizes, dtype=np.int64)
    n, p = W.shape
    WtW, Wty, yty, S, t, m = _suffstats(W, y, sizes)

    def ll_at_u(u: float) -> float:
        lam = max(np.exp(u) - LAMBDA_EPS, 0.0)
        return _criterion_terms(lam, WtW, Wty, yty, S, t, m, n, p)[0]

    us = np.linspace(U_LO, U_HI, GRID_POINTS)
    grid_ll = np.array([ll_at_u(u) for u in us])
    i_best = int(np.argmax(grid_ll))
    if not np.isfinite(grid_ll[i_best]):
        nan_p = np.full(p, np.nan)
        return nan_p, np.full((p, p), np.nan), np.nan, np.nan, np.nan, -np.inf

    a = us[max(i_best - 1, 0)]
    b = us[min(i_best + 1, GRID_POINTS - 1)]
    u_hat = _golden_max(ll_at_u, a, b)
    lam_hat = max(np.exp(u_hat) - LAMBDA_EPS, 0.0)
    ll_hat, *_ = _criterion_terms(lam_hat, WtW, Wty, yty, S, t, m, n, p)
    ll_zero, *_ = _criterion_terms(0.0, WtW, Wty, yty, S, t, m, n, p)
    if ll_zero >= ll_hat or lam_hat < 1e-10:
        lam_hat, ll_hat = 0.0, ll_zero

    ll, M, v, sw2 = _criterion_terms(lam_hat, WtW, Wty, yty, S, t, m, n, p)
    if not np.isfinite(ll):
        nan_p = np.full(p, np.nan)
        return nan_p, np.full((p, p), np.nan), np.nan, np.nan, np.nan, -np.inf
    beta = np.linalg.solve(M, v)
    vcov = sw2 * np.linalg.inv(M)
    return beta, vcov, float(sw2), float(lam_hat * sw2), float(lam_hat), float(ll)


def gibbs_chain(
    W,
    y_init,
    starts,
    sizes,
    codes,
    mis_idx,
    sw2_init: float,
    sb2_init: float,
    prior_scale: float,
    burn_in: int,
    thin: int,
    n_save: int,
    z_beta,
    z_u,
    g_w,
    g_b,
    z_mis,
):
    """Run one blocked Gibbs chain and collect imputed outcome draws.

    Per sweep, in order: fixed effects beta, cluster effects u, residual
    variance sigma_w2, cluster variance sigma_b2, then missing outcomes.
    The caller supplies every random variate: standard normals ``z_beta``
    (S, p), ``z_u`` (S, K), ``z_mis`` (S, n_mis) and unit-scale gamma draws
    ``g_w``/``g_b`` (S,) whose shapes already include the data counts.

    Args:
        W: (n, p) design, rows sorted by cluster.
        y_init: (n,) outcomes with missing entries pre-filled (start state).
        starts: (K,) first row of each cluster.
        sizes: (K,) rows per cluster.
        codes: (n,) cluster code per row.
        mis_idx: (n_mis,) row indices of missing outcomes.
        sw2_init, sb2_init: starting variances.
        prior_scale: inverse-gamma prior scale for both variances.
        burn_in: sweeps discarded before saving.
        thin: sweeps between saves.
        n_save: number of imputed vectors to collect.

    Returns:
        ``(y_draws, sw2_chain, sb2_chain, status)`` with ``y_draws`` of
        shape (n_save, n_mis); ``status`` is 0 on success or the 1-based
        sweep index at which the state turned non-finite.
    """
    W = np.ascontiguousarray(W, dtype=np.float64)
    y = np.ascontiguousarray(y_init, dtype=np.float64).copy()
    sizes_f = np.asarray(sizes, dtype=np.float64)
    starts = np.asarray(starts, dtype=np.int64)
    codes = np.asarray(codes, dtype=np.int64)
    mis_idx = np.asarray(mis_idx, dtype=np.int64)
    n, p = W.shape
    n_clusters = len(sizes_f)
    n_mis = len(mis_idx)
    total_sweeps = burn_in + n_save * thin

    WtW = W.T @ W
    L = np.linalg.cholesky(WtW)
    W_mis = W[mis_idx]
    codes_mis = codes[mis_idx]

    u = np.zeros(n_clusters)
    sw2 = float(sw2_init)
    sb2 = float(sb2_init)

    y_draws = np.empty((n_save, n_mis))
    sw2_chain = np.empty(total_sweeps)
    sb2_chain = np.empty(total_sweeps)
    saved = 0

    for s in range(total_sweeps):
        # beta | u, sw2, y
        e = y - u[codes]
        rhs = W.T @ e
        half = np.linalg.solve(L, rhs)
        mean_beta = np.linalg.solve(L.T, half)
        beta = mean_beta + np.sqrt(sw2) * np.linalg.solve(L.T, z_beta[s])

        # u | beta, sw2, sb2, y
        r = y - W @ beta
        r_sums = np.add.reduceat(r, starts)
        prec = sizes_f / sw2 + 1.0 / sb2
        u = r_sums / sw2 / prec + z_u[s] / np.sqrt(prec)

        # sw2 | beta, u, y
        resid = r - u[codes]
        ssr = float(resid @ resid)
        sw2 = (prior_scale + 0.5 * ssr) / g_w[s]

        # sb2 | u
        sb2 = (prior_scale + 0.5 * float(u @ u)) / g_b[s]

        # missing y | beta, u, sw2
        if n_mis:
            y[mis_idx] = W_mis @ beta + u[codes_mis] + np.sqrt(sw2) * z_mis[s]

        sw2_chain[s] = sw2
        sb2_chain[s] = sb2
        if not (np.isfinite(sw2) and np.isfinite(sb2)):
            return y_draws, sw2_chain, sb2_chain, s + 1

        if s >= burn_in and (s - burn_in + 1) % thin == 0:
            y_draws[saved] = y[mis_idx]
            saved += 1

    return y_draws, sw2_chain, sb2_chain, 0
