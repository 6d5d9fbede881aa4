"""Multiple imputation by a blocked Gibbs sampler, with small-sample pooling.

Missing outcomes are drawn from a random-intercept mixed model fitted to
the full posterior (flat prior on fixed effects, inverse-gamma priors on
both variances).  Each saved completed dataset is analysed with the same
mixed model, and the per-imputation estimates are pooled by Rubin's rules
with the Barnard-Rubin small-sample degrees-of-freedom adjustment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import mannwhitneyu

from .errors import (
    CellFailureError,
    DegenerateDesignError,
    DegenerateVarianceError,
    ParameterError,
    SamplerDivergenceError,
)
from .kernels import active_backend
from .lmm import LmmSpec, design_matrix
from .missingness import ScenarioSpec
from .types import EstimateResult, TrialData, t_test_result

__all__ = [
    "ImputationConfig",
    "MiPooled",
    "rubin_pool",
    "gibbs_impute",
    "analyze_mi",
    "stationarity_pvalue",
]


@dataclass(frozen=True)
class ImputationConfig:
    """Sampler schedule and priors.

    Attributes:
        q: number of completed datasets to save.
        burn_in: sweeps discarded before the first save.
        thin: sweeps between saves.
        prior_shape, prior_scale: inverse-gamma hyperparameters shared by
            both variance components.
    """

    q: int = 20
    burn_in: int = 200
    thin: int = 10
    prior_shape: float = 1e-3
    prior_scale: float = 1e-3

    def __post_init__(self) -> None:
        if self.q < 2:
            raise ParameterError(f"q must be >= 2, got {self.q}")
        if self.burn_in < 0 or self.thin < 1:
            raise ParameterError("burn_in must be >= 0 and thin >= 1")
        if self.prior_shape <= 0 or self.prior_scale <= 0:
            raise ParameterError("prior hyperparameters must be positive")

    @property
    def total_sweeps(self) -> int:
        return self.burn_in + self.q * self.thin


@dataclass(frozen=True)
class MiPooled:
    """Rubin-pooled estimate with both degrees-of-freedom corrections."""

    theta_bar: float
    within: float
    between: float
    total: float
    nu: float
    nu_com: float
    nu_obs_hat: float
    nu_adj: float
    q: int
    per_imputation: tuple = ()
    flags: tuple = ()


def rubin_pool(estimates, nu_com: float) -> MiPooled:
    """Pool per-imputation (theta, se) pairs.

    The large-sample degrees of freedom (Q - 1)(1 + Q W / ((Q + 1) B))**2
    are combined with the observed-data degrees of freedom

        nu_obs_hat = (1 + (Q+1) B / (Q W))**-1 * (nu_com+1)/(nu_com+3) * nu_com

    harmonically: nu_adj = (1/nu + 1/nu_obs_hat)**-1, which never exceeds
    nu_com.

    Args:
        estimates: iterable of (theta_hat, se) pairs.
        nu_com: complete-data degrees of freedom.

    Returns:
        The pooled summary.
    """
    pairs = [(float(t), float(s)) for t, s in estimates]
    q = len(pairs)
    if q < 2:
        raise ParameterError(f"rubin_pool needs >= 2 imputations, got {q}")
    thetas = np.array([t for t, _ in pairs])
    ses = np.array([s for _, s in pairs])
    theta_bar = float(thetas.mean())
    within = float((ses**2).mean())
    between = float(thetas.var(ddof=1))
    total = within + (1.0 + 1.0 / q) * between
    if within <= 0:
        raise DegenerateVarianceError("rubin_pool: within-imputation variance is zero")

    flags = []
    if between > 0:
        nu = (q - 1.0) * (1.0 + q / (q + 1.0) * within / between) ** 2
    else:
        nu = np.inf
        flags.append("between_zero")
    shrink = 1.0 / (1.0 + (q + 1.0) / q * between / within)
    nu_obs_hat = shrink * (nu_com + 1.0) / (nu_com + 3.0) * nu_com
    nu_adj = nu_obs_hat if np.isinf(nu) else 1.0 / (1.0 / nu + 1.0 / nu_obs_hat)
    return MiPooled(
        theta_bar=theta_bar,
        within=within,
        between=between,
        total=float(total),
        nu=float(nu),
        nu_com=float(nu_com),
        nu_obs_hat=float(nu_obs_hat),
        nu_adj=float(nu_adj),
        q=q,
        per_imputation=tuple(pairs),
        flags=tuple(flags),
    )


def _chain_inputs(data: TrialData, spec: LmmSpec):
    """Sorted whole-dataset arrays plus complete-case initial values."""
    codes, n_clusters = data.cluster_codes()
    order = np.argsort(codes, kind="stable")
    arm = data.arm[order]
    x = data.x[order]
    y = data.y[order].astype(np.float64).copy()
    observed = data.observed[order]
    codes_sorted = codes[order]
    sizes = np.bincount(codes_sorted, minlength=n_clusters).astype(np.int64)
    starts = np.zeros(n_clusters, dtype=np.int64)
    np.cumsum(sizes[:-1], out=starts[1:])

    center = float(x.mean()) if spec.center_covariate else 0.0
    W = design_matrix(arm, x, spec, center)
    n, p = W.shape

    obs_idx = np.flatnonzero(observed)
    mis_idx = np.flatnonzero(~observed)
    if len(obs_idx) <= p:
        raise DegenerateDesignError(
            f"gibbs_impute: {len(obs_idx)} observed outcomes cannot identify {p} fixed effects"
        )

    # Complete-case least squares for the chain start.
    W_obs = W[obs_idx]
    y_obs = y[obs_idx]
    beta0, *_ = np.linalg.lstsq(W_obs, y_obs, rcond=None)
    resid = y_obs - W_obs @ beta0
    sw2_0 = float(resid @ resid) / max(len(obs_idx) - p, 1)

    cl_obs = codes_sorted[obs_idx]
    cids, counts = np.unique(cl_obs, return_counts=True)
    if len(cids) >= 2:
        means = np.bincount(cl_obs, weights=resid, minlength=n_clusters)[cids] / counts
        moment = float(means.var(ddof=1)) - sw2_0 * float((1.0 / counts).mean())
    else:
        moment = 0.0
    sb2_0 = max(0.01 * sw2_0, moment, 1e-8)

    y_init = y.copy()
    if len(mis_idx):
        y_init[mis_idx] = W[mis_idx] @ beta0
    return W, y_init, starts, sizes, codes_sorted, mis_idx, order, sw2_0, sb2_0


def _pregenerate(stream, n: int, p: int, n_clusters: int, n_mis: int, config: ImputationConfig):
    """Draw every chain variate up front, in a documented fixed order.

    Order per run: fixed-effect normals, cluster-effect normals, residual
    variance gammas, cluster variance gammas, missing-outcome normals.
    Gamma shapes are constant across sweeps (they depend only on counts),
    which is what makes pregeneration exact.
    """
    s = config.total_sweeps
    z_beta = stream.standard_normal((s, p))
    z_u = stream.standard_normal((s, n_clusters))
    g_w = stream.standard_gamma(config.prior_shape + n / 2.0, size=s)
    g_b = stream.standard_gamma(config.prior_shape + n_clusters / 2.0, size=s)
    z_mis = stream.standard_normal((s, n_mis))
    return z_beta, z_u, g_w, g_b, z_mis


def _run_chain(data: TrialData, spec: LmmSpec, config: ImputationConfig, stream, backend):
    W, y_init, starts, sizes, codes, mis_idx, order, sw2_0, sb2_0 = _chain_inputs(data, spec)
    n, p = W.shape
    n_mis = len(mis_idx)
    if n_mis == 0:
        empty = np.zeros((config.q, 0))
        return W, y_init, sizes, mis_idx, order, empty, np.zeros(0), np.zeros(0)
    z_beta, z_u, g_w, g_b, z_mis = _pregenerate(stream, n, p, len(sizes), n_mis, config)
    y_draws, sw2_chain, sb2_chain, status = backend.gibbs_chain(
        W,
        y_init,
        starts,
        sizes,
        codes,
        mis_idx,
        sw2_0,
        sb2_0,
        config.prior_scale,
        config.burn_in,
        config.thin,
        config.q,
        z_beta,
        z_u,
        g_w,
        g_b,
        z_mis,
    )
    if status:
        raise SamplerDivergenceError(f"gibbs_impute: non-finite state at sweep {status}")
    return W, y_init, sizes, mis_idx, order, y_draws, sw2_chain, sb2_chain


def stationarity_pvalue(sb2_chain: np.ndarray, config: ImputationConfig) -> float:
    """Rank-test p-value comparing early vs late thinned variance draws.

    Uses the cluster-variance draws at the save points; a small p-value
    suggests the chain was still drifting after burn-in.
    """
    if len(sb2_chain) == 0:
        return 1.0
    saved = sb2_chain[config.burn_in + config.thin - 1 :: config.thin][: config.q]
    half = len(saved) // 2
    if half < 2:
        return 1.0
    try:
        return float(mannwhitneyu(saved[:half], saved[half:], alternative="two-sided").pvalue)
    except ValueError:
        return 1.0


def gibbs_impute(
    data: TrialData,
    spec: LmmSpec,
    config: ImputationConfig,
    stream: np.random.Generator,
    backend=None,
) -> list[TrialData]:
    """Draw Q completed datasets from the posterior predictive.

    With no missing outcomes this returns Q copies of the input and
    consumes no randomness.

    Args:
        data: dataset with masked outcomes to fill.
        spec: imputation-model fixed effects (covariate centred on all
            individuals when requested).
        config: sampler schedule and priors.
        stream: generator supplying every chain variate.
        backend: kernel backend override.

    Returns:
        List of Q fully observed :class:`TrialData`, in draw order.
    """
    backend = backend or active_backend()
    _, _, _, mis_idx, order, y_draws, _, _ = _run_chain(data, spec, config, stream, backend)
    original_mis_rows = order[mis_idx]
    out = []
    for iq in range(config.q):
        filled = data.copy()
        if len(mis_idx):
            filled.y[original_mis_rows] = y_draws[iq]
        filled.observed = np.ones(data.n, dtype=bool)
        filled.meta["imputation"] = {"method": "gibbs", "draw": iq + 1, "of": config.q}
        out.append(filled)
    return out


def analyze_mi(
    data: TrialData,
    scenario: ScenarioSpec,
    config: ImputationConfig,
    stream: np.random.Generator,
    backend=None,
) -> EstimateResult:
    """Impute, analyse each completed dataset, and pool.

    The imputation and analysis models share the same fixed-effects
    layout (covariate always, centred interaction when the scenario has
    arm-specific slopes).  Pooling needs at least Q/2 converged fits.
    """
    backend = backend or active_backend()
    spec = LmmSpec(
        include_covariate=True,
        include_interaction=scenario.interaction_in_analysis,
        center_covariate=scenario.interaction_in_analysis,
    )
    W, y_base, sizes, mis_idx, _, y_draws, _, sb2_chain = _run_chain(
        data, spec, config, stream, backend
    )
    nu_com = float(len(sizes) - 2)

    pairs = []
    n_failed = 0
    z_col = spec.column_names.index("z")
    for iq in range(config.q):
        y_q = y_base.copy()
        if len(mis_idx):
            y_q[mis_idx] = y_draws[iq]
        beta, vcov, _, _, _, ll = backend.reml_fit(W, y_q, sizes)
        if np.isfinite(ll):
            pairs.append((float(beta[z_col]), float(np.sqrt(vcov[z_col, z_col]))))
        else:
            n_failed += 1
    if len(pairs) < config.q / 2.0:
        raise CellFailureError(
            f"analyze_mi: only {len(pairs)} of {config.q} imputation fits converged"
        )

    pooled = rubin_pool(pairs, nu_com)
    p_stat = stationarity_pvalue(sb2_chain, config)
    diag = {
        "nu": pooled.nu,
        "nu_com": pooled.nu_com,
        "nu_obs_hat": pooled.nu_obs_hat,
        "nu_adj": pooled.nu_adj,
        "within": pooled.within,
        "between": pooled.between,
        "n_imputations_used": len(pairs),
        "n_imputation_failures": n_failed,
        "stationarity_pvalue": p_stat,
        "pool_flags": list(pooled.flags),
    }
    k1, k2 = _clusters_per_arm(data)
    return t_test_result(
        "MI", pooled.theta_bar, float(np.sqrt(pooled.total)), pooled.nu_adj, (k1, k2), diag
    )


def _clusters_per_arm(data: TrialData) -> tuple[int, int]:
    k1 = len(np.unique(data.cluster[data.arm_mask(1)]))
    k2 = len(np.unique(data.cluster[data.arm_mask(2)]))
    return k1, k2
