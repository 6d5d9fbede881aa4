"""Cluster-level estimators, an adjusted individual-level t-test, and
single-imputation utilities.

The two cluster-level estimators reduce each cluster to the mean of its
observed outcomes (raw, or residual after a pooled covariate regression)
and compare arms with an unweighted two-sample pooled t-test on those
cluster summaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateDesignError,
    DegenerateVarianceError,
    FullyMissingClusterError,
    SingularDesignError,
)
from .types import EstimateResult, TrialData, t_test_result

__all__ = [
    "Stage1Fit",
    "stage1_regression",
    "unadjusted_cluster_level",
    "adjusted_cluster_level",
    "adjusted_t_test",
    "group_mean_impute",
    "cluster_mean_impute",
]

_VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class Stage1Fit:
    """Pooled least-squares line y = gamma + lam * x on observed cases."""

    gamma: float
    lam: float
    n_obs: int

    def residuals(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return y - (self.gamma + self.lam * x)


def _observed_cluster_means(data: TrialData, values: np.ndarray):
    """Mean of ``values`` over observed cases, per cluster and arm.

    Returns:
        (means1, means2, dropped) where dropped lists (arm, cluster) pairs
        with no observed outcome.
    """
    codes, n_clusters = data.cluster_codes()
    w = data.observed.astype(np.float64)
    counts = np.bincount(codes, weights=w, minlength=n_clusters)
    # Masked values may be NaN on loaded data; zero them out of the sums.
    safe = np.where(data.observed, values, 0.0)
    sums = np.bincount(codes, weights=safe, minlength=n_clusters)
    arm_of = np.zeros(n_clusters, dtype=np.int64)
    cid_of = np.zeros(n_clusters, dtype=np.int64)
    arm_of[codes] = data.arm
    cid_of[codes] = data.cluster
    has_data = counts > 0
    means1 = sums[(arm_of == 1) & has_data] / counts[(arm_of == 1) & has_data]
    means2 = sums[(arm_of == 2) & has_data] / counts[(arm_of == 2) & has_data]
    dropped = [
        (int(arm_of[j]), int(cid_of[j])) for j in np.flatnonzero(~has_data)
    ]
    return means1, means2, dropped


def _pooled_two_sample_t(
    method: str, g1: np.ndarray, g2: np.ndarray, diagnostics: dict
) -> EstimateResult:
    """Unweighted pooled-variance two-sample t on per-cluster summaries."""
    n1, n2 = len(g1), len(g2)
    if n1 < 2 or n2 < 2:
        raise DegenerateDesignError(
            f"{method}: need >= 2 contributing clusters per arm, got ({n1}, {n2})"
        )
    theta = float(g2.mean() - g1.mean())
    df = n1 + n2 - 2
    sp2 = ((n1 - 1) * g1.var(ddof=1) + (n2 - 1) * g2.var(ddof=1)) / df
    if not sp2 > 0:
        raise DegenerateVarianceError(f"{method}: pooled cluster-level variance is zero")
    se = float(np.sqrt(sp2 * (1.0 / n1 + 1.0 / n2)))
    return t_test_result(method, theta, se, df, (n1, n2), diagnostics)


def unadjusted_cluster_level(data: TrialData) -> EstimateResult:
    """Two-sample t-test on unweighted means of observed cluster means.

    Clusters with no observed outcome are dropped (recorded under
    ``diagnostics['dropped_clusters']``).
    """
    m1, m2, dropped = _observed_cluster_means(data, data.y)
    diag = {"dropped_clusters": dropped}
    return _pooled_two_sample_t("Uadj", m1, m2, diag)


def stage1_regression(data: TrialData) -> Stage1Fit:
    """Pooled OLS of observed y on observed x, no arm term, no clustering.

    Raises:
        DegenerateDesignError: no observed cases.
        SingularDesignError: all observed x identical.
    """
    obs = data.observed
    n_obs = int(obs.sum())
    if n_obs == 0:
        raise DegenerateDesignError("stage1_regression: no observed outcomes")
    x, y = data.x[obs], data.y[obs]
    xbar = x.mean()
    sxx = float(((x - xbar) ** 2).sum())
    if sxx <= _VAR_FLOOR * max(1.0, float(np.abs(x).max()) ** 2) * n_obs:
        raise SingularDesignError("stage1_regression: observed covariate has no variation")
    lam = float(((x - xbar) * (y - y.mean())).sum() / sxx)
    gamma = float(y.mean() - lam * xbar)
    return Stage1Fit(gamma=gamma, lam=lam, n_obs=n_obs)


def adjusted_cluster_level(data: TrialData) -> EstimateResult:
    """Covariate-adjusted cluster-level analysis.

    Stage 1 regresses observed y on x pooled over arms; stage 2 runs the
    two-sample t-test on per-cluster means of the stage-1 residuals.  A
    covariate with no variation degrades gracefully to slope 0, making the
    estimator equal the unadjusted one.
    """
    try:
        fit = stage1_regression(data)
        fallback = False
    except SingularDesignError:
        obs = data.observed
        fit = Stage1Fit(gamma=float(data.y[obs].mean()), lam=0.0, n_obs=int(obs.sum()))
        fallback = True
    resid = fit.residuals(data.x, data.y)
    m1, m2, dropped = _observed_cluster_means(data, resid)
    diag = {
        "dropped_clusters": dropped,
        "stage1_gamma": fit.gamma,
        "stage1_lambda": fit.lam,
        "stage1_constant_covariate": fallback,
    }
    return _pooled_two_sample_t("Adj", m1, m2, diag)


def adjusted_t_test(data: TrialData) -> EstimateResult:
    """Two-sample t-test on individual-level means with a clustering
    variance inflation factor.

    The intracluster correlation is estimated by one-way ANOVA moments
    pooled over arms (clusters nested in arms) and truncated below at 0;
    each arm's variance is inflated by 1 + (size-weighted mean cluster
    size - 1) * rho_hat.  Degrees of freedom are k1 + k2 - 2.
    """
    obs = data.observed
    stats_by_arm = {}
    ssw = 0.0
    ssc = 0.0
    sum_m2_over_M = 0.0
    total_n = 0
    total_k = 0
    for arm in (1, 2):
        sel = data.arm_mask(arm) & obs
        y = data.y[sel]
        cl = data.cluster[sel]
        if len(y) == 0:
            raise DegenerateDesignError("adjusted_t_test: an arm has no observed outcomes")
        cids, counts = np.unique(cl, return_counts=True)
        if len(cids) < 2:
            raise DegenerateDesignError(
                f"adjusted_t_test: arm {arm} has fewer than 2 clusters with data"
            )
        arm_mean = y.mean()
        cl_sums = np.array([y[cl == c].sum() for c in cids])
        cl_means = cl_sums / counts
        ssc += float((counts * (cl_means - arm_mean) ** 2).sum())
        ssw += float((y**2).sum() - (cl_sums**2 / counts).sum())
        M_i = len(y)
        stats_by_arm[arm] = {
            "mean": float(arm_mean),
            "M": M_i,
            "m_weighted": float((counts**2).sum() / M_i),
        }
        sum_m2_over_M += float((counts**2).sum() / M_i)
        total_n += M_i
        total_k += len(cids)

    df_c = total_k - 2
    df_w = total_n - total_k
    msc = ssc / df_c
    if df_w > 0:
        msw = ssw / df_w
        if msw <= 0:
            raise DegenerateVarianceError("adjusted_t_test: within-cluster mean square is zero")
    else:
        # All clusters are singletons; the ANOVA collapses to the classical
        # two-sample t-test below because m0 = 1 removes the MSW term.
        msw = 0.0
    m0 = (total_n - sum_m2_over_M) / df_c

    denom = msc + (m0 - 1.0) * msw
    if denom <= 0:
        raise DegenerateVarianceError("adjusted_t_test: ANOVA variance estimate is zero")
    rho_hat = (msc - msw) / denom
    rho_used = max(rho_hat, 0.0)
    s2 = denom / m0

    se2 = 0.0
    for arm in (1, 2):
        st = stats_by_arm[arm]
        vif = 1.0 + (st["m_weighted"] - 1.0) * rho_used
        se2 += s2 * vif / st["M"]
    if not np.isfinite(se2) or se2 <= 0:
        raise DegenerateVarianceError("adjusted_t_test: non-positive variance estimate")

    theta = stats_by_arm[2]["mean"] - stats_by_arm[1]["mean"]
    diag = {
        "rho_hat": float(rho_hat),
        "rho_used": float(rho_used),
        "m0": float(m0),
        "msc": float(msc),
        "msw": float(msw),
    }
    k1 = len(np.unique(data.cluster[data.arm_mask(1) & obs]))
    k2 = total_k - k1
    return t_test_result("AdjT", theta, float(np.sqrt(se2)), df_c, (k1, k2), diag)


def group_mean_impute(data: TrialData) -> TrialData:
    """Fill missing outcomes with their arm's observed mean."""
    out = data.copy()
    for arm in (1, 2):
        in_arm = data.arm_mask(arm)
        obs = in_arm & data.observed
        mis = in_arm & ~data.observed
        if not mis.any():
            continue
        if not obs.any():
            raise DegenerateDesignError(f"group_mean_impute: arm {arm} has no observed outcomes")
        out.y[mis] = data.y[obs].mean()
    out.observed = np.ones(data.n, dtype=bool)
    out.meta["imputation"] = "group_mean"
    return out


def cluster_mean_impute(data: TrialData) -> TrialData:
    """Fill missing outcomes with their own cluster's observed mean.

    Raises:
        FullyMissingClusterError: a cluster needs a fill value but has no
            observed outcome; the message names the offending cluster.
    """
    out = data.copy()
    for arm in (1, 2):
        in_arm = data.arm_mask(arm)
        for cid in np.unique(data.cluster[in_arm]):
            in_cl = in_arm & (data.cluster == cid)
            obs = in_cl & data.observed
            mis = in_cl & ~data.observed
            if not mis.any():
                continue
            if not obs.any():
                raise FullyMissingClusterError(
                    f"cluster_mean_impute: arm {arm} cluster {cid} has no observed outcomes"
                )
            out.y[mis] = data.y[obs].mean()
    out.observed = np.ones(data.n, dtype=bool)
    out.meta["imputation"] = "cluster_mean"
    return out
