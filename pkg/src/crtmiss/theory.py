"""Closed-form predictions for the cluster-level estimators under
covariate-dependent missingness.

For selection on the covariate only, the observed values within a cluster
of size m are, given the observed count S, iid draws from the selected
covariate law, and S is Binomial(m, p_obs).  The per-arm ingredients are

    mu_x_obs     = E[X | observed]            (Gauss-Hermite quadrature)
    eta_inv      = E[1/S | S >= 1]            (fixed-seed Monte Carlo)
    var_xbar_obs = Var(mean of observed X)    (fixed-seed Monte Carlo)

from which the expectation and variance of both cluster-level estimators
follow in closed form, including the probability limit of the pooled
covariate slope used by the adjusted estimator.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import expit

from .datagen import population_effect
from .errors import DegenerateVarianceError, ParameterError
from .missingness import MissingnessModel, _GH_W, _GH_X
from .types import OutcomeModel

__all__ = [
    "SelectionMoments",
    "selection_moments",
    "stage1_slope_limit",
    "TheoryPrediction",
    "predicted_bias_unadjusted",
    "predicted_bias_adjusted",
]

_MOMENT_SEED = 0x5EEDC0DE
_CHUNK = 100_000


@dataclass(frozen=True)
class SelectionMoments:
    """Observed-case covariate moments for one arm's mechanism.

    ``eta_inv`` is the reciprocal effective cluster size E[1/S | S >= 1];
    ``var_xbar_obs`` the across-cluster variance of the observed-case
    covariate mean.  Monte Carlo standard errors accompany the simulated
    quantities.
    """

    mu_x_obs: float
    var_xbar_obs: float
    eta_inv: float
    p_obs: float
    m: int
    n_clusters: int
    mc_se_eta_inv: float
    mc_se_var_xbar: float


def _selected_x_moments(phi0: float, phi1: float) -> tuple[float, float, float]:
    """(p_obs, E[X|obs], E[X^2|obs]) by quadrature over N(0,1)."""
    q = 1.0 - expit(phi0 + phi1 * _GH_X)
    p_obs = float(_GH_W @ q)
    if p_obs <= 0:
        raise DegenerateVarianceError("selection keeps no observations")
    ex = float(_GH_W @ (_GH_X * q)) / p_obs
    ex2 = float(_GH_W @ (_GH_X**2 * q)) / p_obs
    return p_obs, ex, ex2


@lru_cache(maxsize=64)
def _cached_moments(phi0: float, phi1: float, m: int, n_clusters: int) -> SelectionMoments:
    p_obs, ex, _ = _selected_x_moments(phi0, phi1)
    p_all_missing = (1.0 - p_obs) ** m
    if p_all_missing > 0.5:
        warnings.warn(
            f"P(cluster fully missing) = {p_all_missing:.3f} > 0.5; "
            "selection moments are unstable",
            stacklevel=3,
        )

    rng = np.random.default_rng(np.random.SeedSequence(_MOMENT_SEED))
    count = 0
    sum_inv = 0.0
    sum_inv2 = 0.0
    sums = np.zeros(4)  # raw power sums of xbar_obs
    remaining = n_clusters
    while remaining > 0:
        nc = min(_CHUNK, remaining)
        remaining -= nc
        x = rng.standard_normal((nc, m))
        u = rng.random((nc, m))
        observed = u >= expit(phi0 + phi1 * x)
        s = observed.sum(axis=1)
        keep = s >= 1
        if not keep.any():
            continue
        s_kept = s[keep].astype(np.float64)
        xbar = (x * observed).sum(axis=1)[keep] / s_kept
        count += int(keep.sum())
        inv = 1.0 / s_kept
        sum_inv += float(inv.sum())
        sum_inv2 += float((inv**2).sum())
        for r in range(4):
            sums[r] += float((xbar ** (r + 1)).sum())

    if count < 2:
        raise DegenerateVarianceError(
            "selection_moments: no clusters retained any observation"
        )
    eta_inv = sum_inv / count
    se_eta = float(np.sqrt(max(sum_inv2 / count - eta_inv**2, 0.0) / count))
    mean = sums[0] / count
    m2 = sums[1] / count - mean**2
    var_xbar = m2 * count / (count - 1)
    # Fourth central moment for the variance's Monte Carlo error.
    m4 = (
        sums[3] / count
        - 4 * mean * sums[2] / count
        + 6 * mean**2 * sums[1] / count
        - 3 * mean**4
    )
    se_var = float(np.sqrt(max(m4 - m2**2, 0.0) / count))
    return SelectionMoments(
        mu_x_obs=ex,
        var_xbar_obs=float(var_xbar),
        eta_inv=float(eta_inv),
        p_obs=p_obs,
        m=m,
        n_clusters=count,
        mc_se_eta_inv=se_eta,
        mc_se_var_xbar=se_var,
    )


def selection_moments(
    mech: tuple[float, float], m: int, n_clusters: int = 10**6
) -> SelectionMoments:
    """Moments of the observed-case covariate for one arm.

    Args:
        mech: (phi0, phi1) for this arm.
        m: cluster size.
        n_clusters: Monte Carlo size for the simulated moments (cached
            per argument tuple, fixed internal seed).
    """
    if m < 1:
        raise ParameterError(f"cluster size must be >= 1, got {m}")
    phi0, phi1 = float(mech[0]), float(mech[1])
    return _cached_moments(phi0, phi1, int(m), int(n_clusters))


def stage1_slope_limit(
    model: OutcomeModel,
    mech: MissingnessModel,
    arm_sizes: tuple[float, float] = (1.0, 1.0),
) -> float:
    """Probability limit of the pooled observed-case covariate slope.

    The stage-1 regression pools both arms, so its slope limit mixes the
    per-arm selected moments with weights proportional to the expected
    observed counts (arm size times observed fraction).

    Args:
        model: outcome superpopulation.
        mech: missingness mechanism for both arms.
        arm_sizes: relative planned sizes of the two arms.

    Returns:
        The limiting slope lambda*.
    """
    w = np.empty(2)
    ex = np.empty(2)
    ex2 = np.empty(2)
    ey = np.empty(2)
    exy = np.empty(2)
    for i, arm in enumerate((1, 2)):
        p_obs, e1, e2 = _selected_x_moments(mech.phi0[i], mech.phi1[i])
        beta = model.beta(arm)
        alpha = model.alpha[i]
        w[i] = arm_sizes[i] * p_obs
        ex[i] = e1
        ex2[i] = e2
        ey[i] = alpha + beta * e1
        exy[i] = alpha * e1 + beta * e2
    w = w / w.sum()
    mean_x = float(w @ ex)
    mean_y = float(w @ ey)
    var_x = float(w @ ex2) - mean_x**2
    cov_xy = float(w @ exy) - mean_x * mean_y
    if var_x <= 0:
        raise DegenerateVarianceError("stage1_slope_limit: selected covariate has no variance")
    return cov_xy / var_x


@dataclass(frozen=True)
class TheoryPrediction:
    """Predicted sampling behaviour of a cluster-level estimator."""

    expected_theta: float
    bias: float
    variance: float
    moments: tuple[SelectionMoments, SelectionMoments]
    lambda_star: float | None


def _arm_moments(mech: MissingnessModel, m: int, n_clusters: int):
    return tuple(
        selection_moments((mech.phi0[i], mech.phi1[i]), m, n_clusters) for i in (0, 1)
    )


def predicted_bias_unadjusted(
    model: OutcomeModel,
    mech: MissingnessModel,
    clusters_per_arm: tuple[int, int],
    m: int,
    n_clusters: int = 10**6,
) -> TheoryPrediction:
    """Expectation and variance of the unadjusted cluster-level estimator.

    Bias is beta_2 mu_x_obs,2 - beta_1 mu_x_obs,1 (the covariate mean is
    zero); the variance sums, per arm, the slope-scaled covariate-mean
    variance, the cluster variance and the residual variance scaled by
    the reciprocal effective cluster size, each divided by k_i.
    """
    mom = _arm_moments(mech, m, n_clusters)
    b = (model.beta(1), model.beta(2))
    bias = b[1] * mom[1].mu_x_obs - b[0] * mom[0].mu_x_obs
    variance = sum(
        (b[i] ** 2 * mom[i].var_xbar_obs + model.sigma_b2 + model.sigma_w2(i + 1) * mom[i].eta_inv)
        / clusters_per_arm[i]
        for i in (0, 1)
    )
    return TheoryPrediction(
        expected_theta=population_effect(model) + bias,
        bias=float(bias),
        variance=float(variance),
        moments=mom,
        lambda_star=None,
    )


def predicted_bias_adjusted(
    model: OutcomeModel,
    mech: MissingnessModel,
    clusters_per_arm: tuple[int, int],
    m: int,
    n_clusters: int = 10**6,
    arm_sizes: tuple[float, float] | None = None,
) -> TheoryPrediction:
    """Expectation and variance of the covariate-adjusted estimator.

    Identical structure to the unadjusted case with every slope beta_i
    replaced by beta_i - lambda*, where lambda* is the pooled stage-1
    slope limit.
    """
    if arm_sizes is None:
        s1 = clusters_per_arm[0] * m
        s2 = clusters_per_arm[1] * m
        arm_sizes = (float(s1), float(s2))
    lam = stage1_slope_limit(model, mech, arm_sizes)
    mom = _arm_moments(mech, m, n_clusters)
    b = (model.beta(1) - lam, model.beta(2) - lam)
    bias = b[1] * mom[1].mu_x_obs - b[0] * mom[0].mu_x_obs
    variance = sum(
        (b[i] ** 2 * mom[i].var_xbar_obs + model.sigma_b2 + model.sigma_w2(i + 1) * mom[i].eta_inv)
        / clusters_per_arm[i]
        for i in (0, 1)
    )
    return TheoryPrediction(
        expected_theta=population_effect(model) + bias,
        bias=float(bias),
        variance=float(variance),
        moments=mom,
        lambda_star=float(lam),
    )
