"""Random-intercept linear mixed model fit by profiled REML.

The model for individual l in cluster j of arm i is

    y = W beta + b_cluster + eps,   b ~ N(0, sigma_b2),  eps ~ N(0, sigma_w2)

with W containing an intercept, the intervention indicator z (1 = arm 2),
optionally the covariate x (raw or centred) and optionally the z-by-x
interaction.  Estimation profiles beta and sigma_w2 out analytically and
maximises the scalar REML criterion over lam = sigma_b2 / sigma_w2; all
heavy lifting happens in a kernel backend (compiled or numpy).

Intervention-effect tests use a t reference with k1 + k2 - 2 degrees of
freedom, the cluster-level convention for two-arm parallel designs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DegenerateDesignError, ParameterError, SingularDesignError
from .kernels import active_backend
from .missingness import ScenarioSpec
from .types import EstimateResult, TrialData, t_test_result

__all__ = [
    "LmmSpec",
    "LmmFit",
    "design_matrix",
    "fit_reml",
    "profile_loglik",
    "wald_intervention",
    "analyze_lmm_cca",
]


@dataclass(frozen=True)
class LmmSpec:
    """Fixed-effects layout for the mixed model.

    An interaction requires the covariate and centring, so the z
    coefficient keeps its marginal-effect reading at the covariate mean.
    """

    include_covariate: bool = True
    include_interaction: bool = False
    center_covariate: bool = False

    def __post_init__(self) -> None:
        if self.include_interaction and not (self.include_covariate and self.center_covariate):
            raise ParameterError(
                "include_interaction requires include_covariate and center_covariate"
            )

    @property
    def column_names(self) -> tuple[str, ...]:
        names = ["intercept", "z"]
        if self.include_covariate:
            names.append("x")
        if self.include_interaction:
            names.append("z:x")
        return tuple(names)


@dataclass(frozen=True)
class LmmFit:
    """A converged (or boundary) REML fit."""

    beta: np.ndarray
    vcov: np.ndarray
    column_names: tuple[str, ...]
    sigma_b2: float
    sigma_w2: float
    lam: float
    reml_loglik: float
    converged: bool
    n_obs: int
    clusters_used: tuple[int, int]
    center: float | None

    def coef(self, name: str) -> float:
        return float(self.beta[self.column_names.index(name)])

    def coef_se(self, name: str) -> float:
        i = self.column_names.index(name)
        return float(np.sqrt(self.vcov[i, i]))


def design_matrix(
    arm: np.ndarray, x: np.ndarray, spec: LmmSpec, center: float
) -> np.ndarray:
    """Assemble the fixed-effects matrix for given arm labels and covariates."""
    n = len(arm)
    cols = [np.ones(n), (arm == 2).astype(np.float64)]
    if spec.include_covariate:
        xc = x - center if spec.center_covariate else x
        cols.append(xc)
    if spec.include_interaction:
        cols.append(cols[1] * cols[2])
    return np.column_stack(cols)


def _prepare(data: TrialData, spec: LmmSpec):
    """Sorted analysis arrays for the kernels, built from observed rows."""
    obs = data.observed
    n_obs = int(obs.sum())
    if n_obs == 0:
        raise DegenerateDesignError("fit_reml: no observed outcomes")
    arm = data.arm[obs]
    x = data.x[obs]
    y = data.y[obs]
    packed = arm.astype(np.int64) * (1 << 32) + data.cluster[obs].astype(np.int64)
    uniq, codes = np.unique(packed, return_inverse=True)
    order = np.argsort(codes, kind="stable")
    sizes = np.bincount(codes).astype(np.int64)

    k1 = int((uniq < (2 << 32)).sum())
    k2 = len(uniq) - k1
    if k1 < 2 or k2 < 2:
        raise DegenerateDesignError(
            f"fit_reml: need >= 2 clusters with data per arm, got ({k1}, {k2})"
        )

    center = float(x.mean()) if spec.center_covariate else 0.0
    W = design_matrix(arm[order], x[order], spec, center)
    if n_obs <= W.shape[1]:
        raise DegenerateDesignError(
            f"fit_reml: {n_obs} observations cannot identify {W.shape[1]} fixed effects"
        )
    return W, y[order], sizes, (k1, k2), center


def fit_reml(data: TrialData, spec: LmmSpec, backend=None) -> LmmFit:
    """Fit the mixed model to the observed rows of ``data``.

    Args:
        data: trial dataset; masked outcomes are excluded (complete-case).
        spec: fixed-effects layout.
        backend: kernel backend override, mainly for tests and benchmarks.

    Returns:
        The fitted :class:`LmmFit`; ``sigma_b2 == 0`` boundary solutions
        count as converged.

    Raises:
        DegenerateDesignError: too little data to identify the model.
        SingularDesignError: collinear fixed-effects columns.
        ConvergenceError: no variance ratio gave a valid criterion.
    """
    backend = backend or active_backend()
    W, y, sizes, clusters_used, center = _prepare(data, spec)
    beta, vcov, sw2, sb2, lam, ll = backend.reml_fit(W, y, sizes)
    if not np.isfinite(ll):
        if np.linalg.matrix_rank(W) < W.shape[1]:
            raise SingularDesignError("fit_reml: fixed-effects design is rank deficient")
        raise ConvergenceError("fit_reml: REML criterion is degenerate for all variance ratios")
    return LmmFit(
        beta=beta,
        vcov=vcov,
        column_names=spec.column_names,
        sigma_b2=float(sb2),
        sigma_w2=float(sw2),
        lam=float(lam),
        reml_loglik=float(ll),
        converged=True,
        n_obs=len(y),
        clusters_used=clusters_used,
        center=center if spec.center_covariate else None,
    )


def profile_loglik(data: TrialData, spec: LmmSpec, lam: float, backend=None) -> float:
    """Profiled REML criterion at an arbitrary variance ratio ``lam``."""
    backend = backend or active_backend()
    W, y, sizes, _, _ = _prepare(data, spec)
    return float(backend.reml_profile_loglik(W, y, sizes, lam))


def wald_intervention(fit: LmmFit, df: float | None = None) -> EstimateResult:
    """t-based test and interval for the intervention coefficient.

    Args:
        fit: a converged REML fit.
        df: reference degrees of freedom; defaults to k1 + k2 - 2.
    """
    if df is None:
        df = fit.clusters_used[0] + fit.clusters_used[1] - 2
    theta = fit.coef("z")
    se = fit.coef_se("z")
    diag = {
        "sigma_b2": fit.sigma_b2,
        "sigma_w2": fit.sigma_w2,
        "lam": fit.lam,
        "reml_loglik": fit.reml_loglik,
        "center": fit.center,
    }
    return t_test_result("LMM", theta, se, float(df), fit.clusters_used, diag)


def analyze_lmm_cca(data: TrialData, scenario: ScenarioSpec, backend=None) -> EstimateResult:
    """Complete-case mixed-model analysis for one study scenario.

    The fixed effects always include the covariate; scenarios with
    arm-specific slopes add the centred interaction so the z coefficient
    still targets the marginal intervention effect.
    """
    spec = LmmSpec(
        include_covariate=True,
        include_interaction=scenario.interaction_in_analysis,
        center_covariate=scenario.interaction_in_analysis,
    )
    fit = fit_reml(data, spec, backend=backend)
    return wald_intervention(fit)
