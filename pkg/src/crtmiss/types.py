"""Core data types shared by the generator, the estimators and the harness."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import ParameterError

__all__ = [
    "TrialDesign",
    "OutcomeModel",
    "TrialData",
    "EstimateResult",
    "t_interval",
    "t_test_result",
]

# Within-arm cluster ids stay below this, so (arm, cluster) packs into one int.
_CLUSTER_PACK = 1 << 32


@dataclass(frozen=True)
class TrialDesign:
    """Layout of a two-arm parallel cluster randomised trial.

    Attributes:
        clusters_per_arm: number of clusters (k1, k2), each at least 2.
        cluster_sizes: constant size ``m`` as an int, or a pair of
            per-cluster size sequences (one per arm).
        master_seed: 64-bit unsigned seed owned by this design; harness
            code derives replicate streams from it.
    """

    clusters_per_arm: tuple[int, int]
    cluster_sizes: int | tuple[Sequence[int], Sequence[int]]
    master_seed: int = 0

    def __post_init__(self) -> None:
        k1, k2 = self.clusters_per_arm
        if k1 < 2 or k2 < 2:
            raise ParameterError(
                f"each arm needs at least 2 clusters, got {self.clusters_per_arm}"
            )
        if not (0 <= int(self.master_seed) < 2**64):
            raise ParameterError("master_seed must fit in an unsigned 64-bit integer")
        for arm in (1, 2):
            sizes = self.sizes_for_arm(arm)
            if len(sizes) != self.clusters_per_arm[arm - 1]:
                raise ParameterError(
                    f"arm {arm} lists {len(sizes)} cluster sizes for "
                    f"{self.clusters_per_arm[arm - 1]} clusters"
                )
            if np.any(sizes < 1):
                raise ParameterError(f"arm {arm} has a non-positive cluster size")

    def sizes_for_arm(self, arm: int) -> np.ndarray:
        """Per-cluster sizes m_ij for one arm (1 or 2) as an int array."""
        k = self.clusters_per_arm[arm - 1]
        if isinstance(self.cluster_sizes, int):
            return np.full(k, self.cluster_sizes, dtype=np.int64)
        return np.asarray(self.cluster_sizes[arm - 1], dtype=np.int64)

    @property
    def total_individuals(self) -> int:
        return int(self.sizes_for_arm(1).sum() + self.sizes_for_arm(2).sum())


@dataclass(frozen=True)
class OutcomeModel:
    """Continuous-outcome superpopulation for a two-arm trial.

    The marginal outcome variance in each arm is ``sigma_y2``; it splits
    into a covariate slice ``tau_i**2 * sigma_y2``, a shared cluster slice
    ``rho * sigma_y2`` and an individual remainder.

    Attributes:
        alpha: arm intercepts (alpha1, alpha2).
        tau: per-arm covariate-outcome correlations.
        sigma_y2: total outcome variance, must be positive.
        rho: intracluster correlation, in [0, 1).
    """

    alpha: tuple[float, float]
    tau: tuple[float, float]
    sigma_y2: float
    rho: float

    def __post_init__(self) -> None:
        if not self.sigma_y2 > 0:
            raise ParameterError(f"sigma_y2 must be > 0, got {self.sigma_y2}")
        if not (0 <= self.rho < 1):
            raise ParameterError(f"rho must lie in [0, 1), got {self.rho}")
        for i, t in enumerate(self.tau):
            if t * t + self.rho >= 1:
                raise ParameterError(
                    f"tau[{i}]**2 + rho must be < 1, got "
                    f"{t}**2 + {self.rho} = {t * t + self.rho}"
                )

    def beta(self, arm: int) -> float:
        """Covariate slope beta_i = tau_i * sigma_y in arm ``arm``."""
        return self.tau[arm - 1] * float(np.sqrt(self.sigma_y2))

    @property
    def sigma_b2(self) -> float:
        """Between-cluster variance component (common to both arms)."""
        return self.rho * self.sigma_y2

    def sigma_w2(self, arm: int) -> float:
        """Individual-level residual variance in arm ``arm``."""
        t = self.tau[arm - 1]
        return (1.0 - t * t - self.rho) * self.sigma_y2


@dataclass
class TrialData:
    """One trial dataset in struct-of-arrays form.

    ``y`` always holds a value for every row; ``observed`` marks which
    outcomes an analyst would actually see.  Datasets loaded from disk may
    carry NaN in masked positions, freshly generated ones retain the true
    value so oracle checks can compare against it.

    Attributes:
        arm: 1 or 2 per individual.
        cluster: within-arm cluster id, 1-based.
        individual: within-cluster individual id, 1-based.
        x: individual-level covariate.
        y: outcome (possibly latent, see ``observed``).
        observed: outcome visibility flag.
        meta: free-form provenance notes; never serialised.
    """

    arm: np.ndarray
    cluster: np.ndarray
    individual: np.ndarray
    x: np.ndarray
    y: np.ndarray
    observed: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = len(self.arm)
        for name in ("cluster", "individual", "x", "y", "observed"):
            if len(getattr(self, name)) != n:
                raise ParameterError(f"column '{name}' has length != {n}")
        if n and not np.all((self.arm == 1) | (self.arm == 2)):
            raise ParameterError("arm column must contain only 1 and 2")

    @property
    def n(self) -> int:
        return len(self.arm)

    def arm_mask(self, arm: int) -> np.ndarray:
        return self.arm == arm

    def cluster_codes(self) -> tuple[np.ndarray, int]:
        """Dense 0-based cluster codes over both arms.

        Returns:
            ``(codes, n_clusters)`` where codes follow (arm, cluster) order.
        """
        packed = self.arm.astype(np.int64) * _CLUSTER_PACK + self.cluster.astype(np.int64)
        _, codes = np.unique(packed, return_inverse=True)
        return codes.astype(np.int64), int(codes.max()) + 1 if self.n else 0

    def with_columns(self, **columns: np.ndarray) -> "TrialData":
        """Copy of this dataset with some columns replaced."""
        return replace(self, **columns)

    def copy(self) -> "TrialData":
        return TrialData(
            arm=self.arm.copy(),
            cluster=self.cluster.copy(),
            individual=self.individual.copy(),
            x=self.x.copy(),
            y=self.y.copy(),
            observed=self.observed.copy(),
            meta=dict(self.meta),
        )


@dataclass(frozen=True)
class EstimateResult:
    """A fitted intervention effect with its frequentist summary.

    ``theta_hat`` estimates the arm-2 minus arm-1 mean difference.  The
    interval and p-value come from a t reference distribution with ``df``
    degrees of freedom (fractional df allowed).
    """

    method: str
    theta_hat: float
    se: float
    df: float
    ci_low: float
    ci_high: float
    p_value: float
    n_clusters_used: tuple[int, int]
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "theta_hat": self.theta_hat,
            "se": self.se,
            "df": self.df,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "p_value": self.p_value,
            "n_clusters_used": list(self.n_clusters_used),
            "diagnostics": _jsonable(self.diagnostics),
        }


def t_interval(theta: float, se: float, df: float, level: float = 0.95) -> tuple[float, float]:
    """Equal-tailed t interval around a point estimate."""
    half = stats.t.ppf(0.5 + level / 2.0, df) * se
    return theta - half, theta + half


def t_test_result(
    method: str,
    theta: float,
    se: float,
    df: float,
    n_clusters_used: tuple[int, int],
    diagnostics: dict | None = None,
    level: float = 0.95,
) -> EstimateResult:
    """Assemble an :class:`EstimateResult` from a t-based test."""
    lo, hi = t_interval(theta, se, df, level)
    tstat = theta / se
    p = 2.0 * float(stats.t.sf(abs(tstat), df))
    return EstimateResult(
        method=method,
        theta_hat=float(theta),
        se=float(se),
        df=float(df),
        ci_low=float(lo),
        ci_high=float(hi),
        p_value=p,
        n_clusters_used=n_clusters_used,
        diagnostics=diagnostics or {},
    )


def _jsonable(obj):
    """Recursively convert numpy scalars/arrays so json.dumps accepts them."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj
