"""Complete-data generator for two-arm cluster randomised trials.

Each individual l in cluster j of arm i gets

    y_ijl = alpha_i + beta_i * x_ijl + delta_ij + eps_ijl

with x ~ N(0, 1), cluster effects delta ~ N(0, rho * sigma_y2) and
residuals eps ~ N(0, (1 - tau_i**2 - rho) * sigma_y2), all independent.
The slope beta_i = tau_i * sigma_y makes corr(x, y) = tau_i and keeps the
marginal outcome variance at sigma_y2 in both arms.
"""

from __future__ import annotations

import numpy as np

from .types import OutcomeModel, TrialData, TrialDesign

__all__ = ["generate_trial", "population_effect"]


def generate_trial(
    design: TrialDesign, model: OutcomeModel, stream: np.random.Generator
) -> TrialData:
    """Draw one complete dataset.

    Rows come out sorted by (arm, cluster, individual).  The draw order is
    fixed (x, then cluster effects, then residuals) so a given stream state
    always yields the same dataset.

    Args:
        design: cluster layout to generate.
        model: outcome superpopulation parameters.
        stream: generator consumed by this call.

    Returns:
        A fully observed :class:`TrialData`.
    """
    sizes1 = design.sizes_for_arm(1)
    sizes2 = design.sizes_for_arm(2)
    k1, k2 = design.clusters_per_arm
    n1, n2 = int(sizes1.sum()), int(sizes2.sum())
    n = n1 + n2

    arm = np.repeat(np.array([1, 2], dtype=np.int8), [n1, n2])
    cluster = np.concatenate(
        [
            np.repeat(np.arange(1, k1 + 1, dtype=np.int32), sizes1),
            np.repeat(np.arange(1, k2 + 1, dtype=np.int32), sizes2),
        ]
    )
    individual = np.concatenate(
        [np.arange(1, m + 1, dtype=np.int32) for m in np.concatenate([sizes1, sizes2])]
    )

    x = stream.standard_normal(n)
    delta_by_cluster = stream.standard_normal(k1 + k2) * np.sqrt(model.sigma_b2)
    eps = stream.standard_normal(n)

    sizes_all = np.concatenate([sizes1, sizes2])
    delta = np.repeat(delta_by_cluster, sizes_all)

    alpha = np.where(arm == 1, model.alpha[0], model.alpha[1])
    beta = np.where(arm == 1, model.beta(1), model.beta(2))
    sigma_w = np.where(
        arm == 1, np.sqrt(model.sigma_w2(1)), np.sqrt(model.sigma_w2(2))
    )
    y = alpha + beta * x + delta + sigma_w * eps

    return TrialData(
        arm=arm,
        cluster=cluster,
        individual=individual,
        x=x,
        y=y,
        observed=np.ones(n, dtype=bool),
    )


def population_effect(model: OutcomeModel) -> float:
    """True arm-2 minus arm-1 mean difference.

    The covariate has mean zero, so the marginal arm means are the
    intercepts and the effect is alpha2 - alpha1.
    """
    return float(model.alpha[1] - model.alpha[0])
