"""Published reference results used as regression fixtures.

The values below summarise a large (10000-replicate) reference run of the
same simulation design: per scenario, for each intracluster correlation
``rho`` and clusters-per-arm ``k``, the average intervention-effect
estimate, average estimated standard error and empirical coverage of the
nominal 95% interval for the four analysis methods, plus (scenario 4
only) the average small-sample MI degrees of freedom.  Reported Monte
Carlo error bounds accompany each summary table.

``comparison`` in the harness checks fresh simulation output against
these numbers at tolerances that account for both runs' Monte Carlo
error.
"""

from __future__ import annotations

METHODS = ("Uadj", "Adj", "LMM", "MI")

RHO_LEVELS = (0.1, 0.05, 0.001)
K_LEVELS = (5, 10, 20, 30)
TRUE_EFFECT = 5.0
REFERENCE_N_SIMS = 10_000

# Monte Carlo error bounds quoted with each summary table.
MC_BOUND_ESTIMATE = {1: 0.023, 2: 0.025, 3: 0.024, 4: 0.025}
MC_BOUND_SE = {1: 0.016, 2: 0.017, 3: 0.016, 4: 0.018}

# Per (scenario, rho, k): 12 values = estimates, SEs, coverages, each in
# METHODS order.
_ROWS = {
    # Scenario 1: same mechanisms (30%/30%), same covariate effects.
    (1, 0.1, 5): (4.98, 4.99, 4.99, 4.98, 2.31, 2.21, 2.23, 2.19, 95.2, 95.1, 95.2, 96.3),
    (1, 0.1, 10): (5.01, 4.98, 5.00, 4.99, 1.66, 1.59, 1.60, 1.59, 95.1, 95.3, 95.3, 95.5),
    (1, 0.1, 20): (4.99, 4.99, 4.99, 4.99, 1.18, 1.14, 1.14, 1.14, 94.9, 95.0, 94.9, 94.8),
    (1, 0.1, 30): (5.01, 5.00, 5.01, 5.01, 0.97, 0.93, 0.93, 0.93, 95.0, 95.0, 94.9, 95.0),
    (1, 0.05, 5): (5.00, 4.98, 5.00, 5.00, 1.88, 1.76, 1.78, 1.76, 95.2, 95.1, 95.6, 96.2),
    (1, 0.05, 10): (5.01, 5.00, 5.01, 5.01, 1.35, 1.28, 1.28, 1.26, 95.1, 95.2, 95.1, 95.4),
    (1, 0.05, 20): (5.01, 5.00, 5.01, 5.01, 0.96, 0.91, 0.91, 0.90, 95.0, 95.0, 95.1, 95.0),
    (1, 0.05, 30): (4.99, 4.99, 4.99, 4.99, 0.79, 0.75, 0.74, 0.74, 95.0, 95.0, 95.0, 95.0),
    (1, 0.001, 5): (4.98, 4.98, 4.99, 4.99, 1.34, 1.18, 1.31, 1.35, 95.2, 95.1, 96.2, 99.6),
    (1, 0.001, 10): (5.01, 5.00, 5.01, 5.01, 0.96, 0.85, 0.90, 0.93, 95.1, 95.1, 96.8, 97.8),
    (1, 0.001, 20): (4.99, 4.99, 5.00, 5.00, 0.69, 0.61, 0.63, 0.64, 94.8, 94.9, 96.2, 96.7),
    (1, 0.001, 30): (5.00, 5.00, 5.00, 5.00, 0.56, 0.50, 0.51, 0.52, 95.1, 95.3, 96.2, 96.8),
    # Scenario 2: different mechanisms (30%/60%), same covariate effects.
    (2, 0.1, 5): (3.83, 4.94, 5.01, 5.01, 2.44, 2.32, 2.34, 2.28, 93.2, 95.1, 95.2, 97.0),
    (2, 0.1, 10): (3.81, 4.94, 5.03, 5.03, 1.76, 1.67, 1.68, 1.66, 89.9, 95.4, 95.2, 95.5),
    (2, 0.1, 20): (3.78, 4.91, 5.00, 4.99, 1.25, 1.19, 1.19, 1.19, 84.2, 94.9, 94.8, 94.8),
    (2, 0.1, 30): (3.79, 4.93, 5.01, 5.01, 1.02, 0.98, 0.98, 0.98, 79.1, 95.4, 95.3, 95.4),
    (2, 0.05, 5): (3.77, 4.90, 4.98, 4.98, 2.04, 1.90, 1.94, 1.92, 91.7, 94.9, 95.7, 98.3),
    (2, 0.05, 10): (3.78, 4.90, 5.00, 4.99, 1.48, 1.38, 1.38, 1.36, 87.5, 95.0, 95.0, 95.8),
    (2, 0.05, 20): (3.76, 4.92, 4.98, 4.98, 1.05, 0.98, 0.98, 0.97, 79.4, 95.2, 95.1, 95.1),
    (2, 0.05, 30): (3.77, 4.92, 4.99, 4.99, 0.86, 0.80, 0.80, 0.80, 70.7, 94.8, 94.6, 94.7),
    (2, 0.001, 5): (3.77, 4.89, 5.00, 5.00, 1.58, 1.39, 1.54, 1.60, 89.4, 95.1, 98.3, 99.7),
    (2, 0.001, 10): (3.76, 4.89, 4.99, 4.98, 1.14, 1.01, 1.06, 1.10, 82.1, 95.0, 97.3, 98.5),
    (2, 0.001, 20): (3.78, 4.91, 5.00, 5.00, 0.81, 0.72, 0.74, 0.76, 68.8, 95.2, 96.4, 97.3),
    (2, 0.001, 30): (3.78, 4.92, 5.00, 5.00, 0.66, 0.59, 0.60, 0.61, 56.1, 94.9, 95.8, 96.5),
    # Scenario 3: same mechanisms, different covariate effects.
    (3, 0.1, 5): (4.46, 4.44, 4.97, 4.97, 2.31, 2.22, 2.25, 2.22, 94.3, 94.3, 95.0, 96.4),
    (3, 0.1, 10): (4.50, 4.49, 5.01, 5.02, 1.66, 1.59, 1.61, 1.60, 93.7, 93.6, 94.7, 94.8),
    (3, 0.1, 20): (4.48, 4.48, 5.00, 5.00, 1.19, 1.14, 1.15, 1.15, 92.5, 92.6, 94.9, 94.9),
    (3, 0.1, 30): (4.49, 4.49, 5.00, 5.00, 0.97, 0.93, 0.94, 0.94, 91.3, 91.2, 94.7, 94.7),
    (3, 0.05, 5): (4.45, 4.43, 4.96, 4.97, 1.88, 1.76, 1.81, 1.80, 94.0, 93.7, 95.3, 97.1),
    (3, 0.05, 10): (4.51, 4.49, 5.01, 5.01, 1.36, 1.28, 1.30, 1.29, 93.7, 93.4, 95.0, 95.5),
    (3, 0.05, 20): (4.50, 4.50, 5.01, 5.01, 0.97, 0.91, 0.92, 0.92, 91.9, 91.6, 94.8, 94.8),
    (3, 0.05, 30): (4.50, 4.50, 5.01, 5.01, 0.79, 0.75, 0.76, 0.75, 90.4, 89.8, 94.6, 94.6),
    (3, 0.001, 5): (4.48, 4.46, 4.99, 4.99, 1.34, 1.18, 1.35, 1.39, 93.4, 93.5, 98.1, 99.4),
    (3, 0.001, 10): (4.50, 4.49, 5.02, 5.01, 0.96, 0.85, 0.93, 0.96, 92.3, 91.6, 96.9, 97.9),
    (3, 0.001, 20): (4.49, 4.49, 5.00, 5.00, 0.69, 0.61, 0.65, 0.66, 88.9, 87.2, 96.3, 96.8),
    (3, 0.001, 30): (4.48, 4.48, 4.99, 4.99, 0.56, 0.50, 0.52, 0.54, 84.9, 81.6, 95.6, 96.3),
    # Scenario 4: different mechanisms and different covariate effects.
    (4, 0.1, 5): (3.02, 4.09, 5.00, 5.00, 2.44, 2.31, 2.42, 2.37, 89.0, 93.4, 95.7, 98.1),
    (4, 0.1, 10): (3.03, 4.10, 5.01, 5.01, 1.76, 1.67, 1.73, 1.71, 82.0, 93.5, 95.8, 96.3),
    (4, 0.1, 20): (3.03, 4.11, 5.01, 5.01, 1.25, 1.19, 1.23, 1.23, 66.6, 88.8, 95.6, 95.6),
    (4, 0.1, 30): (3.03, 4.11, 5.01, 5.02, 1.02, 0.97, 1.01, 1.01, 52.8, 85.9, 95.2, 95.2),
    (4, 0.05, 5): (3.02, 4.10, 5.01, 5.01, 2.05, 1.89, 2.06, 2.04, 87.0, 93.9, 96.5, 99.0),
    (4, 0.05, 10): (3.02, 4.10, 5.01, 5.01, 1.47, 1.36, 1.45, 1.44, 75.9, 90.4, 95.7, 96.7),
    (4, 0.05, 20): (3.01, 4.08, 4.98, 4.98, 1.05, 0.98, 1.03, 1.03, 55.3, 84.9, 95.8, 95.9),
    (4, 0.05, 30): (3.02, 4.10, 5.01, 5.00, 0.86, 0.80, 0.84, 0.84, 38.0, 81.1, 95.6, 95.7),
    (4, 0.001, 5): (3.02, 4.07, 4.99, 4.99, 1.57, 1.37, 1.69, 1.75, 80.4, 91.1, 98.5, 99.8),
    (4, 0.001, 10): (3.03, 4.10, 5.00, 5.00, 1.13, 0.99, 1.17, 1.21, 63.0, 87.6, 97.6, 98.7),
    (4, 0.001, 20): (3.02, 4.10, 5.00, 5.00, 0.81, 0.71, 0.81, 0.84, 33.4, 77.7, 97.0, 97.7),
    (4, 0.001, 30): (3.01, 4.10, 5.00, 5.00, 0.66, 0.58, 0.66, 0.68, 16.7, 67.9, 96.5, 97.1),
}

# Scenario 4 MI degrees of freedom: (rho, k) -> (nu_com, average nu_adj,
# upper 2.5% t point at nu_com, same at nu_adj).
MI_DF_TABLE = {
    (0.1, 5): (8, 4.58, 2.31, 2.64),
    (0.1, 10): (18, 11.72, 2.10, 2.18),
    (0.1, 20): (38, 25.71, 2.02, 2.06),
    (0.1, 30): (58, 38.74, 2.00, 2.02),
    (0.05, 5): (8, 3.92, 2.31, 2.80),
    (0.05, 10): (18, 9.64, 2.10, 2.24),
    (0.05, 20): (38, 20.61, 2.02, 2.08),
    (0.05, 30): (58, 30.18, 2.00, 2.04),
    (0.001, 5): (8, 3.12, 2.31, 3.11),
    (0.001, 10): (18, 7.12, 2.10, 2.36),
    (0.001, 20): (38, 13.73, 2.02, 2.14),
    (0.001, 30): (58, 19.01, 2.00, 2.09),
}


def reference_cell(scenario_id: int, rho: float, k: int) -> dict[str, dict[str, float]]:
    """Reference summaries for one grid cell.

    Returns:
        ``{method: {"estimate": ..., "se": ..., "coverage": ...}}``.
    """
    row = _ROWS[(scenario_id, rho, k)]
    out = {}
    for i, method in enumerate(METHODS):
        out[method] = {
            "estimate": row[i],
            "se": row[4 + i],
            "coverage": row[8 + i],
        }
    return out


def reference_cells() -> list[tuple[int, float, int]]:
    """All (scenario, rho, k) keys with reference values, in table order."""
    return sorted(_ROWS.keys())
