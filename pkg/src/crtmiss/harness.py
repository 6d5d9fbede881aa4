"""Monte Carlo harness: replicate loop, aggregation and reference checks.

A :class:`SimCell` fixes one grid point (scenario, clusters per arm,
intracluster correlation).  Replicates are embarrassingly parallel and
deterministic: replicate r of master seed s always sees the same three
random streams regardless of worker count or execution order, so the
aggregated output is worker-invariant.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .cluster import adjusted_cluster_level, unadjusted_cluster_level
from .datagen import generate_trial, population_effect
from .errors import CrtmissError, ParameterError
from .lmm import analyze_lmm_cca
from .mi import ImputationConfig, analyze_mi
from .missingness import apply_missingness, scenario
from .reference import (
    MC_BOUND_ESTIMATE,
    MC_BOUND_SE,
    METHODS,
    K_LEVELS,
    REFERENCE_N_SIMS,
    RHO_LEVELS,
    SCENARIO_IDS_WITH_REFERENCE,
    reference_cell,
)
from .streams import replicate_streams
from .types import EstimateResult, OutcomeModel, TrialDesign

__all__ = [
    "SimCell",
    "ReplicateRecord",
    "SimSummary",
    "CellResult",
    "run_replicate",
    "run_cell",
    "run_grid",
    "full_grid_cells",
    "ComparisonRow",
    "ComparisonReport",
    "compare_to_reference",
    "resolve_workers",
]

DEFAULT_ALPHA = (20.0, 25.0)
DEFAULT_SIGMA_Y2 = 100.0
WORKERS_ENV_VAR = "CRT_MISSING_WORKERS"


@dataclass(frozen=True)
class SimCell:
    """One simulation grid point."""

    scenario_id: int
    k: int
    rho: float
    n_sims: int
    master_seed: int
    m: int = 30
    methods: tuple[str, ...] = METHODS
    mi_config: ImputationConfig = field(default_factory=ImputationConfig)

    def __post_init__(self) -> None:
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ParameterError(f"unknown methods {sorted(unknown)}; valid: {METHODS}")
        if self.n_sims < 1:
            raise ParameterError("n_sims must be >= 1")

    def model(self) -> OutcomeModel:
        spec = scenario(self.scenario_id)
        return OutcomeModel(
            alpha=DEFAULT_ALPHA, tau=spec.tau, sigma_y2=DEFAULT_SIGMA_Y2, rho=self.rho
        )

    def design(self) -> TrialDesign:
        return TrialDesign(
            clusters_per_arm=(self.k, self.k),
            cluster_sizes=self.m,
            master_seed=self.master_seed,
        )


@dataclass(frozen=True)
class ReplicateRecord:
    """Result of one method on one replicate."""

    rep: int
    method: str
    theta_hat: float
    se: float
    df: float
    ci_low: float
    ci_high: float
    covers: bool
    converged: bool
    nu_adj: float
    error: str = ""


@dataclass(frozen=True)
class SimSummary:
    """Aggregated results for one method in one cell."""

    scenario_id: int
    rho: float
    k: int
    m: int
    n_sims: int
    method: str
    avg_estimate: float
    avg_se: float
    empirical_sd: float
    coverage_pct: float
    mc_error_estimate: float
    mc_error_se: float
    n_converged: int
    n_failed: int
    avg_nu_adj: float
    nu_adj_max: float
    flagged: bool


@dataclass(frozen=True)
class CellResult:
    cell: SimCell
    summaries: tuple[SimSummary, ...]
    records: tuple[ReplicateRecord, ...] | None


def run_replicate(cell: SimCell, rep: int) -> list[ReplicateRecord]:
    """Generate, mask and analyse one replicate with every cell method."""
    spec = scenario(cell.scenario_id)
    model = cell.model()
    design = cell.design()
    truth = population_effect(model)
    streams = replicate_streams(cell.master_seed, rep)
    complete = generate_trial(design, model, streams.datagen)
    incomplete = apply_missingness(complete, spec.missingness, streams.missingness)

    records = []
    for method in cell.methods:
        try:
            if method == "Uadj":
                res = unadjusted_cluster_level(incomplete)
            elif method == "Adj":
                res = adjusted_cluster_level(incomplete)
            elif method == "LMM":
                res = analyze_lmm_cca(incomplete, spec)
            else:
                res = analyze_mi(incomplete, spec, cell.mi_config, streams.imputation)
            records.append(_record_from_result(rep, method, res, truth))
        except CrtmissError as exc:
            records.append(
                ReplicateRecord(
                    rep=rep,
                    method=method,
                    theta_hat=np.nan,
                    se=np.nan,
                    df=np.nan,
                    ci_low=np.nan,
                    ci_high=np.nan,
                    covers=False,
                    converged=False,
                    nu_adj=np.nan,
                    error=f"{type(exc).__name__}: {exc}",
                )
            )
    return records


def _record_from_result(
    rep: int, method: str, res: EstimateResult, truth: float
) -> ReplicateRecord:
    nu_adj = float(res.diagnostics.get("nu_adj", np.nan)) if method == "MI" else np.nan
    return ReplicateRecord(
        rep=rep,
        method=method,
        theta_hat=res.theta_hat,
        se=res.se,
        df=res.df,
        ci_low=res.ci_low,
        ci_high=res.ci_high,
        covers=bool(res.ci_low <= truth <= res.ci_high),
        converged=True,
        nu_adj=nu_adj,
    )


def _chunk_worker(args) -> tuple[int, list[ReplicateRecord]]:
    cell, start, stop = args
    out: list[ReplicateRecord] = []
    for rep in range(start, stop):
        out.extend(run_replicate(cell, rep))
    return start, out


def resolve_workers(workers: int | None) -> int:
    """Explicit argument wins; otherwise the environment, default 1."""
    if workers is not None:
        return max(1, int(workers))
    return max(1, int(os.environ.get(WORKERS_ENV_VAR, "1")))


def run_cell(
    cell: SimCell, workers: int | None = None, keep_replicates: bool = False
) -> CellResult:
    """Run all replicates of one cell and aggregate per method.

    Args:
        cell: the grid point.
        workers: process count; ``None`` reads ``CRT_MISSING_WORKERS``
            (default 1).  Output is identical for any worker count.
        keep_replicates: also return the per-replicate records.

    Returns:
        The per-method summaries, flagged when more than 1% of replicates
        failed (partial results are still reported).
    """
    n_workers = resolve_workers(workers)
    records: list[ReplicateRecord] = []
    if n_workers == 1:
        for rep in range(cell.n_sims):
            records.extend(run_replicate(cell, rep))
    else:
        chunk = max(1, -(-cell.n_sims // (4 * n_workers)))
        tasks = [
            (cell, start, min(start + chunk, cell.n_sims))
            for start in range(0, cell.n_sims, chunk)
        ]
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            for _, chunk_records in sorted(pool.map(_chunk_worker, tasks)):
                records.extend(chunk_records)

    summaries = tuple(
        _aggregate(cell, method, [r for r in records if r.method == method])
        for method in cell.methods
    )
    return CellResult(
        cell=cell,
        summaries=summaries,
        records=tuple(records) if keep_replicates else None,
    )


def _aggregate(cell: SimCell, method: str, records: list[ReplicateRecord]) -> SimSummary:
    ok = [r for r in records if r.converged]
    n_failed = len(records) - len(ok)
    if len(ok) >= 2:
        theta = np.array([r.theta_hat for r in ok])
        ses = np.array([r.se for r in ok])
        covers = np.array([r.covers for r in ok])
        avg_estimate = float(theta.mean())
        avg_se = float(ses.mean())
        empirical_sd = float(theta.std(ddof=1))
        coverage_pct = float(100.0 * covers.mean())
        mc_err_est = empirical_sd / np.sqrt(len(ok))
        mc_err_se = float(ses.std(ddof=1) / np.sqrt(len(ok)))
    else:
        avg_estimate = avg_se = empirical_sd = coverage_pct = np.nan
        mc_err_est = mc_err_se = np.nan
    if method == "MI" and ok:
        nus = np.array([r.nu_adj for r in ok])
        avg_nu_adj = float(nus.mean())
        nu_adj_max = float(nus.max())
    else:
        avg_nu_adj = nu_adj_max = np.nan
    return SimSummary(
        scenario_id=cell.scenario_id,
        rho=cell.rho,
        k=cell.k,
        m=cell.m,
        n_sims=cell.n_sims,
        method=method,
        avg_estimate=avg_estimate,
        avg_se=avg_se,
        empirical_sd=empirical_sd,
        coverage_pct=coverage_pct,
        mc_error_estimate=float(mc_err_est),
        mc_error_se=mc_err_se,
        n_converged=len(ok),
        n_failed=n_failed,
        avg_nu_adj=avg_nu_adj,
        nu_adj_max=nu_adj_max,
        flagged=n_failed > 0.01 * cell.n_sims,
    )


def full_grid_cells(
    master_seed: int,
    n_sims: int,
    methods: tuple[str, ...] = METHODS,
    m: int = 30,
    scenarios: tuple[int, ...] = SCENARIO_IDS_WITH_REFERENCE,
    mi_config: ImputationConfig | None = None,
) -> list[SimCell]:
    """The full published grid: scenarios x rho x k."""
    mi_config = mi_config or ImputationConfig()
    return [
        SimCell(
            scenario_id=sid,
            k=k,
            rho=rho,
            n_sims=n_sims,
            master_seed=master_seed,
            m=m,
            methods=methods,
            mi_config=mi_config,
        )
        for sid in scenarios
        for rho in RHO_LEVELS
        for k in K_LEVELS
    ]


def run_grid(
    cells: list[SimCell], workers: int | None = None, keep_replicates: bool = False
) -> list[CellResult]:
    return [run_cell(cell, workers=workers, keep_replicates=keep_replicates) for cell in cells]


# ---------------------------------------------------------------------------
# Reference comparison


@dataclass(frozen=True)
class ComparisonRow:
    scenario_id: int
    rho: float
    k: int
    method: str
    metric: str
    simulated: float
    reference: float
    tolerance: float
    passed: bool


@dataclass(frozen=True)
class ComparisonReport:
    rows: tuple[ComparisonRow, ...]
    skipped: tuple[str, ...]

    @property
    def n_failed(self) -> int:
        return sum(not r.passed for r in self.rows)

    @property
    def passed(self) -> bool:
        return self.n_failed == 0 and len(self.rows) > 0

    def to_markdown(self) -> str:
        lines = [
            "# Comparison against reference tables",
            "",
            f"{len(self.rows)} checks, {self.n_failed} failed.",
            "",
            "| scenario | rho | k | method | metric | simulated | reference | tolerance | result |",
            "|---|---|---|---|---|---|---|---|---|",
        ]
        for r in self.rows:
            lines.append(
                f"| {r.scenario_id} | {r.rho} | {r.k} | {r.method} | {r.metric} "
                f"| {r.simulated:.3f} | {r.reference:.3f} | {r.tolerance:.3f} "
                f"| {'pass' if r.passed else 'FAIL'} |"
            )
        if self.skipped:
            lines.append("")
            lines.append("Skipped (no reference values): " + ", ".join(self.skipped))
        lines.append("")
        return "\n".join(lines)


def compare_to_reference(
    summaries: list[SimSummary],
    se_tolerance: float = 0.05,
    coverage_base_tolerance: float = 1.5,
) -> ComparisonReport:
    """Check simulation summaries against the embedded reference tables.

    Estimate tolerance is the reference run's Monte Carlo bound plus this
    run's own Monte Carlo error.  SE tolerance is absolute.  Coverage
    tolerance is ``coverage_base_tolerance`` percentage points at the
    reference replicate count, scaled by sqrt(reference_n / n).
    """
    rows = []
    skipped = []
    for s in summaries:
        key = (s.scenario_id, s.rho, s.k)
        try:
            ref = reference_cell(*key)[s.method]
        except KeyError:
            skipped.append(f"scenario {s.scenario_id} rho {s.rho} k {s.k} {s.method}")
            continue
        tol_est = MC_BOUND_ESTIMATE[s.scenario_id] + s.mc_error_estimate
        tol_cov = coverage_base_tolerance * float(np.sqrt(REFERENCE_N_SIMS / s.n_converged))
        checks = [
            ("estimate", s.avg_estimate, ref["estimate"], tol_est),
            ("se", s.avg_se, ref["se"], se_tolerance + MC_BOUND_SE[s.scenario_id]),
            ("coverage", s.coverage_pct, ref["coverage"], tol_cov),
        ]
        for metric, sim, refv, tol in checks:
            rows.append(
                ComparisonRow(
                    scenario_id=s.scenario_id,
                    rho=s.rho,
                    k=s.k,
                    method=s.method,
                    metric=metric,
                    simulated=float(sim),
                    reference=float(refv),
                    tolerance=float(tol),
                    passed=bool(abs(sim - refv) <= tol),
                )
            )
    return ComparisonReport(rows=tuple(rows), skipped=tuple(skipped))
