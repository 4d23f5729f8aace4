"""Business evaluation of uplift forests.

Customers are ranked by predicted ITE and cut into deciles. Each decile gets an
evaluation board row (records, purchasers, revenue per group, incremental
revenue); the incremental cumulative revenue (ICR) curve is the running sum of
the per-decile incremental revenue. Experiments repeat this over partitions,
arms and outcome modes and aggregate into an UpliftReport.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, computed_field

from causal_forest import variable_importance
from dataset import Dataset, OutcomeKind, PartitionScheme, partition, select_outcome, setting_label
from errors import CompositionError, EvaluationError, SizingError, UpliftError
from multi_treatment import Scheme, fit_multi, predict_all
from trees import ForestConfig, nuisance_config

logger = logging.getLogger(__name__)

N_DECILES = 10
TOP_DECILES = 3
HISTOGRAM_BINS = 20
AGGREGATION = "median over deciles within each partition, then mean across partitions"


class DecileRow(BaseModel):
    """One decile of an evaluation board.

    Per-person and incremental fields are None when either group is empty.
    """
    decile: int
    records_t: int
    records_c: int
    purchasers_t: int
    purchasers_c: int
    revenue_sum_t: float
    revenue_sum_c: float

    @computed_field
    @property
    def valid(self) -> bool:
        return self.records_t > 0 and self.records_c > 0

    @computed_field
    @property
    def revenue_pp_t(self) -> Optional[float]:
        return self.revenue_sum_t / self.records_t if self.valid else None

    @computed_field
    @property
    def revenue_pp_c(self) -> Optional[float]:
        return self.revenue_sum_c / self.records_c if self.valid else None

    @computed_field
    @property
    def delta_pp(self) -> Optional[float]:
        return self.revenue_pp_t - self.revenue_pp_c if self.valid else None

    @computed_field
    @property
    def delta_sum(self) -> Optional[float]:
        return self.delta_pp * (self.records_t + self.records_c) if self.valid else None


class EvaluationBoard(BaseModel):
    rows: List[DecileRow]
    partition: int = 0

    @property
    def invalid_deciles(self) -> List[int]:
        return [row.decile for row in self.rows if not row.valid]

    @property
    def size(self) -> int:
        return sum(row.records_t + row.records_c for row in self.rows)


class IcrCurve(BaseModel):
    values: List[float]
    partition: int = 0

    @property
    def median(self) -> float:
        return float(np.median(self.values))


class IteSummary(BaseModel):
    min: float
    q1: float
    median: float
    q3: float
    max: float


class IteHistogram(BaseModel):
    edges: List[float]
    counts: List[int]


def decile_sizes(m: int) -> List[int]:
    """Near-equal decile sizes; the first m mod 10 deciles take one extra unit."""
    base, extra = divmod(m, N_DECILES)
    return [base + 1 if d < extra else base for d in range(N_DECILES)]


def build_board(tau_hat, outcomes, is_treated, unit_ids, partition_index: int = 0) -> EvaluationBoard:
    """Rank units by descending ITE (ties by ascending unit id) and tabulate deciles.

    A purchaser is a unit with a positive outcome.
    """
    tau_hat = np.asarray(tau_hat, dtype=np.float64)
    outcomes = np.asarray(outcomes, dtype=np.float64)
    is_treated = np.asarray(is_treated, dtype=bool)
    unit_ids = np.asarray(unit_ids)
    m = len(tau_hat)
    if not (len(outcomes) == len(is_treated) == len(unit_ids) == m):
        raise SizingError("tau_hat, outcomes, is_treated and unit_ids differ in length")
    if m < N_DECILES:
        raise SizingError(f"need at least {N_DECILES} units for a decile board, got {m}")
    if is_treated.all() or not is_treated.any():
        raise CompositionError("evaluation needs both treated and control units")

    order = np.lexsort((unit_ids, -tau_hat))
    rows = []
    start = 0
    for d, size in enumerate(decile_sizes(m), start=1):
        idx = order[start:start + size]
        start += size
        treated = is_treated[idx]
        y = outcomes[idx]
        rows.append(DecileRow(
            decile=d,
            records_t=int(treated.sum()),
            records_c=int((~treated).sum()),
            purchasers_t=int((y[treated] > 0).sum()),
            purchasers_c=int((y[~treated] > 0).sum()),
            revenue_sum_t=float(y[treated].sum()),
            revenue_sum_c=float(y[~treated].sum()),
        ))
    return EvaluationBoard(rows=rows, partition=partition_index)


def icr(board: EvaluationBoard) -> IcrCurve:
    """Incremental cumulative revenue: running sum of delta_sum over deciles."""
    invalid = board.invalid_deciles
    if invalid:
        raise EvaluationError(f"deciles {invalid} lack treated or control units")
    values = np.cumsum([row.delta_sum for row in board.rows])
    return IcrCurve(values=values.tolist(), partition=board.partition)


def compare_modes(rev_median: float, conv_median: float) -> Optional[float]:
    """Percent difference of the revenue-mode median over the conversion-mode one.

    Returns None when the conversion median is 0 (comparison undefined).
    """
    if conv_median == 0:
        return None
    return 100.0 * (rev_median - conv_median) / abs(conv_median)


def ite_summary(tau_hat) -> IteSummary:
    tau_hat = np.asarray(tau_hat, dtype=np.float64)
    if tau_hat.size == 0:
        raise SizingError("cannot summarize an empty ITE vector")
    q = np.percentile(tau_hat, [0, 25, 50, 75, 100])
    return IteSummary(min=q[0], q1=q[1], median=q[2], q3=q[3], max=q[4])


def ite_histogram(tau_hat, bins: int = HISTOGRAM_BINS) -> IteHistogram:
    counts, edges = np.histogram(np.asarray(tau_hat, dtype=np.float64), bins=bins)
    return IteHistogram(edges=edges.tolist(), counts=counts.tolist())


def scale_importance(raw) -> np.ndarray:
    """Min/max scaling so the most important variable scores 1."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.size == 0 or not np.all(np.isfinite(raw)):
        raise ValueError("importance scores must be a non-empty finite vector")
    low, high = raw.min(), raw.max()
    if high == low:
        return np.ones_like(raw)
    return (raw - low) / (high - low)


# --- Experiments ----------------------------------------------------------------

class ArmModeResult(BaseModel):
    """One arm under one outcome mode, across all partitions."""
    mode: OutcomeKind
    setting: str
    boards: List[EvaluationBoard]
    curves: List[IcrCurve]
    median_icr: float
    top_deciles: List[float]
    top3_mean: float
    ite_summary: IteSummary
    ite_histogram: IteHistogram
    raw_importance: List[float]
    scaled_importance: List[float]
    degenerate_predictions: int
    clamped_units: int
    oob_fallbacks: int


class ModeComparison(BaseModel):
    rev_median: float
    conv_median: float
    pct_diff: Optional[float]


class ArmReport(BaseModel):
    arm: int
    label: str
    results: Dict[str, ArmModeResult]
    comparison: Optional[ModeComparison] = None


class ReportMetadata(BaseModel):
    dataset: str
    n: int
    p: int
    num_arms: int
    scheme: Scheme
    modes: List[OutcomeKind]
    settings: Dict[str, str]
    evaluation_outcome: OutcomeKind
    aggregation: str
    partition: PartitionScheme
    forest: ForestConfig
    nuisance: ForestConfig
    covariate_names: List[str]


class UpliftReport(BaseModel):
    metadata: ReportMetadata
    arms: List[ArmReport]
    best_arm: Dict[str, Optional[int]]


@dataclass
class _ArmCell:
    board: EvaluationBoard
    curve: IcrCurve
    tau_test: np.ndarray
    raw_importance: np.ndarray
    degenerate: int
    clamped: int
    oob_fallbacks: int


@dataclass
class _Cell:
    partition: int
    mode: OutcomeKind
    arm_names: Dict[int, str]
    arms: Dict[int, _ArmCell]


def _run_cell(
    train: Dataset,
    test: Dataset,
    scheme: Scheme,
    mode: OutcomeKind,
    cfg: ForestConfig,
    nuisance: ForestConfig,
    partition_index: int,
    n_jobs: int,
) -> _Cell:
    try:
        model = fit_multi(train, scheme, mode, cfg, nuisance, n_jobs)
        predictions = predict_all(model, test.covariates)
        outcome = test.evaluation_outcome()
        arms = {}
        for arm, pred in predictions.items():
            if scheme == Scheme.TREATMENT_COMPARISON:
                mask = (test.treatment == 0) | (test.treatment == arm)
                treated = test.treatment == arm
            else:
                mask = np.ones(test.n, dtype=bool)
                treated = test.treatment >= 1
            board = build_board(
                pred.tau_hat[mask], outcome[mask], treated[mask], test.unit_ids[mask], partition_index
            )
            diag = model.diagnostics[arm]
            arms[arm] = _ArmCell(
                board=board,
                curve=icr(board),
                tau_test=pred.tau_hat,
                raw_importance=variable_importance(model.forests[arm]),
                degenerate=pred.degenerate,
                clamped=diag.clamped,
                oob_fallbacks=diag.oob_fallbacks,
            )
    except UpliftError as e:
        raise type(e)(f"partition {partition_index}, mode {mode.value}: {e}") from e
    logger.info(f"✅ Partition {partition_index} ({mode.value}) done")
    return _Cell(partition=partition_index, mode=mode, arm_names=model.arm_names, arms=arms)


def _aggregate(cells: List[_Cell], mode: OutcomeKind, arm: int, setting: str) -> ArmModeResult:
    parts = [c.arms[arm] for c in cells if c.mode == mode]
    curves = [p.curve for p in parts]
    top = [float(np.mean([c.values[d] for c in curves])) for d in range(TOP_DECILES)]
    tau = np.concatenate([p.tau_test for p in parts])
    raw = np.mean([p.raw_importance for p in parts], axis=0)
    return ArmModeResult(
        mode=mode,
        setting=setting,
        boards=[p.board for p in parts],
        curves=curves,
        median_icr=float(np.mean([c.median for c in curves])),
        top_deciles=top,
        top3_mean=float(np.mean(top)),
        ite_summary=ite_summary(tau),
        ite_histogram=ite_histogram(tau),
        raw_importance=raw.tolist(),
        scaled_importance=scale_importance(raw).tolist(),
        degenerate_predictions=sum(p.degenerate for p in parts),
        clamped_units=sum(p.clamped for p in parts),
        oob_fallbacks=sum(p.oob_fallbacks for p in parts),
    )


def run_experiment(
    ds: Dataset,
    scheme: Scheme,
    modes: Sequence[OutcomeKind],
    scheme_cfg: ForestConfig,
    partition_scheme: PartitionScheme,
    nuisance_cfg: Optional[ForestConfig] = None,
    n_jobs: int = 1,
) -> UpliftReport:
    """Fit on every train fold, score the test folds and aggregate the results.

    Partition x mode cells are independent; with n_jobs > 1 they run in
    parallel (one job per forest) and are aggregated in submission order.
    """
    scheme = Scheme(scheme)
    modes = list(dict.fromkeys(OutcomeKind(m) for m in modes))
    if not modes:
        raise ValueError("at least one outcome mode is required")
    for mode in modes:
        select_outcome(ds, mode)
    nuisance_cfg = nuisance_cfg or nuisance_config(seed=scheme_cfg.seed)

    folds = partition(ds, partition_scheme)
    logger.info(
        f"🚀 Running {scheme.value} on {ds.name}: {len(folds)} partitions x {[m.value for m in modes]}"
    )
    cells = Parallel(n_jobs=n_jobs)(
        delayed(_run_cell)(train, test, scheme, mode, scheme_cfg, nuisance_cfg, j, 1)
        for j, (train, test) in enumerate(folds)
        for mode in modes
    )

    arm_names = cells[0].arm_names
    modelled = sorted(a for a in arm_names if a != 0)
    # the combined scheme models a single pooled arm
    settings = {m.value: setting_label(len(modelled), m) for m in modes}
    arms = []
    for arm in modelled:
        results = {m.value: _aggregate(cells, m, arm, settings[m.value]) for m in modes}
        comparison = None
        if OutcomeKind.REVENUE in modes and OutcomeKind.CONVERSION in modes:
            rev = results[OutcomeKind.REVENUE.value].median_icr
            conv = results[OutcomeKind.CONVERSION.value].median_icr
            comparison = ModeComparison(rev_median=rev, conv_median=conv, pct_diff=compare_modes(rev, conv))
        arms.append(ArmReport(arm=arm, label=arm_names[arm], results=results, comparison=comparison))

    best_arm = {}
    for m in modes:
        medians = [(report.results[m.value].median_icr, -report.arm) for report in arms]
        best_arm[m.value] = -max(medians)[1] if medians else None

    evaluation_outcome = OutcomeKind.REVENUE if ds.outcome_of(OutcomeKind.REVENUE) is not None else ds.outcome_kind
    metadata = ReportMetadata(
        dataset=ds.name,
        n=ds.n,
        p=ds.p,
        num_arms=ds.num_arms,
        scheme=scheme,
        modes=modes,
        settings=settings,
        evaluation_outcome=evaluation_outcome,
        aggregation=AGGREGATION,
        partition=partition_scheme,
        forest=scheme_cfg,
        nuisance=nuisance_cfg,
        covariate_names=list(ds.covariate_names),
    )
    return UpliftReport(metadata=metadata, arms=arms, best_arm=best_arm)
