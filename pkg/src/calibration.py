"""
Quantile-based threshold calibration.

Candidate thresholds are percentiles of the uncertainty of correctly classified cells. Every
candidate on the percentile grid is scored by selective AUC and rejection rate on the
calibration table, and the best candidate within the rejection budget wins.
"""

import logging
import math
import time
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
from humanize import precisedelta

from src.metrics import auc, f1_at_boundary, mean_defined
from src.models import Mechanism, Mode, ScoreTable, Scope, ThresholdArtifact
from src.rejection import UncertaintyMatrix, mask_from_thresholds, score_uncertainty
from src.utils.errors import ErrorCode, RejectKitError
from src.utils.run import run_parallel

logger = logging.getLogger(__name__)

BUDGET_TOLERANCE = 1e-12
INTERVAL_INTERPRETATION = (
    'delta is a calibrated margin threshold: a class is confident when |p - theta| > delta, '
    'which is the interval [p - delta, p + delta] lying entirely on one side of theta'
)


@dataclass(frozen=True)
class CalibrationConfig:
    mechanism: Mechanism = Mechanism.ENTROPY
    scope: Scope = Scope.CLASS_SPECIFIC
    mode: Mode = Mode.PER_CLASS
    grid_start: float = 75.0
    grid_end: float = 95.0
    grid_step: float = 2.5
    rejection_budget: float = 0.25
    # None means the score table's own decision boundary
    decision_boundary: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.grid_start <= self.grid_end <= 100.0:
            raise RejectKitError(
                ErrorCode.CONFIG_INVALID,
                f'percentile grid needs 0 < start <= end <= 100, got {self.grid_start}..{self.grid_end}',
            )
        if not self.grid_step > 0.0:
            raise RejectKitError(
                ErrorCode.CONFIG_INVALID, f'grid step must be positive, got {self.grid_step}'
            )
        if not 0.0 < self.rejection_budget <= 1.0:
            raise RejectKitError(
                ErrorCode.CONFIG_INVALID,
                f'rejection budget must lie in (0, 1], got {self.rejection_budget}',
            )
        if self.decision_boundary is not None and not 0.0 < self.decision_boundary < 1.0:
            raise RejectKitError(
                ErrorCode.CONFIG_INVALID,
                f'decision boundary must lie in (0, 1), got {self.decision_boundary}',
            )

    def percentile_grid(self) -> tuple[float, ...]:
        count = math.floor((self.grid_end - self.grid_start) / self.grid_step + 1e-9) + 1
        return tuple(round(self.grid_start + i * self.grid_step, 10) for i in range(count))

    def boundary_for(self, table: ScoreTable) -> float:
        if self.decision_boundary is None:
            return table.schema.decision_boundary
        return self.decision_boundary


@dataclass(frozen=True)
class RiskCoveragePoint:
    """
    One operating point. `percentile` is None for the accept-all baseline point.

    `rejection_rate` is the mean of the per-class rates, which equals the image rejection rate
    for image-level masks.
    """

    percentile: float | None
    thresholds: tuple[float, ...]
    class_rejection_rates: tuple[float, ...]
    rejection_rate: float
    coverage: float
    selective_auc: tuple[float | None, ...]
    mean_auc: float | None
    n_auc_excluded: int
    selective_f1: tuple[float | None, ...]

    def to_dict(self, class_names: Sequence[str]) -> dict[str, Any]:
        return {
            'percentile': self.percentile,
            'coverage': self.coverage,
            'rejection_rate': self.rejection_rate,
            'mean_auc': self.mean_auc,
            'n_auc_excluded': self.n_auc_excluded,
            'classes': {
                name: {
                    'threshold': self.thresholds[c] if self.thresholds else None,
                    'rejection_rate': self.class_rejection_rates[c],
                    'auc': self.selective_auc[c],
                    'f1': self.selective_f1[c],
                }
                for c, name in enumerate(class_names)
            },
        }


@dataclass(frozen=True)
class CalibrationResult:
    artifact: ThresholdArtifact
    sweep: tuple[RiskCoveragePoint, ...]


def correct_prediction_pool(
    table: ScoreTable,
    mechanism: Mechanism = Mechanism.ENTROPY,
    decision_boundary: float | None = None,
    uncertainty: UncertaintyMatrix | None = None,
) -> list[np.ndarray]:
    """
    Uncertainty values of the correctly classified cells, one array per class.

    A cell is correct when its thresholded prediction (p >= theta) equals its label. Arrays may
    be empty; see `fill_empty_pools`.
    """
    theta = table.schema.decision_boundary if decision_boundary is None else decision_boundary
    if uncertainty is None:
        uncertainty = score_uncertainty(table, mechanism, theta)
    correct = (table.probs >= theta) == table.labels.astype(bool)
    return [uncertainty.values[correct[:, c], c] for c in range(table.schema.n_classes)]


def fill_empty_pools(
    pools: Sequence[np.ndarray], class_names: Sequence[str]
) -> tuple[list[np.ndarray], list[str]]:
    """Replace empty class pools with the pooled values of every class, flagging each one."""
    flags = [f'{ErrorCode.EMPTY_POOL}:{name}' for pool, name in zip(pools, class_names, strict=True) if pool.size == 0]
    if not flags:
        return list(pools), []
    shared = np.concatenate(list(pools))
    if shared.size == 0:
        raise RejectKitError(
            ErrorCode.EMPTY_POOL, 'no class has a correctly classified cell', classes=list(class_names)
        )
    for flag in flags:
        logger.warning(f'{flag}: falling back to the global pool')
    return [pool if pool.size else shared for pool in pools], flags


def quantile(values: Sequence[float] | np.ndarray, q: float) -> float:
    """
    Linear-interpolation quantile: rank h = (n - 1) * q / 100 between order statistics, so
    q = 0 is the minimum and q = 100 the maximum.
    """
    array = np.asarray(values, dtype=np.float64).ravel()
    if array.size == 0:
        raise RejectKitError(ErrorCode.EMPTY_INPUT, 'quantile of an empty list')
    if not 0.0 <= q <= 100.0:
        raise RejectKitError(ErrorCode.DOMAIN, f'percentile must lie in [0, 100], got {q}')
    return float(np.quantile(array, q / 100.0, method='linear'))


def threshold_from_percentile(
    pools: Sequence[np.ndarray], q: float, mechanism: Mechanism, scope: Scope
) -> np.ndarray:
    """
    Candidate thresholds at percentile q: one value for global scope, one per class otherwise.

    Entropy accepts low values, so tau is the q-th percentile of the pool. Interval accepts
    high margins, so delta is the mirrored (100 - q)-th percentile.
    """
    for c, pool in enumerate(pools):
        if np.asarray(pool).size == 0:
            raise RejectKitError(ErrorCode.EMPTY_POOL, f'class {c} has an empty pool', class_index=c)
    level = q if mechanism is Mechanism.ENTROPY else 100.0 - q
    if scope is Scope.GLOBAL:
        return np.array([quantile(np.concatenate([np.asarray(pool) for pool in pools]), level)])
    return np.array([quantile(pool, level) for pool in pools])


def evaluate_operating_point(
    table: ScoreTable,
    uncertainty: UncertaintyMatrix,
    thresholds: np.ndarray | None,
    mode: Mode,
    percentile: float | None,
    objective_classes: Sequence[int] | None = None,
) -> RiskCoveragePoint:
    """Selective metrics for one threshold vector; None thresholds accept every cell."""
    n_rows, n_classes = uncertainty.shape
    theta = uncertainty.decision_boundary
    if thresholds is None:
        accepted = np.ones((n_rows, n_classes), dtype=bool)
        vector: tuple[float, ...] = ()
    else:
        accepted = mask_from_thresholds(uncertainty, thresholds, mode).accepted
        vector = tuple(
            float(v) for v in np.broadcast_to(np.asarray(thresholds, dtype=np.float64), (n_classes,))
        )
    if n_rows == 0:
        raise RejectKitError(ErrorCode.EMPTY_TABLE, 'cannot evaluate an empty table')
    class_rates = tuple(float(rate) for rate in 1.0 - accepted.sum(axis=0) / n_rows)
    aucs: list[float | None] = []
    f1s: list[float | None] = []
    for c in range(n_classes):
        keep = accepted[:, c]
        aucs.append(auc(table.probs[keep, c], table.labels[keep, c]))
        f1s.append(f1_at_boundary(table.probs[keep, c], table.labels[keep, c], theta))
    scored = range(n_classes) if objective_classes is None else objective_classes
    objective = [aucs[c] for c in scored]
    rate = math.fsum(class_rates) / n_classes
    return RiskCoveragePoint(
        percentile=percentile,
        thresholds=vector,
        class_rejection_rates=class_rates,
        rejection_rate=rate,
        coverage=1.0 - rate,
        selective_auc=tuple(aucs),
        mean_auc=mean_defined(objective),
        n_auc_excluded=n_classes - sum(value is not None for value in objective),
        selective_f1=tuple(f1s),
    )


@dataclass(frozen=True)
class _SweepState:
    uncertainty: UncertaintyMatrix
    pools: list[np.ndarray]
    pool_flags: list[str]
    objective_classes: list[int]


def _prepare(table: ScoreTable, config: CalibrationConfig) -> _SweepState:
    if len(table) == 0:
        raise RejectKitError(ErrorCode.EMPTY_TABLE, 'calibration table is empty')
    theta = config.boundary_for(table)
    uncertainty = score_uncertainty(table, config.mechanism, theta)
    pools, pool_flags = fill_empty_pools(
        correct_prediction_pool(table, config.mechanism, theta, uncertainty),
        table.schema.class_names,
    )
    objective_classes = [
        c for c in range(table.schema.n_classes) if auc(table.probs[:, c], table.labels[:, c]) is not None
    ]
    if not objective_classes:
        raise RejectKitError(
            ErrorCode.CALIBRATION_DEGENERATE,
            'every class lacks a positive or a negative label, AUC is undefined everywhere',
        )
    return _SweepState(uncertainty, pools, pool_flags, objective_classes)


def _sweep_grid(
    table: ScoreTable, config: CalibrationConfig, state: _SweepState, threads: int
) -> tuple[RiskCoveragePoint, ...]:
    def evaluate_percentile(q: float) -> RiskCoveragePoint:
        candidate = threshold_from_percentile(state.pools, q, config.mechanism, config.scope)
        return evaluate_operating_point(
            table, state.uncertainty, candidate, config.mode, q, state.objective_classes
        )

    return tuple(run_parallel(evaluate_percentile, config.percentile_grid(), threads))


def sweep(
    table: ScoreTable, config: CalibrationConfig, threads: int = 1, include_baseline: bool = False
) -> tuple[RiskCoveragePoint, ...]:
    """Evaluate every grid percentile on `table`, optionally preceded by the accept-all point."""
    state = _prepare(table, config)
    points = _sweep_grid(table, config, state, threads)
    if not include_baseline:
        return points
    baseline = evaluate_operating_point(
        table, state.uncertainty, None, config.mode, None, state.objective_classes
    )
    return (baseline, *points)


def _select_global(
    points: Sequence[RiskCoveragePoint], budget: float
) -> tuple[int, bool]:
    feasible = [i for i, point in enumerate(points) if point.rejection_rate <= budget + BUDGET_TOLERANCE]
    if not feasible:
        return min(range(len(points)), key=lambda i: (points[i].rejection_rate, i)), False
    return max(
        feasible,
        key=lambda i: (
            -math.inf if points[i].mean_auc is None else points[i].mean_auc,
            points[i].coverage,
            -i,
        ),
    ), True


def _select_class(
    points: Sequence[RiskCoveragePoint], c: int, budget: float, in_objective: bool
) -> tuple[int, bool]:
    rates = [point.class_rejection_rates[c] for point in points]
    feasible = [i for i, rate in enumerate(rates) if rate <= budget + BUDGET_TOLERANCE]
    if not feasible:
        return min(range(len(points)), key=lambda i: (rates[i], i)), False

    def key(i: int) -> tuple[float, ...]:
        value = points[i].selective_auc[c]
        score = -math.inf if value is None or not in_objective else value
        return score, 1.0 - rates[i], -i

    return max(feasible, key=key), True


def calibrate(table: ScoreTable, config: CalibrationConfig, threads: int = 1) -> CalibrationResult:
    """
    Choose thresholds on the percentile grid that maximize selective AUC within the budget.

    Global scope constrains the mean per-class rejection rate and maximizes the unweighted mean
    AUC over classes. Class-specific scope constrains and maximizes each class on its own. Ties
    go to higher coverage, then to the lower grid index. When no grid point fits the budget the
    lowest-rejection point wins and the artifact is flagged BUDGET_INFEASIBLE.
    """
    started = time.monotonic()
    state = _prepare(table, config)
    points = _sweep_grid(table, config, state, threads)
    class_names = table.schema.class_names
    theta = config.boundary_for(table)
    budget = config.rejection_budget

    flags: list[str] = list(state.pool_flags)
    flags.extend(
        f'AUC_UNDEFINED:{name}'
        for c, name in enumerate(class_names)
        if c not in state.objective_classes
    )
    if config.scope is Scope.GLOBAL:
        winner, feasible = _select_global(points, budget)
        thresholds: tuple[float, ...] = (points[winner].thresholds[0],)
        percentiles: tuple[float, ...] = (config.percentile_grid()[winner],)
        if not feasible:
            flags.append(str(ErrorCode.BUDGET_INFEASIBLE))
        budget_semantics = 'mean_per_class_rate'
    else:
        chosen = []
        for c, name in enumerate(class_names):
            winner, feasible = _select_class(points, c, budget, c in state.objective_classes)
            chosen.append(winner)
            if not feasible:
                flags.append(f'{ErrorCode.BUDGET_INFEASIBLE}:{name}')
        thresholds = tuple(points[i].thresholds[c] for c, i in enumerate(chosen))
        percentiles = tuple(config.percentile_grid()[i] for i in chosen)
        budget_semantics = 'per_class_rate'

    realized = evaluate_operating_point(
        table, state.uncertainty, np.asarray(thresholds), config.mode, None, state.objective_classes
    )
    metadata: dict[str, Any] = {
        'budget_semantics': budget_semantics,
        'calibration_rejection_rates': dict(zip(class_names, realized.class_rejection_rates, strict=True)),
        'calibration_mean_auc': realized.mean_auc,
        'n_auc_excluded': table.schema.n_classes - len(state.objective_classes),
        'percentile_grid': list(config.percentile_grid()),
    }
    if config.mechanism is Mechanism.INTERVAL:
        metadata['interval_interpretation'] = INTERVAL_INTERPRETATION
    artifact = ThresholdArtifact(
        mechanism=config.mechanism,
        scope=config.scope,
        mode=config.mode,
        class_names=class_names,
        decision_boundary=theta,
        rejection_budget=budget,
        thresholds=thresholds,
        percentiles=percentiles,
        calibration_fingerprint=table.fingerprint(),
        flags=tuple(flags),
        metadata=metadata,
    )
    logger.info(
        f'Calibrated {config.mechanism}/{config.scope} thresholds on {len(table)} records '
        f'over {len(points)} grid points in {precisedelta(time.monotonic() - started, minimum_unit="milliseconds")}'
    )
    if flags:
        logger.warning(f'Calibration flags: {", ".join(flags)}')
    return CalibrationResult(artifact=artifact, sweep=points)
