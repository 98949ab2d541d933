"""
Before/after reports per source and class, bootstrap F1 distributions, risk-coverage sweeps
and the entropy-vs-interval comparison.
"""

import logging
import math
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from humanize import intcomma, precisedelta

from src.calibration import CalibrationConfig, RiskCoveragePoint, sweep
from src.metrics import ClassMetrics, class_metrics, mean_defined
from src.models import (
    Mechanism,
    Mode,
    ScoreTable,
    Scope,
    SelectionMask,
    ThresholdArtifact,
    check_schema_match,
)
from src.rejection import build_mask, score_uncertainty
from src.utils.errors import ErrorCode, RejectKitError
from src.utils.rng import child_rng
from src.utils.run import run_parallel
from src.utils.tables import parse_optional_float, read_csv_dicts

logger = logging.getLogger(__name__)

ALL_SOURCES = '*'
AVERAGE_LABEL = 'Average over All Classes'
DEFAULT_ITERATIONS = 1000


@dataclass(frozen=True)
class ReportRow:
    source: str
    class_name: str
    threshold: float
    baseline: ClassMetrics
    selective: ClassMetrics

    def to_dict(self) -> dict[str, Any]:
        return {
            'dataset': self.source,
            'class': self.class_name,
            'threshold': self.threshold,
            'auc_baseline': self.baseline.auc,
            'auc_selective': self.selective.auc,
            'f1_baseline': self.baseline.f1,
            'f1_selective': self.selective.f1,
            'rejection_rate': self.selective.rejection_rate,
            'n_total': self.selective.n_total,
            'n_retained': self.selective.n_retained,
        }


@dataclass(frozen=True)
class AverageRow:
    """Unweighted mean over the classes whose value is defined."""

    source: str
    auc_baseline: float | None
    auc_selective: float | None
    f1_baseline: float | None
    f1_selective: float | None
    rejection_rate: float | None

    def to_dict(self) -> dict[str, Any]:
        return {
            'dataset': self.source,
            'class': AVERAGE_LABEL,
            'auc_baseline': self.auc_baseline,
            'auc_selective': self.auc_selective,
            'f1_baseline': self.f1_baseline,
            'f1_selective': self.f1_selective,
            'rejection_rate': self.rejection_rate,
        }


@dataclass(frozen=True)
class EvaluationReport:
    mechanism: Mechanism
    scope: Scope
    mode: Mode
    decision_boundary: float
    class_names: tuple[str, ...]
    rows: tuple[ReportRow, ...]
    overall: tuple[ReportRow, ...]
    averages: tuple[AverageRow, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            'mechanism': str(self.mechanism),
            'scope': str(self.scope),
            'mode': str(self.mode),
            'theta': self.decision_boundary,
            'class_names': list(self.class_names),
            'rows': [row.to_dict() for row in self.rows],
            'overall': [row.to_dict() for row in self.overall],
            'averages': [row.to_dict() for row in self.averages],
        }


REPORT_COLUMNS = (
    'dataset',
    'class',
    'threshold',
    'auc_baseline',
    'auc_selective',
    'f1_baseline',
    'f1_selective',
    'rejection_rate',
)


def report_csv_rows(report: EvaluationReport) -> list[list[Any]]:
    """Table-shaped rows: per source, then all sources pooled, then the class averages."""
    rows = [row.to_dict() for row in (*report.rows, *report.overall)]
    rows.extend(row.to_dict() for row in report.averages)
    return [[row.get(column) for column in REPORT_COLUMNS] for row in rows]


def _rows_for(
    source: str,
    indices: np.ndarray,
    table: ScoreTable,
    accepted: np.ndarray,
    thresholds: np.ndarray,
    theta: float,
) -> list[ReportRow]:
    rows = []
    for c, name in enumerate(table.schema.class_names):
        probs = table.probs[indices, c]
        labels = table.labels[indices, c]
        rows.append(
            ReportRow(
                source=source,
                class_name=name,
                threshold=float(thresholds[c]),
                baseline=class_metrics(probs, labels, None, theta),
                selective=class_metrics(probs, labels, accepted[indices, c], theta),
            )
        )
    return rows


def _average(source: str, rows: Sequence[ReportRow]) -> AverageRow:
    return AverageRow(
        source=source,
        auc_baseline=mean_defined([row.baseline.auc for row in rows]),
        auc_selective=mean_defined([row.selective.auc for row in rows]),
        f1_baseline=mean_defined([row.baseline.f1 for row in rows]),
        f1_selective=mean_defined([row.selective.f1 for row in rows]),
        rejection_rate=mean_defined([row.selective.rejection_rate for row in rows]),
    )


def mask_for(table: ScoreTable, artifact: ThresholdArtifact) -> SelectionMask:
    check_schema_match(table.schema, artifact)
    uncertainty = score_uncertainty(table, artifact.mechanism, artifact.decision_boundary)
    return build_mask(uncertainty, artifact)


def evaluate(
    table: ScoreTable, artifact: ThresholdArtifact, mask: SelectionMask | None = None
) -> EvaluationReport:
    """
    Baseline metrics on every cell and selective metrics on the accepted cells, per source and
    class, for all sources pooled, and averaged over classes.
    """
    check_schema_match(table.schema, artifact)
    if len(table) == 0:
        raise RejectKitError(ErrorCode.EMPTY_TABLE, 'cannot evaluate an empty table')
    if mask is None:
        mask = mask_for(table, artifact)
    elif mask.shape != table.probs.shape:
        raise RejectKitError(
            ErrorCode.SHAPE_MISMATCH, f'mask shape {mask.shape} for table {table.probs.shape}'
        )
    thresholds = artifact.threshold_vector()
    theta = artifact.decision_boundary
    rows: list[ReportRow] = []
    averages: list[AverageRow] = []
    for source, indices in table.source_indices.items():
        source_rows = _rows_for(source, indices, table, mask.accepted, thresholds, theta)
        rows.extend(source_rows)
        averages.append(_average(source, source_rows))
    overall = _rows_for(
        ALL_SOURCES, np.arange(len(table)), table, mask.accepted, thresholds, theta
    )
    averages.append(_average(ALL_SOURCES, overall))
    return EvaluationReport(
        mechanism=artifact.mechanism,
        scope=artifact.scope,
        mode=mask.mode,
        decision_boundary=theta,
        class_names=table.schema.class_names,
        rows=tuple(rows),
        overall=tuple(overall),
        averages=tuple(averages),
    )


def risk_coverage_sweep(
    table: ScoreTable, config: CalibrationConfig, threads: int = 1, include_baseline: bool = True
) -> tuple[RiskCoveragePoint, ...]:
    """
    The calibration grid evaluated on `table` without picking a winner. The accept-all point
    (percentile None) comes first unless `include_baseline` is False.
    """
    return sweep(table, config, threads=threads, include_baseline=include_baseline)


# Bootstrap


def resample_indices(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.integers(0, n, size=n)


def _f1_columns(
    probs: np.ndarray, labels: np.ndarray, keep: np.ndarray, theta: float
) -> np.ndarray:
    """F1 per column over the kept cells, NaN where undefined."""
    predicted = (probs >= theta) & keep
    actual = labels.astype(bool) & keep
    tp = np.count_nonzero(predicted & actual, axis=0)
    fp = np.count_nonzero(predicted & ~actual, axis=0)
    fn = np.count_nonzero(~predicted & actual, axis=0)
    denominator = 2 * tp + fp + fn
    with np.errstate(divide='ignore', invalid='ignore'):
        return np.where(denominator > 0, 2.0 * tp / denominator, np.nan)


def _percentile_ci(values: np.ndarray) -> tuple[float, float] | None:
    defined = values[~np.isnan(values)]
    if defined.size == 0:
        return None
    low, high = np.percentile(defined, [2.5, 97.5])
    return float(low), float(high)


def _nan_to_none(value: float) -> float | None:
    return None if math.isnan(value) else float(value)


@dataclass(frozen=True)
class BootstrapSummary:
    source: str
    class_name: str
    f1_baseline: float | None
    f1_selective: float | None
    baseline_ci: tuple[float, float] | None
    selective_ci: tuple[float, float] | None
    gap_ci: tuple[float, float] | None
    n_null_baseline: int
    n_null_selective: int
    exceedance: float | None

    def to_dict(self) -> dict[str, Any]:
        return {
            'dataset': self.source,
            'class': self.class_name,
            'f1_baseline': self.f1_baseline,
            'f1_selective': self.f1_selective,
            'baseline_ci': list(self.baseline_ci) if self.baseline_ci else None,
            'selective_ci': list(self.selective_ci) if self.selective_ci else None,
            'gap_ci': list(self.gap_ci) if self.gap_ci else None,
            'n_null_baseline': self.n_null_baseline,
            'n_null_selective': self.n_null_selective,
            'exceedance': self.exceedance,
        }


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    """
    Per-iteration F1 arrays of shape [n_sources, iterations, n_classes]; NaN marks a resample
    where F1 is undefined.
    """

    iterations: int
    seed: int
    sources: tuple[str, ...]
    class_names: tuple[str, ...]
    baseline: np.ndarray
    selective: np.ndarray
    summaries: tuple[BootstrapSummary, ...]

    def samples(self, source: str, class_name: str) -> tuple[list[float | None], list[float | None]]:
        s = self.sources.index(source)
        c = self.class_names.index(class_name)
        return (
            [_nan_to_none(value) for value in self.baseline[s, :, c]],
            [_nan_to_none(value) for value in self.selective[s, :, c]],
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BootstrapResult):
            return NotImplemented
        return (
            self.iterations == other.iterations
            and self.seed == other.seed
            and self.sources == other.sources
            and self.class_names == other.class_names
            and np.array_equal(self.baseline, other.baseline, equal_nan=True)
            and np.array_equal(self.selective, other.selective, equal_nan=True)
            and self.summaries == other.summaries
        )

    __hash__ = None  # type: ignore[assignment]

    def iteration_rows(self) -> list[list[Any]]:
        return [
            [source, name, i, _nan_to_none(self.baseline[s, i, c]), _nan_to_none(self.selective[s, i, c])]
            for s, source in enumerate(self.sources)
            for c, name in enumerate(self.class_names)
            for i in range(self.iterations)
        ]

    def to_dict(self) -> dict[str, Any]:
        return {
            'iterations': self.iterations,
            'seed': self.seed,
            'summaries': [summary.to_dict() for summary in self.summaries],
        }


def bootstrap_f1(
    table: ScoreTable,
    artifact: ThresholdArtifact,
    iterations: int = DEFAULT_ITERATIONS,
    seed: int = 0,
    threads: int = 1,
    resampler: Callable[[np.random.Generator, int], np.ndarray] = resample_indices,
) -> BootstrapResult:
    """
    Percentile-bootstrap distributions of baseline and selective F1 per source and class.

    Samples are resampled with replacement within each source; the acceptance mask is computed
    once and looked up for resampled rows. Iteration i draws from the stream
    child_seed(seed, i), so results do not depend on `threads`.
    """
    if iterations < 1:
        raise RejectKitError(ErrorCode.CONFIG_INVALID, f'iterations must be >= 1, got {iterations}')
    started = time.monotonic()
    mask = mask_for(table, artifact)
    theta = artifact.decision_boundary
    probs, labels, accepted = table.probs, table.labels, mask.accepted
    groups = list(table.source_indices.values())
    every_cell = np.ones_like(accepted)

    def run_iteration(i: int) -> np.ndarray:
        rng = child_rng(seed, i)
        out = np.empty((len(groups), 2, table.schema.n_classes))
        for s, indices in enumerate(groups):
            rows = indices[resampler(rng, indices.size)]
            out[s, 0] = _f1_columns(probs[rows], labels[rows], every_cell[rows], theta)
            out[s, 1] = _f1_columns(probs[rows], labels[rows], accepted[rows], theta)
        return out

    stacked = np.stack(run_parallel(run_iteration, range(iterations), threads), axis=1)
    baseline, selective = stacked[:, :, 0, :], stacked[:, :, 1, :]

    summaries = []
    for s, (source, indices) in enumerate(table.source_indices.items()):
        point_baseline = _f1_columns(probs[indices], labels[indices], every_cell[indices], theta)
        point_selective = _f1_columns(probs[indices], labels[indices], accepted[indices], theta)
        for c, name in enumerate(table.schema.class_names):
            b, sel = baseline[s, :, c], selective[s, :, c]
            both = ~np.isnan(b) & ~np.isnan(sel)
            summaries.append(
                BootstrapSummary(
                    source=source,
                    class_name=name,
                    f1_baseline=_nan_to_none(point_baseline[c]),
                    f1_selective=_nan_to_none(point_selective[c]),
                    baseline_ci=_percentile_ci(b),
                    selective_ci=_percentile_ci(sel),
                    gap_ci=_percentile_ci(sel[both] - b[both]),
                    n_null_baseline=int(np.isnan(b).sum()),
                    n_null_selective=int(np.isnan(sel).sum()),
                    exceedance=float(np.mean(sel[both] > b[both])) if both.any() else None,
                )
            )
    logger.info(
        f'Bootstrapped F1 over {intcomma(iterations)} iterations and {len(groups)} source(s) '
        f'in {precisedelta(time.monotonic() - started, minimum_unit="milliseconds")}'
    )
    return BootstrapResult(
        iterations=iterations,
        seed=seed,
        sources=table.sources,
        class_names=table.schema.class_names,
        baseline=baseline,
        selective=selective,
        summaries=tuple(summaries),
    )


# Mechanism comparison


@dataclass(frozen=True)
class ComparisonRow:
    class_name: str
    auc_baseline: float | None
    auc_interval: float | None
    auc_entropy: float | None
    rejection_interval: float | None = None
    rejection_entropy: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            'class': self.class_name,
            'auc_baseline': self.auc_baseline,
            'auc_interval': self.auc_interval,
            'auc_entropy': self.auc_entropy,
            'rejection_rate_interval': self.rejection_interval,
            'rejection_rate_entropy': self.rejection_entropy,
        }


COMPARISON_COLUMNS = ('class', 'auc_baseline', 'auc_interval', 'auc_entropy')


@dataclass(frozen=True)
class ComparisonReport:
    rows: tuple[ComparisonRow, ...]
    average: ComparisonRow

    def csv_rows(self) -> list[list[Any]]:
        return [
            [getattr(row, field) if field != 'class' else row.class_name for field in COMPARISON_COLUMNS]
            for row in (*self.rows, self.average)
        ]

    def to_dict(self) -> dict[str, Any]:
        return {
            'rows': [row.to_dict() for row in self.rows],
            'average': self.average.to_dict(),
        }


def average_row(rows: Sequence[ComparisonRow]) -> ComparisonRow:
    return ComparisonRow(
        class_name=AVERAGE_LABEL,
        auc_baseline=mean_defined([row.auc_baseline for row in rows]),
        auc_interval=mean_defined([row.auc_interval for row in rows]),
        auc_entropy=mean_defined([row.auc_entropy for row in rows]),
        rejection_interval=mean_defined([row.rejection_interval for row in rows]),
        rejection_entropy=mean_defined([row.rejection_entropy for row in rows]),
    )


def compare_mechanisms(
    table: ScoreTable, artifact_entropy: ThresholdArtifact, artifact_interval: ThresholdArtifact
) -> ComparisonReport:
    """Baseline, interval-selective and entropy-selective AUC per class over all sources."""
    for artifact, expected in (
        (artifact_entropy, Mechanism.ENTROPY),
        (artifact_interval, Mechanism.INTERVAL),
    ):
        if artifact.mechanism is not expected:
            raise RejectKitError(
                ErrorCode.MECHANISM_MISMATCH,
                f'expected a {expected} artifact, got {artifact.mechanism}',
            )
        check_schema_match(table.schema, artifact)
    entropy_report = evaluate(table, artifact_entropy)
    interval_report = evaluate(table, artifact_interval)
    rows = tuple(
        ComparisonRow(
            class_name=entropy_row.class_name,
            auc_baseline=entropy_row.baseline.auc,
            auc_interval=interval_row.selective.auc,
            auc_entropy=entropy_row.selective.auc,
            rejection_interval=interval_row.selective.rejection_rate,
            rejection_entropy=entropy_row.selective.rejection_rate,
        )
        for entropy_row, interval_row in zip(
            entropy_report.overall, interval_report.overall, strict=True
        )
    )
    return ComparisonReport(rows=rows, average=average_row(rows))


def read_comparison_csv(path: Path) -> tuple[list[ComparisonRow], ComparisonRow | None]:
    """
    Parse a comparison table (`class,auc_baseline,auc_interval,auc_entropy`). A row labelled
    with the average label is returned separately as the published average.
    """
    records = read_csv_dicts(path)
    if records:
        missing = [column for column in COMPARISON_COLUMNS if column not in records[0]]
        if missing:
            raise RejectKitError(
                ErrorCode.MISSING_COLUMN, f'{path} lacks column(s) {missing}', columns=missing
            )
    rows: list[ComparisonRow] = []
    published: ComparisonRow | None = None
    for line, record in enumerate(records, start=2):
        try:
            row = ComparisonRow(
                class_name=record['class'].strip(),
                auc_baseline=parse_optional_float(record['auc_baseline']),
                auc_interval=parse_optional_float(record['auc_interval']),
                auc_entropy=parse_optional_float(record['auc_entropy']),
            )
        except ValueError as err:
            raise RejectKitError(
                ErrorCode.PARSE_ERROR, f'{path}:{line}: {err}', path=str(path), line=line
            ) from err
        if row.class_name.lower() == AVERAGE_LABEL.lower():
            published = row
        else:
            rows.append(row)
    return rows, published


@dataclass(frozen=True)
class AverageCheck:
    recomputed: dict[str, float | None]
    deltas: dict[str, float | None]
    within_tolerance: dict[str, bool]


def check_average_row(
    rows: Sequence[ComparisonRow], published: ComparisonRow, tolerance: float = 0.005
) -> AverageCheck:
    """Recompute the class means and compare them with a published average row."""
    recomputed = average_row(rows)
    columns = ('auc_baseline', 'auc_interval', 'auc_entropy')
    values = {column: getattr(recomputed, column) for column in columns}
    deltas: dict[str, float | None] = {}
    for column in columns:
        ours, theirs = values[column], getattr(published, column)
        deltas[column] = None if ours is None or theirs is None else ours - theirs
    return AverageCheck(
        recomputed=values,
        deltas=deltas,
        within_tolerance={
            column: delta is not None and abs(delta) <= tolerance
            for column, delta in deltas.items()
        },
    )
