"""Turn per-class uncertainty into accept/reject decisions."""

import logging
from dataclasses import dataclass
from enum import StrEnum
from typing import Any, overload

import numpy as np
from numpy.typing import ArrayLike

from src.metrics import LN2, binary_entropy, margin
from src.models import Mechanism, Mode, ScoreTable, SelectionMask, ThresholdArtifact
from src.utils.errors import ErrorCode, RejectKitError

logger = logging.getLogger(__name__)


class CombineRule(StrEnum):
    AND = 'and'
    OR = 'or'


@dataclass(frozen=True, eq=False)
class UncertaintyMatrix:
    """
    Per-cell uncertainty for one mechanism: entropy in nats, or margin |p - theta| where a
    larger value means a more confident prediction.
    """

    mechanism: Mechanism
    values: np.ndarray
    decision_boundary: float

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2:
            raise RejectKitError(
                ErrorCode.SHAPE_MISMATCH, f'uncertainty must be 2-D, got shape {values.shape}'
            )
        upper = (
            LN2
            if self.mechanism is Mechanism.ENTROPY
            else max(self.decision_boundary, 1.0 - self.decision_boundary)
        )
        if values.size and (values.min() < 0.0 or values.max() > upper):
            raise RejectKitError(
                ErrorCode.DOMAIN, f'{self.mechanism} values outside [0, {upper}]'
            )
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]


def score_uncertainty(
    table: ScoreTable, mechanism: Mechanism, decision_boundary: float | None = None
) -> UncertaintyMatrix:
    theta = table.schema.decision_boundary if decision_boundary is None else decision_boundary
    if mechanism is Mechanism.ENTROPY:
        values = binary_entropy(table.probs)
    else:
        values = margin(table.probs, theta)
    return UncertaintyMatrix(mechanism, values, theta)


@overload
def class_confident(value: float, threshold: float, mechanism: Mechanism) -> bool: ...
@overload
def class_confident(
    value: np.ndarray, threshold: ArrayLike, mechanism: Mechanism
) -> np.ndarray: ...
def class_confident(value: Any, threshold: Any, mechanism: Mechanism) -> Any:
    """
    Entropy: confident iff H < tau. Interval: confident iff margin > delta, that is the whole
    interval [p - delta, p + delta] lies on one side of theta. Equality is never confident.
    """
    values = np.asarray(value, dtype=np.float64)
    thresholds = np.asarray(threshold, dtype=np.float64)
    confident = values < thresholds if mechanism is Mechanism.ENTROPY else values > thresholds
    return bool(confident) if confident.ndim == 0 else confident


def mask_from_thresholds(
    uncertainty: UncertaintyMatrix, thresholds: ArrayLike, mode: Mode
) -> SelectionMask:
    """Apply one threshold per class (a scalar is broadcast to every class)."""
    n_classes = uncertainty.shape[1]
    vector = np.broadcast_to(np.asarray(thresholds, dtype=np.float64), (n_classes,))
    confident = class_confident(uncertainty.values, vector[np.newaxis, :], uncertainty.mechanism)
    if mode is Mode.IMAGE_LEVEL:
        rows = confident.any(axis=1)
        confident = np.repeat(rows[:, np.newaxis], n_classes, axis=1)
    return SelectionMask(mode, confident)


def build_mask(
    uncertainty: UncertaintyMatrix, thresholds: ThresholdArtifact, mode: Mode | None = None
) -> SelectionMask:
    """
    Accept/reject every (sample, class) cell with a calibrated artifact.

    per_class: a cell is accepted when its class is confident. image_level: a row is accepted
    as a whole when at least one of its classes is confident. `mode` defaults to the mode the
    artifact was calibrated for.
    """
    if thresholds.mechanism is not uncertainty.mechanism:
        raise RejectKitError(
            ErrorCode.MECHANISM_MISMATCH,
            f'{thresholds.mechanism} thresholds applied to {uncertainty.mechanism} uncertainty',
        )
    if len(thresholds.class_names) != uncertainty.shape[1]:
        raise RejectKitError(
            ErrorCode.SHAPE_MISMATCH,
            f'{len(thresholds.class_names)} thresholds for {uncertainty.shape[1]} classes',
        )
    return mask_from_thresholds(
        uncertainty, thresholds.threshold_vector(), thresholds.mode if mode is None else mode
    )


def rejection_rate(mask: SelectionMask, per_class: bool = True) -> np.ndarray | float:
    """
    per_class: share of rejected cells in each column. Otherwise the share of rows with no
    accepted cell.
    """
    n_rows = mask.shape[0]
    if n_rows == 0:
        raise RejectKitError(ErrorCode.EMPTY_MASK, 'rejection rate of an empty mask')
    if per_class:
        return 1.0 - mask.accepted.sum(axis=0) / n_rows
    return float((~mask.image_accepted).sum() / n_rows)


def combine_masks(
    first: SelectionMask, second: SelectionMask, rule: CombineRule = CombineRule.AND
) -> SelectionMask:
    """Joint decision of two mechanisms: accept when both (and) or either (or) accept."""
    if first.mode is not second.mode:
        raise RejectKitError(
            ErrorCode.SHAPE_MISMATCH, f'cannot combine {first.mode} and {second.mode} masks'
        )
    if first.shape != second.shape:
        raise RejectKitError(
            ErrorCode.SHAPE_MISMATCH, f'mask shapes differ: {first.shape} vs {second.shape}'
        )
    combined = (
        first.accepted & second.accepted
        if rule is CombineRule.AND
        else first.accepted | second.accepted
    )
    logger.debug(f'Combined masks with {rule}: {int(combined.sum())} accepted cells')
    return SelectionMask(first.mode, combined)
