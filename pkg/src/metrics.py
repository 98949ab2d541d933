"""
Pure metric kernels: binary entropy, margin to the decision boundary, ROC-AUC, F1 and
rejection rate. Undefined metrics are returned as None, never as 0.
"""

import math
from dataclasses import dataclass
from typing import Any, overload

import numpy as np
from numpy.typing import ArrayLike
from scipy.stats import rankdata

from src.utils.errors import ErrorCode, RejectKitError

LN2 = math.log(2.0)
PROB_CLAMP = 1e-12


def _as_probabilities(p: ArrayLike, name: str = 'p') -> np.ndarray:
    values = np.asarray(p, dtype=np.float64)
    if np.isnan(values).any() or (values < 0.0).any() or (values > 1.0).any():
        raise RejectKitError(ErrorCode.DOMAIN, f'{name} must lie in [0, 1]')
    return values


@overload
def binary_entropy(p: float) -> float: ...
@overload
def binary_entropy(p: np.ndarray) -> np.ndarray: ...
def binary_entropy(p: Any) -> Any:
    """
    Binary entropy in nats, -p ln p - (1-p) ln(1-p), elementwise.

    0 and 1 map to exactly 0 (0 ln 0 = 0); other values are clamped to
    [1e-12, 1 - 1e-12] before the logs. The result lies in [0, ln 2].
    """
    values = _as_probabilities(p)
    clamped = np.clip(values, PROB_CLAMP, 1.0 - PROB_CLAMP)
    h = -(clamped * np.log(clamped) + (1.0 - clamped) * np.log1p(-clamped))
    h = np.where((values == 0.0) | (values == 1.0), 0.0, np.clip(h, 0.0, LN2))
    return float(h) if h.ndim == 0 else h


def _check_boundary(theta: float) -> None:
    if not 0.0 < theta < 1.0:
        raise RejectKitError(ErrorCode.DOMAIN, f'decision boundary must lie in (0, 1), got {theta}')


@overload
def margin(p: float, theta: float = 0.5) -> float: ...
@overload
def margin(p: np.ndarray, theta: float = 0.5) -> np.ndarray: ...
def margin(p: Any, theta: float = 0.5) -> Any:
    """Distance |p - theta| to the decision boundary, in [0, max(theta, 1 - theta)]."""
    _check_boundary(theta)
    values = np.abs(_as_probabilities(p) - theta)
    return float(values) if values.ndim == 0 else values


def _paired(scores: ArrayLike, labels: ArrayLike) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise RejectKitError(
            ErrorCode.LENGTH_MISMATCH,
            f'{s.size} scores but {y.size} labels',
            n_scores=int(s.size),
            n_labels=int(y.size),
        )
    return s, y.astype(bool)


def auc(scores: ArrayLike, labels: ArrayLike) -> float | None:
    """
    ROC-AUC as the Mann-Whitney U statistic: share of (positive, negative) pairs ranked
    correctly, ties counting one half. None when either class is absent.
    """
    s, y = _paired(scores, labels)
    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(s, method='average')
    u = float(ranks[y].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def confusion_counts(
    probs: ArrayLike, labels: ArrayLike, theta: float = 0.5
) -> tuple[int, int, int]:
    p, y = _paired(probs, labels)
    predicted = p >= theta
    tp = int(np.count_nonzero(predicted & y))
    fp = int(np.count_nonzero(predicted & ~y))
    fn = int(np.count_nonzero(~predicted & y))
    return tp, fp, fn


def f1_at_boundary(probs: ArrayLike, labels: ArrayLike, theta: float = 0.5) -> float | None:
    """F1 of the rule p >= theta; None when there are no predicted or actual positives."""
    _check_boundary(theta)
    tp, fp, fn = confusion_counts(probs, labels, theta)
    denominator = 2 * tp + fp + fn
    if denominator == 0:
        return None
    return 2.0 * tp / denominator


def rejection_fraction(n_retained: int, n_total: int) -> float:
    if n_total <= 0:
        raise RejectKitError(ErrorCode.EMPTY_MASK, 'rejection rate of an empty selection')
    return (n_total - n_retained) / n_total


@dataclass(frozen=True)
class ClassMetrics:
    auc: float | None
    f1: float | None
    n_retained: int
    n_total: int
    rejection_rate: float


def class_metrics(
    probs: ArrayLike,
    labels: ArrayLike,
    accepted: ArrayLike | None = None,
    theta: float = 0.5,
) -> ClassMetrics:
    """AUC and F1 over the accepted cells of one class; all cells when `accepted` is None."""
    p, y = _paired(probs, labels)
    keep = np.ones(p.size, dtype=bool) if accepted is None else np.asarray(accepted, dtype=bool)
    if keep.shape != p.shape:
        raise RejectKitError(
            ErrorCode.LENGTH_MISMATCH, f'{keep.size} mask cells for {p.size} predictions'
        )
    n_retained = int(keep.sum())
    return ClassMetrics(
        auc=auc(p[keep], y[keep]),
        f1=f1_at_boundary(p[keep], y[keep], theta),
        n_retained=n_retained,
        n_total=int(p.size),
        rejection_rate=rejection_fraction(n_retained, int(p.size)),
    )


def mean_defined(values: list[float | None] | tuple[float | None, ...]) -> float | None:
    """Unweighted mean over the defined entries; None when nothing is defined."""
    defined = [value for value in values if value is not None]
    if not defined:
        return None
    return math.fsum(defined) / len(defined)
