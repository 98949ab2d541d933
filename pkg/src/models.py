"""
Domain types shared by every stage: class schema, prediction records, score tables,
selection masks and calibrated threshold artifacts.
"""

import hashlib
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from enum import StrEnum
from functools import cached_property
from numbers import Real
from typing import Any

import numpy as np
import orjson

from src.utils.errors import ErrorCode, RejectKitError, TableValidationError, ValidationIssue

LN2 = math.log(2.0)
DEFAULT_CLASS_NAMES = ('Cardiomegaly', 'Effusion', 'Edema', 'Consolidation')


class Mechanism(StrEnum):
    ENTROPY = 'entropy'
    INTERVAL = 'interval'


class Scope(StrEnum):
    GLOBAL = 'global'
    CLASS_SPECIFIC = 'class_specific'


class Mode(StrEnum):
    IMAGE_LEVEL = 'image_level'
    PER_CLASS = 'per_class'


def parse_choice[E: StrEnum](enum: type[E], value: str | E) -> E:
    """Accept enum members, their values, and CLI spellings with dashes."""
    if isinstance(value, enum):
        return value
    try:
        return enum(str(value).strip().lower().replace('-', '_'))
    except ValueError as err:
        choices = ', '.join(member.value for member in enum)
        raise RejectKitError(
            ErrorCode.CONFIG_INVALID, f'{value!r} is not one of: {choices}', value=str(value)
        ) from err


@dataclass(frozen=True)
class ClassSchema:
    class_names: tuple[str, ...]
    decision_boundary: float = 0.5

    def __post_init__(self) -> None:
        object.__setattr__(self, 'class_names', tuple(self.class_names))
        if not self.class_names:
            raise RejectKitError(ErrorCode.SCHEMA_INVALID, 'class_names must not be empty')
        if any(not isinstance(name, str) or not name for name in self.class_names):
            raise RejectKitError(
                ErrorCode.SCHEMA_INVALID, 'class names must be non-empty strings'
            )
        if len(set(self.class_names)) != len(self.class_names):
            raise RejectKitError(
                ErrorCode.SCHEMA_INVALID,
                'class names must be distinct',
                class_names=list(self.class_names),
            )
        if not 0.0 < self.decision_boundary < 1.0:
            raise RejectKitError(
                ErrorCode.SCHEMA_INVALID,
                f'decision boundary must lie in (0, 1), got {self.decision_boundary}',
            )

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def max_margin(self) -> float:
        return max(self.decision_boundary, 1.0 - self.decision_boundary)

    @cached_property
    def schema_hash(self) -> str:
        payload = orjson.dumps(
            {'class_names': list(self.class_names), 'decision_boundary': self.decision_boundary}
        )
        return hashlib.sha256(payload).hexdigest()[:16]


@dataclass(frozen=True)
class PredictionRecord:
    sample_id: str
    source: str
    probs: tuple[float, ...]
    labels: tuple[int, ...]


@dataclass(frozen=True)
class Fingerprint:
    record_count: int
    schema_hash: str

    def to_dict(self) -> dict[str, Any]:
        return {'record_count': self.record_count, 'schema_hash': self.schema_hash}


@dataclass(frozen=True)
class ScoreTable:
    schema: ClassSchema
    records: tuple[PredictionRecord, ...]

    def __len__(self) -> int:
        return len(self.records)

    @cached_property
    def probs(self) -> np.ndarray:
        matrix = np.array(
            [record.probs for record in self.records], dtype=np.float64
        ).reshape(len(self.records), self.schema.n_classes)
        matrix.setflags(write=False)
        return matrix

    @cached_property
    def labels(self) -> np.ndarray:
        matrix = np.array([record.labels for record in self.records], dtype=np.int8).reshape(
            len(self.records), self.schema.n_classes
        )
        matrix.setflags(write=False)
        return matrix

    @cached_property
    def sample_ids(self) -> tuple[str, ...]:
        return tuple(record.sample_id for record in self.records)

    @cached_property
    def sources(self) -> tuple[str, ...]:
        """Distinct source tags in order of first appearance."""
        return tuple(dict.fromkeys(record.source for record in self.records))

    @cached_property
    def source_indices(self) -> dict[str, np.ndarray]:
        tags = np.array([record.source for record in self.records], dtype=object)
        return {source: np.flatnonzero(tags == source) for source in self.sources}

    def fingerprint(self) -> Fingerprint:
        return Fingerprint(record_count=len(self.records), schema_hash=self.schema.schema_hash)

    def subset(self, indices: Iterable[int]) -> 'ScoreTable':
        return ScoreTable(self.schema, tuple(self.records[i] for i in indices))


def _issue(
    issues: list[ValidationIssue],
    code: ErrorCode,
    sample_id: str | None,
    field_name: str,
    line: int | None,
    message: str,
) -> None:
    issues.append(ValidationIssue(code, sample_id, field_name, line, message))


def _values_in_schema_order(
    values: Any,
    schema: ClassSchema,
    sample_id: str,
    field_name: str,
    line: int | None,
    issues: list[ValidationIssue],
) -> list[Any] | None:
    if isinstance(values, Mapping):
        missing = [name for name in schema.class_names if name not in values]
        extra = [key for key in values if key not in schema.class_names]
        if missing or extra:
            _issue(
                issues,
                ErrorCode.LENGTH_MISMATCH,
                sample_id,
                field_name,
                line,
                f'missing classes {missing}, unexpected classes {extra}',
            )
            return None
        return [values[name] for name in schema.class_names]
    if isinstance(values, str) or not isinstance(values, Sequence | np.ndarray):
        _issue(
            issues,
            ErrorCode.LENGTH_MISMATCH,
            sample_id,
            field_name,
            line,
            f'expected one value per class, got {type(values).__name__}',
        )
        return None
    if len(values) != schema.n_classes:
        _issue(
            issues,
            ErrorCode.LENGTH_MISMATCH,
            sample_id,
            field_name,
            line,
            f'expected {schema.n_classes} values, got {len(values)}',
        )
        return None
    return list(values)


def _check_probs(
    values: list[Any],
    schema: ClassSchema,
    sample_id: str,
    line: int | None,
    issues: list[ValidationIssue],
) -> tuple[float, ...]:
    probs = []
    for name, value in zip(schema.class_names, values, strict=True):
        if isinstance(value, bool) or not isinstance(value, Real) or not 0.0 <= value <= 1.0:
            _issue(
                issues,
                ErrorCode.PROB_OUT_OF_RANGE,
                sample_id,
                f'probs[{name}]',
                line,
                f'{value!r} is not a probability in [0, 1]',
            )
            continue
        probs.append(float(value))
    return tuple(probs)


def _check_labels(
    values: list[Any],
    schema: ClassSchema,
    sample_id: str,
    line: int | None,
    issues: list[ValidationIssue],
) -> tuple[int, ...]:
    labels = []
    for name, value in zip(schema.class_names, values, strict=True):
        if isinstance(value, bool) or not isinstance(value, Real) or value not in (0, 1):
            _issue(
                issues,
                ErrorCode.LABEL_NOT_BINARY,
                sample_id,
                f'labels[{name}]',
                line,
                f'{value!r} is not 0 or 1',
            )
            continue
        labels.append(int(value))
    return tuple(labels)


def validate_table(
    raw_records: Iterable[PredictionRecord | Mapping[str, Any]],
    schema: ClassSchema,
    line_numbers: Sequence[int | None] | None = None,
) -> ScoreTable:
    """
    Build a ScoreTable from raw records, collecting every issue before raising.

    Raw records are PredictionRecords or mappings with `sample_id` (or `id`), `source`, `probs`
    and `labels`; probs and labels may be sequences in schema order or mappings keyed by class
    name. Validating an already valid table's records returns an equal table.

    :raises TableValidationError: listing every DUPLICATE_ID, PROB_OUT_OF_RANGE,
        LABEL_NOT_BINARY and LENGTH_MISMATCH issue with its sample_id, field and line.
    """
    issues: list[ValidationIssue] = []
    records: list[PredictionRecord] = []
    seen: set[str] = set()
    for index, raw in enumerate(raw_records):
        line = line_numbers[index] if line_numbers is not None else None
        if isinstance(raw, PredictionRecord):
            sample_id, source, raw_probs, raw_labels = (
                raw.sample_id,
                raw.source,
                raw.probs,
                raw.labels,
            )
        else:
            sample_id = str(raw.get('sample_id', raw.get('id', '')))
            source = '' if raw.get('source') is None else str(raw.get('source'))
            raw_probs, raw_labels = raw.get('probs'), raw.get('labels')

        if not sample_id:
            _issue(issues, ErrorCode.PARSE_ERROR, None, 'sample_id', line, 'sample_id is empty')
            continue
        if sample_id in seen:
            _issue(
                issues,
                ErrorCode.DUPLICATE_ID,
                sample_id,
                'sample_id',
                line,
                f'sample_id {sample_id!r} appears more than once',
            )
            continue
        seen.add(sample_id)

        issues_before = len(issues)
        prob_values = _values_in_schema_order(raw_probs, schema, sample_id, 'probs', line, issues)
        label_values = _values_in_schema_order(
            raw_labels, schema, sample_id, 'labels', line, issues
        )
        probs = _check_probs(prob_values, schema, sample_id, line, issues) if prob_values else ()
        labels = (
            _check_labels(label_values, schema, sample_id, line, issues) if label_values else ()
        )
        if len(issues) == issues_before:
            records.append(PredictionRecord(sample_id, source, probs, labels))

    if issues:
        raise TableValidationError(issues)
    return ScoreTable(schema, tuple(records))


@dataclass(frozen=True, eq=False)
class SelectionMask:
    mode: Mode
    accepted: np.ndarray

    def __post_init__(self) -> None:
        accepted = np.array(self.accepted, dtype=bool, copy=True)
        if accepted.ndim != 2:
            raise RejectKitError(
                ErrorCode.SHAPE_MISMATCH, f'mask must be 2-D, got shape {accepted.shape}'
            )
        if self.mode is Mode.IMAGE_LEVEL and accepted.size:
            uniform = accepted.all(axis=1) | ~accepted.any(axis=1)
            if not uniform.all():
                raise RejectKitError(
                    ErrorCode.SHAPE_MISMATCH,
                    'image-level masks must accept or reject whole rows',
                    rows=np.flatnonzero(~uniform).tolist()[:10],
                )
        accepted.setflags(write=False)
        object.__setattr__(self, 'accepted', accepted)

    @property
    def shape(self) -> tuple[int, int]:
        return self.accepted.shape  # type: ignore[return-value]

    @property
    def image_accepted(self) -> np.ndarray:
        return self.accepted.any(axis=1)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SelectionMask):
            return NotImplemented
        return self.mode is other.mode and np.array_equal(self.accepted, other.accepted)

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class ThresholdArtifact:
    """
    Calibrated thresholds for one mechanism.

    `thresholds` holds one value for global scope, one per class otherwise: entropy thresholds
    in nats, interval thresholds as the margin a prediction must exceed.
    """

    mechanism: Mechanism
    scope: Scope
    mode: Mode
    class_names: tuple[str, ...]
    decision_boundary: float
    rejection_budget: float
    thresholds: tuple[float, ...]
    percentiles: tuple[float, ...]
    calibration_fingerprint: Fingerprint
    flags: tuple[str, ...] = ()
    metadata: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        expected = 1 if self.scope is Scope.GLOBAL else len(self.class_names)
        if len(self.thresholds) != expected:
            raise RejectKitError(
                ErrorCode.SHAPE_MISMATCH,
                f'{self.scope} scope needs {expected} threshold(s), got {len(self.thresholds)}',
            )
        upper = (
            LN2
            if self.mechanism is Mechanism.ENTROPY
            else max(self.decision_boundary, 1.0 - self.decision_boundary)
        )
        for value in self.thresholds:
            if not 0.0 <= value <= upper + 1e-15:
                raise RejectKitError(
                    ErrorCode.DOMAIN,
                    f'{self.mechanism} threshold {value} outside [0, {upper}]',
                )
        if not 0.0 <= self.rejection_budget <= 1.0:
            raise RejectKitError(
                ErrorCode.CONFIG_INVALID,
                f'rejection budget must lie in [0, 1], got {self.rejection_budget}',
            )

    def threshold_vector(self) -> np.ndarray:
        values = np.asarray(self.thresholds, dtype=np.float64)
        return np.repeat(values, len(self.class_names)) if self.scope is Scope.GLOBAL else values

    def has_flag(self, code: str) -> bool:
        return any(flag.split(':', 1)[0] == code for flag in self.flags)

    def to_dict(self) -> dict[str, Any]:
        vector = self.threshold_vector()
        percentile: float | dict[str, float] = (
            self.percentiles[0]
            if self.scope is Scope.GLOBAL
            else dict(zip(self.class_names, self.percentiles, strict=True))
        )
        return {
            'mechanism': str(self.mechanism),
            'scope': str(self.scope),
            'mode': str(self.mode),
            'theta': self.decision_boundary,
            'epsilon': self.rejection_budget,
            'percentile': percentile,
            'class_names': list(self.class_names),
            'thresholds': {
                name: float(value) for name, value in zip(self.class_names, vector, strict=True)
            },
            'flags': list(self.flags),
            'calibration_fingerprint': self.calibration_fingerprint.to_dict(),
            'metadata': self.metadata,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'ThresholdArtifact':
        try:
            scope = parse_choice(Scope, data['scope'])
            thresholds_map: Mapping[str, float] = data['thresholds']
            class_names = tuple(data.get('class_names') or thresholds_map.keys())
            values = [float(thresholds_map[name]) for name in class_names]
            percentile = data['percentile']
            if scope is Scope.GLOBAL:
                if len(set(values)) != 1:
                    raise RejectKitError(
                        ErrorCode.SHAPE_MISMATCH, 'global scope needs one shared threshold'
                    )
                thresholds: tuple[float, ...] = (values[0],)
                percentiles: tuple[float, ...] = (float(percentile),)
            else:
                thresholds = tuple(values)
                percentiles = tuple(float(percentile[name]) for name in class_names)
            fingerprint = data['calibration_fingerprint']
            return cls(
                mechanism=parse_choice(Mechanism, data['mechanism']),
                scope=scope,
                mode=parse_choice(Mode, data['mode']),
                class_names=class_names,
                decision_boundary=float(data['theta']),
                rejection_budget=float(data['epsilon']),
                thresholds=thresholds,
                percentiles=percentiles,
                calibration_fingerprint=Fingerprint(
                    int(fingerprint['record_count']), str(fingerprint['schema_hash'])
                ),
                flags=tuple(data.get('flags', ())),
                metadata=dict(data.get('metadata', {})),
            )
        except (KeyError, TypeError, ValueError) as err:
            raise RejectKitError(
                ErrorCode.PARSE_ERROR, f'malformed threshold artifact: {err!r}'
            ) from err


def check_schema_match(schema: ClassSchema, artifact: ThresholdArtifact) -> None:
    if tuple(schema.class_names) != tuple(artifact.class_names):
        raise RejectKitError(
            ErrorCode.SCHEMA_MISMATCH,
            'score table classes differ from the artifact classes',
            table_classes=list(schema.class_names),
            artifact_classes=list(artifact.class_names),
        )
