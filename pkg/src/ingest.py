"""
Score-file formats, split manifests and mask export.

CSV score files carry `sample_id,source,prob_<class>...,label_<class>...`; JSONL score files
carry one `{"id", "source", "probs": {class: p}, "labels": {class: y}}` object per line.
"""

import codecs
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path
from typing import Any

import numpy as np
import orjson
import regex as re

from src.models import ClassSchema, PredictionRecord, ScoreTable, SelectionMask, validate_table
from src.rejection import UncertaintyMatrix
from src.utils.errors import ErrorCode, RejectKitError
from src.utils.tables import read_csv_dicts, read_frame, write_csv

logger = logging.getLogger(__name__)

PROB_PREFIX = 'prob_'
LABEL_PREFIX = 'label_'
NON_WORD_PATTERN = re.compile(r'[^\p{L}\p{N}_]+')


class ScoreFormat(StrEnum):
    CSV = 'csv'
    JSONL = 'jsonl'


def column_key(class_name: str) -> str:
    """Column suffix for a class: non-word runs become `_`, lower-cased (`Pleural Effusion` -> `pleural_effusion`)."""
    return NON_WORD_PATTERN.sub('_', class_name.strip()).strip('_').lower()


def _column_keys(schema: ClassSchema) -> list[str]:
    keys = [column_key(name) for name in schema.class_names]
    if len(set(keys)) != len(keys):
        raise RejectKitError(
            ErrorCode.SCHEMA_INVALID,
            'class names collide after column normalization',
            class_names=list(schema.class_names),
        )
    return keys


def resolve_format(path: Path, fmt: ScoreFormat | str | None = None) -> ScoreFormat:
    if fmt is not None:
        return ScoreFormat(str(fmt).lower())
    return ScoreFormat.JSONL if path.suffix.lower() in ('.jsonl', '.ndjson') else ScoreFormat.CSV


def _ensure_exists(path: Path) -> None:
    if not path.is_file():
        raise RejectKitError(ErrorCode.FILE_NOT_FOUND, f'{path} does not exist', path=str(path))


def infer_schema(
    path: Path, fmt: ScoreFormat | str | None = None, decision_boundary: float = 0.5
) -> ClassSchema:
    """Class names in file order: `prob_*` CSV columns, or the first JSONL object's probs keys."""
    _ensure_exists(path)
    if resolve_format(path, fmt) is ScoreFormat.CSV:
        header = read_frame(path, nrows=0).columns
        names = [
            str(column)[len(PROB_PREFIX) :] for column in header if str(column).startswith(PROB_PREFIX)
        ]
    else:
        with path.open('rb') as source:
            first = next((line for line in source if line.strip()), b'{}')
        try:
            names = list(orjson.loads(first.removeprefix(codecs.BOM_UTF8)).get('probs', {}))
        except (orjson.JSONDecodeError, AttributeError) as err:
            raise RejectKitError(ErrorCode.PARSE_ERROR, f'{path}:1: {err}', line=1) from err
    if not names:
        raise RejectKitError(ErrorCode.MISSING_COLUMN, f'{path} declares no class probabilities')
    return ClassSchema(tuple(names), decision_boundary)


def _parse_number(text: str) -> float | str:
    """Numeric cells become floats; anything else is left for validation to report."""
    try:
        value = float(text)
    except ValueError:
        return text
    return value if math.isfinite(value) else text


def _read_csv(path: Path, schema: ClassSchema) -> tuple[list[dict[str, Any]], list[int]]:
    keys = _column_keys(schema)
    # blank lines stay as rows, so frame row i sits on file line i + 2
    frame = read_frame(path, skip_blank_lines=False)
    positions = {str(column).strip().lower(): column for column in frame.columns}
    required = [
        'sample_id',
        'source',
        *(f'{PROB_PREFIX}{key}' for key in keys),
        *(f'{LABEL_PREFIX}{key}' for key in keys),
    ]
    missing = [column for column in required if column not in positions]
    if missing:
        raise RejectKitError(
            ErrorCode.MISSING_COLUMN,
            f'{path} lacks column(s): {", ".join(missing)}',
            columns=missing,
        )
    absent = frame.isna()
    blank = frame.fillna('').apply(lambda column: column.str.strip() == '').all(axis=1)
    ragged = np.flatnonzero(absent.any(axis=1) & ~blank)
    if ragged.size:
        line = int(ragged[0]) + 2
        raise RejectKitError(
            ErrorCode.PARSE_ERROR,
            f'{path}:{line}: expected {len(frame.columns)} cells, got fewer',
            line=line,
        )
    kept = frame.loc[~blank]
    probs = kept[[positions[f'{PROB_PREFIX}{key}'] for key in keys]].map(_parse_number)
    labels = kept[[positions[f'{LABEL_PREFIX}{key}'] for key in keys]].map(_parse_number)
    raw_records = [
        {'sample_id': sample_id, 'source': source, 'probs': list(row_p), 'labels': list(row_y)}
        for sample_id, source, row_p, row_y in zip(
            kept[positions['sample_id']].str.strip(),
            kept[positions['source']].str.strip(),
            probs.itertuples(index=False, name=None),
            labels.itertuples(index=False, name=None),
            strict=True,
        )
    ]
    return raw_records, [int(position) + 2 for position in kept.index]


def _keyed(values: Any, schema: ClassSchema, keys: list[str]) -> Any:
    """Map a per-class JSON object onto schema class names, matching on column keys."""
    if not isinstance(values, dict):
        return values
    names_by_key = dict(zip(keys, schema.class_names, strict=True))
    return {
        names_by_key.get(column_key(str(name)), str(name)): value for name, value in values.items()
    }


def _read_jsonl(path: Path, schema: ClassSchema) -> tuple[list[dict[str, Any]], list[int]]:
    keys = _column_keys(schema)
    raw_records: list[dict[str, Any]] = []
    lines: list[int] = []
    with path.open('rb') as source:
        for line, text in enumerate(source, start=1):
            if line == 1:
                text = text.removeprefix(codecs.BOM_UTF8)
            if not text.strip():
                continue
            try:
                obj = orjson.loads(text)
            except orjson.JSONDecodeError as err:
                raise RejectKitError(
                    ErrorCode.PARSE_ERROR, f'{path}:{line}: {err}', line=line
                ) from err
            if not isinstance(obj, dict):
                raise RejectKitError(
                    ErrorCode.PARSE_ERROR, f'{path}:{line}: expected a JSON object', line=line
                )
            for required in ('id', 'probs', 'labels'):
                if required not in obj:
                    raise RejectKitError(
                        ErrorCode.MISSING_COLUMN,
                        f'{path}:{line}: missing {required!r}',
                        line=line,
                        columns=[required],
                    )
            raw_records.append(
                {
                    'sample_id': str(obj['id']),
                    'source': obj.get('source') or '',
                    'probs': _keyed(obj['probs'], schema, keys),
                    'labels': _keyed(obj['labels'], schema, keys),
                }
            )
            lines.append(line)
    return raw_records, lines


def read_scores(
    path: Path, fmt: ScoreFormat | str | None = None, schema: ClassSchema | None = None
) -> ScoreTable:
    """
    Read and validate a score file. Without a schema the class list is inferred from the file.

    :raises RejectKitError: PARSE_ERROR and MISSING_COLUMN with line numbers, or a
        TableValidationError whose issues carry the offending line.
    """
    _ensure_exists(path)
    score_format = resolve_format(path, fmt)
    if schema is None:
        schema = infer_schema(path, score_format)
    reader = _read_csv if score_format is ScoreFormat.CSV else _read_jsonl
    raw_records, lines = reader(path, schema)
    table = validate_table(raw_records, schema, lines)
    logger.info(f'Read {len(table)} records from {path} ({score_format})')
    return table


def write_scores(table: ScoreTable, path: Path, fmt: ScoreFormat | str | None = None) -> Path:
    score_format = resolve_format(path, fmt)
    keys = _column_keys(table.schema)
    if score_format is ScoreFormat.CSV:
        header = [
            'sample_id',
            'source',
            *(f'{PROB_PREFIX}{key}' for key in keys),
            *(f'{LABEL_PREFIX}{key}' for key in keys),
        ]
        return write_csv(
            path,
            header,
            ([r.sample_id, r.source, *r.probs, *r.labels] for r in table.records),
        )
    with path.open('wb') as out:
        for record in table.records:
            out.write(
                orjson.dumps(
                    {
                        'id': record.sample_id,
                        'source': record.source,
                        'probs': dict(zip(table.schema.class_names, record.probs, strict=True)),
                        'labels': dict(zip(table.schema.class_names, record.labels, strict=True)),
                    }
                )
                + b'\n'
            )
    return path


# Split manifests


class SplitStrategy(StrEnum):
    INTRA_SOURCE = 'intra_source'
    INTER_SOURCE = 'inter_source'


class Assignment(StrEnum):
    TRAIN = 'train'
    CAL = 'cal'
    EVAL = 'eval'


@dataclass(frozen=True)
class SplitManifest:
    strategy: SplitStrategy
    assignments: dict[str, Assignment]
    held_out_sources: tuple[str, ...] = ()
    seed: int = 0
    eval_fraction: float = 0.2
    cal_fraction: float = 0.0
    counts: dict[str, int] = field(default_factory=dict, compare=False)


def _floor_share(n: int, fraction: float) -> int:
    return math.floor(n * fraction + 1e-9)


def _shuffled_parts(
    n: int, rng: np.random.Generator, train_fraction: float, cal_fraction: float
) -> list[Assignment]:
    """Assignments for n rows in table order: floor shares for train and cal, the rest eval."""
    order = rng.permutation(n)
    n_train = _floor_share(n, train_fraction)
    n_cal = _floor_share(n, cal_fraction)
    parts = [Assignment.EVAL] * n
    for rank, position in enumerate(order):
        if rank < n_train:
            parts[position] = Assignment.TRAIN
        elif rank < n_train + n_cal:
            parts[position] = Assignment.CAL
    return parts


def make_split(
    table: ScoreTable,
    strategy: SplitStrategy | str = SplitStrategy.INTRA_SOURCE,
    eval_fraction: float = 0.2,
    held_out_sources: Sequence[str] = (),
    seed: int = 0,
    cal_fraction: float = 0.0,
) -> SplitManifest:
    """
    Partition sample ids into train/cal/eval.

    intra_source: every source is shuffled with a seeded permutation; floor(n * train share)
    rows go to train, floor(n * cal_fraction) to cal, the remainder to eval.
    inter_source: records of the held-out sources form eval; the other sources go to train
    (or are split train/cal when cal_fraction > 0).
    """
    strategy = SplitStrategy(str(strategy).replace('-', '_'))
    if not 0.0 <= cal_fraction < 1.0:
        raise RejectKitError(
            ErrorCode.CONFIG_INVALID, f'cal fraction must lie in [0, 1), got {cal_fraction}'
        )
    assignments: dict[str, Assignment] = {}
    if strategy is SplitStrategy.INTRA_SOURCE:
        if not 0.0 < eval_fraction < 1.0 or eval_fraction + cal_fraction >= 1.0:
            raise RejectKitError(
                ErrorCode.CONFIG_INVALID,
                f'eval fraction {eval_fraction} with cal fraction {cal_fraction} leaves no training share',
            )
        train_fraction = 1.0 - eval_fraction - cal_fraction
        rng = np.random.default_rng(seed)
        for indices in table.source_indices.values():
            for index, part in zip(
                indices, _shuffled_parts(indices.size, rng, train_fraction, cal_fraction), strict=True
            ):
                assignments[table.records[index].sample_id] = part
        held_out: tuple[str, ...] = ()
    else:
        held_out = tuple(dict.fromkeys(held_out_sources))
        if not held_out:
            raise RejectKitError(
                ErrorCode.UNKNOWN_SOURCE, 'inter-source split needs at least one held-out source'
            )
        unknown = [source for source in held_out if source not in table.sources]
        if unknown:
            raise RejectKitError(
                ErrorCode.UNKNOWN_SOURCE,
                f'held-out source(s) not in table: {", ".join(unknown)}',
                unknown=unknown,
                known=list(table.sources),
            )
        rng = np.random.default_rng(seed)
        for source, indices in table.source_indices.items():
            if source in held_out:
                parts = [Assignment.EVAL] * indices.size
            elif cal_fraction > 0.0:
                parts = [
                    Assignment.CAL if part is Assignment.EVAL else part
                    for part in _shuffled_parts(indices.size, rng, 1.0 - cal_fraction, 0.0)
                ]
            else:
                parts = [Assignment.TRAIN] * indices.size
            for index, part in zip(indices, parts, strict=True):
                assignments[table.records[index].sample_id] = part

    counts = {str(part): sum(1 for a in assignments.values() if a is part) for part in Assignment}
    fit_side = counts[Assignment.TRAIN] + counts[Assignment.CAL]
    if fit_side == 0 or counts[Assignment.EVAL] == 0:
        raise RejectKitError(
            ErrorCode.DEGENERATE_SPLIT, 'one side of the split would be empty', counts=counts
        )
    logger.info(f'Split {len(assignments)} records ({strategy}): {counts}')
    return SplitManifest(
        strategy=strategy,
        assignments=assignments,
        held_out_sources=held_out,
        seed=seed,
        eval_fraction=eval_fraction,
        cal_fraction=cal_fraction,
        counts=counts,
    )


def apply_split(table: ScoreTable, manifest: SplitManifest, part: Assignment | str) -> ScoreTable:
    wanted = Assignment(part)
    return table.subset(
        i for i, record in enumerate(table.records) if manifest.assignments.get(record.sample_id) is wanted
    )


def write_manifest(manifest: SplitManifest, path: Path) -> Path:
    return write_csv(
        path, ('sample_id', 'assignment'), ((k, str(v)) for k, v in manifest.assignments.items())
    )


def read_manifest(path: Path) -> dict[str, Assignment]:
    try:
        return {row['sample_id']: Assignment(row['assignment']) for row in read_csv_dicts(path)}
    except (KeyError, ValueError) as err:
        raise RejectKitError(ErrorCode.PARSE_ERROR, f'malformed manifest {path}: {err!r}') from err


# Mask and uncertainty export


def write_mask(mask: SelectionMask, table: ScoreTable, path: Path) -> Path:
    keys = _column_keys(table.schema)
    return write_csv(
        path,
        ('sample_id', *keys, 'image_accepted'),
        (
            [sample_id, *(int(cell) for cell in row), int(image)]
            for sample_id, row, image in zip(
                table.sample_ids, mask.accepted, mask.image_accepted, strict=True
            )
        ),
    )


def write_uncertainty(uncertainty: UncertaintyMatrix, table: ScoreTable, path: Path) -> Path:
    keys = _column_keys(table.schema)
    return write_csv(
        path,
        ('sample_id', *keys),
        (
            [sample_id, *(float(value) for value in row)]
            for sample_id, row in zip(table.sample_ids, uncertainty.values, strict=True)
        ),
    )


def records_from_arrays(
    sample_ids: Sequence[str],
    sources: Sequence[str],
    probs: np.ndarray,
    labels: np.ndarray,
) -> list[PredictionRecord]:
    return [
        PredictionRecord(sample_id, source, tuple(float(p) for p in row_p), tuple(int(y) for y in row_y))
        for sample_id, source, row_p, row_y in zip(sample_ids, sources, probs, labels, strict=True)
    ]
