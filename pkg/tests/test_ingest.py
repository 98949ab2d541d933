import codecs
from pathlib import Path

import numpy as np
import pytest

from src.ingest import (
    Assignment,
    SplitStrategy,
    apply_split,
    column_key,
    infer_schema,
    make_split,
    read_manifest,
    read_scores,
    write_manifest,
    write_mask,
    write_scores,
)
from src.models import ClassSchema, Mechanism, Mode, ScoreTable
from src.rejection import mask_from_thresholds, score_uncertainty
from src.synth import GeneratorSpec, SourceProfile, generate
from src.utils.errors import ErrorCode, RejectKitError, TableValidationError
from src.utils.tables import read_csv_dicts

HEADER = 'sample_id,source,prob_edema,prob_pleural_effusion,label_edema,label_pleural_effusion\n'
SCHEMA = ClassSchema(('Edema', 'Pleural Effusion'))


def write(path: Path, text: str) -> Path:
    path.write_text(text, encoding='utf-8')
    return path


class TestColumns:
    def test_column_key(self) -> None:
        assert column_key('Pleural Effusion') == 'pleural_effusion'
        assert column_key(' Lung-Opacity ') == 'lung_opacity'

    def test_colliding_keys(self, tmp_path: Path) -> None:
        path = write(tmp_path / 's.csv', HEADER)
        with pytest.raises(RejectKitError) as err:
            read_scores(path, schema=ClassSchema(('Lung Opacity', 'lung-opacity')))
        assert err.value.code is ErrorCode.SCHEMA_INVALID


class TestRoundTrip:
    @pytest.mark.parametrize('suffix', ['csv', 'jsonl'])
    def test_identity(self, tmp_path: Path, suffix: str) -> None:
        spec = GeneratorSpec(
            n_samples=10_000, sources=(SourceProfile('nih'), SourceProfile('mimic', 0.1)), seed=31
        )
        table, _ = generate(spec)
        path = write_scores(table, tmp_path / f'scores.{suffix}')
        assert read_scores(path, schema=table.schema) == table

    def test_csv_schema_inferred_from_header(self, tmp_path: Path, small_table: ScoreTable) -> None:
        path = write_scores(small_table, tmp_path / 'scores.csv')
        assert infer_schema(path).class_names == ('cardiomegaly', 'effusion', 'edema', 'consolidation')

    def test_jsonl_schema_keeps_names(self, tmp_path: Path, small_table: ScoreTable) -> None:
        path = write_scores(small_table, tmp_path / 'scores.jsonl')
        assert read_scores(path) == small_table


class TestErrors:
    def test_missing_file(self, tmp_path: Path) -> None:
        with pytest.raises(RejectKitError) as err:
            read_scores(tmp_path / 'nope.csv', schema=SCHEMA)
        assert err.value.code is ErrorCode.FILE_NOT_FOUND

    def test_missing_column(self, tmp_path: Path) -> None:
        path = write(tmp_path / 's.csv', 'sample_id,source,prob_edema,label_edema\nx,a,0.1,0\n')
        with pytest.raises(RejectKitError) as err:
            read_scores(path, schema=SCHEMA)
        assert err.value.code is ErrorCode.MISSING_COLUMN
        assert err.value.details['columns'] == ['prob_pleural_effusion', 'label_pleural_effusion']

    def test_invalid_cells_carry_line_numbers(self, tmp_path: Path) -> None:
        path = write(
            tmp_path / 's.csv',
            HEADER + 'x,a,0.1,0.2,0,1\ny,a,abc,0.2,0,1\nx,b,0.3,0.4,1,0\nz,b,0.3,0.4,1,2\n',
        )
        with pytest.raises(TableValidationError) as err:
            read_scores(path, schema=SCHEMA)
        lines = {issue.code: issue.line for issue in err.value.issues}
        assert lines == {
            ErrorCode.PROB_OUT_OF_RANGE: 3,
            ErrorCode.DUPLICATE_ID: 4,
            ErrorCode.LABEL_NOT_BINARY: 5,
        }

    def test_ragged_row(self, tmp_path: Path) -> None:
        path = write(tmp_path / 's.csv', HEADER + 'x,a,0.1\n')
        with pytest.raises(RejectKitError) as err:
            read_scores(path, schema=SCHEMA)
        assert err.value.code is ErrorCode.PARSE_ERROR
        assert err.value.details['line'] == 2

    def test_extra_cells(self, tmp_path: Path) -> None:
        path = write(tmp_path / 's.csv', HEADER + 'x,a,0.1,0.2,0,1\ny,a,0.1,0.2,0,1,7\n')
        with pytest.raises(RejectKitError) as err:
            read_scores(path, schema=SCHEMA)
        assert err.value.code is ErrorCode.PARSE_ERROR
        assert err.value.details['line'] == 3

    def test_invalid_utf8(self, tmp_path: Path) -> None:
        path = tmp_path / 's.csv'
        path.write_bytes(HEADER.encode() + b'x,a,0.1,0.2,0,1\ny\xff\xfe,a,0.1,0.2,0,1\n')
        with pytest.raises(RejectKitError) as err:
            read_scores(path, schema=SCHEMA)
        assert err.value.code is ErrorCode.PARSE_ERROR
        assert err.value.details['line'] == 3
        with pytest.raises(RejectKitError):
            infer_schema(path)

    def test_byte_order_mark(self, tmp_path: Path) -> None:
        path = tmp_path / 's.csv'
        path.write_bytes(codecs.BOM_UTF8 + (HEADER + 'x,a,0.1,0.2,0,1\n').encode())
        assert infer_schema(path).class_names == ('edema', 'pleural_effusion')
        table = read_scores(path, schema=SCHEMA)
        assert table.sample_ids == ('x',)

    def test_bad_json_line(self, tmp_path: Path) -> None:
        path = write(
            tmp_path / 's.jsonl',
            '{"id": "x", "source": "a", "probs": {"Edema": 0.1, "Pleural Effusion": 0.2}, '
            '"labels": {"Edema": 0, "Pleural Effusion": 1}}\n{not json}\n',
        )
        with pytest.raises(RejectKitError) as err:
            read_scores(path, schema=SCHEMA)
        assert err.value.code is ErrorCode.PARSE_ERROR
        assert err.value.details['line'] == 2

    def test_jsonl_class_keys_match_loosely(self, tmp_path: Path) -> None:
        path = write(
            tmp_path / 's.jsonl',
            '{"id": "x", "source": "a", "probs": {"edema": 0.1, "pleural_effusion": 0.2}, '
            '"labels": {"EDEMA": 0, "Pleural Effusion": 1}}\n',
        )
        table = read_scores(path, schema=SCHEMA)
        np.testing.assert_array_equal(table.labels, [[0, 1]])


class TestSplits:
    def test_intra_source_partitions_exactly(self, synthetic_table: ScoreTable) -> None:
        manifest = make_split(synthetic_table, SplitStrategy.INTRA_SOURCE, seed=5)
        assert set(manifest.assignments) == set(synthetic_table.sample_ids)
        assert sum(manifest.counts.values()) == len(synthetic_table)
        for indices in synthetic_table.source_indices.values():
            ids = [synthetic_table.records[i].sample_id for i in indices]
            n_eval = sum(manifest.assignments[i] is Assignment.EVAL for i in ids)
            assert abs(n_eval - 0.2 * len(ids)) <= 1

    def test_seeded(self, synthetic_table: ScoreTable) -> None:
        assert make_split(synthetic_table, seed=1) == make_split(synthetic_table, seed=1)
        assert make_split(synthetic_table, seed=1) != make_split(synthetic_table, seed=2)

    def test_three_way(self, synthetic_table: ScoreTable) -> None:
        manifest = make_split(synthetic_table, eval_fraction=0.2, cal_fraction=0.2, seed=3)
        assert manifest.counts == {'train': 1800, 'cal': 600, 'eval': 600}

    def test_inter_source(self, synthetic_table: ScoreTable) -> None:
        manifest = make_split(synthetic_table, 'inter-source', held_out_sources=['mimic'])
        for record in synthetic_table.records:
            expected = Assignment.EVAL if record.source == 'mimic' else Assignment.TRAIN
            assert manifest.assignments[record.sample_id] is expected
        evaluation = apply_split(synthetic_table, manifest, 'eval')
        assert evaluation.sources == ('mimic',)

    @pytest.mark.parametrize(
        ('held_out', 'code'),
        [
            ([], ErrorCode.UNKNOWN_SOURCE),
            (['chexpert'], ErrorCode.UNKNOWN_SOURCE),
            (['padchest', 'nih', 'mimic'], ErrorCode.DEGENERATE_SPLIT),
        ],
    )
    def test_inter_source_errors(
        self, synthetic_table: ScoreTable, held_out: list[str], code: ErrorCode
    ) -> None:
        with pytest.raises(RejectKitError) as err:
            make_split(synthetic_table, SplitStrategy.INTER_SOURCE, held_out_sources=held_out)
        assert err.value.code is code

    def test_invalid_fraction(self, small_table: ScoreTable) -> None:
        with pytest.raises(RejectKitError) as err:
            make_split(small_table, eval_fraction=1.0)
        assert err.value.code is ErrorCode.CONFIG_INVALID

    def test_manifest_file(self, tmp_path: Path, synthetic_table: ScoreTable) -> None:
        manifest = make_split(synthetic_table, seed=9)
        path = write_manifest(manifest, tmp_path / 'manifest.csv')
        assert read_manifest(path) == manifest.assignments


def test_mask_export(tmp_path: Path, small_table: ScoreTable) -> None:
    uncertainty = score_uncertainty(small_table, Mechanism.ENTROPY)
    mask = mask_from_thresholds(uncertainty, 0.3, Mode.PER_CLASS)
    rows = read_csv_dicts(write_mask(mask, small_table, tmp_path / 'mask.csv'))
    assert list(rows[0]) == ['sample_id', 'cardiomegaly', 'effusion', 'edema', 'consolidation', 'image_accepted']
    assert [row['sample_id'] for row in rows] == list(small_table.sample_ids)
    for row, accepted in zip(rows, mask.accepted, strict=True):
        assert [int(row[key]) for key in ('cardiomegaly', 'effusion', 'edema', 'consolidation')] == [
            int(cell) for cell in accepted
        ]
        assert int(row['image_accepted']) == int(accepted.any())
