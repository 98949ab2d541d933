from dataclasses import replace

import numpy as np
import pytest

from src.models import (
    ClassSchema,
    Mechanism,
    Mode,
    PredictionRecord,
    ScoreTable,
    Scope,
    SelectionMask,
    ThresholdArtifact,
    check_schema_match,
    parse_choice,
    validate_table,
)
from src.utils.errors import ErrorCode, RejectKitError, TableValidationError
from tests.conftest import CLASS_NAMES, make_artifact


@pytest.fixture
def schema() -> ClassSchema:
    return ClassSchema(('a', 'b'))


class TestClassSchema:
    @pytest.mark.parametrize(
        ('names', 'theta'),
        [((), 0.5), (('a', 'a'), 0.5), (('a', ''), 0.5), (('a',), 0.0), (('a',), 1.0)],
    )
    def test_invalid(self, names: tuple[str, ...], theta: float) -> None:
        with pytest.raises(RejectKitError) as err:
            ClassSchema(names, theta)
        assert err.value.code is ErrorCode.SCHEMA_INVALID

    def test_hash_tracks_content(self) -> None:
        assert ClassSchema(('a', 'b')).schema_hash == ClassSchema(('a', 'b')).schema_hash
        assert ClassSchema(('a', 'b')).schema_hash != ClassSchema(('b', 'a')).schema_hash
        assert ClassSchema(('a', 'b')).schema_hash != ClassSchema(('a', 'b'), 0.4).schema_hash


class TestValidateTable:
    def test_valid_mapping_records(self, schema: ClassSchema) -> None:
        table = validate_table(
            [
                {'id': 'x', 'source': 'nih', 'probs': {'b': 0.2, 'a': 0.9}, 'labels': {'a': 1, 'b': 0}},
                {'sample_id': 'y', 'source': 'nih', 'probs': [0.1, 0.6], 'labels': [0, 1]},
            ],
            schema,
        )
        assert table.sample_ids == ('x', 'y')
        np.testing.assert_array_equal(table.probs, [[0.9, 0.2], [0.1, 0.6]])
        np.testing.assert_array_equal(table.labels, [[1, 0], [0, 1]])

    def test_revalidating_is_identity(self, small_table: ScoreTable) -> None:
        assert validate_table(small_table.records, small_table.schema) == small_table

    def test_collects_every_issue(self, schema: ClassSchema) -> None:
        raw = [
            {'id': 'x', 'source': 's', 'probs': [0.1, 1.2], 'labels': [0, 2]},
            {'id': 'x', 'source': 's', 'probs': [0.1, 0.2], 'labels': [0, 1]},
            {'id': 'y', 'source': 's', 'probs': [0.1], 'labels': [0, 1]},
        ]
        with pytest.raises(TableValidationError) as err:
            validate_table(raw, schema, line_numbers=[2, 3, 4])
        assert err.value.codes == {
            ErrorCode.PROB_OUT_OF_RANGE,
            ErrorCode.LABEL_NOT_BINARY,
            ErrorCode.DUPLICATE_ID,
            ErrorCode.LENGTH_MISMATCH,
        }
        duplicate = next(i for i in err.value.issues if i.code is ErrorCode.DUPLICATE_ID)
        assert duplicate.sample_id == 'x'
        assert duplicate.line == 3
        assert err.value.to_dict()['details']['issues'][0]['field'] == 'probs[b]'

    def test_boolean_label_rejected(self, schema: ClassSchema) -> None:
        with pytest.raises(TableValidationError) as err:
            validate_table([{'id': 'x', 'source': 's', 'probs': [0.1, 0.2], 'labels': [True, 0]}], schema)
        assert err.value.codes == {ErrorCode.LABEL_NOT_BINARY}


class TestScoreTable:
    def test_sources_in_first_appearance_order(self, small_table: ScoreTable) -> None:
        assert small_table.sources == ('a', 'b')
        np.testing.assert_array_equal(small_table.source_indices['b'], [3, 4, 5])

    def test_matrices_are_read_only(self, small_table: ScoreTable) -> None:
        with pytest.raises(ValueError):
            small_table.probs[0, 0] = 0.0

    def test_fingerprint_and_subset(self, small_table: ScoreTable) -> None:
        part = small_table.subset([0, 2])
        assert part.sample_ids == ('id0', 'id2')
        assert part.fingerprint().record_count == 2
        assert part.fingerprint().schema_hash == small_table.fingerprint().schema_hash

    def test_empty_table_shapes(self) -> None:
        table = ScoreTable(ClassSchema(('a', 'b')), ())
        assert table.probs.shape == (0, 2)
        assert table.sources == ()


class TestSelectionMask:
    def test_image_level_rows_must_be_uniform(self) -> None:
        with pytest.raises(RejectKitError) as err:
            SelectionMask(Mode.IMAGE_LEVEL, np.array([[True, False]]))
        assert err.value.code is ErrorCode.SHAPE_MISMATCH

    def test_copy_is_frozen(self) -> None:
        source = np.array([[True, False]])
        mask = SelectionMask(Mode.PER_CLASS, source)
        source[0, 1] = True
        assert not mask.accepted[0, 1]
        np.testing.assert_array_equal(mask.image_accepted, [True])


class TestThresholdArtifact:
    def test_dict_round_trip(self, small_table: ScoreTable) -> None:
        artifact = make_artifact(small_table, [0.3, 0.4, 0.5, 0.6])
        assert ThresholdArtifact.from_dict(artifact.to_dict()) == artifact

    def test_global_scope_serializes_one_value_per_class(self, small_table: ScoreTable) -> None:
        artifact = make_artifact(small_table, [0.3])
        data = artifact.to_dict()
        assert data['scope'] == 'global'
        assert data['thresholds'] == dict.fromkeys(CLASS_NAMES, 0.3)
        assert data['percentile'] == 90.0
        assert ThresholdArtifact.from_dict(data) == artifact

    def test_global_scope_needs_shared_value(self, small_table: ScoreTable) -> None:
        data = make_artifact(small_table, [0.3]).to_dict()
        data['thresholds']['Edema'] = 0.2
        with pytest.raises(RejectKitError) as err:
            ThresholdArtifact.from_dict(data)
        assert err.value.code is ErrorCode.SHAPE_MISMATCH

    def test_threshold_range(self, small_table: ScoreTable) -> None:
        with pytest.raises(RejectKitError) as err:
            make_artifact(small_table, [0.8], mechanism=Mechanism.ENTROPY)
        assert err.value.code is ErrorCode.DOMAIN
        make_artifact(small_table, [0.5], mechanism=Mechanism.INTERVAL)

    def test_malformed(self) -> None:
        with pytest.raises(RejectKitError) as err:
            ThresholdArtifact.from_dict({'mechanism': 'entropy'})
        assert err.value.code is ErrorCode.PARSE_ERROR

    def test_flag_prefix(self, small_table: ScoreTable) -> None:
        artifact = make_artifact(small_table, [0.3])
        flagged = replace(artifact, flags=('BUDGET_INFEASIBLE:Edema',))
        assert flagged.has_flag('BUDGET_INFEASIBLE')
        assert not artifact.has_flag('BUDGET_INFEASIBLE')

    def test_schema_match(self, small_table: ScoreTable) -> None:
        artifact = make_artifact(small_table, [0.3])
        check_schema_match(small_table.schema, artifact)
        with pytest.raises(RejectKitError) as err:
            check_schema_match(ClassSchema(('a', 'b', 'c', 'd')), artifact)
        assert err.value.code is ErrorCode.SCHEMA_MISMATCH


def test_parse_choice_accepts_dashes() -> None:
    assert parse_choice(Scope, 'class-specific') is Scope.CLASS_SPECIFIC
    with pytest.raises(RejectKitError):
        parse_choice(Mechanism, 'variance')


def test_prediction_records_compare_by_value() -> None:
    assert PredictionRecord('a', 's', (0.1,), (0,)) == PredictionRecord('a', 's', (0.1,), (0,))
