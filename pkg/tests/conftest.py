from collections.abc import Sequence

import numpy as np
import pytest

from src.ingest import records_from_arrays
from src.models import (
    ClassSchema,
    Fingerprint,
    Mechanism,
    Mode,
    ScoreTable,
    Scope,
    ThresholdArtifact,
)
from src.synth import GeneratorSpec, SourceProfile, generate

CLASS_NAMES = ('Cardiomegaly', 'Effusion', 'Edema', 'Consolidation')


def make_table(
    probs: Sequence[Sequence[float]] | np.ndarray,
    labels: Sequence[Sequence[int]] | np.ndarray,
    sources: Sequence[str] | None = None,
    class_names: Sequence[str] | None = None,
    theta: float = 0.5,
) -> ScoreTable:
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int8)
    names = tuple(class_names or (f'c{c}' for c in range(probs.shape[1])))
    sources = list(sources or ['s'] * probs.shape[0])
    ids = [f'id{i}' for i in range(probs.shape[0])]
    return ScoreTable(ClassSchema(names, theta), tuple(records_from_arrays(ids, sources, probs, labels)))


def make_artifact(
    table: ScoreTable,
    thresholds: Sequence[float],
    mechanism: Mechanism = Mechanism.ENTROPY,
    mode: Mode = Mode.PER_CLASS,
) -> ThresholdArtifact:
    scope = Scope.GLOBAL if len(thresholds) == 1 else Scope.CLASS_SPECIFIC
    return ThresholdArtifact(
        mechanism=mechanism,
        scope=scope,
        mode=mode,
        class_names=table.schema.class_names,
        decision_boundary=table.schema.decision_boundary,
        rejection_budget=0.25,
        thresholds=tuple(thresholds),
        percentiles=tuple(90.0 for _ in thresholds),
        calibration_fingerprint=Fingerprint(len(table), table.schema.schema_hash),
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(scope='session')
def synthetic_table() -> ScoreTable:
    """Three sources, default prevalences, boundary weight shifted per source."""
    spec = GeneratorSpec(
        n_samples=3000,
        sources=(
            SourceProfile('padchest', 0.0),
            SourceProfile('nih', 0.1),
            SourceProfile('mimic', -0.1),
        ),
        seed=11,
    )
    return generate(spec)[0]


@pytest.fixture
def small_table() -> ScoreTable:
    probs = [
        [0.95, 0.10, 0.30, 0.02],
        [0.20, 0.85, 0.55, 0.40],
        [0.60, 0.45, 0.05, 0.90],
        [0.05, 0.70, 0.80, 0.15],
        [0.75, 0.35, 0.48, 0.65],
        [0.40, 0.02, 0.12, 0.52],
    ]
    labels = [
        [1, 0, 0, 0],
        [0, 1, 1, 0],
        [0, 1, 0, 1],
        [0, 1, 1, 0],
        [1, 0, 0, 1],
        [1, 0, 0, 0],
    ]
    return make_table(probs, labels, ['a', 'a', 'a', 'b', 'b', 'b'], CLASS_NAMES)
