"""
Synthetic score generator.

Each (sample, class) cell draws its label from the class prevalence and its probability from a
two-component mixture: a confident component concentrated on the label's side of the decision
boundary, and a label-agnostic boundary component hugging theta. Boundary draws have high
entropy and are frequently wrong, so uncertainty-based rejection has real errors to remove.
"""

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from src.ingest import records_from_arrays
from src.models import DEFAULT_CLASS_NAMES, ClassSchema, ScoreTable
from src.utils.errors import ErrorCode, RejectKitError
from src.utils.json import read_json

logger = logging.getLogger(__name__)

DEFAULT_PREVALENCES = (0.097, 0.076, 0.016, 0.021)


@dataclass(frozen=True)
class ClassProfile:
    """
    Per-class generator parameters.

    Confident draws for a positive cell follow Beta(confident_alpha, confident_beta) and the
    mirrored Beta for a negative cell. Boundary draws are theta - halfwidth + 2 * halfwidth *
    Beta(boundary_concentration, boundary_concentration).
    """

    name: str
    prevalence: float
    confident_alpha: float = 8.0
    confident_beta: float = 1.5
    boundary_concentration: float = 2.0
    boundary_halfwidth: float = 0.15


@dataclass(frozen=True)
class SourceProfile:
    """`shift` is added to the boundary weight for this source's samples (then clipped to [0, 1])."""

    name: str
    shift: float = 0.0


def default_classes() -> tuple[ClassProfile, ...]:
    return tuple(
        ClassProfile(name, prevalence)
        for name, prevalence in zip(DEFAULT_CLASS_NAMES, DEFAULT_PREVALENCES, strict=True)
    )


@dataclass(frozen=True)
class GeneratorSpec:
    classes: tuple[ClassProfile, ...] = field(default_factory=default_classes)
    boundary_weight: float = 0.3
    n_samples: int = 20_000
    sources: tuple[SourceProfile, ...] = (SourceProfile('synthetic'),)
    decision_boundary: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        problems = []
        if not self.classes:
            problems.append('at least one class is required')
        for profile in self.classes:
            if not 0.0 < profile.prevalence < 1.0:
                problems.append(f'{profile.name}: prevalence must lie in (0, 1)')
            if min(profile.confident_alpha, profile.confident_beta, profile.boundary_concentration) <= 0:
                problems.append(f'{profile.name}: concentration parameters must be positive')
            if not 0.0 < profile.boundary_halfwidth <= min(
                self.decision_boundary, 1.0 - self.decision_boundary
            ):
                problems.append(f'{profile.name}: boundary halfwidth must keep draws inside [0, 1]')
        if not 0.0 <= self.boundary_weight <= 1.0:
            problems.append('boundary weight must lie in [0, 1]')
        if self.n_samples < 1:
            problems.append('n_samples must be positive')
        if not self.sources:
            problems.append('at least one source is required')
        if len({source.name for source in self.sources}) != len(self.sources):
            problems.append('source names must be distinct')
        if not 0.0 < self.decision_boundary < 1.0:
            problems.append('decision boundary must lie in (0, 1)')
        if problems:
            raise RejectKitError(ErrorCode.SPEC_INVALID, '; '.join(problems), problems=problems)

    @property
    def schema(self) -> ClassSchema:
        return ClassSchema(tuple(profile.name for profile in self.classes), self.decision_boundary)

    def source_weight(self, index: int) -> float:
        return float(np.clip(self.boundary_weight + self.sources[index].shift, 0.0, 1.0))

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> 'GeneratorSpec':
        try:
            values = dict(data)
            if 'classes' in values:
                values['classes'] = tuple(ClassProfile(**profile) for profile in values['classes'])
            if 'sources' in values:
                values['sources'] = tuple(
                    SourceProfile(name=source) if isinstance(source, str) else SourceProfile(**source)
                    for source in values['sources']
                )
            return cls(**values)
        except TypeError as err:
            raise RejectKitError(ErrorCode.SPEC_INVALID, f'malformed generator spec: {err}') from err


def load_generator_spec(path: Path) -> GeneratorSpec:
    data = read_json(path)
    if not isinstance(data, dict):
        raise RejectKitError(ErrorCode.SPEC_INVALID, f'{path} must hold a JSON object')
    return GeneratorSpec.from_dict(data)


@dataclass(frozen=True, eq=False)
class SyntheticTruth:
    """`boundary_cells[i, c]` is True where the cell came from the boundary component."""

    boundary_cells: np.ndarray
    source_weights: dict[str, float]


def _source_blocks(n_samples: int, n_sources: int) -> list[range]:
    edges = [n_samples * s // n_sources for s in range(n_sources + 1)]
    return [range(edges[s], edges[s + 1]) for s in range(n_sources)]


def generate(spec: GeneratorSpec) -> tuple[ScoreTable, SyntheticTruth]:
    """
    Draw a score table. Samples are split into contiguous equal blocks, one per source, and each
    source draws from its own stream seeded with (seed, source index), so output is fixed by
    the GeneratorSpec alone.
    """
    theta = spec.decision_boundary
    n_classes = len(spec.classes)
    probs = np.empty((spec.n_samples, n_classes))
    labels = np.empty((spec.n_samples, n_classes), dtype=np.int8)
    boundary = np.empty((spec.n_samples, n_classes), dtype=bool)
    sources: list[str] = []
    weights: dict[str, float] = {}
    for s, block in enumerate(_source_blocks(spec.n_samples, len(spec.sources))):
        rng = np.random.default_rng([spec.seed, s])
        n = len(block)
        weight = spec.source_weight(s)
        weights[spec.sources[s].name] = weight
        rows = slice(block.start, block.stop)
        for c, profile in enumerate(spec.classes):
            y = rng.random(n) < profile.prevalence
            on_boundary = rng.random(n) < weight
            confident = rng.beta(profile.confident_alpha, profile.confident_beta, n)
            confident = np.where(y, confident, 1.0 - confident)
            hugging = theta - profile.boundary_halfwidth + 2.0 * profile.boundary_halfwidth * rng.beta(
                profile.boundary_concentration, profile.boundary_concentration, n
            )
            probs[rows, c] = np.clip(np.where(on_boundary, hugging, confident), 0.0, 1.0)
            labels[rows, c] = y
            boundary[rows, c] = on_boundary
        sources.extend([spec.sources[s].name] * n)

    width = len(str(spec.n_samples - 1))
    sample_ids = [f's{i:0{width}d}' for i in range(spec.n_samples)]
    table = ScoreTable(spec.schema, tuple(records_from_arrays(sample_ids, sources, probs, labels)))
    logger.info(
        f'Generated {spec.n_samples} samples x {n_classes} classes '
        f'({int(boundary.sum())} boundary cells, seed {spec.seed})'
    )
    return table, SyntheticTruth(boundary_cells=boundary, source_weights=weights)
