"""Argument definitions and loaders shared by several subcommands."""

from argparse import Namespace
from pathlib import Path

from src.calibration import CalibrationConfig
from src.ingest import ScoreFormat, infer_schema, read_scores
from src.models import ClassSchema, Mechanism, Mode, ScoreTable, Scope, ThresholdArtifact, parse_choice
from src.utils.command import Argument
from src.utils.errors import ErrorCode, RejectKitError
from src.utils.i18n import t
from src.utils.json import read_json


def name_list(text: str) -> tuple[str, ...]:
    """Comma-separated names, e.g. `Cardiomegaly,Effusion`."""
    names = tuple(name.strip() for name in text.split(',') if name.strip())
    if not names:
        raise ValueError('empty name list')
    return names


def choice_of(enum: type[Mechanism] | type[Scope] | type[Mode]) -> dict[str, object]:
    return {
        'type': lambda value: parse_choice(enum, value),
        'choices': list(enum),
        'metavar': '{' + ','.join(str(member) for member in enum) + '}',
    }


SCORES = Argument(('--scores',), t('_arg_scores'), {'type': Path, 'required': True})
CLASSES = Argument(('--classes',), t('_arg_classes'), {'type': name_list, 'default': None})
FORMAT = Argument(
    ('--format',), t('_arg_format'), {'choices': [str(f) for f in ScoreFormat], 'default': None}
)
THETA = Argument(('--theta',), t('_arg_theta'), {'type': float, 'default': None})
THRESHOLDS = Argument(('--thresholds',), t('_arg_thresholds'), {'type': Path, 'required': True})
MODE_OVERRIDE = Argument(('--mode',), t('_arg_mode_override'), {**choice_of(Mode), 'default': None})
SEED = Argument(('--seed',), t('_arg_seed'), {'type': int, 'default': 0})

TABLE_ARGUMENTS = (SCORES, CLASSES, FORMAT, THETA)
CALIBRATION_ARGUMENTS = (
    Argument(('--mechanism',), t('_arg_mechanism'), {**choice_of(Mechanism), 'default': Mechanism.ENTROPY}),
    Argument(('--scope',), t('_arg_scope'), {**choice_of(Scope), 'default': Scope.CLASS_SPECIFIC}),
    Argument(('--mode',), t('_arg_mode'), {**choice_of(Mode), 'default': Mode.PER_CLASS}),
    Argument(('--budget',), t('_arg_budget'), {'type': float, 'default': 0.25}),
    Argument(('--grid-start',), t('_arg_grid_start'), {'type': float, 'default': 75.0}),
    Argument(('--grid-end',), t('_arg_grid_end'), {'type': float, 'default': 95.0}),
    Argument(('--grid-step',), t('_arg_grid_step'), {'type': float, 'default': 2.5}),
)


def load_table(args: Namespace, artifact: ThresholdArtifact | None = None) -> ScoreTable:
    """
    Read `--scores`. The class list comes from `--classes`, then from the artifact, then from
    the file itself; theta from `--theta`, then the artifact, then 0.5.
    """
    theta = args.theta
    if theta is None:
        theta = artifact.decision_boundary if artifact is not None else 0.5
    if args.classes:
        schema = ClassSchema(tuple(args.classes), theta)
    elif artifact is not None:
        schema = ClassSchema(artifact.class_names, theta)
    else:
        schema = infer_schema(args.scores, args.format, theta)
    return read_scores(args.scores, args.format, schema)


def load_artifact(path: Path) -> ThresholdArtifact:
    data = read_json(path)
    if not isinstance(data, dict):
        raise RejectKitError(ErrorCode.PARSE_ERROR, f'{path} must hold a JSON object', path=str(path))
    return ThresholdArtifact.from_dict(data)


def calibration_config(args: Namespace) -> CalibrationConfig:
    return CalibrationConfig(
        mechanism=args.mechanism,
        scope=args.scope,
        mode=args.mode,
        grid_start=args.grid_start,
        grid_end=args.grid_end,
        grid_step=args.grid_step,
        rejection_budget=args.budget,
        decision_boundary=args.theta,
    )
