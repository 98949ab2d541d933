from argparse import Namespace
from collections.abc import Sequence
from typing import Any, ClassVar

from src.calibration import RiskCoveragePoint, calibrate
from src.evaluation import risk_coverage_sweep
from src.ingest import column_key
from src.modules.base import ModuleBase
from src.utils.arguments import CALIBRATION_ARGUMENTS, TABLE_ARGUMENTS, calibration_config, load_table
from src.utils.command import Command, RunContext
from src.utils.errors import ErrorCode, ExitCode, RejectKitError
from src.utils.i18n import t
from src.utils.json import write_json
from src.utils.reply import reply
from src.utils.tables import write_csv


def sweep_table(
    points: Sequence[RiskCoveragePoint], class_names: Sequence[str]
) -> tuple[list[str], list[list[Any]]]:
    keys = [column_key(name) for name in class_names]
    header = ['percentile', 'coverage', 'rejection_rate', 'mean_auc', 'n_auc_excluded']
    for prefix in ('threshold', 'rejection_rate', 'auc', 'f1'):
        header.extend(f'{prefix}_{key}' for key in keys)
    rows = []
    for point in points:
        thresholds = list(point.thresholds) if point.thresholds else [None] * len(keys)
        rows.append(
            [
                point.percentile,
                point.coverage,
                point.rejection_rate,
                point.mean_auc,
                point.n_auc_excluded,
                *thresholds,
                *point.class_rejection_rates,
                *point.selective_auc,
                *point.selective_f1,
            ]
        )
    return header, rows


def _pretty_sweep(title: str, points: Sequence[RiskCoveragePoint]) -> None:
    reply(
        title,
        [t('percentile'), t('coverage'), t('rejection_rate'), t('mean_auc')],
        [[p.percentile, p.coverage, p.rejection_rate, p.mean_auc] for p in points],
    )


def run_calibrate(args: Namespace, context: RunContext) -> ExitCode:
    table = load_table(args)
    result = calibrate(table, calibration_config(args), threads=context.threads)
    artifact = result.artifact
    write_json(context.out_dir / 'thresholds.json', artifact.to_dict())
    header, rows = sweep_table(result.sweep, table.schema.class_names)
    write_csv(context.out_dir / 'calibration_sweep.csv', header, rows)
    if context.pretty:
        percentiles = (
            artifact.percentiles * len(artifact.class_names)
            if len(artifact.percentiles) == 1
            else artifact.percentiles
        )
        reply(
            t('calibrated_thresholds'),
            [t('class'), t('threshold'), t('percentile'), t('rejection_rate')],
            [
                [name, threshold, percentile, artifact.metadata['calibration_rejection_rates'][name]]
                for name, threshold, percentile in zip(
                    artifact.class_names, artifact.threshold_vector(), percentiles, strict=True
                )
            ],
        )
        _pretty_sweep(t('calibration_sweep'), result.sweep)
    if artifact.has_flag(ErrorCode.BUDGET_INFEASIBLE):
        suffixes = [
            flag.partition(':')[2]
            for flag in artifact.flags
            if flag.partition(':')[0] == ErrorCode.BUDGET_INFEASIBLE
        ]
        # a global-scope flag has no class suffix; every class shares its threshold
        flagged = list(artifact.class_names) if '' in suffixes else suffixes
        raise RejectKitError(
            ErrorCode.BUDGET_INFEASIBLE,
            f'no grid point keeps rejection within {artifact.rejection_budget}',
            classes=flagged,
            thresholds=str(context.out_dir / 'thresholds.json'),
        )
    return ExitCode.OK


def run_riskcov(args: Namespace, context: RunContext) -> ExitCode:
    table = load_table(args)
    points = risk_coverage_sweep(table, calibration_config(args), threads=context.threads)
    header, rows = sweep_table(points, table.schema.class_names)
    write_csv(context.out_dir / 'risk_coverage.csv', header, rows)
    if context.pretty:
        _pretty_sweep(t('risk_coverage'), points)
    return ExitCode.OK


class Calibration(ModuleBase):
    name = 'Calibration'
    description = t('_calibration_module_description')
    commands: ClassVar[ModuleBase.CommandsT] = {
        'calibrate': Command(
            name='calibrate',
            handler=run_calibrate,
            description=t('_calibrate_description'),
            arguments=(*TABLE_ARGUMENTS, *CALIBRATION_ARGUMENTS),
        ),
        'riskcov': Command(
            name='riskcov',
            handler=run_riskcov,
            description=t('_riskcov_description'),
            arguments=(*TABLE_ARGUMENTS, *CALIBRATION_ARGUMENTS),
        ),
    }
