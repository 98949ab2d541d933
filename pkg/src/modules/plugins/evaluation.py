from argparse import Namespace
from pathlib import Path
from typing import ClassVar

from src.evaluation import (
    COMPARISON_COLUMNS,
    DEFAULT_ITERATIONS,
    REPORT_COLUMNS,
    bootstrap_f1,
    check_average_row,
    compare_mechanisms,
    evaluate,
    read_comparison_csv,
    report_csv_rows,
)
from src.models import check_schema_match
from src.modules.base import ModuleBase
from src.rejection import build_mask, score_uncertainty
from src.utils.arguments import (
    MODE_OVERRIDE,
    SEED,
    TABLE_ARGUMENTS,
    THRESHOLDS,
    load_artifact,
    load_table,
)
from src.utils.command import Argument, Command, RunContext
from src.utils.errors import ExitCode
from src.utils.i18n import t
from src.utils.json import write_json
from src.utils.reply import reply
from src.utils.tables import write_csv


def run_evaluate(args: Namespace, context: RunContext) -> ExitCode:
    artifact = load_artifact(args.thresholds)
    table = load_table(args, artifact)
    check_schema_match(table.schema, artifact)
    mask = None
    if args.mode is not None:
        uncertainty = score_uncertainty(table, artifact.mechanism, artifact.decision_boundary)
        mask = build_mask(uncertainty, artifact, args.mode)
    report = evaluate(table, artifact, mask)
    write_json(context.out_dir / 'report.json', report.to_dict())
    rows = report_csv_rows(report)
    write_csv(context.out_dir / 'report.csv', REPORT_COLUMNS, rows)
    if context.pretty:
        reply(t('evaluation_report'), [t(column) for column in REPORT_COLUMNS], rows)
    return ExitCode.OK


def run_bootstrap(args: Namespace, context: RunContext) -> ExitCode:
    artifact = load_artifact(args.thresholds)
    table = load_table(args, artifact)
    result = bootstrap_f1(
        table, artifact, iterations=args.iterations, seed=args.seed, threads=context.threads
    )
    write_csv(
        context.out_dir / 'bootstrap_iterations.csv',
        ('dataset', 'class', 'iteration', 'f1_baseline', 'f1_selective'),
        result.iteration_rows(),
    )
    write_json(context.out_dir / 'bootstrap_summary.json', result.to_dict())
    if context.pretty:
        reply(
            t('bootstrap_summary'),
            [t('dataset'), t('class'), t('f1_baseline'), t('f1_selective'), t('exceedance')],
            [
                [s.source, s.class_name, s.f1_baseline, s.f1_selective, s.exceedance]
                for s in result.summaries
            ],
        )
    return ExitCode.OK


def run_compare(args: Namespace, context: RunContext) -> ExitCode:
    entropy = load_artifact(args.entropy_thresholds)
    interval = load_artifact(args.interval_thresholds)
    table = load_table(args, entropy)
    report = compare_mechanisms(table, entropy, interval)
    write_csv(context.out_dir / 'comparison.csv', COMPARISON_COLUMNS, report.csv_rows())
    payload = report.to_dict()
    if args.published is not None:
        rows, published = read_comparison_csv(args.published)
        if published is not None:
            check = check_average_row(rows, published, tolerance=args.tolerance)
            payload['published_average_check'] = {
                'recomputed': check.recomputed,
                'deltas': check.deltas,
                'within_tolerance': check.within_tolerance,
            }
    write_json(context.out_dir / 'comparison.json', payload)
    if context.pretty:
        reply(t('mechanism_comparison'), [t(column) for column in COMPARISON_COLUMNS], report.csv_rows())
    return ExitCode.OK


class Evaluation(ModuleBase):
    name = 'Evaluation'
    description = t('_evaluation_module_description')
    commands: ClassVar[ModuleBase.CommandsT] = {
        'evaluate': Command(
            name='evaluate',
            handler=run_evaluate,
            description=t('_evaluate_description'),
            arguments=(*TABLE_ARGUMENTS, THRESHOLDS, MODE_OVERRIDE),
        ),
        'bootstrap': Command(
            name='bootstrap',
            handler=run_bootstrap,
            description=t('_bootstrap_description'),
            arguments=(
                *TABLE_ARGUMENTS,
                THRESHOLDS,
                Argument(
                    ('--iterations',),
                    t('_arg_iterations'),
                    {'type': int, 'default': DEFAULT_ITERATIONS},
                ),
                SEED,
            ),
        ),
        'compare': Command(
            name='compare',
            handler=run_compare,
            description=t('_compare_description'),
            arguments=(
                *TABLE_ARGUMENTS,
                Argument(('--entropy-thresholds',), t('_arg_entropy_thresholds'), {'type': Path, 'required': True}),
                Argument(('--interval-thresholds',), t('_arg_interval_thresholds'), {'type': Path, 'required': True}),
                Argument(('--published',), t('_arg_published'), {'type': Path, 'default': None}),
                Argument(('--tolerance',), t('_arg_tolerance'), {'type': float, 'default': 0.005}),
            ),
        ),
    }
