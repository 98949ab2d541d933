from argparse import Namespace
from dataclasses import replace
from pathlib import Path
from typing import ClassVar

from src.ingest import (
    Assignment,
    ScoreFormat,
    SplitStrategy,
    apply_split,
    column_key,
    make_split,
    resolve_format,
    write_manifest,
    write_scores,
)
from src.modules.base import ModuleBase
from src.synth import GeneratorSpec, generate, load_generator_spec
from src.utils.arguments import SEED, TABLE_ARGUMENTS, load_table, name_list
from src.utils.command import Argument, Command, RunContext
from src.utils.errors import ExitCode
from src.utils.i18n import t
from src.utils.json import write_json
from src.utils.reply import reply
from src.utils.tables import write_csv


def run_simulate(args: Namespace, context: RunContext) -> ExitCode:
    spec = load_generator_spec(args.spec) if args.spec is not None else GeneratorSpec()
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    if args.n_samples is not None:
        spec = replace(spec, n_samples=args.n_samples)
    table, truth = generate(spec)
    write_json(context.out_dir / 'generator_spec.json', spec.to_dict())
    write_scores(table, context.out_dir / f'scores.{args.format}', args.format)
    keys = [column_key(name) for name in table.schema.class_names]
    write_csv(
        context.out_dir / 'truth.csv',
        ('sample_id', 'source', *(f'boundary_{key}' for key in keys)),
        (
            [record.sample_id, record.source, *(int(cell) for cell in row)]
            for record, row in zip(table.records, truth.boundary_cells, strict=True)
        ),
    )
    if context.pretty:
        reply(
            t('simulated_scores'),
            [t('dataset'), t('records'), t('boundary_weight')],
            [
                [source, int(indices.size), truth.source_weights[source]]
                for source, indices in table.source_indices.items()
            ],
        )
    return ExitCode.OK


def run_split(args: Namespace, context: RunContext) -> ExitCode:
    table = load_table(args)
    manifest = make_split(
        table,
        strategy=args.strategy,
        eval_fraction=args.eval_fraction,
        held_out_sources=args.held_out or (),
        seed=args.seed,
        cal_fraction=args.cal_fraction,
    )
    write_manifest(manifest, context.out_dir / 'manifest.csv')
    score_format = resolve_format(args.scores, args.format)
    for part in Assignment:
        if manifest.counts.get(str(part)):
            write_scores(
                apply_split(table, manifest, part),
                context.out_dir / f'{part}.{score_format}',
                score_format,
            )
    if context.pretty:
        reply(
            t('split_manifest'),
            [t('assignment'), t('records')],
            [[str(part), manifest.counts[str(part)]] for part in Assignment],
        )
    return ExitCode.OK


class Data(ModuleBase):
    name = 'Data'
    description = t('_data_module_description')
    commands: ClassVar[ModuleBase.CommandsT] = {
        'simulate': Command(
            name='simulate',
            handler=run_simulate,
            description=t('_simulate_description'),
            arguments=(
                Argument(('--spec',), t('_arg_spec'), {'type': Path, 'default': None}),
                Argument(('--seed',), t('_arg_simulate_seed'), {'type': int, 'default': None}),
                Argument(('--n-samples',), t('_arg_n_samples'), {'type': int, 'default': None}),
                Argument(
                    ('--format',),
                    t('_arg_format'),
                    {'choices': [str(f) for f in ScoreFormat], 'default': str(ScoreFormat.CSV)},
                ),
            ),
        ),
        'split': Command(
            name='split',
            handler=run_split,
            description=t('_split_description'),
            arguments=(
                *TABLE_ARGUMENTS,
                Argument(
                    ('--strategy',),
                    t('_arg_strategy'),
                    {
                        'type': lambda value: SplitStrategy(value.replace('-', '_')),
                        'choices': list(SplitStrategy),
                        'default': SplitStrategy.INTRA_SOURCE,
                    },
                ),
                Argument(('--eval-fraction',), t('_arg_eval_fraction'), {'type': float, 'default': 0.2}),
                Argument(('--cal-fraction',), t('_arg_cal_fraction'), {'type': float, 'default': 0.0}),
                Argument(('--held-out',), t('_arg_held_out'), {'type': name_list, 'default': None}),
                SEED,
            ),
        ),
    }
