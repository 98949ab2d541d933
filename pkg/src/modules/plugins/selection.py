from argparse import Namespace
from pathlib import Path
from typing import ClassVar

from src.ingest import write_mask, write_uncertainty
from src.models import check_schema_match
from src.modules.base import ModuleBase
from src.rejection import CombineRule, build_mask, combine_masks, rejection_rate, score_uncertainty
from src.utils.arguments import MODE_OVERRIDE, TABLE_ARGUMENTS, THRESHOLDS, load_artifact, load_table
from src.utils.command import Argument, Command, RunContext
from src.utils.errors import ExitCode
from src.utils.i18n import t
from src.utils.reply import reply


def run_apply(args: Namespace, context: RunContext) -> ExitCode:
    artifact = load_artifact(args.thresholds)
    table = load_table(args, artifact)
    check_schema_match(table.schema, artifact)
    uncertainty = score_uncertainty(table, artifact.mechanism, artifact.decision_boundary)
    mask = build_mask(uncertainty, artifact, args.mode)
    if args.combine_with is not None:
        other = load_artifact(args.combine_with)
        check_schema_match(table.schema, other)
        other_uncertainty = score_uncertainty(table, other.mechanism, other.decision_boundary)
        mask = combine_masks(
            mask,
            build_mask(other_uncertainty, other, mask.mode),
            CombineRule(args.combine_rule),
        )
        write_uncertainty(
            other_uncertainty, table, context.out_dir / f'uncertainty_{other.mechanism}.csv'
        )
    write_mask(mask, table, context.out_dir / 'mask.csv')
    write_uncertainty(uncertainty, table, context.out_dir / 'uncertainty.csv')
    if context.pretty:
        rates = rejection_rate(mask)
        reply(
            t('rejection_summary'),
            [t('class'), t('rejection_rate')],
            [
                *([name, float(rate)] for name, rate in zip(table.schema.class_names, rates, strict=True)),
                [t('image_level'), rejection_rate(mask, per_class=False)],
            ],
        )
    return ExitCode.OK


class Selection(ModuleBase):
    name = 'Selection'
    description = t('_selection_module_description')
    commands: ClassVar[ModuleBase.CommandsT] = {
        'apply': Command(
            name='apply',
            handler=run_apply,
            description=t('_apply_description'),
            arguments=(
                *TABLE_ARGUMENTS,
                THRESHOLDS,
                MODE_OVERRIDE,
                Argument(('--combine-with',), t('_arg_combine_with'), {'type': Path, 'default': None}),
                Argument(
                    ('--combine-rule',),
                    t('_arg_combine_rule'),
                    {'choices': [str(rule) for rule in CombineRule], 'default': str(CombineRule.AND)},
                ),
            ),
        ),
    }
