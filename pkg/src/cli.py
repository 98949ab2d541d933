"""
Command-line front end.

Every subcommand writes its outputs, plus a `run.json` echoing the resolved arguments, into the
directory named by `--out`. Errors end the run with a one-line JSON object on stderr and an
exit code taken from the error code.
"""

import logging
import sys
from argparse import ArgumentParser, Namespace
from collections.abc import Sequence
from pathlib import Path
from typing import Any, NoReturn

import orjson

from src.utils.command import RunContext
from src.utils.errors import ErrorCode, ExitCode, RejectKitError
from src.utils.i18n import t
from src.utils.json import write_json
from src.utils.modules_registry import ModuleRegistry
from src.utils.run import resolve_threads

logger = logging.getLogger(__name__)

# Arguments that cannot change any output file.
NON_SEMANTIC_ARGUMENTS = frozenset({'threads', 'pretty', 'out'})


class CliParser(ArgumentParser):
    def error(self, message: str) -> NoReturn:
        raise RejectKitError(ErrorCode.CONFIG_INVALID, message, prog=self.prog)


def build_parser(registry: ModuleRegistry) -> ArgumentParser:
    common = CliParser(add_help=False)
    common.add_argument('--out', type=Path, required=True, help=t('_arg_out'))
    common.add_argument('--threads', type=int, default=None, help=t('_arg_threads'))
    common.add_argument('--pretty', action='store_true', help=t('_arg_pretty'))
    parser = CliParser(prog='rejectkit', description=t('_cli_description'))
    registry.build_subparsers(parser, [common])
    return parser


def run_config(args: Namespace) -> dict[str, Any]:
    config: dict[str, Any] = {}
    for key, value in sorted(vars(args).items()):
        if key in NON_SEMANTIC_ARGUMENTS:
            continue
        if isinstance(value, Path):
            value = str(value)
        elif isinstance(value, tuple):
            value = list(value)
        config[key] = value
    return config


def report_error(err: RejectKitError) -> ExitCode:
    logger.error(str(err))
    sys.stderr.write(orjson.dumps(err.to_dict(), default=str).decode() + '\n')
    sys.stderr.flush()
    return err.code.exit_code


def main(argv: Sequence[str] | None = None) -> int:
    registry = ModuleRegistry()
    parser = build_parser(registry)
    try:
        args = parser.parse_args(argv)
        module = registry.get_module_by_command(args.command)
        if module is None:
            raise RejectKitError(ErrorCode.CONFIG_INVALID, f'unknown command {args.command}')
        context = RunContext(
            out_dir=args.out, threads=resolve_threads(args.threads), pretty=args.pretty
        )
        context.out_dir.mkdir(parents=True, exist_ok=True)
        write_json(context.out_dir / 'run.json', run_config(args))
        logger.debug(f'Running {args.command} with {context.threads} thread(s) into {context.out_dir}')
        exit_code = module.handle(args.command, args, context)
    except RejectKitError as err:
        return report_error(err)
    except OSError as err:
        return report_error(
            RejectKitError(ErrorCode.FILE_NOT_FOUND, str(err), path=str(err.filename))
        )
    if exit_code is not ExitCode.OK:
        logger.warning(f'{args.command} finished with exit code {int(exit_code)} ({exit_code.name})')
    return int(exit_code)
