"""Subcommand plugins dynamic loader"""

import logging
from argparse import ArgumentParser
from importlib import import_module
from pathlib import Path
from types import ModuleType

from src.modules.base import ModuleBase

logger = logging.getLogger(__name__)


def load_modules(directory: str) -> list[ModuleBase]:
    """Load every ModuleBase subclass found in the plugins package, sorted by file name"""
    found_modules: list[ModuleType] = [
        import_module(f'{directory}.modules.{module.parent.name}.{module.stem}')
        for module in sorted(
            filter(
                lambda x: x.name not in ('__init__.py', 'base.py')
                and x.suffix == '.py'
                and x.is_file(),
                (Path(__file__).parent.parent / 'modules').glob('**/*.py'),
            )
        )
    ]
    logger.debug(
        f'found modules: {", ".join([module.__name__.split(".")[-1] for module in found_modules])}'
    )

    loaded_module_classes: list[ModuleBase] = []
    for module in found_modules:
        for module_class in filter(
            lambda x: getattr(x, 'IS_MODULE', False)
            and x.__name__ != 'ModuleBase'
            and x.__module__ == module.__name__,
            (getattr(module, i) for i in dir(module)),
        ):
            loaded_module_classes.append(module_class())
    logger.debug(
        f'loaded modules: {", ".join(
            [f"{module.name} {list(module.commands.keys())}" for module in loaded_module_classes]
        )}'
    )
    return loaded_module_classes


class ModuleRegistry:
    """
    Module registry

    Holds the loaded plugins and builds one argparse subcommand per plugin command.
    """

    def __init__(self, directory: str = 'src') -> None:
        self.modules: list[ModuleBase] = load_modules(directory)

    def get_module_by_command(self, command: str) -> ModuleBase | None:
        for module in self.modules:
            if command in module.commands:
                return module
        return None

    def build_subparsers(self, parser: ArgumentParser, parents: list[ArgumentParser]) -> None:
        subparsers = parser.add_subparsers(dest='command', metavar='<command>', required=True)
        for module in self.modules:
            for name, command in module.commands.items():
                subparser = subparsers.add_parser(
                    name, help=command.description, description=command.description, parents=parents
                )
                for argument in command.arguments:
                    argument.add_to(subparser)
