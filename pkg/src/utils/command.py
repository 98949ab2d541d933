from argparse import ArgumentParser, Namespace
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from src.utils.errors import ExitCode


@dataclass(frozen=True)
class RunContext:
    """What a handler needs besides its parsed arguments."""

    out_dir: Path
    threads: int = 1
    pretty: bool = False


@dataclass(frozen=True)
class Argument:
    flags: tuple[str, ...]
    help: str
    options: dict[str, Any] = field(default_factory=dict)

    def add_to(self, parser: ArgumentParser) -> None:
        parser.add_argument(*self.flags, help=self.help, **self.options)


@dataclass
class Command:
    handler: Callable[[Namespace, RunContext], ExitCode]
    description: str
    arguments: tuple[Argument, ...] = ()
    name: str | None = None

    def __repr__(self) -> str:
        return f"Command(name={self.name or self.handler.__name__}, description='{self.description}')"
