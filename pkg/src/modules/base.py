from abc import ABC, abstractmethod
from argparse import Namespace

from src.utils.command import Command, RunContext
from src.utils.errors import ExitCode


class ModuleBase(ABC):
    IS_MODULE = True
    CommandsT = dict[str, Command]

    @property
    @abstractmethod
    def name(self) -> str:
        pass

    @property
    @abstractmethod
    def description(self) -> str:
        pass

    @property
    @abstractmethod
    def commands(self) -> CommandsT:
        pass

    def handle(self, command: str, args: Namespace, context: RunContext) -> ExitCode:
        return self.commands[command].handler(args, context)
