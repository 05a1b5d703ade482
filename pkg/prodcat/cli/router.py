import argparse
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

from ..corpus import Corpus, CleanStats, read_corpus
from ..utils.responses import CommandResult
from ..utils.settings import Settings

Handler = Callable[[argparse.Namespace, Settings], CommandResult]


@dataclass(frozen=True)
class Argument:
    flags: Tuple[str, ...]
    kwargs: Dict[str, Any]
    setting: Optional[str] = None


def arg(*flags: str, setting: Optional[str] = None, **kwargs: Any) -> Argument:
    """One ``add_argument`` call; ``setting`` names the config key the flag overrides."""
    return Argument(flags, kwargs, setting)


@dataclass
class Command:
    name: str
    help: str
    handler: Handler
    arguments: List[Argument] = field(default_factory=list)

    def setting_overrides(self, args: argparse.Namespace) -> Dict[str, Any]:
        overrides = {}
        for argument in self.arguments:
            if argument.setting is None:
                continue
            dest = argument.kwargs.get("dest") or argument.flags[0].lstrip("-").replace("-", "_")
            value = getattr(args, dest, None)
            if value is not None:
                overrides[argument.setting] = value
        return overrides


class CommandRouter:
    """Groups related subcommands; ``dispatch`` mounts every router onto one parser."""

    def __init__(self, tag: str):
        self.tag = tag
        self.commands: List[Command] = []

    def command(self, name: str, help: str, arguments=()):
        def decorator(handler: Handler) -> Handler:
            self.commands.append(Command(name, help, handler, list(arguments)))
            return handler
        return decorator


def read_input(settings: Settings, path) -> Tuple[Corpus, CleanStats]:
    """Load and clean a CSV with the configured columns, delimiter and normalization."""
    corpus, stats, _ = read_corpus(path, settings.csv.columns, settings.csv.delimiter,
                                   settings.norm, threads=settings.threads)
    return corpus, stats
