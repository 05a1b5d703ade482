"""Command-line entry point: one subcommand per pipeline stage."""

import argparse
import sys
from typing import Dict, List, Optional, Sequence

from pydantic import ValidationError

from ..utils.errors import EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, ProdcatError, UsageError
from ..utils.logger import clear_run_id, logger, new_run_id, setup_logging
from ..utils.responses import CommandResult, fail_response
from ..utils.settings import config_error, load_settings
from .router import Command, CommandRouter
from .routes import corpus_route, model_route, vocab_route

PROG = "prodcat"
ROUTERS = (corpus_route.router, vocab_route.router, model_route.router)


class ArgumentParser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage; raise instead so dispatch maps it to exit 1."""

    def error(self, message):
        raise UsageError(message, {"usage": self.format_usage().strip()})


def _common_options() -> argparse.ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="global seed (also the split seed)")
    common.add_argument("--threads", type=int, help="worker threads for normalization and encoding")
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    return common


def build_parser(routers: Sequence[CommandRouter] = ROUTERS) -> ArgumentParser:
    parser = ArgumentParser(prog=PROG, description="Multi-level retail product classifier")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=ArgumentParser)
    subparsers.required = True
    common = _common_options()
    for router in routers:
        for command in router.commands:
            sub = subparsers.add_parser(command.name, help=f"[{router.tag}] {command.help}", parents=[common])
            for argument in command.arguments:
                sub.add_argument(*argument.flags, **argument.kwargs)
            sub.set_defaults(_command=command)
    return parser


def _overrides(args: argparse.Namespace, command: Command) -> Dict[str, object]:
    overrides: Dict[str, object] = {"seed": args.seed, "threads": args.threads}
    if args.seed is not None:
        overrides["split.seed"] = args.seed
    overrides.update(command.setting_overrides(args))
    return overrides


def dispatch(argv: Optional[List[str]] = None) -> CommandResult:
    """Parse, load settings, run one subcommand; library errors become failure results."""
    run_id = new_run_id()
    try:
        try:
            args = build_parser().parse_args(argv)
        except SystemExit as e:
            # --help prints usage and exits 0
            code = EXIT_OK if e.code in (0, None) else EXIT_USAGE
            return CommandResult(exit_code=code, summary="")

        if args.log_level:
            setup_logging(args.log_level)
        command: Command = args._command
        logger.info("run %s: %s", run_id, command.name)
        settings = load_settings(args.config, overrides=_overrides(args, command))
        return command.handler(args, settings)

    except ProdcatError as e:
        logger.error("%s failed: %s", argv[0] if argv else PROG, e.message)
        return fail_response(e.exit_code, e.message, e.context)

    except ValidationError as e:
        error = config_error(e)
        logger.error("%s failed: %s", argv[0] if argv else PROG, error.message)
        return fail_response(error.exit_code, error.message, error.context)

    except FloatingPointError as e:
        logger.exception("Numerical failure")
        return fail_response(EXIT_NUMERICAL, f"numerical failure: {e}")

    finally:
        clear_run_id()


def main(argv: Optional[List[str]] = None) -> int:
    result = dispatch(sys.argv[1:] if argv is None else argv)
    if result.summary:
        print(result.summary, file=sys.stdout)
    if result.diagnostics:
        print(result.diagnostics, file=sys.stderr)
    return result.exit_code


__all__ = ["ArgumentParser", "build_parser", "dispatch", "main"]
