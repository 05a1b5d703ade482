import json
from dataclasses import dataclass, field
from typing import Any, Optional

from .errors import EXIT_OK


@dataclass(frozen=True)
class CommandResult:
    exit_code: int
    summary: str
    diagnostics: str = ""
    data: dict = field(default_factory=dict)


def to_json(payload: Any) -> str:
    """Stable-key JSON so identical inputs give identical bytes."""
    return json.dumps(payload, sort_keys=True, ensure_ascii=False, indent=2)


def _format_metric(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def success_response(command: str, message: str,
                     data: Optional[dict] = None,
                     metrics: Optional[dict] = None) -> CommandResult:
    """Returns a CommandResult for successful commands.

    The first summary line is `OK <command> k=v ...`, followed by the JSON body.
    """

    metrics = metrics or {}
    headline = " ".join(["OK", command] + [f"{k}={_format_metric(v)}" for k, v in metrics.items()])
    response_data = {
        "status": "success",
        "command": command,
        "message": message,
        "data": data or {},
    }

    return CommandResult(
        exit_code=EXIT_OK, summary=headline + "\n" + to_json(response_data), data=response_data
    )


def fail_response(exit_code: int, message: str,
                  context: Optional[dict] = None) -> CommandResult:
    """Returns a CommandResult for failed commands"""

    response_data = {
        "status": "failure",
        "exit_code": exit_code,
        "message": message,
        "error": context or {},
    }

    return CommandResult(
        exit_code=exit_code, summary="", diagnostics=to_json(response_data), data=response_data
    )
