"""Denotation executors run as subprocesses.

The contract: the executor reads logical forms on stdin, one per line, and
writes one canonical answer per line to stdout. Each item gets its own
process so one hang or crash only loses that item.
"""

from __future__ import annotations

import logging
import os
import shlex
import subprocess
import sys
from typing import Sequence

logger = logging.getLogger(__name__)

ENV_VAR = "ZSHOT_EXECUTOR"
DEFAULT_TIMEOUT = 10.0


class SubprocessExecutor:
    def __init__(self, command: Sequence[str] | str, timeout: float = DEFAULT_TIMEOUT):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        if not self.command:
            raise ValueError("executor command is empty")
        self.timeout = timeout

    def run(self, form: str) -> str | None:
        """Answer for one logical form, or None when execution fails."""
        try:
            proc = subprocess.run(
                self.command,
                input=form.replace("\n", " ") + "\n",
                capture_output=True,
                text=True,
                encoding="utf-8",
                timeout=self.timeout,
            )
        except subprocess.TimeoutExpired:
            logger.warning("executor timed out after %.1fs on %r", self.timeout, form)
            return None
        except OSError as exc:
            logger.warning("executor could not start: %s", exc)
            return None
        if proc.returncode != 0:
            logger.warning("executor exited %d on %r: %s", proc.returncode, form, proc.stderr.strip())
            return None
        lines = proc.stdout.splitlines()
        return lines[0].strip() if lines else ""

    def run_many(self, forms: Sequence[str]) -> list[str | None]:
        return [self.run(f) for f in forms]


def executor_from_env(timeout: float = DEFAULT_TIMEOUT) -> SubprocessExecutor | None:
    cmd = os.environ.get(ENV_VAR, "").strip()
    return SubprocessExecutor(cmd, timeout) if cmd else None


def toy_executor_command() -> list[str]:
    """Command running the bundled arithmetic executor as a plain script."""
    from . import toy_executor

    return [sys.executable, os.path.abspath(toy_executor.__file__)]
