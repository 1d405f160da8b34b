"""Sandboxed one-shot worker for object-arrangement DSL programs.

The worker reads exactly one JSON request line from stdin, executes the
program under import, builtin, object-count, and wall-clock restrictions,
and writes exactly one JSON response line ``{"ok": bool, "trace"?,
"error"?}`` to stdout.  Run it as ``python -m motifexec``.
"""

from .sandbox import ALLOWED_IMPORTS, execute
from .worker import handle_request, main

__all__ = ["ALLOWED_IMPORTS", "execute", "handle_request", "main"]

__version__ = "0.1.0"
