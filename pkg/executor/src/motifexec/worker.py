"""One-shot line protocol: one JSON request in, one JSON response out.

The process exits 0 exactly when a response line was written, whatever the
outcome of the program itself; a nonzero exit means the protocol broke.
"""

from __future__ import annotations

import json
import sys

from .sandbox import execute


def _protocol_error(message: str) -> dict:
    return {"ok": False, "error": {"kind": "protocol", "message": message, "location": None}}


def handle_request(data: object) -> dict:
    if not isinstance(data, dict):
        return _protocol_error("request must be a JSON object")
    source = data.get("source")
    if not isinstance(source, str):
        return _protocol_error("request needs a string 'source'")
    entry = data.get("entry", "program")
    call_source = data.get("call_source")
    if call_source is not None and not isinstance(call_source, str):
        return _protocol_error("'call_source' must be a string when present")
    limits = data.get("limits") or {}
    if not isinstance(limits, dict):
        return _protocol_error("'limits' must be a JSON object")
    try:
        timeout_s = float(limits.get("timeout_s", 10.0))
        max_objects = int(limits.get("max_objects", 256))
        rng_seed = int(limits.get("rng_seed", 0))
    except (TypeError, ValueError) as exc:
        return _protocol_error(f"bad limits: {exc}")
    if timeout_s <= 0 or max_objects < 1:
        return _protocol_error("limits out of range")
    return execute(
        source,
        entry=entry,
        call_source=call_source,
        timeout_s=timeout_s,
        max_objects=max_objects,
        rng_seed=rng_seed,
    )


def main() -> int:
    line = sys.stdin.readline()
    if not line.strip():
        response = _protocol_error("empty request")
    else:
        try:
            response = handle_request(json.loads(line))
        except json.JSONDecodeError as exc:
            response = _protocol_error(f"bad request JSON: {exc}")
    try:
        sys.stdout.write(json.dumps(response) + "\n")
        sys.stdout.flush()
    except OSError:
        return 1
    return 0
