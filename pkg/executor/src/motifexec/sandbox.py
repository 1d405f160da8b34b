"""Restricted execution of DSL programs.

Programs manipulate box-modeled objects through three functions:

- ``create(label, half_size)`` makes an object at the origin with identity
  rotation and returns an opaque handle;
- ``move(obj, x, y, z)`` places the object's centroid at world (x, y, z);
- ``rotate(obj, axis, angle)`` rotates about the object's local axis by
  ``angle`` degrees, composing by post-multiplication.

The y axis is up and the frame is right-handed.  Imports are limited to an
allow-list, builtins to a safe subset, object count and wall-clock time to
request limits.  ``print`` goes to stderr so stdout stays reserved for the
one-line response protocol.
"""

from __future__ import annotations

import ast
import builtins
import functools
import math
import random
import signal
import sys

ALLOWED_IMPORTS = frozenset({"numpy", "math", "random"})

_SAFE_BUILTIN_NAMES = (
    "abs", "all", "any", "bool", "dict", "divmod", "enumerate", "filter",
    "float", "frozenset", "hash", "int", "isinstance", "issubclass", "iter",
    "len", "list", "map", "max", "min", "next", "pow", "range", "repr",
    "reversed", "round", "set", "slice", "sorted", "str", "sum", "tuple",
    "zip",
    "ArithmeticError", "AssertionError", "AttributeError", "Exception",
    "IndexError", "KeyError", "LookupError", "NameError", "OverflowError",
    "RuntimeError", "StopIteration", "TypeError", "ValueError",
    "ZeroDivisionError",
)


class SandboxError(Exception):
    """A sandbox rule was violated; ``kind`` maps to the protocol error kind."""

    kind = "runtime"


class ForbiddenImportError(SandboxError):
    kind = "forbidden-import"


class ObjectLimitError(SandboxError):
    kind = "object-limit"


class TimeoutError_(SandboxError):
    kind = "timeout"


def _check_imports(source: str, filename: str) -> None:
    tree = ast.parse(source, filename=filename)
    for node in ast.walk(tree):
        if isinstance(node, ast.Import):
            names = [alias.name.split(".")[0] for alias in node.names]
        elif isinstance(node, ast.ImportFrom):
            names = [(node.module or "").split(".")[0]]
        else:
            continue
        for name in names:
            if name not in ALLOWED_IMPORTS:
                raise ForbiddenImportError(f"import of {name!r} is not allowed")


def _uses_numpy(source: str) -> bool:
    tree = ast.parse(source)
    for node in ast.walk(tree):
        if isinstance(node, ast.Name) and node.id == "np":
            return True
        if isinstance(node, ast.Import) and any(
            alias.name.split(".")[0] == "numpy" for alias in node.names
        ):
            return True
        if isinstance(node, ast.ImportFrom) and (node.module or "").split(".")[0] == "numpy":
            return True
    return False


def _guarded_import(name, globals=None, locals=None, fromlist=(), level=0):
    if level != 0 or name.split(".")[0] not in ALLOWED_IMPORTS:
        raise ForbiddenImportError(f"import of {name!r} is not allowed")
    return builtins.__import__(name, globals, locals, fromlist, level)


def _rotation_about_axis(axis: str, angle_deg: float) -> list[list[float]]:
    a = math.radians(float(angle_deg))
    c, s = math.cos(a), math.sin(a)
    if axis == "x":
        return [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
    if axis == "y":
        return [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
    if axis == "z":
        return [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
    raise SandboxError(f"axis must be 'x', 'y', or 'z', got {axis!r}")


def _matmul(a: list[list[float]], b: list[list[float]]) -> list[list[float]]:
    return [
        [sum(a[i][k] * b[k][j] for k in range(3)) for j in range(3)]
        for i in range(3)
    ]


class _Handle:
    """Opaque object reference handed to DSL programs."""

    __slots__ = ("index",)

    def __init__(self, index: int):
        self.index = index


class _Scene:
    def __init__(self, max_objects: int):
        self.max_objects = max_objects
        self.objects: list[dict] = []

    def create(self, label, half_size) -> _Handle:
        if len(self.objects) >= self.max_objects:
            raise ObjectLimitError(f"more than {self.max_objects} objects created")
        size = [float(v) for v in half_size]
        if len(size) != 3:
            raise SandboxError(f"half_size must have three components, got {len(size)}")
        if any(v <= 0 for v in size):
            raise SandboxError(f"half_size components must be positive: {size}")
        self.objects.append(
            {
                "label": str(label),
                "half_size": size,
                "position": [0.0, 0.0, 0.0],
                "rotation": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            }
        )
        return _Handle(len(self.objects) - 1)

    def _resolve(self, handle) -> dict:
        if not isinstance(handle, _Handle):
            raise SandboxError(
                f"expected an object created by create(), got {type(handle).__name__}"
            )
        return self.objects[handle.index]

    def move(self, handle, x, y, z) -> None:
        self._resolve(handle)["position"] = [float(x), float(y), float(z)]

    def rotate(self, handle, axis, angle) -> None:
        obj = self._resolve(handle)
        obj["rotation"] = _matmul(obj["rotation"], _rotation_about_axis(str(axis), float(angle)))

    def trace(self) -> dict:
        return {
            "objects": [
                {
                    "label": o["label"],
                    "half_size": o["half_size"],
                    "position": o["position"],
                    "rotation": [v for row in o["rotation"] for v in row],
                }
                for o in self.objects
            ],
            "events": [],
        }


def _alarm_handler(signum, frame):
    raise TimeoutError_("execution exceeded the time limit")


def _error(kind: str, message: str, location=None) -> dict:
    return {"ok": False, "error": {"kind": kind, "message": message, "location": location}}


def execute(
    source: str,
    entry: str = "program",
    call_source: str | None = None,
    timeout_s: float = 10.0,
    max_objects: int = 256,
    rng_seed: int = 0,
) -> dict:
    """Run one DSL request and return the protocol response dictionary."""
    if entry not in ("program", "call"):
        return _error("protocol", f"bad entry kind: {entry!r}")
    if (entry == "call") != (call_source is not None):
        return _error("protocol", "call_source is required exactly when entry is 'call'")

    scene = _Scene(max_objects)
    safe_builtins = {name: getattr(builtins, name) for name in _SAFE_BUILTIN_NAMES}
    safe_builtins["__import__"] = _guarded_import
    safe_builtins["print"] = functools.partial(print, file=sys.stderr)
    env = {
        "__builtins__": safe_builtins,
        "create": scene.create,
        "move": scene.move,
        "rotate": scene.rotate,
        "math": math,
        "random": random,
    }

    sources = [("<program>", source)]
    if call_source is not None:
        sources.append(("<call>", call_source))
    codes = []
    try:
        for filename, text in sources:
            _check_imports(text, filename)
            codes.append(compile(text, filename, "exec"))
        if any(_uses_numpy(text) for _, text in sources):
            import numpy  # deferred: most programs never touch it

            env["np"] = numpy
    except SyntaxError as exc:
        return _error("syntax", str(exc), location=exc.lineno)
    except ForbiddenImportError as exc:
        return _error(exc.kind, str(exc))

    random.seed(rng_seed)
    previous = signal.signal(signal.SIGALRM, _alarm_handler)
    signal.setitimer(signal.ITIMER_REAL, timeout_s)
    try:
        for code in codes:
            exec(code, env)
    except SandboxError as exc:
        return _error(exc.kind, str(exc))
    except Exception as exc:
        return _error("runtime", f"{type(exc).__name__}: {exc}")
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0.0)
        signal.signal(signal.SIGALRM, previous)
    return {"ok": True, "trace": scene.trace()}
