"""Shared test fixtures: a trusted in-process DSL runner, a scripted LLM
backend, and the golden seven-plate stack session used across suites.

The in-process runner is the reference implementation of the DSL for the
test suite.  It is deliberately independent of any worker process: traces
produced here both gate the validator tests and, wrapped in a recording
executor, generate the replay fixtures for end-to-end runs.
"""

from __future__ import annotations

import ast
import math
import random
import textwrap

import numpy as np

from scenemotif.core import Arrangement, SceneObject, apply_move, apply_rotate
from scenemotif.execution import (
    ExecError,
    ExecRequest,
    ExecutionError,
    ObjectTrace,
    TraceObject,
)

GOLDEN_DESCRIPTION = "a stack of seven plates"
GOLDEN_HALF_SIZE = [0.08909, 0.0143, 0.08853]
GOLDEN_Y = [0.0, -0.00757, -0.01514, -0.02272, -0.03029, -0.03786, -0.04544]

GOLDEN_MOTIF_PROGRAM = textwrap.dedent(
    """\
    objs = []
    half_size = [0.08909, 0.0143, 0.08853]
    initial_y = 0.0
    displacement_y = -0.00757

    for i in range(7):
        y_position = initial_y + i * displacement_y
        obj = create('plate', half_size)
        move(obj, 0.0, y_position, 0.0)
        objs.append(obj)
    """
)

GOLDEN_META_PROGRAM = textwrap.dedent(
    '''\
    import random

    def create_stack(label, num_objects, initial_position, displacement_y, half_size, random_offset=None):
        """
        Create a stack of objects with the specified parameters.

        Args:
        label (str): Type of object to create (e.g., 'plate').
        num_objects (int): Number of objects in the stack.
        initial_position (list[float]): Initial position [x, y, z] of the first object.
        displacement_y (float): Vertical displacement between objects.
        half_size (list[float]): Dimensions of each object as [half_width, half_height, half_depth].
        random_offset (float, optional): Range for random variation in vertical displacement.

        Returns:
        list: A list of created objects.
        """
        objs = []
        initial_x, initial_y, initial_z = initial_position

        for i in range(num_objects):
            # Calculate vertical position with optional random offset
            y_position = initial_y + i * displacement_y
            if random_offset is not None:
                y_position += random.uniform(-random_offset, random_offset)

            # Create and move the object
            obj = create(label, half_size)
            move(obj, initial_x, y_position, initial_z)

            # Append the object to the list
            objs.append(obj)

        return objs
    '''
)

GOLDEN_META_REFINED = textwrap.dedent(
    '''\
    import random

    def create_stack(label, num_objects, initial_position, displacement_y, half_size, random_offset=None):
        """
        Create a stack of objects with the specified parameters.

        Args:
        label (str): Type of object to create (e.g., 'plate').
        num_objects (int): Number of objects in the stack.
        initial_position (list[float]): Initial position [x, y, z] of the first object.
        displacement_y (float): Vertical displacement between objects.
        half_size (list[float]): Dimensions of each object as [half_width, half_height, half_depth].
        random_offset (float, optional): Range for random variation in vertical displacement. Default is None.

        Returns:
        list: A list of created objects.

        Example Call:
        objs = create_stack('plate', 7, [0.0, 0.0, 0.0], -0.00757, [0.08909, 0.0143, 0.08853])

        This example recreates a stack of seven plates with the given initial position, displacement, and dimensions.
        """

        # Initialize an empty list to store the created objects
        objs = []

        # Extract initial position components for readability
        initial_x, initial_y, initial_z = initial_position

        # Iterate over the number of objects to be created in the stack
        for i in range(num_objects):
            # Calculate vertical position with optional random offset
            y_position = initial_y + i * displacement_y
            if random_offset is not None:
                y_position += random.uniform(-random_offset, random_offset)

            # Create the object with the specified label and dimensions
            obj = create(label, half_size)

            # Move the object to its calculated position
            move(obj, initial_x, y_position, initial_z)

            # Append the created and moved object to the list
            objs.append(obj)

        # Return the list of created objects
        return objs
    '''
)

GOLDEN_RECREATE_CALL = (
    "create_stack('plate', 7, [0.0, 0.0, 0.0], -0.00757, [0.08909, 0.0143, 0.08853])"
)


def golden_arrangement() -> Arrangement:
    objects = [
        SceneObject(
            label="plate",
            half_size=np.array(GOLDEN_HALF_SIZE),
            position=np.array([0.0, y, 0.0]),
            rotation=np.eye(3),
            id=f"plate_{i}",
        )
        for i, y in enumerate(GOLDEN_Y)
    ]
    return Arrangement(
        description=GOLDEN_DESCRIPTION, objects=objects, motif_type="stack"
    )


# ---------------------------------------------------------------------------
# Trusted in-process DSL runner
# ---------------------------------------------------------------------------

ALLOWED_IMPORTS = {"numpy", "math", "random"}


class _Handle:
    def __init__(self, index: int):
        self.index = index


def _check_imports(source: str) -> None:
    tree = ast.parse(source)
    for node in ast.walk(tree):
        if isinstance(node, ast.Import):
            names = [alias.name.split(".")[0] for alias in node.names]
        elif isinstance(node, ast.ImportFrom):
            names = [(node.module or "").split(".")[0]]
        else:
            continue
        for name in names:
            if name not in ALLOWED_IMPORTS:
                raise ExecutionError(
                    ExecError(kind="forbidden-import", message=f"import of {name!r} is not allowed")
                )


def run_dsl(
    source: str,
    call_source: str | None = None,
    rng_seed: int = 0,
    max_objects: int = 256,
) -> ObjectTrace:
    """Execute DSL source with the package's reference object semantics."""
    objects: list[SceneObject] = []

    def create(label, half_size):
        if len(objects) >= max_objects:
            raise ExecutionError(
                ExecError(kind="object-limit", message=f"more than {max_objects} objects created")
            )
        objects.append(SceneObject.create(str(label), [float(v) for v in half_size]))
        return _Handle(len(objects) - 1)

    def move(handle, x, y, z):
        objects[handle.index] = apply_move(
            objects[handle.index], [float(x), float(y), float(z)]
        )

    def rotate(handle, axis, angle):
        objects[handle.index] = apply_rotate(objects[handle.index], str(axis), float(angle))

    env = {
        "create": create,
        "move": move,
        "rotate": rotate,
        "np": np,
        "math": math,
        "random": random,
    }
    try:
        _check_imports(source)
        if call_source is not None:
            _check_imports(call_source)
    except SyntaxError as exc:
        raise ExecutionError(ExecError(kind="syntax", message=str(exc), location=exc.lineno))
    random.seed(rng_seed)
    try:
        code = compile(source, "<program>", "exec")
    except SyntaxError as exc:
        raise ExecutionError(ExecError(kind="syntax", message=str(exc), location=exc.lineno))
    try:
        exec(code, env)
        if call_source is not None:
            exec(compile(call_source, "<call>", "exec"), env)
    except ExecutionError:
        raise
    except Exception as exc:
        raise ExecutionError(ExecError(kind="runtime", message=f"{type(exc).__name__}: {exc}"))
    return ObjectTrace(
        objects=[
            TraceObject(
                label=o.label,
                half_size=[float(v) for v in o.half_size],
                position=[float(v) for v in o.position],
                rotation=[float(v) for v in o.rotation.reshape(-1)],
            )
            for o in objects
        ]
    )


class InProcessExecutor:
    """Executor-protocol adapter over the trusted in-process runner."""

    def run(self, request: ExecRequest) -> ObjectTrace:
        return run_dsl(
            request.source,
            call_source=request.call_source,
            rng_seed=request.limits.rng_seed,
            max_objects=request.limits.max_objects,
        )


# ---------------------------------------------------------------------------
# Scripted LLM backend
# ---------------------------------------------------------------------------

class ScriptedBackend:
    """Return replies in a fixed order and record every prompt sent."""

    def __init__(self, replies: list[str]):
        self.replies = list(replies)
        self.prompts: list[str] = []
        self.cursor = 0

    @property
    def model_name(self) -> str:
        return "scripted"

    def complete(self, system: str, turns: list[dict], prompt: str) -> str:
        self.prompts.append(prompt)
        if self.cursor >= len(self.replies):
            raise AssertionError(f"scripted backend exhausted after {self.cursor} replies")
        reply = self.replies[self.cursor]
        self.cursor += 1
        return reply


def fence(code: str) -> str:
    return f"```python\n{code}```"


def golden_learn_replies() -> list[str]:
    """Backend replies, in consumption order, for learning the golden stack."""
    return [
        '{\n  "plate": 7\n}',
        "All seven plates share the same half size and are stacked along the y axis "
        "with an even spacing of 0.00757 meters.",
        "x and z stay at 0.0 while y decreases by 0.00757 for each subsequent plate.",
        "Every consecutive pair is displaced by (0.0, -0.00757, 0.0), so all seven "
        "plates form one subgroup expressible with a single loop.",
        "stack",
        fence(GOLDEN_MOTIF_PROGRAM),
        '{\n  "valid": "yes",\n  "variable_names": []\n}',
        "All plates share one half size and one vertical displacement; the stack is "
        "expressed by a loop over the object count.",
        "With one program, variations would change the object count, the vertical "
        "displacement, the object size, or add a slight random offset.",
        "The objects are identical and placed directly on top of each other with "
        "even spacing, which matches stack; pile is the closest incorrect type but "
        "implies disorder.",
        "The meta-program needs label, num_objects, initial_position, "
        "displacement_y, half_size, and an optional random_offset.",
        "A loop over num_objects creates each object, computes its y position from "
        "the initial position plus the accumulated displacement, and moves it.",
        fence(GOLDEN_META_PROGRAM),
        '{\n  "1": "' + GOLDEN_RECREATE_CALL + '"\n}',
        fence(GOLDEN_META_REFINED),
    ]


BOOK_DESCRIPTION = "a stack of four books"
BOOK_CALL = "create_stack('book', 4, [0.0, 0.025, 0.0], 0.06, [0.11, 0.025, 0.15])"


def golden_generate_replies() -> list[str]:
    """Backend replies, in consumption order, for generating the book stack."""
    return [
        "stack",
        fence(BOOK_CALL + "\n"),
        '```json\n{"touch": 0.9, "no_touch": 0.1}\n```\nBooks in a stack rest '
        "directly on each other, so tight contact is the common case.",
    ]
