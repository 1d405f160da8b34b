"""Conformance of worker traces against the host package's object semantics.

The worker never imports ``scenemotif``; these tests use that package purely
as an independent oracle for DSL semantics and box-overlap measurement.
"""

import json
import random
import subprocess
import sys
import textwrap
import time

import numpy as np
from scenemotif.core import SceneObject, aabb_iou, apply_move, apply_rotate, world_aabb

from motifexec import handle_request

WORKER = [sys.executable, "-m", "motifexec"]

PLATE_STACK_PROGRAM = textwrap.dedent(
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

STACK_META_PROGRAM = textwrap.dedent(
    """\
    import random

    def create_stack(label, num_objects, initial_position, displacement_y, half_size, random_offset=None):
        objs = []
        initial_x, initial_y, initial_z = initial_position
        for i in range(num_objects):
            y_position = initial_y + i * displacement_y
            if random_offset is not None:
                y_position += random.uniform(-random_offset, random_offset)
            obj = create(label, half_size)
            move(obj, initial_x, y_position, initial_z)
            objs.append(obj)
        return objs
    """
)

STACK_CALL = "create_stack('plate', 7, [0.0, 0.0, 0.0], -0.00757, [0.08909, 0.0143, 0.08853])"


def request(source, entry="program", call_source=None, **limits):
    merged = {"timeout_s": 10.0, "max_objects": 256, "rng_seed": 0}
    merged.update(limits)
    return {"source": source, "entry": entry, "call_source": call_source, "limits": merged}


def run_worker(req):
    proc = subprocess.run(
        WORKER, input=json.dumps(req) + "\n", capture_output=True, text=True, timeout=30
    )
    assert proc.returncode == 0, proc.stderr
    return json.loads(proc.stdout.splitlines()[-1])


def trace_aabb(obj):
    oracle = SceneObject(
        label=obj["label"],
        half_size=obj["half_size"],
        position=obj["position"],
        rotation=np.array(obj["rotation"]).reshape(3, 3),
    )
    return world_aabb(oracle)


class TestPlateStack:
    def test_worker_reproduces_stack_displacements(self):
        response = run_worker(request(PLATE_STACK_PROGRAM))
        assert response["ok"] is True
        objects = response["trace"]["objects"]
        assert len(objects) == 7
        for i, obj in enumerate(objects):
            assert obj["label"] == "plate"
            assert abs(obj["position"][1] - (-0.00757 * i)) <= 1e-6
            assert obj["position"][0] == 0.0 and obj["position"][2] == 0.0

    def test_parameterized_call_matches_straight_line_program(self):
        program_trace = run_worker(request(PLATE_STACK_PROGRAM))["trace"]
        call_trace = run_worker(
            request(STACK_META_PROGRAM, entry="call", call_source=STACK_CALL)
        )["trace"]
        assert len(call_trace["objects"]) == len(program_trace["objects"]) == 7
        for got, expected in zip(call_trace["objects"], program_trace["objects"]):
            iou = aabb_iou(trace_aabb(got), trace_aabb(expected))
            assert iou >= 0.999


class TestTimeout:
    def test_infinite_loop_reports_timeout_within_budget(self):
        start = time.monotonic()
        response = run_worker(request("while True: pass", timeout_s=2.0))
        elapsed = time.monotonic() - start
        assert response["ok"] is False
        assert response["error"]["kind"] == "timeout"
        assert elapsed < 3.0


def random_program(seed):
    """Build a straight-line DSL program plus oracle-computed final objects."""
    rng = random.Random(seed)
    lines = []
    objects = []
    for index in range(rng.randint(1, 6)):
        half = [round(rng.uniform(0.02, 0.5), 6) for _ in range(3)]
        lines.append(f"obj_{index} = create('item_{index}', {half})")
        obj = SceneObject.create(f"item_{index}", half)
        for _ in range(rng.randint(0, 5)):
            if rng.random() < 0.5:
                target = [round(rng.uniform(-2.0, 2.0), 6) for _ in range(3)]
                lines.append(f"move(obj_{index}, {target[0]}, {target[1]}, {target[2]})")
                obj = apply_move(obj, target)
            else:
                axis = rng.choice(["x", "y", "z"])
                angle = round(rng.uniform(-180.0, 180.0), 4)
                lines.append(f"rotate(obj_{index}, '{axis}', {angle})")
                obj = apply_rotate(obj, axis, angle)
        objects.append(obj)
    return "\n".join(lines) + "\n", objects


class TestRandomizedConformance:
    def test_worker_state_matches_oracle_semantics(self):
        for seed in range(200):
            source, expected = random_program(seed)
            response = handle_request(request(source))
            assert response["ok"] is True, (seed, response)
            traced = response["trace"]["objects"]
            assert len(traced) == len(expected)
            for got, oracle in zip(traced, expected):
                assert got["label"] == oracle.label
                np.testing.assert_allclose(
                    got["half_size"], oracle.half_size, rtol=0, atol=1e-9
                )
                np.testing.assert_allclose(
                    got["position"], oracle.position, rtol=0, atol=1e-9
                )
                np.testing.assert_allclose(
                    np.array(got["rotation"]).reshape(3, 3),
                    oracle.rotation,
                    rtol=0,
                    atol=1e-9,
                )

    def test_a_sample_agrees_end_to_end_through_the_process_boundary(self):
        source, expected = random_program(999)
        response = run_worker(request(source))
        assert response["ok"] is True
        for got, oracle in zip(response["trace"]["objects"], expected):
            np.testing.assert_allclose(got["position"], oracle.position, rtol=0, atol=1e-9)
            np.testing.assert_allclose(
                np.array(got["rotation"]).reshape(3, 3), oracle.rotation, rtol=0, atol=1e-9
            )
