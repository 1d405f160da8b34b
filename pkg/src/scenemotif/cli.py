"""Command-line entry points.

Subcommands mirror the pipeline stages (learn, generate, classify,
validate, assets index, export) so each is testable in isolation.  Exit
codes are stable: 0 success, 2 configuration, 3 input parse, 4 pipeline
failure, 5 I/O, 6 no meta-program for the classified type.  Machine-
readable summaries go to stdout; diagnostics go to stderr.

Configuration precedence is flags > environment > config file.  The
environment variables are SMC_LIBRARY, SMC_ASSETS, SMC_BACKEND,
SMC_ENDPOINT, SMC_MODEL, SMC_API_KEY, SMC_FIXTURES, SMC_TRACE_FIXTURES,
and SMC_WORKER.
"""

from __future__ import annotations

import json
import os
import shlex
import sys
import time
from pathlib import Path
from typing import Optional

import click
import yaml

from .assets import AssetIndex, build_index
from .core import (
    Arrangement,
    load_arrangement,
    save_arrangement,
)
from .execution import (
    ExecutionError,
    FixtureExecutor,
    MissingTraceFixtureError,
    WorkerClient,
    program_request,
)
from .llm import LiveBackend, MissingFixtureError, PromptCatalog, ReplayBackend
from .mesh import box_mesh, save_obj
from .optimize import GeoConfig, PlacedMesh, merged_mesh
from .pipeline import (
    NoMetaProgramError,
    PipelineConfig,
    PipelineError,
    classify_description,
    generate,
    learn,
)
from .programs import ProgramLibrary
from .validation import CriterionResult, validate_motif_program

EXIT_CONFIG = 2
EXIT_PARSE = 3
EXIT_PIPELINE = 4
EXIT_IO = 5
EXIT_NO_META = 6

_ENV_KEYS = {
    "library": "SMC_LIBRARY",
    "assets": "SMC_ASSETS",
    "backend": "SMC_BACKEND",
    "endpoint": "SMC_ENDPOINT",
    "model": "SMC_MODEL",
    "api_key": "SMC_API_KEY",
    "fixtures": "SMC_FIXTURES",
    "trace_fixtures": "SMC_TRACE_FIXTURES",
    "worker": "SMC_WORKER",
}


class CliError(click.ClickException):
    def __init__(self, message: str, exit_code: int):
        super().__init__(message)
        self.exit_code = exit_code


def _load_config_file(path: Optional[str]) -> dict:
    if not path:
        return {}
    try:
        data = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise CliError(f"cannot read config file: {exc}", EXIT_CONFIG)
    except yaml.YAMLError as exc:
        raise CliError(f"bad config file: {exc}", EXIT_CONFIG)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise CliError("config file must contain a mapping", EXIT_CONFIG)
    return data


def _setting(key: str, flag_value, file_config: dict, default=None):
    """Resolve one setting with flags > environment > config file."""
    if flag_value is not None:
        return flag_value
    env = os.environ.get(_ENV_KEYS.get(key, ""))
    if env:
        return env
    return file_config.get(key, default)


class Runtime:
    """Resolved configuration plus lazily constructed collaborators."""

    def __init__(self, settings: dict):
        self.settings = settings
        self.catalog = PromptCatalog.load_default()
        self.pipeline_config = PipelineConfig(rng_seed=int(settings.get("seed") or 0))

    def library(self) -> ProgramLibrary:
        root = self.settings.get("library")
        if not root:
            raise CliError("no program library configured (--library)", EXIT_CONFIG)
        return ProgramLibrary(root)

    def backend(self):
        kind = self.settings.get("backend") or "replay"
        if kind == "replay":
            fixtures = self.settings.get("fixtures")
            if not fixtures:
                raise CliError("replay backend needs --fixtures DIR", EXIT_CONFIG)
            return ReplayBackend(fixtures)
        if kind == "live":
            endpoint = self.settings.get("endpoint")
            model = self.settings.get("model")
            if not endpoint or not model:
                raise CliError("live backend needs endpoint and model", EXIT_CONFIG)
            return LiveBackend(endpoint, model, api_key=self.settings.get("api_key") or "")
        raise CliError(f"unknown backend kind {kind!r}", EXIT_CONFIG)

    def executor(self):
        trace_fixtures = self.settings.get("trace_fixtures")
        if trace_fixtures:
            return FixtureExecutor(trace_fixtures)
        worker = self.settings.get("worker") or f"{sys.executable} -m motifexec"
        return WorkerClient(shlex.split(worker))

    def asset_index(self) -> Optional[AssetIndex]:
        manifest = self.settings.get("assets")
        if not manifest:
            return None
        try:
            return build_index(manifest)
        except IOError as exc:
            raise CliError(str(exc), EXIT_IO)


def _common_options(f):
    options = [
        click.option("--config", "config_path", type=str, default=None, help="YAML config file."),
        click.option("--library", type=str, default=None, help="Program library root."),
        click.option("--assets", type=str, default=None, help="Asset manifest (JSONL)."),
        click.option(
            "--backend", type=click.Choice(["live", "replay"]), default=None,
            help="LLM backend kind (default replay).",
        ),
        click.option("--fixtures", type=str, default=None, help="Replay fixture directory."),
        click.option(
            "--trace-fixtures", "trace_fixtures", type=str, default=None,
            help="Execution trace fixture directory (replay executor).",
        ),
        click.option("--worker", type=str, default=None, help="DSL worker command line."),
        click.option("--endpoint", type=str, default=None, help="Live backend endpoint URL."),
        click.option("--model", type=str, default=None, help="Live backend model name."),
        click.option("--seed", type=int, default=None, help="Random seed for reproducible runs."),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def _runtime(config_path, **flags) -> Runtime:
    file_config = _load_config_file(config_path)
    settings = {}
    for key in (
        "library", "assets", "backend", "endpoint", "model", "api_key",
        "fixtures", "trace_fixtures", "worker",
    ):
        settings[key] = _setting(key, flags.get(key), file_config)
    seed = flags.get("seed")
    if seed is None:
        seed = file_config.get("seed", 0)
    settings["seed"] = seed
    return Runtime(settings)


def _map_pipeline_error(exc: Exception) -> CliError:
    if isinstance(exc, CliError):
        return exc
    if isinstance(exc, NoMetaProgramError):
        return CliError(str(exc), EXIT_NO_META)
    if isinstance(exc, MissingFixtureError):
        return CliError(f"missing replay fixture: {exc}", EXIT_PIPELINE)
    if isinstance(exc, MissingTraceFixtureError):
        return CliError(f"missing trace fixture: {exc}", EXIT_PIPELINE)
    if isinstance(exc, (PipelineError, ExecutionError)):
        return CliError(str(exc), EXIT_PIPELINE)
    return CliError(str(exc), EXIT_IO)


@click.group()
def main():
    """Learn arrangement motifs as programs and generate new arrangements."""


@main.command("learn")
@click.argument("arrangement_path", type=str)
@click.option("--description", type=str, default=None, help="Override the file's description.")
@_common_options
def cmd_learn(arrangement_path, description, config_path, **flags):
    """Learn a motif program and meta-program from an arrangement file."""
    runtime = _runtime(config_path, **flags)
    try:
        arrangement = load_arrangement(arrangement_path)
    except OSError as exc:
        raise CliError(f"cannot read arrangement: {exc}", EXIT_PARSE)
    except (ValueError, KeyError) as exc:
        raise CliError(f"bad arrangement file: {exc}", EXIT_PARSE)
    if description:
        arrangement = Arrangement(
            description=description,
            objects=arrangement.objects,
            motif_type=arrangement.motif_type,
        )
    lib = runtime.library()
    started = time.perf_counter()
    try:
        result = learn(
            runtime.backend(),
            arrangement,
            lib,
            runtime.executor(),
            catalog=runtime.catalog,
            config=runtime.pipeline_config,
        )
    except Exception as exc:
        raise _map_pipeline_error(exc)
    elapsed = time.perf_counter() - started
    click.echo(
        json.dumps(
            {
                "motif_type": result.motif_type.value,
                "program_entry": result.program_entry_id,
                "rewrite_iterations": result.rewrite_iterations,
                "meta_iterations": result.meta_iterations,
                "meta_function": result.meta.function_name,
                "library": str(lib.root / result.motif_type.value),
                "seconds": round(elapsed, 3),
            },
            indent=2,
        )
    )


@main.command("generate")
@click.argument("description", type=str)
@click.option("--out", "out_path", type=str, required=True, help="Arrangement output path.")
@click.option(
    "--export", "export_kind", type=click.Choice(["layout", "merged-mesh"]),
    default="layout", help="Also export a merged OBJ next to the layout.",
)
@click.option(
    "--touch", type=click.Choice(["auto", "on", "off"]), default="auto",
    help="Force the optimizer's contact mode instead of asking the backend.",
)
@_common_options
def cmd_generate(description, out_path, export_kind, touch, config_path, **flags):
    """Generate an arrangement from a text description."""
    runtime = _runtime(config_path, **flags)
    lib = runtime.library()
    touch_override = {"auto": None, "on": True, "off": False}[touch]
    started = time.perf_counter()
    try:
        result = generate(
            runtime.backend(),
            description,
            lib,
            runtime.executor(),
            assets=runtime.asset_index(),
            catalog=runtime.catalog,
            config=runtime.pipeline_config,
            touch_override=touch_override,
        )
    except Exception as exc:
        raise _map_pipeline_error(exc)
    elapsed = time.perf_counter() - started
    try:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        save_arrangement(result.arrangement, out_path)
        mesh_path = None
        if export_kind == "merged-mesh":
            mesh_path = str(Path(out_path).with_suffix(".obj"))
            save_obj(
                merged_mesh(result.optimize.placed),
                mesh_path,
                comment=f"merged export: {description}",
            )
    except OSError as exc:
        raise CliError(f"cannot write output: {exc}", EXIT_IO)
    click.echo(
        json.dumps(
            {
                "motif_type": result.motif_type.value,
                "objects": len(result.arrangement.objects),
                "touch": result.touch,
                "call": result.call,
                "out": str(out_path),
                "mesh": mesh_path,
                "optimize_failures": result.optimize.failures,
                "seconds": round(elapsed, 3),
            },
            indent=2,
        )
    )


@main.command("classify")
@click.argument("description", type=str)
@_common_options
def cmd_classify(description, config_path, **flags):
    """Classify a description into a motif type."""
    runtime = _runtime(config_path, **flags)
    try:
        motif_type = classify_description(
            runtime.backend(), description, runtime.catalog, config=runtime.pipeline_config
        )
    except Exception as exc:
        raise _map_pipeline_error(exc)
    click.echo(json.dumps({"motif_type": motif_type.value}))


@main.command("validate")
@click.argument("program_path", type=str)
@click.argument("arrangement_path", type=str)
@_common_options
def cmd_validate(program_path, arrangement_path, config_path, **flags):
    """Run the mechanical validation criteria of a program against an arrangement."""
    runtime = _runtime(config_path, **flags)
    try:
        source = Path(program_path).read_text()
        arrangement = load_arrangement(arrangement_path)
    except OSError as exc:
        raise CliError(f"cannot read input: {exc}", EXIT_PARSE)
    except (ValueError, KeyError) as exc:
        raise CliError(f"bad input file: {exc}", EXIT_PARSE)
    try:
        trace = runtime.executor().run(
            program_request(source, rng_seed=runtime.pipeline_config.rng_seed)
        )
    except ExecutionError as exc:
        raise _map_pipeline_error(exc)
    # No LLM in the loop here: the hardcoded-listing judgment is reported
    # as not-evaluated and only the mechanical criteria decide the result.
    judgment = CriterionResult(criterion="no_hardcoded_attributes", passed=True)
    report = validate_motif_program(trace, arrangement, judgment)
    click.echo(json.dumps(report.to_dict(), indent=2))
    if not report.passed:
        sys.exit(EXIT_PIPELINE)


@main.group("assets")
def cmd_assets():
    """Asset manifest utilities."""


@cmd_assets.command("index")
@click.argument("manifest_path", type=str)
def cmd_assets_index(manifest_path):
    """Build the asset index and report record and warning counts."""
    try:
        index = build_index(manifest_path)
    except IOError as exc:
        raise CliError(str(exc), EXIT_IO)
    for warning in index.warnings:
        click.echo(f"warning: {warning}", err=True)
    click.echo(json.dumps({"records": len(index), "warnings": len(index.warnings)}))


@main.command("export")
@click.argument("arrangement_path", type=str)
@click.option("--out", "out_path", type=str, required=True, help="Merged OBJ output path.")
def cmd_export(arrangement_path, out_path):
    """Export an arrangement's bounding boxes as one merged OBJ mesh."""
    try:
        arrangement = load_arrangement(arrangement_path)
    except OSError as exc:
        raise CliError(f"cannot read arrangement: {exc}", EXIT_PARSE)
    except (ValueError, KeyError) as exc:
        raise CliError(f"bad arrangement file: {exc}", EXIT_PARSE)
    placed = [PlacedMesh(obj, box_mesh(obj.half_size)) for obj in arrangement.objects]
    try:
        save_obj(merged_mesh(placed), out_path, comment=arrangement.description)
    except OSError as exc:
        raise CliError(f"cannot write mesh: {exc}", EXIT_IO)
    click.echo(json.dumps({"out": str(out_path), "objects": len(placed)}))


if __name__ == "__main__":
    main()
