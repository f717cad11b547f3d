"""Command-line surface.

Exit codes: 0 success, 2 input error, 3 configuration mismatch, 4 internal
invariant violation.  All randomness flows from one explicit seed per
command, split deterministically per scene, so repeated runs are
byte-identical.  PROJEKTOR_LOG in {quiet, info, trace} controls verbosity;
at `trace` the per-scene reports include full search traces.
"""

from __future__ import annotations

import json
import logging
import os
import random
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any

import click

from .errors import (
    BindingError,
    DomainMismatchError,
    InputError,
    ModelFormatError,
    ModelValidationError,
    ProjektorError,
)
from .evaluation import GroundTruth, evaluate_metrics
from .figures import save_bench_figure
from .glyphs import (
    GlyphSceneSpec,
    NoiseParams,
    build_glyph_library,
    generate_scene,
    overlapped_ak_spec,
    random_scene_spec,
    render_overlay,
)
from .inference import BeamConfig
from .model import DataSet, dataset_from_dict, dataset_to_dict
from .reports import read_jsonl, write_json_atomic, write_jsonl_atomic, write_text_atomic
from .selfcheck import oracle_check
from .temporal import EventStreamSpec, build_activity_library, generate_stream
from .workspace import (
    ArbitrationConfig,
    ModelRegistry,
    SceneInterpretation,
    interpret_scene,
    load_registry,
)

EXIT_INPUT = 2
EXIT_CONFIG = 3
EXIT_INTERNAL = 4

log = logging.getLogger("projektor")


def _setup_logging() -> str:
    level = os.environ.get("PROJEKTOR_LOG", "quiet").lower()
    mapping = {"quiet": logging.WARNING, "info": logging.INFO, "trace": logging.DEBUG}
    logging.basicConfig(level=mapping.get(level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    return level


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _guard(body):
    try:
        body()
    except (InputError, ModelFormatError, ModelValidationError, BindingError,
            FileNotFoundError, json.JSONDecodeError, KeyError, ValueError) as err:
        _fail(EXIT_INPUT, str(err) or repr(err))
    except DomainMismatchError as err:
        _fail(EXIT_CONFIG, str(err))
    except ProjektorError as err:
        _fail(EXIT_INTERNAL, str(err))


def _scene_seed(seed: int, index: int) -> int:
    return (seed * 1_000_003 + index) % (2 ** 31 - 1)


def _resolve_registry(spec: str) -> ModelRegistry:
    if spec == "glyph":
        return build_glyph_library()
    if spec == "temporal":
        return build_activity_library()
    path = Path(spec)
    if not path.is_dir():
        raise InputError(f"registry {spec!r} is neither a directory nor one of "
                         "the builtin names 'glyph'/'temporal'")
    return load_registry(path)


def _load_configs(config_path: str | None) -> tuple[BeamConfig, ArbitrationConfig]:
    beam, arb = BeamConfig(), ArbitrationConfig()
    if config_path:
        doc = json.loads(Path(config_path).read_text(encoding="utf-8"))
        unknown = set(doc) - {"beam", "arbitration"}
        if unknown:
            raise InputError(f"config has unknown sections {sorted(unknown)}")
        beam = replace(beam, **doc.get("beam", {}))
        arb = replace(arb, **doc.get("arbitration", {}))
    return beam, arb


def _load_scenes(dataset_path: str) -> list[dict[str, Any]]:
    rows = list(read_jsonl(dataset_path))
    if not rows:
        return []
    return rows


def _row_dataset(row: dict[str, Any]) -> DataSet:
    return dataset_from_dict({"domain": row["domain"], "data": row["data"]})


def _scene_report(index: int, scene: SceneInterpretation, with_trace: bool) -> dict:
    doc = scene.to_dict()
    if not with_trace:
        for selected in doc["selected"]:
            selected.pop("trace", None)
    doc["index"] = index
    return doc


@click.group()
def main() -> None:
    """Interpret noisy scenes with hierarchical compositional models."""
    _setup_logging()


@main.command()
@click.option("--domain", type=click.Choice(["glyph", "temporal"]), required=True)
@click.option("--spec-file", required=True, type=click.Path())
@click.option("--noise-file", default=None, type=click.Path())
@click.option("--count", default=1, show_default=True)
@click.option("--seed", required=True, type=int)
@click.option("--out", required=True, type=click.Path())
def generate(domain, spec_file, noise_file, count, seed, out):
    """Write a JSON-lines dataset with ground truth."""

    def body():
        spec_doc = json.loads(Path(spec_file).read_text(encoding="utf-8"))
        noise_doc = (json.loads(Path(noise_file).read_text(encoding="utf-8"))
                     if noise_file else {})
        rows = []
        for index in range(count):
            scene_seed = _scene_seed(seed, index)
            if domain == "glyph":
                spec = _glyph_spec(spec_doc, scene_seed)
                noise = replace(NoiseParams.from_dict(noise_doc), seed=scene_seed)
                dataset, truth = generate_scene(spec, noise)
                rows.append({"index": index, "domain": domain,
                             "spec": spec.to_dict(), "noise": noise.to_dict(),
                             "data": dataset_to_dict(dataset)["data"],
                             "ground_truth": truth.to_dict()})
            else:
                spec = _stream_spec(spec_doc, noise_doc, scene_seed)
                dataset, truth = generate_stream(spec)
                rows.append({"index": index, "domain": domain,
                             "spec": spec.to_dict(),
                             "data": dataset_to_dict(dataset)["data"],
                             "ground_truth": truth.to_dict()})
        write_jsonl_atomic(out, rows)
        log.info("wrote %d scenes to %s", count, out)

    _guard(body)


def _glyph_spec(doc: dict[str, Any], scene_seed: int) -> GlyphSceneSpec:
    if "scene" in doc:
        return GlyphSceneSpec.from_dict(doc["scene"])
    sampler = doc.get("sampler")
    rng = random.Random(scene_seed)
    if sampler == "single_letter":
        return random_scene_spec(rng, letters=doc.get("letters"),
                                 extent=tuple(doc.get("extent", (16.0, 16.0))))
    if sampler == "ak_overlap":
        return overlapped_ak_spec(rng)
    raise InputError("glyph spec file needs 'scene' or a known 'sampler'")


def _stream_spec(doc: dict[str, Any], noise_doc: dict[str, Any],
                 scene_seed: int) -> EventStreamSpec:
    if "stream" in doc:
        base = dict(doc["stream"])
    elif doc.get("sampler") == "mixed":
        activities = doc.get("activities", ["load", "unload", "distractor"])
        rng = random.Random(scene_seed)
        base = {"activity": activities[rng.randrange(len(activities))]}
    else:
        raise InputError("temporal spec file needs 'stream' or sampler 'mixed'")
    base.update(noise_doc)
    base["seed"] = scene_seed
    return EventStreamSpec.from_dict(base)


@main.command("interpret")
@click.option("--registry", required=True)
@click.option("--dataset", "dataset_path", required=True, type=click.Path())
@click.option("--config", "config_path", default=None, type=click.Path())
@click.option("--out", required=True, type=click.Path())
def interpret_cmd(registry, dataset_path, config_path, out):
    """Arbitrated multi-model report, one line per scene."""

    def body():
        reg = _resolve_registry(registry)
        beam, arb = _load_configs(config_path)
        with_trace = os.environ.get("PROJEKTOR_LOG", "").lower() == "trace"
        reports = []
        for row in _load_scenes(dataset_path):
            dataset = _row_dataset(row)
            scene = interpret_scene(reg, dataset, beam, arb)
            reports.append(_scene_report(row["index"], scene, with_trace))
        write_jsonl_atomic(out, reports)

    _guard(body)


@main.command()
@click.option("--registry", required=True)
@click.option("--dataset", "dataset_path", required=True, type=click.Path())
@click.option("--config", "config_path", default=None, type=click.Path())
@click.option("--mode", type=click.Choice(["projection", "bottomup"]),
              default="projection", show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
def bench(registry, dataset_path, config_path, mode, out_dir):
    """Score a dataset against its ground truth; write metrics and a figure."""

    def body():
        reg = _resolve_registry(registry)
        beam, arb = _load_configs(config_path)
        if mode == "bottomup":
            beam = replace(beam, max_rounds=0)  # disables top-down revision only
        rows = _load_scenes(dataset_path)
        if any("ground_truth" not in row for row in rows):
            raise InputError("dataset has scenes without ground truth")
        truths, scenes, reports, scores = [], [], [], []
        for row in rows:
            dataset = _row_dataset(row)
            scene = interpret_scene(reg, dataset, beam, arb)
            truths.append(GroundTruth.from_dict(row["ground_truth"]))
            scenes.append(scene)
            scores.extend(r.score for _, r in scene.selected)
            reports.append(_scene_report(row["index"], scene, False))
        metrics = evaluate_metrics(truths, scenes)
        out = Path(out_dir)
        write_jsonl_atomic(out / "scenes.jsonl", reports)
        doc = metrics.to_dict()
        doc["mode"] = mode
        write_json_atomic(out / "metrics.json", doc)
        save_bench_figure(metrics, scores, out / "figure.png", mode)
        click.echo(json.dumps({"mode": mode, "exact_match": metrics.exact_match,
                               "scenes": metrics.scenes}, sort_keys=True))

    _guard(body)


@main.command("oracle-check")
@click.option("--registry", default="glyph")
@click.option("--instances", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--debug-corrupt-beam", is_flag=True, hidden=True)
def oracle_check_cmd(registry, instances, seed, debug_corrupt_beam):
    """Cross-check beam search against the exhaustive oracle."""

    def body():
        _resolve_registry(registry)  # validates the registry argument
        checked, mismatches = oracle_check(instances, seed,
                                           corrupt=debug_corrupt_beam)
        click.echo(f"{checked} checked, {len(mismatches)} mismatches")
        if mismatches:
            for m in mismatches[:5]:
                click.echo(f"  instance {m.index} (seed {m.seed}): beam "
                           f"{m.beam_score:.12f} vs oracle {m.oracle_score:.12f}",
                           err=True)
            sys.exit(EXIT_INTERNAL)

    _guard(body)


@main.command()
@click.option("--dataset", "dataset_path", required=True, type=click.Path())
@click.option("--report", "report_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
def render(dataset_path, report_path, out_dir):
    """One SVG overlay per scene (glyph domain only)."""

    def body():
        rows = _load_scenes(dataset_path)
        reports = {r["index"]: r for r in read_jsonl(report_path)}
        out = Path(out_dir)
        for row in rows:
            if row["domain"] != "glyph":
                raise InputError(f"render unsupported for domain {row['domain']!r}")
            if row["index"] not in reports:
                raise InputError(f"report has no entry for scene {row['index']}")
            dataset = _row_dataset(row)
            scene = _scene_from_report(reports[row["index"]])
            svg = render_overlay(dataset, scene)
            write_text_atomic(out / f"scene_{row['index']:04d}.svg", svg)

    _guard(body)


def _scene_from_report(doc: dict[str, Any]) -> SceneInterpretation:
    from .inference import InterpretationResult
    selected = tuple(
        (entry["model"], InterpretationResult(bindings=dict(entry["bindings"]),
                                              score=float(entry["score"])))
        for entry in doc.get("selected", []))
    return SceneInterpretation(selected=selected,
                               explained=frozenset(doc.get("explained", [])),
                               objective=float(doc.get("objective", 0.0)))


if __name__ == "__main__":
    main()
