"""2D glyph demo domain.

Letters are compositional: oriented segments group into strokes (collinear or
smoothly continuing chains), and strokes relate through relative-location,
parallelism and length-ratio constraints to form a letter.  Canonical scorer
parameters are measured from the canonical geometry through the same
aggregation pipeline used at inference time, so a noise-free generated scene
scores exactly 1.0 under its ground-truth mapping.

Relation offsets are normalised by part length, which makes letter models
invariant to translation and scale (not rotation).
"""

from __future__ import annotations

import math
import random
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from .errors import BindingError, InputError
from .evaluation import GroundTruth, Metrics, TruthInstance, evaluate_metrics  # noqa: F401
from .model import DataSet, Datum, Element, Level, Model
from .scorers import ScorerSpec, aggregate_view
from .workspace import ModelRegistry, SceneInterpretation

Point = tuple[float, float]
Polyline = Sequence[Point]

# Canonical stroke geometry per letter: ordered polylines; consecutive point
# pairs are the leaf segments.  Box is roughly 4 wide x 4 tall, baseline y=0.
_OCT = [(2 + 2 * math.cos(math.radians(22.5 + 45 * k)),
         2 + 2 * math.sin(math.radians(22.5 + 45 * k))) for k in range(9)]

LETTER_STROKES: dict[str, list[tuple[str, Polyline]]] = {
    "A": [("leg_l", [(0, 0), (1, 2), (2, 4)]),
          ("leg_r", [(4, 0), (3, 2), (2, 4)]),
          ("bar", [(1, 2), (2, 2), (3, 2)])],
    "E": [("vert", [(0, 0), (0, 2), (0, 4)]),
          ("top", [(0, 4), (1.5, 4), (3, 4)]),
          ("mid", [(0, 2), (1.2, 2), (2.4, 2)]),
          ("bot", [(0, 0), (1.5, 0), (3, 0)])],
    "F": [("vert", [(0, 0), (0, 2), (0, 4)]),
          ("top", [(0, 4), (1.5, 4), (3, 4)]),
          ("mid", [(0, 2), (1.2, 2), (2.4, 2)])],
    "H": [("vl", [(0, 0), (0, 2), (0, 4)]),
          ("vr", [(3, 0), (3, 2), (3, 4)]),
          ("bar", [(0, 2), (1.5, 2), (3, 2)])],
    "I": [("lower", [(0, 0), (0, 1), (0, 2)]),
          ("upper", [(0, 2), (0, 3), (0, 4)])],
    "K": [("vert", [(0, 0), (0, 2), (0, 4)]),
          ("up", [(0, 2), (1, 3), (2, 4)]),
          ("down", [(0, 2), (1, 1), (2, 0)])],
    "L": [("vert", [(0, 0), (0, 2), (0, 4)]),
          ("bot", [(0, 0), (1.5, 0), (3, 0)])],
    "O": [("arc_e", _OCT[0:3]), ("arc_n", _OCT[2:5]),
          ("arc_w", _OCT[4:7]), ("arc_s", _OCT[6:9])],
    "T": [("top", [(0, 4), (1.5, 4), (3, 4)]),
          ("stem", [(1.5, 4), (1.5, 2), (1.5, 0)])],
    "V": [("arm_l", [(0, 4), (1, 2), (2, 0)]),
          ("arm_r", [(2, 0), (3, 2), (4, 4)])],
}

_RL_TOL = 0.3
_V_TOL = 0.45  # the V is deliberately tolerant; arbitration culls it


def _segment_payload(p: Point, q: Point) -> dict[str, float]:
    dx, dy = q[0] - p[0], q[1] - p[1]
    return {
        "x": (p[0] + q[0]) / 2.0,
        "y": (p[1] + q[1]) / 2.0,
        "orientation": math.degrees(math.atan2(dy, dx)) % 180.0,
        "length": math.hypot(dx, dy),
    }


def _stroke_payloads(polyline: Polyline) -> list[dict[str, float]]:
    return [_segment_payload(p, q) for p, q in zip(polyline, polyline[1:])]


def _end_point(view: Mapping[str, float], which: str) -> Point:
    from .scorers import endpoints
    if which == "mid":
        return (view["x"], view["y"])
    lo, hi = endpoints(view)
    return lo if which == "lo" else hi


def _rl_child(views: Sequence[Mapping[str, float]], a: int, b: int,
              end_a: str, end_b: str, weight: float,
              tol: float = _RL_TOL) -> dict[str, Any]:
    pa, pb = _end_point(views[a], end_a), _end_point(views[b], end_b)
    ref = views[a]["length"]
    return {"slots": [a, b], "weight": weight, "kind": "relative_location",
            "params": {"end_a": end_a, "end_b": end_b,
                       "dx": (pb[0] - pa[0]) / ref, "dy": (pb[1] - pa[1]) / ref,
                       "tol": tol, "ref_length": ref}}


def _parallel_child(a: int, b: int, angle: float, weight: float,
                    tol: float = 10.0) -> dict[str, Any]:
    return {"slots": [a, b], "weight": weight, "kind": "parallelism",
            "params": {"angle": angle, "tol": tol}}


def _continuation_scorer(a: Mapping[str, float], b: Mapping[str, float]) -> ScorerSpec:
    """Continuation spec whose canonical values are measured from a and b."""
    from .scorers import circular_diff, endpoints
    total = a["length"] + b["length"]
    pairs = [math.dist(p, q) for p in endpoints(a) for q in endpoints(b)]
    return ScorerSpec(kind="smooth_continuation", params={
        "gap": min(pairs) / (total / 2.0), "tol_gap": 0.15,
        "angle": circular_diff(a["orientation"], b["orientation"]),
        "tol_angle": 12.0,
        "span": max(pairs) / total, "tol_span": 0.12,
    })


def _normalise_weights(children: list[dict[str, Any]]) -> None:
    total = sum(c["weight"] for c in children)
    for c in children:
        c["weight"] = c["weight"] / total


def _letter_scorer(letter: str, views: Sequence[Mapping[str, float]]) -> ScorerSpec:
    if letter == "A":
        children = [_rl_child(views, 0, 1, "hi", "hi", 1.0),
                    _rl_child(views, 0, 1, "lo", "lo", 1.0),
                    _rl_child(views, 0, 2, "lo", "lo", 1.0)]
    elif letter == "E":
        children = [_rl_child(views, 0, 1, "mid", "mid", 1.0),
                    _rl_child(views, 0, 2, "mid", "mid", 1.0),
                    _rl_child(views, 0, 3, "mid", "mid", 1.0)]
    elif letter == "F":
        children = [_rl_child(views, 0, 1, "mid", "mid", 1.0),
                    _rl_child(views, 0, 2, "mid", "mid", 1.0)]
    elif letter == "H":
        children = [_rl_child(views, 0, 1, "mid", "mid", 1.0),
                    _rl_child(views, 0, 2, "lo", "lo", 1.0),
                    _parallel_child(0, 1, 0.0, 1.0)]
    elif letter == "K":
        children = [_rl_child(views, 0, 1, "mid", "mid", 1.0),
                    _rl_child(views, 0, 2, "mid", "mid", 1.0),
                    _rl_child(views, 1, 2, "lo", "hi", 1.0)]
    elif letter == "L":
        children = [_rl_child(views, 0, 1, "lo", "lo", 1.0),
                    _rl_child(views, 0, 1, "mid", "mid", 1.0)]
    elif letter == "O":
        children = [_rl_child(views, k, (k + 1) % 4, "mid", "mid", 1.0)
                    for k in range(4)]
    elif letter == "T":
        children = [_rl_child(views, 0, 1, "mid", "mid", 1.0),
                    _rl_child(views, 0, 1, "mid", "hi", 1.0)]
    elif letter == "V":
        children = [_rl_child(views, 0, 1, "lo", "lo", 0.4, tol=_V_TOL),
                    _rl_child(views, 0, 1, "mid", "mid", 0.2, tol=_V_TOL),
                    _rl_child(views, 0, 1, "hi", "hi", 0.4, tol=_V_TOL)]
    else:
        raise InputError(f"no relation design for letter {letter!r}")
    _normalise_weights(children)
    return ScorerSpec(kind="conjunction", params={"children": children})


def build_letter_model(letter: str) -> Model:
    """Three levels: segment slots, stroke elements, one letter element."""
    strokes = LETTER_STROKES[letter]
    leaves: list[Element] = []
    stroke_elements: list[Element] = []
    views: list[Mapping[str, float]] = []
    for stroke_name, polyline in strokes:
        payloads = _stroke_payloads(polyline)
        leaf_ids = []
        for i in range(len(payloads)):
            leaf_id = f"{letter}:{stroke_name}:{i}"
            leaves.append(Element(id=leaf_id))
            leaf_ids.append(leaf_id)
        stroke_elements.append(Element(id=f"{letter}:{stroke_name}",
                                       parts=tuple(leaf_ids),
                                       scorer=_continuation_scorer(*payloads)))
        views.append(aggregate_view(payloads))
    if letter == "I":
        # Two collinear half-strokes joined end to end; no conjunction needed.
        top = Element(id=letter, parts=tuple(e.id for e in stroke_elements),
                      scorer=_continuation_scorer(views[0], views[1]))
    else:
        top = Element(id=letter, parts=tuple(e.id for e in stroke_elements),
                      scorer=_letter_scorer(letter, views))
    return Model(name=letter, levels=(
        Level(index=1, elements=tuple(leaves)),
        Level(index=2, elements=tuple(stroke_elements)),
        Level(index=3, elements=(top,)),
    ))


def build_glyph_library() -> ModelRegistry:
    """All shipped letters as a glyph-domain registry."""
    models = tuple(build_letter_model(letter) for letter in sorted(LETTER_STROKES))
    return ModelRegistry(domain="glyph", models=models)


# --- scene generation -----------------------------------------------------------

@dataclass(frozen=True)
class LetterPlacement:
    letter: str
    dx: float = 0.0
    dy: float = 0.0
    scale: float = 1.0
    rotation: float = 0.0  # degrees

    def to_list(self) -> list:
        return [self.letter, self.dx, self.dy, self.scale, self.rotation]


@dataclass(frozen=True)
class GlyphSceneSpec:
    letters: tuple[LetterPlacement, ...]
    extent: tuple[float, float] = (16.0, 16.0)

    def to_dict(self) -> dict[str, Any]:
        return {"letters": [p.to_list() for p in self.letters],
                "extent": list(self.extent)}

    @staticmethod
    def from_dict(doc: Mapping[str, Any]) -> "GlyphSceneSpec":
        letters = tuple(LetterPlacement(letter=str(row[0]), dx=float(row[1]),
                                        dy=float(row[2]), scale=float(row[3]),
                                        rotation=float(row[4]))
                        for row in doc["letters"])
        extent = tuple(doc.get("extent", (16.0, 16.0)))
        return GlyphSceneSpec(letters=letters, extent=(extent[0], extent[1]))


@dataclass(frozen=True)
class NoiseParams:
    jitter: float = 0.0            # endpoint position noise, grid units
    dropout: float = 0.0           # per-segment removal probability
    clutter: int = 0               # unrelated segments added to the scene
    confidence_sigma: float = 0.0  # detector confidence noise
    overrides: Mapping[str, float] = field(default_factory=dict)
    seed: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {"jitter": self.jitter, "dropout": self.dropout,
                "clutter": self.clutter, "confidence_sigma": self.confidence_sigma,
                "overrides": dict(self.overrides), "seed": self.seed}

    @staticmethod
    def from_dict(doc: Mapping[str, Any]) -> "NoiseParams":
        return NoiseParams(
            jitter=float(doc.get("jitter", 0.0)),
            dropout=float(doc.get("dropout", 0.0)),
            clutter=int(doc.get("clutter", 0)),
            confidence_sigma=float(doc.get("confidence_sigma", 0.0)),
            overrides=dict(doc.get("overrides", {})),
            seed=int(doc.get("seed", 0)),
        )


def _transform(point: Point, placement: LetterPlacement) -> Point:
    x, y = point[0] * placement.scale, point[1] * placement.scale
    if placement.rotation:
        theta = math.radians(placement.rotation)
        x, y = (x * math.cos(theta) - y * math.sin(theta),
                x * math.sin(theta) + y * math.cos(theta))
    return x + placement.dx, y + placement.dy


def _confidence(rng: random.Random, sigma: float) -> float:
    if sigma <= 0:
        return 1.0
    return max(0.05, min(1.0, 1.0 - abs(rng.gauss(0.0, sigma))))


def generate_scene(spec: GlyphSceneSpec,
                   noise: NoiseParams) -> tuple[DataSet, GroundTruth]:
    """Place canonical letters, apply noise, and emit data plus ground truth.

    Deterministic per noise.seed.  Dropout removes segments from both the
    data and the truth bindings; clutter segments are never part of any truth
    instance.
    """
    for placement in spec.letters:
        if placement.letter not in LETTER_STROKES:
            raise InputError(f"unknown letter {placement.letter!r}")
        if placement.scale <= 0:
            raise InputError("letter scale must be > 0")
    rng = random.Random(noise.seed)
    data: list[Datum] = []
    instances: list[TruthInstance] = []
    for i, placement in enumerate(spec.letters):
        bindings: dict[str, str] = {}
        seg_index = 0
        for stroke_name, polyline in LETTER_STROKES[placement.letter]:
            points = [_transform(p, placement) for p in polyline]
            for k in range(len(points) - 1):
                leaf_id = f"{placement.letter}:{stroke_name}:{k}"
                datum_id = f"g{i}s{seg_index}"
                seg_index += 1
                dropped = noise.dropout > 0 and rng.random() < noise.dropout
                p = tuple(c + rng.gauss(0.0, noise.jitter) for c in points[k])
                q = tuple(c + rng.gauss(0.0, noise.jitter) for c in points[k + 1])
                conf = _confidence(rng, noise.confidence_sigma)
                if dropped:
                    continue
                data.append(Datum(id=datum_id, payload=_segment_payload(p, q),
                                  confidence=conf))
                bindings[leaf_id] = datum_id
        instances.append(TruthInstance(label=placement.letter, bindings=bindings))
    width, height = spec.extent
    for k in range(noise.clutter):
        mid = (rng.uniform(0, width), rng.uniform(0, height))
        ori = rng.uniform(0, 180)
        length = rng.uniform(0.8, 2.2)
        half = length / 2.0
        p = (mid[0] - half * math.cos(math.radians(ori)),
             mid[1] - half * math.sin(math.radians(ori)))
        q = (mid[0] + half * math.cos(math.radians(ori)),
             mid[1] + half * math.sin(math.radians(ori)))
        data.append(Datum(id=f"c{k}", payload=_segment_payload(p, q),
                          confidence=rng.uniform(0.3, 0.9)))
    if noise.overrides:
        patched = []
        for d in data:
            if d.id in noise.overrides:
                patched.append(Datum(id=d.id, payload=d.payload,
                                     confidence=float(noise.overrides[d.id])))
            else:
                patched.append(d)
        data = patched
    return (DataSet(domain="glyph", data=tuple(data)),
            GroundTruth(instances=tuple(instances)))


def random_scene_spec(rng: random.Random, letters: Sequence[str] | None = None,
                      extent: tuple[float, float] = (16.0, 16.0)) -> GlyphSceneSpec:
    """One random letter placed well inside the extent (rotation stays 0)."""
    pool = sorted(letters) if letters else sorted(LETTER_STROKES)
    letter = pool[rng.randrange(len(pool))]
    scale = rng.uniform(0.8, 1.4)
    dx = rng.uniform(1.0, extent[0] - 1.0 - 4.5 * scale)
    dy = rng.uniform(1.0, extent[1] - 1.0 - 4.5 * scale)
    return GlyphSceneSpec(letters=(LetterPlacement(letter, dx, dy, scale, 0.0),),
                          extent=extent)


def overlapped_ak_spec(rng: random.Random,
                       extent: tuple[float, float] = (20.0, 12.0)) -> GlyphSceneSpec:
    """A and K touching so that A's right leg and K's upright form a V shape."""
    scale = rng.uniform(0.85, 1.25)
    dx = rng.uniform(1.0, 4.0)
    dy = rng.uniform(1.0, 4.0)
    k_dx = dx + 4.0 * scale + rng.uniform(-0.12, 0.12) * scale
    k_dy = dy + rng.uniform(-0.12, 0.12) * scale
    return GlyphSceneSpec(letters=(
        LetterPlacement("A", dx, dy, scale, 0.0),
        LetterPlacement("K", k_dx, k_dy, scale, 0.0),
    ), extent=extent)


def generate_ring_scene(seed: int, clutter: int = 4) -> DataSet:
    """Debris arranged in a rough ring, from a generator that knows no letters.

    Octagonal placement with jittered endpoints and mid-range confidences;
    extra scattered segments complete the clutter.  Nothing here was produced
    by a letter template, which is the point: mapping the ring with a closed
    letter model is projection onto data from a foreign domain.
    """
    rng = random.Random(seed)
    radius = rng.uniform(1.6, 2.8)
    cx, cy = rng.uniform(4, 10), rng.uniform(4, 10)
    data: list[Datum] = []
    vertices = [(cx + radius * math.cos(math.radians(22.5 + 45 * k)),
                 cy + radius * math.sin(math.radians(22.5 + 45 * k)))
                for k in range(9)]
    jitter = 0.05 * radius
    for k in range(8):
        p = tuple(c + rng.gauss(0.0, jitter) for c in vertices[k])
        q = tuple(c + rng.gauss(0.0, jitter) for c in vertices[k + 1])
        data.append(Datum(id=f"r{k}", payload=_segment_payload(p, q),
                          confidence=rng.uniform(0.55, 0.95)))
    for k in range(clutter):
        mid = (rng.uniform(0, 14), rng.uniform(0, 14))
        ori = rng.uniform(0, 180)
        length = rng.uniform(0.8, 2.0)
        half = length / 2.0
        p = (mid[0] - half * math.cos(math.radians(ori)),
             mid[1] - half * math.sin(math.radians(ori)))
        q = (mid[0] + half * math.cos(math.radians(ori)),
             mid[1] + half * math.sin(math.radians(ori)))
        data.append(Datum(id=f"c{k}", payload=_segment_payload(p, q),
                          confidence=rng.uniform(0.45, 0.9)))
    return DataSet(domain="glyph", data=tuple(data))


# --- rendering --------------------------------------------------------------------

_PALETTE = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def render_overlay(dataset: DataSet, scene: SceneInterpretation) -> str:
    """SVG 1.1 overlay: all data in gray, each selected instance in colour.

    Bound segments are re-drawn in the instance colour and labelled with the
    leaf element id they satisfy.
    """
    for _, result in scene.selected:
        for leaf, datum_id in result.bindings.items():
            if datum_id not in dataset:
                raise BindingError(f"overlay binding {leaf!r} -> {datum_id!r} "
                                   "references no datum")
    xs, ys = [0.0, 16.0], [0.0, 16.0]
    segments: dict[str, tuple[Point, Point]] = {}
    from .scorers import endpoints
    for d in dataset.data:
        lo, hi = endpoints(d.payload)
        segments[d.id] = (lo, hi)
        xs.extend((lo[0], hi[0]))
        ys.extend((lo[1], hi[1]))
    pad = 1.0
    min_x, max_x = min(xs) - pad, max(xs) + pad
    min_y, max_y = min(ys) - pad, max(ys) + pad

    def to_svg(p: Point) -> Point:
        return (p[0], max_y + min_y - p[1])  # flip: SVG y grows downward

    svg = ET.Element("svg", {
        "xmlns": "http://www.w3.org/2000/svg",
        "version": "1.1",
        "viewBox": f"{min_x:.2f} {min_y:.2f} {max_x - min_x:.2f} {max_y - min_y:.2f}",
    })
    data_group = ET.SubElement(svg, "g", {"id": "data", "stroke": "#999999",
                                          "stroke-width": "0.08"})
    for datum_id in sorted(segments):
        (x1, y1), (x2, y2) = (to_svg(p) for p in segments[datum_id])
        ET.SubElement(data_group, "line", {
            "x1": f"{x1:.3f}", "y1": f"{y1:.3f}",
            "x2": f"{x2:.3f}", "y2": f"{y2:.3f}"})
    for k, (name, result) in enumerate(scene.selected):
        color = _PALETTE[k % len(_PALETTE)]
        group = ET.SubElement(svg, "g", {
            "id": f"instance-{k}-{name}", "stroke": color,
            "stroke-width": "0.14", "fill": color, "font-size": "0.45"})
        for leaf in sorted(result.bindings):
            (x1, y1), (x2, y2) = (to_svg(p) for p in segments[result.bindings[leaf]])
            ET.SubElement(group, "line", {
                "x1": f"{x1:.3f}", "y1": f"{y1:.3f}",
                "x2": f"{x2:.3f}", "y2": f"{y2:.3f}"})
            label = ET.SubElement(group, "text", {
                "x": f"{(x1 + x2) / 2 + 0.1:.3f}", "y": f"{(y1 + y2) / 2:.3f}",
                "stroke": "none"})
            label.text = leaf
    return ET.tostring(svg, encoding="unicode")
