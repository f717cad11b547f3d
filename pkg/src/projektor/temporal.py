"""Temporal activity demo domain.

Loading and unloading are built from the same four atomic actions; only the
temporal order differs.  The gap pattern is palindromic, so reversing a clean
loading stream's timestamps produces exactly a canonical unloading stream.

Atomic detections can be corrupted to the generic label "motion", which every
phase accepts at a discount: an ambiguous event on its own says little, and
only the activity model projected over the whole stream gives it a role.
Corrupted events also come with depressed detector confidence, which is what
lets the relaxed top-down admission threshold earn its keep.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Any, Mapping

from .errors import InputError
from .evaluation import GroundTruth, TruthInstance
from .inference import BeamConfig
from .model import DataSet, Datum, Element, Level, Model
from .scorers import ScorerSpec
from .workspace import (
    ArbitrationConfig,
    ModelRegistry,
    SceneInterpretation,
    interpret_scene,
)

AMBIGUOUS_LABEL = "motion"
AMBIGUOUS_SCORE = 0.85
DISTRACTOR_LABELS = ("walk", "idle", "scan", "wave")

# (label, tick): palindromic gaps 3, 2, 3 so reversal maps load onto unload.
LOAD_TEMPLATE = (("carry", 0), ("contact", 3), ("transfer", 5), ("depart", 8))
UNLOAD_TEMPLATE = (("depart", 0), ("transfer", 3), ("contact", 5), ("carry", 8))

_TEMPLATES = {"load": LOAD_TEMPLATE, "unload": UNLOAD_TEMPLATE}
_GAP_TOL = 1.5
_SPAN_TOL = 2.5


def build_activity_model(name: str) -> Model:
    """Three levels: event slots, labelled phases, ordered activity."""
    template = _TEMPLATES[name]
    leaves = []
    phases = []
    for label, _ in template:
        leaf_id = f"{name}:{label}:0"
        leaves.append(Element(id=leaf_id))
        phases.append(Element(
            id=f"{name}:{label}", parts=(leaf_id,),
            scorer=ScorerSpec(kind="label_match",
                              params={"target": label,
                                      "accept": {AMBIGUOUS_LABEL: AMBIGUOUS_SCORE}})))
    children = []
    for i in range(3):
        gap = template[i + 1][1] - template[i][1]
        children.append({"slots": [i, i + 1], "weight": 1.0, "kind": "precedence",
                         "params": {"gap": float(gap), "tol": _GAP_TOL}})
    children.append({"slots": [0, 3], "weight": 1.0, "kind": "time_gap",
                     "params": {"gap": float(template[3][1] - template[0][1]),
                                "tol": _SPAN_TOL}})
    for c in children:
        c["weight"] = 1.0 / len(children)
    top = Element(id=name, parts=tuple(p.id for p in phases),
                  scorer=ScorerSpec(kind="conjunction", params={"children": children}))
    return Model(name=name, levels=(
        Level(index=1, elements=tuple(leaves)),
        Level(index=2, elements=tuple(phases)),
        Level(index=3, elements=(top,)),
    ))


def build_activity_library() -> ModelRegistry:
    return ModelRegistry(domain="temporal", models=(
        build_activity_model("load"), build_activity_model("unload")))


# --- stream generation ------------------------------------------------------------

@dataclass(frozen=True)
class EventStreamSpec:
    activity: str                      # load | unload | distractor
    base: tuple[int, ...] = ()         # override template timestamps
    confusion: float = 0.0             # per-event label corruption probability
    ambiguous_share: float = 0.7       # corrupted label becomes "motion" vs junk
    insert_rate: float = 0.0           # expected distractor insertions per event
    delete_rate: float = 0.0
    seed: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {"activity": self.activity, "base": list(self.base),
                "confusion": self.confusion, "ambiguous_share": self.ambiguous_share,
                "insert_rate": self.insert_rate, "delete_rate": self.delete_rate,
                "seed": self.seed}

    @staticmethod
    def from_dict(doc: Mapping[str, Any]) -> "EventStreamSpec":
        return EventStreamSpec(
            activity=str(doc["activity"]),
            base=tuple(int(t) for t in doc.get("base", ())),
            confusion=float(doc.get("confusion", 0.0)),
            ambiguous_share=float(doc.get("ambiguous_share", 0.7)),
            insert_rate=float(doc.get("insert_rate", 0.0)),
            delete_rate=float(doc.get("delete_rate", 0.0)),
            seed=int(doc.get("seed", 0)),
        )


def _event_payload(t: int, label: str, agent: str = "a0") -> dict[str, Any]:
    return {"t": int(t), "label": label, "agent": agent}


def generate_stream(spec: EventStreamSpec) -> tuple[DataSet, GroundTruth]:
    """Emit the activity template, then corrupt labels and insert/delete.

    A corrupted event keeps its slot in the ground truth but its label turns
    ambiguous (or plain wrong) and its confidence drops below the bottom-up
    admission threshold, into the range only top-down search re-admits.
    """
    if spec.activity not in ("load", "unload", "distractor"):
        raise InputError(f"unknown activity {spec.activity!r}")
    rng = random.Random(spec.seed)
    data: list[Datum] = []
    instances: list[TruthInstance] = []
    if spec.activity == "distractor":
        count = 4 + rng.randrange(3)
        t = 0
        for k in range(count):
            t += rng.randrange(1, 4)
            label = DISTRACTOR_LABELS[rng.randrange(len(DISTRACTOR_LABELS))]
            data.append(Datum(id=f"e{k}", payload=_event_payload(t, label),
                              confidence=round(rng.uniform(0.6, 1.0), 3)))
        return DataSet(domain="temporal", data=tuple(data)), GroundTruth()

    template = _TEMPLATES[spec.activity]
    base = spec.base if spec.base else tuple(t for _, t in template)
    if len(base) != len(template):
        raise InputError("base timestamps must cover the four template events")
    bindings: dict[str, str] = {}
    for k, ((label, _), t) in enumerate(zip(template, base)):
        datum_id = f"e{k}"
        deleted = spec.delete_rate > 0 and rng.random() < spec.delete_rate
        confused = spec.confusion > 0 and rng.random() < spec.confusion
        emitted_label = label
        confidence = 1.0
        if confused:
            if rng.random() < spec.ambiguous_share:
                emitted_label = AMBIGUOUS_LABEL
            else:
                emitted_label = DISTRACTOR_LABELS[rng.randrange(len(DISTRACTOR_LABELS))]
            confidence = round(rng.uniform(0.28, 0.39), 3)
        if deleted:
            continue
        data.append(Datum(id=datum_id, payload=_event_payload(t, emitted_label),
                          confidence=confidence))
        bindings[f"{spec.activity}:{label}:0"] = datum_id
    span = max(base) - min(base)
    inserted = 0
    for k in range(len(template)):
        if spec.insert_rate > 0 and rng.random() < spec.insert_rate:
            t = min(base) + rng.randrange(0, span + 1)
            label = DISTRACTOR_LABELS[rng.randrange(len(DISTRACTOR_LABELS))]
            data.append(Datum(id=f"x{inserted}", payload=_event_payload(t, label),
                              confidence=round(rng.uniform(0.5, 0.9), 3)))
            inserted += 1
    truth = TruthInstance(label=spec.activity, bindings=bindings)
    return (DataSet(domain="temporal", data=tuple(data)),
            GroundTruth(instances=(truth,)))


def reverse_stream(dataset: DataSet) -> DataSet:
    """Mirror all timestamps: t -> max_t - t.  Labels stay put."""
    if not dataset.data:
        return dataset
    top = max(int(d.payload["t"]) for d in dataset.data)
    flipped = tuple(
        Datum(id=d.id,
              payload=_event_payload(top - int(d.payload["t"]), d.payload["label"],
                                     d.payload.get("agent", "a0")),
              confidence=d.confidence)
        for d in dataset.data)
    return DataSet(domain="temporal", data=flipped)


def classify_stream(registry: ModelRegistry, dataset: DataSet, cfg: BeamConfig,
                    arb: ArbitrationConfig) -> tuple[str, SceneInterpretation]:
    """Propose and arbitrate; the label is the best selected activity or "none"."""
    scene = interpret_scene(registry, dataset, cfg, arb)
    if not scene.selected:
        return "none", scene
    best = max(scene.selected, key=lambda item: (item[1].score, item[0]))
    return best[0], scene
