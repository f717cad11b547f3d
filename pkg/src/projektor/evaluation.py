"""Ground truth containers and recognition metrics shared by both domains."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from .workspace import SceneInterpretation

MATCH_AGREEMENT = 0.7  # fraction of truth bindings a match must reproduce


@dataclass(frozen=True)
class TruthInstance:
    label: str
    bindings: Mapping[str, str]

    def to_dict(self) -> dict[str, Any]:
        return {"label": self.label, "bindings": dict(sorted(self.bindings.items()))}


@dataclass(frozen=True)
class GroundTruth:
    instances: tuple[TruthInstance, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {"instances": [t.to_dict() for t in self.instances]}

    @staticmethod
    def from_dict(doc: Mapping[str, Any]) -> "GroundTruth":
        return GroundTruth(tuple(
            TruthInstance(label=t["label"], bindings=dict(t["bindings"]))
            for t in doc.get("instances", [])))


@dataclass
class Metrics:
    per_label: dict[str, dict[str, float]] = field(default_factory=dict)
    exact_match: float = 0.0
    mean_score: float = 0.0
    scenes: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "per_label": {k: dict(v) for k, v in sorted(self.per_label.items())},
            "exact_match": self.exact_match,
            "mean_score": self.mean_score,
            "scenes": self.scenes,
        }


def _agrees(truth: TruthInstance, bindings: Mapping[str, str]) -> bool:
    if not truth.bindings:
        return False
    hits = sum(1 for leaf, datum in truth.bindings.items()
               if bindings.get(leaf) == datum)
    return hits >= MATCH_AGREEMENT * len(truth.bindings)


def evaluate_metrics(truths: Sequence[GroundTruth],
                     results: Sequence[SceneInterpretation]) -> Metrics:
    """Instance-level precision/recall plus scene exact-match accuracy.

    A selected instance matches a truth instance when the labels agree and at
    least 70% of the truth's bindings are reproduced; matching is greedy by
    descending score and one-to-one.  A scene is an exact match when every
    truth instance is matched and nothing extra was selected.
    """
    if len(truths) != len(results):
        raise ValueError(f"{len(truths)} truths vs {len(results)} results")
    tp: dict[str, int] = {}
    fp: dict[str, int] = {}
    fn: dict[str, int] = {}
    exact = 0
    scores: list[float] = []
    for truth, scene in zip(truths, results):
        unmatched = list(truth.instances)
        extras = 0
        ordered = sorted(scene.selected, key=lambda item: (-item[1].score, item[0]))
        for name, result in ordered:
            scores.append(result.score)
            hit = next((t for t in unmatched
                        if t.label == name and _agrees(t, result.bindings)), None)
            if hit is not None:
                unmatched.remove(hit)
                tp[name] = tp.get(name, 0) + 1
            else:
                extras += 1
                fp[name] = fp.get(name, 0) + 1
        for t in unmatched:
            fn[t.label] = fn.get(t.label, 0) + 1
        if not unmatched and extras == 0:
            exact += 1

    per_label: dict[str, dict[str, float]] = {}
    for label in sorted(set(tp) | set(fp) | set(fn)):
        hits = tp.get(label, 0)
        precision = hits / (hits + fp.get(label, 0)) if hits + fp.get(label, 0) else 0.0
        recall = hits / (hits + fn.get(label, 0)) if hits + fn.get(label, 0) else 0.0
        per_label[label] = {"precision": precision, "recall": recall}
    return Metrics(
        per_label=per_label,
        exact_match=exact / len(truths) if truths else 0.0,
        mean_score=sum(scores) / len(scores) if scores else 0.0,
        scenes=len(truths),
    )
