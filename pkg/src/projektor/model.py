"""Hierarchical compositional models and interpretation scoring.

A model is an ordered stack of levels.  Level 1 holds leaf slots that bind
raw data; every element above relates parts from the level directly below and
carries a scorer for how well the bound data realises the relation.  The top
level has a single element whose score is the score of the interpretation.

Scoring is bottom-up and pure: a leaf contributes its datum's confidence (or
the missing-part placeholder), and every non-leaf element contributes its
relation term times the geometric mean of its part scores.  All scores live
in [0, 1].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from .errors import BindingError, ModelFormatError, ModelValidationError
from .scorers import (
    GEOMETRIC_FIELDS,
    TEMPORAL_FIELDS,
    ScorerSpec,
    ScorerSpecError,
    aggregate_view,
    relation_term,
    scorer_from_dict,
    scorer_to_dict,
    validate_scorer,
)

DEFAULT_THETA_MISS = 0.3

Bindings = dict[str, str]  # leaf element id -> datum id (partial)


@dataclass(frozen=True)
class Element:
    """One node of a model: a leaf slot, or a scored relation over parts."""

    id: str
    parts: tuple[str, ...] = ()
    scorer: ScorerSpec | None = None

    @property
    def is_leaf(self) -> bool:
        return not self.parts


@dataclass(frozen=True)
class Level:
    index: int
    elements: tuple[Element, ...]


@dataclass(frozen=True)
class Model:
    name: str
    levels: tuple[Level, ...]

    def __post_init__(self):
        by_id: dict[str, Element] = {}
        level_of: dict[str, int] = {}
        for level in self.levels:
            for el in level.elements:
                by_id.setdefault(el.id, el)
                level_of.setdefault(el.id, level.index)
        object.__setattr__(self, "_by_id", by_id)
        object.__setattr__(self, "_level_of", level_of)

    def element(self, element_id: str) -> Element:
        return self._by_id[element_id]

    def level_of(self, element_id: str) -> int:
        return self._level_of[element_id]

    @property
    def top(self) -> Element:
        return self.levels[-1].elements[0]

    @property
    def depth(self) -> int:
        return len(self.levels)

    def leaf_ids(self) -> tuple[str, ...]:
        return tuple(el.id for el in self.levels[0].elements)

    def parent_map(self) -> dict[str, tuple[str, int]]:
        """Child element id -> (parent element id, slot index)."""
        parents = {}
        for level in self.levels[1:]:
            for el in level.elements:
                for slot, part in enumerate(el.parts):
                    parents[part] = (el.id, slot)
        return parents

    def subtree_leaves(self, element_id: str) -> tuple[str, ...]:
        el = self._by_id[element_id]
        if el.is_leaf:
            return (el.id,)
        out: list[str] = []
        for part in el.parts:
            out.extend(self.subtree_leaves(part))
        return tuple(out)


@dataclass(frozen=True)
class Datum:
    """One observation: an id, a domain payload and a detector confidence."""

    id: str
    payload: Mapping[str, Any]
    confidence: float

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"datum {self.id}: confidence {self.confidence} not in [0,1]")
        for key, value in self.payload.items():
            if isinstance(value, (int, float)) and not math.isfinite(float(value)):
                raise ValueError(f"datum {self.id}: payload field {key} not finite")


@dataclass(frozen=True)
class DataSet:
    domain: str  # "glyph" | "temporal"
    data: tuple[Datum, ...]

    def __post_init__(self):
        by_id: dict[str, Datum] = {}
        for d in self.data:
            if d.id in by_id:
                raise ValueError(f"duplicate datum id {d.id!r}")
            by_id[d.id] = d
        object.__setattr__(self, "_by_id", by_id)

    def __len__(self) -> int:
        return len(self.data)

    def __contains__(self, datum_id: str) -> bool:
        return datum_id in self._by_id

    def __getitem__(self, datum_id: str) -> Datum:
        return self._by_id[datum_id]

    def ids(self) -> tuple[str, ...]:
        return tuple(sorted(self._by_id))


@dataclass
class InstantiatedModel:
    """A model populated with bound data, ready for scoring.

    score_tree fills `cache` with every element's score and `rel_cache` with
    every non-leaf element's bare relation term.
    """

    model: Model
    dataset: DataSet
    bindings: Bindings
    missing: frozenset[str]
    cache: dict[str, float] = field(default_factory=dict)
    rel_cache: dict[str, float] = field(default_factory=dict)


# --- validation ---------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    elements: tuple[str, ...] = ()


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        if self.ok:
            return "model valid"
        return "; ".join(f"[{v.code}] {v.message}" for v in self.violations)


def validate_model(model: Model) -> ValidationReport:
    """Check every structural invariant; violations are data, not errors."""
    found: list[Violation] = []

    def flag(code: str, message: str, *elements: str) -> None:
        found.append(Violation(code, message, tuple(elements)))

    if len(model.levels) < 2:
        flag("level-count", f"model has {len(model.levels)} level(s), needs >= 2")
    for i, level in enumerate(model.levels):
        if level.index != i + 1:
            flag("level-index", f"level at position {i} has index {level.index}")
        if not level.elements:
            flag("level-empty", f"level {level.index} has no elements")
    if model.levels and len(model.levels[-1].elements) != 1:
        flag("top-arity",
             f"top level has {len(model.levels[-1].elements)} elements, needs exactly 1",
             *(el.id for el in model.levels[-1].elements))

    seen: dict[str, int] = {}
    for level in model.levels:
        for el in level.elements:
            if el.id in seen:
                flag("duplicate-id", f"element id {el.id!r} appears in levels "
                     f"{seen[el.id]} and {level.index}", el.id)
            seen.setdefault(el.id, level.index)

    for level in model.levels:
        for el in level.elements:
            if level.index == 1:
                if el.parts:
                    flag("leaf-parts", f"leaf {el.id!r} has parts", el.id)
                if el.scorer is not None:
                    flag("leaf-scorer", f"leaf {el.id!r} carries a scorer", el.id)
                continue
            if not el.parts:
                flag("missing-parts", f"element {el.id!r} has no parts", el.id)
            if el.scorer is None:
                flag("missing-scorer", f"element {el.id!r} has no scorer", el.id)
            else:
                for problem in validate_scorer(el.scorer, len(el.parts)):
                    flag("scorer-spec", f"element {el.id!r}: {problem}", el.id)
            for part in el.parts:
                if part not in seen:
                    flag("unknown-part", f"element {el.id!r} references unknown "
                         f"part {part!r}", el.id)
                elif seen[part] != level.index - 1:
                    flag("skip-level", f"element {el.id!r} (level {level.index}) "
                         f"references {part!r} in level {seen[part]}", el.id, part)

    cycle = _find_cycle(model)
    if cycle:
        flag("cycle", "part references form a cycle: " + " -> ".join(cycle), *cycle)

    if model.levels and len(model.levels[-1].elements) == 1 and not cycle:
        reachable = set(model.subtree_leaves(model.top.id))
        reachable |= {el_id for el_id in seen if _reaches(model, model.top.id, el_id)}
        for el_id in seen:
            if el_id != model.top.id and el_id not in reachable:
                flag("unreachable", f"element {el_id!r} not reachable from the top", el_id)

    return ValidationReport(tuple(found))


def _find_cycle(model: Model) -> list[str] | None:
    WHITE, GRAY, BLACK = 0, 1, 2
    color: dict[str, int] = {}
    stack: list[str] = []

    def visit(node: str) -> list[str] | None:
        color[node] = GRAY
        stack.append(node)
        el = model._by_id.get(node)
        for part in (el.parts if el else ()):
            if part not in model._by_id:
                continue
            state = color.get(part, WHITE)
            if state == GRAY:
                return stack[stack.index(part):] + [part]
            if state == WHITE:
                cycle = visit(part)
                if cycle:
                    return cycle
        stack.pop()
        color[node] = BLACK
        return None

    for level in model.levels:
        for el in level.elements:
            if color.get(el.id, WHITE) == WHITE:
                cycle = visit(el.id)
                if cycle:
                    return cycle
    return None


def _reaches(model: Model, root: str, target: str) -> bool:
    seen = set()
    frontier = [root]
    while frontier:
        node = frontier.pop()
        if node == target:
            return True
        if node in seen:
            continue
        seen.add(node)
        el = model._by_id.get(node)
        if el:
            frontier.extend(p for p in el.parts if p in model._by_id)
    return False


def infer_domain(model: Model) -> str:
    """Guess the data domain a model applies to from its scorer kinds."""
    kinds: set[str] = set()

    def collect(spec: ScorerSpec) -> None:
        if spec.kind == "conjunction":
            for child in spec.param("children", ()):
                kinds.add(child["kind"])
        else:
            kinds.add(spec.kind)

    for level in model.levels[1:]:
        for el in level.elements:
            if el.scorer:
                collect(el.scorer)
    temporal = {"precedence", "time_gap", "label_match"}
    geometric = {"relative_location", "smooth_continuation", "parallelism"}
    if kinds & temporal and not kinds & geometric:
        return "temporal"
    return "glyph"


# --- population and scoring ----------------------------------------------------

def populate(model: Model, bindings: Mapping[str, str], dataset: DataSet) -> InstantiatedModel:
    """Bind leaf slots per the mapping; unbound leaves are marked missing."""
    leaves = set(model.leaf_ids())
    for leaf, datum in bindings.items():
        if leaf not in leaves:
            raise BindingError(f"unknown leaf element {leaf!r} in mapping")
        if datum not in dataset:
            raise BindingError(f"mapping binds {leaf!r} to unknown datum {datum!r}")
    return InstantiatedModel(
        model=model,
        dataset=dataset,
        bindings=dict(bindings),
        missing=frozenset(leaves - set(bindings)),
    )


def geometric_mean(scores: Iterable[float]) -> float:
    total, n = 0.0, 0
    for s in scores:
        if s <= 0.0:
            return 0.0
        total += math.log(s)
        n += 1
    return math.exp(total / n) if n else 1.0


def score_tree(inst: InstantiatedModel, theta_miss: float = DEFAULT_THETA_MISS) -> float:
    """Evaluate the hierarchy bottom-up and return the top element's score.

    Leaf score is the bound datum's confidence, or theta_miss when missing.
    Element score is relation_term x geometric mean of part scores.  Fills
    inst.cache for every element on the way up.  Deterministic and pure in
    (model, bindings, data).
    """
    model = inst.model
    cache: dict[str, float] = {}
    views: dict[str, Mapping[str, Any] | None] = {}
    for level in model.levels:
        for el in level.elements:
            if level.index == 1:
                datum_id = inst.bindings.get(el.id)
                if datum_id is None:
                    cache[el.id] = theta_miss
                    views[el.id] = None
                else:
                    datum = inst.dataset[datum_id]
                    cache[el.id] = datum.confidence
                    views[el.id] = datum.payload
            else:
                part_views = [views[p] for p in el.parts]
                rel = relation_term(el.scorer, part_views, theta_miss)
                score = rel * geometric_mean(cache[p] for p in el.parts)
                cache[el.id] = score
                bound = _bound_payloads(model, inst, el.id)
                views[el.id] = aggregate_view(bound) if bound else None
    inst.cache = cache
    return cache[model.top.id]


def element_view(model: Model, inst: InstantiatedModel, element_id: str):
    """Aggregate payload view of an element's bound subtree (None if empty)."""
    bound = _bound_payloads(model, inst, element_id)
    return aggregate_view(bound) if bound else None


def _bound_payloads(model: Model, inst: InstantiatedModel, element_id: str):
    out = []
    for leaf in model.subtree_leaves(element_id):
        datum_id = inst.bindings.get(leaf)
        if datum_id is not None:
            out.append(inst.dataset[datum_id].payload)
    return out


# --- document format ------------------------------------------------------------

def model_to_dict(model: Model) -> dict[str, Any]:
    levels = []
    for level in model.levels:
        elements = []
        for el in level.elements:
            doc: dict[str, Any] = {"id": el.id}
            if el.parts:
                doc["parts"] = list(el.parts)
            if el.scorer is not None:
                doc["scorer"] = scorer_to_dict(el.scorer)
            elements.append(doc)
        levels.append({"index": level.index, "elements": elements})
    return {"name": model.name, "levels": levels}


def model_from_dict(doc: Mapping[str, Any]) -> Model:
    unknown = set(doc) - {"name", "levels"}
    if unknown:
        raise ModelFormatError(f"model document has unknown fields {sorted(unknown)}")
    if "name" not in doc or "levels" not in doc:
        raise ModelFormatError("model document needs 'name' and 'levels'")
    levels = []
    for level_doc in doc["levels"]:
        extra = set(level_doc) - {"index", "elements"}
        if extra:
            raise ModelFormatError(f"level document has unknown fields {sorted(extra)}")
        elements = []
        for el_doc in level_doc.get("elements", []):
            extra = set(el_doc) - {"id", "parts", "scorer"}
            if extra:
                raise ModelFormatError(f"element document has unknown fields {sorted(extra)}")
            if "id" not in el_doc:
                raise ModelFormatError("element document lacks 'id'")
            scorer = None
            if "scorer" in el_doc:
                try:
                    scorer = scorer_from_dict(el_doc["scorer"])
                except ScorerSpecError as err:
                    raise ModelFormatError(str(err)) from err
            elements.append(Element(
                id=str(el_doc["id"]),
                parts=tuple(str(p) for p in el_doc.get("parts", [])),
                scorer=scorer,
            ))
        levels.append(Level(index=int(level_doc.get("index", 0)), elements=tuple(elements)))
    return Model(name=str(doc["name"]), levels=tuple(levels))


def load_model(source: str) -> Model:
    """Parse a model document; raises unless the model validates cleanly."""
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as err:
        raise ModelFormatError(f"model document is not valid JSON: {err}") from err
    model = model_from_dict(doc)
    report = validate_model(model)
    if not report.ok:
        raise ModelValidationError(report)
    return model


def serialize_model(model: Model) -> str:
    return json.dumps(model_to_dict(model), indent=2, sort_keys=False)


# --- data (de)serialisation -----------------------------------------------------

def datum_to_dict(datum: Datum) -> dict[str, Any]:
    return {"id": datum.id, "payload": dict(datum.payload), "confidence": datum.confidence}


def datum_from_dict(doc: Mapping[str, Any]) -> Datum:
    return Datum(id=str(doc["id"]), payload=dict(doc["payload"]),
                 confidence=float(doc["confidence"]))


def dataset_to_dict(dataset: DataSet) -> dict[str, Any]:
    return {"domain": dataset.domain, "data": [datum_to_dict(d) for d in dataset.data]}


def dataset_from_dict(doc: Mapping[str, Any]) -> DataSet:
    return DataSet(domain=str(doc["domain"]),
                   data=tuple(datum_from_dict(d) for d in doc["data"]))


PAYLOAD_FIELDS = {"glyph": GEOMETRIC_FIELDS, "temporal": TEMPORAL_FIELDS}
