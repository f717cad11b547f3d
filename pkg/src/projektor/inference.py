"""Single-model interpretation.

Bottom-up: admit data by confidence, build per-element candidates level by
level under a beam, composing partial mappings.  Top-down: take the best
candidates and repeatedly re-search weak or empty leaf slots inside windows
predicted by higher-level scorers, adopting a revision only when the top
score strictly improves.  `interpret` is the single entry point; there is no
separate mode for applying a model to data it was not designed for.

`brute_force_oracle` enumerates every mapping on small instances and is the
independent check the beam search is tested against.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from .errors import ConstraintError, DomainMismatchError, InstanceTooLargeError
from .model import (
    DEFAULT_THETA_MISS,
    Bindings,
    DataSet,
    Model,
    geometric_mean,
    infer_domain,
    populate,
    score_tree,
)
from .scorers import Constraint, aggregate_view, predict_constraint, relation_term

ORACLE_MAX_LEAVES = 6
ORACLE_MAX_DATA = 8
_EPS = 1e-12


@dataclass(frozen=True)
class BeamConfig:
    """Search knobs.  This field list is closed: conventional and novel use
    of a model go through the identical interface."""

    beam_width: int = 8
    tau_leaf: float = 0.4
    tau_proj: float = 0.1
    max_rounds: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if not (0.0 <= self.tau_proj <= self.tau_leaf <= 1.0):
            raise ValueError("need 0 <= tau_proj <= tau_leaf <= 1")
        if self.max_rounds < 0:
            raise ValueError("max_rounds must be >= 0")


@dataclass(frozen=True)
class Candidate:
    element_id: str
    bindings: tuple[tuple[str, str], ...]  # sorted (leaf, datum) pairs
    score: float

    def bindings_dict(self) -> Bindings:
        return dict(self.bindings)

    def datum_set(self) -> frozenset[str]:
        return frozenset(d for _, d in self.bindings)


@dataclass
class CandidateTable:
    """Per-level beam contents.

    Level 1 is the admission list: (datum id, confidence) for every datum at
    or above tau_leaf, best first.  Levels 2..n hold composed candidates
    sorted by descending score; each element keeps at most beam_width
    candidates, so sibling elements with many tied hypotheses cannot starve
    one another out of the table.
    """

    admitted: tuple[tuple[str, float], ...]
    levels: dict[int, list[Candidate]] = field(default_factory=dict)
    _views: dict[tuple[str, tuple], Any] = field(default_factory=dict, repr=False)

    def for_element(self, level: int, element_id: str) -> list[Candidate]:
        return [c for c in self.levels.get(level, []) if c.element_id == element_id]

    def view(self, candidate: Candidate):
        return self._views.get((candidate.element_id, candidate.bindings))


@dataclass
class InterpretationResult:
    """A mapping, its recomputed tree score, and the search trace."""

    bindings: Bindings
    score: float
    trace: tuple[dict[str, Any], ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "bindings": dict(sorted(self.bindings.items())),
            "score": self.score,
            "trace": [dict(ev) for ev in self.trace],
        }


def _check_domain(model: Model, dataset: DataSet) -> None:
    model_domain = infer_domain(model)
    if dataset.domain != model_domain:
        raise DomainMismatchError(
            f"model {model.name!r} is {model_domain}, data set is {dataset.domain!r}")


def _floor_scores(model: Model, theta_miss: float) -> dict[str, float]:
    """Score of each element's subtree when nothing below it is bound."""
    floors: dict[str, float] = {}
    for level in model.levels:
        for el in level.elements:
            if el.is_leaf:
                floors[el.id] = theta_miss
            else:
                floors[el.id] = theta_miss * geometric_mean(floors[p] for p in el.parts)
    return floors


def _subtree_view(model: Model, dataset: DataSet, element_id: str, bindings: Bindings):
    payloads = []
    for leaf in model.subtree_leaves(element_id):
        datum_id = bindings.get(leaf)
        if datum_id is not None:
            payloads.append(dataset[datum_id].payload)
    return aggregate_view(payloads) if payloads else None


def _key(bindings: Bindings) -> tuple[tuple[str, str], ...]:
    return tuple(sorted(bindings.items()))


def bottom_up_pass(model: Model, dataset: DataSet, cfg: BeamConfig,
                   anchors: Mapping[str, str] | None = None,
                   theta_miss: float = DEFAULT_THETA_MISS) -> CandidateTable:
    """Feed-forward candidate construction, level by level.

    `anchors` freezes specific leaf bindings: every candidate must agree with
    them on any anchored slot it covers, and anchored slots are always filled.
    """
    _check_domain(model, dataset)
    anchors = dict(anchors or {})
    admitted = sorted(((d.id, d.confidence) for d in dataset.data
                       if d.confidence >= cfg.tau_leaf),
                      key=lambda item: (-item[1], item[0]))
    table = CandidateTable(admitted=tuple(admitted))
    floors = _floor_scores(model, theta_miss)
    admitted_ids = [d for d, _ in admitted]

    for level in model.levels[1:]:
        kept: list[Candidate] = []
        for el in level.elements:
            found: dict[frozenset[str], Candidate] = {}
            if level.index == 2:
                combos = itertools.product(
                    *(_leaf_options(leaf, admitted_ids, anchors) for leaf in el.parts))
                for choice in combos:
                    bindings = {leaf: d for leaf, d in zip(el.parts, choice) if d is not None}
                    if not bindings:
                        continue
                    part_views = []
                    part_scores = []
                    for leaf in el.parts:
                        datum_id = bindings.get(leaf)
                        if datum_id is None:
                            part_views.append(None)
                            part_scores.append(theta_miss)
                        else:
                            datum = dataset[datum_id]
                            part_views.append(datum.payload)
                            part_scores.append(datum.confidence)
                    score = (relation_term(el.scorer, part_views, theta_miss)
                             * geometric_mean(part_scores))
                    _keep_best(found, el.id, bindings, score)
            else:
                options: list[list[Candidate | None]] = []
                for part in el.parts:
                    entries: list[Candidate | None] = [None]
                    entries.extend(table.for_element(level.index - 1, part))
                    options.append(entries)
                for choice in itertools.product(*options):
                    bindings = {}
                    part_scores = []
                    part_views = []
                    for part, cand in zip(el.parts, choice):
                        if cand is None:
                            part_scores.append(floors[part])
                            part_views.append(None)
                        else:
                            bindings.update(cand.bindings_dict())
                            part_scores.append(cand.score)
                            part_views.append(table.view(cand))
                    if not bindings:
                        continue
                    if any(bindings.get(k, v) != v for k, v in anchors.items()
                           if k in bindings):
                        continue
                    score = (relation_term(el.scorer, part_views, theta_miss)
                             * geometric_mean(part_scores))
                    _keep_best(found, el.id, bindings, score)
            best = sorted(found.values(), key=lambda c: (-c.score, c.bindings))
            kept.extend(best[:cfg.beam_width])
        kept.sort(key=lambda c: (-c.score, c.element_id, c.bindings))
        table.levels[level.index] = kept
        for cand in kept:
            key = (cand.element_id, cand.bindings)
            if key not in table._views:
                table._views[key] = _subtree_view(model, dataset, cand.element_id,
                                                  cand.bindings_dict())
    return table


def _leaf_options(leaf: str, admitted_ids: list[str], anchors: Bindings):
    if leaf in anchors:
        return [anchors[leaf]]
    return [None] + admitted_ids


def _keep_best(found: dict, element_id: str, bindings: Bindings, score: float) -> None:
    # Dedup by the set of data used: permuted slot assignments collapse to
    # the best-scoring one.
    key = frozenset(bindings.values())
    cand = Candidate(element_id=element_id, bindings=_key(bindings), score=score)
    held = found.get(key)
    if held is None or cand.score > held.score + _EPS or (
            abs(cand.score - held.score) <= _EPS and cand.bindings < held.bindings):
        found[key] = cand


# --- top-down refinement --------------------------------------------------------

def project_refine(model: Model, dataset: DataSet, table: CandidateTable,
                   cfg: BeamConfig, anchors: Mapping[str, str] | None = None,
                   theta_miss: float = DEFAULT_THETA_MISS) -> InterpretationResult:
    """Refine the best bottom-up candidates with top-down constraint search.

    Each round sweeps the weak slots (unbound leaves, or leaves bound below
    tau_leaf), derives payload windows from the enclosing elements' scorers,
    and re-searches all data down to tau_proj inside those windows.  A
    revision is adopted only if the recomputed top score strictly increases,
    which both guarantees termination and makes the per-round score sequence
    non-decreasing.
    """
    anchors = dict(anchors or {})
    frozen = set(anchors)
    starts: list[Bindings] = []
    top_level = model.depth
    for cand in table.levels.get(top_level, []):
        starts.append(cand.bindings_dict())
    if not starts:
        starts.append(dict(anchors))

    parent_map = model.parent_map()
    best: tuple[float, Bindings, list[dict[str, Any]]] | None = None

    for start in starts:
        bindings = dict(start)
        trace: list[dict[str, Any]] = [
            {"round": 0, "event": "candidate_admitted",
             "bindings": dict(sorted(bindings.items()))}]
        inst = populate(model, bindings, dataset)
        current = score_tree(inst, theta_miss)
        for round_no in range(1, cfg.max_rounds + 1):
            revised = False
            for leaf in _weak_slots(model, dataset, bindings, frozen, cfg, inst.cache):
                windows = _slot_windows(model, dataset, bindings, leaf,
                                        parent_map, theta_miss)
                if not windows:
                    continue
                trace.append({"round": round_no, "event": "constraint_issued",
                              "leaf": leaf,
                              "windows": [_window_summary(w) for _, w in windows]})
                candidates = _windowed_data(dataset, windows, cfg.tau_proj)
                best_gain: tuple[float, str] | None = None
                for datum_id in candidates:
                    if bindings.get(leaf) == datum_id:
                        continue
                    trial = dict(bindings)
                    trial[leaf] = datum_id
                    trial_score = score_tree(populate(model, trial, dataset), theta_miss)
                    if trial_score > current + _EPS and (
                            best_gain is None or trial_score > best_gain[0] + _EPS):
                        best_gain = (trial_score, datum_id)
                if best_gain is not None:
                    new_score, datum_id = best_gain
                    trace.append({"round": round_no, "event": "binding_revised",
                                  "leaf": leaf, "from": bindings.get(leaf),
                                  "to": datum_id, "score_before": current,
                                  "score_after": new_score})
                    bindings[leaf] = datum_id
                    current = new_score
                    inst = populate(model, bindings, dataset)
                    score_tree(inst, theta_miss)
                    revised = True
            if not revised:
                break
        if best is None or current > best[0] + _EPS:
            best = (current, bindings, trace)

    score, bindings, trace = best
    final = populate(model, bindings, dataset)
    return InterpretationResult(bindings=bindings,
                                score=score_tree(final, theta_miss),
                                trace=tuple(trace))


def _weak_slots(model: Model, dataset: DataSet, bindings: Bindings,
                frozen: set[str], cfg: BeamConfig, cache: dict[str, float]) -> list[str]:
    parent_map = model.parent_map()
    weak = []
    for leaf in model.leaf_ids():
        if leaf in frozen:
            continue
        datum_id = bindings.get(leaf)
        if datum_id is None or dataset[datum_id].confidence < cfg.tau_leaf:
            parent = parent_map.get(leaf, (None, 0))[0]
            limit = cache.get(parent, 0.0) if parent else 0.0
            weak.append((limit, leaf))
    return [leaf for _, leaf in sorted(weak)]


def _slot_windows(model: Model, dataset: DataSet, bindings: Bindings, leaf: str,
                  parent_map: dict[str, tuple[str, int]],
                  theta_miss: float) -> list[tuple[int, Constraint]]:
    """Constraint windows for a leaf slot, derived from each anchored ancestor.

    The immediate parent constrains the datum directly.  Higher ancestors
    constrain the aggregate of the subtree the leaf sits in, so their windows
    are padded by the anchor's own extent before matching data.
    """
    windows: list[tuple[int, Constraint]] = []
    child = leaf
    depth = 0
    while child in parent_map:
        parent_id, slot = parent_map[child]
        element = model.element(parent_id)
        views = [_subtree_view(model, dataset, part, bindings) for part in element.parts]
        if views[slot] is None and any(v is not None for v in views) and element.scorer:
            try:
                window = predict_constraint(element.scorer, views, slot)
            except ConstraintError:
                window = None
            if window is not None:
                if depth > 0:
                    window = _pad_window(window, views)
                windows.append((depth, window))
        child = parent_id
        depth += 1
    return windows


def _pad_window(window: Constraint, views) -> Constraint:
    anchor_lengths = [float(v["length"]) for v in views
                      if v is not None and "length" in v]
    pad = 0.75 * max(anchor_lengths) if anchor_lengths else 0.0
    if pad <= 0:
        return window
    intervals = {}
    for feature, (lo, hi) in window.intervals.items():
        if feature.startswith(("x", "y")):
            intervals[feature] = (lo - pad, hi + pad)
        else:
            intervals[feature] = (lo, hi)
    return Constraint(intervals=intervals, orientation=None,
                      labels=window.labels, strength=window.strength)


def _window_summary(window: Constraint) -> dict[str, Any]:
    out: dict[str, Any] = {f: [lo, hi] for f, (lo, hi) in sorted(window.intervals.items())}
    if window.orientation is not None:
        out["orientation"] = list(window.orientation)
    if window.labels is not None:
        out["labels"] = sorted(window.labels)
    return out


def _windowed_data(dataset: DataSet, windows: list[tuple[int, Constraint]],
                   tau_proj: float) -> list[str]:
    matched = []
    for datum in dataset.data:
        if datum.confidence < tau_proj:
            continue
        if any(w.contains(datum.payload) for _, w in windows):
            matched.append((-datum.confidence, datum.id))
    return [datum_id for _, datum_id in sorted(matched)]


# --- entry point ------------------------------------------------------------------

def interpret(model: Model, dataset: DataSet, cfg: BeamConfig,
              theta_miss: float = DEFAULT_THETA_MISS) -> InterpretationResult:
    """The one recognition entry point: bottom-up pass, then projection."""
    table = bottom_up_pass(model, dataset, cfg, theta_miss=theta_miss)
    return project_refine(model, dataset, table, cfg, theta_miss=theta_miss)


def best_bottom_up_score(model: Model, dataset: DataSet, cfg: BeamConfig,
                         theta_miss: float = DEFAULT_THETA_MISS) -> float:
    """Best top-level candidate score without any top-down revision."""
    table = bottom_up_pass(model, dataset, cfg, theta_miss=theta_miss)
    tops = table.levels.get(model.depth, [])
    if not tops:
        empty = populate(model, {}, dataset)
        return score_tree(empty, theta_miss)
    return max(t.score for t in tops)


def brute_force_oracle(model: Model, dataset: DataSet,
                       theta_miss: float = DEFAULT_THETA_MISS) -> InterpretationResult:
    """Exhaustively enumerate all (|data|+1)^|leaves| mappings.

    Ties go to the lexicographically earliest assignment over leaves sorted
    by id, with "unbound" ordering before any datum id.  Guarded to small
    instances; raises InstanceTooLargeError beyond the guard.
    """
    _check_domain(model, dataset)
    leaves = sorted(model.leaf_ids())
    if len(leaves) > ORACLE_MAX_LEAVES:
        raise InstanceTooLargeError(
            f"instance too large: {len(leaves)} leaves > {ORACLE_MAX_LEAVES}")
    if len(dataset) > ORACLE_MAX_DATA:
        raise InstanceTooLargeError(
            f"instance too large: {len(dataset)} data > {ORACLE_MAX_DATA}")
    options: list[str | None] = [None] + list(dataset.ids())
    best_score = -1.0
    best_bindings: Bindings = {}
    for assignment in itertools.product(options, repeat=len(leaves)):
        bindings = {leaf: d for leaf, d in zip(leaves, assignment) if d is not None}
        score = score_tree(populate(model, bindings, dataset), theta_miss)
        if score > best_score + _EPS:
            best_score = score
            best_bindings = bindings
    return InterpretationResult(bindings=best_bindings, score=best_score, trace=())
