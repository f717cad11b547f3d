"""Multi-model scene interpretation.

`propose` runs every registered model against the scene, peeling off further
instances of the same model by masking already-bound data.  `arbitrate`
selects the subset of candidates that best explains the scene: redundant
candidates whose data is already accounted for by stronger ones are rejected
(the explaining-away step), and the survivors maximise a coverage objective
that charges for each instance and for salient data left unexplained.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .errors import BindingError, DomainMismatchError, ModelFormatError
from .inference import BeamConfig, InterpretationResult, bottom_up_pass, project_refine
from .model import (
    DataSet,
    Datum,
    Model,
    infer_domain,
    load_model,
    populate,
    score_tree,
    serialize_model,
)

_EPS = 1e-12


@dataclass(frozen=True)
class ModelRegistry:
    """Named models sharing one data domain."""

    domain: str
    models: tuple[Model, ...]

    def __post_init__(self):
        names = [m.name for m in self.models]
        if len(names) != len(set(names)):
            raise ValueError("registry model names must be unique")
        for m in self.models:
            if infer_domain(m) != self.domain:
                raise DomainMismatchError(
                    f"model {m.name!r} is {infer_domain(m)}, registry is {self.domain}")

    def names(self) -> tuple[str, ...]:
        return tuple(m.name for m in self.models)

    def get(self, name: str) -> Model:
        for m in self.models:
            if m.name == name:
                return m
        raise KeyError(name)

    def subset(self, names: Iterable[str]) -> "ModelRegistry":
        wanted = set(names)
        return ModelRegistry(self.domain,
                             tuple(m for m in self.models if m.name in wanted))


def load_registry(path: str | Path) -> ModelRegistry:
    """Load every *.json model document in a directory."""
    path = Path(path)
    docs = sorted(path.glob("*.json"))
    if not docs:
        raise ModelFormatError(f"no model documents in {path}")
    models = tuple(load_model(p.read_text(encoding="utf-8")) for p in docs)
    domains = {infer_domain(m) for m in models}
    if len(domains) != 1:
        raise DomainMismatchError(f"registry mixes domains {sorted(domains)}")
    return ModelRegistry(domain=domains.pop(), models=models)


def save_registry(registry: ModelRegistry, path: str | Path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for model in registry.models:
        (path / f"{model.name}.json").write_text(serialize_model(model),
                                                 encoding="utf-8")


@dataclass(frozen=True)
class ArbitrationConfig:
    instance_cost: float = 0.6       # charged per selected instance
    orphan_penalty: float = 0.15     # per salient, unexplained datum
    accept_threshold: float = 0.5    # minimum score to be selectable
    max_instances: int = 3           # per model in propose
    salient_min: float = 0.4         # confidence above which a datum is salient

    def __post_init__(self):
        if self.instance_cost < 0 or self.orphan_penalty < 0:
            raise ValueError("costs must be >= 0")
        if not (0.0 <= self.accept_threshold <= 1.0):
            raise ValueError("accept_threshold must be in [0, 1]")


@dataclass
class SceneInterpretation:
    """Arbitrated set of model instances jointly explaining one scene."""

    selected: tuple[tuple[str, InterpretationResult], ...]
    explained: frozenset[str]
    objective: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "selected": [{"model": name, **result.to_dict()}
                         for name, result in self.selected],
            "explained": sorted(self.explained),
            "objective": self.objective,
        }

    def labels(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.selected)


def propose(registry: ModelRegistry, dataset: DataSet, cfg: BeamConfig,
            arb: ArbitrationConfig) -> list[tuple[str, InterpretationResult]]:
    """Candidate instances per model, found by iterative data masking.

    Instances at or above the acceptance threshold mask their data so the
    next pass can find a disjoint instance of the same model; near-misses
    down to half the threshold are reported once for arbitration context.
    """
    if dataset.domain != registry.domain:
        raise DomainMismatchError(
            f"registry is {registry.domain}, data set is {dataset.domain!r}")
    candidates: list[tuple[str, InterpretationResult]] = []
    for model in registry.models:
        remaining = dataset
        seen_keys: set[frozenset[str]] = set()
        for _ in range(arb.max_instances):
            if len(remaining) == 0:
                break
            table = bottom_up_pass(model, remaining, cfg)
            result = project_refine(model, remaining, table, cfg)
            if result.score < arb.accept_threshold / 2 or not result.bindings:
                break
            key = frozenset(result.bindings.values())
            if key in seen_keys:
                break
            seen_keys.add(key)
            candidates.append((model.name, result))
            if result.score < arb.accept_threshold:
                break
            bound = set(result.bindings.values())
            remaining = DataSet(domain=dataset.domain,
                                data=tuple(d for d in remaining.data
                                           if d.id not in bound))
    candidates.sort(key=lambda item: (-item[1].score, item[0],
                                      tuple(sorted(item[1].bindings.items()))))
    return candidates


def objective_value(selected: Sequence[tuple[str, InterpretationResult]],
                    dataset: DataSet, arb: ArbitrationConfig) -> float:
    """Coverage objective: sum of scores - instance cost - orphan penalties.

    A datum bound by several selected instances counts once in the explained
    set; unexplained data matter only when salient (confidence at or above
    salient_min).
    """
    explained: set[str] = set()
    total = 0.0
    for _, result in selected:
        total += result.score
        explained |= set(result.bindings.values())
    orphans = sum(1 for d in dataset.data
                  if d.confidence >= arb.salient_min and d.id not in explained)
    return total - arb.instance_cost * len(selected) - arb.orphan_penalty * orphans


def _dominated(candidate: tuple[str, InterpretationResult],
               others: Sequence[tuple[str, InterpretationResult]]) -> bool:
    """True when 1-2 at-least-as-strong candidates already cover its data."""
    _, result = candidate
    need = set(result.bindings.values())
    strong = [(name, r) for name, r in others
              if r.score >= result.score - _EPS and (name, r) is not candidate]
    for one in strong:
        if need <= set(one[1].bindings.values()):
            return True
    for a, b in itertools.combinations(strong, 2):
        if need <= set(a[1].bindings.values()) | set(b[1].bindings.values()):
            return True
    return False


def _prune_dominated(eligible: list[tuple[str, InterpretationResult]]):
    """Explaining-away: drop candidates whose support is already accounted for.

    Processed weakest-first so a candidate is only pruned against survivors;
    this realises the rule that an instance adds nothing when one or two
    stronger instances jointly explain all of its data.
    """
    order = sorted(eligible, key=lambda item: (item[1].score, item[0]))
    surviving = list(eligible)
    for cand in order:
        others = [c for c in surviving if c is not cand]
        if _dominated(cand, others):
            surviving.remove(cand)
    return surviving


def arbitrate(candidates: Sequence[tuple[str, InterpretationResult]],
              dataset: DataSet, arb: ArbitrationConfig,
              mandatory: Sequence[tuple[str, InterpretationResult]] = (),
              ) -> SceneInterpretation:
    """Select the candidate subset maximising the coverage objective.

    Exact subset search up to 12 eligible candidates, greedy forward
    selection with single-swap improvement beyond that.  `mandatory`
    instances (externally forced mappings) are always selected and compete
    with no one.  Deterministic: ties break by (model name, score, bindings).
    """
    eligible = [c for c in candidates if c[1].score >= arb.accept_threshold]
    eligible = _prune_dominated(eligible)
    eligible.sort(key=lambda item: (-item[1].score, item[0],
                                    tuple(sorted(item[1].bindings.items()))))
    base = list(mandatory)
    if len(eligible) <= 12:
        chosen = _exact_subset(eligible, base, dataset, arb)
    else:
        chosen = _greedy_subset(eligible, base, dataset, arb)
    selected = tuple(base + chosen)
    explained = frozenset(d for _, r in selected for d in r.bindings.values())
    return SceneInterpretation(selected=selected, explained=explained,
                               objective=objective_value(selected, dataset, arb))


def _exact_subset(eligible, base, dataset, arb):
    best_subset: list = []
    best_value = objective_value(base, dataset, arb)
    for r in range(1, len(eligible) + 1):
        for combo in itertools.combinations(eligible, r):
            value = objective_value(base + list(combo), dataset, arb)
            if value > best_value + _EPS:
                best_value = value
                best_subset = list(combo)
    return best_subset


def _greedy_subset(eligible, base, dataset, arb):
    chosen: list = []
    value = objective_value(base, dataset, arb)
    remaining = list(eligible)
    improved = True
    while improved:
        improved = False
        best_gain, best_cand = 0.0, None
        for cand in remaining:
            gain = objective_value(base + chosen + [cand], dataset, arb) - value
            if gain > best_gain + _EPS:
                best_gain, best_cand = gain, cand
        if best_cand is not None:
            chosen.append(best_cand)
            remaining.remove(best_cand)
            value += best_gain
            improved = True
    # Single-swap improvement pass.
    improved = True
    while improved:
        improved = False
        for i, held in enumerate(list(chosen)):
            for cand in list(remaining):
                trial = chosen[:i] + chosen[i + 1:] + [cand]
                trial_value = objective_value(base + trial, dataset, arb)
                if trial_value > value + _EPS:
                    remaining.append(held)
                    remaining.remove(cand)
                    chosen = trial
                    value = trial_value
                    improved = True
                    break
            if improved:
                break
    return chosen


def interpret_scene(registry: ModelRegistry, dataset: DataSet, cfg: BeamConfig,
                    arb: ArbitrationConfig) -> SceneInterpretation:
    """Propose and arbitrate in one step."""
    return arbitrate(propose(registry, dataset, cfg, arb), dataset, arb)


def force_mapping(model: Model, dataset: DataSet, anchors: Mapping[str, str],
                  cfg: BeamConfig) -> InterpretationResult:
    """Interpret with externally pinned bindings that are never revised.

    The returned mapping extends the anchors exactly; remaining slots are
    filled by the ordinary bottom-up + projection search.
    """
    leaves = set(model.leaf_ids())
    for leaf, datum in anchors.items():
        if leaf not in leaves:
            raise BindingError(f"anchor references unknown leaf {leaf!r}")
        if datum not in dataset:
            raise BindingError(f"anchor references unknown datum {datum!r}")
    if set(anchors) == leaves:
        inst = populate(model, anchors, dataset)
        return InterpretationResult(bindings=dict(anchors),
                                    score=score_tree(inst), trace=())
    table = bottom_up_pass(model, dataset, cfg, anchors=anchors)
    result = project_refine(model, dataset, table, cfg, anchors=anchors)
    merged = dict(result.bindings)
    merged.update(anchors)
    if merged != result.bindings:
        inst = populate(model, merged, dataset)
        result = InterpretationResult(bindings=merged, score=score_tree(inst),
                                      trace=result.trace)
    return result
