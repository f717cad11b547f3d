"""Relation scorers and their inverses.

Each scorer kind measures how well an ordered tuple of parts realises a
relation, returning a value in [0, 1] that peaks at 1.0 for the canonical
configuration.  Every continuous parameter decays with a Gaussian kernel
``exp(-(deviation / tolerance)^2)``; kernels multiply across parameters.

Scorers are invertible where the kernel admits a closed form: given all but
one part, ``predict_constraint`` returns a window guaranteed to contain every
payload for the open slot that would score at least 0.5.  That window is what
drives top-down search.

Payloads are plain dicts.  Geometric payloads carry ``x, y, orientation,
length`` (midpoint coordinates, undirected orientation in degrees mod 180,
length in grid units).  Temporal payloads carry ``t, label, agent``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from .errors import ConstraintError, ScorerEvalError, ScorerSpecError

# Half-width, in tolerance units, of the 0.5-level set of exp(-d^2).
HALF_WIDTH = math.sqrt(math.log(2.0))

GEOMETRIC_FIELDS = ("x", "y", "orientation", "length")
TEMPORAL_FIELDS = ("t", "label", "agent")


@dataclass(frozen=True)
class ScorerSpec:
    """A parameterised relation: one of the catalog kinds plus its params."""

    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def param(self, name, default=None):
        return self.params.get(name, default)


@dataclass(frozen=True)
class Constraint:
    """Window over an unbound part's payload, plus the best score inside it.

    ``intervals`` maps linear payload features to closed [lo, hi] ranges.
    Supported features: ``x_lo, y_lo, x_mid, y_mid, x_hi, y_hi, length, t``
    (the ``*_lo``/``*_hi`` pairs address a segment's reconstructed endpoints,
    ordered by (y, x)).  ``orientation`` is circular: (center, half_width) in
    degrees mod 180.  ``labels`` restricts temporal labels.
    """

    intervals: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    orientation: tuple[float, float] | None = None
    labels: frozenset[str] | None = None
    strength: float = 1.0

    def contains(self, payload: Mapping[str, Any]) -> bool:
        for feature, (lo, hi) in self.intervals.items():
            value = payload_feature(payload, feature)
            if value is None or not (lo - 1e-12 <= value <= hi + 1e-12):
                return False
        if self.orientation is not None:
            center, half = self.orientation
            ori = payload.get("orientation")
            if ori is None or circular_diff(float(ori), center) > half + 1e-12:
                return False
        if self.labels is not None and payload.get("label") not in self.labels:
            return False
        return True


# --- payload geometry helpers -------------------------------------------------

def endpoints(payload: Mapping[str, Any]) -> tuple[tuple[float, float], tuple[float, float]]:
    """Reconstruct the two endpoints of a segment-like payload.

    Returned as (lo, hi) ordered by (y, x) so that undirected segments have a
    stable endpoint identity.
    """
    x, y = float(payload["x"]), float(payload["y"])
    half = float(payload["length"]) / 2.0
    theta = math.radians(float(payload["orientation"]))
    dx, dy = half * math.cos(theta), half * math.sin(theta)
    a, b = (x - dx, y - dy), (x + dx, y + dy)
    return (a, b) if (a[1], a[0]) <= (b[1], b[0]) else (b, a)


def payload_feature(payload: Mapping[str, Any], feature: str) -> float | None:
    if feature in ("x_mid", "y_mid"):
        key = feature[0]
        return float(payload[key]) if key in payload else None
    if feature in ("x_lo", "y_lo", "x_hi", "y_hi"):
        if not all(k in payload for k in ("x", "y", "orientation", "length")):
            return None
        lo, hi = endpoints(payload)
        point = lo if feature.endswith("lo") else hi
        return point[0] if feature.startswith("x") else point[1]
    if feature in payload:
        try:
            return float(payload[feature])
        except (TypeError, ValueError):
            return None
    return None


def circular_diff(a: float, b: float) -> float:
    """Absolute orientation difference in degrees, mod 180, in [0, 90]."""
    d = abs(a - b) % 180.0
    return min(d, 180.0 - d)


def aggregate_view(payloads: Sequence[Mapping[str, Any]]) -> dict[str, Any]:
    """Summarise bound descendant payloads as one part-level payload.

    Geometric parts aggregate to a length-weighted centroid, total length and
    length-weighted circular-mean orientation; temporal parts aggregate to the
    mean timestamp.  Single payloads pass through unchanged so leaf-level
    fields (label, agent) survive.
    """
    if not payloads:
        raise ValueError("cannot aggregate zero payloads")
    if len(payloads) == 1:
        return dict(payloads[0])
    if "x" in payloads[0]:
        total = sum(float(p["length"]) for p in payloads)
        if total <= 0:
            total = float(len(payloads))
            weights = [1.0] * len(payloads)
        else:
            weights = [float(p["length"]) for p in payloads]
        x = sum(w * float(p["x"]) for w, p in zip(weights, payloads)) / sum(weights)
        y = sum(w * float(p["y"]) for w, p in zip(weights, payloads)) / sum(weights)
        # Orientation is mod 180: average on the doubled angle.
        cos2 = sum(w * math.cos(2 * math.radians(float(p["orientation"])))
                   for w, p in zip(weights, payloads))
        sin2 = sum(w * math.sin(2 * math.radians(float(p["orientation"])))
                   for w, p in zip(weights, payloads))
        ori = math.degrees(math.atan2(sin2, cos2) / 2.0) % 180.0
        return {"x": x, "y": y, "orientation": ori,
                "length": sum(float(p["length"]) for p in payloads)}
    ts = [float(p["t"]) for p in payloads]
    view: dict[str, Any] = {"t": sum(ts) / len(ts)}
    labels = {p.get("label") for p in payloads}
    if len(labels) == 1:
        view["label"] = labels.pop()
    agents = {p.get("agent") for p in payloads}
    if len(agents) == 1:
        view["agent"] = agents.pop()
    return view


# --- kernel machinery ---------------------------------------------------------

def _kernel(deviation: float) -> float:
    return math.exp(-deviation * deviation)


def _require(payload: Mapping[str, Any], fields: Sequence[str], kind: str) -> None:
    missing = [f for f in fields if f not in payload]
    if missing:
        raise ScorerEvalError(f"{kind}: payload lacks fields {missing}")


def _tol(spec: ScorerSpec, name: str = "tol") -> float:
    value = float(spec.param(name, 0.0))
    if value <= 0:
        raise ScorerSpecError(f"{spec.kind}: tolerance {name!r} must be > 0")
    return value


# --- the catalog --------------------------------------------------------------

# kind -> (arity, symmetric, invertible).  Conjunction arity is validated
# against its children, not here.
CATALOG: dict[str, tuple[int | None, bool, bool]] = {
    "relative_location": (2, False, True),
    "smooth_continuation": (2, True, False),
    "length_ratio": (2, False, True),
    "parallelism": (2, True, True),
    "precedence": (2, False, True),
    "time_gap": (2, True, True),
    "label_match": (1, True, True),
    "conjunction": (None, False, True),
}

_PARAM_SCHEMAS = {
    "relative_location": {"end_a": "lo|mid|hi", "end_b": "lo|mid|hi",
                          "dx": "offset / |part a|", "dy": "offset / |part a|",
                          "tol": "> 0"},
    "smooth_continuation": {"gap": "endpoint gap / mean length", "tol_gap": "> 0",
                            "angle": "degrees in [0, 90]", "tol_angle": "> 0",
                            "span": "far-endpoint spread / total length",
                            "tol_span": "> 0"},
    "length_ratio": {"ratio": "|part a| / |part b|", "tol": "> 0"},
    "parallelism": {"angle": "degrees in [0, 90]", "tol": "> 0"},
    "precedence": {"gap": "t_b - t_a in ticks", "tol": "> 0"},
    "time_gap": {"gap": "|t_b - t_a| in ticks", "tol": "> 0"},
    "label_match": {"target": "label scoring 1.0", "accept": "label -> score"},
    "conjunction": {"children": "[{slots, weight, kind, params}]"},
}


def list_catalog() -> list[dict[str, Any]]:
    """Machine-readable description of every scorer kind."""
    out = []
    for kind in sorted(CATALOG):
        arity, symmetric, invertible = CATALOG[kind]
        out.append({
            "kind": kind,
            "arity": arity,
            "symmetric": symmetric,
            "invertible": invertible,
            "params": dict(_PARAM_SCHEMAS[kind]),
        })
    return out


def conjunction_children(spec: ScorerSpec) -> list[tuple[tuple[int, ...], float, ScorerSpec]]:
    children = []
    for child in spec.param("children", ()):
        sub = ScorerSpec(kind=child["kind"], params=child.get("params", {}))
        children.append((tuple(child["slots"]), float(child["weight"]), sub))
    return children


def validate_scorer(spec: ScorerSpec, n_parts: int) -> list[str]:
    """Structural problems with a scorer, as human-readable strings."""
    problems: list[str] = []
    if spec.kind not in CATALOG:
        return [f"unknown scorer kind {spec.kind!r}"]
    arity = CATALOG[spec.kind][0]
    if arity is not None and n_parts != arity:
        problems.append(f"{spec.kind} relates {arity} parts, element has {n_parts}")
    tol_names = {"relative_location": ["tol"],
                 "smooth_continuation": ["tol_gap", "tol_angle", "tol_span"],
                 "length_ratio": ["tol"], "parallelism": ["tol"],
                 "precedence": ["tol"], "time_gap": ["tol"]}.get(spec.kind, [])
    for name in tol_names:
        try:
            _tol(spec, name)
        except ScorerSpecError as err:
            problems.append(str(err))
    if spec.kind == "relative_location":
        for key in ("end_a", "end_b"):
            if spec.param(key, "mid") not in ("lo", "mid", "hi"):
                problems.append(f"relative_location: {key} must be lo|mid|hi")
    if spec.kind == "label_match" and not spec.param("target"):
        problems.append("label_match: missing target label")
    if spec.kind == "conjunction":
        try:
            children = conjunction_children(spec)
        except (KeyError, TypeError, ValueError):
            return problems + ["conjunction: malformed children"]
        if len(children) < 2:
            problems.append("conjunction: needs at least 2 children")
        weight_sum = sum(w for _, w, _ in children)
        if abs(weight_sum - 1.0) > 1e-9:
            problems.append(f"conjunction: weights sum to {weight_sum}, expected 1")
        for slots, weight, child in children:
            if weight <= 0:
                problems.append("conjunction: child weights must be > 0")
            if child.kind == "conjunction":
                problems.append("conjunction: nested conjunctions not supported")
                continue
            if any(s < 0 or s >= n_parts for s in slots):
                problems.append(f"conjunction: child slots {slots} out of range")
            child_arity = CATALOG.get(child.kind, (None,))[0]
            if child_arity is not None and len(slots) != child_arity:
                problems.append(f"conjunction: child {child.kind} expects "
                                f"{child_arity} slots, got {len(slots)}")
            problems.extend(validate_scorer(child, len(slots)))
    return problems


# --- evaluation ---------------------------------------------------------------

def _simple_score(spec: ScorerSpec, views: Sequence[Mapping[str, Any]]) -> float:
    kind = spec.kind
    if kind == "relative_location":
        a, b = views
        _require(a, GEOMETRIC_FIELDS, kind)
        _require(b, GEOMETRIC_FIELDS, kind)
        ref = float(a["length"])
        if ref <= 0:
            raise ScorerEvalError("relative_location: first part has zero length")
        pa = _end_point(a, spec.param("end_a", "mid"))
        pb = _end_point(b, spec.param("end_b", "mid"))
        tol = _tol(spec)
        dev_x = ((pb[0] - pa[0]) / ref - float(spec.param("dx", 0.0))) / tol
        dev_y = ((pb[1] - pa[1]) / ref - float(spec.param("dy", 0.0))) / tol
        return _kernel(dev_x) * _kernel(dev_y)
    if kind == "smooth_continuation":
        a, b = views
        _require(a, GEOMETRIC_FIELDS, kind)
        _require(b, GEOMETRIC_FIELDS, kind)
        total = float(a["length"]) + float(b["length"])
        if total <= 0:
            raise ScorerEvalError("smooth_continuation: zero-length parts")
        pairs = [math.dist(p, q) for p in endpoints(a) for q in endpoints(b)]
        gap = min(pairs) / (total / 2.0)
        dev_gap = (gap - float(spec.param("gap", 0.0))) / _tol(spec, "tol_gap")
        angle = circular_diff(float(a["orientation"]), float(b["orientation"]))
        dev_angle = (angle - float(spec.param("angle", 0.0))) / _tol(spec, "tol_angle")
        # The chain must extend, not overlap: the far endpoints of a true
        # continuation sit the combined length apart.
        span = max(pairs) / total
        dev_span = (span - float(spec.param("span", 1.0))) / _tol(spec, "tol_span")
        return _kernel(dev_gap) * _kernel(dev_angle) * _kernel(dev_span)
    if kind == "length_ratio":
        a, b = views
        _require(a, ("length",), kind)
        _require(b, ("length",), kind)
        if float(b["length"]) <= 0:
            raise ScorerEvalError("length_ratio: second part has zero length")
        ratio = float(a["length"]) / float(b["length"])
        return _kernel((ratio - float(spec.param("ratio", 1.0))) / _tol(spec))
    if kind == "parallelism":
        a, b = views
        _require(a, ("orientation",), kind)
        _require(b, ("orientation",), kind)
        angle = circular_diff(float(a["orientation"]), float(b["orientation"]))
        return _kernel((angle - float(spec.param("angle", 0.0))) / _tol(spec))
    if kind == "precedence":
        a, b = views
        _require(a, ("t",), kind)
        _require(b, ("t",), kind)
        gap = float(b["t"]) - float(a["t"])
        return _kernel((gap - float(spec.param("gap", 0.0))) / _tol(spec))
    if kind == "time_gap":
        a, b = views
        _require(a, ("t",), kind)
        _require(b, ("t",), kind)
        gap = abs(float(b["t"]) - float(a["t"]))
        return _kernel((gap - float(spec.param("gap", 0.0))) / _tol(spec))
    if kind == "label_match":
        (a,) = views
        _require(a, ("label",), kind)
        label = a["label"]
        if label == spec.param("target"):
            return 1.0
        return float(spec.param("accept", {}).get(label, 0.0))
    raise ScorerEvalError(f"unknown scorer kind {spec.kind!r}")


def _end_point(payload: Mapping[str, Any], which: str) -> tuple[float, float]:
    if which == "mid":
        return float(payload["x"]), float(payload["y"])
    lo, hi = endpoints(payload)
    return lo if which == "lo" else hi


def eval_relation(spec: ScorerSpec, views: Sequence[Mapping[str, Any]]) -> float:
    """Score the relation on fully bound part payload views.

    Raises ScorerEvalError on arity mismatch or missing payload fields.
    """
    if spec.kind == "conjunction":
        children = conjunction_children(spec)
        if not children:
            raise ScorerEvalError("conjunction: no children")
        log_sum = 0.0
        for slots, weight, child in children:
            score = eval_relation(child, [views[s] for s in slots])
            if score <= 0.0:
                return 0.0
            log_sum += weight * math.log(score)
        return math.exp(log_sum)
    arity = CATALOG.get(spec.kind, (None,))[0]
    if arity is not None and len(views) != arity:
        raise ScorerEvalError(f"{spec.kind}: expected {arity} parts, got {len(views)}")
    if any(v is None for v in views):
        raise ScorerEvalError(f"{spec.kind}: unbound part in strict evaluation")
    return _simple_score(spec, views)


def relation_term(spec: ScorerSpec, views: Sequence[Mapping[str, Any] | None],
                  theta_miss: float) -> float:
    """Lenient relation score used during tree scoring.

    Parts whose subtree has no bound data present a None view.  With no
    anchored part at all the element cannot say anything and contributes the
    missing-part placeholder; with partial anchoring, uncomputable relations
    are skipped (conjunction weights renormalise over computable children).
    """
    if all(v is None for v in views):
        return theta_miss
    if spec.kind == "conjunction":
        computable = [(slots, weight, child)
                      for slots, weight, child in conjunction_children(spec)
                      if all(views[s] is not None for s in slots)]
        if not computable:
            return 1.0
        total_weight = sum(w for _, w, _ in computable)
        log_sum = 0.0
        for slots, weight, child in computable:
            score = _simple_score(child, [views[s] for s in slots])
            if score <= 0.0:
                return 0.0
            log_sum += (weight / total_weight) * math.log(score)
        return math.exp(log_sum)
    if any(v is None for v in views):
        return 1.0
    return _simple_score(spec, views)


# --- inversion ----------------------------------------------------------------

def predict_constraint(spec: ScorerSpec, views: Sequence[Mapping[str, Any] | None],
                       slot: int) -> Constraint:
    """Window over payloads for `slot` that contains every payload scoring >= 0.5.

    Requires at least one bound part; the slot itself must be unbound.  Kinds
    without a closed-form inverse for the requested slot raise
    ConstraintError; conjunction delegates to its children and intersects
    their windows.
    """
    if views[slot] is not None:
        raise ConstraintError("slot is already bound")
    if all(v is None for v in views):
        raise ConstraintError("no bound part to anchor the constraint")

    if spec.kind == "conjunction":
        pieces = []
        for slots, _, child in conjunction_children(spec):
            if slot not in slots:
                continue
            sub_views = [views[s] for s in slots]
            sub_slot = slots.index(slot)
            if any(v is None for i, v in enumerate(sub_views) if i != sub_slot):
                continue
            try:
                pieces.append(predict_constraint(child, sub_views, sub_slot))
            except ConstraintError:
                continue
        if not pieces:
            raise ConstraintError("no invertible child constrains this slot")
        return _intersect(pieces, _conjunction_strength(spec, views, slot))

    anchor = views[1 - slot] if len(views) == 2 else None
    kind = spec.kind
    if kind == "relative_location":
        if anchor is None:
            raise ConstraintError("relative_location: anchor part unbound")
        ref = float(anchor["length"]) if slot == 1 else None
        w = HALF_WIDTH * _tol(spec)
        dx, dy = float(spec.param("dx", 0.0)), float(spec.param("dy", 0.0))
        if slot == 1:
            pa = _end_point(anchor, spec.param("end_a", "mid"))
            target = spec.param("end_b", "mid")
            cx, cy = pa[0] + dx * ref, pa[1] + dy * ref
            half = w * ref
        else:
            # Invert for the first part: its length scales the offset, which
            # is unknown, so fall back to the canonical subtree length if the
            # spec carries one; otherwise the inversion has no closed form.
            ref = spec.param("ref_length")
            if ref is None:
                raise ConstraintError("relative_location: first slot needs ref_length")
            ref = float(ref)
            pb = _end_point(anchor, spec.param("end_b", "mid"))
            target = spec.param("end_a", "mid")
            cx, cy = pb[0] - dx * ref, pb[1] - dy * ref
            half = w * ref
        sx = f"x_{target}" if target != "mid" else "x_mid"
        sy = f"y_{target}" if target != "mid" else "y_mid"
        return Constraint(intervals={sx: (cx - half, cx + half),
                                     sy: (cy - half, cy + half)})
    if kind == "parallelism":
        if anchor is None:
            raise ConstraintError("parallelism: anchor part unbound")
        half = float(spec.param("angle", 0.0)) + HALF_WIDTH * _tol(spec)
        return Constraint(orientation=(float(anchor["orientation"]), min(half, 90.0)))
    if kind == "length_ratio":
        if anchor is None:
            raise ConstraintError("length_ratio: anchor part unbound")
        ratio = float(spec.param("ratio", 1.0))
        w = HALF_WIDTH * _tol(spec)
        length = float(anchor["length"])
        if slot == 0:
            lo, hi = (ratio - w) * length, (ratio + w) * length
        else:
            lo_r, hi_r = max(ratio - w, 1e-9), ratio + w
            lo, hi = length / hi_r, length / lo_r
        return Constraint(intervals={"length": (max(lo, 0.0), hi)})
    if kind in ("precedence", "time_gap"):
        if anchor is None:
            raise ConstraintError(f"{kind}: anchor part unbound")
        t = float(anchor["t"])
        gap = float(spec.param("gap", 0.0))
        w = HALF_WIDTH * _tol(spec)
        sign = 1.0 if slot == 1 else -1.0
        if kind == "precedence":
            lo, hi = t + sign * gap - w, t + sign * gap + w
        else:
            # |t_b - t_a| near gap: hull of the two symmetric intervals.
            lo, hi = t - gap - w, t + gap + w
        return Constraint(intervals={"t": (lo, hi)})
    if kind == "label_match":
        labels = {spec.param("target")} | set(spec.param("accept", {}))
        return Constraint(labels=frozenset(labels))
    raise ConstraintError(f"{spec.kind} has no invertible form for this slot")


def _conjunction_strength(spec: ScorerSpec, views, slot: int) -> float:
    """Best achievable conjunction score inside the intersected window.

    Children touching the open slot can reach 1.0 at their window centers;
    fully bound children are already fixed at their actual scores.
    """
    log_sum = 0.0
    total = 0.0
    for slots, weight, child in conjunction_children(spec):
        if slot in slots:
            total += weight
            continue
        sub_views = [views[s] for s in slots]
        if any(v is None for v in sub_views):
            continue
        score = _simple_score(child, sub_views)
        if score <= 0.0:
            return 0.0
        total += weight
        log_sum += weight * math.log(score)
    return math.exp(log_sum / total) if total > 0 else 1.0


def _intersect(pieces: Sequence[Constraint], strength: float) -> Constraint:
    intervals: dict[str, tuple[float, float]] = {}
    orientation = None
    labels: frozenset[str] | None = None
    for piece in pieces:
        for feature, (lo, hi) in piece.intervals.items():
            if feature in intervals:
                plo, phi = intervals[feature]
                intervals[feature] = (max(plo, lo), min(phi, hi))
            else:
                intervals[feature] = (lo, hi)
        if piece.orientation is not None:
            orientation = piece.orientation if orientation is None else (
                orientation if orientation[1] <= piece.orientation[1] else piece.orientation)
        if piece.labels is not None:
            labels = piece.labels if labels is None else labels & piece.labels
    return Constraint(intervals=intervals, orientation=orientation,
                      labels=labels, strength=strength)


# --- (de)serialisation --------------------------------------------------------

def scorer_to_dict(spec: ScorerSpec) -> dict[str, Any]:
    params: dict[str, Any] = {}
    for key, value in spec.params.items():
        if key == "children":
            params[key] = [{"slots": list(c["slots"]), "weight": c["weight"],
                            "kind": c["kind"], "params": dict(c.get("params", {}))}
                           for c in value]
        elif isinstance(value, Mapping):
            params[key] = dict(value)
        else:
            params[key] = value
    return {"kind": spec.kind, "params": params}


def scorer_from_dict(doc: Mapping[str, Any]) -> ScorerSpec:
    unknown = set(doc) - {"kind", "params"}
    if unknown:
        raise ScorerSpecError(f"scorer document has unknown fields {sorted(unknown)}")
    if "kind" not in doc:
        raise ScorerSpecError("scorer document lacks 'kind'")
    params = doc.get("params", {})
    if not isinstance(params, Mapping):
        raise ScorerSpecError("scorer params must be an object")
    if doc["kind"] == "conjunction":
        children = params.get("children", [])
        for child in children:
            extra = set(child) - {"slots", "weight", "kind", "params"}
            if extra:
                raise ScorerSpecError(f"conjunction child has unknown fields {sorted(extra)}")
    return ScorerSpec(kind=doc["kind"], params=dict(params))
