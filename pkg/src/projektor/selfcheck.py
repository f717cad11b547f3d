"""Randomised cross-check of the beam search against the exhaustive oracle.

Instances are deliberately tiny so the oracle can enumerate every mapping.
With the admission thresholds opened up and a beam wider than the whole
combination space, the search is exhaustive too and the scores must agree
to within float noise.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .inference import BeamConfig, brute_force_oracle, interpret
from .model import DataSet, Datum, Element, Level, Model
from .scorers import ScorerSpec

WIDE_CFG = BeamConfig(beam_width=4096, tau_leaf=0.0, tau_proj=0.0,
                      max_rounds=3, seed=0)
CORRUPT_CFG = BeamConfig(beam_width=1, tau_leaf=0.95, tau_proj=0.95,
                         max_rounds=0, seed=0)


@dataclass(frozen=True)
class OracleMismatch:
    index: int
    seed: int
    beam_score: float
    oracle_score: float


def _random_geometry_scorer(rng: random.Random) -> ScorerSpec:
    kind = ("relative_location", "parallelism", "length_ratio",
            "smooth_continuation")[rng.randrange(4)]
    if kind == "relative_location":
        return ScorerSpec(kind, {"end_a": "mid", "end_b": "mid",
                                 "dx": rng.uniform(-1.0, 1.0),
                                 "dy": rng.uniform(-1.0, 1.0),
                                 "tol": rng.uniform(0.2, 0.6)})
    if kind == "parallelism":
        return ScorerSpec(kind, {"angle": rng.choice([0.0, 45.0, 90.0]),
                                 "tol": rng.uniform(8.0, 25.0)})
    if kind == "length_ratio":
        return ScorerSpec(kind, {"ratio": rng.uniform(0.5, 2.0),
                                 "tol": rng.uniform(0.2, 0.6)})
    return ScorerSpec(kind, {"gap": 0.0, "tol_gap": rng.uniform(0.1, 0.4),
                             "angle": rng.choice([0.0, 45.0]),
                             "tol_angle": rng.uniform(8.0, 25.0),
                             "span": 1.0, "tol_span": rng.uniform(0.1, 0.4)})


def random_small_instance(seed: int) -> tuple[Model, DataSet]:
    """A random 3-level model (<= 4 leaves) and random segment data (<= 6)."""
    rng = random.Random(seed)
    n_pairs = rng.choice([1, 2])
    leaves = []
    mids = []
    for i in range(n_pairs):
        pair = (Element(id=f"l{2 * i}"), Element(id=f"l{2 * i + 1}"))
        leaves.extend(pair)
        mids.append(Element(id=f"m{i}", parts=(pair[0].id, pair[1].id),
                            scorer=_random_geometry_scorer(rng)))
    if len(mids) == 1:
        # Two levels: the single relation element is the top.
        model = Model(name=f"toy{seed}", levels=(
            Level(index=1, elements=tuple(leaves)),
            Level(index=2, elements=(mids[0],)),
        ))
    else:
        top = Element(id="top", parts=tuple(m.id for m in mids),
                      scorer=_random_geometry_scorer(rng))
        model = Model(name=f"toy{seed}", levels=(
            Level(index=1, elements=tuple(leaves)),
            Level(index=2, elements=tuple(mids)),
            Level(index=3, elements=(top,)),
        ))
    n_data = rng.randrange(3, 7)
    data = tuple(
        Datum(id=f"d{k}",
              payload={"x": rng.uniform(0, 8), "y": rng.uniform(0, 8),
                       "orientation": rng.uniform(0, 180),
                       "length": rng.uniform(0.5, 3.0)},
              confidence=round(rng.uniform(0.05, 1.0), 3))
        for k in range(n_data))
    return model, DataSet(domain="glyph", data=data)


def oracle_check(instances: int, seed: int,
                 corrupt: bool = False) -> tuple[int, list[OracleMismatch]]:
    """Compare interpret (wide beam) against the oracle on random instances.

    `corrupt` swaps in a crippled search configuration as a negative control:
    the check must then report mismatches.
    """
    cfg = CORRUPT_CFG if corrupt else WIDE_CFG
    mismatches = []
    for i in range(instances):
        model, dataset = random_small_instance(seed + i)
        beam = interpret(model, dataset, cfg)
        oracle = brute_force_oracle(model, dataset)
        if abs(beam.score - oracle.score) > 1e-9:
            mismatches.append(OracleMismatch(index=i, seed=seed + i,
                                             beam_score=beam.score,
                                             oracle_score=oracle.score))
    return instances, mismatches
