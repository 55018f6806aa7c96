"""Byzantine behaviours: map the honest vectors of one round to ``f`` forged ones.

Every attack is omniscient and colluding: the adversaries see all honest
vectors (and the aggregator) and all send the same vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .aggregation import AggregatorSpec, aggregate
from .numerics import RngStream, stack_vectors

ATTACK_KINDS = ("none", "sign_flip", "foe", "auto_foe")

DEFAULT_FOE_GRID = (0.1, 0.5, 1.0, 2.0, 5.0, 10.0)


@dataclass(frozen=True)
class AttackSpec:
    kind: str = "none"
    f: int = 0
    tau: float = 1.0
    epsilon: float = 1.0
    grid: Tuple[float, ...] = field(default=DEFAULT_FOE_GRID)

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack {self.kind!r}; expected one of {ATTACK_KINDS}")
        if int(self.f) != self.f or self.f < 0:
            raise ValueError(f"f must be a nonnegative integer, got {self.f}")
        grid = tuple(float(g) for g in self.grid)
        if self.kind == "auto_foe" and not grid:
            raise ValueError("auto_foe needs a nonempty epsilon grid")
        if not all(np.isfinite(grid)):
            raise ValueError("auto_foe grid must be finite")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "f", int(self.f))

    def with_f(self, f: int) -> "AttackSpec":
        return AttackSpec(self.kind, f, self.tau, self.epsilon, self.grid)


def auto_foe_epsilon(honest, f: int, aggregator: AggregatorSpec, grid) -> np.ndarray:
    """Pick, per batch entry, the epsilon in ``grid`` that moves the aggregate furthest.

    Ties go to the smaller epsilon. ``honest`` has shape ``(..., h, d)``;
    returns an array of shape ``honest.shape[:-2]``.
    """
    honest = np.asarray(honest, dtype=np.float64)
    mean = honest.mean(axis=-2)
    best_eps = None
    best_damage = None
    for eps in sorted(set(grid)):
        bad = np.broadcast_to((-eps * mean)[..., None, :], mean.shape[:-1] + (f, mean.shape[-1]))
        agg = aggregate(aggregator.with_f(f), np.concatenate([honest, bad], axis=-2))
        damage = np.linalg.norm(agg - mean, axis=-1)
        if best_eps is None:
            best_eps = np.full(damage.shape, eps)
            best_damage = damage
        else:
            better = damage > best_damage
            best_eps = np.where(better, eps, best_eps)
            best_damage = np.where(better, damage, best_damage)
    return best_eps


def corrupt(
    spec: AttackSpec,
    honest,
    aggregator: AggregatorSpec,
    rng: Optional[RngStream] = None,
) -> np.ndarray:
    """Return the ``f`` vectors the adversaries submit, shape ``(..., f, d)``.

    ``honest`` may carry leading batch axes; each batch entry is attacked
    independently. ``rng`` is accepted for randomized attacks; none of the
    current kinds draw from it.
    """
    if isinstance(honest, np.ndarray) and honest.ndim >= 2:
        honest = np.asarray(honest, dtype=np.float64)
    else:
        honest = stack_vectors(honest, "honest")
    if not np.all(np.isfinite(honest)):
        raise ValueError("honest vectors must be finite")
    f = spec.f
    mean = honest.mean(axis=-2)
    out_shape = mean.shape[:-1] + (f, mean.shape[-1])
    if f == 0:
        return np.zeros(out_shape)
    if spec.kind == "auto_foe":
        eps = auto_foe_epsilon(honest, f, aggregator, spec.grid)
        forged = -eps[..., None] * mean
    else:
        scale = {"none": 1.0, "sign_flip": -spec.tau, "foe": -spec.epsilon}[spec.kind]
        forged = scale * mean
    return np.broadcast_to(forged[..., None, :], out_shape).copy()
