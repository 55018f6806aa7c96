"""Robust aggregation rules and (f, kappa)-robustness measurement.

All rules accept an array of shape ``(..., n, d)`` and reduce over the
``n`` axis, so a batch of independent aggregation problems (one per client,
one per trial) is handled in a single call.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .numerics import RngStream, stack_vectors

BASE_KINDS = ("average", "coordinate_median", "trimmed_mean")

_ALIASES = {
    "avg": "average",
    "mean": "average",
    "average": "average",
    "median": "coordinate_median",
    "cwmed": "coordinate_median",
    "coordinate_median": "coordinate_median",
    "tm": "trimmed_mean",
    "trimmed_mean": "trimmed_mean",
}

# Largest number of subsets U that empirical_kappa will enumerate per trial.
SUBSET_BUDGET = 10**6


@dataclass(frozen=True)
class AggregatorSpec:
    """A base rule, optionally preceded by nearest-neighbor mixing (NNM)."""

    kind: str = "average"
    f: int = 0
    nnm: bool = False

    def __post_init__(self):
        if self.kind not in BASE_KINDS:
            raise ValueError(f"unknown aggregator kind {self.kind!r}; expected one of {BASE_KINDS}")
        if int(self.f) != self.f or self.f < 0:
            raise ValueError(f"f must be a nonnegative integer, got {self.f}")
        object.__setattr__(self, "f", int(self.f))

    @classmethod
    def parse(cls, name: str, f: int = 0) -> "AggregatorSpec":
        """Build a spec from names like ``"tm"``, ``"nnm-tm"`` or ``"nnm+trimmed_mean"``."""
        key = name.strip().lower()
        nnm = False
        for prefix in ("nnm+", "nnm-", "nnm_then_", "nnm_"):
            if key.startswith(prefix):
                nnm, key = True, key[len(prefix):]
                break
        if key.startswith("nnm"):
            raise ValueError("NNM may not wrap another NNM")
        if key not in _ALIASES:
            raise ValueError(f"unknown aggregator {name!r}")
        return cls(_ALIASES[key], f, nnm)

    @property
    def name(self) -> str:
        return f"nnm+{self.kind}" if self.nnm else self.kind

    def with_f(self, f: int) -> "AggregatorSpec":
        return AggregatorSpec(self.kind, f, self.nnm)


def _as_batch(vs) -> np.ndarray:
    if isinstance(vs, np.ndarray) and vs.ndim >= 2:
        arr = np.asarray(vs, dtype=np.float64)
    else:
        arr = stack_vectors(vs)
    if arr.shape[-2] == 0:
        raise ValueError("cannot aggregate an empty set of vectors")
    return arr


def nnm(vs, f: int) -> np.ndarray:
    """Replace every input by the mean of its ``n - f`` nearest inputs (itself included).

    Distance ties go to the lower original index.
    """
    arr = _as_batch(vs)
    n = arr.shape[-2]
    if f == 0:
        return np.broadcast_to(arr.mean(axis=-2, keepdims=True), arr.shape).copy()
    sq = np.sum(arr**2, axis=-1)
    gram = arr @ np.swapaxes(arr, -1, -2)
    dist = sq[..., :, None] + sq[..., None, :] - 2.0 * gram
    dist = np.maximum(dist, 0.0)
    # the Gram expansion is not exactly zero on the diagonal
    idx = np.arange(n)
    dist[..., idx, idx] = 0.0
    order = np.argsort(dist, axis=-1, kind="stable")[..., : n - f]
    weights = np.zeros(dist.shape)
    np.put_along_axis(weights, order, 1.0 / (n - f), axis=-1)
    return weights @ arr


def _trimmed_mean(arr: np.ndarray, f: int) -> np.ndarray:
    n = arr.shape[-2]
    if n - 2 * f < 1:
        raise ValueError(f"trimmed mean needs n - 2f >= 1, got n={n}, f={f}")
    if f == 0:
        return arr.mean(axis=-2)
    s = np.sort(arr, axis=-2)
    return s[..., f : n - f, :].mean(axis=-2)


def aggregate(spec: AggregatorSpec, vs) -> np.ndarray:
    """Apply ``spec`` over the second-to-last axis of ``vs``."""
    arr = _as_batch(vs)
    n = arr.shape[-2]
    if spec.f > 0 and not 2 * spec.f < n:
        raise ValueError(f"require f < n/2, got n={n}, f={spec.f}")
    if spec.nnm:
        arr = nnm(arr, spec.f)
    if spec.kind == "average":
        return arr.mean(axis=-2)
    if spec.kind == "coordinate_median":
        return np.median(arr, axis=-2)
    return _trimmed_mean(arr, spec.f)


def theoretical_kappa(n: int, f: int) -> float:
    """Plug-in robustness constant ``f / (n - 2f)``."""
    if n - 2 * f < 1:
        raise ValueError(f"theoretical kappa needs n - 2f >= 1, got n={n}, f={f}")
    return f / (n - 2 * f)


@dataclass(frozen=True)
class KappaEstimate:
    empirical_kappa: float
    theoretical_kappa: float
    n: int
    f: int
    d: int
    trials: int


def kappa_ratios(F: np.ndarray, vs: np.ndarray, f: int) -> np.ndarray:
    """Definition-1 ratio for every subset of size ``n - f``.

    Returns one ratio per subset; 0/0 counts as 0 and x/0 with x > 0 as inf.
    """
    vs = np.asarray(vs, dtype=np.float64)
    n = vs.shape[0]
    subsets = _subsets(n, f)
    members = vs[subsets]  # (S, n-f, d)
    centers = members.mean(axis=1)
    num = np.sum((F[None, :] - centers) ** 2, axis=-1)
    den = np.mean(np.sum((members - centers[:, None, :]) ** 2, axis=-1), axis=1)
    return _safe_ratio(num, den)


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    # floating noise below this scale is treated as an exact zero
    tiny = 1e-24 * max(1.0, float(np.max(num, initial=0.0)), float(np.max(den, initial=0.0)))
    out = np.zeros_like(num)
    pos_den = den > tiny
    out[pos_den] = num[pos_den] / den[pos_den]
    out[~pos_den & (num > tiny)] = np.inf
    return out


def _subsets(n: int, f: int) -> np.ndarray:
    count = math.comb(n, f)
    if count > SUBSET_BUDGET:
        raise ValueError(
            f"C({n}, {f}) = {count} subsets exceeds the budget of {SUBSET_BUDGET}; reduce n"
        )
    return np.array(list(itertools.combinations(range(n), n - f)), dtype=np.intp).reshape(count, n - f)


def empirical_kappa(
    spec: AggregatorSpec,
    n: int,
    f: int,
    d: int,
    trials: int,
    magnitude: float,
    rng: RngStream,
) -> KappaEstimate:
    """Largest Definition-1 ratio found over random inputs and all subsets.

    Each trial draws ``n - f`` standard Gaussian vectors and ``f`` colluding
    outliers ``magnitude * r_k * u`` (shared unit direction ``u``, radii
    ``r_k`` uniform in [0, 1]). The draws do not depend on ``magnitude``, so
    two calls with the same stream differ only by the outlier scale. The
    result is a lower estimate of the true constant.
    """
    if not 2 * f < n:
        raise ValueError(f"require f < n/2, got n={n}, f={f}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not magnitude > 0:
        raise ValueError("magnitude must be positive")
    _subsets(n, f)  # fail fast on the budget
    worst = 0.0
    for trial in range(trials):
        gen = rng.substream("kappa", trial).generator()
        honest = gen.standard_normal((n - f, d))
        direction = gen.standard_normal(d)
        direction /= np.linalg.norm(direction)
        radii = gen.random(f)
        bad = magnitude * radii[:, None] * direction[None, :]
        vs = np.concatenate([honest, bad])
        F = aggregate(spec.with_f(f), vs)
        worst = max(worst, float(np.max(kappa_ratios(F, vs, f))))
    return KappaEstimate(worst, theoretical_kappa(n, f), n, f, d, trials)
