"""Closed-form optimization, generalization and collaboration-level predictors.

Everything here is a pure function of :class:`TheoryInputs`; the plug-in
helpers at the bottom estimate those inputs from a concrete task.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .tasks import LogisticTask, zero_one_risk


@dataclass(frozen=True)
class TheoryInputs:
    L: float
    mu: float
    G: float
    kappa: float
    pdim: int
    m: int
    n: int
    f: int
    delta: float = 0.05
    phi: float = 0.0
    L0: float = 0.0
    T: int = 1

    def __post_init__(self):
        if not (self.L >= self.mu > 0):
            raise ValueError(f"need L >= mu > 0, got L={self.L}, mu={self.mu}")
        if not 0 <= 2 * self.f < self.n:
            raise ValueError(f"require 0 <= f < n/2, got n={self.n}, f={self.f}")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.G < 0 or self.kappa < 0 or self.phi < 0 or self.L0 < 0:
            raise ValueError("G, kappa, phi and L0 must be nonnegative")
        if self.pdim < 1 or self.m < 1 or self.T < 1:
            raise ValueError("pdim, m and T must be positive")

    @property
    def honest(self) -> int:
        return self.n - self.f

    @property
    def beta(self) -> float:
        # ln(e m / pdim) drops below 1 once pdim > m; clamp it there
        log_term = max(1.0, math.log(math.e * self.m / self.pdim))
        return math.sqrt(self.pdim * log_term) + math.sqrt(math.log(1.0 / self.delta))


def lemma1_rhs(inp: TheoryInputs, lam: float) -> float:
    """Optimization error after ``T`` steps with step size 1/(2L)."""
    asymptote = 5.0 * inp.L * lam**2 * inp.kappa * inp.G**2 / inp.mu**2
    transient = (1.0 - inp.mu / (2.0 * inp.L)) ** inp.T * (inp.L / inp.mu) * inp.L0
    return asymptote + transient


def lemma2_gap(inp: TheoryInputs, lam: float) -> float:
    h = inp.honest
    inner = (1.0 - lam + lam / h) ** 2 / inp.m + lam**2 / (inp.m * h)
    return 2.0 * inp.beta * math.sqrt(inner)


def theorem1_rhs(inp: TheoryInputs, lam: float) -> float:
    """Excess true risk bound: optimization error + 2 lam Phi + twice the generalization gap."""
    return lemma1_rhs(inp, lam) + 2.0 * lam * inp.phi + 2.0 * lemma2_gap(inp, lam)


class LambdaStar(NamedTuple):
    value: float
    regime: str  # "interior", "clamped", or "no_adversary_or_dissimilarity"


def lambda_star_class(inp: TheoryInputs) -> LambdaStar:
    """``(sqrt(pdim/m) - phi) / ((f/n) G^2)`` projected onto [0, 1].

    The denominator vanishes without adversaries or gradient dissimilarity;
    the ratio then diverges and 1 is returned with a regime flag.
    """
    num = math.sqrt(inp.pdim / inp.m) - inp.phi
    denom = (inp.f / inp.n) * inp.G**2
    if denom == 0.0:
        if num <= 0.0:
            return LambdaStar(0.0, "clamped")
        return LambdaStar(1.0, "no_adversary_or_dissimilarity")
    raw = num / denom
    clamped = min(1.0, max(0.0, raw))
    return LambdaStar(clamped, "interior" if clamped == raw else "clamped")


def lambda_star_grid(inp: TheoryInputs, step: float = 1e-3) -> float:
    """Exact minimizer of :func:`theorem1_rhs` on a uniform grid over [0, 1]."""
    grid = np.linspace(0.0, 1.0, int(round(1.0 / step)) + 1)
    values = [theorem1_rhs(inp, float(lam)) for lam in grid]
    return float(grid[int(np.argmin(values))])


@dataclass(frozen=True)
class DiscrepancyEstimate:
    value: float
    client: int
    probes: int
    label: str = "lower-bound plug-in (max held-out 0-1 risk gap over probes)"


def discrepancy_proxy(task: LogisticTask, client_index: int, probe_thetas: Sequence) -> DiscrepancyEstimate:
    """Largest gap between client ``i``'s held-out 0-1 risk and the honest average.

    Only a finite set of parameters is probed, so this under-estimates any
    uniform discrepancy bound.
    """
    probes = np.atleast_2d(np.asarray(probe_thetas, dtype=np.float64))
    if probes.shape[0] == 0:
        raise ValueError("need at least one probe theta")
    if not 0 <= client_index < task.clients:
        raise IndexError(f"unknown client {client_index}")
    risks = zero_one_risk(task, probes)
    gaps = np.abs(risks[:, client_index] - risks.mean(axis=1))
    return DiscrepancyEstimate(float(gaps.max()), client_index, probes.shape[0])
