"""Federated mean estimation with adversaries and interpolated personal estimates."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .aggregation import AggregatorSpec, aggregate
from .attacks import AttackSpec, corrupt
from .numerics import RngLike, RngStream, as_vector, stack_vectors

DEFAULT_LAMBDAS = tuple(round(0.05 * k, 2) for k in range(21))


@dataclass(frozen=True)
class GaussianPopulation:
    """``n - f`` honest clients with means ``N(base_mean, sigma_h^2 I)``, each holding ``m`` points ``N(mu_i, sigma^2 I)``."""

    n: int
    f: int
    m: int
    d: int = 1
    sigma: float = 15.0
    sigma_h: float = 2.0
    base_mean: float = 10.0

    def __post_init__(self):
        if self.f < 0 or not 2 * self.f < self.n:
            raise ValueError(f"require 0 <= f < n/2, got n={self.n}, f={self.f}")
        if self.m < 1 or self.d < 1:
            raise ValueError("m and d must be >= 1")
        if self.sigma < 0 or self.sigma_h < 0:
            raise ValueError("sigma and sigma_h must be nonnegative")

    @property
    def honest(self) -> int:
        return self.n - self.f

    @property
    def total_variance(self) -> float:
        """E||y - mu_i||^2 for a single data point."""
        return self.d * self.sigma**2

    def heterogeneity_plugin(self) -> float:
        """Expected ||mu_i - mean(mu)||^2, used for both het_i and Delta^2."""
        return (1.0 - 1.0 / self.honest) * self.sigma_h**2 * self.d


@dataclass(frozen=True)
class MeanTrialResult:
    lam: float
    squared_error: float
    client_index: int
    trial: int
    master_seed: int
    stream_id: int


def draw_population(pop: GaussianPopulation, rng: RngLike) -> Tuple[np.ndarray, np.ndarray]:
    """Return ``(true_means, sample_means)``, both of shape ``(n - f, d)``."""
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    h, d = pop.honest, pop.d
    mu = pop.base_mean + pop.sigma_h * gen.standard_normal((h, d))
    samples = mu[:, None, :] + pop.sigma * gen.standard_normal((h, pop.m, d))
    return mu, samples.mean(axis=1)


def interpolated_estimate(lam: float, local, all_submitted, spec: AggregatorSpec) -> np.ndarray:
    """``(1 - lam) * local + lam * F(all_submitted)``."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    local = as_vector(local, "local")
    if lam == 0.0:
        return local
    return (1.0 - lam) * local + lam * aggregate(spec, stack_vectors(all_submitted))


def run_mse_sweep(
    pop: GaussianPopulation,
    lambdas: Sequence[float],
    spec: AggregatorSpec,
    attack: AttackSpec,
    trials: int,
    rng: RngStream,
    clients: str = "designated",
    trial_offset: int = 0,
) -> List[MeanTrialResult]:
    """Squared error of the interpolated estimate for every (trial, lambda).

    One population is drawn per trial and shared by every lambda, so the
    curves over lambda use common random numbers. ``clients="designated"``
    reports honest client 0 only; ``"all"`` reports every honest client.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    lambdas = [float(x) for x in lambdas]
    if not lambdas or any(not 0.0 <= x <= 1.0 for x in lambdas):
        raise ValueError("lambda grid must be nonempty and inside [0, 1]")
    if clients not in ("designated", "all"):
        raise ValueError(f"clients must be 'designated' or 'all', got {clients!r}")
    attack = attack.with_f(pop.f)
    out = []
    for trial in range(trial_offset, trial_offset + trials):
        stream = rng.substream("mean_est", trial)
        mu, yhat = draw_population(pop, stream)
        forged = corrupt(attack, yhat, spec, stream.substream("attack"))
        agg = aggregate(spec, np.concatenate([yhat, forged]))
        idx = [0] if clients == "designated" else range(pop.honest)
        for lam in lambdas:
            est = (1.0 - lam) * yhat + lam * agg
            for i in idx:
                err = float(np.sum((est[i] - mu[i]) ** 2))
                out.append(MeanTrialResult(lam, err, i, trial, rng.master_seed, stream.stream_id))
    return out


def error_curve(results: Sequence[MeanTrialResult]) -> Dict[float, Tuple[float, float]]:
    """Mean and standard error of the squared error per lambda."""
    by_lam: Dict[float, list] = {}
    for r in results:
        by_lam.setdefault(r.lam, []).append(r.squared_error)
    curve = {}
    for lam in sorted(by_lam):
        vals = np.asarray(by_lam[lam])
        se = vals.std(ddof=1) / np.sqrt(vals.size) if vals.size > 1 else 0.0
        curve[lam] = (float(vals.mean()), float(se))
    return curve


def gamma(lam: float, kappa: float, honest: int) -> float:
    if honest <= 1:
        raise ValueError("need at least two honest clients")
    return lam**2 * (kappa + 1.0) - 2.0 * lam + honest / (honest - 1.0)


def prop1_bound(lam: float, kappa: float, pop: GaussianPopulation, het_i: float, delta_sq: float) -> float:
    """Upper bound on E||y_i^lam - mu_i||^2 for an (f, kappa)-robust aggregator."""
    h = pop.honest
    if h <= 1:
        raise ValueError("bound undefined when n - f <= 1")
    variance = (1.0 - 1.0 / h) * pop.total_variance * gamma(lam, kappa, h) / pop.m
    return 3.0 * variance + 3.0 * lam**2 * (het_i + kappa * delta_sq)


def lambda_star_mean(pop: GaussianPopulation, kappa: float, het_i: float, delta_sq: float) -> float:
    """Minimizer of the mean-estimation bound over lambda, clamped to [0, 1].

    With no noise and no heterogeneity every lambda is optimal; 1 is returned.
    """
    h = pop.honest
    if h <= 1:
        raise ValueError("undefined when n - f <= 1")
    noise = (1.0 - 1.0 / h) * pop.total_variance / pop.m
    denom = (kappa + 1.0) * noise + het_i + kappa * delta_sq
    if denom <= 0.0:
        return 1.0
    return float(min(1.0, max(0.0, noise / denom)))
