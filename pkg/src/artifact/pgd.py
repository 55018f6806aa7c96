"""Interpolated personalized gradient descent with robust aggregation of peer gradients.

Each honest client runs its own federated procedure: at every step it
collects the gradients of all honest clients at its current parameters,
receives ``f`` forged gradients, aggregates the ``n`` vectors with the
robust rule and takes a step on the interpolated objective followed by a
projection onto the parameter ball.

All honest clients are simulated together: parameters are stored as a
``(clients, dim)`` array and a single vectorized step advances every run.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .aggregation import AggregatorSpec, aggregate
from .attacks import AttackSpec, corrupt
from .numerics import RngStream, as_vector, project_ball_rows
from .tasks import LogisticTask, QuadraticTask, Task, constants, evaluate

DEFAULT_RADIUS = 100.0


@dataclass(frozen=True)
class PgdConfig:
    lam: float
    T: int
    eta: Optional[float] = None  # None: 1 / (2L)
    theta_radius: float = DEFAULT_RADIUS
    init: Union[str, Sequence[float]] = "zero"
    aggregator: AggregatorSpec = field(default_factory=AggregatorSpec)
    attack: AttackSpec = field(default_factory=AttackSpec)

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.eta is not None and not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if int(self.T) != self.T or self.T < 1:
            raise ValueError(f"T must be a positive integer, got {self.T}")
        if not self.theta_radius > 0:
            raise ValueError("theta_radius must be positive")

    def resolved_eta(self, task: Task) -> float:
        return self.eta if self.eta is not None else 1.0 / (2.0 * constants(task).L)


@dataclass(frozen=True)
class Trajectory:
    """Per-iteration record of one client's run, ``T + 1`` entries each.

    ``robust_agg_deviation[t]`` is ``||R^t - grad L_C(theta^{t-1})||`` and
    ``honest_spread[t]`` the mean squared distance of the honest gradients
    at ``theta^{t-1}`` to their average; both are NaN at ``t = 0`` and,
    for ``lambda = 0``, everywhere (no aggregation happens).
    """

    client: int
    lam: float
    eta: float
    thetas: np.ndarray
    interp_loss: np.ndarray
    local_grad_norm: np.ndarray
    robust_agg_deviation: np.ndarray
    honest_spread: np.ndarray
    boundary_flag: bool = False

    @property
    def final_theta(self) -> np.ndarray:
        return self.thetas[-1]

    def realized_kappa(self) -> float:
        """Largest Definition-1 ratio with U = honest clients seen along the run."""
        dev, spread = self.robust_agg_deviation[1:] ** 2, self.honest_spread[1:]
        ok = np.isfinite(dev)
        if not ok.any():
            return 0.0
        dev, spread = dev[ok], spread[ok]
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(spread > 0, dev / spread, np.where(dev > 0, np.inf, 0.0))
        return float(np.max(r))


def _initial(task: Task, cfg: PgdConfig, k: int) -> np.ndarray:
    if isinstance(cfg.init, str):
        if cfg.init != "zero":
            raise ValueError(f"unknown init {cfg.init!r}")
        return np.zeros((k, task.dim))
    theta0 = as_vector(cfg.init, "init")
    if theta0.size != task.dim:
        raise ValueError("init has the wrong dimension")
    return np.tile(theta0, (k, 1))


def _boundary(task: Task, clients: Sequence[int], lam: float, final: np.ndarray, radius: float) -> np.ndarray:
    if isinstance(task, QuadraticTask):
        mins = np.stack([task.interp_minimizer(i, lam) for i in clients])
    else:
        mins = final
    return np.linalg.norm(mins, axis=-1) >= 0.99 * radius


def run_batch(task: Task, clients: Sequence[int], cfg: PgdConfig, rng: RngStream) -> List[Trajectory]:
    """Advance the runs of several honest clients in lockstep."""
    clients = list(clients)
    for i in clients:
        if not 0 <= i < task.clients:
            raise IndexError(f"client {i} is not an honest client")
    k, h = len(clients), task.clients
    lam, T = cfg.lam, cfg.T
    eta = cfg.resolved_eta(task)
    attack = cfg.attack
    rows = np.arange(k)
    sel = np.asarray(clients)

    thetas = np.empty((T + 1, k, task.dim))
    loss = np.empty((T + 1, k))
    gnorm = np.empty((T + 1, k))
    dev = np.full((T + 1, k), np.nan)
    spread = np.full((T + 1, k), np.nan)

    theta = project_ball_rows(_initial(task, cfg, k), cfg.theta_radius)
    for t in range(T + 1):
        losses, grads = task.all_losses_grads(theta)
        local = grads[rows, sel]
        thetas[t] = theta
        loss[t] = (1.0 - lam) * losses[rows, sel] + lam * losses.mean(axis=1)
        gnorm[t] = np.linalg.norm(local, axis=-1)
        if t == T:
            break
        if lam == 0.0:
            step = local
        else:
            forged = corrupt(attack, grads, cfg.aggregator, rng.substream("attack", t))
            R = aggregate(cfg.aggregator, np.concatenate([grads, forged], axis=1))
            g_c = grads.mean(axis=1)
            dev[t + 1] = np.linalg.norm(R - g_c, axis=-1)
            spread[t + 1] = np.mean(np.sum((grads - g_c[:, None, :]) ** 2, axis=-1), axis=1)
            step = (1.0 - lam) * local + lam * R
        theta = project_ball_rows(theta - eta * step, cfg.theta_radius)

    flags = _boundary(task, clients, lam, thetas[-1], cfg.theta_radius)
    return [
        Trajectory(c, lam, eta, thetas[:, j].copy(), loss[:, j].copy(), gnorm[:, j].copy(),
                   dev[:, j].copy(), spread[:, j].copy(), bool(flags[j]))
        for j, c in enumerate(clients)
    ]


def run_client(task: Task, client_index: int, cfg: PgdConfig, rng: RngStream) -> Trajectory:
    return run_batch(task, [client_index], cfg, rng)[0]


def run_all(task: Task, cfg: PgdConfig, rng: RngStream) -> List[Trajectory]:
    """One independent run per honest client, all advanced together."""
    return run_batch(task, range(task.clients), cfg, rng)


def estimate_G(task: Task, thetas) -> float:
    """Largest root-mean-square deviation of honest gradients from their mean over ``thetas``."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    if thetas.shape[0] == 0:
        raise ValueError("need at least one theta")
    grads = task.all_grads(thetas)
    dev = grads - grads.mean(axis=1, keepdims=True)
    return float(np.sqrt(np.max(np.mean(np.sum(dev**2, axis=-1), axis=1))))


def interp_optimum(task: QuadraticTask, client_index: int, lam: float) -> float:
    """Minimum value of the interpolated quadratic loss."""
    theta = task.interp_minimizer(client_index, lam)
    return (1.0 - lam) * task.loss(client_index, theta) + lam * float(np.mean(task.all_losses(theta[None])[0]))


@dataclass(frozen=True)
class SweepRecord:
    lam: float
    client: int
    metrics: Dict[str, float]


def final_metrics(task: Task, traj: Trajectory) -> Dict[str, float]:
    """Metrics reported for the last iterate of a run."""
    out = {"interp_loss": float(traj.interp_loss[-1])}
    if isinstance(task, LogisticTask):
        test_loss, acc = evaluate(task, traj.client, traj.final_theta)
        out["test_loss"] = test_loss
        out["test_accuracy"] = acc
    else:
        out["suboptimality"] = float(traj.interp_loss[-1] - interp_optimum(task, traj.client, traj.lam))
    if traj.lam > 0.0:
        out["agg_deviation"] = float(traj.robust_agg_deviation[-1])
    return out


def lambda_sweep(task: Task, cfg_template: PgdConfig, lambdas: Sequence[float], rng: RngStream) -> List[SweepRecord]:
    """Run every honest client once per lambda and collect the final metrics."""
    records = []
    eta = cfg_template.resolved_eta(task)
    for lam in lambdas:
        cfg = replace(cfg_template, lam=float(lam), eta=eta)
        for traj in run_all(task, cfg, rng.substream("lambda", repr(float(lam)))):
            records.append(SweepRecord(float(lam), traj.client, final_metrics(task, traj)))
    return records


def summarize_sweep(records: Sequence[SweepRecord]) -> Dict[float, Dict[str, tuple]]:
    """Mean and standard error of each metric per lambda, over clients (and seeds when concatenated)."""
    grouped: Dict[float, Dict[str, list]] = {}
    for r in records:
        for name, value in r.metrics.items():
            grouped.setdefault(r.lam, {}).setdefault(name, []).append(value)
    out = {}
    for lam in sorted(grouped):
        out[lam] = {}
        for name, vals in grouped[lam].items():
            v = np.asarray(vals)
            se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
            out[lam][name] = (float(v.mean()), se)
    return out
