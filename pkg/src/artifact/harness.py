"""Scenario orchestration: split a scenario into independent cells, run them, collect rows.

A cell is one trial (mean estimation) or one (trial, lambda) pair
(classification). Each cell derives its randomness from the master seed
and its own coordinates only, so results do not depend on the number of
workers or on completion order; rows are sorted before they are returned.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .aggregation import AggregatorSpec, theoretical_kappa
from .attacks import AttackSpec
from .config import ScenarioConfig
from .mean_estimation import run_mse_sweep
from .numerics import RngStream
from .pgd import PgdConfig, estimate_G, final_metrics, run_all
from .tasks import LogisticTask, constants, make_logistic_task, make_quadratic_task
from .theory import TheoryInputs, discrepancy_proxy

ROW_FIELDS = (
    "run_id", "master_seed", "trial", "client_id", "lambda", "f", "n", "m",
    "sigma", "sigma_h", "alpha", "attack", "aggregator", "metric_name", "metric_value",
)


@dataclass(frozen=True)
class ResultRow:
    run_id: str
    master_seed: int
    trial: int
    client_id: int
    lam: float
    f: int
    n: int
    m: int
    sigma: float
    sigma_h: float
    alpha: float
    attack: str
    aggregator: str
    metric_name: str
    metric_value: float

    def sort_key(self):
        return (self.run_id, self.trial, self.lam, self.client_id, self.metric_name)


def run_id(cfg: ScenarioConfig, master_seed: int) -> str:
    blob = json.dumps({**cfg.to_dict(), "output_dir": None}, sort_keys=True) + f"|{master_seed}"
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _row(cfg: ScenarioConfig, rid: str, seed: int, trial: int, client: int, lam: float,
         name: str, value: float) -> ResultRow:
    return ResultRow(rid, seed, trial, client, float(lam), cfg.f, cfg.n, cfg.m, cfg.sigma,
                     cfg.sigma_h, cfg.alpha, cfg.attack, cfg.aggregator_spec().name, name, float(value))


def build_task(cfg: ScenarioConfig, rng: RngStream, trial: int):
    stream = rng.substream("task", trial)
    if cfg.task == "quadratic":
        return make_quadratic_task(cfg.n - cfg.f, cfg.d, cfg.center_spread, stream)
    return make_logistic_task(cfg.n, cfg.f, cfg.m, cfg.d, cfg.alpha, cfg.class_sep, cfg.ridge, stream)


def pgd_config(cfg: ScenarioConfig, lam: float) -> PgdConfig:
    return PgdConfig(lam=float(lam), T=cfg.T, eta=cfg.resolved_eta(), theta_radius=cfg.theta_radius,
                     aggregator=cfg.aggregator_spec(), attack=cfg.attack_spec())


def _mean_cell(args) -> List[ResultRow]:
    cfg, seed, trial, rid = args
    rng = RngStream(seed)
    results = run_mse_sweep(cfg.population(), cfg.lambdas, cfg.aggregator_spec(), cfg.attack_spec(),
                            1, rng, clients=cfg.clients, trial_offset=trial)
    return [_row(cfg, rid, seed, r.trial, r.client_index, r.lam, "squared_error", r.squared_error)
            for r in results]


def _classify_cell(args) -> List[ResultRow]:
    cfg, seed, trial, lam, rid = args
    rng = RngStream(seed)
    task = build_task(cfg, rng, trial)
    trajs = run_all(task, pgd_config(cfg, lam), rng.substream("pgd", trial, repr(float(lam))))
    rows = []
    for traj in trajs:
        for name, value in sorted(final_metrics(task, traj).items()):
            rows.append(_row(cfg, rid, seed, trial, traj.client, lam, name, value))
    return rows


def _cells(cfg: ScenarioConfig, master_seed: int):
    rid = run_id(cfg, master_seed)
    if cfg.experiment == "mean_est":
        return _mean_cell, [(cfg, master_seed, t, rid) for t in range(cfg.trials)]
    return _classify_cell, [(cfg, master_seed, t, lam, rid) for t in range(cfg.trials) for lam in cfg.lambdas]


def _execute(jobs: Sequence[Tuple], workers: int) -> List[ResultRow]:
    rows: List[ResultRow] = []
    if workers <= 1 or len(jobs) <= 1:
        for fn, args in jobs:
            rows.extend(fn(args))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(fn, args) for fn, args in jobs]
            for fut in futures:
                rows.extend(fut.result())
    rows.sort(key=ResultRow.sort_key)
    return rows


def run_scenario(cfg: ScenarioConfig, master_seed: int, workers: int = 1) -> List[ResultRow]:
    """Run one scenario (ignoring ``vary``) and return rows in canonical order."""
    fn, cells = _cells(replace(cfg, vary={}), master_seed)
    try:
        return _execute([(fn, c) for c in cells], workers)
    except Exception as exc:
        raise RuntimeError(f"scenario {cfg.experiment} (seed {master_seed}) failed: {exc}") from exc


def run_suite(cfg: ScenarioConfig, master_seed: int, workers: int = 1) -> List[ResultRow]:
    """Run every cell of the ``vary`` grid; rows sorted by (run, trial, lambda, client)."""
    jobs = []
    for cell in cfg.expand():
        fn, cells = _cells(cell, master_seed)
        jobs.extend((fn, c) for c in cells)
    try:
        return _execute(jobs, workers)
    except Exception as exc:
        raise RuntimeError(f"suite {cfg.experiment} (seed {master_seed}) failed: {exc}") from exc


def series_key(row: ResultRow) -> Tuple:
    return (row.n, row.f, row.m, row.sigma, row.sigma_h, row.alpha, row.attack, row.aggregator)


def series_label(key: Tuple) -> str:
    n, f, m, sigma, sigma_h, alpha, attack, agg = key
    return f"n={n} f={f} m={m} sigma={sigma:g} sigma_h={sigma_h:g} alpha={alpha:g}"


def summarize(rows: Sequence[ResultRow]) -> Dict[str, Dict[Tuple, Dict[float, Tuple[float, float, int]]]]:
    """``metric -> series -> lambda -> (mean, standard error, count)``.

    Values are averaged over trials and clients; the standard error is
    taken over the per-trial means so that clients of one trial are not
    counted as independent replicates.
    """
    groups: Dict[str, Dict[Tuple, Dict[float, Dict[int, list]]]] = {}
    for r in rows:
        (groups.setdefault(r.metric_name, {}).setdefault(series_key(r), {})
         .setdefault(r.lam, {}).setdefault(r.trial, []).append(r.metric_value))
    out: Dict[str, Dict[Tuple, Dict[float, Tuple[float, float, int]]]] = {}
    for metric, series in groups.items():
        out[metric] = {}
        for key, by_lam in series.items():
            out[metric][key] = {}
            for lam in sorted(by_lam):
                trial_means = np.array([np.mean(v) for _, v in sorted(by_lam[lam].items())])
                mean = float(np.mean(trial_means))
                se = float(trial_means.std(ddof=1) / math.sqrt(trial_means.size)) if trial_means.size > 1 else 0.0
                out[metric][key][lam] = (mean, se, int(trial_means.size))
    return out


def classification_plugins(cfg: ScenarioConfig, master_seed: int, client: int = 0) -> Dict:
    """Estimate every constant of the classification bounds on the scenario's first task.

    Probe parameters are the starting point and the honest-only final
    iterates at lambda 0 and 1; G and the discrepancy are maxima over those
    probes (lower estimates). Config values ``G`` and ``phi`` take precedence.
    """
    rng = RngStream(master_seed)
    task = build_task(cfg, rng, 0)
    consts = constants(task)
    honest_cfg = replace(pgd_config(cfg, 0.0), aggregator=AggregatorSpec(), attack=AttackSpec())
    local = run_all(task, honest_cfg, rng.substream("probe", 0))
    full = run_all(task, replace(honest_cfg, lam=1.0), rng.substream("probe", 1))
    probes = np.vstack([np.zeros((1, task.dim))]
                       + [t.final_theta[None] for t in local] + [t.final_theta[None] for t in full])
    G = cfg.G if cfg.G is not None else estimate_G(task, probes)
    if cfg.phi is not None:
        phi, phi_source = cfg.phi, "config"
    elif isinstance(task, LogisticTask):
        est = discrepancy_proxy(task, client, probes)
        phi, phi_source = est.value, est.label
    else:
        phi, phi_source = 0.0, "not available for quadratic tasks"
    L0 = float(local[client].interp_loss[0] - local[client].interp_loss[-1])
    inp = TheoryInputs(L=consts.L, mu=consts.mu, G=G, kappa=theoretical_kappa(cfg.n, cfg.f),
                       pdim=task.dim, m=cfg.m, n=cfg.n, f=cfg.f, delta=cfg.delta, phi=phi,
                       L0=max(L0, 0.0), T=cfg.T)
    return {"inputs": inp, "phi_source": phi_source,
            "G_source": "config" if cfg.G is not None else "max over probes (lower estimate)"}
