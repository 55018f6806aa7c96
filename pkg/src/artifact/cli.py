"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict, replace

from .aggregation import AggregatorSpec, empirical_kappa, theoretical_kappa
from .config import ConfigError, load_config, parse_vary, with_vary
from .harness import classification_plugins, run_suite
from .mean_estimation import lambda_star_mean, prop1_bound
from .numerics import RngStream
from .report import emit_outputs, format_float
from .theory import lambda_star_class, lambda_star_grid, lemma1_rhs, lemma2_gap, theorem1_rhs

log = logging.getLogger("artifact")


def _dump(obj) -> str:
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return format_float(v)
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        return v
    return json.dumps(clean(obj), indent=2, sort_keys=True)


def _run(args, experiment: str) -> int:
    cfg = load_config(args.config)
    if cfg.experiment != experiment:
        cfg = replace(cfg, experiment=experiment)
    if getattr(args, "vary", None):
        cfg = with_vary(cfg, parse_vary(args.vary))
    out = args.out or cfg.output_dir
    rows = run_suite(cfg, args.seed, workers=args.workers)
    paths = emit_outputs(rows, cfg, out, args.seed)
    log.info("wrote %d rows to %s", len(rows), paths["csv"])
    print(paths["csv"])
    return 0


def cmd_mean_est(args) -> int:
    return _run(args, "mean_est")


def cmd_classify(args) -> int:
    return _run(args, "classify")


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    return _run(args, cfg.experiment)


def cmd_kappa(args) -> int:
    spec = AggregatorSpec.parse(args.agg, args.f)
    est = empirical_kappa(spec, args.n, args.f, args.d, args.trials, args.magnitude, RngStream(args.seed))
    print(_dump({"aggregator": spec.name, "magnitude": args.magnitude, "seed": args.seed, **asdict(est)}))
    return 0


def cmd_predict(args) -> int:
    cfg = load_config(args.config)
    if args.which == "lambda-mean":
        pop = cfg.population()
        kappa = theoretical_kappa(cfg.n, cfg.f)
        het = pop.heterogeneity_plugin()
        lam = lambda_star_mean(pop, kappa, het, het)
        print(_dump({
            "lambda_star": lam,
            "bound_at_lambda_star": prop1_bound(lam, kappa, pop, het, het),
            "plugins": {"kappa": kappa, "het_i": het, "delta_sq": het, "sigma_sq_total": pop.total_variance,
                        "m": pop.m, "n": pop.n, "f": pop.f},
        }))
        return 0
    info = classification_plugins(cfg, args.seed)
    inp = info["inputs"]
    star = lambda_star_class(inp)
    grid = lambda_star_grid(inp)
    print(_dump({
        "lambda_star_closed_form": star.value,
        "closed_form_regime": star.regime,
        "lambda_star_bound_grid_min": grid,
        "theorem_bound_at_grid_min": theorem1_rhs(inp, grid),
        "optimization_bound_at_grid_min": lemma1_rhs(inp, grid),
        "generalization_gap_at_grid_min": lemma2_gap(inp, grid),
        "plugins": {**asdict(inp), "beta": inp.beta, "phi_source": info["phi_source"],
                    "G_source": info["G_source"]},
    }))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="artifact", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, help="JSON/TOML file or preset name")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=None)
        sp.add_argument("--workers", type=int, default=1)
        sp.set_defaults(func=fn)
        return sp

    scenario("mean-est", cmd_mean_est, "robust mean estimation sweep over lambda")
    scenario("classify", cmd_classify, "personalized gradient descent sweep over lambda")
    sw = scenario("sweep", cmd_sweep, "run a grid of scenarios")
    sw.add_argument("--vary", action="append", default=[], metavar="KEY=V1,V2,...")

    kp = sub.add_parser("kappa", help="empirical (f, kappa)-robustness of an aggregator")
    kp.add_argument("--agg", required=True, choices=["avg", "median", "tm", "nnm-tm", "nnm-median", "nnm-avg"])
    kp.add_argument("--n", type=int, required=True)
    kp.add_argument("--f", type=int, required=True)
    kp.add_argument("--d", type=int, required=True)
    kp.add_argument("--trials", type=int, required=True)
    kp.add_argument("--magnitude", type=float, required=True)
    kp.add_argument("--seed", type=int, default=0)
    kp.set_defaults(func=cmd_kappa)

    pr = sub.add_parser("predict", help="predicted optimal collaboration level and plug-in constants")
    pr.add_argument("which", choices=["lambda-mean", "lambda-class"])
    pr.add_argument("--config", required=True)
    pr.add_argument("--seed", type=int, default=0)
    pr.set_defaults(func=cmd_predict)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
