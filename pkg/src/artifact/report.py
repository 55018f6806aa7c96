"""Write results.csv, summary.json, manifest.json and one SVG figure per metric."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import astuple
from pathlib import Path
from typing import Dict, List, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from . import __version__  # noqa: E402
from .config import ScenarioConfig  # noqa: E402
from .harness import ROW_FIELDS, ResultRow, series_label, summarize  # noqa: E402

# fixed metadata keeps SVG bytes independent of the wall clock
_SVG_META = {"Date": None, "Creator": None}
plt.rcParams["svg.hashsalt"] = "artifact"
plt.rcParams["svg.fonttype"] = "none"

_INT_FIELDS = {"master_seed", "trial", "client_id", "f", "n", "m"}
_FLOAT_FIELDS = {"lambda", "sigma", "sigma_h", "alpha", "metric_value"}


def format_float(x: float) -> str:
    """Shortest round-trip representation; infinities as ``inf`` / ``-inf``."""
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return repr(x)


def rows_to_csv(rows: Sequence[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROW_FIELDS)
    for r in rows:
        w.writerow([format_float(v) if isinstance(v, float) else v for v in astuple(r)])
    return buf.getvalue()


def parse_csv(text: str) -> List[ResultRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != ROW_FIELDS:
        raise ValueError(f"unexpected header {header}")
    rows = []
    for rec in reader:
        vals = []
        for name, raw in zip(ROW_FIELDS, rec):
            if name in _INT_FIELDS:
                vals.append(int(raw))
            elif name in _FLOAT_FIELDS:
                vals.append(float(raw))
            else:
                vals.append(raw)
        rows.append(ResultRow(*vals))
    return rows


def summary_dict(rows: Sequence[ResultRow]) -> Dict:
    stats = summarize(rows)
    out = {}
    for metric in sorted(stats):
        out[metric] = []
        for key in sorted(stats[metric], key=repr):
            n, f, m, sigma, sigma_h, alpha, attack, agg = key
            out[metric].append({
                "series": series_label(key),
                "n": n, "f": f, "m": m, "sigma": sigma, "sigma_h": sigma_h,
                "alpha": format_float(alpha) if math.isinf(alpha) else alpha,
                "attack": attack, "aggregator": agg,
                "points": [
                    {"lambda": lam, "mean": _finite(mean), "stderr": _finite(se), "count": count}
                    for lam, (mean, se, count) in stats[metric][key].items()
                ],
            })
    return out


def _finite(x: float):
    return x if math.isfinite(x) else format_float(x)


def plot_metric(metric: str, series: Dict, path: Path) -> None:
    """One line per series (tagged with an SVG group id), mean +/- standard error band."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for k, key in enumerate(sorted(series, key=repr)):
        pts = series[key]
        lams = list(pts)
        mean = [pts[x][0] for x in lams]
        se = [pts[x][1] for x in lams]
        (line,) = ax.plot(lams, mean, marker="o", ms=3, lw=1.2, label=series_label(key))
        line.set_gid(f"series-{k}")
        band = ax.fill_between(lams, [a - b for a, b in zip(mean, se)], [a + b for a, b in zip(mean, se)],
                               alpha=0.2, color=line.get_color(), lw=0)
        band.set_gid(f"band-{k}")
    ax.set_xlabel(r"collaboration level $\lambda$")
    ax.set_ylabel(metric.replace("_", " "))
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    if len(series) <= 12:
        ax.legend(fontsize=6, frameon=False)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def emit_outputs(rows: Sequence[ResultRow], cfg: ScenarioConfig, out_dir, master_seed: int) -> Dict[str, Path]:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    paths = {"csv": out / "results.csv", "summary": out / "summary.json", "manifest": out / "manifest.json"}
    paths["csv"].write_text(rows_to_csv(rows), newline="")
    paths["summary"].write_text(json.dumps(summary_dict(rows), indent=2, sort_keys=True) + "\n")
    manifest = {"config": cfg.to_dict(), "version": __version__, "master_seed": master_seed, "rows": len(rows)}
    paths["manifest"].write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    for metric, series in summarize(rows).items():
        p = out / f"{metric}.svg"
        plot_metric(metric, {k: {lam: v[:2] for lam, v in s.items()} for k, s in series.items()}, p)
        paths[f"svg:{metric}"] = p
    return paths
