"""Scenario configuration: presets, file loading and validation."""

from __future__ import annotations

import copy
import itertools
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from .aggregation import AggregatorSpec
from .attacks import ATTACK_KINDS, DEFAULT_FOE_GRID, AttackSpec
from .mean_estimation import DEFAULT_LAMBDAS, GaussianPopulation

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    """Invalid or inconsistent scenario configuration."""


CLASSIFY_LAMBDAS = tuple(round(0.1 * k, 1) for k in range(11))


@dataclass(frozen=True)
class ScenarioConfig:
    experiment: str = "mean_est"
    n: int = 600
    f: int = 100
    m: int = 20
    d: int = 1
    sigma: float = 15.0
    sigma_h: float = 2.0
    base_mean: float = 10.0
    task: str = "logistic"
    alpha: float = math.inf
    class_sep: float = 2.0
    ridge: float = 0.1
    center_spread: float = 1.0
    aggregator: str = "nnm+trimmed_mean"
    aggregator_f: Optional[int] = None
    attack: str = "sign_flip"
    tau: float = 1.0
    epsilon: float = 1.0
    foe_grid: Tuple[float, ...] = DEFAULT_FOE_GRID
    lambdas: Tuple[float, ...] = DEFAULT_LAMBDAS
    T: int = 100
    eta: Union[str, float] = "auto"
    trials: int = 20
    theta_radius: float = 100.0
    clients: str = "designated"
    delta: float = 0.05
    phi: Optional[float] = None
    G: Optional[float] = None
    output_dir: str = "out"
    vary: Dict[str, Tuple[Any, ...]] = field(default_factory=dict)

    # -- derived specs ---------------------------------------------------
    def aggregator_spec(self) -> AggregatorSpec:
        f = self.f if self.aggregator_f is None else self.aggregator_f
        return AggregatorSpec.parse(self.aggregator, f)

    def attack_spec(self) -> AttackSpec:
        return AttackSpec(self.attack, self.f, self.tau, self.epsilon, self.foe_grid)

    def population(self) -> GaussianPopulation:
        return GaussianPopulation(self.n, self.f, self.m, self.d, self.sigma, self.sigma_h, self.base_mean)

    def resolved_eta(self) -> Optional[float]:
        return None if self.eta == "auto" else float(self.eta)

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out["foe_grid"] = list(self.foe_grid)
        out["lambdas"] = list(self.lambdas)
        out["vary"] = {k: list(v) for k, v in self.vary.items()}
        return _jsonable(out)

    def expand(self) -> List["ScenarioConfig"]:
        """One config per point of the ``vary`` grid (itself when the grid is empty)."""
        if not self.vary:
            return [self]
        keys = list(self.vary)
        cells = []
        for values in itertools.product(*(self.vary[k] for k in keys)):
            raw = self.to_dict()
            raw["vary"] = {}
            raw.update(dict(zip(keys, values)))
            cells.append(from_dict(raw))
        return cells


def _jsonable(value):
    if isinstance(value, float) and math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


PRESETS: Dict[str, Dict[str, Any]] = {
    "fig1-defaults": dict(
        experiment="mean_est", n=600, f=100, m=20, d=1, sigma=15.0, sigma_h=2.0,
        aggregator="nnm+trimmed_mean", attack="sign_flip", trials=20,
    ),
    "fig1-desk": dict(
        experiment="mean_est", n=120, f=20, m=20, d=1, sigma=15.0, sigma_h=2.0,
        aggregator="nnm+trimmed_mean", attack="sign_flip", trials=50,
    ),
    "fig2-desk": dict(
        experiment="classify", task="logistic", n=20, f=0, m=16, d=20,
        class_sep=1.0, ridge=0.1, alpha="inf", aggregator="nnm+trimmed_mean",
        attack="sign_flip", lambdas=list(CLASSIFY_LAMBDAS), T=100, eta="auto", trials=5,
        vary={"f": [0, 3, 6, 9], "m": [16, 32, 64, 128], "alpha": [0.5, 3.0, "inf"]},
    ),
}

_FIELDS = {fl.name: fl for fl in fields(ScenarioConfig)}
_INT_KEYS = {"n", "f", "m", "d", "T", "trials"}
_FLOAT_KEYS = {"sigma", "sigma_h", "base_mean", "alpha", "class_sep", "ridge", "center_spread",
               "tau", "epsilon", "theta_radius", "delta"}


def _to_float(key: str, value) -> float:
    if isinstance(value, str) and value.strip().lower() in ("inf", "infinity", "+inf"):
        return math.inf
    if isinstance(value, bool):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None


def _to_int(key: str, value) -> int:
    if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected an integer, got {value!r}") from None


def _coerce(key: str, value):
    if key in _INT_KEYS:
        return _to_int(key, value)
    if key in _FLOAT_KEYS:
        return _to_float(key, value)
    if key in ("aggregator_f",):
        return None if value is None else _to_int(key, value)
    if key in ("phi", "G"):
        return None if value is None else _to_float(key, value)
    if key in ("lambdas", "foe_grid"):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{key}: expected a list")
        return tuple(_to_float(f"{key}[{i}]", v) for i, v in enumerate(value))
    if key == "eta":
        if isinstance(value, str) and value == "auto":
            return value
        return _to_float(key, value)
    if key == "vary":
        if not isinstance(value, dict):
            raise ConfigError("vary: expected a mapping of key -> list of values")
        out = {}
        for k, vals in value.items():
            if k not in _FIELDS or k == "vary":
                raise ConfigError(f"vary.{k}: unknown key")
            if not isinstance(vals, (list, tuple)) or not vals:
                raise ConfigError(f"vary.{k}: expected a nonempty list")
            try:
                out[k] = tuple(_jsonable(_coerce(k, v)) if k not in ("lambdas", "foe_grid") else v
                               for v in vals)
            except ConfigError as exc:
                raise ConfigError(f"vary.{exc}") from None
        return out
    if not isinstance(value, str):
        raise ConfigError(f"{key}: expected a string, got {value!r}")
    return value


def validate(cfg: ScenarioConfig) -> ScenarioConfig:
    if cfg.experiment not in ("mean_est", "classify"):
        raise ConfigError(f"experiment: expected 'mean_est' or 'classify', got {cfg.experiment!r}")
    if cfg.n < 1 or cfg.f < 0:
        raise ConfigError("n: must be >= 1 and f >= 0")
    if not 2 * cfg.f < cfg.n:
        raise ConfigError(f"f: require f < n/2 (n={cfg.n}, f={cfg.f})")
    if not cfg.lambdas:
        raise ConfigError("lambdas: grid must not be empty")
    if any(not 0.0 <= lam <= 1.0 for lam in cfg.lambdas):
        raise ConfigError("lambdas: every value must lie in [0, 1]")
    if cfg.trials < 1:
        raise ConfigError("trials: must be >= 1")
    if cfg.T < 1:
        raise ConfigError("T: must be >= 1")
    if cfg.m < 1 or cfg.d < 1:
        raise ConfigError("m, d: must be >= 1")
    if cfg.experiment == "classify" and cfg.task == "logistic" and cfg.m < 2:
        raise ConfigError("m: logistic tasks need m >= 2")
    if cfg.sigma < 0 or cfg.sigma_h < 0:
        raise ConfigError("sigma, sigma_h: must be nonnegative")
    if not cfg.alpha > 0:
        raise ConfigError("alpha: must be positive")
    if not cfg.ridge > 0:
        raise ConfigError("ridge: must be positive")
    if not cfg.theta_radius > 0:
        raise ConfigError("theta_radius: must be positive")
    if not 0 < cfg.delta < 1:
        raise ConfigError("delta: must lie in (0, 1)")
    if cfg.eta != "auto" and not cfg.eta > 0:
        raise ConfigError("eta: must be positive or 'auto'")
    if cfg.task not in ("logistic", "quadratic"):
        raise ConfigError(f"task: expected 'logistic' or 'quadratic', got {cfg.task!r}")
    if cfg.clients not in ("designated", "all"):
        raise ConfigError("clients: expected 'designated' or 'all'")
    if cfg.attack not in ATTACK_KINDS:
        raise ConfigError(f"attack: expected one of {ATTACK_KINDS}, got {cfg.attack!r}")
    try:
        spec = cfg.aggregator_spec()
        cfg.attack_spec()
    except ValueError as exc:
        raise ConfigError(f"aggregator/attack: {exc}") from None
    if spec.kind == "trimmed_mean" and cfg.n - 2 * spec.f < 1:
        raise ConfigError("aggregator_f: trimmed mean needs n - 2f >= 1")
    return cfg


def from_dict(raw: Dict[str, Any]) -> ScenarioConfig:
    """Merge ``raw`` over its preset (if any) and over the defaults, then validate."""
    raw = dict(raw)
    preset = raw.pop("preset", None)
    merged: Dict[str, Any] = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"preset: unknown preset {preset!r}; known: {sorted(PRESETS)}")
        merged.update(copy.deepcopy(PRESETS[preset]))
    merged.update(raw)
    unknown = sorted(set(merged) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(unknown)}")
    values = {k: _coerce(k, v) for k, v in merged.items()}
    base = {}
    if "experiment" in values and values["experiment"] == "classify" and preset is None:
        base = {"n": 20, "f": 0, "m": 32, "d": 10, "lambdas": CLASSIFY_LAMBDAS, "trials": 5}
    base.update(values)
    return validate(ScenarioConfig(**base))


def preset(name: str, **overrides) -> ScenarioConfig:
    return from_dict({"preset": name, **overrides})


def load_config(path) -> ScenarioConfig:
    """Read a JSON or TOML scenario file, or a bare preset name."""
    p = Path(path)
    if not p.exists():
        if str(path) in PRESETS:
            return preset(str(path))
        raise ConfigError(f"config file not found: {path}")
    text = p.read_text()
    try:
        if p.suffix == ".toml":
            raw = tomllib.loads(text)
        else:
            raw = json.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: cannot parse: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return from_dict(raw)


def parse_vary(items: List[str]) -> Dict[str, List[Any]]:
    """Parse ``key=v1,v2,...`` arguments; values are JSON scalars or bare strings."""
    out: Dict[str, List[Any]] = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--vary: expected key=v1,v2,..., got {item!r}")
        key, _, rhs = item.partition("=")
        vals = []
        for tok in rhs.split(","):
            tok = tok.strip()
            try:
                vals.append(json.loads(tok))
            except json.JSONDecodeError:
                vals.append(tok)
        out[key.strip()] = vals
    return out


def with_vary(cfg: ScenarioConfig, vary: Dict[str, List[Any]]) -> ScenarioConfig:
    raw = cfg.to_dict()
    raw["vary"] = {**raw["vary"], **vary}
    return from_dict(raw)
