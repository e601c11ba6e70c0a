"""Experiment configuration: dataclass sections read from TOML or JSON.

Grammar (TOML; JSON uses the same nesting)::

    m = 2.0
    seed = 0
    output = "runs/fractional"

    [operator]            # passed to operators.from_config
    kind = "fractional_laplacian"
    alpha = 1.0

    [grid]
    dim = 1
    n = 1024
    L = 64.0

    [solver]              # EllipticSolveConfig fields
    tol_residual = 1e-9

    [schedule]
    T = 30.0
    stepping = "geometric"   # or "uniform" (uses dt)
    dt0 = 1e-4
    ratio = 1.05
    dt_max = 0.05
    snapshots = "geometric"  # or "all"

    [initial]
    kind = "delta"

    [[checks]]
    name = "decay-fit"
    params = { window = [1.0, 10.0] }

Unknown keys are rejected with their dotted location.
"""

from __future__ import annotations

import copy
import dataclasses
import json
import math
import sys
from pathlib import Path

from .elliptic import EllipticSolveConfig
from .evolution import TimeGrid
from .grid import Grid

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w


class ConfigError(ValueError):
    pass


CHECK_NAMES = (
    "fundamental", "fundamental-resolvent", "fundamental-zero-order",
    "smoothing:G1", "smoothing:G1prime", "smoothing:combined", "smoothing:G3",
    "smoothing:absolute", "smoothing:zero-order",
    "decay-fit", "implications", "lp-decay", "mass", "time-monotonicity", "energy", "sup-retention",
)


@dataclasses.dataclass(frozen=True)
class GridConfig:
    dim: int = 1
    n: int = 256
    L: float = 32.0

    def build(self) -> Grid:
        return Grid(self.dim, self.n, self.L)


@dataclasses.dataclass(frozen=True)
class ScheduleConfig:
    T: float = 1.0
    stepping: str = "uniform"
    dt: float = 0.01
    dt0: float = 1e-4
    ratio: float = 1.05
    dt_max: float | None = None
    snapshots: str = "geometric"
    per_decade: int = 16

    def __post_init__(self):
        if self.stepping not in ("uniform", "geometric"):
            raise ConfigError(f"schedule.stepping must be 'uniform' or 'geometric', got {self.stepping!r}")
        if self.snapshots not in ("geometric", "all"):
            raise ConfigError(f"schedule.snapshots must be 'geometric' or 'all', got {self.snapshots!r}")

    def time_grid(self) -> TimeGrid:
        if self.stepping == "uniform":
            return TimeGrid.uniform(self.T, self.dt)
        return TimeGrid.geometric(self.T, self.dt0, self.ratio, self.dt_max)


@dataclasses.dataclass(frozen=True)
class InitialConfig:
    kind: str = "delta"
    mass: float = 1.0
    amplitude: float = 1.0
    width: float = 1.0


@dataclasses.dataclass(frozen=True)
class CheckConfig:
    name: str
    params: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        if self.name not in CHECK_NAMES:
            raise ConfigError(f"unknown check {self.name!r}; choose from {', '.join(CHECK_NAMES)}")


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    operator: dict
    grid: GridConfig = GridConfig()
    m: float = 2.0
    solver: EllipticSolveConfig = EllipticSolveConfig()
    schedule: ScheduleConfig = ScheduleConfig()
    initial: InitialConfig = InitialConfig()
    checks: tuple[CheckConfig, ...] = ()
    output: str = "runs/experiment"
    seed: int = 0

    def to_dict(self) -> dict:
        out = {
            "m": self.m, "seed": self.seed, "output": self.output,
            "operator": copy.deepcopy(self.operator),
            "grid": dataclasses.asdict(self.grid),
            "solver": dataclasses.asdict(self.solver),
            "schedule": _drop_none(dataclasses.asdict(self.schedule)),
            "initial": dataclasses.asdict(self.initial),
            "checks": [{"name": c.name, "params": copy.deepcopy(c.params)} for c in self.checks],
        }
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        _reject_unknown(data, {f.name for f in dataclasses.fields(cls)}, "")
        if "operator" not in data:
            raise ConfigError("missing [operator] section")
        if not isinstance(data["operator"], dict):
            raise ConfigError("operator: expected a table")
        sections = {"grid": GridConfig, "solver": EllipticSolveConfig, "schedule": ScheduleConfig,
                    "initial": InitialConfig}
        kw: dict = {"operator": copy.deepcopy(data["operator"])}
        for key, typ in sections.items():
            if key in data:
                kw[key] = _section(typ, data[key], key)
        checks = []
        for i, c in enumerate(data.get("checks", [])):
            if not isinstance(c, dict):
                raise ConfigError(f"checks[{i}]: expected a table")
            _reject_unknown(c, {"name", "params"}, f"checks[{i}]")
            if "name" not in c:
                raise ConfigError(f"checks[{i}]: missing 'name'")
            try:
                checks.append(CheckConfig(c["name"], copy.deepcopy(dict(c.get("params", {})))))
            except ConfigError as exc:
                raise ConfigError(f"checks[{i}]: {exc}") from None
        kw["checks"] = tuple(checks)
        for key, conv in (("m", float), ("seed", int), ("output", str)):
            if key in data:
                kw[key] = conv(data[key])
        return cls(**kw)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def _drop_none(d: dict) -> dict:
    return {k: v for k, v in d.items() if v is not None}


def _reject_unknown(data: dict, allowed: set, where: str):
    extra = sorted(set(data) - allowed)
    if extra:
        loc = f"{where}." if where else ""
        raise ConfigError(f"unknown key {loc}{extra[0]}" + (f" (and {len(extra) - 1} more)" if len(extra) > 1 else ""))


def _section(typ, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a table")
    _reject_unknown(data, {f.name for f in dataclasses.fields(typ)}, where)
    try:
        return typ(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def loads(text: str, fmt: str = "toml") -> ExperimentConfig:
    if fmt == "json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    else:
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"TOML parse error: {exc}") from None
    return ExperimentConfig.from_dict(data)


def load(path) -> ExperimentConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    return loads(p.read_text(), "json" if p.suffix == ".json" else "toml")


def dumps(cfg: ExperimentConfig, fmt: str = "toml") -> str:
    d = cfg.to_dict()
    if fmt == "json":
        return json.dumps(d, indent=2, sort_keys=True)
    return tomli_w.dumps(d)


def load_operator(path) -> dict:
    """An operator table from a file holding either ``[operator]`` or bare keys."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"operator config not found: {p}")
    text = p.read_text()
    try:
        data = json.loads(text) if p.suffix == ".json" else tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from None
    return data.get("operator", data)


# ------------------------------------------------------------------ presets

PRESETS: dict[str, dict] = {
    "ode-absolute-bound": {
        "operator": {"kind": "identity"},
        "grid": {"dim": 1, "n": 8, "L": 1.0},
        "m": 2.0,
        "schedule": {"T": 5.0, "stepping": "uniform", "dt": 1e-3},
        "initial": {"kind": "constant", "amplitude": 2.0},
        "checks": [
            {"name": "smoothing:absolute", "params": {"C1": 1.0}},
            {"name": "fundamental", "params": {}},
        ],
        "output": "runs/ode-absolute-bound",
    },
    "fractional-smoothing-1d": {
        "operator": {"kind": "fractional_laplacian", "alpha": 1.0},
        "grid": {"dim": 1, "n": 1024, "L": 64.0},
        "m": 2.0,
        "schedule": {"T": 30.0, "stepping": "geometric", "dt0": 1e-4, "ratio": 1.05, "dt_max": 0.05},
        "initial": {"kind": "delta"},
        "checks": [
            {"name": "decay-fit", "params": {"window": [1.0, 10.0], "rel_tol": 0.1}},
            {"name": "smoothing:G1", "params": {}},
            {"name": "fundamental", "params": {"samples": 32}},
        ],
        "output": "runs/fractional-smoothing-1d",
    },
    "zero-order-contrast": {
        "operator": {"kind": "convolution_0order", "family": "gaussian", "width": 1.0},
        "grid": {"dim": 1, "n": 512, "L": 32.0},
        "m": 2.0,
        "schedule": {"T": 0.1, "stepping": "geometric", "dt0": 1e-4, "ratio": 1.1, "dt_max": 0.002},
        "initial": {"kind": "noise"},
        "checks": [
            {"name": "smoothing:zero-order", "params": {"p": math.inf}},
            {"name": "fundamental-zero-order", "params": {}},
        ],
        "output": "runs/zero-order-contrast",
    },
    "laplacian-decay-1d": {
        "operator": {"kind": "laplacian"},
        "grid": {"dim": 1, "n": 1024, "L": 64.0},
        "m": 2.0,
        "solver": {"positivity_clamp": False, "allow_sign_change": True},
        "schedule": {"T": 30.0, "stepping": "geometric", "dt0": 1e-3, "ratio": 1.05, "dt_max": 0.05},
        "initial": {"kind": "gaussian", "width": 0.5},
        "checks": [{"name": "decay-fit", "params": {"window": [3.0, 30.0], "rel_tol": 0.1}}],
        "output": "runs/laplacian-decay-1d",
    },
}


def preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    return ExperimentConfig.from_dict(copy.deepcopy(PRESETS[name]))
