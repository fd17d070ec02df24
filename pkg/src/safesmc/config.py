"""Strict TOML scenario configuration.

A scenario file is a TOML document with the sections below. Every key is
optional unless marked required; unknown sections and unknown keys are a hard
error so that a typo can never silently fall back to a default.

::

    [scenario]
    name = "robot-s1a"             # label used in summaries and output names
    plant = "robot"                # built-in plant family (only "robot")
    safeguard_enabled = true

    [plant]
    g0 = 0.5                       # lower bound of the diagonal input gain
    delta_bounds = [4.0, 3.0]      # |delta_i| bounds; [0, 0] removes the disturbance
    theta_bound = 0.5              # |theta_i| bound; 0 removes the gain uncertainty

    [sliding]
    beta0 = 0.1
    M = [[1.0, 0.0], [0.0, 1.0]]   # s = M x
    switching = "sign"             # "sign" or "sat"
    epsilon = 0.5                  # required when switching = "sat"

    [safety]
    center = [5.0, 3.0]            # disk obstacle, h = |x - center|^2 - radius^2
    radius = 2.0
    alpha_gain = 10.0              # alpha(r) = alpha_gain * r
    h_bar = 1.0                    # width of the risky band 0 <= h <= h_bar
    omega_radius = 3.83            # the safeguard switches off once |s|_2 < omega_radius

    [safeguard]
    h1 = 1.0
    h2 = 0.2
    h3 = 1.0
    c_z = 2.0
    lambda = 1.0
    z0 = -10.0
    z_reset_threshold = 1.0        # omit to disable resets
    reset_band = "risky"           # "risky" or "safe_set"
    channel = "diagonal"           # "argmax", "diagonal" or a 1-based index
    channel_offset = 2.0           # used by "diagonal": j = 2 iff x2(0) >= x1(0) - offset
    z_switching = "sign"           # "sign" or "sat"
    z_epsilon = 0.5                # required when z_switching = "sat"

    [sim]                          # required
    x0 = [7.0, 7.0]                # required
    t_end = 5.0                    # required
    dt = 1e-4
    integrator = "rk4"             # "rk4" or "euler"
    record_stride = 1

    [output]                       # paths are relative to the output directory
    csv = "robot-s1a.csv"
    summary = "robot-s1a.txt"
    json = "robot-s1a.json"
    plot_script = "robot-s1a_plot.py"   # optional matplotlib script
"""

from __future__ import annotations

import copy
import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .errors import ConfigError, InvalidParameters
from .model import (
    ChannelRule,
    ResetBand,
    SafeguardParams,
    SlidingSpec,
    Switching,
)
from .robot import DiagonalChannelRule, obstacle_safety, robot_plant
from .sim import Integrator, Scenario, SimConfig

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib


# section -> key -> default (REQUIRED marks mandatory keys)
REQUIRED = object()

SCHEMA: dict[str, dict[str, Any]] = {
    "scenario": {"name": "scenario", "plant": "robot", "safeguard_enabled": True},
    "plant": {"g0": 0.5, "delta_bounds": [4.0, 3.0], "theta_bound": 0.5},
    "sliding": {"beta0": 0.1, "M": None, "switching": "sign", "epsilon": None},
    "safety": {
        "center": [5.0, 3.0],
        "radius": 2.0,
        "alpha_gain": 10.0,
        "h_bar": 1.0,
        "omega_radius": 3.83,
    },
    "safeguard": {
        "h1": 1.0,
        "h2": 0.2,
        "h3": 1.0,
        "c_z": 2.0,
        "lambda": 1.0,
        "z0": -10.0,
        "z_reset_threshold": None,
        "reset_band": "risky",
        "channel": "argmax",
        "channel_offset": 2.0,
        "z_switching": "sign",
        "z_epsilon": None,
    },
    "sim": {
        "x0": REQUIRED,
        "t_end": REQUIRED,
        "dt": 1e-4,
        "integrator": "rk4",
        "record_stride": 1,
    },
    "output": {"csv": None, "summary": None, "json": None, "plot_script": None},
}

# parameters a sweep may vary, mapped to (section, key)
SWEEPABLE: dict[str, tuple[str, str]] = {
    "h1": ("safeguard", "h1"),
    "h2": ("safeguard", "h2"),
    "h3": ("safeguard", "h3"),
    "c_z": ("safeguard", "c_z"),
    "lambda": ("safeguard", "lambda"),
    "h_bar": ("safety", "h_bar"),
    "z0": ("safeguard", "z0"),
    "dt": ("sim", "dt"),
}

PLANTS = ("robot",)


@dataclass(frozen=True)
class OutputPaths:
    csv: Optional[Path] = None
    summary: Optional[Path] = None
    json: Optional[Path] = None
    plot_script: Optional[Path] = None


@dataclass(frozen=True)
class ScenarioConfig:
    """A parsed and validated scenario file.

    ``data`` holds the fully defaulted section tables; ``scenario`` and
    ``sim`` are the objects built from them.
    """

    data: dict = field(repr=False)
    scenario: Scenario = field(repr=False)
    sim: SimConfig = field(repr=False)
    safeguard_enabled: bool = True
    source: str = "<string>"

    @property
    def name(self) -> str:
        return self.data["scenario"]["name"]

    def outputs(self, out_dir: Path | str = ".") -> OutputPaths:
        """Output paths resolved against ``out_dir``; defaults derive from the name."""
        base = Path(out_dir)
        o = self.data["output"]
        stem = self.name

        def resolve(key: str, default: Optional[str]) -> Optional[Path]:
            v = o[key] if o[key] is not None else default
            return None if v is None else base / v

        return OutputPaths(
            csv=resolve("csv", f"{stem}.csv"),
            summary=resolve("summary", f"{stem}.txt"),
            json=resolve("json", f"{stem}.json"),
            plot_script=resolve("plot_script", None),
        )

    def with_value(self, parameter: str, value: float) -> "ScenarioConfig":
        """A copy with one sweepable parameter replaced, revalidated."""
        if parameter not in SWEEPABLE:
            raise ConfigError(f"cannot sweep {parameter!r}; choose one of {', '.join(SWEEPABLE)}")
        section, key = SWEEPABLE[parameter]
        data = copy.deepcopy(self.data)
        data[section][key] = value
        return build(data, source=f"{self.source} [{parameter}={value!r}]")

    def to_toml(self) -> str:
        """Serialize back to the documented grammar (``None`` values are omitted)."""
        lines: list[str] = []
        for section, table in self.data.items():
            lines.append(f"[{section}]")
            for key, value in table.items():
                if value is not None:
                    lines.append(f"{key} = {_toml_value(value)}")
            lines.append("")
        return "\n".join(lines)


def _toml_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(float(v)) if isinstance(v, float) else str(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(e) for e in v) + "]"
    raise TypeError(f"cannot serialize {v!r}")


# ---------------------------------------------------------------------------
# Parsing


def load_config(path: Path | str) -> ScenarioConfig:
    """Read and validate a scenario file; raises ConfigError naming the field."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror or exc})") from exc
    return parse_config(text, source=str(path))


def parse_config(text: str, source: str = "<string>") -> ScenarioConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    return build(raw, source=source)


def build(raw: dict, source: str = "<string>") -> ScenarioConfig:
    """Apply defaults, reject unknown keys and construct the scenario."""
    data = _apply_schema(raw, source)
    errors: list[str] = []
    scenario, sim = _construct(data, errors)
    if errors:
        raise ConfigError(f"{source}: " + "; ".join(errors))
    return ScenarioConfig(
        data=data,
        scenario=scenario,
        sim=sim,
        safeguard_enabled=data["scenario"]["safeguard_enabled"],
        source=source,
    )


def _apply_schema(raw: dict, source: str) -> dict:
    unknown = sorted(set(raw) - set(SCHEMA))
    if unknown:
        raise ConfigError(f"{source}: unknown section(s) {', '.join(f'[{u}]' for u in unknown)}")
    data: dict[str, dict[str, Any]] = {}
    missing: list[str] = []
    for section, defaults in SCHEMA.items():
        table = raw.get(section, {})
        if not isinstance(table, dict):
            raise ConfigError(f"{source}: {section} must be a table")
        bad = sorted(set(table) - set(defaults))
        if bad:
            raise ConfigError(f"{source}: unknown key(s) {', '.join(f'{section}.{b}' for b in bad)}")
        merged = {}
        for key, default in defaults.items():
            if key in table:
                merged[key] = table[key]
            elif default is REQUIRED:
                missing.append(f"{section}.{key}")
            else:
                merged[key] = copy.deepcopy(default)
        data[section] = merged
    if missing:
        raise ConfigError(f"{source}: missing required key(s) {', '.join(missing)}")
    return data


class _Checker:
    """Collects typed field reads, recording one message per bad field."""

    def __init__(self, data: dict, errors: list[str]):
        self.data = data
        self.errors = errors

    def _fail(self, where: str, msg: str, fallback):
        self.errors.append(f"{where}: {msg}")
        return fallback

    def number(self, section: str, key: str, *, positive=False, nonneg=False, optional=False):
        v = self.data[section][key]
        where = f"{section}.{key}"
        if v is None and optional:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            return self._fail(where, f"must be a finite number, got {v!r}", 1.0)
        if positive and not v > 0:
            return self._fail(where, f"must be > 0, got {v!r}", 1.0)
        if nonneg and not v >= 0:
            return self._fail(where, f"must be >= 0, got {v!r}", 1.0)
        return float(v)

    def vector(self, section: str, key: str, size: int):
        v = self.data[section][key]
        where = f"{section}.{key}"
        if (not isinstance(v, list) or len(v) != size
                or any(isinstance(e, bool) or not isinstance(e, (int, float)) or not math.isfinite(e) for e in v)):
            return self._fail(where, f"must be a list of {size} finite numbers, got {v!r}", [0.0] * size)
        return [float(e) for e in v]

    def choice(self, section: str, key: str, options: tuple[str, ...]):
        v = self.data[section][key]
        if v not in options:
            return self._fail(f"{section}.{key}", f"must be one of {', '.join(options)}, got {v!r}", options[0])
        return v

    def boolean(self, section: str, key: str):
        v = self.data[section][key]
        if not isinstance(v, bool):
            return self._fail(f"{section}.{key}", f"must be true or false, got {v!r}", True)
        return v


def _switching(chk: _Checker, section: str, kind_key: str, eps_key: str) -> Switching:
    kind = chk.choice(section, kind_key, ("sign", "sat"))
    if kind == "sign":
        return Switching.sign()
    eps = chk.number(section, eps_key, positive=True, optional=True)
    if eps is None:
        chk.errors.append(f"{section}.{eps_key}: required when {section}.{kind_key} = \"sat\"")
        eps = 1.0
    return Switching.sat(eps)


def _channel_rule(chk: _Checker) -> ChannelRule:
    v = chk.data["safeguard"]["channel"]
    if v == "argmax":
        return ChannelRule.argmax()
    if v == "diagonal":
        offset = chk.number("safeguard", "channel_offset")
        return ChannelRule.initial_condition(DiagonalChannelRule(offset))
    if isinstance(v, int) and not isinstance(v, bool) and v in (1, 2):
        return ChannelRule.fixed(v)
    chk.errors.append(f"safeguard.channel: must be \"argmax\", \"diagonal\", 1 or 2, got {v!r}")
    return ChannelRule.argmax()


def _construct(data: dict, errors: list[str]) -> tuple[Optional[Scenario], Optional[SimConfig]]:
    chk = _Checker(data, errors)
    name = data["scenario"]["name"]
    if not isinstance(name, str) or not name or any(c in name for c in "/\\"):
        errors.append(f"scenario.name: must be a non-empty string without path separators, got {name!r}")
    chk.choice("scenario", "plant", PLANTS)
    chk.boolean("scenario", "safeguard_enabled")
    for key in ("csv", "summary", "json", "plot_script"):
        v = data["output"][key]
        if v is not None and (not isinstance(v, str) or not v):
            errors.append(f"output.{key}: must be a non-empty path string, got {v!r}")

    g0 = chk.number("plant", "g0", positive=True)
    delta = chk.vector("plant", "delta_bounds", 2)
    if any(d < 0 for d in delta):
        errors.append(f"plant.delta_bounds: entries must be >= 0, got {delta!r}")
    theta = chk.number("plant", "theta_bound", nonneg=True)
    if theta >= 1.0:
        errors.append(f"plant.theta_bound: must be < 1 so the true gain stays positive, got {theta!r}")

    beta0 = chk.number("sliding", "beta0", positive=True)
    M = data["sliding"]["M"]
    if M is not None:
        ok = (isinstance(M, list) and len(M) == 2
              and all(isinstance(r, list) and len(r) == 2 for r in M)
              and all(isinstance(e, (int, float)) and not isinstance(e, bool) and math.isfinite(e)
                      for r in M for e in r))
        if not ok:
            errors.append(f"sliding.M: must be a 2x2 list of finite numbers, got {M!r}")
            M = None
        else:
            M = np.array(M, dtype=float)
    switching = _switching(chk, "sliding", "switching", "epsilon")

    center = chk.vector("safety", "center", 2)
    radius = chk.number("safety", "radius", positive=True)
    alpha_gain = chk.number("safety", "alpha_gain", positive=True)
    h_bar = chk.number("safety", "h_bar", positive=True)
    omega_radius = chk.number("safety", "omega_radius", positive=True)

    sg = {k: chk.number("safeguard", k) for k in ("h1", "h2", "h3", "c_z", "lambda", "z0")}
    threshold = chk.number("safeguard", "z_reset_threshold", optional=True)
    band = ResetBand(chk.choice("safeguard", "reset_band", tuple(b.value for b in ResetBand)))
    rule = _channel_rule(chk)
    z_switching = _switching(chk, "safeguard", "z_switching", "z_epsilon")

    x0 = chk.vector("sim", "x0", 2)
    t_end = chk.number("sim", "t_end", nonneg=True)
    dt = chk.number("sim", "dt", positive=True)
    integrator = Integrator(chk.choice("sim", "integrator", tuple(i.value for i in Integrator)))
    stride = data["sim"]["record_stride"]
    if isinstance(stride, bool) or not isinstance(stride, int) or stride < 1:
        errors.append(f"sim.record_stride: must be an integer >= 1, got {stride!r}")
        stride = 1

    if errors:
        return None, None
    # constructor invariants are reported with the section they came from
    try:
        params = SafeguardParams(
            h1=sg["h1"], h2=sg["h2"], h3=sg["h3"], c_z=sg["c_z"], lam=sg["lambda"], z0=sg["z0"],
            z_reset_threshold=threshold, channel_rule=rule, z_switching=z_switching, reset_band=band,
        )
    except InvalidParameters as exc:
        errors.extend(f"safeguard: {p}" for p in exc.problems)
        params = None
    try:
        sim = SimConfig(x0=np.array(x0), t_end=t_end, dt=dt, integrator=integrator, record_stride=stride)
    except InvalidParameters as exc:
        errors.extend(f"sim: {p}" for p in exc.problems)
        sim = None
    plant = robot_plant(g0=g0, delta_bounds=tuple(delta), theta_bound=theta)
    sliding = SlidingSpec(p=2, beta0=beta0, M=M, switching=switching)
    for p in sliding.problems():
        errors.append(f"sliding: {p}")
    safety = obstacle_safety(center=tuple(center), radius=radius, alpha_gain=alpha_gain,
                             h_bar=h_bar, omega_radius=omega_radius)
    if errors:
        return None, None
    return Scenario(plant, sliding, safety, params, name=name), sim


# ---------------------------------------------------------------------------
# Built-in demos

DEMOS = (
    "robot-s1a",
    "robot-s1b",
    "robot-sat",
    "robot-z50",
    "robot-incompatible",
    "robot-altmanifold",
)


def demo_text(name: str) -> str:
    """Source text of a built-in demo scenario."""
    if name not in DEMOS:
        raise ConfigError(f"unknown demo {name!r}; choose one of {', '.join(DEMOS)}")
    return resources.files("safesmc.demos").joinpath(f"{name}.toml").read_text(encoding="utf-8")


def load_demo(name: str) -> ScenarioConfig:
    return parse_config(demo_text(name), source=f"demo:{name}")
