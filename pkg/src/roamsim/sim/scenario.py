"""Scenario configuration: schema, loading and validation.

Scenario files are YAML. Top-level sections: ``environment``, ``profiles``,
``tunnel``, ``policy``, ``mobility``, ``flows`` and ``devices``; see
``data/default_scenario.yaml`` for a fully commented example.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

from ..device import DeviceProfile
from ..enums import RAT, Mode
from ..mobility import MobilityTrace
from ..policy.geofence import GeofenceError, GeofenceSpec, geofence_from_dict
from ..policy.profile import ProfileError, RadioPreferenceProfile, parse_profile
from ..rfenv import DEFAULT_RATE_TABLES, InvalidArgument, PathLossModel, RadioNode, RateTable, validate_nodes
from ..traffic import FlowSpec
from ..tunnel.endpoints import TunnelConfig


class ConfigError(ValueError):
    """Validation failure pointing at a file, line and key path."""

    def __init__(self, message: str, source: str = "<scenario>", line: Optional[int] = None, path: str = ""):
        self.source, self.line, self.path, self.message = source, line, path, message
        loc = source + (f":{line}" if line is not None else "")
        super().__init__(f"{loc}: {path + ': ' if path else ''}{message}")


@dataclass(frozen=True)
class Environment:
    nodes: tuple[RadioNode, ...]
    path_loss: PathLossModel = PathLossModel()
    rate_tables: Mapping[str, RateTable] = field(default_factory=lambda: dict(DEFAULT_RATE_TABLES))

    def nodes_of(self, rat: RAT) -> tuple[RadioNode, ...]:
        return tuple(n for n in self.nodes if n.rat is rat)


@dataclass(frozen=True)
class PolicyConfig:
    profile: RadioPreferenceProfile
    geofence: Optional[GeofenceSpec] = None
    margin_db: float = 3.0
    dwell_s: float = 2.0


@dataclass(frozen=True)
class DeviceConfig:
    name: str
    profile: str
    trace: MobilityTrace
    flows: tuple[FlowSpec, ...]
    mode: Mode = Mode.TRADITIONAL
    policy: Optional[PolicyConfig] = None


@dataclass(frozen=True)
class Scenario:
    environment: Environment
    devices: tuple[DeviceConfig, ...] = ()
    profiles: Mapping[str, DeviceProfile] = field(default_factory=dict)
    tunnel: TunnelConfig = TunnelConfig()
    policy: Optional[PolicyConfig] = None
    tick: float = 0.01
    duration: float = 245.0
    seed: int = 1
    seeds: int = 20
    name: str = "scenario"
    reference_trace: Optional[MobilityTrace] = None

    def validate(self) -> "Scenario":
        if not self.tick > 0:
            raise ConfigError("tick must be > 0", path="tick")
        for d in self.devices:
            if d.profile not in self.profiles:
                raise ConfigError(f"unknown profile {d.profile!r}", path=f"devices.{d.name}.profile")
            if d.trace.end_time > self.duration + 1e-9:
                raise ConfigError(f"duration {self.duration} shorter than trace of {d.name} "
                                  f"({d.trace.end_time:.1f} s)", path="duration")
            if d.mode is Mode.TUNNEL and d.policy is None:
                raise ConfigError("TUNNEL devices need a policy section", path=f"devices.{d.name}")
        names = [d.name for d in self.devices]
        if len(set(names)) != len(names):
            raise ConfigError("device names must be unique", path="devices")
        return self

    def with_mode(self, mode: Mode) -> "Scenario":
        """Same scenario with every device switched to ``mode``.

        Devices whose profile lacks tunnel support are dropped from TUNNEL variants.
        """
        devs = []
        for d in self.devices:
            if mode is Mode.TUNNEL and not self.profiles[d.profile].supports_tunnel_client:
                continue
            pol = d.policy if d.policy is not None or mode is not Mode.TUNNEL else self.policy
            if mode is Mode.TRADITIONAL and d.mode is Mode.TUNNEL:
                pol = None
            devs.append(replace(d, mode=mode, policy=pol))
        return replace(self, devices=tuple(devs))

    def with_profiles(self, profiles: Mapping[str, DeviceProfile]) -> "Scenario":
        merged = dict(self.profiles)
        merged.update(profiles)
        return replace(self, profiles=merged)


# -- YAML with line tracking ----------------------------------------------------

def _line_map(text: str) -> dict[tuple, int]:
    lines: dict[tuple, int] = {}

    def walk(node, path):
        lines.setdefault(path, node.start_mark.line + 1)
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                p = path + (str(k.value),)
                lines[p] = k.start_mark.line + 1
                walk(v, p)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                walk(v, path + (i,))

    root = yaml.compose(text, Loader=yaml.SafeLoader)
    if root is not None:
        walk(root, ())
    return lines


class _Ctx:
    def __init__(self, source: str, lines: dict, base_dir: Optional[Path]):
        self.source, self.lines, self.base_dir = source, lines, base_dir

    def line(self, path: tuple) -> Optional[int]:
        while path:
            if path in self.lines:
                return self.lines[path]
            path = path[:-1]
        return self.lines.get(())

    def error(self, msg: str, path: tuple) -> ConfigError:
        return ConfigError(msg, self.source, self.line(path), ".".join(map(str, path)))

    def get(self, d: Mapping, key: str, path: tuple, kind=None, default: Any = ...):
        if not isinstance(d, Mapping):
            raise self.error("expected a mapping", path)
        if key not in d:
            if default is ...:
                raise self.error(f"missing key {key!r}", path)
            return default
        v = d[key]
        if kind is not None:
            try:
                v = kind(v)
            except (TypeError, ValueError):
                raise self.error(f"invalid value {v!r}", path + (key,)) from None
            if isinstance(v, float) and not math.isfinite(v):
                raise self.error("value must be finite", path + (key,))
        return v

    def read_sidecar(self, name: str, path: tuple) -> str:
        candidates = []
        if self.base_dir is not None:
            candidates.append(self.base_dir / name)
        candidates.append(Path(name))
        for c in candidates:
            if c.is_file():
                return c.read_text()
        pkg = resources.files("roamsim.data") / name
        if pkg.is_file():
            return pkg.read_text()
        raise self.error(f"file not found: {name}", path)


def _point(v, ctx, path):
    try:
        x, y = float(v[0]), float(v[1])
    except (TypeError, ValueError, IndexError):
        raise ctx.error(f"expected [x, y], got {v!r}", path) from None
    return (x, y)


def _trace(d, ctx, path) -> MobilityTrace:
    wps, dwell = [], []
    for i, w in enumerate(ctx.get(d, "waypoints", path)):
        wps.append(_point(w, ctx, path + ("waypoints", i)))
        dwell.append(float(w[2]) if len(w) > 2 else 0.0)
    try:
        return MobilityTrace(tuple(wps), ctx.get(d, "speed", path, float, 1.4),
                             ctx.get(d, "start_time", path, float, 0.0), tuple(dwell))
    except ValueError as e:
        raise ctx.error(str(e), path) from None


def _environment(d, ctx) -> Environment:
    path = ("environment",)
    pl = ctx.get(d, "path_loss", path, default={}) or {}
    buildings = tuple(tuple(_point(p, ctx, path + ("buildings", i, j)) for j, p in enumerate(b))
                      for i, b in enumerate(ctx.get(d, "buildings", path, default=[]) or []))
    try:
        model = PathLossModel(
            reference_loss_db=ctx.get(pl, "reference_loss_db", path + ("path_loss",), float, 40.0),
            exponent=ctx.get(pl, "exponent", path + ("path_loss",), float, 3.0),
            shadowing_sigma_db=ctx.get(pl, "shadowing_sigma_db", path + ("path_loss",), float, 0.0),
            wall_penetration_db=ctx.get(pl, "wall_penetration_db", path + ("path_loss",), float, 10.0),
            buildings=buildings,
        )
    except InvalidArgument as e:
        raise ctx.error(str(e), path + ("path_loss",)) from None
    nodes = []
    for i, n in enumerate(ctx.get(d, "nodes", path)):
        p = path + ("nodes", i)
        try:
            nodes.append(RadioNode(
                id=str(ctx.get(n, "id", p)),
                rat=RAT(ctx.get(n, "rat", p)),
                position=_point(ctx.get(n, "position", p), ctx, p + ("position",)),
                tx_power=ctx.get(n, "tx_power", p, float),
                center_freq=ctx.get(n, "center_freq", p, float, 0.0),
                bandwidth=ctx.get(n, "bandwidth", p, float, 20.0),
                channel_label=str(ctx.get(n, "channel", p, default="")),
                cell_id=n.get("cell_id"),
                pci=n.get("pci"),
                network=str(ctx.get(n, "network", p, default="")),
            ))
        except (InvalidArgument, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ctx.error(str(e), p) from None
    try:
        validate_nodes(nodes)
    except InvalidArgument as e:
        raise ctx.error(str(e), path + ("nodes",)) from None
    tables = dict(DEFAULT_RATE_TABLES)
    for metric, steps in (ctx.get(d, "rate_tables", path, default={}) or {}).items():
        if metric not in ("RSSI", "RSRP"):
            raise ctx.error(f"unknown rate table {metric!r}", path + ("rate_tables", metric))
        try:
            tables[metric] = RateTable(tuple(tuple(s) for s in steps))
        except (InvalidArgument, TypeError, ValueError) as e:
            raise ctx.error(str(e), path + ("rate_tables", metric)) from None
    return Environment(tuple(nodes), model, tables)


PROFILE_FIELDS = set(DeviceProfile.__dataclass_fields__) - {"model_name"}


def profiles_from_mapping(data: Mapping, ctx: Optional[_Ctx] = None, path=("profiles",)) -> dict[str, DeviceProfile]:
    ctx = ctx or _Ctx("<profiles>", {}, None)
    out = {}
    if not isinstance(data, Mapping):
        raise ctx.error("expected a mapping of model name to parameters", path)
    for name, params in data.items():
        p = path + (str(name),)
        unknown = set(params or {}) - PROFILE_FIELDS
        if unknown:
            raise ctx.error(f"unknown profile fields {sorted(unknown)}", p)
        try:
            out[str(name)] = DeviceProfile(model_name=str(name), **(params or {}))
        except (TypeError, ValueError) as e:
            raise ctx.error(str(e), p) from None
    return out


def load_profile_library(path: str | os.PathLike) -> dict[str, DeviceProfile]:
    text = Path(path).read_text()
    return profiles_from_mapping(yaml.safe_load(text) or {}, _Ctx(str(path), _line_map(text), None), ())


def dump_profile_library(profiles: Mapping[str, DeviceProfile]) -> str:
    data = {name: {k: v for k, v in p.to_dict().items() if k != "model_name"} for name, p in profiles.items()}
    header = "# Device profile library (one entry per handset model).\n"
    return header + yaml.safe_dump(data, sort_keys=True, default_flow_style=False)


def _policy(d, ctx) -> Optional[PolicyConfig]:
    if not d:
        return None
    path = ("policy",)
    if "profile_text" in d:
        text = d["profile_text"]
    else:
        text = ctx.read_sidecar(ctx.get(d, "profile_file", path), path + ("profile_file",))
    try:
        profile = parse_profile(text)
    except ProfileError as e:
        raise ctx.error(str(e), path) from None
    geo = None
    if d.get("geofence"):
        try:
            geo = geofence_from_dict(d["geofence"])
        except (GeofenceError, KeyError, TypeError, ValueError) as e:
            raise ctx.error(str(e), path + ("geofence",)) from None
    hy = d.get("hysteresis") or {}
    return PolicyConfig(profile, geo, ctx.get(hy, "margin_db", path + ("hysteresis",), float, 3.0),
                        ctx.get(hy, "dwell_s", path + ("hysteresis",), float, 2.0))


def _flows(d, ctx, duration) -> dict[str, FlowSpec]:
    out = {}
    for name, spec in (d or {}).items():
        p = ("flows", str(name))
        spec = dict(spec or {})
        cls = spec.pop("class", None)
        if cls is None:
            raise ctx.error("missing key 'class'", p)
        spec.setdefault("duration", duration)
        try:
            out[str(name)] = FlowSpec(id=str(name), cls=cls, **spec)
        except (TypeError, ValueError) as e:
            raise ctx.error(str(e), p) from None
    return out


def scenario_from_text(text: str, source: str = "<scenario>", base_dir: Optional[Path] = None) -> Scenario:
    try:
        data = yaml.safe_load(text)
        lines = _line_map(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(e, 'problem', e)}", source,
                          mark.line + 1 if mark else None) from None
    if not isinstance(data, Mapping):
        raise ConfigError("scenario must be a mapping", source, 1)
    ctx = _Ctx(source, lines, base_dir)
    known = {"name", "seed", "seeds", "tick", "duration", "environment", "profiles", "tunnel", "policy",
             "mobility", "flows", "devices"}
    for key in data:
        if key not in known:
            raise ctx.error(f"unknown section {key!r}", (str(key),))

    tick = ctx.get(data, "tick", (), float, 0.01)
    duration = ctx.get(data, "duration", (), float, 245.0)
    if not tick > 0:
        raise ctx.error("tick must be > 0", ("tick",))
    env = _environment(ctx.get(data, "environment", ()), ctx)

    prof = data.get("profiles", {})
    if isinstance(prof, str):
        ptext = ctx.read_sidecar(prof, ("profiles",))
        profiles = profiles_from_mapping(yaml.safe_load(ptext) or {}, _Ctx(prof, _line_map(ptext), None), ())
    else:
        profiles = profiles_from_mapping(prof or {}, ctx)

    tun = dict(data.get("tunnel") or {})
    try:
        tunnel = TunnelConfig(**tun)
    except (TypeError, ValueError) as e:
        raise ctx.error(str(e), ("tunnel",)) from None

    policy = _policy(data.get("policy"), ctx)
    default_trace = _trace(data["mobility"], ctx, ("mobility",)) if data.get("mobility") else None
    flows = _flows(data.get("flows"), ctx, duration)

    devices = []
    for i, dev in enumerate(data.get("devices") or []):
        p = ("devices", i)
        name = str(ctx.get(dev, "name", p))
        trace = _trace(dev["mobility"], ctx, p + ("mobility",)) if dev.get("mobility") else default_trace
        if trace is None:
            raise ctx.error("no mobility given and no scenario default", p)
        fl = []
        for j, fname in enumerate(dev.get("flows") or []):
            if fname not in flows:
                raise ctx.error(f"unknown flow {fname!r}", p + ("flows", j))
            fl.append(flows[fname])
        try:
            mode = Mode(ctx.get(dev, "mode", p, default="TRADITIONAL"))
        except ValueError:
            raise ctx.error(f"unknown mode {dev.get('mode')!r}", p + ("mode",)) from None
        use_policy = dev.get("policy", mode is Mode.TUNNEL)
        if use_policy and policy is None:
            raise ctx.error("device requests a policy but the scenario has none", p)
        profile_name = str(ctx.get(dev, "profile", p))
        if profile_name not in profiles:
            raise ctx.error(f"unknown profile {profile_name!r}", p + ("profile",))
        devices.append(DeviceConfig(name, profile_name, trace, tuple(fl), mode, policy if use_policy else None))

    scenario = Scenario(
        environment=env, devices=tuple(devices), profiles=profiles, tunnel=tunnel, policy=policy,
        tick=tick, duration=duration, seed=int(ctx.get(data, "seed", (), int, 1)),
        seeds=int(ctx.get(data, "seeds", (), int, 20)), name=str(data.get("name", "scenario")),
        reference_trace=default_trace,
    )
    try:
        return scenario.validate()
    except ConfigError as e:
        key = tuple(e.path.split(".")) if e.path else ()
        raise ConfigError(e.message, source, ctx.line(key), e.path) from None


def load_scenario(path: str | os.PathLike) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read: {e.strerror}", str(path)) from None
    return scenario_from_text(text, str(path), path.parent)


def default_scenario_path() -> Path:
    return Path(str(resources.files("roamsim.data") / "default_scenario.yaml"))


def load_default_scenario() -> Scenario:
    return load_scenario(default_scenario_path())
