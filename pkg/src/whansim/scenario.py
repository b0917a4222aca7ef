"""Scenario and configuration files.

A scenario is a line-oriented text file of `[section]` headers and
`key = value` pairs. `#` or `;` starts a comment; blank lines are ignored.
Sections may repeat where that makes sense (nodes, users, rules, timers,
modes, events). Unknown sections or keys, bad values, and missing required
keys all raise ScenarioError carrying the file name and line number.

Sections:

    [config]      global knobs: clock, room physics, channel noise, ports
    [node]        one radio node: address, position, named devices
    [user]        login account (password is hashed at load time)
    [rule]        threshold or binding rule, e.g. condition = < 55
    [timer]       time-of-day command, e.g. at = 08:05:00
    [thermostat]  temperature sensor + heater pair with a set point
    [mode]        named device preset, optionally self-triggering
    [event]       scheduled room disturbance: hot_air, light_cover,
                  bright_source, occupancy

Times of day are HH:MM or HH:MM:SS. Trigger windows are HH:MM-HH:MM and may
wrap midnight.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field


class ScenarioError(Exception):
    def __init__(self, filename: str, line_no: int, message: str):
        self.filename = filename
        self.line_no = line_no
        self.message = message
        super().__init__("%s:%d: %s" % (filename, line_no, message))


def parse_time_of_day(text: str) -> float:
    parts = text.strip().split(":")
    if len(parts) not in (2, 3) or not all(p.isdigit() for p in parts):
        raise ValueError("expected HH:MM or HH:MM:SS, got %r" % text)
    hours, minutes = int(parts[0]), int(parts[1])
    seconds = int(parts[2]) if len(parts) == 3 else 0
    if hours > 23 or minutes > 59 or seconds > 59:
        raise ValueError("time of day out of range: %r" % text)
    return float(hours * 3600 + minutes * 60 + seconds)


def parse_window(text: str) -> tuple[float, float]:
    lo, sep, hi = text.partition("-")
    if not sep:
        raise ValueError("expected HH:MM-HH:MM, got %r" % text)
    return parse_time_of_day(lo), parse_time_of_day(hi)


def parse_bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("on", "yes", "true", "1"):
        return True
    if value in ("off", "no", "false", "0"):
        return False
    raise ValueError("expected on/off, got %r" % text)


DEVICE_KINDS = ("temperature", "light", "motion", "lamp", "heater", "pan", "tilt")
RULE_OPS = (">", "<", "==")
ACTION_NAMES = ("on", "off", "set_level", "step")
EVENT_KINDS = ("hot_air", "light_cover", "bright_source", "occupancy")


@dataclass
class NodeSpec:
    address: int
    x: float
    y: float
    devices: list[tuple[str, str]] = field(default_factory=list)  # (name, kind)
    group: str = ""


@dataclass
class UserSpec:
    name: str
    password: str
    admin: bool = False


@dataclass
class RuleSpec:
    name: str
    source: str
    op: str
    threshold: float
    target: str
    action: str
    argument: int = 0
    hysteresis: float = 2.0


@dataclass
class TimerSpec:
    name: str
    at: float
    target: str
    action: str
    argument: int = 0


@dataclass
class ThermostatSpec:
    sensor: str
    heater: str
    set_point: float = 21.0


@dataclass
class ModeSpec:
    name: str
    entries: list[tuple[str, str, int]] = field(default_factory=list)
    arm: bool = False
    trigger_window: tuple[float, float] | None = None
    trigger_source: str = ""
    trigger_light_below: float = 20.0
    trigger_sustain: float = 60.0


@dataclass
class EventSpec:
    kind: str
    start: float
    duration: float
    delta: float = 0.0   # hot_air: deg C per second
    scale: float = 1.0   # light_cover
    boost: float = 0.0   # bright_source


@dataclass
class ScenarioConfig:
    start_clock: float = 8 * 3600.0
    dt: float = 0.1
    seed: int = 0
    ambient_light: float = 88.0
    initial_temperature: float = 21.0
    t_outside: float = 10.0
    k_loss: float = 0.001
    k_heat: float = 0.02
    armed: bool = False
    ap_x: float = 0.0
    ap_y: float = 0.0
    rssi_sigma: float = 2.0
    fade_probability: float = 0.1
    report_period: float = 5.0
    camera_pan_device: str = ""
    camera_tilt_device: str = ""
    nodes: list[NodeSpec] = field(default_factory=list)
    users: list[UserSpec] = field(default_factory=list)
    rules: list[RuleSpec] = field(default_factory=list)
    timers: list[TimerSpec] = field(default_factory=list)
    thermostats: list[ThermostatSpec] = field(default_factory=list)
    modes: list[ModeSpec] = field(default_factory=list)
    events: list[EventSpec] = field(default_factory=list)


def _parse_devices(text: str) -> list[tuple[str, str]]:
    out = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        name, sep, kind = chunk.partition(":")
        if not sep or kind.strip() not in DEVICE_KINDS:
            raise ValueError("expected name:kind with kind in %s, got %r"
                             % ("/".join(DEVICE_KINDS), chunk))
        out.append((name.strip(), kind.strip()))
    if not out:
        raise ValueError("empty device list")
    return out


def _parse_mode_entries(text: str) -> list[tuple[str, str, int]]:
    out = []
    for chunk in text.split(","):
        tokens = chunk.split()
        if not tokens:
            continue
        if len(tokens) == 2:
            device, action = tokens
            argument = 0
        elif len(tokens) == 3:
            device, action, arg = tokens
            argument = int(arg)
        else:
            raise ValueError("expected 'device action [arg]', got %r" % chunk.strip())
        if action not in ACTION_NAMES:
            raise ValueError("unknown action %r" % action)
        out.append((device, action, argument))
    if not out:
        raise ValueError("empty mode entry list")
    return out


def _parse_condition(text: str) -> tuple[str, float]:
    tokens = text.split()
    if len(tokens) != 2 or tokens[0] not in RULE_OPS:
        raise ValueError("expected '<op> <value>' with op in >/</==, got %r" % text)
    return tokens[0], float(tokens[1])


# key -> (attribute, parser); config keys write straight onto ScenarioConfig
_CONFIG_KEYS = {
    "start_clock": ("start_clock", parse_time_of_day),
    "dt": ("dt", float),
    "seed": ("seed", int),
    "ambient_light": ("ambient_light", float),
    "initial_temperature": ("initial_temperature", float),
    "t_outside": ("t_outside", float),
    "k_loss": ("k_loss", float),
    "k_heat": ("k_heat", float),
    "armed": ("armed", parse_bool),
    "ap_x": ("ap_x", float),
    "ap_y": ("ap_y", float),
    "rssi_sigma": ("rssi_sigma", float),
    "fade_probability": ("fade_probability", float),
    "report_period": ("report_period", float),
    "camera_pan_device": ("camera_pan_device", str),
    "camera_tilt_device": ("camera_tilt_device", str),
}

# section -> {key: parser}; None parser means plain string
_SECTION_KEYS = {
    "node": {"address": int, "x": float, "y": float, "devices": _parse_devices,
             "group": None},
    "user": {"name": None, "password": None, "admin": parse_bool},
    "rule": {"name": None, "source": None, "condition": _parse_condition,
             "target": None, "action": None, "argument": int, "hysteresis": float},
    "timer": {"name": None, "at": parse_time_of_day, "target": None,
              "action": None, "argument": int},
    "thermostat": {"sensor": None, "heater": None, "set_point": float},
    "mode": {"name": None, "set": _parse_mode_entries, "arm": parse_bool,
             "trigger_window": parse_window, "trigger_source": None,
             "trigger_light_below": float, "trigger_sustain": float},
    "event": {"kind": None, "start": float, "duration": float,
              "delta": float, "scale": float, "boost": float},
}

_REQUIRED = {
    "node": ("address", "x", "y", "devices"),
    "user": ("name", "password"),
    "rule": ("name", "source", "condition", "target", "action"),
    "timer": ("name", "at", "target", "action"),
    "thermostat": ("sensor", "heater"),
    "mode": ("name", "set"),
    "event": ("kind", "start", "duration"),
}


def _finish_section(cfg: ScenarioConfig, section: str, fields: dict,
                    filename: str, line_no: int) -> None:
    if section == "config":
        return
    for key in _REQUIRED[section]:
        if key not in fields:
            raise ScenarioError(filename, line_no,
                                "[%s] is missing required key %r" % (section, key))
    if section == "node":
        cfg.nodes.append(NodeSpec(fields["address"], fields["x"], fields["y"],
                                  fields["devices"], fields.get("group", "")))
    elif section == "user":
        cfg.users.append(UserSpec(fields["name"], fields["password"],
                                  fields.get("admin", False)))
    elif section == "rule":
        op, threshold = fields["condition"]
        if fields["action"] not in ACTION_NAMES:
            raise ScenarioError(filename, line_no,
                                "unknown rule action %r" % fields["action"])
        cfg.rules.append(RuleSpec(fields["name"], fields["source"], op, threshold,
                                  fields["target"], fields["action"],
                                  fields.get("argument", 0),
                                  fields.get("hysteresis", 2.0)))
    elif section == "timer":
        if fields["action"] not in ACTION_NAMES:
            raise ScenarioError(filename, line_no,
                                "unknown timer action %r" % fields["action"])
        cfg.timers.append(TimerSpec(fields["name"], fields["at"], fields["target"],
                                    fields["action"], fields.get("argument", 0)))
    elif section == "thermostat":
        cfg.thermostats.append(ThermostatSpec(fields["sensor"], fields["heater"],
                                              fields.get("set_point", 21.0)))
    elif section == "mode":
        cfg.modes.append(ModeSpec(fields["name"], fields["set"],
                                  fields.get("arm", False),
                                  fields.get("trigger_window"),
                                  fields.get("trigger_source", ""),
                                  fields.get("trigger_light_below", 20.0),
                                  fields.get("trigger_sustain", 60.0)))
    elif section == "event":
        if fields["kind"] not in EVENT_KINDS:
            raise ScenarioError(filename, line_no,
                                "unknown event kind %r, expected one of %s"
                                % (fields["kind"], "/".join(EVENT_KINDS)))
        cfg.events.append(EventSpec(fields["kind"], fields["start"], fields["duration"],
                                    fields.get("delta", 0.0), fields.get("scale", 1.0),
                                    fields.get("boost", 0.0)))


def parse_scenario(text: str, filename: str = "scenario") -> ScenarioConfig:
    cfg = ScenarioConfig()
    section: str | None = None
    section_line = 0
    fields: dict = {}

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ScenarioError(filename, line_no, "unterminated section header")
            if section is not None:
                _finish_section(cfg, section, fields, filename, section_line)
            section = line[1:-1].strip().lower()
            if section != "config" and section not in _SECTION_KEYS:
                raise ScenarioError(filename, line_no, "unknown section [%s]" % section)
            section_line = line_no
            fields = {}
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ScenarioError(filename, line_no, "expected key = value, got %r" % line)
        key = key.strip().lower()
        value = value.strip()
        if section is None:
            raise ScenarioError(filename, line_no, "key %r outside any section" % key)
        if section == "config":
            if key not in _CONFIG_KEYS:
                raise ScenarioError(filename, line_no, "unknown [config] key %r" % key)
            attr, parser = _CONFIG_KEYS[key]
            try:
                setattr(cfg, attr, parser(value))
            except ValueError as exc:
                raise ScenarioError(filename, line_no, str(exc)) from None
        else:
            keys = _SECTION_KEYS[section]
            if key not in keys:
                raise ScenarioError(filename, line_no,
                                    "unknown [%s] key %r" % (section, key))
            parser = keys[key]
            try:
                fields[key] = value if parser is None else parser(value)
            except ValueError as exc:
                raise ScenarioError(filename, line_no, str(exc)) from None

    if section is not None:
        _finish_section(cfg, section, fields, filename, section_line)

    _validate(cfg, filename)
    return cfg


def _validate(cfg: ScenarioConfig, filename: str) -> None:
    seen_nodes: set[int] = set()
    seen_devices: set[str] = set()
    for node in cfg.nodes:
        if node.address in seen_nodes or node.address == 0:
            raise ScenarioError(filename, 0, "node address %d reused or reserved"
                                % node.address)
        seen_nodes.add(node.address)
        for name, _kind in node.devices:
            if name in seen_devices:
                raise ScenarioError(filename, 0, "device name %r reused" % name)
            seen_devices.add(name)
    known_modes = {m.name for m in cfg.modes}
    for mode in cfg.modes:
        if mode.trigger_window is not None and not mode.trigger_source:
            raise ScenarioError(filename, 0,
                                "mode %r has a trigger window but no trigger_source"
                                % mode.name)
    del known_modes


def load_scenario(path: str) -> ScenarioConfig:
    """Load from a filesystem path, or a packaged scenario name like 'demo'."""
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_scenario(fh.read(), filename=path)
    except FileNotFoundError:
        resource = importlib.resources.files("whansim") / "scenarios" / ("%s.cfg" % path)
        if resource.is_file():
            return parse_scenario(resource.read_text(encoding="utf-8"), filename=path)
        raise
