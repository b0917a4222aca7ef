"""Home server domain logic.

Holds the device registry and everything that decides on its own to act:
threshold rules with hysteresis, device-to-device bindings, time-of-day
timers, the heating thermostat, and named modes with an optional automatic
trigger (e.g. enter Night Mode when it is late and the room has been dark for
a minute). Decisions come out as CommandRequest values; the simulation kernel
owns actually radioing them to nodes and reporting delivery outcomes back.

Rules are edge-triggered: a threshold rule fires once when its condition
first becomes true and stays quiet until the value has retreated past the
threshold by the hysteresis margin. That keeps a reading that hovers around
the threshold from machine-gunning commands.

All bookkeeping that should survive a restart (readings, events, mode
changes, users) goes through the append-only store.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .protocol import Action, ActuatorId, SensorId
from .store import EventKind, Severity, Store, StoredEvent, StoredMode, StoredReading

STATE_ON = "On"
STATE_OFF = "Off"
STATE_UNKNOWN = "Unknown"

SENSOR_KINDS = {
    SensorId.TEMPERATURE: "temperature",
    SensorId.LIGHT: "light",
    SensorId.MOTION: "motion",
}

ACTUATOR_IDS = {
    "lamp": ActuatorId.LAMP,
    "heater": ActuatorId.HEATER,
    "pan": ActuatorId.PAN_MOTOR,
    "tilt": ActuatorId.TILT_MOTOR,
}

ACTIONS = {
    "on": Action.ON,
    "off": Action.OFF,
    "set_level": Action.SET_LEVEL,
    "step": Action.STEP,
}

TILT_LIMIT_DEG = 151.5

DEFAULT_HYSTERESIS = 2.0
THERMOSTAT_BAND = 1.0
THERMOSTAT_STALE_S = 30.0

# kinds that are alarms by nature; everything else defaults to Info severity
ALARM_KINDS = frozenset({
    EventKind.INTRUSION,
    EventKind.THRESHOLD_LOW,
    EventKind.THRESHOLD_HIGH,
    EventKind.LIMIT_REACHED,
    EventKind.DELIVERY_FAILED,
    EventKind.AUTH_FAILURE,
})


@dataclass
class Device:
    name: str
    kind: str  # temperature|light|motion|lamp|heater|pan|tilt
    node: int
    group: str = ""
    state: str = STATE_UNKNOWN
    value: float | None = None
    set_point: float | None = None
    last_update: float | None = None

    @property
    def is_sensor(self) -> bool:
        return self.kind in ("temperature", "light", "motion")


@dataclass(frozen=True)
class CommandRequest:
    device: str
    node: int
    actuator_id: ActuatorId
    action: Action
    argument: int = 0
    origin: str = "rule"


@dataclass
class Rule:
    name: str
    source: str
    op: str                 # ">", "<", "=="
    threshold: float
    target: str
    action: str             # on|off|set_level|step
    argument: int = 0
    hysteresis: float = DEFAULT_HYSTERESIS
    enabled: bool = True
    armed: bool = True      # edge state: ready to fire
    warned_missing: bool = False

    def condition(self, value: float) -> bool:
        if self.op == ">":
            return value > self.threshold
        if self.op == "<":
            return value < self.threshold
        if self.op == "==":
            return value == self.threshold
        raise ValueError("unknown rule operator %r" % self.op)

    def rearm_condition(self, value: float) -> bool:
        if self.op == ">":
            return value < self.threshold - self.hysteresis
        if self.op == "<":
            return value > self.threshold + self.hysteresis
        return value != self.threshold

    @property
    def event_kind(self) -> EventKind:
        if self.op == "<":
            return EventKind.THRESHOLD_LOW
        if self.op == ">":
            return EventKind.THRESHOLD_HIGH
        return EventKind.NOTE  # equality bindings are not threshold alarms


@dataclass
class Timer:
    name: str
    time_of_day: float      # seconds since midnight
    target: str
    action: str
    argument: int = 0
    last_fired_day: int = -1


@dataclass
class Thermostat:
    sensor: str
    heater: str
    set_point: float = 21.0
    band: float = THERMOSTAT_BAND
    stale_after: float = THERMOSTAT_STALE_S
    enabled: bool = True
    last_commanded: str | None = None
    stale_alerted: bool = False


@dataclass
class ModeTrigger:
    source: str             # light device watched for darkness
    window_start: float     # time of day, seconds; window may wrap midnight
    window_end: float
    light_below: float = 20.0
    sustain: float = 60.0
    sustained_since: float | None = None
    fired_this_window: bool = False
    in_window: bool = False

    def window_contains(self, tod: float) -> bool:
        if self.window_start <= self.window_end:
            return self.window_start <= tod < self.window_end
        return tod >= self.window_start or tod < self.window_end


@dataclass
class ModeConfig:
    name: str
    entries: list[tuple[str, str, int]] = field(default_factory=list)  # device, action, arg
    arm: bool = False
    trigger: ModeTrigger | None = None


class HomeCore:
    """Device registry plus the automation that drives commands."""

    def __init__(self, store: Store, armed: bool = False):
        self.store = store
        self.armed = armed
        self.devices: dict[str, Device] = {}
        self.rules: list[Rule] = []
        self.timers: list[Timer] = []
        self.thermostats: list[Thermostat] = []
        self.modes: dict[str, ModeConfig] = {}
        self._commands: list[CommandRequest] = []
        self._events: list[StoredEvent] = []

    # -- registry ------------------------------------------------------------------

    def add_device(self, device: Device) -> Device:
        if device.name in self.devices:
            raise ValueError("duplicate device name %r" % device.name)
        self.devices[device.name] = device
        return device

    def device(self, name: str) -> Device | None:
        return self.devices.get(name)

    def add_rule(self, rule: Rule) -> None:
        self.rules.append(rule)

    def add_timer(self, timer: Timer) -> None:
        self.timers.append(timer)

    def add_thermostat(self, thermostat: Thermostat) -> None:
        self.thermostats.append(thermostat)

    def add_mode(self, mode: ModeConfig) -> None:
        self.modes[mode.name] = mode

    @property
    def current_mode(self) -> str | None:
        return self.store.current_mode

    # -- outboxes drained by the kernel ---------------------------------------------

    def drain_commands(self) -> list[CommandRequest]:
        out, self._commands = self._commands, []
        return out

    def drain_events(self) -> list[StoredEvent]:
        out, self._events = self._events, []
        return out

    def _emit(self, t: float, kind: EventKind, device: str, message: str,
              severity: Severity | None = None) -> StoredEvent:
        if severity is None:
            severity = Severity.ALERT if kind in ALARM_KINDS else Severity.INFO
        event = StoredEvent(t, kind, device, message, severity)
        self.store.add_event(event)
        self._events.append(event)
        return event

    def _request(self, target: Device, action: str, argument: int, origin: str) -> None:
        actuator = ACTUATOR_IDS.get(target.kind)
        if actuator is None:
            return
        self._commands.append(CommandRequest(
            target.name, target.node, actuator, ACTIONS[action], argument, origin))

    # -- readings ---------------------------------------------------------------------

    def ingest_reading(self, t: float, node: int, sensor: int, value: int,
                       rssi: int) -> Device | None:
        self.store.add_reading(StoredReading(t, node, sensor, value, rssi))
        kind = SENSOR_KINDS.get(sensor)  # IntEnum keys hash like plain ints
        device = None
        for candidate in self.devices.values():
            if candidate.node == node and candidate.kind == kind:
                device = candidate
                break
        if device is None:
            return None

        previous = device.value
        device.value = value / 100.0 if kind == "temperature" else float(value)
        device.last_update = t
        if kind == "motion":
            device.state = STATE_ON if value else STATE_OFF
            rising = value == 1 and (previous is None or previous == 0)
            if rising and self.armed:
                self._emit(t, EventKind.INTRUSION, device.name, "motion while armed")
        elif device.state == STATE_UNKNOWN:
            device.state = STATE_ON  # sensor is alive and reporting

        self._evaluate_rules(t, device)
        return device

    def _evaluate_rules(self, t: float, source: Device) -> None:
        for rule in self.rules:
            if not rule.enabled or rule.source != source.name or source.value is None:
                continue
            if rule.armed and rule.condition(source.value):
                rule.armed = False
                target = self.devices.get(rule.target)
                if target is None:
                    if not rule.warned_missing:
                        rule.warned_missing = True
                        self._emit(t, EventKind.NOTE, rule.target,
                                   "rule %s suspended, target missing" % rule.name,
                                   Severity.ALERT)
                    continue
                self._emit(t, rule.event_kind, target.name,
                           "rule %s: %s %s" % (rule.name, rule.action, target.name))
                self._request(target, rule.action, rule.argument, "rule")
            elif not rule.armed and rule.rearm_condition(source.value):
                rule.armed = True

    # -- periodic duties ------------------------------------------------------------------

    def tick(self, now: float, time_of_day: float, day: int) -> None:
        self._run_timers(now, time_of_day, day)
        self._run_thermostats(now)
        self._run_mode_triggers(now, time_of_day)

    def _run_timers(self, now: float, tod: float, day: int) -> None:
        for timer in self.timers:
            if timer.last_fired_day >= day or tod < timer.time_of_day:
                continue
            timer.last_fired_day = day
            target = self.devices.get(timer.target)
            if target is None:
                self._emit(now, EventKind.NOTE, timer.target,
                           "timer %s target missing" % timer.name, Severity.ALERT)
                continue
            self._emit(now, EventKind.TIMER_FIRED, target.name,
                       "timer %s: %s %s" % (timer.name, timer.action, target.name))
            self._request(target, timer.action, timer.argument, "timer")

    def _run_thermostats(self, now: float) -> None:
        for stat in self.thermostats:
            if not stat.enabled:
                continue
            sensor = self.devices.get(stat.sensor)
            heater = self.devices.get(stat.heater)
            if sensor is None or heater is None:
                continue
            stale = (sensor.last_update is None
                     or now - sensor.last_update > stat.stale_after)
            if stale:
                if not stat.stale_alerted:
                    stat.stale_alerted = True
                    self._emit(now, EventKind.NOTE, stat.sensor,
                               "thermostat input stale, holding heater", Severity.ALERT)
                continue
            stat.stale_alerted = False
            assert sensor.value is not None
            half = stat.band / 2.0
            if sensor.value < stat.set_point - half and stat.last_commanded != "on":
                stat.last_commanded = "on"
                self._request(heater, "on", 0, "thermostat")
            elif sensor.value > stat.set_point + half and stat.last_commanded != "off":
                stat.last_commanded = "off"
                self._request(heater, "off", 0, "thermostat")

    def _run_mode_triggers(self, now: float, tod: float) -> None:
        for mode in self.modes.values():
            trig = mode.trigger
            if trig is None:
                continue
            inside = trig.window_contains(tod)
            if inside and not trig.in_window:
                trig.fired_this_window = False
                trig.sustained_since = None
            trig.in_window = inside
            if not inside:
                trig.sustained_since = None
                continue
            source = self.devices.get(trig.source)
            if source is None or source.value is None:
                continue
            if source.value < trig.light_below:
                if trig.sustained_since is None:
                    trig.sustained_since = now
                sustained = now - trig.sustained_since >= trig.sustain
                if sustained and not trig.fired_this_window and self.current_mode != mode.name:
                    trig.fired_this_window = True
                    self.apply_mode(mode.name, now, origin="trigger")
            else:
                trig.sustained_since = None

    # -- modes -------------------------------------------------------------------------------

    def apply_mode(self, name: str, now: float, origin: str = "client") -> bool:
        mode = self.modes.get(name)
        if mode is None:
            return False
        self.store.set_mode(StoredMode(now, name))
        self._emit(now, EventKind.MODE_CHANGED, "system", name)
        self.armed = mode.arm
        for device_name, action, argument in mode.entries:
            target = self.devices.get(device_name)
            if target is None:
                self._emit(now, EventKind.NOTE, device_name,
                           "mode %s entry skipped, device missing" % name, Severity.ALERT)
                continue
            self._request(target, action, argument, origin)
        return True

    # -- confirmed command effects -------------------------------------------------------------

    def apply_confirmed(self, device_name: str, action: Action, argument: int,
                        t: float) -> Device | None:
        """Fold an acknowledged command into the registry state."""
        device = self.devices.get(device_name)
        if device is None:
            return None
        device.last_update = t
        if device.kind == "lamp":
            if action == Action.ON:
                device.state = STATE_ON
            elif action == Action.OFF:
                device.state = STATE_OFF
            elif action == Action.SET_LEVEL:
                device.state = STATE_ON
                device.value = float(argument)
        elif device.kind == "heater":
            device.state = STATE_ON if action == Action.ON else STATE_OFF
        elif device.kind == "pan" and action == Action.STEP:
            device.state = STATE_ON
            device.value = ((device.value or 0.0) + argument) % 360.0
        elif device.kind == "tilt" and action == Action.STEP:
            device.state = STATE_ON
            requested = (device.value or 0.0) + argument
            clamped = min(TILT_LIMIT_DEG, max(-TILT_LIMIT_DEG, requested))
            device.value = clamped
            if clamped != requested:
                self._emit(t, EventKind.LIMIT_REACHED, device_name,
                           "tilt clamped to %.1f" % clamped)
        return device

    # -- client-facing helpers --------------------------------------------------------------------

    def set_set_point(self, device_name: str, value: float, now: float) -> bool:
        for stat in self.thermostats:
            if device_name in (stat.sensor, stat.heater):
                stat.set_point = value
                stat.last_commanded = None  # re-decide against the new target
                device = self.devices.get(stat.heater)
                if device is not None:
                    device.set_point = value
                self._emit(now, EventKind.NOTE, device_name,
                           "set point %.2f" % value)
                return True
        return False

    def record_delivery_failed(self, device_name: str, now: float) -> None:
        self._emit(now, EventKind.DELIVERY_FAILED, device_name,
                   "command not delivered")

    def set_armed(self, armed: bool, now: float) -> None:
        if armed != self.armed:
            self.armed = armed
            self._emit(now, EventKind.NOTE, "system",
                       "armed" if armed else "disarmed")

    def history(self, device_name: str, since: float | None = None,
                until: float | None = None, limit: int | None = None) -> list[StoredReading]:
        device = self.devices.get(device_name)
        if device is None or not device.is_sensor:
            return []
        sensor = {v: k for k, v in SENSOR_KINDS.items()}[device.kind]
        return self.store.query_readings(node=device.node, sensor=int(sensor),
                                         since=since, until=until, limit=limit)
