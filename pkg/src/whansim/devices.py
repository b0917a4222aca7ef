"""End device and environment simulation.

A room carries a first-order thermal model (Euler-integrated at the
simulation tick), a base light level with scheduled modifiers, and scheduled
occupancy. End devices sample the room through their sensors, drive lamp /
heater / camera-gimbal actuators, and duty-cycle their radio: readings go out
every reporting period, each data frame is retried until acked (budget 3
retries at 200 ms), and inbound commands pass duplicate detection before they
touch actuator state.

Thermal step:  T += dt * (k_loss*(T_outside - T) + k_heat*heater_on + event deltas)
Light level :  clamp(base * prod(scales) + sum(boosts), 0, 100)
Motion      :  PIR latch holds for 3 s past the end of the occupancy event;
               overlapping detections extend the latch (merge into one).

Current draw bookkeeping follows the measured component table: the radio
dominates (23.50 mA active), so average current is essentially linear in the
active duty fraction down to the microamp sensor floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .protocol import (
    Action,
    ActuatorId,
    CommandPayload,
    DedupState,
    FRESH,
    FrameKind,
    RadioFrame,
    ReadingPayload,
    SensorId,
    make_ack,
    next_txid,
)

AP_ADDRESS = 0

TILT_LIMIT_DEG = 151.5  # total traversable tilt = 303 degrees, split symmetrically
MOTION_LATCH_S = 3.0

# Tick times arrive as float multiples of dt; comparisons against scheduled
# boundaries tolerate accumulated rounding well below any sensible tick size.
TIME_EPS = 1e-9


def in_window(now: float, start: float, end: float) -> bool:
    return start - TIME_EPS <= now < end - TIME_EPS

DEFAULT_REPORT_PERIOD_S = 5.0
DEFAULT_RETRY_LIMIT = 3
DEFAULT_RETRY_SPACING_S = 0.2


# -- Environment ---------------------------------------------------------------


@dataclass
class OccupancyEvent:
    start: float
    duration: float

    @property
    def end(self) -> float:
        return self.start + self.duration

    def active(self, now: float) -> bool:
        if self.duration == 0:  # instantaneous walk-past: one-tick impulse
            return abs(now - self.start) < TIME_EPS
        return in_window(now, self.start, self.end)


@dataclass
class HeatEvent:
    start: float
    duration: float
    delta_c_per_s: float

    @property
    def end(self) -> float:
        return self.start + self.duration

    def active(self, now: float) -> bool:
        return in_window(now, self.start, self.end)


@dataclass
class LightModifier:
    start: float
    duration: float
    scale: float = 1.0
    boost: float = 0.0

    @property
    def end(self) -> float:
        return self.start + self.duration

    def active(self, now: float) -> bool:
        return in_window(now, self.start, self.end)


@dataclass
class RoomEnv:
    temperature: float = 21.0
    ambient_light: float = 88.0
    k_loss: float = 0.001     # 1/s toward outside temperature
    k_heat: float = 0.02      # deg C per second while the heater runs
    t_outside: float = 10.0
    occupancy_events: list[OccupancyEvent] = field(default_factory=list)
    heat_events: list[HeatEvent] = field(default_factory=list)
    light_modifiers: list[LightModifier] = field(default_factory=list)
    diurnal: list[tuple[float, float]] | None = None  # (time-of-day s, light %)
    now: float = 0.0

    def step(self, heater_on: bool, dt: float, now: float | None = None) -> "RoomEnv":
        if dt <= 0:
            raise ValueError("dt must be positive")
        if now is not None:
            self.now = now  # caller-supplied exact tick time, no drift
        rate = self.k_loss * (self.t_outside - self.temperature)
        if heater_on:
            rate += self.k_heat
        for ev in self.heat_events:
            if ev.active(self.now):
                rate += ev.delta_c_per_s
        self.temperature += dt * rate
        self.now += dt
        return self

    def base_light(self, time_of_day: float | None = None) -> float:
        if self.diurnal and time_of_day is not None:
            pts = self.diurnal
            tod = time_of_day % 86400.0
            for (t0, l0), (t1, l1) in zip(pts, pts[1:]):
                if t0 <= tod <= t1:
                    return l0 + (l1 - l0) * (tod - t0) / (t1 - t0)
            return pts[-1][1] if tod > pts[-1][0] else pts[0][1]
        return self.ambient_light

    def light_level(self, time_of_day: float | None = None) -> float:
        level = self.base_light(time_of_day)
        for mod in self.light_modifiers:
            if mod.active(self.now):
                level = level * mod.scale + mod.boost
        return min(100.0, max(0.0, level))

    def occupancy_end_if_active(self) -> float | None:
        ends = [ev.end for ev in self.occupancy_events if ev.active(self.now)]
        return max(ends) if ends else None


# -- Power accounting ----------------------------------------------------------


@dataclass(frozen=True)
class PowerProfile:
    """Measured component currents (mA) and supply voltages (V)."""

    i_temp: float = 2.26e-3
    i_motion: float = 1.90e-3
    i_light: float = 2.16e-3
    i_ed_active: float = 23.50
    i_expansion: float = 2100.0
    i_radio_sleep: float = 1.9e-3
    i_motor: float = 860.0  # each of the two gimbal motors
    v_temp: float = 2.9492
    v_motion: float = 2.9121
    v_light: float = 0.5323
    v_ed: float = 3.0430
    v_expansion: float = 5.0708

    def __post_init__(self):
        for name in ("i_temp", "i_motion", "i_light", "i_ed_active", "i_expansion", "i_radio_sleep"):
            if getattr(self, name) <= 0:
                raise ValueError("%s must be positive" % name)

    @property
    def i_sleep_floor(self) -> float:
        """Radio asleep, sensors still powered."""
        return self.i_radio_sleep + self.i_temp + self.i_motion + self.i_light

    @property
    def i_expansion_other(self) -> float:
        """Expansion-board draw not attributed to the two motors."""
        return self.i_expansion - 2.0 * self.i_motor


def duty_cycle_current(profile: PowerProfile, active_fraction: float) -> float:
    """Average ED current in mA for a given radio-active duty fraction."""
    if not 0.0 <= active_fraction <= 1.0:
        raise ValueError("active_fraction must be in [0, 1]")
    return (
        active_fraction * profile.i_ed_active
        + (1.0 - active_fraction) * profile.i_sleep_floor
    )


# -- End device ----------------------------------------------------------------


@dataclass(frozen=True)
class LimitEvent:
    axis: str
    requested: float
    clamped_to: float


@dataclass
class PendingFrame:
    frame: RadioFrame
    retries_left: int
    next_retry: float


SLEEP = "sleep"
ACTIVE = "active"


def validate_command(actuator_id: int, action: int, argument: int) -> str | None:
    """Range check shared by the server (ERR 409) and the payload type."""
    if actuator_id == ActuatorId.LAMP and action == Action.SET_LEVEL:
        if not 0 <= argument <= 100:
            return "lamp level must be 0-100"
    return None


class EndDevice:
    """One wireless node: sensors, actuator drivers, radio with ack/retry."""

    def __init__(
        self,
        address: int,
        sensors: set[SensorId] | None = None,
        has_lamp: bool = False,
        has_heater: bool = False,
        has_gimbal: bool = False,
        report_period: float = DEFAULT_REPORT_PERIOD_S,
        retry_limit: int = DEFAULT_RETRY_LIMIT,
        retry_spacing: float = DEFAULT_RETRY_SPACING_S,
    ):
        self.address = address
        self.sensors = set(sensors or ())
        self.has_lamp = has_lamp
        self.has_heater = has_heater
        self.has_gimbal = has_gimbal
        self.report_period = report_period
        self.retry_limit = retry_limit
        self.retry_spacing = retry_spacing

        self.lamp_on = False
        self.lamp_level = 100
        self.heater_on = False
        self.pan = 0.0
        self.tilt = 0.0
        self.motion_latch_until = -math.inf
        self.radio_mode = SLEEP
        self.txid_counter = 255  # first allocation wraps to 0

        self.dedup = DedupState()
        self.pending: PendingFrame | None = None
        self.queue: list[RadioFrame] = []
        self.next_report = 0.0
        self.limit_events: list[LimitEvent] = []
        self.delivery_failures = 0
        self.rejected_commands = 0
        self.active_time = 0.0
        self.elapsed_time = 0.0

    # -- sensing ---------------------------------------------------------------

    def read_sensor(self, env: RoomEnv, sensor_id: SensorId, now: float,
                    time_of_day: float | None = None) -> ReadingPayload:
        if sensor_id == SensorId.TEMPERATURE:
            return ReadingPayload(sensor_id, int(env.temperature * 100))  # trunc toward 0
        if sensor_id == SensorId.LIGHT:
            return ReadingPayload(sensor_id, int(math.floor(env.light_level(time_of_day) + 0.5)))
        if sensor_id == SensorId.MOTION:
            latched = now < self.motion_latch_until - TIME_EPS
            return ReadingPayload(sensor_id, 1 if latched else 0)
        raise ValueError("unknown sensor id %r" % (sensor_id,))

    def _update_motion_latch(self, env: RoomEnv) -> None:
        end = env.occupancy_end_if_active()
        if end is not None:
            self.motion_latch_until = max(self.motion_latch_until, end + MOTION_LATCH_S)

    # -- actuation ---------------------------------------------------------------

    def apply_actuator(self, cmd: CommandPayload) -> LimitEvent | None:
        """Apply one command; returns a LimitEvent when the tilt clamp engaged."""
        problem = validate_command(cmd.actuator_id, cmd.action, cmd.argument)
        if problem is not None:
            self.rejected_commands += 1
            return None
        if cmd.actuator_id == ActuatorId.LAMP and self.has_lamp:
            if cmd.action == Action.ON:
                self.lamp_on = True
            elif cmd.action == Action.OFF:
                self.lamp_on = False
            elif cmd.action == Action.SET_LEVEL:
                self.lamp_on = True
                self.lamp_level = cmd.argument
        elif cmd.actuator_id == ActuatorId.HEATER and self.has_heater:
            self.heater_on = cmd.action == Action.ON
        elif cmd.actuator_id == ActuatorId.PAN_MOTOR and self.has_gimbal:
            if cmd.action == Action.STEP:
                self.pan = (self.pan + cmd.argument) % 360.0
        elif cmd.actuator_id == ActuatorId.TILT_MOTOR and self.has_gimbal:
            if cmd.action == Action.STEP:
                requested = self.tilt + cmd.argument
                clamped = min(TILT_LIMIT_DEG, max(-TILT_LIMIT_DEG, requested))
                self.tilt = clamped
                if clamped != requested:
                    event = LimitEvent("tilt", requested, clamped)
                    self.limit_events.append(event)
                    return event
        else:
            self.rejected_commands += 1
        return None

    # -- radio -------------------------------------------------------------------

    def _alloc_txid(self) -> int:
        self.txid_counter = next_txid(self.txid_counter)
        return self.txid_counter

    def _enqueue(self, kind: FrameKind, payload: bytes) -> None:
        self.queue.append(RadioFrame(self.address, AP_ADDRESS, self._alloc_txid(), kind, payload))

    def tick(self, env: RoomEnv, now: float, dt: float,
             inbound: list[RadioFrame] | None = None,
             time_of_day: float | None = None) -> list[RadioFrame]:
        """Advance the node by one tick; returns frames to transmit."""
        outbound: list[RadioFrame] = []
        inbound = inbound or []

        for frame in inbound:
            if frame.kind == FrameKind.ACK:
                if self.pending is not None and frame.payload[0] == self.pending.frame.txid:
                    self.pending = None
            elif frame.kind == FrameKind.COMMAND:
                verdict = self.dedup.check(frame.src, frame.txid)
                if verdict == FRESH:
                    try:
                        cmd = CommandPayload.decode(frame.payload)
                    except Exception:
                        self.rejected_commands += 1
                        continue
                    self.apply_actuator(cmd)
                outbound.append(make_ack(self.address, frame.src, frame.txid))

        self._update_motion_latch(env)

        if now >= self.next_report - TIME_EPS:
            for sensor in sorted(self.sensors):
                reading = self.read_sensor(env, sensor, now, time_of_day)
                self._enqueue(FrameKind.READING, reading.encode())
            self.next_report += self.report_period

        # one un-acked data frame in flight at a time: window-1 dedup stays sound
        if self.pending is None and self.queue:
            frame = self.queue.pop(0)
            self.pending = PendingFrame(frame, self.retry_limit, now + self.retry_spacing)
            outbound.append(frame)
        elif self.pending is not None and now >= self.pending.next_retry - TIME_EPS:
            if self.pending.retries_left > 0:
                self.pending.retries_left -= 1
                self.pending.next_retry = now + self.retry_spacing
                outbound.append(self.pending.frame)
            else:
                self.delivery_failures += 1
                self.pending = None
                if self.queue:
                    frame = self.queue.pop(0)
                    self.pending = PendingFrame(frame, self.retry_limit, now + self.retry_spacing)
                    outbound.append(frame)

        busy = bool(outbound) or bool(inbound) or self.pending is not None
        self.radio_mode = ACTIVE if busy else SLEEP
        self.elapsed_time += dt
        if busy:
            self.active_time += dt
        return outbound

    @property
    def active_fraction(self) -> float:
        if self.elapsed_time <= 0:
            return 0.0
        return self.active_time / self.elapsed_time
