"""Simulation kernel: one thread owns the whole world.

A tick covers dt seconds of simulated time and runs fixed phases:

    a. every end device processes its radio inbox, samples sensors, and
       transmits (readings, retries, acks)
    b. the channel carries node transmissions toward the access point
    c. the access point bridges radio to serial and back
    d. the channel carries bridge transmissions toward the nodes
    e. the home server ingests serial traffic, runs rules / timers /
       thermostats / mode triggers, and flushes resulting commands onto the
       serial link for the next tick
    f. room physics integrate forward to the next tick boundary

Nothing outside the kernel thread touches simulation state. Clients (the TCP
and HTTP servers, the CLI, tests) talk to it through a request queue and get
answers on per-request reply queues; pushes for subscribers go out through
registered listener callbacks, which are invoked on the kernel thread and
must only enqueue.

Every command radioed to a node gets a server-side ticket. Because the
bridge keeps at most one command in flight per destination and reports
delivered / delivery-failed in order, a per-destination FIFO of tickets pairs
each outcome with the command that caused it: the server then either folds
the confirmed effect into the registry (one STATE push) or records a
DeliveryFailed event. Never both, never neither.
"""

from __future__ import annotations

import queue
import struct
import threading
import time
from collections import deque
from dataclasses import dataclass

from .ap import AccessPoint
from .auth import derive_salt, hash_password
from .camera import frame_counter
from .channel import Channel, LinkModel, NodePlacement
from .core import (
    ACTIONS,
    ACTUATOR_IDS,
    CommandRequest,
    Device,
    HomeCore,
    ModeConfig,
    ModeTrigger,
    Rule,
    Thermostat,
    Timer,
)
from .devices import EndDevice, HeatEvent, LightModifier, OccupancyEvent, RoomEnv
from .protocol import (
    Action,
    ActuatorId,
    CommandPayload,
    SERIAL_COMMAND,
    SERIAL_GIMBAL,
    SERIAL_READING,
    SERIAL_STATUS,
    STATUS_DELIVERED,
    STATUS_DELIVERY_FAILED,
    SensorId,
    SerialDecoder,
    SerialFrame,
    encode_serial,
)
from .scenario import ScenarioConfig
from .store import EventKind, Store, StoredUser

KIND_TO_SENSOR = {
    "temperature": SensorId.TEMPERATURE,
    "light": SensorId.LIGHT,
    "motion": SensorId.MOTION,
}

GIMBAL_ACTUATORS = (ActuatorId.PAN_MOTOR, ActuatorId.TILT_MOTOR)

COMPACT_INTERVAL_S = 3600.0
FLUSH_EVERY_TICKS = 100


@dataclass
class TicketEntry:
    ticket: int
    device: str
    action: Action
    argument: int
    origin: str


class Simulation:
    """Builds the world from a scenario and advances it tick by tick."""

    def __init__(self, config: ScenarioConfig, db_path: str,
                 seed: int | None = None, rssi_log: str | None = None):
        self.config = config
        self.seed = config.seed if seed is None else seed
        self.dt = config.dt
        self.start_clock = config.start_clock
        self.tick_index = 0

        self.store = Store(db_path)
        self.core = HomeCore(self.store, armed=config.armed)
        for user in config.users:
            if user.name not in self.store.users:
                salt = derive_salt(self.seed, user.name)
                self.store.put_user(StoredUser(
                    user.name, hash_password(user.password, salt),
                    1 if user.admin else 0))

        placement = NodePlacement()
        placement.place(0, config.ap_x, config.ap_y)
        self.eds: dict[int, EndDevice] = {}
        for node in config.nodes:
            kinds = {kind for _, kind in node.devices}
            ed = EndDevice(
                node.address,
                sensors={KIND_TO_SENSOR[k] for k in kinds if k in KIND_TO_SENSOR},
                has_lamp="lamp" in kinds,
                has_heater="heater" in kinds,
                has_gimbal="pan" in kinds or "tilt" in kinds,
                report_period=config.report_period,
            )
            placement.place(node.address, node.x, node.y)
            self.eds[node.address] = ed
            for name, kind in node.devices:
                self.core.add_device(Device(name, kind, node.address, node.group))

        model = LinkModel(sigma=config.rssi_sigma, p_fade=config.fade_probability,
                          seed=self.seed)
        self.channel = Channel(model, placement, rssi_log=rssi_log)

        self.env = RoomEnv(
            temperature=config.initial_temperature,
            ambient_light=config.ambient_light,
            k_loss=config.k_loss,
            k_heat=config.k_heat,
            t_outside=config.t_outside,
        )
        for event in config.events:
            if event.kind == "hot_air":
                self.env.heat_events.append(
                    HeatEvent(event.start, event.duration, event.delta))
            elif event.kind == "light_cover":
                self.env.light_modifiers.append(
                    LightModifier(event.start, event.duration, scale=event.scale))
            elif event.kind == "bright_source":
                self.env.light_modifiers.append(
                    LightModifier(event.start, event.duration, boost=event.boost))
            elif event.kind == "occupancy":
                self.env.occupancy_events.append(
                    OccupancyEvent(event.start, event.duration))

        for spec in config.rules:
            self.core.add_rule(Rule(spec.name, spec.source, spec.op, spec.threshold,
                                    spec.target, spec.action, spec.argument,
                                    spec.hysteresis))
        for spec in config.timers:
            self.core.add_timer(Timer(spec.name, spec.at, spec.target, spec.action,
                                      spec.argument))
        for spec in config.thermostats:
            self.core.add_thermostat(Thermostat(spec.sensor, spec.heater,
                                                spec.set_point))
            heater = self.core.device(spec.heater)
            if heater is not None:
                heater.set_point = spec.set_point
        for spec in config.modes:
            trigger = None
            if spec.trigger_window is not None:
                trigger = ModeTrigger(spec.trigger_source, spec.trigger_window[0],
                                      spec.trigger_window[1], spec.trigger_light_below,
                                      spec.trigger_sustain)
            self.core.add_mode(ModeConfig(spec.name, spec.entries, spec.arm, trigger))

        self.camera_pan = config.camera_pan_device or self._first_device_of_kind("pan")
        self.camera_tilt = config.camera_tilt_device or self._first_device_of_kind("tilt")

        self.ap = AccessPoint()
        self._serial_to_ap = b""
        self._server_decoder = SerialDecoder()
        self._ed_inbox: dict[int, list] = {}
        self._ticket_counter = 0
        self._sent: dict[int, deque[TicketEntry]] = {}
        self.requests: queue.Queue = queue.Queue()
        self._listeners: list = []

    def _first_device_of_kind(self, kind: str) -> str:
        for device in self.core.devices.values():
            if device.kind == kind:
                return device.name
        return ""

    # -- time ------------------------------------------------------------------------

    @property
    def sim_time(self) -> float:
        return self.tick_index * self.dt

    def _time_of_day(self, now: float) -> float:
        return (self.start_clock + now) % 86400.0

    def _day_index(self, now: float) -> int:
        return int((self.start_clock + now) // 86400.0)

    # -- listeners ---------------------------------------------------------------------

    def add_listener(self, callback) -> None:
        """callback(kind, payload) runs on the kernel thread; keep it quick."""
        self._listeners.append(callback)

    def _publish(self, kind: str, payload: dict) -> None:
        for callback in self._listeners:
            callback(kind, payload)

    # -- stepping ----------------------------------------------------------------------

    def step(self, ticks: int = 1) -> None:
        for _ in range(ticks):
            self._tick()

    def run_for(self, sim_seconds: float) -> None:
        self.step(int(round(sim_seconds / self.dt)))
        self.store.flush()

    def run_realtime(self, speed: float = 1.0, stop: threading.Event | None = None) -> None:
        """Advance in wall time, `speed` simulated seconds per real second."""
        stop = stop or threading.Event()
        wall_start = time.monotonic()
        sim_start = self.sim_time
        while not stop.is_set():
            target = sim_start + (time.monotonic() - wall_start) * speed
            while self.sim_time < target and not stop.is_set():
                self._tick()
            self._drain_requests(self.sim_time)
            time.sleep(min(self.dt / max(speed, 1e-6), 0.05))
        self.store.flush()

    def close(self) -> None:
        self.store.close()
        self.channel.close()

    def _tick(self) -> None:
        now = self.sim_time
        serial_to_ap, self._serial_to_ap = self._serial_to_ap, b""
        serial_up = self.tick_hardware(now, serial_to_ap)
        self.tick_server(now, serial_up)
        self.tick_index += 1
        if self.tick_index % FLUSH_EVERY_TICKS == 0:
            self.store.flush()
        if COMPACT_INTERVAL_S > 0 and self.tick_index % int(COMPACT_INTERVAL_S / self.dt) == 0:
            self.store.compact()

    # -- radio-side phases (a-d and physics) ----------------------------------------------

    def tick_hardware(self, now: float, serial_in: bytes) -> bytes:
        tod = self._time_of_day(now)
        uplink = []
        for address, ed in self.eds.items():
            inbound = self._ed_inbox.pop(address, [])
            uplink.extend(ed.tick(self.env, now, self.dt, inbound=inbound,
                                  time_of_day=tod))

        ap_in = []
        for frame in uplink:
            result = self.channel.transmit(frame.src, frame.dst)
            if result.delivered:
                ap_in.append((frame, result.rssi))

        radio_down, serial_up = self.ap.tick(now, radio_in=ap_in, serial_in=serial_in)

        for frame in radio_down:
            result = self.channel.transmit(frame.src, frame.dst)
            if result.delivered:
                self._ed_inbox.setdefault(frame.dst, []).append(frame)

        heater_on = any(ed.heater_on for ed in self.eds.values())
        self.env.step(heater_on, self.dt, now=now)
        return serial_up

    # -- server-side phase (e) --------------------------------------------------------------

    def tick_server(self, now: float, serial_up: bytes) -> bytes:
        self._drain_requests(now)
        for frame in self._server_decoder.feed(serial_up):
            self._handle_serial(now, frame)
        self.core.tick(now, self._time_of_day(now), self._day_index(now))
        for command in self.core.drain_commands():
            self._send_command(command)
        for event in self.core.drain_events():
            self._publish("event", {
                "t": event.t, "kind": event.kind.name, "device": event.device,
                "message": event.message, "severity": event.severity.name.capitalize(),
            })
        return self._serial_to_ap

    def _handle_serial(self, now: float, frame: SerialFrame) -> None:
        if frame.kind == SERIAL_READING and len(frame.payload) == 6:
            src, sensor, value, rssi = struct.unpack(">HBhb", frame.payload)
            device = self.core.ingest_reading(now, src, sensor, value, rssi)
            self._publish("reading", {
                "t": now, "node": src, "sensor": sensor, "value": value,
                "rssi": rssi, "device": device.name if device else None,
            })
        elif frame.kind == SERIAL_STATUS and frame.payload:
            subtype = frame.payload[0]
            if subtype in (STATUS_DELIVERED, STATUS_DELIVERY_FAILED):
                dst, _txid = struct.unpack(">HB", frame.payload[1:4])
                pending = self._sent.get(dst)
                if not pending:
                    return
                entry = pending.popleft()
                if subtype == STATUS_DELIVERED:
                    device = self.core.apply_confirmed(entry.device, entry.action,
                                                       entry.argument, now)
                    if device is not None:
                        self._push_state(device, now, entry.ticket)
                else:
                    self.core.record_delivery_failed(entry.device, now)

    def _push_state(self, device: Device, now: float, ticket: int = 0) -> None:
        self._publish("state", {
            "t": now, "device": device.name, "state": device.state,
            "value": device.value, "set_point": device.set_point, "ticket": ticket,
        })

    def _next_ticket(self) -> int:
        self._ticket_counter += 1
        return self._ticket_counter

    def _send_command(self, command: CommandRequest, ticket: int | None = None) -> int:
        ticket = self._next_ticket() if ticket is None else ticket
        kind = SERIAL_GIMBAL if command.actuator_id in GIMBAL_ACTUATORS else SERIAL_COMMAND
        payload = struct.pack(">H", command.node) + CommandPayload(
            command.actuator_id, command.action, command.argument).encode()
        self._serial_to_ap += encode_serial(SerialFrame(kind, payload))
        self._sent.setdefault(command.node, deque()).append(
            TicketEntry(ticket, command.device, command.action, command.argument,
                        command.origin))
        return ticket

    # -- client requests ---------------------------------------------------------------------

    def submit(self, op: str, args: tuple = (), timeout: float = 10.0):
        """Thread-safe RPC into the kernel; blocks until the kernel replies."""
        reply: queue.Queue = queue.Queue(1)
        self.requests.put((op, args, reply))
        return reply.get(timeout=timeout)

    def submit_async(self, op: str, args: tuple = ()) -> queue.Queue:
        reply: queue.Queue = queue.Queue(1)
        self.requests.put((op, args, reply))
        return reply

    def submit_with(self, op: str, args: tuple, sink) -> None:
        """RPC whose reply goes to any put_nowait sink, on the kernel thread.

        Handing the kernel the sink keeps a reply ordered before the pushes
        the same request causes.
        """
        self.requests.put((op, args, sink))

    def _drain_requests(self, now: float) -> None:
        while True:
            try:
                op, args, reply = self.requests.get_nowait()
            except queue.Empty:
                return
            try:
                result = self._handle_request(op, args, now)
            except Exception as exc:
                result = ("err", "500", str(exc))
            try:
                reply.put_nowait(result)
            except queue.Full:
                pass

    def _device_view(self, device: Device) -> dict:
        return {
            "name": device.name, "kind": device.kind, "state": device.state,
            "value": device.value, "set_point": device.set_point,
            "node": device.node, "group": device.group,
            "last_update": device.last_update,
        }

    def _handle_request(self, op: str, args: tuple, now: float):
        if op == "list":
            return [self._device_view(d) for d in self.core.devices.values()]
        if op == "get":
            (name,) = args
            device = self.core.device(name)
            return self._device_view(device) if device else None
        if op == "set":
            return self._handle_set(args, now)
        if op == "mode":
            (name,) = args
            if self.core.apply_mode(name, now):
                return ("ok", 0)
            return ("err", "404", "no such mode")
        if op == "modes":
            return (sorted(self.core.modes), self.core.current_mode)
        if op == "hist":
            name, since, until, limit = args
            if self.core.device(name) is None:
                return ("err", "404", "no such device")
            rows = self.core.history(name, since, until, limit)
            return [(r.t, r.value, r.rssi) for r in rows]
        if op == "auth_failure":
            (user,) = args
            self.core._emit(now, EventKind.AUTH_FAILURE, "system",
                            "authentication failed for %s" % user)
            return ("ok", 0)
        if op == "events":
            since, limit = args
            rows = self.store.query_events(since=since, limit=limit)
            return [(e.t, e.kind.name, e.device, e.message, e.severity.name.capitalize())
                    for e in rows]
        if op == "camera":
            pan = self.core.device(self.camera_pan)
            tilt = self.core.device(self.camera_tilt)
            return (
                (pan.value or 0.0) if pan else 0.0,
                (tilt.value or 0.0) if tilt else 0.0,
                frame_counter(self.sim_time),
            )
        if op == "status":
            return {
                "sim_time": self.sim_time, "tick": self.tick_index,
                "mode": self.core.current_mode, "armed": self.core.armed,
                "time_of_day": self._time_of_day(self.sim_time),
            }
        raise ValueError("unknown request %r" % op)

    def _handle_set(self, args: tuple, now: float):
        name, prop, value = args
        if name == "system" and prop == "armed":
            if value not in ("on", "off"):
                return ("err", "400", "armed must be on or off")
            self.core.set_armed(value == "on", now)
            return ("ok", 0)
        if name == "system" and prop == "mode":
            if self.core.apply_mode(value, now):
                return ("ok", 0)
            return ("err", "404", "no such mode")
        device = self.core.device(name)
        if device is None:
            return ("err", "404", "no such device")
        if prop == "state":
            if device.kind not in ("lamp", "heater"):
                return ("err", "409", "device has no on/off state")
            if value not in ("on", "off"):
                return ("err", "400", "state must be on or off")
            command = CommandRequest(name, device.node, ACTUATOR_IDS[device.kind],
                                     ACTIONS[value], 0, "client")
            return ("ok", self._send_command(command))
        if prop == "level":
            if device.kind != "lamp":
                return ("err", "409", "only lamps take a level")
            try:
                level = int(value)
            except ValueError:
                return ("err", "400", "level must be an integer")
            if not 0 <= level <= 100:
                return ("err", "409", "level must be 0-100")
            command = CommandRequest(name, device.node, ActuatorId.LAMP,
                                     Action.SET_LEVEL, level, "client")
            return ("ok", self._send_command(command))
        if prop == "set_point":
            try:
                target = float(value)
            except ValueError:
                return ("err", "400", "set point must be a number")
            if not self.core.set_set_point(name, target, now):
                return ("err", "409", "no thermostat uses this device")
            ticket = self._next_ticket()
            self._push_state(self.core.device(name) or device, now, ticket)
            return ("ok", ticket)
        if prop in ("pan", "tilt"):
            if device.kind != prop:
                return ("err", "409", "device is not a %s axis" % prop)
            try:
                step = int(value)
            except ValueError:
                return ("err", "400", "step must be an integer")
            if not -32768 <= step <= 32767:
                return ("err", "409", "step out of range")
            command = CommandRequest(name, device.node, ACTUATOR_IDS[prop],
                                     Action.STEP, step, "client")
            return ("ok", self._send_command(command))
        return ("err", "400", "unknown property %r" % prop)
