"""Frame formats and codecs for the radio (ED<->AP) and serial (AP<->server) links.

Serial frame layout (bit-exact):

    [0x7E][len:u8][kind:u8][payload: len-1 bytes][checksum:u8]

``len`` counts kind + payload. The checksum is the additive mod-256
complement: (len + kind + sum(payload) + checksum) % 256 == 0. There is no
byte stuffing; a streaming decoder trusts ``len``, verifies the checksum and
resynchronizes on the next 0x7E after a failure.

Radio frame layout:

    [src:u16 BE][dst:u16 BE][txid:u8][kind:u8][body ...]

All multi-byte integers are big-endian. Frame bodies carry sensor readings
(sensor id + i16 value), actuator commands (actuator id + action + i16
argument) or acknowledgements (the single acked txid byte). Every sender
numbers its data frames with a wrapping u8 transaction id; receivers keep the
last accepted txid per source so immediate retransmissions are recognized as
duplicates, re-acked, and not re-applied.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum

SOF = 0x7E
MAX_PAYLOAD = 64

# Serial frame kinds (AP <-> server)
SERIAL_READING = 0x01   # uplink sensor reading [src:u16][sensor:u8][value:i16][rssi:i8]
SERIAL_COMMAND = 0x02   # downlink command [dst:u16][actuator:u8][action:u8][arg:i16]
SERIAL_STATUS = 0x03    # AP status/notice, first payload byte is a subtype
SERIAL_GIMBAL = 0x04    # camera gimbal command, same layout as SERIAL_COMMAND

# SERIAL_STATUS subtypes
STATUS_PERIODIC = 0x00      # [uptime:u32][radio_drops:u16][bad_checksums:u16]
STATUS_DELIVERY_FAILED = 0x01  # [dst:u16][txid:u8]
STATUS_DELIVERED = 0x02        # [dst:u16][txid:u8]


class FrameKind(IntEnum):
    READING = 0
    COMMAND = 1
    ACK = 2


class SensorId(IntEnum):
    TEMPERATURE = 0
    LIGHT = 1
    MOTION = 2


class ActuatorId(IntEnum):
    LAMP = 0
    HEATER = 1
    PAN_MOTOR = 2
    TILT_MOTOR = 3


class Action(IntEnum):
    OFF = 0
    ON = 1
    SET_LEVEL = 2
    STEP = 3


class ProtocolError(Exception):
    """Base class for frame codec failures."""


class BadChecksum(ProtocolError):
    """Frame checksum did not sum to zero."""


class Truncated(ProtocolError):
    """Not enough bytes for a complete frame; wait for more."""


class BadFrame(ProtocolError):
    """Structurally invalid frame (missing SOF, zero len, trailing bytes)."""


def checksum(length: int, kind: int, payload: bytes) -> int:
    """Additive mod-256 complement over len + kind + payload."""
    if len(payload) > MAX_PAYLOAD:
        raise ValueError("payload too long: %d > %d" % (len(payload), MAX_PAYLOAD))
    return (-(length + kind + sum(payload))) % 256


def next_txid(current: int) -> int:
    return (current + 1) % 256


@dataclass(frozen=True)
class RadioFrame:
    src: int
    dst: int
    txid: int
    kind: FrameKind
    payload: bytes = b""

    def __post_init__(self):
        if len(self.payload) > MAX_PAYLOAD:
            raise ValueError("radio payload exceeds %d bytes" % MAX_PAYLOAD)
        if self.kind == FrameKind.ACK and len(self.payload) != 1:
            raise ValueError("ack payload must be exactly the acked txid byte")


@dataclass(frozen=True)
class SerialFrame:
    kind: int
    payload: bytes = b""

    @property
    def length(self) -> int:
        return len(self.payload) + 1

    @property
    def checksum(self) -> int:
        return checksum(self.length, self.kind, self.payload)


def encode_serial(frame: SerialFrame) -> bytes:
    """Serialize a frame to [SOF][len][kind][payload][checksum]."""
    length = frame.length
    return bytes([SOF, length, frame.kind]) + frame.payload + bytes([frame.checksum])


def decode_serial(data: bytes) -> SerialFrame:
    """Strict one-shot decode: the buffer must hold exactly one frame.

    Raises Truncated when more bytes are needed, BadFrame on a missing SOF,
    zero len or leftover trailing bytes, and BadChecksum when the additive
    check fails. The strictness matters: a corrupted (shrunken) len field
    re-frames the tail, and only the no-trailing-bytes rule makes every
    single-byte corruption detectable.
    """
    if len(data) < 1:
        raise Truncated("empty buffer")
    if data[0] != SOF:
        raise BadFrame("expected SOF 0x7E, got 0x%02X" % data[0])
    if len(data) < 2:
        raise Truncated("missing len byte")
    length = data[1]
    if length < 1:
        raise BadFrame("len must cover at least the kind byte")
    total = 3 + length
    if len(data) < total:
        raise Truncated("need %d bytes, have %d" % (total, len(data)))
    if len(data) > total:
        raise BadFrame("%d trailing bytes after frame" % (len(data) - total))
    kind = data[2]
    payload = bytes(data[3 : 3 + length - 1])
    recv_sum = (length + kind + sum(payload) + data[total - 1]) % 256
    if recv_sum != 0:
        raise BadChecksum("checksum residue 0x%02X" % recv_sum)
    return SerialFrame(kind, payload)


class SerialDecoder:
    """Incremental decoder over a serial byte stream.

    feed() returns the frames completed by the new bytes. A frame failing its
    checksum is dropped (bad_checksums incremented) and scanning resumes at
    the next 0x7E after the failed SOF. Bytes before any SOF are discarded.
    """

    def __init__(self):
        self._buf = bytearray()
        self.bad_checksums = 0

    def feed(self, data: bytes) -> list[SerialFrame]:
        self._buf.extend(data)
        frames = []
        while True:
            start = self._buf.find(SOF)
            if start < 0:
                self._buf.clear()
                break
            if start > 0:
                del self._buf[:start]
            if len(self._buf) < 2:
                break
            length = self._buf[1]
            if length < 1:
                self.bad_checksums += 1
                del self._buf[:1]
                continue
            total = 3 + length
            if len(self._buf) < total:
                break
            try:
                frames.append(decode_serial(bytes(self._buf[:total])))
                del self._buf[:total]
            except BadChecksum:
                self.bad_checksums += 1
                del self._buf[:1]  # resync at the next SOF past this one
        return frames

    @property
    def pending(self) -> int:
        return len(self._buf)


_RADIO_HEADER = struct.Struct(">HHBB")


def encode_radio(frame: RadioFrame) -> bytes:
    return _RADIO_HEADER.pack(frame.src, frame.dst, frame.txid, frame.kind) + frame.payload


def decode_radio(data: bytes) -> RadioFrame:
    if len(data) < _RADIO_HEADER.size:
        raise Truncated("radio frame shorter than header")
    src, dst, txid, kind = _RADIO_HEADER.unpack_from(data)
    try:
        kind = FrameKind(kind)
    except ValueError:
        raise BadFrame("unknown radio frame kind 0x%02X" % kind) from None
    payload = bytes(data[_RADIO_HEADER.size :])
    try:
        return RadioFrame(src, dst, txid, kind, payload)
    except ValueError as exc:
        raise BadFrame(str(exc)) from None


# -- Frame bodies -------------------------------------------------------------

_READING_BODY = struct.Struct(">Bh")
_COMMAND_BODY = struct.Struct(">BBh")


@dataclass(frozen=True)
class ReadingPayload:
    sensor_id: SensorId
    value: int

    def __post_init__(self):
        if self.sensor_id == SensorId.LIGHT and not 0 <= self.value <= 100:
            raise ValueError("light reading out of range: %d" % self.value)
        if self.sensor_id == SensorId.MOTION and self.value not in (0, 1):
            raise ValueError("motion reading must be 0 or 1")

    def encode(self) -> bytes:
        return _READING_BODY.pack(self.sensor_id, self.value)

    @classmethod
    def decode(cls, data: bytes) -> "ReadingPayload":
        if len(data) != _READING_BODY.size:
            raise BadFrame("reading body must be %d bytes" % _READING_BODY.size)
        sensor, value = _READING_BODY.unpack(data)
        try:
            sensor = SensorId(sensor)
        except ValueError:
            raise BadFrame("unknown sensor id %d" % sensor) from None
        return cls(sensor, value)


@dataclass(frozen=True)
class CommandPayload:
    actuator_id: ActuatorId
    action: Action
    argument: int = 0

    def __post_init__(self):
        if (
            self.actuator_id == ActuatorId.LAMP
            and self.action == Action.SET_LEVEL
            and not 0 <= self.argument <= 100
        ):
            raise ValueError("lamp level out of range: %d" % self.argument)

    def encode(self) -> bytes:
        return _COMMAND_BODY.pack(self.actuator_id, self.action, self.argument)

    @classmethod
    def decode(cls, data: bytes) -> "CommandPayload":
        if len(data) != _COMMAND_BODY.size:
            raise BadFrame("command body must be %d bytes" % _COMMAND_BODY.size)
        actuator, action, arg = _COMMAND_BODY.unpack(data)
        try:
            actuator = ActuatorId(actuator)
            action = Action(action)
        except ValueError:
            raise BadFrame("unknown actuator/action") from None
        return cls(actuator, action, arg)


def make_ack(src: int, dst: int, acked_txid: int) -> RadioFrame:
    """Ack echoes the acked txid both in the header and as the 1-byte payload."""
    return RadioFrame(src, dst, acked_txid, FrameKind.ACK, bytes([acked_txid]))


# -- Duplicate detection -------------------------------------------------------

FRESH = "fresh"
DUPLICATE = "duplicate"


@dataclass
class DedupState:
    """Last accepted txid per source (window of one).

    Retransmissions reuse their txid, so equality with the last accepted txid
    identifies them. The caller must still re-ack a duplicate; it must not
    re-apply it.
    """

    last_seen: dict[int, int] = field(default_factory=dict)

    def check(self, src: int, txid: int) -> str:
        if self.last_seen.get(src) == txid:
            return DUPLICATE
        self.last_seen[src] = txid
        return FRESH
