"""Append-only persistence for users, readings, events, and mode changes.

Each table lives in its own file. A record on disk is framed as

    [length:u32 BE][table-id:u8][record bytes]

where length covers the table-id byte plus the record. Appends go to the end
of the file; nothing is ever updated in place. On startup the file is scanned
front to back and a malformed tail (partial write, impossible length, wrong
table id) is truncated, so a crash mid-append costs at most the last record.
Compaction rewrites a table file from its live in-memory rows to a temporary
file and renames it into place.

Record layouts (all integers big-endian, strings UTF-8 length-prefixed):

    user    [name_len:u8][name][hash_len:u16][hash][flags:u8]
    reading [t:f64][node:u16][sensor:u8][value:i16][rssi:i8]
    event   [t:f64][kind:u8][severity:u8][device_len:u8][device][msg_len:u16][message]
    mode    [t:f64][name_len:u8][name]
"""

from __future__ import annotations

import enum
import os
import struct
from dataclasses import dataclass

TABLE_USERS = 1
TABLE_READINGS = 2
TABLE_EVENTS = 3
TABLE_MODES = 4

MAX_RECORD = 1 << 20


class Severity(enum.IntEnum):
    INFO = 0
    ALERT = 1


class EventKind(enum.IntEnum):
    INTRUSION = 0
    THRESHOLD_LOW = 1
    THRESHOLD_HIGH = 2
    TIMER_FIRED = 3
    MODE_CHANGED = 4
    LIMIT_REACHED = 5
    DELIVERY_FAILED = 6
    AUTH_FAILURE = 7
    NOTE = 8  # infrastructure notices outside the alarm taxonomy


@dataclass(frozen=True)
class StoredUser:
    name: str
    pw_hash: str
    flags: int = 0

    def encode(self) -> bytes:
        name = self.name.encode()
        pw = self.pw_hash.encode()
        return struct.pack("B", len(name)) + name + struct.pack(">H", len(pw)) + pw + struct.pack(
            "B", self.flags)

    @classmethod
    def decode(cls, data: bytes) -> "StoredUser":
        n = data[0]
        name = data[1:1 + n].decode()
        (m,) = struct.unpack_from(">H", data, 1 + n)
        pw = data[3 + n:3 + n + m].decode()
        flags = data[3 + n + m]
        return cls(name, pw, flags)


@dataclass(frozen=True)
class StoredReading:
    t: float
    node: int
    sensor: int
    value: int
    rssi: int

    def encode(self) -> bytes:
        return struct.pack(">dHBhb", self.t, self.node, self.sensor, self.value, self.rssi)

    @classmethod
    def decode(cls, data: bytes) -> "StoredReading":
        return cls(*struct.unpack(">dHBhb", data))


@dataclass(frozen=True)
class StoredEvent:
    t: float
    kind: EventKind
    device: str = ""
    message: str = ""
    severity: Severity = Severity.INFO

    def encode(self) -> bytes:
        dev = self.device.encode()
        msg = self.message.encode()
        return (struct.pack(">dBBB", self.t, int(self.kind), int(self.severity), len(dev))
                + dev + struct.pack(">H", len(msg)) + msg)

    @classmethod
    def decode(cls, data: bytes) -> "StoredEvent":
        t, kind, severity, n = struct.unpack_from(">dBBB", data)
        dev = data[11:11 + n].decode()
        (m,) = struct.unpack_from(">H", data, 11 + n)
        msg = data[13 + n:13 + n + m].decode()
        return cls(t, EventKind(kind), dev, msg, Severity(severity))


@dataclass(frozen=True)
class StoredMode:
    t: float
    name: str

    def encode(self) -> bytes:
        name = self.name.encode()
        return struct.pack(">dB", self.t, len(name)) + name

    @classmethod
    def decode(cls, data: bytes) -> "StoredMode":
        t, n = struct.unpack_from(">dB", data)
        return cls(t, data[9:9 + n].decode())


class TableFile:
    """One append-only table file."""

    def __init__(self, path: str, table_id: int):
        self.path = path
        self.table_id = table_id
        self._fh = None

    def load(self) -> tuple[list[bytes], int]:
        """Scan the file; returns (records, truncated byte count)."""
        try:
            with open(self.path, "rb") as fh:
                blob = fh.read()
        except FileNotFoundError:
            open(self.path, "ab").close()  # empty table still gets a file
            blob = b""
        records: list[bytes] = []
        pos = 0
        good_end = 0
        while pos + 4 <= len(blob):
            (length,) = struct.unpack_from(">I", blob, pos)
            if length < 1 or length > MAX_RECORD:
                break
            end = pos + 4 + length
            if end > len(blob):
                break
            if blob[pos + 4] != self.table_id:
                break
            records.append(blob[pos + 5:end])
            pos = end
            good_end = end
        truncated = len(blob) - good_end
        if truncated:
            with open(self.path, "r+b") as fh:
                fh.truncate(good_end)
        return records, truncated

    def _handle(self):
        if self._fh is None:
            self._fh = open(self.path, "ab")
        return self._fh

    def append(self, record: bytes) -> None:
        framed = struct.pack(">I", len(record) + 1) + bytes([self.table_id]) + record
        self._handle().write(framed)

    def flush(self) -> None:
        if self._fh is not None:
            self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def rewrite(self, records: list[bytes]) -> None:
        self.close()
        tmp = self.path + ".tmp"
        with open(tmp, "wb") as fh:
            for record in records:
                fh.write(struct.pack(">I", len(record) + 1) + bytes([self.table_id]) + record)
        os.replace(tmp, self.path)


class Store:
    """All four tables plus the in-memory indexes the queries run against."""

    def __init__(self, directory: str, retention: int = 100_000):
        os.makedirs(directory, exist_ok=True)
        self.directory = directory
        self.retention = retention
        self._users_file = TableFile(os.path.join(directory, "users.tbl"), TABLE_USERS)
        self._readings_file = TableFile(os.path.join(directory, "readings.tbl"), TABLE_READINGS)
        self._events_file = TableFile(os.path.join(directory, "events.tbl"), TABLE_EVENTS)
        self._modes_file = TableFile(os.path.join(directory, "modes.tbl"), TABLE_MODES)

        self.users: dict[str, StoredUser] = {}
        self.readings: list[StoredReading] = []
        self.events: list[StoredEvent] = []
        self.modes: list[StoredMode] = []
        self.recovered_tables: list[str] = []
        self._load()

    def _load(self) -> None:
        tables = [
            ("users", self._users_file, StoredUser),
            ("readings", self._readings_file, StoredReading),
            ("events", self._events_file, StoredEvent),
            ("modes", self._modes_file, StoredMode),
        ]
        for name, table, codec in tables:
            raw, truncated = table.load()
            rows = []
            for blob in raw:
                try:
                    rows.append(codec.decode(blob))
                except Exception:
                    truncated += 1
            if truncated:
                self.recovered_tables.append(name)
            if name == "users":
                self.users = {u.name: u for u in rows}
            elif name == "readings":
                self.readings = rows
            elif name == "events":
                self.events = rows
            else:
                self.modes = rows
        for name in self.recovered_tables:
            self.add_event(StoredEvent(0.0, EventKind.NOTE, "store",
                                       "recovered %s table, corrupt tail dropped" % name,
                                       Severity.ALERT))

    # -- writes ------------------------------------------------------------------

    def put_user(self, user: StoredUser) -> None:
        self.users[user.name] = user
        self._users_file.append(user.encode())

    def add_reading(self, reading: StoredReading) -> None:
        self.readings.append(reading)
        self._readings_file.append(reading.encode())

    def add_event(self, event: StoredEvent) -> None:
        self.events.append(event)
        self._events_file.append(event.encode())

    def set_mode(self, mode: StoredMode) -> None:
        self.modes.append(mode)
        self._modes_file.append(mode.encode())

    # -- queries -----------------------------------------------------------------

    @property
    def current_mode(self) -> str | None:
        return self.modes[-1].name if self.modes else None

    def query_readings(self, node: int | None = None, sensor: int | None = None,
                       since: float | None = None, until: float | None = None,
                       limit: int | None = None) -> list[StoredReading]:
        out = [
            r for r in self.readings
            if (node is None or r.node == node)
            and (sensor is None or r.sensor == sensor)
            and (since is None or r.t >= since)
            and (until is None or r.t <= until)
        ]
        if limit is not None:
            out = out[-limit:]
        return out

    def query_events(self, kind: EventKind | None = None,
                     since: float | None = None, until: float | None = None,
                     limit: int | None = None) -> list[StoredEvent]:
        out = [
            e for e in self.events
            if (kind is None or e.kind == kind)
            and (since is None or e.t >= since)
            and (until is None or e.t <= until)
        ]
        if limit is not None:
            out = out[-limit:]
        return out

    # -- maintenance ---------------------------------------------------------------

    def flush(self) -> None:
        for table in (self._users_file, self._readings_file, self._events_file, self._modes_file):
            table.flush()

    def close(self) -> None:
        self.flush()
        for table in (self._users_file, self._readings_file, self._events_file, self._modes_file):
            table.close()

    def compact(self) -> None:
        """Drop superseded rows and cap history growth, then rewrite the files."""
        self.readings = self.readings[-self.retention:]
        self.events = self.events[-self.retention:]
        if self.modes:
            self.modes = [self.modes[-1]]
        self._users_file.rewrite([u.encode() for u in self.users.values()])
        self._readings_file.rewrite([r.encode() for r in self.readings])
        self._events_file.rewrite([e.encode() for e in self.events])
        self._modes_file.rewrite([m.encode() for m in self.modes])
