"""Access point: bridges the radio side to the host serial link.

Uplink: a fresh sensor reading from a node is acked over the radio and
forwarded to the host as one serial reading frame carrying the measured RSSI
(rounded, clamped to an i8). Duplicate readings are re-acked but forwarded
only once.

Downlink: serial command frames are queued per destination, transmitted with
a fresh transaction id, and retried (budget 3, 200 ms spacing) until acked.
Only one command per destination is in flight at a time, which keeps the
node-side window-of-one duplicate detection sound. Outcomes are reported back
to the host as status notices: delivered or delivery-failed, each naming the
destination and transaction id. A periodic status frame carries uptime and
error counters.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .protocol import (
    DUPLICATE,
    DedupState,
    FrameKind,
    RadioFrame,
    SERIAL_COMMAND,
    SERIAL_GIMBAL,
    SERIAL_READING,
    SERIAL_STATUS,
    STATUS_DELIVERED,
    STATUS_DELIVERY_FAILED,
    STATUS_PERIODIC,
    SerialDecoder,
    SerialFrame,
    encode_serial,
    make_ack,
    next_txid,
)

AP_ADDRESS = 0

DEFAULT_RETRY_LIMIT = 3
DEFAULT_RETRY_SPACING_S = 0.2
DEFAULT_STATUS_PERIOD_S = 10.0

TIME_EPS = 1e-9


def rssi_to_i8(rssi: float) -> int:
    return max(-128, min(127, int(round(rssi))))


@dataclass
class PendingCommand:
    frame: RadioFrame
    retries_left: int
    next_retry: float


class AccessPoint:
    """Single bridge node at radio address 0."""

    def __init__(
        self,
        retry_limit: int = DEFAULT_RETRY_LIMIT,
        retry_spacing: float = DEFAULT_RETRY_SPACING_S,
        status_period: float = DEFAULT_STATUS_PERIOD_S,
    ):
        self.address = AP_ADDRESS
        self.retry_limit = retry_limit
        self.retry_spacing = retry_spacing
        self.status_period = status_period

        self.decoder = SerialDecoder()
        self.dedup = DedupState()
        self.txid_counter = 255  # first allocation wraps to 0
        self.queues: dict[int, list[RadioFrame]] = {}
        self.pending: dict[int, PendingCommand] = {}
        self.rssi_last: dict[int, float] = {}
        self.radio_drops = 0
        self.next_status = 0.0

    def _alloc_txid(self) -> int:
        self.txid_counter = next_txid(self.txid_counter)
        return self.txid_counter

    def _notice(self, subtype: int, dst: int, txid: int) -> bytes:
        payload = bytes([subtype]) + struct.pack(">HB", dst, txid)
        return encode_serial(SerialFrame(SERIAL_STATUS, payload))

    def _launch_next(self, dst: int, now: float, radio_out: list[RadioFrame]) -> None:
        queue = self.queues.get(dst)
        if queue and dst not in self.pending:
            frame = queue.pop(0)
            self.pending[dst] = PendingCommand(frame, self.retry_limit, now + self.retry_spacing)
            radio_out.append(frame)

    def tick(
        self,
        now: float,
        radio_in: list[tuple[RadioFrame, float]] | None = None,
        serial_in: bytes = b"",
    ) -> tuple[list[RadioFrame], bytes]:
        """One bridge step: returns (radio frames out, serial bytes out)."""
        radio_out: list[RadioFrame] = []
        serial_out = bytearray()

        for serial_frame in self.decoder.feed(serial_in):
            if serial_frame.kind in (SERIAL_COMMAND, SERIAL_GIMBAL):
                if len(serial_frame.payload) != 6:
                    continue
                dst = struct.unpack(">H", serial_frame.payload[:2])[0]
                body = serial_frame.payload[2:]
                frame = RadioFrame(self.address, dst, self._alloc_txid(), FrameKind.COMMAND, body)
                self.queues.setdefault(dst, []).append(frame)

        for frame, rssi in radio_in or []:
            if frame.dst != self.address:
                continue
            self.rssi_last[frame.src] = rssi
            if frame.kind == FrameKind.READING:
                radio_out.append(make_ack(self.address, frame.src, frame.txid))
                if self.dedup.check(frame.src, frame.txid) == DUPLICATE:
                    continue
                payload = struct.pack(">H", frame.src) + frame.payload[:3] + struct.pack(
                    "b", rssi_to_i8(rssi)
                )
                serial_out += encode_serial(SerialFrame(SERIAL_READING, payload))
            elif frame.kind == FrameKind.ACK:
                pending = self.pending.get(frame.src)
                if pending is not None and frame.payload[0] == pending.frame.txid:
                    del self.pending[frame.src]
                    serial_out += self._notice(STATUS_DELIVERED, frame.src, frame.payload[0])

        for dst in list(self.pending):
            pending = self.pending[dst]
            if now >= pending.next_retry - TIME_EPS:
                if pending.retries_left > 0:
                    pending.retries_left -= 1
                    pending.next_retry = now + self.retry_spacing
                    radio_out.append(pending.frame)
                else:
                    self.radio_drops += 1
                    del self.pending[dst]
                    serial_out += self._notice(STATUS_DELIVERY_FAILED, dst, pending.frame.txid)

        for dst in self.queues:
            self._launch_next(dst, now, radio_out)

        if now >= self.next_status - TIME_EPS:
            stats = struct.pack(
                ">IHH",
                int(now),
                min(0xFFFF, self.radio_drops),
                min(0xFFFF, self.decoder.bad_checksums),
            )
            serial_out += encode_serial(SerialFrame(SERIAL_STATUS, bytes([STATUS_PERIODIC]) + stats))
            self.next_status += self.status_period

        return radio_out, bytes(serial_out)
