"""Access point bridging: uplink forwarding, downlink retries, status notices."""

import struct

import pytest

from whansim.ap import AccessPoint, rssi_to_i8
from whansim.devices import EndDevice, RoomEnv
from whansim.protocol import (
    Action,
    ActuatorId,
    CommandPayload,
    FrameKind,
    RadioFrame,
    ReadingPayload,
    SERIAL_COMMAND,
    SERIAL_GIMBAL,
    SERIAL_READING,
    SERIAL_STATUS,
    STATUS_DELIVERED,
    STATUS_DELIVERY_FAILED,
    STATUS_PERIODIC,
    SensorId,
    SerialDecoder,
    SerialFrame,
    checksum,
    encode_serial,
    make_ack,
)


def parse_serial(data):
    frames = SerialDecoder().feed(data)
    return frames


def reading_frame(src=5, txid=0, sensor=SensorId.TEMPERATURE, value=2300):
    return RadioFrame(src, 0, txid, FrameKind.READING, ReadingPayload(sensor, value).encode())


def command_bytes(dst, actuator, action, arg=0, kind=SERIAL_COMMAND):
    payload = struct.pack(">H", dst) + CommandPayload(actuator, action, arg).encode()
    return encode_serial(SerialFrame(kind, payload))


def status_frames(data, subtype):
    out = []
    for f in parse_serial(data):
        if f.kind == SERIAL_STATUS and f.payload[0] == subtype:
            out.append(f)
    return out


def fresh_ap(**kwargs):
    """AP with the boot-time status frame already flushed."""
    ap = AccessPoint(status_period=kwargs.pop("status_period", 1e9), **kwargs)
    ap.tick(0.0)
    return ap


def test_uplink_reading_matches_reference_bytes():
    ap = fresh_ap()
    _, serial_out = ap.tick(0.1, radio_in=[(reading_frame(), -70.0)])
    want = bytes([0x7E, 0x07, 0x01, 0x00, 0x05, 0x00, 0x08, 0xFC, 0xBA, 0x35])
    assert serial_out == want


def test_uplink_reading_is_acked():
    ap = AccessPoint(status_period=1e9)
    radio_out, _ = ap.tick(0.0, radio_in=[(reading_frame(txid=7), -70.0)])
    assert len(radio_out) == 1
    ack = radio_out[0]
    assert ack.kind == FrameKind.ACK and ack.dst == 5 and ack.payload == bytes([7])


def test_duplicate_reading_reacked_but_forwarded_once():
    ap = fresh_ap()
    frame = reading_frame(txid=3)
    _, first = ap.tick(0.05, radio_in=[(frame, -70.0)])
    radio_out, second = ap.tick(0.1, radio_in=[(frame, -70.0)])
    assert len(parse_serial(first)) == 1
    assert second == b""
    assert any(f.kind == FrameKind.ACK for f in radio_out)


@pytest.mark.parametrize("rssi,want", [(-70.0, -70), (-70.4, -70), (-70.5, -70), (-70.6, -71),
                                       (-150.0, -128), (20.0, 20), (300.0, 127)])
def test_rssi_clamps_to_i8(rssi, want):
    assert rssi_to_i8(rssi) == want


def test_serial_command_becomes_radio_frame():
    ap = AccessPoint(status_period=1e9)
    radio_out, _ = ap.tick(0.0, serial_in=command_bytes(5, ActuatorId.LAMP, Action.ON))
    assert len(radio_out) == 1
    frame = radio_out[0]
    assert frame.src == 0 and frame.dst == 5 and frame.kind == FrameKind.COMMAND
    cmd = CommandPayload.decode(frame.payload)
    assert cmd.actuator_id == ActuatorId.LAMP and cmd.action == Action.ON


def test_gimbal_serial_kind_is_bridged_the_same_way():
    ap = AccessPoint(status_period=1e9)
    radio_out, _ = ap.tick(
        0.0, serial_in=command_bytes(5, ActuatorId.TILT_MOTOR, Action.STEP, 200, kind=SERIAL_GIMBAL))
    cmd = CommandPayload.decode(radio_out[0].payload)
    assert cmd.actuator_id == ActuatorId.TILT_MOTOR and cmd.argument == 200


def test_second_command_to_same_destination_waits_for_ack():
    ap = AccessPoint(status_period=1e9)
    data = command_bytes(5, ActuatorId.LAMP, Action.ON) + command_bytes(5, ActuatorId.LAMP, Action.OFF)
    radio_out, _ = ap.tick(0.0, serial_in=data)
    assert len(radio_out) == 1
    first_txid = radio_out[0].txid
    radio_out2, serial_out2 = ap.tick(0.1, radio_in=[(make_ack(5, 0, first_txid), -60.0)])
    assert len(radio_out2) == 1
    assert radio_out2[0].txid != first_txid
    delivered = status_frames(serial_out2, STATUS_DELIVERED)
    assert len(delivered) == 1
    dst, txid = struct.unpack(">HB", delivered[0].payload[1:])
    assert (dst, txid) == (5, first_txid)


def test_commands_to_different_destinations_fly_concurrently():
    ap = AccessPoint(status_period=1e9)
    data = command_bytes(5, ActuatorId.LAMP, Action.ON) + command_bytes(6, ActuatorId.LAMP, Action.ON)
    radio_out, _ = ap.tick(0.0, serial_in=data)
    assert sorted(f.dst for f in radio_out) == [5, 6]


def test_unacked_command_retries_then_reports_failure():
    ap = AccessPoint(status_period=1e9)
    transmissions = []
    failure = b""
    ap_out, _ = ap.tick(0.0, serial_in=command_bytes(5, ActuatorId.LAMP, Action.ON))
    transmissions.extend(ap_out)
    for i in range(1, 12):
        now = i * 0.1
        radio_out, serial_out = ap.tick(now)
        transmissions.extend(radio_out)
        failure += serial_out
    assert len(transmissions) == 4  # original + 3 retries
    assert len({f.txid for f in transmissions}) == 1
    failed = status_frames(failure, STATUS_DELIVERY_FAILED)
    assert len(failed) == 1
    dst, txid = struct.unpack(">HB", failed[0].payload[1:])
    assert dst == 5 and txid == transmissions[0].txid
    assert ap.radio_drops == 1


def test_failure_releases_next_queued_command():
    ap = AccessPoint(status_period=1e9)
    data = command_bytes(5, ActuatorId.LAMP, Action.ON) + command_bytes(5, ActuatorId.LAMP, Action.OFF)
    first, _ = ap.tick(0.0, serial_in=data)
    sent = list(first)
    for i in range(1, 12):
        radio_out, _ = ap.tick(i * 0.1)
        sent.extend(radio_out)
    txids = [f.txid for f in sent]
    assert len(set(txids)) == 2  # second command launched after the first gave up


def test_ack_with_unexpected_txid_is_ignored():
    ap = AccessPoint(status_period=1e9)
    radio_out, _ = ap.tick(0.0, serial_in=command_bytes(5, ActuatorId.LAMP, Action.ON))
    txid = radio_out[0].txid
    _, serial_out = ap.tick(0.05, radio_in=[(make_ack(5, 0, (txid + 1) % 256), -60.0)])
    assert status_frames(serial_out, STATUS_DELIVERED) == []
    assert 5 in ap.pending


def test_periodic_status_carries_counters():
    ap = AccessPoint(status_period=10.0)
    _, out0 = ap.tick(0.0)
    frames = status_frames(out0, STATUS_PERIODIC)
    assert len(frames) == 1
    _, out1 = ap.tick(5.0)
    assert status_frames(out1, STATUS_PERIODIC) == []
    # a corrupted serial frame bumps the checksum counter before the next status
    bad = bytearray(command_bytes(5, ActuatorId.LAMP, Action.ON))
    bad[-1] ^= 0xFF
    ap.tick(6.0, serial_in=bytes(bad))
    _, out2 = ap.tick(10.0)
    frames = status_frames(out2, STATUS_PERIODIC)
    uptime, drops, bad_checksums = struct.unpack(">IHH", frames[0].payload[1:])
    assert uptime == 10 and drops == 0 and bad_checksums == 1


def test_frames_addressed_elsewhere_are_ignored():
    ap = fresh_ap()
    stray = RadioFrame(5, 9, 1, FrameKind.READING, ReadingPayload(SensorId.LIGHT, 50).encode())
    radio_out, serial_out = ap.tick(0.1, radio_in=[(stray, -70.0)])
    assert radio_out == [] and serial_out == b""


def test_round_trip_with_end_device():
    """Reading goes up, command comes down, delivered notice closes the loop."""
    ap = AccessPoint(status_period=1e9)
    ed = EndDevice(address=5, sensors={SensorId.TEMPERATURE}, has_lamp=True)
    env = RoomEnv(temperature=23.0)
    serial_up = b""
    delivered = b""
    to_ed: list[RadioFrame] = []
    to_ap: list[tuple[RadioFrame, float]] = []
    pending_cmd = command_bytes(5, ActuatorId.LAMP, Action.SET_LEVEL, 40)
    for i in range(30):
        now = i * 0.1
        ed_out = ed.tick(env, now, 0.1, inbound=to_ed)
        to_ap = [(f, -70.0) for f in ed_out]
        ap_radio, ap_serial = ap.tick(now, radio_in=to_ap, serial_in=pending_cmd)
        pending_cmd = b""
        to_ed = [f for f in ap_radio if f.dst == 5]
        serial_up += ap_serial
    readings = [f for f in parse_serial(serial_up) if f.kind == SERIAL_READING]
    assert readings, "no reading reached the host"
    src, sensor, value, rssi = struct.unpack(">HBhb", readings[0].payload)
    assert (src, sensor, value, rssi) == (5, SensorId.TEMPERATURE, 2300, -70)
    assert ed.lamp_on and ed.lamp_level == 40
    assert len(status_frames(serial_up, STATUS_DELIVERED)) == 1
    assert ed.delivery_failures == 0 and ap.radio_drops == 0
