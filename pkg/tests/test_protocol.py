"""Wire-format tests: checksum, serial/radio codecs, txid, duplicate detection."""

import random

import pytest

from whansim import protocol
from whansim.protocol import (
    DUPLICATE,
    FRESH,
    Action,
    ActuatorId,
    BadChecksum,
    BadFrame,
    CommandPayload,
    DedupState,
    FrameKind,
    RadioFrame,
    ReadingPayload,
    SensorId,
    SerialDecoder,
    SerialFrame,
    Truncated,
    checksum,
    decode_radio,
    decode_serial,
    encode_radio,
    encode_serial,
    make_ack,
    next_txid,
)


@pytest.mark.parametrize(
    "length, kind, payload, expected",
    [
        (0x01, 0x00, b"", 0xFF),          # hand sum 1 -> 256-1
        (0x00, 0x00, b"", 0x00),          # zero sum
        (0x03, 0x01, b"\x01\x02", 0xF9),  # hand sum 7 -> 256-7
    ],
)
def test_checksum_hand_values(length, kind, payload, expected):
    assert checksum(length, kind, payload) == expected


def test_checksum_closes_the_sum():
    rnd = random.Random(7)
    for _ in range(200):
        payload = bytes(rnd.randrange(256) for _ in range(rnd.randrange(65)))
        length = len(payload) + 1
        kind = rnd.randrange(256)
        c = checksum(length, kind, payload)
        assert (length + kind + sum(payload) + c) % 256 == 0


def test_checksum_rejects_oversize_payload():
    with pytest.raises(ValueError):
        checksum(66, 0, bytes(65))


def test_encode_serial_example():
    frame = SerialFrame(kind=0x01, payload=b"\x2a")
    assert encode_serial(frame) == bytes([0x7E, 0x02, 0x01, 0x2A, 0xD3])


def test_serial_round_trip_empty_payload():
    frame = SerialFrame(kind=0x03, payload=b"")
    assert decode_serial(encode_serial(frame)) == frame


def test_decode_rejects_flipped_checksum():
    raw = bytearray(encode_serial(SerialFrame(kind=0x01, payload=b"\x2a")))
    raw[-1] ^= 0x40
    with pytest.raises(BadChecksum):
        decode_serial(bytes(raw))


def test_decode_serial_truncated_and_trailing():
    raw = encode_serial(SerialFrame(kind=0x02, payload=b"\x00\x05\x00\x01\x00\x00"))
    with pytest.raises(Truncated):
        decode_serial(raw[:-1])
    with pytest.raises(BadFrame):
        decode_serial(raw + b"\x00")
    with pytest.raises(BadFrame):
        decode_serial(b"\x00" + raw)


def test_next_txid():
    assert next_txid(0) == 1
    assert next_txid(41) == 42
    assert next_txid(255) == 0


def random_serial_frame(rnd):
    payload = bytes(rnd.randrange(256) for _ in range(rnd.randrange(65)))
    return SerialFrame(kind=rnd.randrange(256), payload=payload)


def test_serial_round_trip_randomized():
    rnd = random.Random(0xC0FFEE)
    for _ in range(10_000):
        frame = random_serial_frame(rnd)
        assert decode_serial(encode_serial(frame)) == frame


def test_single_byte_corruption_never_silently_altered():
    """Flip one byte anywhere in the encoding; strict decode must not accept a
    frame different from the original without raising."""
    rnd = random.Random(0xBADC0DE)
    silent = 0
    for _ in range(10_000):
        frame = random_serial_frame(rnd)
        raw = bytearray(encode_serial(frame))
        pos = rnd.randrange(len(raw))
        delta = rnd.randrange(1, 256)
        raw[pos] = (raw[pos] + delta) % 256
        try:
            decoded = decode_serial(bytes(raw))
        except protocol.ProtocolError:
            continue
        if decoded != frame:
            silent += 1
    assert silent == 0


def test_stream_decoder_resyncs_after_bad_checksum():
    good = SerialFrame(kind=0x01, payload=b"\x11\x22")
    bad = bytearray(encode_serial(good))
    bad[-1] ^= 0xFF
    dec = SerialDecoder()
    frames = dec.feed(bytes(bad) + encode_serial(good))
    assert frames == [good]
    assert dec.bad_checksums == 1


def test_stream_decoder_handles_split_feeds_and_junk():
    frames_in = [SerialFrame(kind=k, payload=bytes([k] * k)) for k in range(5)]
    raw = b"\x01\x02junk" + b"".join(encode_serial(f) for f in frames_in)
    dec = SerialDecoder()
    out = []
    for i in range(0, len(raw), 3):  # drip-feed in 3-byte chunks
        out.extend(dec.feed(raw[i : i + 3]))
    assert out == frames_in
    assert dec.bad_checksums == 0


def test_stream_decoder_payload_may_contain_sof():
    frame = SerialFrame(kind=0x01, payload=bytes([protocol.SOF, protocol.SOF, 0x00]))
    dec = SerialDecoder()
    assert dec.feed(encode_serial(frame)) == [frame]


def test_radio_round_trip_randomized():
    rnd = random.Random(42)
    for _ in range(10_000):
        kind = rnd.choice(list(FrameKind))
        if kind == FrameKind.ACK:
            payload = bytes([rnd.randrange(256)])
        else:
            payload = bytes(rnd.randrange(256) for _ in range(rnd.randrange(65)))
        frame = RadioFrame(
            src=rnd.randrange(65536),
            dst=rnd.randrange(65536),
            txid=rnd.randrange(256),
            kind=kind,
            payload=payload,
        )
        assert decode_radio(encode_radio(frame)) == frame


def test_radio_frame_invariants():
    with pytest.raises(ValueError):
        RadioFrame(1, 0, 0, FrameKind.ACK, b"")  # ack payload must be 1 byte
    with pytest.raises(ValueError):
        RadioFrame(1, 0, 0, FrameKind.READING, bytes(65))


def test_make_ack_echoes_txid():
    ack = make_ack(5, 0, 0x2A)
    assert ack.kind == FrameKind.ACK
    assert ack.payload == b"\x2a"
    assert ack.txid == 0x2A


def test_reading_payload_round_trip_and_ranges():
    for sensor, value in [
        (SensorId.TEMPERATURE, 2300),
        (SensorId.TEMPERATURE, -512),
        (SensorId.LIGHT, 0),
        (SensorId.LIGHT, 100),
        (SensorId.MOTION, 1),
    ]:
        p = ReadingPayload(sensor, value)
        assert ReadingPayload.decode(p.encode()) == p
    with pytest.raises(ValueError):
        ReadingPayload(SensorId.LIGHT, 101)
    with pytest.raises(ValueError):
        ReadingPayload(SensorId.MOTION, 2)


def test_command_payload_round_trip_and_ranges():
    for cmd in [
        CommandPayload(ActuatorId.LAMP, Action.SET_LEVEL, 40),
        CommandPayload(ActuatorId.HEATER, Action.OFF),
        CommandPayload(ActuatorId.PAN_MOTOR, Action.STEP, -90),
        CommandPayload(ActuatorId.TILT_MOTOR, Action.STEP, 160),
    ]:
        assert CommandPayload.decode(cmd.encode()) == cmd
    with pytest.raises(ValueError):
        CommandPayload(ActuatorId.LAMP, Action.SET_LEVEL, 101)


def test_dedup_walk_through():
    state = DedupState()
    assert state.check(5, 7) == FRESH
    assert state.check(5, 7) == DUPLICATE
    assert state.check(5, 8) == FRESH
    assert state.check(6, 8) == FRESH  # independent per source


def test_dedup_accepts_each_consecutive_txid_once():
    rnd = random.Random(99)
    state = DedupState()
    accepted = {}
    for _ in range(5_000):
        src = rnd.randrange(4)
        advance = rnd.random() < 0.5
        txid = accepted.get(src, -1)
        if advance:
            txid = next_txid(txid)
        verdict = state.check(src, txid)
        if advance:
            assert verdict == FRESH
            accepted[src] = txid
        elif txid >= 0:
            assert verdict == DUPLICATE
