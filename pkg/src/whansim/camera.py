"""Synthetic camera frames.

The simulated camera produces a deterministic 160x120 RGB test pattern that
encodes its own orientation and age, so a viewer (or a test) can verify pan,
tilt, and frame progression from pixel values alone:

    R(x, y) = (x + round(pan))  mod 256
    G(x, y) = (y + round(tilt) + 152) mod 256
    B(x, y) = counter mod 256

round() here is floor(v + 0.5), half away from zero toward positive, so
other-language consumers can reproduce frames bit for bit. A new frame is cut
every 100 ms of simulation time; counter = floor(t / 0.1). Frames serialize
as binary PPM (P6), and the streaming helper wraps each one as a multipart
part under the "frame" boundary.
"""

from __future__ import annotations

import math

import numpy as np

WIDTH = 160
HEIGHT = 120
FRAME_PERIOD_S = 0.1
TILT_OFFSET = 152  # lifts the -151.5..151.5 tilt range into non-negative green

PPM_HEADER = b"P6\n%d %d\n255\n" % (WIDTH, HEIGHT)
MULTIPART_BOUNDARY = "frame"


def round_half_up(value: float) -> int:
    return math.floor(value + 0.5)


def frame_counter(sim_time: float) -> int:
    return math.floor(sim_time / FRAME_PERIOD_S + 1e-9)


def frame_pixels(pan: float, tilt: float, counter: int) -> np.ndarray:
    """(HEIGHT, WIDTH, 3) uint8 array for the given orientation and counter."""
    red = (np.arange(WIDTH, dtype=np.int64) + round_half_up(pan)) % 256
    green = (np.arange(HEIGHT, dtype=np.int64) + round_half_up(tilt) + TILT_OFFSET) % 256
    frame = np.empty((HEIGHT, WIDTH, 3), dtype=np.uint8)
    frame[:, :, 0] = red[None, :]
    frame[:, :, 1] = green[:, None].astype(np.uint8)
    frame[:, :, 2] = counter % 256
    return frame


def ppm_frame(pan: float, tilt: float, counter: int) -> bytes:
    return PPM_HEADER + frame_pixels(pan, tilt, counter).tobytes()


def multipart_part(ppm: bytes) -> bytes:
    """One multipart chunk as sent on the live camera stream."""
    head = (
        "--%s\r\nContent-Type: image/x-portable-pixmap\r\nContent-Length: %d\r\n\r\n"
        % (MULTIPART_BOUNDARY, len(ppm))
    )
    return head.encode() + ppm + b"\r\n"
