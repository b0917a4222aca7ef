"""Radio link simulation: RSSI vs distance, noise, deep fades, frame delivery.

The mean RSSI curve is table-driven: piecewise-linear interpolation in
(log10(distance), dBm) space through measured anchors rather than a single
log-distance exponent, because the measured averages do not fit one exponent.
The default anchor table reproduces the measured campaign exactly:

    0 m -> -60.45 dBm     5 m -> -92.23 dBm
    10 m -> -94.61 dBm    15 m -> -95.29 dBm    38.1 m -> -104.0 dBm

The last anchor encodes the measured maximum range: at 38.1 m the mean hits
the receiver sensitivity (-104 dBm), so average delivery drops through 50%
there. Distances below d0 (0.5 m) clamp to d0; "0 m" measurements mean "as
close as possible". Beyond the last anchor the final segment's slope extends.

A sampled RSSI adds Gaussian noise and, with probability p_fade, subtracts an
exponentially distributed multipath deep fade. Defaults (sigma=2 dB,
p_fade=0.1, fade_mean=4 dB) put the 15 m fade tail at the observed -101 dBm
low. A frame is delivered iff its sampled RSSI >= sensitivity (boundary
inclusive).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_ANCHORS = (
    (0.0, -60.45),
    (5.0, -92.23),
    (10.0, -94.61),
    (15.0, -95.29),
    (38.1, -104.0),
)

DEFAULT_SENSITIVITY_DBM = -104.0


@dataclass(frozen=True)
class LinkModel:
    anchors: tuple[tuple[float, float], ...] = DEFAULT_ANCHORS
    d0: float = 0.5
    sigma: float = 2.0
    p_fade: float = 0.1
    fade_mean: float = 4.0
    sensitivity: float = DEFAULT_SENSITIVITY_DBM
    seed: int = 0

    def __post_init__(self):
        dists = [d for d, _ in self.anchors]
        rssis = [r for _, r in self.anchors]
        if len(self.anchors) < 2:
            raise ValueError("need at least two anchors")
        if any(b <= a for a, b in zip(dists, dists[1:])):
            raise ValueError("anchor distances must be strictly increasing")
        if any(b > a for a, b in zip(rssis, rssis[1:])):
            raise ValueError("anchor RSSI must be non-increasing with distance")
        if not 0.0 <= self.p_fade <= 1.0:
            raise ValueError("p_fade must be in [0, 1]")

    def link_rng(self, src: int, dst: int) -> np.random.Generator:
        """Per-link RNG stream; seeded by (seed, src, dst) so creation order
        never matters for replay."""
        return np.random.default_rng(np.random.SeedSequence([self.seed, src, dst]))


def _log_anchors(model: LinkModel):
    xs = [math.log10(max(d, model.d0)) for d, _ in model.anchors]
    ys = [r for _, r in model.anchors]
    return xs, ys


def rssi_mean(model: LinkModel, d: float) -> float:
    """Mean RSSI in dBm at distance d (meters)."""
    if d < 0:
        raise ValueError("distance must be >= 0")
    xs, ys = _log_anchors(model)
    x = math.log10(max(d, model.d0))
    if x <= xs[0]:
        return ys[0]
    if x >= xs[-1]:
        slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
        return ys[-1] + slope * (x - xs[-1])
    for i in range(len(xs) - 1):
        if x == xs[i + 1]:
            return ys[i + 1]  # hit anchors exactly, no rounding residue
        if x < xs[i + 1]:
            t = (x - xs[i]) / (xs[i + 1] - xs[i])
            return ys[i] + t * (ys[i + 1] - ys[i])
    raise AssertionError("unreachable")


def sample_rssi(model: LinkModel, d: float, rng: np.random.Generator) -> float:
    """One RSSI draw: mean + N(0, sigma) - occasional exponential deep fade.

    Draw order is fixed (normal, uniform, then exponential only when fading)
    so a given seed replays the same sequence.
    """
    value = rssi_mean(model, d)
    if model.sigma > 0:
        value += rng.normal(0.0, model.sigma)
    if model.p_fade > 0 and rng.random() < model.p_fade:
        value -= rng.exponential(model.fade_mean)
    return value


def sample_rssi_batch(model: LinkModel, d: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorized sampling for Monte-Carlo sweeps; its own draw order."""
    values = np.full(n, rssi_mean(model, d))
    if model.sigma > 0:
        values += rng.normal(0.0, model.sigma, n)
    if model.p_fade > 0:
        fading = rng.random(n) < model.p_fade
        values -= np.where(fading, rng.exponential(model.fade_mean, n), 0.0)
    return values


@dataclass(frozen=True)
class DeliveryResult:
    delivered: bool
    rssi: float


def deliver(model: LinkModel, d: float, rng: np.random.Generator) -> DeliveryResult:
    """Decide one frame's fate. Delivered iff sampled RSSI >= sensitivity."""
    rssi = sample_rssi(model, d, rng)
    return DeliveryResult(rssi >= model.sensitivity, rssi)


def delivery_ratio(model: LinkModel, d: float, n: int, rng: np.random.Generator) -> float:
    samples = sample_rssi_batch(model, d, n, rng)
    return float(np.mean(samples >= model.sensitivity))


@dataclass
class NodePlacement:
    """Node address -> (x, y) position in meters."""

    positions: dict[int, tuple[float, float]] = field(default_factory=dict)

    def place(self, address: int, x: float, y: float) -> None:
        self.positions[address] = (float(x), float(y))

    def distance(self, a: int, b: int) -> float:
        ax, ay = self.positions[a]
        bx, by = self.positions[b]
        return math.hypot(ax - bx, ay - by)


class Channel:
    """Shared channel state: one immutable model, one RNG stream per link,
    optional CSV logging of every delivery decision."""

    def __init__(self, model: LinkModel, placement: NodePlacement, rssi_log=None):
        self.model = model
        self.placement = placement
        self._rngs: dict[tuple[int, int], np.random.Generator] = {}
        self._owns_log = isinstance(rssi_log, str)
        if self._owns_log:
            rssi_log = open(rssi_log, "w", encoding="utf-8")
        self._rssi_log = rssi_log
        if rssi_log is not None:
            rssi_log.write("distance_m,rssi_dbm,delivered\n")

    def close(self) -> None:
        if self._rssi_log is not None:
            self._rssi_log.flush()
            if self._owns_log:
                self._rssi_log.close()
            self._rssi_log = None

    def _rng_for(self, src: int, dst: int) -> np.random.Generator:
        key = (src, dst)
        rng = self._rngs.get(key)
        if rng is None:
            rng = self.model.link_rng(src, dst)
            self._rngs[key] = rng
        return rng

    def transmit(self, src: int, dst: int) -> DeliveryResult:
        d = self.placement.distance(src, dst)
        result = deliver(self.model, d, self._rng_for(src, dst))
        if self._rssi_log is not None:
            self._rssi_log.write(
                "%.3f,%.2f,%d\n" % (d, result.rssi, 1 if result.delivered else 0)
            )
        return result
