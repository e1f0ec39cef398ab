"""Behavioral model of per-tile memory regulation and the shared memory system.

Each tile carries an access counter and a thresholding engine. With a
throttle ``(window, threshold)`` enabled the tile may issue at most
``threshold`` requests per window; once the budget is spent the tile stalls
(bubbles) until the window rolls over or the runtime reconfigures it.

The shared DRAM is arbitrated once per epoch: if the summed demand fits, all
tiles are fully served, otherwise bandwidth is split in proportion to demand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

REQUEST_BYTES = 64
_EPS = 1e-9


class ThrottleError(ValueError):
    pass


@dataclass(frozen=True)
class ThrottleConfig:
    window_cycles: float = 0
    threshold_load: int = 0  # requests per window

    def __post_init__(self):
        if (self.window_cycles == 0) != (self.threshold_load == 0):
            raise ThrottleError(
                f"window and threshold must be set or cleared together: {self.window_cycles}, {self.threshold_load}")
        if self.window_cycles < 0 or self.threshold_load < 0:
            raise ThrottleError("throttle values must be >= 0")

    @property
    def enabled(self) -> bool:
        return self.window_cycles > 0


UNTHROTTLED = ThrottleConfig(0, 0)


@dataclass
class TileState:
    tile_id: int
    assigned_task: Optional[int] = None
    current_layer: int = 0
    access_counter: float = 0.0
    window_start_cycle: float = 0.0
    throttle: ThrottleConfig = UNTHROTTLED
    stalled: bool = False
    compute_done_units: float = 0.0
    mem_done_bytes: float = 0.0
    # window_start -> requests issued; only filled when tracking is on
    window_log: Optional[dict] = None

    def roll(self, now: float) -> None:
        """Advance the monitored window so that it contains ``now``."""
        w = self.throttle.window_cycles
        if not w or now < self.window_start_cycle + w:
            return
        k = max(1, math.floor((now - self.window_start_cycle) / w))
        self.window_start_cycle += k * w
        self.access_counter = 0.0
        self.stalled = False

    def headroom(self, now: float) -> float:
        """Requests still allowed in the window containing ``now``."""
        if not self.throttle.enabled:
            return math.inf
        self.roll(now)
        return max(0.0, self.throttle.threshold_load - self.access_counter)

    def issue(self, requests: float, now: float) -> float:
        """Issue up to ``requests`` at time ``now``; returns the granted amount."""
        granted = min(requests, self.headroom(now))
        if granted <= 0:
            if self.throttle.enabled:
                self.stalled = True
            return 0.0
        self.access_counter += granted
        if self.window_log is not None:
            key = self.window_start_cycle if self.throttle.enabled else None
            self.window_log[key] = self.window_log.get(key, 0.0) + granted
        if self.throttle.enabled and self.access_counter >= self.throttle.threshold_load - _EPS:
            self.stalled = True
        return granted

    def next_window_boundary(self, now: float) -> float:
        if not self.throttle.enabled:
            return math.inf
        self.roll(now)
        return self.window_start_cycle + self.throttle.window_cycles


def configure_throttle(tile: TileState, cfg: ThrottleConfig, now: float,
                       cost_cycles: float = 0) -> TileState:
    """Install ``cfg`` on ``tile``; the new window opens once the reconfiguration completes."""
    if not isinstance(cfg, ThrottleConfig):
        raise ThrottleError("expected a ThrottleConfig")
    tile.throttle = cfg
    tile.access_counter = 0.0
    tile.window_start_cycle = now + cost_cycles
    tile.stalled = False
    return tile


@dataclass(frozen=True)
class TileStream:
    """One tile's share of the layer currently executing on it.

    ``cycles`` is the contention-free latency of the whole layer; the tile
    moves ``dram_bytes`` from DRAM and ``traffic_bytes`` through L2 over that
    time. ``remaining`` is the unfinished fraction of the layer.
    """

    cycles: float
    dram_bytes: float
    traffic_bytes: float
    compute_units: float
    remaining: float


@dataclass
class Demand:
    dram_bytes: float
    l2_bytes: float
    compute_units: float
    # (window_start, traffic bytes per window, window count) per run of
    # window slices, for committing the counter
    segments: list = field(default_factory=list)


def tile_demand(tile: TileState, stream: Optional[TileStream], start: float, end: float,
                request_bytes: int = REQUEST_BYTES) -> Demand:
    """Bytes the tile wants to move in ``[start, end)``.

    Demand follows the contention-free issue rate of the layer, capped by the
    work left and, when throttled, by the headroom of each window slice the
    interval overlaps.
    """
    if stream is None or end <= start or stream.remaining <= 0:
        return Demand(0.0, 0.0, 0.0)
    frac = min(stream.remaining, (end - start) / stream.cycles)
    compute = frac * stream.compute_units
    if stream.traffic_bytes <= 0:
        return Demand(frac * stream.dram_bytes, 0.0, compute)

    ratio = stream.dram_bytes / stream.traffic_bytes
    rate = stream.traffic_bytes / stream.cycles
    left = stream.remaining * stream.traffic_bytes
    if not tile.throttle.enabled:
        want = min(left, rate * (end - start))
        return Demand(want * ratio, want, compute, [(None, want, 1)])

    segments = []
    total = 0.0
    t = start
    # walk window slices on a scratch copy of the counter
    counter_ws, counter = tile.window_start_cycle, tile.access_counter
    w = tile.throttle.window_cycles
    budget = tile.throttle.threshold_load * request_bytes
    while t < end - _EPS and left - total > _EPS:
        if t >= counter_ws + w:
            k = max(1, math.floor((t - counter_ws) / w))
            counter_ws += k * w
            counter = 0.0
        if t < counter_ws:
            # reconfiguration still in progress: no issue before the window opens
            t = min(end, counter_ws)
            continue
        if counter == 0 and abs(t - counter_ws) < _EPS and end - t >= 2 * w:
            # run of identical full windows
            full = min(rate * w, budget)
            m = math.floor((end - t) / w + _EPS) - 1
            m = min(m, math.floor((left - total) / full))
            if m >= 1:
                segments.append((counter_ws, full, m))
                total += m * full
                counter_ws += m * w
                t = counter_ws
                continue
        seg_end = min(end, counter_ws + w)
        room = max(0.0, budget - counter * request_bytes)
        want = min(rate * (seg_end - t), left - total, room)
        if want > 0:
            segments.append((counter_ws, want, 1))
            total += want
            counter += want / request_bytes
        t = seg_end
    return Demand(total * ratio, total, compute, segments)


def commit_traffic(tile: TileState, demand: Demand, served_fraction: float,
                   request_bytes: int = REQUEST_BYTES) -> None:
    """Charge the served share of ``demand`` to the tile's access counter."""
    for ws, traffic, count in demand.segments:
        if ws is None:
            continue
        # only windows that are logged, or the last one, matter to the tile state
        first = 0 if tile.window_log is not None else count - 1
        for j in range(first, count):
            at = ws + j * tile.throttle.window_cycles
            tile.roll(at)
            tile.issue(traffic * served_fraction / request_bytes, at)


def arbitrate_epoch(demands, capacity: float, granularity: float = REQUEST_BYTES) -> list:
    """Split ``capacity`` among ``demands`` (indexed by ascending tile id).

    Uncontended demand is served in full. Otherwise each tile gets its
    proportional share floored to ``granularity``; leftover granules go to
    the largest fractional remainders, ties broken by ascending tile id.
    ``granularity=0`` returns the exact proportional shares.
    """
    demands = [max(0.0, float(d)) for d in demands]
    total = sum(demands)
    if total <= capacity + _EPS:
        return demands
    shares = [capacity * d / total for d in demands]
    if granularity <= 0:
        return shares
    served = [min(d, math.floor(s / granularity + _EPS) * granularity) for s, d in zip(shares, demands)]
    left = capacity - sum(served)
    order = sorted(range(len(demands)), key=lambda i: (-(shares[i] - served[i]), i))
    while left >= granularity - _EPS:
        progressed = False
        for i in order:
            if left < granularity - _EPS:
                break
            give = min(granularity, demands[i] - served[i])
            if give > _EPS:
                served[i] += give
                left -= give
                progressed = True
        if not progressed:
            break
    return served


@dataclass
class MemorySystem:
    dram_bw: float
    l2_bw: float
    epoch_cycles: float
    granularity: float = REQUEST_BYTES
    violations: int = 0
    max_served: float = 0.0
    epochs: int = 0

    @property
    def dram_capacity(self) -> float:
        return self.dram_bw * self.epoch_cycles

    @property
    def l2_capacity(self) -> float:
        return self.l2_bw * self.epoch_cycles

    def serve(self, dram_demands, l2_demands, span: float | None = None) -> list:
        """Arbitrate one epoch (or ``span`` cycles); returns served DRAM bytes per tile."""
        span = self.epoch_cycles if span is None else span
        dram_cap = self.dram_bw * span
        served = arbitrate_epoch(dram_demands, dram_cap, self.granularity)
        # L2 sees the traffic that goes with the served DRAM bytes
        l2 = [l * (s / d) if d > 0 else l for l, s, d in zip(l2_demands, served, dram_demands)]
        l2_total = sum(l2)
        l2_cap = self.l2_bw * span
        if l2_total > l2_cap + _EPS:
            scale = l2_cap / l2_total
            served = [s * scale for s in served]
        got = sum(served)
        if got > dram_cap + 1e-6:
            self.violations += 1
        self.max_served = max(self.max_served, got / span if span else 0.0)
        self.epochs += 1
        return served
