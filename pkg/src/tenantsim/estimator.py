"""Analytical layer latency and memory-traffic estimation.

A COMPUTE layer is charged its ideal PE time and its memory time (DRAM
portion plus the full L2 traffic), combined as
``max(c, m) + min(c, m) * overlap_f``. A MEM layer is charged memory time
only.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass

from .model import Kind, LayerDesc, NetworkDesc, SocConfig


@dataclass(frozen=True)
class LayerEstimate:
    compute_ideal_cycles: float
    memory_ideal_cycles: float
    prediction_cycles: int
    total_mem_bytes: float
    from_dram_bytes: float
    # unrounded prediction; the simulator's progress model uses this
    exact_cycles: float

    @property
    def bw_rate_bytes_per_cycle(self) -> float:
        return self.from_dram_bytes / self.prediction_cycles if self.prediction_cycles else 0.0


def combine(compute: float, memory: float, overlap_f: float) -> float:
    return max(compute, memory) + min(compute, memory) * overlap_f


def layer_traffic(layer: LayerDesc, soc: SocConfig) -> tuple[float, float]:
    """Return ``(total_mem, from_dram)`` bytes for one layer."""
    if layer.kind == Kind.MEM:
        total = layer.input_bytes + layer.input_b_bytes + layer.output_bytes
        return total, layer.input_b_bytes + layer.output_bytes

    # loads: weights + bias + inputs (reloaded once per tile pass when a tile
    # does not fit the scratchpad); stores: outputs
    reload = layer.tiling_factor if layer.tile_bytes > soc.scratchpad_bytes_per_tile else 1
    loads = layer.weight_bytes + layer.input_bytes * reload + layer.bias_bytes
    total = loads + layer.output_bytes

    from_dram = layer.weight_bytes + layer.output_bytes + layer.bias_bytes
    if layer.input_bytes > soc.l2_bytes:
        # input activation evicted from L2
        from_dram += layer.input_bytes
    if layer.tile_bytes > soc.l2_bytes:
        from_dram += layer.tiling_factor * layer.tile_bytes
    return total, from_dram


def estimate_layer(layer: LayerDesc, soc: SocConfig, num_tiles_allocated: int,
                   overlap_f: float | None = None) -> LayerEstimate:
    if not 1 <= num_tiles_allocated <= soc.num_tiles:
        raise ValueError(f"num_tiles_allocated must be in 1..{soc.num_tiles}, got {num_tiles_allocated}")
    f = soc.overlap_f if overlap_f is None else overlap_f
    total_mem, from_dram = layer_traffic(layer, soc)
    memory = from_dram / soc.dram_bw_bytes_per_cycle + total_mem / soc.l2_bw_bytes_per_cycle

    if layer.kind == Kind.COMPUTE:
        if layer.total_mac <= 0:
            raise ValueError(f"COMPUTE layer {layer.name!r} has no MACs")
        compute = layer.total_mac / (soc.pes_per_tile * num_tiles_allocated)
        exact = combine(compute, memory, f)
    else:
        compute = 0.0
        exact = memory

    return LayerEstimate(
        compute_ideal_cycles=compute,
        memory_ideal_cycles=memory,
        prediction_cycles=math.ceil(exact - 1e-9),
        total_mem_bytes=total_mem,
        from_dram_bytes=from_dram,
        exact_cycles=exact,
    )


def estimate_network(network: NetworkDesc, soc: SocConfig,
                     num_tiles: int) -> tuple[list[LayerEstimate], int]:
    ests = [estimate_layer(layer, soc, num_tiles) for layer in network.layers]
    return ests, sum(e.prediction_cycles for e in ests)


def remaining_prediction(network: NetworkDesc, soc: SocConfig, num_tiles: int, start: int) -> int:
    """Predicted cycles of layers ``start..end`` on ``num_tiles`` tiles."""
    return _suffix_sums(network, soc, num_tiles)[start]


_suffix_cache: dict = {}


def _suffix_sums(network, soc, num_tiles):
    key = (id(network), soc, num_tiles)
    hit = _suffix_cache.get(key)
    if hit is None or hit[0] is not network:
        ests, _ = estimate_network(network, soc, num_tiles)
        sums = [0] * (len(ests) + 1)
        for i in range(len(ests) - 1, -1, -1):
            sums[i] = sums[i + 1] + ests[i].prediction_cycles
        hit = (network, sums)
        _suffix_cache[key] = hit
    return hit[1]


def tune_overlap_f(samples, soc: SocConfig, num_tiles: int = 1,
                   lo: float = 0.01, hi: float = 0.99) -> float:
    """Fit ``overlap_f`` to measured layer latencies.

    Each sample ``(layer, measured_cycles)`` with both compute and memory time
    yields ``f_i = (measured - max) / min``; the median is returned, clamped
    to ``[lo, hi]``. Samples where measured does not exceed ``max(c, m)``
    contribute ``f_i = 0`` (perfect overlap).
    """
    samples = list(samples)
    if not samples:
        raise ValueError("tune_overlap_f needs at least one sample")
    fs = []
    for layer, measured in samples:
        est = estimate_layer(layer, soc, num_tiles)
        c, m = est.compute_ideal_cycles, est.memory_ideal_cycles
        small = min(c, m)
        if small <= 0:
            continue
        fs.append(max(0.0, (measured - max(c, m)) / small))
    if not fs:
        return lo
    return min(hi, max(lo, statistics.median(fs)))
