"""Core data model: layers, networks, SoC configuration and tasks.

Network descriptions live in YAML files (see ``docs/formats.md``). Each layer
either declares tensor dims, from which byte footprints and MAC counts are
derived, or carries explicit byte sizes.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import yaml


class Kind(str, enum.Enum):
    COMPUTE = "COMPUTE"
    MEM = "MEM"


class NetworkError(ValueError):
    """Raised when a network description cannot be parsed or validated."""


@dataclass(frozen=True)
class LayerDesc:
    name: str
    kind: Kind
    total_mac: int = 0
    weight_bytes: int = 0
    input_bytes: int = 0
    input_b_bytes: int = 0
    output_bytes: int = 0
    bias_bytes: int = 0
    tile_bytes: int = 0
    tiling_factor: int = 1

    def __post_init__(self):
        if self.kind == Kind.COMPUTE and self.total_mac <= 0:
            raise NetworkError(f"layer {self.name!r}: COMPUTE layer needs total_mac > 0")
        if self.kind == Kind.MEM and self.total_mac != 0:
            raise NetworkError(f"layer {self.name!r}: MEM layer must have total_mac == 0")
        if self.kind == Kind.COMPUTE and self.input_b_bytes > 0:
            raise NetworkError(f"layer {self.name!r}: input_b_bytes only allowed on MEM layers")
        for f in ("weight_bytes", "input_bytes", "input_b_bytes", "output_bytes",
                  "bias_bytes", "tile_bytes"):
            if getattr(self, f) < 0:
                raise NetworkError(f"layer {self.name!r}: {f} must be >= 0")
        if self.tiling_factor < 1:
            raise NetworkError(f"layer {self.name!r}: tiling_factor must be >= 1")


@dataclass(frozen=True)
class NetworkDesc:
    name: str
    layers: tuple[LayerDesc, ...]

    def __post_init__(self):
        if not self.layers:
            raise NetworkError(f"network {self.name!r}: must have at least one layer")

    def __len__(self):
        return len(self.layers)


@dataclass(frozen=True)
class SocConfig:
    """Hardware parameters of the simulated SoC.

    Defaults follow the evaluated 8-tile configuration (16x16 arrays, 2 MiB
    shared L2, 16 B/cycle DRAM at 1 GHz). ``l2_bw_bytes_per_cycle``,
    ``overlap_f`` and the repartition costs are model parameters.
    """

    num_tiles: int = 8
    pes_per_tile: int = 256
    scratchpad_bytes_per_tile: int = 128 * 1024
    accumulator_bytes_per_tile: int = 64 * 1024
    l2_bytes: int = 2 * 2**20
    l2_banks: int = 8
    dram_bw_bytes_per_cycle: float = 16.0
    l2_bw_bytes_per_cycle: float = 64.0
    frequency_hz: float = 1e9
    overlap_f: float = 0.3
    mem_repartition_cost_cycles: int = 8
    compute_repartition_cost_cycles: int = 1_000_000

    def __post_init__(self):
        for f in ("num_tiles", "pes_per_tile", "scratchpad_bytes_per_tile",
                  "accumulator_bytes_per_tile", "l2_bytes", "l2_banks",
                  "dram_bw_bytes_per_cycle", "l2_bw_bytes_per_cycle", "frequency_hz"):
            if getattr(self, f) <= 0:
                raise ValueError(f"SocConfig.{f} must be > 0")
        if not 0 < self.overlap_f < 1:
            raise ValueError("SocConfig.overlap_f must lie in (0, 1)")
        if self.dram_bw_bytes_per_cycle > self.l2_bw_bytes_per_cycle:
            raise ValueError("DRAM bandwidth must not exceed L2 bandwidth")
        if self.mem_repartition_cost_cycles < 0 or self.compute_repartition_cost_cycles < 0:
            raise ValueError("repartition costs must be >= 0")


@dataclass(frozen=True)
class TaskSpec:
    task_id: int
    network: NetworkDesc
    dispatch_cycle: int
    user_priority: int
    qos_target_cycles: float

    def __post_init__(self):
        if not 0 <= self.user_priority <= 11:
            raise ValueError(f"task {self.task_id}: user_priority must be in 0..11")
        if self.qos_target_cycles <= 0:
            raise ValueError(f"task {self.task_id}: qos_target_cycles must be > 0")

    @property
    def deadline_cycle(self) -> float:
        return self.dispatch_cycle + self.qos_target_cycles


@dataclass(frozen=True)
class WorkloadScenario:
    tasks: tuple[TaskSpec, ...]
    workload_set: str
    qos_level: str
    seed: int


# ---------------------------------------------------------------------------
# Network files
# ---------------------------------------------------------------------------

_dims3 = {"type": "array", "items": {"type": "integer", "minimum": 1},
          "minItems": 3, "maxItems": 3}
_nonneg = {"type": "integer", "minimum": 0}

NETWORK_SCHEMA = {
    "type": "object",
    "required": ["name", "layers"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "element_bytes": {"type": "integer", "minimum": 1},
        "layers": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "kind"],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string"},
                    "kind": {"enum": ["COMPUTE", "MEM"]},
                    "dims": {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {
                            "out": _dims3,
                            "kernel": _dims3,
                            "input": _dims3,
                            "input_b": _dims3,
                        },
                    },
                    "total_mac": _nonneg,
                    "weight_bytes": _nonneg,
                    "input_bytes": _nonneg,
                    "input_b_bytes": _nonneg,
                    "output_bytes": _nonneg,
                    "bias_bytes": _nonneg,
                    "tile_bytes": _nonneg,
                    "tiling_factor": {"type": "integer", "minimum": 1},
                },
            },
        },
    },
}


def _prod(xs):
    return math.prod(xs) if xs else 0


def _layer_from_record(rec: dict, elem: int, scratchpad_bytes: int) -> LayerDesc:
    kind = Kind(rec["kind"])
    dims = rec.get("dims", {})
    out = dims.get("out")
    kernel = dims.get("kernel")
    inp = dims.get("input")
    inp_b = dims.get("input_b")

    derived = {}
    if kind == Kind.COMPUTE and out and kernel:
        kh, kw, cin = kernel
        oh, ow, oc = out
        derived["total_mac"] = oh * ow * oc * kh * kw * cin
        derived["weight_bytes"] = kh * kw * cin * oc * elem
        derived["bias_bytes"] = oc * elem
        if inp is None:
            inp = (oh, ow, cin)
    if inp is not None:
        derived["input_bytes"] = _prod(inp) * elem
    if inp_b is not None:
        derived["input_b_bytes"] = _prod(inp_b) * elem
    if out is not None:
        derived["output_bytes"] = _prod(out) * elem

    vals = {}
    for f in ("total_mac", "weight_bytes", "input_bytes", "input_b_bytes",
              "output_bytes", "bias_bytes"):
        vals[f] = rec.get(f, derived.get(f, 0))

    if "tile_bytes" in rec or "tiling_factor" in rec:
        tf = rec.get("tiling_factor", 1)
        tile = rec.get("tile_bytes", 0)
    else:
        # default loop-nest tiling: split the working set into scratchpad-sized tiles
        ws = vals["weight_bytes"] + vals["input_bytes"] + vals["input_b_bytes"] + vals["output_bytes"]
        tf = max(1, -(-ws // scratchpad_bytes))
        tile = -(-ws // tf) if ws else 0

    return LayerDesc(name=rec["name"], kind=kind, tile_bytes=tile, tiling_factor=tf, **vals)


def parse_network(text: str, source: str = "<string>",
                  scratchpad_bytes: int = 128 * 1024) -> NetworkDesc:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else "?"
        raise NetworkError(f"{source}: parse error at line {line}: {e}") from e
    if not isinstance(doc, dict):
        raise NetworkError(f"{source}: expected a mapping at top level")
    try:
        jsonschema.validate(doc, NETWORK_SCHEMA)
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise NetworkError(f"{source}: schema violation at {where}: {e.message}") from e

    elem = doc.get("element_bytes", 1)
    layers = tuple(_layer_from_record(rec, elem, scratchpad_bytes) for rec in doc["layers"])
    try:
        return NetworkDesc(doc["name"], layers)
    except NetworkError as e:
        raise NetworkError(f"{source}: {e}") from e


def load_network(path, scratchpad_bytes: int = 128 * 1024) -> NetworkDesc:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise NetworkError(f"{path}: {e}") from e
    return parse_network(text, str(path), scratchpad_bytes)


# ---------------------------------------------------------------------------
# Shipped benchmarks
# ---------------------------------------------------------------------------

WORKLOAD_SETS = {
    "A": ("squeezenet", "yololite", "kws"),
    "B": ("googlenet", "alexnet", "resnet50", "yolov2"),
}
WORKLOAD_SETS["C"] = WORKLOAD_SETS["A"] + WORKLOAD_SETS["B"]


def network_dir() -> Path:
    return Path(str(resources.files("tenantsim") / "networks"))


_cache: dict[str, NetworkDesc] = {}


def benchmark(name: str, directory: Optional[Path] = None) -> NetworkDesc:
    key = f"{directory}:{name}"
    if key not in _cache:
        _cache[key] = load_network((directory or network_dir()) / f"{name}.yaml")
    return _cache[key]


def workload_networks(workload_set: str, directory: Optional[Path] = None) -> list[NetworkDesc]:
    if workload_set not in WORKLOAD_SETS:
        raise ValueError(f"unknown workload set {workload_set!r}")
    return [benchmark(n, directory) for n in WORKLOAD_SETS[workload_set]]
