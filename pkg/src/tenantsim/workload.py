"""Seeded generation of multi-tenant inference scenarios."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import jsonschema
import yaml

from .estimator import estimate_network
from .model import WORKLOAD_SETS, SocConfig, TaskSpec, WorkloadScenario, workload_networks

QOS_MULTIPLIERS = {"L": 1.2, "M": 1.0, "H": 0.8}
N_RANGE = (200, 500)
PRIORITY_LEVELS = 12


def geometric_weights(ratio: float = 0.85, levels: int = PRIORITY_LEVELS) -> tuple[float, ...]:
    """Weights ``ratio**p`` for p in 0..levels-1 (low priorities most common)."""
    return tuple(ratio ** p for p in range(levels))


@dataclass(frozen=True)
class WorkloadConfig:
    # mean inter-arrival as a fraction of the set's mean isolated latency
    arrival_scale: float = 0.5
    # absolute mean inter-arrival in cycles; overrides arrival_scale when set
    mean_interarrival_cycles: Optional[float] = None
    priority_weights: tuple = field(default_factory=geometric_weights)
    qos_k: float = 2.0
    allow_any_n: bool = False

    def __post_init__(self):
        if len(self.priority_weights) != PRIORITY_LEVELS:
            raise ValueError(f"priority_weights needs {PRIORITY_LEVELS} entries")
        if any(w < 0 for w in self.priority_weights) or sum(self.priority_weights) <= 0:
            raise ValueError("priority_weights must be non-negative with a positive sum")
        if self.qos_k <= 0 or self.arrival_scale <= 0:
            raise ValueError("qos_k and arrival_scale must be > 0")
        if self.mean_interarrival_cycles is not None and self.mean_interarrival_cycles <= 0:
            raise ValueError("mean_interarrival_cycles must be > 0")


def baseline_qos(network, soc: SocConfig, qos_k: float) -> int:
    """``qos_k`` x the estimated single-tenant latency on the whole SoC."""
    _, total = estimate_network(network, soc, soc.num_tiles)
    return math.ceil(qos_k * total)


def generate_workload(seed: int, n: int, workload_set: str, qos_level: str,
                      soc: SocConfig = SocConfig(),
                      config: WorkloadConfig = WorkloadConfig()) -> WorkloadScenario:
    """Draw ``n`` tasks uniformly from the set's networks with Poisson arrivals.

    The random stream does not depend on ``qos_level``, so the same seed yields
    the same tasks and arrivals at every level; only the targets scale.
    """
    if qos_level not in QOS_MULTIPLIERS:
        raise ValueError(f"unknown qos level {qos_level!r}")
    if not config.allow_any_n and not N_RANGE[0] <= n <= N_RANGE[1]:
        raise ValueError(f"n={n} outside {N_RANGE[0]}..{N_RANGE[1]}; set allow_any_n to override")
    if n < 1:
        raise ValueError("n must be >= 1")
    nets = workload_networks(workload_set)
    base = {net.name: baseline_qos(net, soc, config.qos_k) for net in nets}

    if config.mean_interarrival_cycles is not None:
        mean_gap = config.mean_interarrival_cycles
    else:
        iso = [estimate_network(net, soc, soc.num_tiles)[1] for net in nets]
        mean_gap = config.arrival_scale * sum(iso) / len(iso)

    rng = random.Random(seed)
    mult = QOS_MULTIPLIERS[qos_level]
    t = 0.0
    tasks = []
    for i in range(n):
        if i:
            t += rng.expovariate(1.0 / mean_gap)
        net = nets[rng.randrange(len(nets))]
        prio = rng.choices(range(PRIORITY_LEVELS), weights=config.priority_weights)[0]
        tasks.append(TaskSpec(i, net, int(t), prio, mult * base[net.name]))
    return WorkloadScenario(tuple(tasks), workload_set, qos_level, seed)


# ---------------------------------------------------------------------------
# experiment config files
# ---------------------------------------------------------------------------

POLICY_NAMES = ("MOCA", "TIME_MUX", "STATIC", "DYN_COMPUTE")


def _one_or_many(item):
    return {"oneOf": [item, {"type": "array", "items": item, "minItems": 1, "uniqueItems": True}]}


SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["n", "set", "qos_level"],
    "additionalProperties": False,
    "properties": {
        "seed": _one_or_many({"type": "integer"}),
        "n": {"type": "integer", "minimum": 1},
        "set": _one_or_many({"enum": sorted(WORKLOAD_SETS)}),
        "qos_level": _one_or_many({"enum": sorted(QOS_MULTIPLIERS)}),
        "allow_any_n": {"type": "boolean"},
        "qos_k": {"type": "number", "exclusiveMinimum": 0},
        "arrival": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "scale": {"type": "number", "exclusiveMinimum": 0},
                "mean_interarrival_cycles": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "priority_weights": {
            "type": "array", "items": {"type": "number", "minimum": 0},
            "minItems": PRIORITY_LEVELS, "maxItems": PRIORITY_LEVELS,
        },
        "policies": {"type": "array", "minItems": 1, "uniqueItems": True,
                     "items": {"enum": list(POLICY_NAMES)}},
        "policy_options": {
            "type": "object", "additionalProperties": False,
            "properties": {p: {"type": "object"} for p in POLICY_NAMES},
        },
        "baseline": {"enum": list(POLICY_NAMES)},
        "epoch_cycles": {"type": "integer", "minimum": 1},
        "soc": {"type": "object"},
    },
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """One scenario family, optionally swept over sets, QoS levels, seeds and policies."""

    n: int
    workload_sets: tuple
    qos_levels: tuple
    seeds: tuple = (0,)
    workload: WorkloadConfig = WorkloadConfig()
    soc: SocConfig = SocConfig()
    policies: tuple = POLICY_NAMES
    policy_options: dict = field(default_factory=dict)
    baseline: str = "DYN_COMPUTE"
    epoch_cycles: int = 100

    def scenario(self, workload_set: str, qos_level: str, seed: int) -> WorkloadScenario:
        return generate_workload(seed, self.n, workload_set, qos_level, self.soc, self.workload)

    def runs(self):
        """Every (policy, set, level, seed) tuple in sorted key order."""
        return sorted((p, s, q, seed) for p in self.policies for s in self.workload_sets
                      for q in self.qos_levels for seed in self.seeds)


def _as_tuple(v):
    return tuple(v) if isinstance(v, list) else (v,)


def parse_experiment_config(text: str, source: str = "<string>") -> ExperimentConfig:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else "?"
        raise ConfigError(f"{source}: parse error at line {line}: {e}") from e
    try:
        jsonschema.validate(doc, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"{source}: schema violation at {where}: {e.message}") from e

    arrival = doc.get("arrival", {})
    try:
        wl = WorkloadConfig(
            arrival_scale=arrival.get("scale", 0.5),
            mean_interarrival_cycles=arrival.get("mean_interarrival_cycles"),
            priority_weights=tuple(doc.get("priority_weights", geometric_weights())),
            qos_k=doc.get("qos_k", 2.0),
            allow_any_n=doc.get("allow_any_n", False),
        )
        soc = SocConfig(**doc.get("soc", {}))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{source}: {e}") from e
    if not wl.allow_any_n and not N_RANGE[0] <= doc["n"] <= N_RANGE[1]:
        raise ConfigError(f"{source}: n={doc['n']} outside {N_RANGE[0]}..{N_RANGE[1]} "
                          "(set allow_any_n: true to override)")
    return ExperimentConfig(
        n=doc["n"], workload_sets=_as_tuple(doc["set"]), qos_levels=_as_tuple(doc["qos_level"]),
        seeds=_as_tuple(doc.get("seed", 0)), workload=wl, soc=soc,
        policies=tuple(doc.get("policies", POLICY_NAMES)),
        policy_options=doc.get("policy_options", {}),
        baseline=doc.get("baseline", "DYN_COMPUTE"),
        epoch_cycles=doc.get("epoch_cycles", 100),
    )


def load_experiment_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"{path}: {e}") from e
    return parse_experiment_config(text, str(path))
