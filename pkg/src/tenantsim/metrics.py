"""SLA satisfaction, system throughput and fairness."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional

GROUPS = ("p-Low", "p-Mid", "p-High")
PRIORITY_OFFSET = 1


class MetricsError(ValueError):
    pass


def bucket(priority: int) -> str:
    if not 0 <= priority <= 11:
        raise MetricsError(f"priority {priority} outside 0..11")
    if priority <= 2:
        return "p-Low"
    if priority <= 8:
        return "p-Mid"
    return "p-High"


def sla_rate(tasks) -> tuple[float, dict]:
    """Overall and per-bucket fraction of tasks that met their target.

    ``tasks`` are records with ``end_to_end_cycles``, ``qos_target_cycles`` and
    ``priority``. Buckets without tasks map to ``None``.
    """
    tasks = list(tasks)
    if not tasks:
        raise MetricsError("no tasks")
    met = {g: [0, 0] for g in GROUPS}
    hits = 0
    for t in tasks:
        ok = t.end_to_end_cycles <= t.qos_target_cycles
        hits += ok
        cell = met[bucket(t.priority)]
        cell[0] += ok
        cell[1] += 1
    by_group = {g: (m / n if n else None) for g, (m, n) in met.items()}
    return hits / len(tasks), by_group


def stp(c_single, c_mt) -> float:
    """Sum of per-task normalized progress ``C_single / C_MT``."""
    c_single, c_mt = list(c_single), list(c_mt)
    if len(c_single) != len(c_mt):
        raise MetricsError("c_single and c_mt differ in length")
    if any(c <= 0 for c in c_mt + c_single):
        raise MetricsError("latencies must be > 0")
    return sum(s / m for s, m in zip(c_single, c_mt))


def proportional_progress(c_single, c_mt, priorities, offset: int = PRIORITY_OFFSET) -> list[float]:
    weights = [p + offset for p in priorities]
    if len(weights) != len(c_single) or len(weights) != len(c_mt):
        raise MetricsError("inputs differ in length")
    if any(w <= 0 for w in weights):
        raise MetricsError("priority weights must be > 0 after the offset")
    total = sum(weights)
    return [(s / m) / (w / total) for s, m, w in zip(c_single, c_mt, weights)]


def fairness(c_single, c_mt, priorities, offset: int = PRIORITY_OFFSET) -> tuple[float, list, bool]:
    """``(min PP / max PP, PP list, defined)``.

    A lone task has no pair to compare; it reports 1.0 with ``defined`` False.
    """
    pp = proportional_progress(c_single, c_mt, priorities, offset)
    if len(pp) < 2:
        return 1.0, pp, False
    return min(pp) / max(pp), pp, True


@dataclass
class MetricsReport:
    policy: str
    workload_set: str
    qos_level: str
    seed: int
    n_tasks: int
    sla_rate_overall: float
    sla_rate_by_group: dict
    stp: float
    fairness: float
    fairness_defined: bool
    mem_reconfigs: int
    compute_migrations: int
    migration_cycles: int
    pp: list = field(default_factory=list)

    def row(self) -> dict:
        r = {
            "policy": self.policy, "workload_set": self.workload_set,
            "qos_level": self.qos_level, "seed": self.seed, "n_tasks": self.n_tasks,
            "sla_rate": round(self.sla_rate_overall, 6),
        }
        for g in GROUPS:
            v = self.sla_rate_by_group[g]
            r[f"sla_{g}"] = "" if v is None else round(v, 6)
        r.update(stp=round(self.stp, 6), fairness=round(self.fairness, 6),
                 mem_reconfigs=self.mem_reconfigs, compute_migrations=self.compute_migrations,
                 migration_cycles=self.migration_cycles)
        return r


REPORT_COLUMNS = ["policy", "workload_set", "qos_level", "seed", "n_tasks", "sla_rate",
                  "sla_p-Low", "sla_p-Mid", "sla_p-High", "stp", "fairness",
                  "mem_reconfigs", "compute_migrations", "migration_cycles"]


def build_report(result, scenario, isolated: dict) -> MetricsReport:
    """Metrics of one simulation; ``isolated`` maps task id to C_single."""
    tasks = sorted(result.tasks, key=lambda t: t.task_id)
    missing = [t.task_id for t in tasks if t.task_id not in isolated]
    if missing:
        raise MetricsError(f"no isolated latency for tasks {missing[:5]}")
    overall, groups = sla_rate(tasks)
    single = [isolated[t.task_id] for t in tasks]
    mt = [t.end_to_end_cycles for t in tasks]
    fair, pp, defined = fairness(single, mt, [t.priority for t in tasks])
    return MetricsReport(
        policy=result.policy, workload_set=scenario.workload_set, qos_level=scenario.qos_level,
        seed=scenario.seed, n_tasks=len(tasks), sla_rate_overall=overall,
        sla_rate_by_group=groups, stp=stp(single, mt), fairness=fair, fairness_defined=defined,
        mem_reconfigs=sum(t.mem_reconfigs for t in tasks),
        compute_migrations=sum(t.migrations for t in tasks),
        migration_cycles=sum(t.migration_cycles for t in tasks), pp=pp,
    )


def isolated_latencies(scenario, soc, epoch_cycles: int = 100) -> dict:
    from .sim import run_isolated

    return {t.task_id: run_isolated(t, soc, epoch_cycles=epoch_cycles) for t in scenario.tasks}


def reports_csv(reports, columns: Optional[list] = None) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns or REPORT_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow(r.row() if isinstance(r, MetricsReport) else r)
    return buf.getvalue()
