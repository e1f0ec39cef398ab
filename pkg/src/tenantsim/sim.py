"""Discrete-time simulation engine.

Time advances in fixed epochs. In every epoch each busy tile asks for the
bytes its current layer would move at its contention-free rate (capped by its
throttle), DRAM is arbitrated across tiles, and each task advances by the
smaller of its time-limited and byte-limited progress. Layer boundaries,
arrivals and completions are handled at epoch boundaries, where the policy
gets to react.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

from .estimator import estimate_layer, estimate_network, remaining_prediction
from .hw import (REQUEST_BYTES, UNTHROTTLED, MemorySystem, TileState, TileStream,
                 commit_traffic, configure_throttle, tile_demand)
from .model import NetworkDesc, SocConfig, TaskSpec, WorkloadScenario
from .runtime import Scoreboard

log = logging.getLogger(__name__)

_EPS = 1e-9


class Policy(str, enum.Enum):
    MOCA = "MOCA"
    TIME_MUX = "TIME_MUX"
    STATIC = "STATIC"
    DYN_COMPUTE = "DYN_COMPUTE"


class SimulationError(RuntimeError):
    pass


class Status(str, enum.Enum):
    WAITING = "WAITING"
    RUNNING = "RUNNING"
    DONE = "DONE"


@dataclass
class SimConfig:
    soc: SocConfig
    policy: Policy
    scenario: WorkloadScenario
    epoch_cycles: int = 100
    max_cycles: int = 10**9
    emit_traces: bool = False
    record_layers: bool = False
    track_windows: bool = False
    # DRAM shares are floored to this many bytes per epoch (0 = exact shares);
    # any floor starves tiles whose per-epoch demand is below it
    arbitration_granularity: float = 0.0
    # policy knobs, passed to the policy constructor
    policy_options: dict = field(default_factory=dict)

    def __post_init__(self):
        self.policy = Policy(self.policy)
        if self.epoch_cycles < 1:
            raise ValueError("epoch_cycles must be >= 1")
        if self.arbitration_granularity < 0:
            raise ValueError("arbitration_granularity must be >= 0")


@dataclass
class TaskRecord:
    task_id: int
    network: str
    dispatch_cycle: int
    start_cycle: int
    finish_cycle: int
    end_to_end_cycles: int
    qos_target_cycles: float
    deadline_met: bool
    priority: int
    migrations: int
    migration_cycles: int
    mem_reconfigs: int
    reconfig_cycles: int
    served_dram_bytes: float
    expected_dram_bytes: float
    layer_cycles: Optional[list] = None


@dataclass
class SimResult:
    policy: str
    tasks: list
    epochs: int
    final_cycle: int
    bandwidth_violations: int
    max_dram_bytes_per_cycle: float
    event_counts: dict
    epoch_trace: Optional[list] = None
    runtime_trace: Optional[list] = None
    schedule_trace: Optional[list] = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


class TaskState:
    """Mutable per-task bookkeeping inside one simulation."""

    def __init__(self, spec: TaskSpec, soc: SocConfig):
        self.spec = spec
        self.id = spec.task_id
        self.network: NetworkDesc = spec.network
        self.status = Status.WAITING
        self.layer_idx = 0
        self.remaining = 1.0
        self.tiles: list[int] = []
        self.start_cycle: Optional[float] = None
        self.finish_cycle: Optional[float] = None
        self.overhead = 0.0
        self.layer_done_at: Optional[float] = None
        self.layer_start: float = 0.0
        self.layer_log: list = []
        self.est = None
        self.migrations = 0
        self.migration_cycles = 0
        self.reconfigs = 0
        self.reconfig_cycles = 0
        self.served_dram = 0.0
        self.expected_dram = 0.0
        self.stalled_epoch = False
        # scheduler-facing estimates, computed once at dispatch on the full SoC
        ests, total = estimate_network(spec.network, soc, soc.num_tiles)
        self.est_total = total
        self.est_avg_bw = sum(e.from_dram_bytes for e in ests) / total
        self.policy_state: dict = {}

    @property
    def priority(self) -> int:
        return self.spec.user_priority

    @property
    def layer(self):
        return self.network.layers[self.layer_idx]


class Simulator:
    def __init__(self, cfg: SimConfig, policy=None):
        from .scheduler import make_policy

        self.cfg = cfg
        self.soc = cfg.soc
        self.E = cfg.epoch_cycles
        self.tiles = [TileState(i) for i in range(self.soc.num_tiles)]
        self.tasks = [TaskState(t, self.soc) for t in sorted(cfg.scenario.tasks, key=lambda t: t.task_id)]
        self.by_id = {t.id: t for t in self.tasks}
        self.pending = sorted(self.tasks, key=lambda t: (t.spec.dispatch_cycle, t.id))
        self.waiting: list[TaskState] = []
        self.running: list[TaskState] = []
        self.done: list[TaskState] = []
        self.mem = MemorySystem(self.soc.dram_bw_bytes_per_cycle, self.soc.l2_bw_bytes_per_cycle, self.E,
                               cfg.arbitration_granularity)
        self.board = Scoreboard()
        self.now = 0
        self.counts = {"mem_reconfigs": 0, "compute_migrations": 0, "preemptions": 0,
                       "layer_boundaries": 0, "schedule_calls": 0}
        self.epoch_trace = [] if cfg.emit_traces else None
        # per-window request logs on every tile; disables bulk skipping
        self.track_windows = cfg.track_windows
        if self.track_windows:
            for tile in self.tiles:
                tile.window_log = {}
        self.runtime_trace = [] if cfg.emit_traces else None
        self.schedule_trace = [] if cfg.emit_traces else None
        self.policy = policy if policy is not None else make_policy(cfg.policy, self.soc, **cfg.policy_options)

    # ------------------------------------------------------------------
    # services for policies
    # ------------------------------------------------------------------

    def free_tile_ids(self) -> list[int]:
        return [t.tile_id for t in self.tiles if t.assigned_task is None]

    def remaining_prediction(self, task: TaskState, num_tiles: Optional[int] = None) -> int:
        n = num_tiles or len(task.tiles) or self.soc.num_tiles
        return remaining_prediction(task.network, self.soc, n, task.layer_idx)

    def trace_schedule(self, event: str, task: TaskState, score: float = 0.0):
        if self.schedule_trace is not None:
            self.schedule_trace.append((self.now, self.cfg.policy.value, event, task.id,
                                        len(task.tiles), round(score, 6)))

    def start(self, task: TaskState, tile_ids: list[int], now: float, score: float = 0.0) -> None:
        if task.status != Status.WAITING:
            raise SimulationError(f"task {task.id} started twice")
        if not tile_ids:
            raise SimulationError(f"task {task.id} started without tiles")
        for tid in tile_ids:
            tile = self.tiles[tid]
            if tile.assigned_task is not None:
                raise SimulationError(f"tile {tid} already assigned to task {tile.assigned_task}")
            tile.assigned_task = task.id
            configure_throttle(tile, UNTHROTTLED, now)
        task.tiles = sorted(tile_ids)
        task.status = Status.RUNNING
        if task.start_cycle is None:
            task.start_cycle = now
        self.waiting.remove(task)
        self.running.append(task)
        self.running.sort(key=lambda t: t.id)
        self.trace_schedule("start", task, score)
        self._begin_layer(task, now)

    def acquire(self, task: TaskState, n: int) -> int:
        free = self.free_tile_ids()[:n]
        for tid in free:
            self.tiles[tid].assigned_task = task.id
            configure_throttle(self.tiles[tid], UNTHROTTLED, self.now)
        task.tiles = sorted(task.tiles + free)
        return len(free)

    def release(self, task: TaskState, n: Optional[int] = None) -> None:
        drop = task.tiles if n is None else task.tiles[len(task.tiles) - n:]
        for tid in drop:
            tile = self.tiles[tid]
            tile.assigned_task = None
            tile.stalled = False
            configure_throttle(tile, UNTHROTTLED, self.now)
        task.tiles = [t for t in task.tiles if t not in drop]

    def charge_migration(self, task: TaskState) -> None:
        cost = self.soc.compute_repartition_cost_cycles
        task.overhead += cost
        task.migrations += 1
        task.migration_cycles += cost
        self.counts["compute_migrations"] += 1
        self.trace_schedule("migrate", task)

    def charge_reconfig(self, task: TaskState) -> None:
        cost = self.soc.mem_repartition_cost_cycles
        task.overhead += cost
        task.reconfigs += 1
        task.reconfig_cycles += cost
        self.counts["mem_reconfigs"] += 1

    def preempt(self, task: TaskState) -> None:
        self.release(task)
        self.board.remove(task.id)
        task.status = Status.WAITING
        task.est = None
        self.running.remove(task)
        self.waiting.append(task)
        self.waiting.sort(key=lambda t: (t.spec.dispatch_cycle, t.id))
        self.counts["preemptions"] += 1
        self.trace_schedule("preempt", task)

    def refresh_stream(self, task: TaskState) -> None:
        task.est = estimate_layer(task.layer, self.soc, len(task.tiles))

    # ------------------------------------------------------------------
    # main loop
    # ------------------------------------------------------------------

    def _begin_layer(self, task: TaskState, now: float) -> None:
        task.remaining = 1.0
        task.layer_done_at = None
        task.layer_start = now
        self.counts["layer_boundaries"] += 1
        self.policy.on_layer_boundary(self, task, now)
        if task.status == Status.RUNNING:
            self.refresh_stream(task)
            task.expected_dram += task.est.from_dram_bytes

    def _finish_layer(self, task: TaskState, now: float) -> bool:
        """Handle a completed layer; returns True if the task finished."""
        if self.cfg.record_layers:
            task.layer_log.append((task.layer_idx, len(task.tiles), task.layer_done_at - task.layer_start))
        if task.layer_idx == len(task.network) - 1:
            task.finish_cycle = task.layer_done_at
            task.status = Status.DONE
            self.release(task)
            self.board.remove(task.id)
            self.running.remove(task)
            self.done.append(task)
            self.trace_schedule("finish", task)
            self.policy.on_finish(self, task, now)
            return True
        task.layer_idx += 1
        self._begin_layer(task, now)
        return False

    def _epoch(self, t0: float) -> list:
        """Advance every running task through ``[t0, t0 + E)``; returns per-task progress."""
        E = self.E
        demands = [None] * len(self.tiles)
        per_task = []
        for task in self.running:
            if task.layer_done_at is not None:
                continue
            used = min(E, task.overhead)
            task.overhead -= used
            active = t0 + used
            est = task.est
            n = len(task.tiles)
            stream = TileStream(est.exact_cycles, est.from_dram_bytes / n, est.total_mem_bytes / n,
                                est.compute_ideal_cycles, task.remaining)
            for tid in task.tiles:
                demands[tid] = tile_demand(self.tiles[tid], stream, active, t0 + E)
            per_task.append((task, active, used))

        dram = [d.dram_bytes if d else 0.0 for d in demands]
        l2 = [d.l2_bytes if d else 0.0 for d in demands]
        served = self.mem.serve(dram, l2)

        progress = []
        self._last_traffic = {}
        for task, active, used in per_task:
            est = task.est
            avail = t0 + E - active
            by_time = min(task.remaining, avail / est.exact_cycles)
            got = 0.0
            throttled = False
            for tid in task.tiles:
                d = demands[tid]
                frac = served[tid] / d.dram_bytes if d.dram_bytes > 0 else 1.0
                commit_traffic(self.tiles[tid], d, frac)
                # (demanded traffic, counter charge in bytes, window slices)
                self._last_traffic[tid] = (d.l2_bytes, d.l2_bytes * frac, sum(c for _, _, c in d.segments))
                got += served[tid]
                tile = self.tiles[tid]
                if tile.throttle.enabled:
                    throttled = True
            if est.from_dram_bytes > 0:
                by_bytes = got / est.from_dram_bytes
                step = min(by_time, by_bytes)
            else:
                step = by_time
            task.served_dram += got
            before = task.remaining
            task.remaining -= step
            if task.remaining <= _EPS or (est.from_dram_bytes > 0 and
                                          task.remaining * est.from_dram_bytes < 0.5):
                limited = step < by_time - _EPS or throttled
                task.layer_done_at = t0 + E if limited else min(t0 + E, active + before * est.exact_cycles)
                task.remaining = 0.0
            progress.append((task, step, used))

        if self.epoch_trace is not None:
            for tile in self.tiles:
                d = demands[tile.tile_id]
                self.epoch_trace.append((int(t0 // E), tile.tile_id, tile.assigned_task,
                                         round(d.dram_bytes, 3) if d else 0.0,
                                         round(served[tile.tile_id], 3), int(tile.stalled)))
        return progress

    def _can_skip(self) -> bool:
        if self.epoch_trace is not None or self.track_windows:
            return False
        if self.policy.wants_every_epoch and self.waiting and self.free_tile_ids():
            return False
        return not any(task.layer_done_at is not None for task in self.running)

    def run(self) -> SimResult:
        E = self.E
        t0 = 0
        cap = self.cfg.max_cycles
        while self.pending or self.waiting or self.running:
            if t0 > cap:
                stuck = [t.id for t in self.running + self.waiting]
                raise SimulationError(f"cycle cap {cap} exceeded at {t0}; unfinished tasks {stuck[:10]}")
            self.now = t0
            event = False
            while self.pending and self.pending[0].spec.dispatch_cycle <= t0:
                task = self.pending.pop(0)
                self.waiting.append(task)
                event = True
            for task in list(self.running):
                if task.layer_done_at is not None:
                    self._finish_layer(task, t0)
                    event = True
            if self.waiting and (event or self.policy.wants_every_epoch):
                self.counts["schedule_calls"] += 1
                self.policy.schedule(self, t0)

            if not self.running:
                if not self.pending:
                    if self.waiting:
                        raise SimulationError(f"policy left {len(self.waiting)} tasks waiting with idle SoC")
                    break
                # idle SoC: jump to the epoch holding the next dispatch
                nxt = self.pending[0].spec.dispatch_cycle
                t0 = max(t0 + E, (nxt // E) * E)
                continue

            skip_ok = self._can_skip()
            progress = self._epoch(t0)
            t0 += E
            if skip_ok:
                t0 += self._skip(progress, t0)
        for tile in self.tiles:
            if tile.assigned_task is not None:
                raise SimulationError(f"tile {tile.tile_id} still assigned at end of run")
        return self._result(t0)

    def _skip(self, progress, t_next: float) -> float:
        """Replay identical epochs in bulk while nothing can change.

        A throttled tile repeats its last epoch only while the epochs stay
        inside the current window and its remaining budget still covers the
        same demand (or it stays fully stalled). Windows much shorter than an
        epoch act as a plain rate cap; those tiles restart their window at
        the end of the skipped span.
        """
        E = self.E
        k = math.inf
        for task, step, used in progress:
            if task.layer_done_at is not None:
                return 0
            if task.overhead > 0:
                k = min(k, math.floor(task.overhead / E))
                continue
            if used > 0:
                # overhead ended mid-epoch: the last epoch is not representative
                return 0
            throttled = False
            for tid in task.tiles:
                tile = self.tiles[tid]
                if not tile.throttle.enabled:
                    continue
                throttled = True
                if tile.window_start_cycle > t_next:
                    return 0
                demand, charge, slices = self._last_traffic[tid]
                if slices > 1:
                    if tile.throttle.window_cycles > E / 2:
                        return 0
                    continue
                k = min(k, math.floor((tile.next_window_boundary(t_next) - t_next) / E))
                room = tile.headroom(t_next) * REQUEST_BYTES
                if charge > 0:
                    if room < demand - _EPS:
                        return 0
                    k = min(k, math.floor((room - demand) / charge + _EPS) + 1)
                elif demand > 0 or room > 0:
                    return 0
            if step > 0:
                k = min(k, math.floor(task.remaining / step) - 1)
            elif not throttled:
                return 0
        if self.pending:
            k = min(k, math.floor((self.pending[0].spec.dispatch_cycle - t_next) / E))
        if not math.isfinite(k) or k <= 0:
            return 0
        k = int(k)
        for task, step, used in progress:
            if task.overhead > 0:
                task.overhead -= k * E
                continue
            task.remaining -= k * step
            task.served_dram += k * step * task.est.from_dram_bytes
            for tid in task.tiles:
                tile = self.tiles[tid]
                if not tile.throttle.enabled:
                    continue
                _, charge, slices = self._last_traffic[tid]
                if slices > 1:
                    tile.window_start_cycle = t_next + k * E
                    tile.access_counter = 0.0
                    tile.stalled = False
                elif charge > 0:
                    tile.issue(k * charge / REQUEST_BYTES, t_next)
        self.mem.epochs += k
        return k * E

    def _result(self, t_end: float) -> SimResult:
        records = []
        for t in self.tasks:
            finish = math.ceil(t.finish_cycle - _EPS)
            e2e = finish - t.spec.dispatch_cycle
            records.append(TaskRecord(
                task_id=t.id, network=t.network.name, dispatch_cycle=t.spec.dispatch_cycle,
                start_cycle=int(t.start_cycle), finish_cycle=finish, end_to_end_cycles=e2e,
                qos_target_cycles=t.spec.qos_target_cycles,
                deadline_met=e2e <= t.spec.qos_target_cycles, priority=t.priority,
                migrations=t.migrations, migration_cycles=t.migration_cycles,
                mem_reconfigs=t.reconfigs, reconfig_cycles=t.reconfig_cycles,
                served_dram_bytes=round(t.served_dram, 3), expected_dram_bytes=round(t.expected_dram, 3),
                layer_cycles=[(i, n, round(c, 6)) for i, n, c in t.layer_log] if self.cfg.record_layers else None,
            ))
        return SimResult(
            policy=self.cfg.policy.value, tasks=records, epochs=self.mem.epochs,
            final_cycle=int(t_end), bandwidth_violations=self.mem.violations,
            max_dram_bytes_per_cycle=round(self.mem.max_served, 6),
            event_counts=dict(self.counts),
            epoch_trace=self.epoch_trace, runtime_trace=self.runtime_trace,
            schedule_trace=self.schedule_trace,
        )


def run_simulation(cfg: SimConfig) -> SimResult:
    return Simulator(cfg).run()


_isolated_cache: dict = {}


def run_isolated(task: TaskSpec, soc: SocConfig, num_tiles: Optional[int] = None,
                 epoch_cycles: int = 100) -> int:
    """End-to-end cycles of ``task`` running alone on ``num_tiles`` tiles, unthrottled."""
    from .scheduler import IsolatedPolicy

    n = num_tiles or soc.num_tiles
    key = (id(task.network), task.network.name, soc, n, epoch_cycles)
    hit = _isolated_cache.get(key)
    if hit is not None and hit[0] is task.network:
        return hit[1]
    solo = TaskSpec(0, task.network, 0, task.user_priority, task.qos_target_cycles)
    scen = WorkloadScenario((solo,), "-", "-", 0)
    cfg = SimConfig(soc=soc, policy=Policy.STATIC, scenario=scen, epoch_cycles=epoch_cycles)
    res = Simulator(cfg, policy=IsolatedPolicy(n)).run()
    cycles = res.tasks[0].end_to_end_cycles
    _isolated_cache[key] = (task.network, cycles)
    return cycles


def count_repartition_events(result: SimResult) -> tuple[int, int]:
    mem = sum(t.mem_reconfigs for t in result.tasks)
    comp = sum(t.migrations for t in result.tasks)
    return mem, comp
