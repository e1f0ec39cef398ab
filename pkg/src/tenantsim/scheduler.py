"""Multi-tenant scheduling policies.

``MocaPolicy`` forms co-running groups from a score-ordered queue and pairs
memory-intensive tasks with compute-bound ones; at every layer boundary it
runs the bandwidth runtime. The three baselines are a priority-aware time
multiplexer, a static 4 x 2-tile partition and a dynamic compute
partitioner that reallocates tiles at layer-block boundaries.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .estimator import estimate_layer
from .hw import UNTHROTTLED, configure_throttle
from .model import Kind, NetworkDesc, SocConfig
from .runtime import PartitionResult, TaskRuntimeState, detect_and_partition, dynamic_score


class QueueStatus(str, enum.Enum):
    WAITING = "WAITING"
    RUNNING = "RUNNING"
    DONE = "DONE"


@dataclass
class TaskQueueEntry:
    task_id: int
    dispatch_cycle: int
    user_priority: int
    qos_target: float
    estimated_total_cycles: float
    estimated_avg_bw: float
    status: QueueStatus = QueueStatus.WAITING
    score: float = 0.0
    mem_intensive: bool = False


@dataclass
class ScheduleDecision:
    group: list = field(default_factory=list)  # (task_id, tiles)
    policy_events: list = field(default_factory=list)

    @property
    def tiles_assigned(self) -> int:
        return sum(n for _, n in self.group)


def score_tasks(queue, now: float, dram_bw: float):
    """Refresh score (priority + slowdown) and memory-intensity of waiting entries."""
    for e in queue:
        if e.status != QueueStatus.WAITING:
            continue
        e.score = e.user_priority + (now - e.dispatch_cycle) / e.estimated_total_cycles
        e.mem_intensive = e.estimated_avg_bw > 0.5 * dram_bw
    return queue


def _rank(e: TaskQueueEntry):
    return (-e.score, e.dispatch_cycle, e.task_id)


def split_tiles(free_tiles: int, members: int) -> list[int]:
    """Even split; the remainder goes to the first (highest-scored) members."""
    base, extra = divmod(free_tiles, members)
    return [base + (1 if i < extra else 0) for i in range(members)]


def select_group(queue, free_tiles: int, threshold: float = 0.0,
                 min_tiles: int = 1) -> ScheduleDecision:
    """Pick co-runners for ``free_tiles`` tiles from the waiting entries of ``queue``."""
    if free_tiles < 1:
        return ScheduleDecision()
    ex = sorted((e for e in queue if e.status == QueueStatus.WAITING and e.score > threshold), key=_rank)
    slots = max(1, free_tiles // max(1, min_tiles))
    group = []
    while ex and len(group) < slots:
        cur = ex.pop(0)
        group.append(cur)
        if cur.mem_intensive and len(group) < slots:
            co = next((e for e in ex if not e.mem_intensive), None)
            if co is not None:
                ex.remove(co)
                group.append(co)
    if not group:
        return ScheduleDecision()
    sizes = split_tiles(free_tiles, len(group))
    return ScheduleDecision(group=[(e.task_id, n) for e, n in zip(group, sizes)])


def allocate_proportional(scores, num_tiles: int) -> list[int]:
    """Largest-remainder split of ``num_tiles`` by score, at least one tile each.

    Ties in the remainder go to the earlier entry. A member rounded down to
    zero takes a tile from the current largest holder.
    """
    n = len(scores)
    if n == 0:
        return []
    if n > num_tiles:
        raise ValueError("more tasks than tiles")
    total = sum(scores)
    if total <= 0:
        scores, total = [1.0] * n, float(n)
    quotas = [num_tiles * s / total for s in scores]
    alloc = [int(q) for q in quotas]
    left = num_tiles - sum(alloc)
    order = sorted(range(n), key=lambda i: (-(quotas[i] - alloc[i]), i))
    for i in order[:left]:
        alloc[i] += 1
    for i in range(n):
        if alloc[i] == 0:
            donor = max(range(n), key=lambda j: (alloc[j], -j))
            alloc[donor] -= 1
            alloc[i] = 1
    return alloc


def layer_blocks(network: NetworkDesc, soc: SocConfig, num_tiles: int | None = None) -> list[int]:
    """Block id per layer: maximal runs with the same compute/memory-bound character."""
    n = num_tiles or soc.num_tiles
    blocks = []
    prev = None
    bid = -1
    for layer in network.layers:
        est = estimate_layer(layer, soc, n)
        bound = layer.kind == Kind.COMPUTE and est.compute_ideal_cycles >= est.memory_ideal_cycles
        if bound != prev:
            bid += 1
            prev = bound
        blocks.append(bid)
    return blocks


# ---------------------------------------------------------------------------
# policies
# ---------------------------------------------------------------------------


class BasePolicy:
    name = "BASE"
    wants_every_epoch = False

    def __init__(self, soc: SocConfig):
        self.soc = soc

    def entry(self, sim, task):
        e = task.policy_state.get("entry")
        if e is None:
            e = TaskQueueEntry(task.id, task.spec.dispatch_cycle, task.priority,
                               task.spec.qos_target_cycles, task.est_total, task.est_avg_bw)
            task.policy_state["entry"] = e
        e.status = QueueStatus(task.status.value)
        return e

    def scored_waiting(self, sim, now):
        entries = [self.entry(sim, t) for t in sim.waiting]
        score_tasks(entries, now, self.soc.dram_bw_bytes_per_cycle)
        return entries

    def schedule(self, sim, now):
        raise NotImplementedError

    def on_layer_boundary(self, sim, task, now):
        pass

    def on_finish(self, sim, task, now):
        pass


class IsolatedPolicy(BasePolicy):
    """Single task on a fixed tile count, no throttling; used for C_single."""

    name = "ISOLATED"

    def __init__(self, num_tiles: int):
        self.num_tiles = num_tiles

    def schedule(self, sim, now):
        free = sim.free_tile_ids()
        for task in list(sim.waiting):
            if len(free) < self.num_tiles:
                break
            sim.start(task, free[:self.num_tiles], now)
            free = free[self.num_tiles:]


class MocaPolicy(BasePolicy):
    name = "MOCA"
    # a fresh arrival scores exactly its priority, so a priority-0 task only
    # clears the default threshold one epoch later
    wants_every_epoch = True

    def __init__(self, soc, threshold: float = 0.0, min_tiles: int = 2,
                 migrate_after: int = 2, max_migrations_per_task: int = 1,
                 high_priority: int = 9, literal_prediction: bool = False,
                 scaled_threshold: bool = False, floor_period: float = 100.0,
                 throttling: bool = True, max_tiles_per_task: int | None = None,
                 bandwidth_gate: bool = False):
        super().__init__(soc)
        # admit co-runners only while their estimated average DRAM rates fit
        self.bandwidth_gate = bandwidth_gate
        self.max_tiles = max_tiles_per_task
        self.throttling = throttling
        self.threshold = threshold
        self.min_tiles = min_tiles
        self.migrate_after = migrate_after
        self.max_migrations = max_migrations_per_task
        self.high_priority = high_priority
        self.literal_prediction = literal_prediction
        self.scaled_threshold = scaled_threshold
        self.floor_period = floor_period

    def schedule(self, sim, now):
        free = sim.free_tile_ids()
        if not free or (len(free) < self.min_tiles and sim.running):
            return
        entries = self.scored_waiting(sim, now)
        decision = select_group(entries, len(free), self.threshold, self.min_tiles)
        if not decision.group and not sim.running:
            decision = select_group(entries, len(free), -float("inf"), self.min_tiles)
        if self.bandwidth_gate and decision.group:
            decision = self._gate(sim, entries, decision, len(free))
        scores = {e.task_id: e.score for e in entries}
        for task_id, n in decision.group:
            if self.max_tiles:
                n = min(n, self.max_tiles)
            sim.start(sim.by_id[task_id], free[:n], now, scores[task_id])
            free = free[n:]

    def _gate(self, sim, entries, decision, free):
        bw = {e.task_id: e.estimated_avg_bw for e in entries}
        load = sim.board.total_bw()
        kept = []
        for task_id, _ in decision.group:
            if (kept or sim.running) and load + bw[task_id] > self.soc.dram_bw_bytes_per_cycle:
                continue
            kept.append(task_id)
            load += bw[task_id]
        return ScheduleDecision(group=list(zip(kept, split_tiles(free, len(kept))))) if kept else ScheduleDecision()

    def on_layer_boundary(self, sim, task, now):
        on_layer_boundary(sim, task, now, self)

    def maybe_migrate(self, sim, task, result, remain, slack):
        st = task.policy_state
        urgent = task.priority >= self.high_priority and remain > slack
        st["late_streak"] = st.get("late_streak", 0) + 1 if urgent else 0
        if st["late_streak"] < self.migrate_after or task.migrations >= self.max_migrations:
            return False
        st["late_streak"] = 0
        if sim.free_tile_ids():
            sim.acquire(task, 1)
        else:
            donors = [t for t in sim.running if t is not task and len(t.tiles) > 1]
            if not donors:
                return False
            donor = min(donors, key=lambda t: (sim.board.get(t.id).current_score
                                               if sim.board.get(t.id) else t.priority, t.id))
            sim.release(donor, 1)
            sim.refresh_stream(donor)
            sim.acquire(task, 1)
        sim.charge_migration(task)
        return True


def on_layer_boundary(sim, task, now, policy: MocaPolicy):
    """Runtime hook run before each layer of a task under the MOCA policy.

    Estimates the layer on the task's tiles, refreshes the dynamic score,
    partitions bandwidth against the scoreboard, updates the scoreboard and
    programs every tile of the task.
    """
    soc = sim.soc
    n = len(task.tiles)
    est = estimate_layer(task.layer, soc, n)
    remain = sim.remaining_prediction(task, n)
    slack = task.spec.deadline_cycle - now
    state = TaskRuntimeState(remain, slack, task.priority)
    score = dynamic_score(state)
    result = detect_and_partition(est, score, sim.board.others(task.id), soc, n,
                                  floor_period=policy.floor_period,
                                  literal_prediction=policy.literal_prediction,
                                  scaled_threshold=policy.scaled_threshold)
    adjusted_remain = remain - est.prediction_cycles + result.prediction_cycles
    if policy.maybe_migrate(sim, task, result, adjusted_remain, slack):
        # tile set changed: redo the estimate for the new allocation
        n = len(task.tiles)
        est = estimate_layer(task.layer, soc, n)
        result = detect_and_partition(est, score, sim.board.others(task.id), soc, n,
                                      floor_period=policy.floor_period,
                                      literal_prediction=policy.literal_prediction,
                                      scaled_threshold=policy.scaled_threshold)
    if not policy.throttling:
        result = PartitionResult(UNTHROTTLED, result.bw_rate_before, est.prediction_cycles,
                                 result.bw_rate_before, result.overflow, score)
    sim.board.update(task.id, result.bw_rate, score)
    for tid in task.tiles:
        configure_throttle(sim.tiles[tid], result.throttle, now, soc.mem_repartition_cost_cycles)
    sim.charge_reconfig(task)
    if sim.runtime_trace is not None:
        sim.runtime_trace.append((now, task.id, task.layer_idx, round(score, 6),
                                  round(result.bw_rate_before, 6), round(result.bw_rate, 6),
                                  round(result.overflow, 6), round(result.throttle.window_cycles, 3),
                                  result.throttle.threshold_load))
    return result


class TimeMuxPolicy(BasePolicy):
    """One task owns the whole SoC; a strictly higher-priority waiter preempts at a layer boundary.

    Waiters are served by user priority, FIFO within a priority level. The
    incoming task pays the compute repartition cost.
    """

    name = "TIME_MUX"

    @staticmethod
    def _next(sim):
        return min(sim.waiting, key=lambda t: (-t.priority, t.spec.dispatch_cycle, t.id))

    def schedule(self, sim, now):
        if sim.running:
            return
        sim.start(self._next(sim), sim.free_tile_ids(), now, float(self._next(sim).priority))

    def on_layer_boundary(self, sim, task, now):
        if not sim.waiting or task.layer_idx == 0:
            return
        best = self._next(sim)
        if best.priority > task.priority:
            sim.preempt(task)
            sim.start(best, sim.free_tile_ids(), now, float(best.priority))
            sim.charge_migration(best)


class StaticPolicy(BasePolicy):
    """Fixed equal tile groups, each running one task to completion."""

    name = "STATIC"

    def __init__(self, soc, groups: int = 4):
        super().__init__(soc)
        if soc.num_tiles % groups:
            raise ValueError("num_tiles must divide evenly into groups")
        size = soc.num_tiles // groups
        self.groups = [list(range(g * size, (g + 1) * size)) for g in range(groups)]

    def schedule(self, sim, now):
        free = set(sim.free_tile_ids())
        entries = sorted(self.scored_waiting(sim, now), key=_rank)
        for g in self.groups:
            if not entries:
                break
            if all(t in free for t in g):
                e = entries.pop(0)
                sim.start(sim.by_id[e.task_id], g, now, e.score)


class DynComputePolicy(BasePolicy):
    """Score-proportional tile reallocation at layer-block boundaries, no memory control."""

    name = "DYN_COMPUTE"

    def __init__(self, soc, max_corunners: int = 4):
        super().__init__(soc)
        self.max_corunners = max_corunners
        self.targets: dict[int, int] = {}
        self._blocks: dict[int, list] = {}

    def blocks(self, network):
        key = id(network)
        if key not in self._blocks:
            self._blocks[key] = layer_blocks(network, self.soc)
        return self._blocks[key]

    def runtime_score(self, sim, task, now):
        remain = sim.remaining_prediction(task)
        return dynamic_score(TaskRuntimeState(remain, task.spec.deadline_cycle - now, task.priority))

    def schedule(self, sim, now):
        entries = sorted(self.scored_waiting(sim, now), key=_rank)
        room = self.max_corunners - len(sim.running)
        joining = [sim.by_id[e.task_id] for e in entries[:max(0, room)]]
        active = list(sim.running) + joining
        if not active:
            return
        scores = [self.runtime_score(sim, t, now) for t in active]
        alloc = allocate_proportional(scores, self.soc.num_tiles)
        self.targets = {t.id: a for t, a in zip(active, alloc)}
        for task in joining:
            free = sim.free_tile_ids()
            if not free:
                break
            sim.start(task, free[:self.targets[task.id]], now)

    def on_layer_boundary(self, sim, task, now):
        if task.layer_idx == 0:
            return
        blocks = self.blocks(task.network)
        if blocks[task.layer_idx] == blocks[task.layer_idx - 1]:
            return
        target = self.targets.get(task.id)
        cur = len(task.tiles)
        if target is None or target == cur:
            return
        if target < cur:
            sim.release(task, cur - target)
        elif not sim.acquire(task, target - cur):
            return
        sim.charge_migration(task)

    def on_finish(self, sim, task, now):
        self.targets.pop(task.id, None)
        if sim.running and not sim.waiting:
            # survivors grow into the freed tiles at their next block boundary
            scores = [self.runtime_score(sim, t, now) for t in sim.running]
            alloc = allocate_proportional(scores, self.soc.num_tiles)
            self.targets = {t.id: a for t, a in zip(sim.running, alloc)}


def make_policy(policy, soc: SocConfig, **options):
    name = getattr(policy, "value", policy)
    table = {"MOCA": MocaPolicy, "TIME_MUX": TimeMuxPolicy,
             "STATIC": StaticPolicy, "DYN_COMPUTE": DynComputePolicy}
    if name not in table:
        raise ValueError(f"unknown policy {policy!r}")
    return table[name](soc, **options)
