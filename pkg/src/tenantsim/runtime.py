"""Per-layer contention detection and weighted bandwidth repartitioning.

At every layer boundary a task's next layer is estimated, its dynamic score
is refreshed, and its bandwidth demand is checked against the scoreboard of
co-running tasks. If the total demand overflows DRAM, the task gives up a
share of the overflow weighted by the co-runners' scores and its tiles are
throttled to the reduced rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .estimator import LayerEstimate
from .hw import REQUEST_BYTES, UNTHROTTLED, ThrottleConfig
from .model import SocConfig

SCORE_CAP = 100.0


@dataclass
class ScoreboardEntry:
    task_id: int
    current_bw_rate: float
    current_score: float


class Scoreboard:
    """Bandwidth usage and dynamic score of every running task."""

    def __init__(self):
        self._rows: dict[int, ScoreboardEntry] = {}

    def update(self, task_id: int, bw_rate: float, score: float) -> None:
        self._rows[task_id] = ScoreboardEntry(task_id, bw_rate, score)

    def remove(self, task_id: int) -> None:
        self._rows.pop(task_id, None)

    def others(self, task_id: int) -> list[ScoreboardEntry]:
        return [self._rows[k] for k in sorted(self._rows) if k != task_id]

    def get(self, task_id: int):
        return self._rows.get(task_id)

    def total_bw(self) -> float:
        return sum(r.current_bw_rate for r in self._rows.values())

    def __contains__(self, task_id):
        return task_id in self._rows

    def __len__(self):
        return len(self._rows)


@dataclass
class TaskRuntimeState:
    remain_prediction_cycles: float
    slack_cycles: float
    user_priority: int


def dynamic_score(state: TaskRuntimeState, cap: float = SCORE_CAP) -> float:
    """``user_priority + remain/slack``; ``cap`` stands in once the deadline has passed."""
    if state.slack_cycles <= 0:
        return state.user_priority + cap
    return state.user_priority + state.remain_prediction_cycles / state.slack_cycles


@dataclass(frozen=True)
class PartitionResult:
    throttle: ThrottleConfig
    bw_rate: float
    prediction_cycles: float
    bw_rate_before: float
    overflow: float
    score: float


def throttle_for(est: LayerEstimate, prediction: float, num_tiles: int,
                 request_bytes: int = REQUEST_BYTES, scaled: bool = False) -> ThrottleConfig:
    """Per-tile throttle for a layer that should take ``prediction`` cycles.

    The window is ``prediction / num_tiles`` and each tile may move
    ``total_mem / num_tiles`` bytes per window. That lets the task as a whole
    move ``num_tiles`` times its layer traffic within ``prediction``;
    ``scaled=True`` shrinks the budget by ``window / prediction`` so the
    task moves exactly ``total_mem`` in ``prediction`` cycles.
    """
    window = prediction / num_tiles
    per_tile = est.total_mem_bytes / num_tiles
    budget = per_tile * window / prediction if scaled else per_tile
    threshold = max(1, math.ceil(budget / request_bytes))
    return ThrottleConfig(window, threshold)


def detect_and_partition(est: LayerEstimate, score: float, board, soc: SocConfig, num_tiles: int,
                         *, request_bytes: int = REQUEST_BYTES, floor_period: float = 100.0,
                         literal_prediction: bool = False,
                         scaled_threshold: bool = False) -> PartitionResult:
    """Resolve DRAM overflow for one task against ``board`` (the co-runners).

    ``bw_rate -= overflow * weight_sum / (curr_weight_sum + weight_sum)`` where
    ``weight_sum`` sums score x bandwidth over the co-runners and
    ``curr_weight_sum`` is this task's own score x bandwidth.
    """
    if num_tiles < 1:
        raise ValueError("num_tiles must be >= 1")
    bw = est.bw_rate_bytes_per_cycle
    other = sum(e.current_bw_rate for e in board)
    weight_sum = sum(e.current_score * e.current_bw_rate for e in board)
    overflow = bw + other - soc.dram_bw_bytes_per_cycle

    if overflow <= 0 or weight_sum <= 0 or bw <= 0:
        # no contention, or nothing to share with: leave the task unthrottled
        return PartitionResult(UNTHROTTLED, bw, est.prediction_cycles, bw, overflow, score)

    curr_weight_sum = score * bw
    new_bw = bw - overflow * weight_sum / (curr_weight_sum + weight_sum)
    # never starve: at least one request per tile every floor_period cycles
    new_bw = max(new_bw, min(bw, request_bytes * num_tiles / floor_period))

    if literal_prediction:
        prediction = new_bw * est.from_dram_bytes
    else:
        prediction = est.from_dram_bytes / new_bw
    prediction = max(prediction, float(est.prediction_cycles))
    throttle = throttle_for(est, prediction, num_tiles, request_bytes, scaled_threshold)
    return PartitionResult(throttle, new_bw, prediction, bw, overflow, score)
