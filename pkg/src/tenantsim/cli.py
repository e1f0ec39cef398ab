"""Command line entry point: ``tenantsim run | estimate | validate``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .estimator import estimate_layer
from .metrics import GROUPS, build_report, isolated_latencies, reports_csv
from .model import NetworkError, SocConfig, TaskSpec, benchmark, load_network, network_dir
from .sim import SimConfig, SimulationError, Simulator, run_simulation
from .workload import POLICY_NAMES, ConfigError, load_experiment_config

log = logging.getLogger("tenantsim")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VALIDATION = 3
EXIT_SIM = 4

RESULT_COLUMNS = ["policy", "workload_set", "qos_level", "seed", "task_id", "network", "priority",
                  "dispatch_cycle", "start_cycle", "finish_cycle", "end_to_end_cycles",
                  "qos_target_cycles", "deadline_met", "isolated_cycles", "migrations",
                  "mem_reconfigs"]
ESTIMATE_COLUMNS = ["layer", "name", "kind", "compute_ideal_cycles", "memory_ideal_cycles",
                    "prediction_cycles", "total_mem_bytes", "from_dram_bytes"]


def _csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x):
    if isinstance(x, float):
        return f"{x:.6f}".rstrip("0").rstrip(".") if x == x else "nan"
    return x


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def run_one(cfg, key, emit_traces=False):
    """Simulate one (policy, set, level, seed) tuple; returns plain data for merging."""
    policy, wset, level, seed = key
    scenario = cfg.scenario(wset, level, seed)
    sim_cfg = SimConfig(soc=cfg.soc, policy=policy, scenario=scenario, epoch_cycles=cfg.epoch_cycles,
                        emit_traces=emit_traces, policy_options=cfg.policy_options.get(policy, {}))
    try:
        result = run_simulation(sim_cfg)
    except SimulationError as e:
        raise SimulationError(f"{policy}/{wset}/{level}/seed={seed}: {e}") from e
    iso = isolated_latencies(scenario, cfg.soc, cfg.epoch_cycles)
    report = build_report(result, scenario, iso)
    rows = [[policy, wset, level, seed, t.task_id, t.network, t.priority, t.dispatch_cycle,
             t.start_cycle, t.finish_cycle, t.end_to_end_cycles, _fmt(t.qos_target_cycles),
             int(t.deadline_met), iso[t.task_id], t.migrations, t.mem_reconfigs]
            for t in result.tasks]
    return key, result.to_json(), report, rows


def _run_star(args):
    return run_one(*args)


def aggregate(reports, policies, baseline):
    """Seed-averaged metrics per (set, level), one column per policy plus baseline-normalized ones.

    Returns ``{name: (columns, rows)}`` for the four figure families.
    """
    cells = {}
    for r in reports:
        cells.setdefault((r.workload_set, r.qos_level), {}).setdefault(r.policy, []).append(r)
    norm = baseline in policies

    def table(metric, extra_key=None):
        cols = ["workload_set", "qos_level"] + (["group"] if extra_key else []) + list(policies)
        if norm:
            cols += [f"{p}_norm" for p in policies]
        rows = []
        for (wset, level) in sorted(cells):
            for g in (GROUPS if extra_key else (None,)):
                means = {}
                for p in policies:
                    vals = [metric(r, g) for r in cells[(wset, level)].get(p, [])]
                    vals = [v for v in vals if v is not None]
                    means[p] = statistics.fmean(vals) if vals else None
                row = [wset, level] + ([g] if extra_key else [])
                row += ["" if means[p] is None else _fmt(means[p]) for p in policies]
                if norm:
                    b = means[baseline]
                    row += ["" if means[p] is None or not b else _fmt(means[p] / b) for p in policies]
                rows.append(row)
        return cols, rows

    return {
        "sla_overall": table(lambda r, g: r.sla_rate_overall),
        "sla_by_priority": table(lambda r, g: r.sla_rate_by_group[g], extra_key=True),
        "stp": table(lambda r, g: r.stp),
        "fairness": table(lambda r, g: r.fairness),
    }


def cmd_run(args) -> int:
    try:
        cfg = load_experiment_config(args.config)
    except ConfigError as e:
        log.error("%s", e)
        return EXIT_CONFIG
    if args.seed_range:
        try:
            lo, hi = (int(x) for x in args.seed_range.split(".."))
            if hi < lo:
                raise ValueError
        except ValueError:
            log.error("--seed-range expects A..B with A <= B, got %r", args.seed_range)
            return EXIT_CONFIG
        cfg = dataclasses.replace(cfg, seeds=tuple(range(lo, hi + 1)))
    baseline = args.baseline or cfg.baseline
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        log.error("cannot create output dir %s: %s", out, e)
        return EXIT_CONFIG

    keys = cfg.runs()
    log.info("running %d simulations with %d worker(s)", len(keys), args.workers)
    jobs = [(cfg, k, args.emit_traces) for k in keys]
    try:
        if args.workers > 1:
            with ProcessPoolExecutor(max_workers=args.workers) as ex:
                done = list(ex.map(_run_star, jobs))
        else:
            done = [_run_star(j) for j in jobs]
    except SimulationError as e:
        log.error("simulation aborted: %s", e)
        return EXIT_SIM

    done.sort(key=lambda d: d[0])
    runs_dir = out / "runs"
    runs_dir.mkdir(exist_ok=True)
    rows, reports = [], []
    for key, result_json, report, task_rows in done:
        name = "-".join(str(k) for k in key)
        (runs_dir / f"{name}.json").write_text(result_json + "\n")
        rows.extend(task_rows)
        reports.append(report)
        if args.emit_traces:
            _write_traces(out / "traces", name, result_json)
    (out / "results.csv").write_text(_csv(rows, RESULT_COLUMNS))
    (out / "metrics.csv").write_text(reports_csv(reports))
    policies = [p for p in POLICY_NAMES if p in cfg.policies]
    for name, (cols, table_rows) in aggregate(reports, policies, baseline).items():
        (out / f"{name}.csv").write_text(_csv(table_rows, cols))
    log.info("wrote %s", out)
    return EXIT_OK


def _write_traces(tdir: Path, name: str, result_json: str):
    tdir.mkdir(exist_ok=True)
    res = json.loads(result_json)
    specs = {
        "epoch": (res["epoch_trace"], ["epoch", "tile_id", "task_id", "demanded_bytes", "served_bytes",
                                       "stalled_flag"]),
        "runtime": (res["runtime_trace"], ["cycle", "task_id", "layer", "score", "bw_rate_before",
                                           "bw_rate_after", "overflow", "window", "threshold_load"]),
        "schedule": (res["schedule_trace"], ["cycle", "policy", "event", "task_id", "tiles", "score"]),
    }
    for kind, (rows, cols) in specs.items():
        rows = [["" if v is None else v for v in r] for r in rows or []]
        (tdir / f"{name}-{kind}.csv").write_text(_csv(rows, cols))


# ---------------------------------------------------------------------------
# estimate / validate
# ---------------------------------------------------------------------------


def _resolve_network(ref: str):
    p = Path(ref)
    if p.suffix in (".yaml", ".yml") or p.exists():
        return load_network(p)
    return benchmark(ref)


def estimate_rows(network, soc: SocConfig, tiles: int):
    rows = []
    totals = [0.0, 0.0, 0, 0.0, 0.0]
    for i, layer in enumerate(network.layers):
        e = estimate_layer(layer, soc, tiles)
        vals = [e.compute_ideal_cycles, e.memory_ideal_cycles, e.prediction_cycles,
                e.total_mem_bytes, e.from_dram_bytes]
        totals = [a + b for a, b in zip(totals, vals)]
        rows.append([i, layer.name, layer.kind.value] + [_fmt(v) for v in vals])
    rows.append(["total", network.name, ""] + [_fmt(v) for v in totals])
    return rows


def cmd_estimate(args) -> int:
    soc = SocConfig()
    try:
        net = _resolve_network(args.network)
    except (NetworkError, OSError) as e:
        log.error("%s", e)
        return EXIT_VALIDATION
    if not 1 <= args.tiles <= soc.num_tiles:
        log.error("--tiles must be in 1..%d", soc.num_tiles)
        return EXIT_CONFIG
    text = _csv(estimate_rows(net, soc, args.tiles), ESTIMATE_COLUMNS)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def layer_crosscheck(network, soc: SocConfig, tiles: int | None = None):
    """Per-layer ``(index, name, predicted, simulated, relative error)`` on an idle SoC."""
    from .model import WorkloadScenario
    from .scheduler import IsolatedPolicy

    n = tiles or soc.num_tiles
    task = TaskSpec(0, network, 0, 0, 1e12)
    cfg = SimConfig(soc=soc, policy="STATIC", scenario=WorkloadScenario((task,), "-", "-", 0),
                    record_layers=True)
    res = Simulator(cfg, policy=IsolatedPolicy(n)).run()
    out = []
    for (idx, _, cycles), layer in zip(res.tasks[0].layer_cycles, network.layers):
        pred = estimate_layer(layer, soc, n).prediction_cycles
        out.append((idx, layer.name, pred, cycles, abs(cycles - pred) / cycles))
    return out


def cmd_validate(args) -> int:
    soc = SocConfig()
    directory = Path(args.directory) if args.directory else network_dir()
    files = sorted(directory.glob("*.yaml"))
    if not files:
        log.error("no network files in %s", directory)
        return EXIT_VALIDATION
    failed = False
    worst = 0.0
    for f in files:
        try:
            net = load_network(f)
        except NetworkError as e:
            print(f"FAIL {f.name}: {e}")
            failed = True
            continue
        checks = layer_crosscheck(net, soc)
        err = max(c[4] for c in checks)
        worst = max(worst, err)
        bad = [c for c in checks if c[4] > args.tolerance]
        status = "FAIL" if bad else "ok"
        failed |= bool(bad)
        print(f"{status} {net.name}: {len(net)} layers, max per-layer error {err:.4%}")
        for idx, name, pred, sim, e in bad:
            print(f"     layer {idx} {name}: predicted {pred}, simulated {sim:.1f} ({e:.2%})")
    print(f"max per-layer error across networks: {worst:.4%}")
    return EXIT_VALIDATION if failed else EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    p = argparse.ArgumentParser(prog="tenantsim", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common], help="run an experiment matrix")
    r.add_argument("--config", required=True, help="experiment config (YAML)")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--seed-range", help="override seeds with A..B (inclusive)")
    r.add_argument("--baseline", choices=POLICY_NAMES, help="normalization policy for aggregates")
    r.add_argument("--emit-traces", action="store_true", help="write epoch/runtime/schedule traces")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("estimate", parents=[common], help="per-layer latency estimates for one network")
    e.add_argument("network", help="network file or shipped benchmark name")
    e.add_argument("--tiles", type=int, default=1)
    e.add_argument("--out", help="write CSV here instead of stdout")
    e.set_defaults(func=cmd_estimate)

    v = sub.add_parser("validate", parents=[common], help="check network files and estimator/simulator agreement")
    v.add_argument("directory", nargs="?", help="network directory (default: shipped networks)")
    v.add_argument("--tolerance", type=float, default=0.10)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if getattr(args, "workers", 1) < 1:
        log.error("--workers must be >= 1")
        return EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
