from collections import Counter

import pytest

from tenantsim.estimator import estimate_network
from tenantsim.model import WORKLOAD_SETS, SocConfig
from tenantsim.workload import (
    PRIORITY_LEVELS, ConfigError, WorkloadConfig, generate_workload, geometric_weights,
    parse_experiment_config,
)

SOC = SocConfig()
ANY = WorkloadConfig(allow_any_n=True)


def test_same_seed_same_scenario():
    assert generate_workload(1, 5, "A", "M", SOC, ANY) == generate_workload(1, 5, "A", "M", SOC, ANY)


def test_different_seed_differs():
    assert generate_workload(1, 20, "C", "M", SOC, ANY) != generate_workload(2, 20, "C", "M", SOC, ANY)


def test_h_over_l_target_ratio():
    h = generate_workload(4, 30, "C", "H", SOC, ANY)
    lo = generate_workload(4, 30, "C", "L", SOC, ANY)
    for a, b in zip(h.tasks, lo.tasks):
        assert a.network.name == b.network.name and a.dispatch_cycle == b.dispatch_cycle
        assert a.qos_target_cycles / b.qos_target_cycles == pytest.approx(0.8 / 1.2, rel=1e-12)


def test_target_is_multiple_of_estimate():
    cfg = WorkloadConfig(qos_k=3.0, allow_any_n=True)
    for t in generate_workload(0, 10, "B", "M", SOC, cfg).tasks:
        total = estimate_network(t.network, SOC, SOC.num_tiles)[1]
        assert t.qos_target_cycles == pytest.approx(3.0 * total, abs=1)


def test_every_network_appears():
    seen = Counter()
    for seed in range(50):
        seen.update(t.network.name for t in generate_workload(seed, 250, "C", "M", SOC).tasks)
    assert set(seen) == set(WORKLOAD_SETS["C"])
    # uniform draw: each of the 7 networks near 250*50/7
    expect = 250 * 50 / 7
    chi2 = sum((c - expect) ** 2 / expect for c in seen.values())
    assert chi2 < 22.46  # 6 dof, p = 0.001


def test_networks_belong_to_set():
    for t in generate_workload(9, 200, "A", "L", SOC).tasks:
        assert t.network.name in WORKLOAD_SETS["A"]


def test_priority_distribution_matches_weights():
    n = 10_000
    tasks = generate_workload(123, n, "A", "M", SOC, ANY).tasks
    counts = Counter(t.user_priority for t in tasks)
    w = geometric_weights()
    expect = [n * x / sum(w) for x in w]
    chi2 = sum((counts.get(p, 0) - e) ** 2 / e for p, e in enumerate(expect))
    assert chi2 < 31.26  # 11 dof, p = 0.001
    assert set(counts) <= set(range(PRIORITY_LEVELS))


def test_arrivals_sorted_and_start_at_zero():
    tasks = generate_workload(2, 200, "B", "M", SOC).tasks
    dispatch = [t.dispatch_cycle for t in tasks]
    assert dispatch[0] == 0 and dispatch == sorted(dispatch)


def test_n_range_enforced():
    with pytest.raises(ValueError):
        generate_workload(0, 50, "A", "M", SOC)
    with pytest.raises(ValueError):
        generate_workload(0, 300, "A", "X", SOC)


def test_config_parses_lists_and_scalars():
    cfg = parse_experiment_config("""
n: 50
allow_any_n: true
set: [A, B]
qos_level: H
seed: [1, 2]
policies: [MOCA, STATIC]
qos_k: 4
""")
    assert cfg.workload_sets == ("A", "B") and cfg.qos_levels == ("H",)
    assert len(cfg.runs()) == 2 * 2 * 2
    assert cfg.workload.qos_k == 4


@pytest.mark.parametrize("text, needle", [
    ("n: 250\nset: D\nqos_level: M\n", "set"),
    ("n: 250\nset: A\n", "qos_level"),
    ("n: 50\nset: A\nqos_level: M\n", "outside"),
    ("n: 250\nset: A\nqos_level: M\nbogus: 1\n", "bogus"),
    ("n: 250\nset: [A\n", "line"),
])
def test_config_errors(text, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_experiment_config(text)
