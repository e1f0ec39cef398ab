from tenantsim.model import Kind, LayerDesc, NetworkDesc, SocConfig, TaskSpec, WorkloadScenario
from tenantsim.sim import SimConfig


def compute_net(name="cnet", layers=3, macs=2_560_000):
    """Compute-bound layers: 10k cycles of PE time per layer on one tile, little traffic."""
    return NetworkDesc(name, tuple(
        LayerDesc(f"c{i}", Kind.COMPUTE, total_mac=macs, weight_bytes=2048, input_bytes=2048,
                  output_bytes=2048, tile_bytes=6144)
        for i in range(layers)))


def mem_net(name="mnet", layers=3, nbytes=200_000):
    """Bandwidth-bound layers that alone can saturate DRAM."""
    return NetworkDesc(name, tuple(
        LayerDesc(f"m{i}", Kind.MEM, input_bytes=nbytes, input_b_bytes=nbytes, output_bytes=nbytes)
        for i in range(layers)))


def scenario(*tasks, set_="A", level="M", seed=0):
    """``tasks`` are (network, dispatch, priority[, target]) tuples."""
    specs = []
    for i, t in enumerate(tasks):
        net, dispatch, prio = t[:3]
        target = t[3] if len(t) > 3 else 1e12
        specs.append(TaskSpec(i, net, dispatch, prio, target))
    return WorkloadScenario(tuple(specs), set_, level, seed)


def sim_config(scen, policy, **kw):
    return SimConfig(soc=kw.pop("soc", SocConfig()), policy=policy, scenario=scen, **kw)


# acceptance summary: one line per criterion, printed after the run
CRITERIA: dict = {}


def record(number, ok, detail):
    CRITERIA[number] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}")
