import math

import pytest
from hypothesis import given, strategies as st

from tenantsim.cli import layer_crosscheck
from tenantsim.estimator import (
    combine, estimate_layer, estimate_network, layer_traffic, remaining_prediction, tune_overlap_f,
)
from tenantsim.model import Kind, LayerDesc, NetworkDesc, SocConfig, benchmark

SOC = SocConfig()
HALF = SocConfig(overlap_f=0.5)
B = 802_816

# compute 256000/256 = 1000 cycles; memory 5120/16 + 5120/64 = 400 cycles
SMALL_CONV = LayerDesc("conv", Kind.COMPUTE, total_mac=256_000, weight_bytes=4096,
                       output_bytes=1024, tile_bytes=5120, tiling_factor=1)
RES_ADD = LayerDesc("add", Kind.MEM, input_bytes=B, input_b_bytes=B, output_bytes=B)


def test_combine_trivial():
    assert combine(1000, 400, 0.5) == 1200


def test_resnet_conv1_compute_ideal():
    conv1 = benchmark("resnet50").layers[0]
    assert conv1.total_mac == 118_013_952
    est = estimate_layer(conv1, SOC, 1)
    assert est.compute_ideal_cycles == 118_013_952 / 256 == 460_992


def test_small_conv_prediction():
    est = estimate_layer(SMALL_CONV, HALF, 1)
    assert est.compute_ideal_cycles == 1000
    assert est.memory_ideal_cycles == 400
    assert est.prediction_cycles == 1200


def test_mem_layer_hand_trace():
    est = estimate_layer(RES_ADD, SOC, 1)
    assert est.from_dram_bytes == 2 * B == 1_605_632
    assert est.total_mem_bytes == 3 * B
    assert est.prediction_cycles == 1_605_632 // 16 + 2_408_448 // 64 == 137_984


def test_evicted_input_read_from_dram():
    big = 3 * 2**20
    layer = LayerDesc("c", Kind.COMPUTE, total_mac=10**6, weight_bytes=100, input_bytes=big,
                      output_bytes=100, tile_bytes=1000, tiling_factor=1)
    _, from_dram = layer_traffic(layer, SOC)
    assert from_dram == 100 + 100 + big


def test_small_layer_dram_oracle():
    # fits L2: DRAM traffic is weights + outputs + bias only
    layer = LayerDesc("c", Kind.COMPUTE, total_mac=10**6, weight_bytes=300, input_bytes=700,
                      output_bytes=500, bias_bytes=20, tile_bytes=1520, tiling_factor=1)
    assert layer_traffic(layer, SOC)[1] == 820


def test_single_layer_network_total():
    net = NetworkDesc("one", (RES_ADD,))
    ests, total = estimate_network(net, SOC, 1)
    assert total == ests[0].prediction_cycles


def test_two_layer_total():
    net = NetworkDesc("two", (SMALL_CONV, RES_ADD))
    assert estimate_network(net, HALF, 1)[1] == 1200 + 137_984 == 139_184


def test_more_tiles_faster_for_compute_bound():
    net = NetworkDesc("c", (LayerDesc("c", Kind.COMPUTE, total_mac=10**9, weight_bytes=1000,
                                      output_bytes=1000, tile_bytes=2000),))
    assert estimate_network(net, SOC, 2)[1] < estimate_network(net, SOC, 1)[1]


def test_remaining_prediction_suffix():
    net = benchmark("kws")
    ests, total = estimate_network(net, SOC, 4)
    assert remaining_prediction(net, SOC, 4, 0) == total
    assert remaining_prediction(net, SOC, 4, 3) == sum(e.prediction_cycles for e in ests[3:])
    assert remaining_prediction(net, SOC, 4, len(net)) == 0


def test_bad_tile_count():
    with pytest.raises(ValueError):
        estimate_layer(SMALL_CONV, SOC, 9)


def _measured(layer, f):
    e = estimate_layer(layer, SOC, 1)
    c, m = e.compute_ideal_cycles, e.memory_ideal_cycles
    return max(c, m) + min(c, m) * f


def test_tune_recovers_generating_f():
    layers = benchmark("alexnet").layers
    samples = [(l, _measured(l, 0.3)) for l in layers if l.kind is Kind.COMPUTE]
    assert tune_overlap_f(samples, SOC) == pytest.approx(0.3, abs=1e-9)


def test_tune_perfect_overlap_hits_floor():
    layers = benchmark("alexnet").layers
    samples = [(l, _measured(l, 0.0)) for l in layers if l.kind is Kind.COMPUTE]
    assert tune_overlap_f(samples, SOC) == 0.01


def test_tune_empty():
    with pytest.raises(ValueError):
        tune_overlap_f([], SOC)


def test_tune_against_simulator_replay():
    net = benchmark("resnet50")
    rows = layer_crosscheck(net, SOC, 8)[:10]
    samples = [(net.layers[i], sim) for i, _, _, sim, _ in rows]
    f = tune_overlap_f(samples, SOC, num_tiles=8)
    tuned = SocConfig(overlap_f=f)
    errs = [abs(estimate_layer(l, tuned, 8).prediction_cycles - m) / m for l, m in samples]
    assert sum(errs) / len(errs) <= 0.10


layer_st = st.builds(
    lambda mac, w, i, o: LayerDesc("x", Kind.COMPUTE, total_mac=mac, weight_bytes=w,
                                   input_bytes=i, output_bytes=o, tile_bytes=w + i + o),
    st.integers(1, 10**9), st.integers(0, 10**7), st.integers(0, 10**7), st.integers(0, 10**7),
)


@given(layer_st, st.integers(1, 10**8))
def test_monotone_in_macs(layer, extra):
    bigger = LayerDesc("x", Kind.COMPUTE, total_mac=layer.total_mac + extra,
                       weight_bytes=layer.weight_bytes, input_bytes=layer.input_bytes,
                       output_bytes=layer.output_bytes, tile_bytes=layer.tile_bytes)
    assert estimate_layer(bigger, SOC, 1).prediction_cycles >= estimate_layer(layer, SOC, 1).prediction_cycles


@given(layer_st, st.sampled_from(["weight_bytes", "input_bytes", "output_bytes", "bias_bytes"]),
       st.integers(1, 10**7))
def test_monotone_in_bytes(layer, field, extra):
    kw = {f: getattr(layer, f) for f in ("total_mac", "weight_bytes", "input_bytes",
                                         "output_bytes", "bias_bytes")}
    kw[field] += extra
    bigger = LayerDesc("x", Kind.COMPUTE, tile_bytes=layer.tile_bytes, **kw)
    assert estimate_layer(bigger, SOC, 2).exact_cycles >= estimate_layer(layer, SOC, 2).exact_cycles


@given(layer_st)
def test_overlap_limits(layer):
    lo = estimate_layer(layer, SOC, 1, overlap_f=1e-12)
    hi = estimate_layer(layer, SOC, 1, overlap_f=1 - 1e-12)
    c, m = lo.compute_ideal_cycles, lo.memory_ideal_cycles
    assert math.isclose(lo.exact_cycles, max(c, m), rel_tol=1e-9)
    assert math.isclose(hi.exact_cycles, c + m, rel_tol=1e-9)
