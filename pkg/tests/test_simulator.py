import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sfatti.network import LIFParams, init_model, round_decays_to_pow2, run
from sfatti.quantizer import QuantConfig, quantize_model
from sfatti.simulator import (CALIBRATED, ScheduleError, TimingModel, check_schedule, count_cycles,
                              format_report, latency_report, layer_cycles, phase_table,
                              simulate_trace, width_aware_model)


def test_calibrated_cycles():
    assert count_cycles(CALIBRATED, 10) == 8685
    assert count_cycles(CALIBRATED, 1) == 873
    with pytest.raises(ValueError):
        count_cycles(CALIBRATED, 0)


@given(st.integers(1, 500))
def test_linear_in_timesteps(T):
    setup = CALIBRATED.setup_cycles
    assert count_cycles(CALIBRATED, 2 * T) - setup == 2 * (count_cycles(CALIBRATED, T) - setup)


def test_testbench_latency():
    rep = latency_report(CALIBRATED, 10)
    assert rep.delta_t == 173_700
    assert rep.throughput == pytest.approx(5757, rel=1e-3)
    assert rep.efficiency is None


def test_board_latency_and_efficiency():
    rep = latency_report(CALIBRATED.with_period(6.1), 10, power_watts=0.231)
    assert rep.delta_t == pytest.approx(52_978.5)
    assert rep.throughput == pytest.approx(18_875.6, rel=1e-3)
    assert rep.efficiency == pytest.approx(81_712.5, rel=1e-3)


@pytest.mark.parametrize("p", [0.0, -1.0])
def test_bad_power(p):
    with pytest.raises(ValueError):
        latency_report(CALIBRATED, 10, p)


def test_timing_model_validation():
    with pytest.raises(ValueError):
        TimingModel(0, 5, 20.0)
    with pytest.raises(ValueError):
        TimingModel(868, 5, 0.0)
    assert TimingModel.from_mhz(50).clock_period == 20.0


@settings(max_examples=50)
@given(st.integers(1, 2000), st.integers(1, 50), st.floats(0.5, 100), st.integers(1, 100))
def test_report_identities(cpt, setup, period, T):
    rep = latency_report(TimingModel(cpt, setup, period), T, 0.2)
    assert rep.throughput * rep.delta_t == pytest.approx(1e9, rel=1e-9)
    assert rep.delta_t == pytest.approx(rep.total_cycles * period)
    assert rep.efficiency == pytest.approx(rep.throughput / 0.2)


def test_format_report_is_key_value():
    text = format_report(latency_report(CALIBRATED, 10, 0.231), CALIBRATED, 10)
    kv = dict(line.split("=") for line in text.splitlines())
    assert kv["cycles"] == "8685" and kv["delta_t_ns"] == "173700.0"


def test_schedule_layout():
    assert layer_cycles([784, 75, 10]) == 861
    assert phase_table([784, 75, 10]) == [(0, 784), (785, 860)]
    assert width_aware_model([784, 75, 10]).cycles_per_timestep == 868
    check_schedule([784, 75, 10], CALIBRATED)
    with pytest.raises(ScheduleError):
        check_schedule([784, 100, 10], CALIBRATED)
    check_schedule([784, 100, 10], width_aware_model([784, 100, 10]))


def _qm(arch="24-12-5", seed=0, lif=None, q=(8, 10, 5)):
    lif = lif or LIFParams(beta=0.9375, threshold=0.4)
    m = round_decays_to_pow2(init_model(arch, seed, lif))
    for layer in m.layers:
        layer.weights *= 4
    return quantize_model(m, QuantConfig(*q))


@pytest.mark.parametrize("lif", [
    LIFParams(beta=0.9375, threshold=0.4),
    LIFParams(alpha=0.75, beta=0.875, threshold=0.4),
    LIFParams(alpha=0.0, beta=0.0, threshold=0.4, reset_mode="zero"),
])
def test_trace_matches_reference_dynamics(lif):
    qm = _qm(lif=lif)
    rng = np.random.default_rng(1)
    spikes = (rng.random((30, 10, 24)) < 0.4).astype(np.uint8)
    counts = run(qm, spikes)
    tm = width_aware_model(qm.sizes)
    for b in range(30):
        tr = simulate_trace(qm, spikes[b], tm)
        assert (tr.counts == counts[b]).all()
        assert tr.label == int(np.argmax(counts[b]))
        assert tr.latency_cycles == count_cycles(tm, 10)


def test_latency_independent_of_input():
    qm = _qm()
    tm = width_aware_model(qm.sizes)
    zeros = simulate_trace(qm, np.zeros((10, 24), np.uint8), tm)
    ones = simulate_trace(qm, np.ones((10, 24), np.uint8), tm)
    assert zeros.latency_cycles == ones.latency_cycles


def test_all_zero_train_has_no_output_spikes():
    tr = simulate_trace(_qm(), np.zeros((10, 24), np.uint8), width_aware_model([24, 12, 5]))
    assert tr.output_spikes() == []
    assert tr.label == 0


def test_reference_arch_latency_calibrated():
    qm = _qm("784-75-10", q=(6, 9, 5))
    rng = np.random.default_rng(0)
    tr = simulate_trace(qm, (rng.random((10, 784)) < 0.2).astype(np.uint8))
    assert tr.ready - tr.start == 8685


def test_event_schedule():
    qm = _qm()
    tm = width_aware_model(qm.sizes)
    tr = simulate_trace(qm, np.ones((10, 24), np.uint8), tm)
    kinds = [e[1] for e in tr.events]
    assert kinds[0] == "start" and kinds[-1] == "ready"
    assert kinds.count("latch") == 10 and kinds.count("count") == 10
    latches = [c for c, k, _ in tr.events if k == "latch"]
    assert latches[0] == tm.setup_cycles - 1
    assert np.diff(latches).tolist() == [tm.cycles_per_timestep] * 9
    fire0, fire1 = (f for _, f in phase_table(qm.sizes))
    for c, k, payload in tr.events:
        if k == "spike":
            offset = (c - tm.setup_cycles) % tm.cycles_per_timestep
            assert offset == (fire0 if payload[0] == 0 else fire1)


def test_trace_rejects_wrong_width_and_tight_schedule():
    qm = _qm()
    with pytest.raises(ValueError):
        simulate_trace(qm, np.zeros((10, 23), np.uint8))
    with pytest.raises(ScheduleError):
        simulate_trace(qm, np.zeros((10, 24), np.uint8), TimingModel(20, 5, 20.0))
