from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from sfatti.encoder import SpikeTrain
from sfatti.fixedpoint import FixedPointFormat
from sfatti.network import (ConfigurationError, LayerSpec, LIFParams, NetworkModel,
                            QuantizedLayer, QuantizedModel, decide, infer, init_model,
                            nearest_shift, parse_arch, round_decays_to_pow2, round_lif_to_pow2,
                            run, step_float, step_quant, zero_qstate, zero_state)


def test_zero_weights_zero_state():
    layer = LayerSpec(np.zeros((3, 4)), LIFParams())
    st_, s = step_float(layer, zero_state(3), np.ones(4))
    assert not s.any() and not st_.membrane.any()


def test_i_order_single_spike_subtract_reset():
    layer = LayerSpec(np.array([[2.0]]), LIFParams(beta=0.5, threshold=1.0))
    state, s = step_float(layer, zero_state(1), np.array([1.0]))
    assert s[0] == 1 and state.membrane[0] == 1.0


def test_zero_reset():
    layer = LayerSpec(np.array([[2.0]]), LIFParams(beta=0.5, threshold=1.0, reset_mode="zero"))
    state, s = step_float(layer, zero_state(1), np.array([1.0]))
    assert s[0] == 1 and state.membrane[0] == 0.0


def test_if_accumulates_exactly():
    rng = np.random.default_rng(0)
    w = rng.uniform(-0.1, 0.3, size=(1, 5))
    layer = LayerSpec(w, LIFParams(alpha=0.0, beta=0.0, threshold=100.0))
    state = zero_state(1)
    acc = 0.0
    for _ in range(20):
        x = (rng.random(5) < 0.5).astype(float)
        state, s = step_float(layer, state, x)
        acc += float(w[0] @ x)
        assert state.membrane[0] == pytest.approx(acc, abs=1e-12)
        assert s[0] == 0


def test_ii_order_float_recurrence():
    lif = LIFParams(alpha=0.5, beta=0.75, threshold=10.0)
    layer = LayerSpec(np.array([[1.0]]), lif)
    state = zero_state(1)
    i_ref = u_ref = 0.0
    for x in [1, 0, 1, 1, 0]:
        state, _ = step_float(layer, state, np.array([float(x)]))
        i_ref = 0.5 * i_ref + x
        u_ref = 0.75 * u_ref + i_ref
        assert state.current[0] == pytest.approx(i_ref) and state.membrane[0] == pytest.approx(u_ref)


def test_dimension_mismatch():
    layer = LayerSpec(np.zeros((3, 4)), LIFParams())
    with pytest.raises(ValueError):
        step_float(layer, zero_state(3), np.ones(5))


def _qlayer(w, thr, lif):
    return QuantizedLayer(np.asarray(w, np.int64), thr, lif)


def test_quant_decay_no_input():
    fmt = FixedPointFormat(10, 4)
    lif = round_lif_to_pow2(LIFParams(beta=0.75, threshold=1.0))
    assert lif.beta_shift == 2
    state = zero_qstate(1)._replace(membrane=np.array([64]))
    state, s = step_quant(_qlayer([[0]], 500, lif), fmt, state, np.array([0]))
    assert state.membrane[0] == 48 and s[0] == 0


def test_quant_saturates_no_wrap():
    fmt = FixedPointFormat(10, 4)
    lif = LIFParams(beta=0.0, threshold=1.0)
    layer = _qlayer([[200, 200, 200]], 511, lif)
    state = zero_qstate(1)
    state, s = step_quant(layer, fmt, state, np.array([1, 1, 1]))
    assert state.membrane[0] == 511 and s[0] == 0
    state, s = step_quant(layer, fmt, state, np.array([1, 1, 1]))
    assert state.membrane[0] == 511


def test_quantized_model_needs_shift():
    fmt = FixedPointFormat(8, 4)
    with pytest.raises(ConfigurationError):
        QuantizedModel([_qlayer([[1]], 10, LIFParams(beta=0.9))], fmt, fmt)


def test_lif_params_validation():
    with pytest.raises(ConfigurationError):
        LIFParams(beta=1.0)
    with pytest.raises(ConfigurationError):
        LIFParams(threshold=0.0)
    with pytest.raises(ConfigurationError):
        LIFParams(beta=0.9, beta_shift=4)
    with pytest.raises(ConfigurationError):
        LIFParams(reset_mode="hold")
    assert LIFParams(alpha=0, beta=0).order == "IF"
    assert LIFParams(alpha=0.5).order == "II-LIF"
    assert LIFParams().order == "I-LIF"


def _oracle_shift(decay):
    best = None
    for k in range(1, 9):
        d = abs(decay - (1 - 2.0 ** -k))
        if best is None or d < best[0]:
            best = (d, k)
    return best[1]


@pytest.mark.parametrize("beta, k", [(0.95, 4), (0.5, 1), (0.9375, 4), (0.97, 5), (0.999, 8), (0.6, 1)])
def test_nearest_shift(beta, k):
    assert nearest_shift(beta) == k == _oracle_shift(beta)


def test_nearest_shift_tie_goes_low():
    # midpoint between 0.5 (k=1) and 0.75 (k=2)
    assert nearest_shift(0.625) == 1


@given(st.floats(0.01, 0.999))
def test_nearest_shift_matches_enumeration(beta):
    assert nearest_shift(beta) == _oracle_shift(beta)


def test_round_decays():
    m = init_model("6-4-3", 0, LIFParams(alpha=0.8, beta=0.95))
    r = round_decays_to_pow2(m)
    lif = r.layers[0].lif
    assert (lif.beta, lif.beta_shift, lif.alpha_shift) == (0.9375, 4, 2)
    assert round_decays_to_pow2(r).layers[0].lif == lif  # idempotent
    assert m.layers[0].lif.beta == 0.95  # input untouched
    if_model = init_model("6-3", 0, LIFParams(alpha=0.0, beta=0.0))
    assert round_decays_to_pow2(if_model).layers[0].lif == if_model.layers[0].lif


@given(st.floats(0.0, 0.999), st.floats(0.0, 0.999))
def test_round_decays_idempotent(a, b):
    lif = round_lif_to_pow2(LIFParams(alpha=a, beta=b))
    assert round_lif_to_pow2(lif) == lif


def test_parse_arch_and_model_shape():
    assert parse_arch("784-75-10") == [784, 75, 10]
    m = init_model("784-75-10", 3)
    assert m.arch == "784-75-10" and m.layers[0].weights.shape == (75, 784)
    assert np.abs(m.layers[0].weights).max() <= 1 / np.sqrt(784)
    with pytest.raises(ConfigurationError):
        parse_arch("784")


def test_infer_all_zero_train():
    m = init_model("784-10", 0)
    for l in m.layers:
        l.weights[:] = 0
    assert infer(m, SpikeTrain(np.zeros((10, 784), np.uint8))) == 0


def test_infer_channel_mismatch():
    with pytest.raises(ValueError):
        infer(init_model("784-10", 0), np.zeros((10, 783), np.uint8))


def test_decide_ties_lowest_index():
    assert list(decide(np.array([[3, 5, 5, 1], [0, 0, 0, 0], [1, 0, 0, 1]]))) == [1, 0, 0]


@given(st.lists(st.integers(0, 3), min_size=2, max_size=10))
def test_decide_stable(counts):
    c = np.array(counts)
    assert decide(c) == min(i for i, v in enumerate(counts) if v == max(counts))


# random quantized models against the scalar oracle

def random_qlayer(rng, n_in, n_out, wb, mb, fpd):
    kind = rng.integers(3)
    pure = bool(rng.integers(2)) and kind > 0
    ak, bk = (int(k) for k in rng.integers(1, 9, size=2))
    shift = (lambda k: 2.0 ** -k) if pure else (lambda k: 1 - 2.0 ** -k)
    if kind == 0:
        lif = LIFParams(alpha=0.0, beta=0.0)
    elif kind == 1:
        lif = LIFParams(beta=shift(bk), beta_shift=bk, pure_shift=pure)
    else:
        lif = LIFParams(alpha=shift(ak), alpha_shift=ak, beta=shift(bk), beta_shift=bk, pure_shift=pure)
    lif = replace(lif, reset_mode=["subtract", "zero"][rng.integers(2)])
    lo, hi = -(1 << (wb - 1)), (1 << (wb - 1)) - 1
    w = rng.integers(lo, hi + 1, size=(n_out, n_in))
    thr = int(rng.integers(1, (1 << (mb - 1))))
    return QuantizedLayer(w, thr, lif)


def check_layer_against_oracle(rng, T=50):
    wb, mb = int(rng.integers(2, 11)), int(rng.integers(3, 13))
    fpd = int(rng.integers(0, min(wb, mb) + 1))
    n_in, n_out = (int(v) for v in rng.integers(1, 17, size=2))
    layer = random_qlayer(rng, n_in, n_out, wb, mb, fpd)
    fmt = FixedPointFormat(mb, fpd)
    x = (rng.random((T, n_in)) < rng.random()).astype(np.int64)
    state = zero_qstate(n_out)
    spikes, mems, curs = [], [], []
    for t in range(T):
        state, s = step_quant(layer, fmt, state, x[t])
        spikes.append(s.tolist())
        mems.append(state.membrane.tolist())
        curs.append(state.current.tolist())
    ref = oracles.lif_layer(layer.weights.tolist(), layer.threshold, layer.lif, mb, x.tolist())
    return (spikes, mems, curs) == ref


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_step_quant_matches_oracle(seed):
    assert check_layer_against_oracle(np.random.default_rng(seed))


def _monotone_trace(layer, fmt, x):
    state = zero_qstate(layer.fan_out)
    total = np.zeros(layer.fan_out, np.int64)
    for row in x:
        state, s = step_quant(layer, fmt, state, row)
        total += s
    return total


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["subtract", "zero"]), st.integers(1, 40))
def test_raising_threshold_never_adds_spikes(seed, mode, bump):
    rng = np.random.default_rng(seed)
    fmt = FixedPointFormat(12, 4)
    k = int(rng.integers(1, 9))
    lif = LIFParams(beta=1 - 2.0 ** -k, beta_shift=k, reset_mode=mode)
    w = rng.integers(-64, 64, size=(4, 6))
    thr = int(rng.integers(1, 500))
    x = (rng.random((40, 6)) < 0.5).astype(np.int64)
    low = _monotone_trace(QuantizedLayer(w, thr, lif), fmt, x)
    high = _monotone_trace(QuantizedLayer(w, min(thr + bump, fmt.max_raw), lif), fmt, x)
    assert (high <= low).all()


def test_run_matches_per_sample():
    rng = np.random.default_rng(5)
    m = round_decays_to_pow2(init_model("12-6-3", 2, LIFParams(threshold=0.3)))
    spikes = (rng.random((7, 10, 12)) < 0.5).astype(np.uint8)
    counts, rasters = run(m, spikes, record=True)
    assert counts.shape == (7, 3) and rasters[0].shape == (7, 10, 6)
    for b in range(7):
        assert (run(m, spikes[b]) == counts[b]).all()
    assert (rasters[-1].sum(axis=1) == counts).all()


def test_network_model_chain_check():
    lif = LIFParams()
    with pytest.raises(ConfigurationError):
        NetworkModel([LayerSpec(np.zeros((4, 6)), lif), LayerSpec(np.zeros((2, 5)), lif)])
