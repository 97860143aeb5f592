import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from sfatti.dataset import DatasetSplit
from sfatti.dse import (SweepSpec, dominates, enumerate_points, format_results, pareto_front,
                        parse_results, run_sweep, select_best, select_subset, summarize,
                        verify_results)
from sfatti.hwtable import KINTEX7_REFERENCE, HwRow, load_table
from sfatti.network import ConfigurationError, LIFParams, init_model, round_decays_to_pow2
from sfatti.simulator import CALIBRATED, latency_report


def _test_split(n=60, seed=0):
    rng = np.random.default_rng(seed)
    return DatasetSplit(rng.random((n, 784)).astype(np.float32), rng.integers(0, 10, n), "test")


def _model(arch="784-8-10", seed=0):
    m = round_decays_to_pow2(init_model(arch, seed, LIFParams(beta=0.9375, threshold=0.3)))
    for layer in m.layers:
        layer.weights *= 3
    return m


def test_combinatorics_and_skips():
    spec = SweepSpec(weight_bits=[4, 10], membrane_bits=[4, 10], frac_bits=[4, 6],
                     architectures=["784-25-10"])
    valid, skipped = enumerate_points(spec)
    assert len(valid) + len(skipped) == 8
    assert [p.quant for p in valid] == [(4, 4, 4), (4, 10, 4), (10, 4, 4), (10, 10, 4), (10, 10, 6)]
    assert all("frac_bits" in reason for _, reason in skipped)
    assert [p.index for p in valid] == [0, 2, 4, 6, 7]


def test_spec_parsing():
    text = "# sweep\nweight_bits = 4..6\nmembrane_bits = [9]\nfrac_bits = \"4,5\"\narchitectures = 784-75-10\n" \
           "accuracy_floor = 0.9\n"
    spec = SweepSpec.from_text(text)
    assert spec.weight_bits == [4, 5, 6] and spec.frac_bits == [4, 5]
    assert spec.architectures == ["784-75-10"] and spec.accuracy_floor == 0.9
    assert SweepSpec.from_text(json.dumps({"weight_bits": [6]})).weight_bits == [6]
    assert spec.digest() == SweepSpec.from_text(text).digest()
    with pytest.raises(ConfigurationError):
        SweepSpec.from_text("bogus = 1")
    with pytest.raises(ConfigurationError):
        SweepSpec(accuracy_floor=1.5)
    with pytest.raises(ConfigurationError):
        SweepSpec(weight_bits=[])


def test_random_subsample_is_seeded():
    spec = SweepSpec(weight_bits="4..10", membrane_bits="4..10", frac_bits="2..4",
                     random_subsample=10, seed=3)
    a, sa = enumerate_points(spec)
    b, _ = enumerate_points(spec)
    assert a == b and len(a) == 10
    assert [s[0].index for s in sa] == sorted(s[0].index for s in sa)


def test_select_subset():
    test = _test_split(100)
    sub = select_subset(test, 10, seed=1)
    assert len(sub) == 10 and list(sub.index) == sorted(sub.index)
    assert select_subset(test, None, 1) is test


def test_missing_checkpoint_names_arch():
    spec = SweepSpec(architectures=["784-8-10", "784-9-10"])
    with pytest.raises(ConfigurationError, match="784-9-10"):
        run_sweep({"784-8-10": _model()}, spec, _test_split())


def test_sweep_records_and_floor():
    spec = SweepSpec(weight_bits=[6, 10], membrane_bits=[9, 10], frac_bits=[5, 6],
                     architectures=["784-8-10"], accuracy_floor=0.0)
    recs = run_sweep({"784-8-10": _model()}, spec, _test_split())
    assert [r["index"] for r in recs] == list(range(8))
    ok = [r for r in recs if r["status"] == "ok"]
    assert all(r["pass"] for r in ok)
    assert all(r["cycles"] == 8685 and r["clock_period_ns"] == 20.0 for r in ok)
    assert all(r["pass"] == (r["accuracy"] >= spec.accuracy_floor) for r in ok)


def test_sweep_uses_table_clock_and_power():
    spec = SweepSpec(weight_bits=[6], membrane_bits=[9], frac_bits=[5], architectures=["784-75-10"])
    recs = run_sweep({"784-75-10": _model("784-75-10")}, spec, _test_split(20))
    r = recs[0]
    assert r["power_mw"] == 231
    assert r["efficiency_img_s_w"] == pytest.approx(81_712.5, rel=1e-3)


def test_results_file_is_worker_independent(tmp_path):
    spec = SweepSpec(weight_bits=[4, 6, 10], membrane_bits=[9, 10], frac_bits=[4, 5],
                     architectures=["784-8-10", "784-6-10"], seed=2)
    models = {"784-8-10": _model(), "784-6-10": _model("784-6-10", 1)}
    test = _test_split()
    one = format_results(run_sweep(models, spec, test, workers=1), spec)
    three = format_results(run_sweep(models, spec, test, workers=3), spec)
    assert one == three
    path = tmp_path / "r.jsonl"
    path.write_text(one)
    assert verify_results(path)
    header, recs = parse_results(one)
    assert header["spec_hash"] == spec.digest() and len(recs) == 24
    path.write_text(one.replace('"accuracy":', '"accuracy": ', 1))
    assert not verify_results(path)


def test_summary_mentions_missing_pass():
    spec = SweepSpec(weight_bits=[6], membrane_bits=[9], frac_bits=[5], architectures=["784-8-10"],
                     accuracy_floor=1.0)
    recs = run_sweep({"784-8-10": _model()}, spec, _test_split(20))
    assert "no config met floor" in summarize(recs, 1.0)
    assert select_best(recs) is None


def _rec(i, acc, lat, wb, mb, eff=None, passed=True):
    return {"index": i, "status": "ok", "accuracy": acc, "delta_t_ns": lat, "wb": wb, "mb": mb,
            "fpd": 0, "arch": "a", "timesteps": 10, "pass": passed, "efficiency_img_s_w": eff}


def test_pareto_trivial_cases():
    a = _rec(0, 0.9, 100, 4, 4)
    assert pareto_front([a]) == [a]
    b = _rec(1, 0.8, 200, 6, 6)
    assert pareto_front([b, a]) == [a]
    assert dominates(a, b) and not dominates(b, a) and not dominates(a, a)


@settings(max_examples=100)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=25))
def test_pareto_matches_bruteforce(points):
    recs = [_rec(i, a / 5, l, b, 0) for i, (a, l, b) in enumerate(points)]
    got = [r["index"] for r in pareto_front(recs)]
    assert got == oracles.pareto_bruteforce([(a / 5, l, b) for a, l, b in points])


def _table_records():
    recs = []
    for i, row in enumerate(KINTEX7_REFERENCE):
        if row.efficiency is None:
            continue
        wb, mb, fp = map(int, row.quant.split(","))
        rep = latency_report(CALIBRATED.with_period(1000 / row.clock_mhz), 10, row.power_mw / 1000)
        rec = _rec(i, row.accuracy, rep.delta_t, wb, mb, rep.efficiency, row.accuracy >= 0.975)
        rec.update(arch=row.arch, fpd=fp)
        recs.append((rec, row))
    return recs


def test_table_rows_efficiency_reproduced():
    pairs = _table_records()
    assert len(pairs) == 4
    for rec, row in pairs:
        assert rec["efficiency_img_s_w"] == pytest.approx(row.efficiency, rel=2e-3)


def test_table_front_contains_reference_row():
    recs = [r for r, _ in _table_records()]
    front = pareto_front(recs)
    assert any(r["arch"] == "784-75-10" and (r["wb"], r["mb"], r["fpd"]) == (6, 9, 5) for r in front)
    best = select_best(recs)
    assert (best["arch"], best["wb"], best["mb"], best["fpd"]) == ("784-75-10", 6, 9, 5)


def test_table_pass_flags():
    passing = [r for r in KINTEX7_REFERENCE if r.accuracy >= 0.975]
    assert len(passing) == 4


def test_load_table(tmp_path):
    p = tmp_path / "hw.json"
    p.write_text(json.dumps([{"arch": "784-8-10", "quant": "6,9,5", "accuracy": 0.9,
                              "power_mw": 100, "clock_mhz": 200}]))
    assert load_table(p) == [HwRow("784-8-10", "6,9,5", 0.9, 100, 200)]
