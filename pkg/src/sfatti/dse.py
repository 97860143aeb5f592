"""Design-space exploration over quantization formats and architectures.

A sweep enumerates every (arch, T, WB, MB, FPd) point in a fixed nested
order; that position is the record's config index.  Points are evaluated by
a process pool of any width and written back sorted by index, so the results
file does not depend on scheduling.
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import product
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import DatasetSplit
from .encoder import encode_array
from .hwtable import KINTEX7_REFERENCE, as_lookup
from .network import ConfigurationError, decide, run
from .provenance import canonical_json, config_hash, sha256_text
from .quantizer import QuantConfig, quantize_model
from .simulator import CALIBRATED, latency_report, width_aware_model

log = logging.getLogger(__name__)


def _as_range(v) -> list[int]:
    if isinstance(v, int):
        return [v]
    if isinstance(v, str):
        for sep in ("..", "-"):
            if sep in v:
                lo, hi = (int(p) for p in v.split(sep))
                return list(range(lo, hi + 1))
        return [int(p) for p in v.split(",")]
    return [int(x) for x in v]


@dataclass
class SweepSpec:
    weight_bits: list = field(default_factory=lambda: [4, 6, 10])
    membrane_bits: list = field(default_factory=lambda: [4, 9, 10])
    frac_bits: list = field(default_factory=lambda: [4, 5, 6])
    architectures: list = field(default_factory=lambda: ["784-75-10"])
    timesteps: list = field(default_factory=lambda: [10])
    accuracy_floor: float = 0.975
    seed: int = 0
    eval_subset: int | None = None
    random_subsample: int | None = None
    width_aware: bool = False
    checkpoints: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("weight_bits", "membrane_bits", "frac_bits", "timesteps"):
            setattr(self, name, _as_range(getattr(self, name)))
            if not getattr(self, name):
                raise ConfigurationError(f"{name} range is empty")
        if isinstance(self.architectures, str):
            self.architectures = [a.strip() for a in self.architectures.split(",") if a.strip()]
        if not self.architectures:
            raise ConfigurationError("no architectures to sweep")
        if not 0.0 <= self.accuracy_floor <= 1.0:
            raise ConfigurationError(f"accuracy_floor must be in [0, 1], got {self.accuracy_floor}")

    @classmethod
    def from_text(cls, text: str) -> "SweepSpec":
        """Parse a JSON object or flat ``key = value`` lines (values JSON-decoded when possible)."""
        text = text.strip()
        if text.startswith("{"):
            data = json.loads(text)
        else:
            data = {}
            for line in text.splitlines():
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                key, _, value = line.partition("=")
                value = value.strip()
                try:
                    data[key.strip()] = json.loads(value)
                except json.JSONDecodeError:
                    data[key.strip()] = value
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown sweep keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "SweepSpec":
        return cls.from_text(Path(path).read_text())

    def digest(self) -> str:
        d = asdict(self)
        d.pop("checkpoints")
        return config_hash(d)


@dataclass(frozen=True)
class SweepPoint:
    index: int
    arch: str
    timesteps: int
    quant: tuple  # (WB, MB, FPd)


def enumerate_points(spec: SweepSpec):
    """All grid points in index order, split into (valid, skipped-with-reason)."""
    valid, skipped = [], []
    grid = product(spec.architectures, spec.timesteps, spec.weight_bits,
                   spec.membrane_bits, spec.frac_bits)
    for i, (arch, T, wb, mb, fp) in enumerate(grid):
        point = SweepPoint(i, arch, T, (wb, mb, fp))
        try:
            QuantConfig(wb, mb, fp)
        except ConfigurationError as e:
            skipped.append((point, str(e)))
            continue
        valid.append(point)
    if spec.random_subsample is not None and spec.random_subsample < len(valid):
        rng = np.random.default_rng(spec.seed)
        keep = set(rng.choice(len(valid), spec.random_subsample, replace=False).tolist())
        for j, p in enumerate(valid):
            if j not in keep:
                skipped.append((p, "not drawn by random subsample"))
        valid = [p for j, p in enumerate(valid) if j in keep]
        skipped.sort(key=lambda s: s[0].index)
    return valid, skipped


def select_subset(test: DatasetSplit, size: int | None, seed: int) -> DatasetSplit:
    if size is None or size >= len(test):
        return test
    idx = np.sort(np.random.default_rng(seed).choice(len(test), size, replace=False))
    return test.subset(idx)


# worker-side state, installed once per process
_WORK = {}


def _init_worker(models, test, spec, hw, default_power_mw=None):
    _WORK.clear()
    _WORK.update(models=models, test=test, spec=spec, hw=hw, power=default_power_mw, spikes={})


def _spikes(T):
    cache = _WORK["spikes"]
    if T not in cache:
        test = _WORK["test"]
        cache[T] = encode_array(test.pixels, test.index, T, _WORK["spec"].seed)
    return cache[T]


def _evaluate(point: SweepPoint) -> dict:
    spec, test, hw = _WORK["spec"], _WORK["test"], _WORK["hw"]
    model = _WORK["models"][point.arch]
    q = QuantConfig(*point.quant)
    qm = quantize_model(model, q)
    spikes = _spikes(point.timesteps)
    correct = 0
    for lo in range(0, len(test), 1000):
        sl = slice(lo, lo + 1000)
        correct += int((decide(run(qm, spikes[sl])) == test.labels[sl]).sum())
    accuracy = correct / len(test)
    row = hw.get((point.arch, str(q)))
    tm = width_aware_model(qm.sizes) if spec.width_aware else CALIBRATED
    if row is not None:
        tm = tm.with_period(1000.0 / row.clock_mhz)
    power_mw = row.power_mw if row else _WORK["power"]
    lat = latency_report(tm, point.timesteps, power_mw / 1000.0 if power_mw else None)
    return record_dict(point, accuracy, accuracy >= spec.accuracy_floor, lat, tm, power_mw,
                       qm.meta["saturated_weights"])


def record_dict(point, accuracy, passed, lat, tm, power_mw, saturated) -> dict:
    wb, mb, fp = point.quant
    return {
        "kind": "record",
        "index": point.index,
        "arch": point.arch,
        "timesteps": point.timesteps,
        "wb": wb, "mb": mb, "fpd": fp,
        "status": "ok",
        "accuracy": accuracy,
        "pass": bool(passed),
        "cycles": lat.total_cycles,
        "clock_period_ns": round(tm.clock_period, 6),
        "delta_t_ns": round(lat.delta_t, 6),
        "throughput_img_s": round(lat.throughput, 6),
        "power_mw": power_mw,
        "efficiency_img_s_w": None if lat.efficiency is None else round(lat.efficiency, 6),
        "saturated_weights": saturated,
    }


def run_sweep(model_per_arch: dict, spec: SweepSpec, test: DatasetSplit, workers: int = 1,
              hw_rows=KINTEX7_REFERENCE, default_power_mw: float | None = None) -> list[dict]:
    """Evaluate every valid grid point; returns records (incl. skipped) sorted by index.

    Clock and power come from ``hw_rows`` where a row matches (arch, quant);
    other points run at the 20 ns testbench clock and ``default_power_mw``.
    """
    missing = [a for a in spec.architectures if a not in model_per_arch]
    if missing:
        raise ConfigurationError(f"no trained checkpoint for architecture(s): {', '.join(missing)}")
    for arch in spec.architectures:
        if model_per_arch[arch].arch != arch:
            raise ConfigurationError(f"checkpoint for {arch} has topology {model_per_arch[arch].arch}")
    valid, skipped = enumerate_points(spec)
    subset = select_subset(test, spec.eval_subset, spec.seed)
    models = {a: model_per_arch[a] for a in spec.architectures}
    hw = as_lookup(hw_rows or [])

    if workers <= 1 or len(valid) <= 1:
        _init_worker(models, subset, spec, hw, default_power_mw)
        done = [_evaluate(p) for p in valid]
    else:
        with ProcessPoolExecutor(workers, initializer=_init_worker,
                                 initargs=(models, subset, spec, hw, default_power_mw)) as pool:
            done = list(pool.map(_evaluate, valid))
    records = done + [
        {"kind": "record", "index": p.index, "arch": p.arch, "timesteps": p.timesteps,
         "wb": p.quant[0], "mb": p.quant[1], "fpd": p.quant[2], "status": "skipped",
         "reason": reason}
        for p, reason in skipped
    ]
    records.sort(key=lambda r: r["index"])
    return records


def evaluated(records):
    return [r for r in records if r.get("status") == "ok"]


def _objectives(r) -> tuple:
    # all oriented so that larger is better
    return (r["accuracy"], -r["delta_t_ns"], -(r["wb"] + r["mb"]))


def dominates(a, b) -> bool:
    oa, ob = _objectives(a), _objectives(b)
    return all(x >= y for x, y in zip(oa, ob)) and any(x > y for x, y in zip(oa, ob))


def pareto_front(records) -> list[dict]:
    """Non-dominated evaluated records (accuracy up, latency down, WB+MB down)."""
    pool = evaluated(records)
    front = [r for r in pool if not any(dominates(o, r) for o in pool if o is not r)]
    return sorted(front, key=lambda r: r["index"])


def select_best(records):
    """Passing record with the highest images/s per watt, or None."""
    cands = [r for r in evaluated(records) if r["pass"] and r.get("efficiency_img_s_w")]
    if not cands:
        return None
    return max(cands, key=lambda r: (r["efficiency_img_s_w"], -r["index"]))


# ---------------------------------------------------------------------------
# results file

def format_results(records, spec: SweepSpec, extra: dict | None = None) -> str:
    body = [canonical_json(r) for r in records]
    header = {
        "kind": "header",
        "tool": "sfatti",
        "version": __version__,
        "spec_hash": spec.digest(),
        "seed": spec.seed,
        "accuracy_floor": spec.accuracy_floor,
        "eval_subset": spec.eval_subset,
        "records_hash": sha256_text("\n".join(body))[:16],
    }
    header.update(extra or {})
    return "\n".join([canonical_json(header)] + body) + "\n"


def parse_results(text: str):
    """Split a results file into (header, records)."""
    lines = [json.loads(l) for l in text.splitlines() if l.strip()]
    if not lines or lines[0].get("kind") != "header":
        raise ValueError("results file has no header line")
    return lines[0], lines[1:]


def verify_results(path) -> bool:
    text = Path(path).read_text()
    lines = [l for l in text.splitlines() if l.strip()]
    if not lines:
        raise ValueError(f"{path}: empty results file")
    header = json.loads(lines[0])
    return sha256_text("\n".join(lines[1:]))[:16] == header.get("records_hash")


def summarize(records, floor: float) -> str:
    ok = evaluated(records)
    passing = [r for r in ok if r["pass"]]
    out = [f"evaluated {len(ok)} configs, skipped {len(records) - len(ok)}"]
    if passing:
        out.append(f"{len(passing)} config(s) met accuracy floor {floor:.4f}:")
        out += [f"  {_label(r)} acc={r['accuracy']:.4f}" for r in passing]
    else:
        out.append(f"no config met floor {floor:.4f}")
    out.append("pareto front (accuracy, latency, WB+MB):")
    out += [f"  {_label(r)} acc={r['accuracy']:.4f} latency={r['delta_t_ns']:.1f}ns "
            f"bits={r['wb'] + r['mb']}" for r in pareto_front(records)]
    return "\n".join(out) + "\n"


def _label(r) -> str:
    return f"[{r['index']}] {r['arch']} T={r['timesteps']} ({r['wb']},{r['mb']},{r['fpd']})"
