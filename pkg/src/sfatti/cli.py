"""Command line front end: train, sweep, simulate, emit, pipeline, verify.

Exit codes: 0 ok, 2 usage, 3 data, 4 training, 5 generation.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .checkpoint import CheckpointError, load_model, save_model, verify_checkpoint
from .dataset import IdxFormatError, default_data_dir, load_mnist
from .dse import (SweepSpec, format_results, run_sweep, select_best, summarize,
                  verify_results)
from .encoder import EncodingConfig, encode
from .hdlgen import EmitOptions, GenerationError, emit_hdl, verify_bundle, write_bundle
from .hwtable import KINTEX7_REFERENCE, as_lookup, load_table
from .network import ConfigurationError, LIFParams, init_model, round_decays_to_pow2
from .provenance import config_hash
from .quantizer import QuantConfig, quantize_model
from .simulator import (CALIBRATED, ScheduleError, TimingModel, check_schedule, format_report,
                        latency_report, simulate_trace, width_aware_model)
from .trainer import TrainerConfig, TrainingError, train

log = logging.getLogger("sfatti")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRAIN, EXIT_GEN = 0, 2, 3, 4, 5


class UsageError(Exception):
    pass


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _seed(args) -> int:
    env = os.environ.get("SFATTI_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"SFATTI_SEED must be an integer, got {env!r}") from None
    return args.seed


def _data_dir(args) -> Path:
    d = Path(args.data_dir) if args.data_dir else default_data_dir()
    if d is None:
        raise UsageError("no data directory: pass --data-dir or set SFATTI_DATA_DIR")
    if not d.is_dir():
        raise UsageError(f"data directory not found: {d}")
    return d


def _load_split(args, split, limit=None):
    try:
        ds = load_mnist(_data_dir(args), split)
    except FileNotFoundError as e:
        raise UsageError(f"missing MNIST file: {e}") from None
    return ds.head(limit) if limit else ds


@contextlib.contextmanager
def _stage(target: Path):
    """Leave ``<target>.partial`` behind unless the block finishes."""
    target = Path(target)
    target.parent.mkdir(parents=True, exist_ok=True)
    marker = target.with_name(target.name + ".partial")
    marker.write_text("incomplete; rerun the stage that writes " + target.name + "\n")
    yield
    marker.unlink()


def _write_kv(path: Path, items: dict):
    lines = [f"{k}={json.dumps(v, sort_keys=True)}" for k, v in items.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def _hw_rows(args):
    if getattr(args, "power_table", None):
        return load_table(args.power_table)
    return KINTEX7_REFERENCE


def _timing(qm, args) -> TimingModel:
    tm = width_aware_model(qm.sizes) if args.width_aware else CALIBRATED
    row = as_lookup(_hw_rows(args)).get((qm.arch, qm.meta.get("quant")))
    if args.clock_mhz:
        tm = tm.with_period(1000.0 / args.clock_mhz)
    elif row is not None:
        tm = tm.with_period(1000.0 / row.clock_mhz)
    return tm


# ---------------------------------------------------------------------------
# train

def _train_one(args, arch, out: Path, seed, train_split, test_split):
    lif = LIFParams(beta=args.beta, threshold=1.0)
    model = round_decays_to_pow2(init_model(arch, seed, lif))
    cfg = TrainerConfig(epochs=args.epochs, batch_size=args.batch_size,
                        learning_rate=args.lr, seed=seed, timesteps=args.timesteps)
    with _stage(out):
        trained, report = train(model, train_split, test_split, cfg)
        chash = save_model(trained, out)
        rep = {"arch": arch, "seed": seed, "config_hash": config_hash(vars(cfg) | {"arch": arch}),
               "checkpoint_hash": chash, **report.as_dict()}
        _write_kv(out.with_suffix(".report.txt"), rep)
        if not args.no_figures:
            from .plotting import plot_training
            plot_training(report, out.with_suffix(".training.png"))
    return trained, report


def cmd_train(args) -> int:
    seed = _seed(args)
    train_split = _load_split(args, "train", args.train_limit)
    test_split = _load_split(args, "test", args.test_limit)
    _, report = _train_one(args, args.arch, Path(args.out), seed, train_split, test_split)
    print(f"checkpoint={args.out}")
    print(f"test_accuracy={report.test_accuracy}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep

def _load_spec(args) -> SweepSpec:
    spec = SweepSpec.load(args.config) if args.config else SweepSpec()
    if args.floor is not None:
        spec.accuracy_floor = args.floor
    if args.eval_subset is not None:
        spec.eval_subset = args.eval_subset
    env_seed = os.environ.get("SFATTI_SEED")
    if args.seed is not None or env_seed is not None:
        spec.seed = _seed(args)
    return spec


def _checkpoint_map(args, spec) -> dict:
    paths = dict(spec.checkpoints)
    for item in args.checkpoint or []:
        arch, _, path = item.partition("=")
        if not path:
            raise UsageError(f"--checkpoint expects ARCH=PATH, got {item!r}")
        paths[arch] = path
    models = {}
    for arch in spec.architectures:
        if arch not in paths:
            raise UsageError(f"no checkpoint given for architecture {arch}")
        if not Path(paths[arch]).exists():
            raise UsageError(f"checkpoint not found: {paths[arch]}")
        models[arch] = load_model(paths[arch])
    return models


def _do_sweep(args, spec, models, out: Path):
    test = _load_split(args, "test", args.test_limit)
    default_power = args.power_mw
    with _stage(out):
        records = run_sweep(models, spec, test, workers=args.workers, hw_rows=_hw_rows(args),
                            default_power_mw=default_power)
        out.write_text(format_results(records, spec, {"test_samples": len(test)}))
        out.with_suffix(".summary.txt").write_text(summarize(records, spec.accuracy_floor))
        if not args.no_figures:
            from .plotting import plot_sweep
            plot_sweep(records, spec.accuracy_floor, out.with_suffix(".png"))
    print(summarize(records, spec.accuracy_floor), end="")
    return records


def cmd_sweep(args) -> int:
    spec = _load_spec(args)
    models = _checkpoint_map(args, spec)
    _do_sweep(args, spec, models, Path(args.out))
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate / emit

def _quantized(args):
    if not Path(args.checkpoint).exists():
        raise UsageError(f"checkpoint not found: {args.checkpoint}")
    return quantize_model(load_model(args.checkpoint), QuantConfig.parse(args.quant))


def cmd_simulate(args) -> int:
    qm = _quantized(args)
    tm = _timing(qm, args)
    power = args.power_mw
    if power is None:
        row = as_lookup(_hw_rows(args)).get((qm.arch, qm.meta["quant"]))
        power = row.power_mw if row else None
    rep = latency_report(tm, args.timesteps, power / 1000.0 if power else None)
    print(format_report(rep, tm, args.timesteps), end="")
    if args.sample is not None:
        test = _load_split(args, "test")
        sample = test[args.sample]
        train_ = encode(sample, EncodingConfig(args.timesteps, _seed(args)), int(test.index[args.sample]))
        trace = simulate_trace(qm, train_, tm)
        print(f"sample={args.sample} label={sample.label} predicted={trace.label} "
              f"ready_cycle={trace.ready}")
        print("counts=" + ",".join(map(str, trace.counts)))
        if args.trace_out:
            with open(args.trace_out, "w") as fh:
                for cyc, kind, payload in trace.events:
                    fh.write(f"{cyc}\t{kind}\t{'' if payload is None else payload}\n")
    return EXIT_OK


def _emit(qm, tm, timesteps, out: Path):
    check_schedule(qm.sizes, tm)
    bundle = emit_hdl(qm, tm, EmitOptions(timesteps=timesteps, clock_mhz=1000.0 / tm.clock_period))
    with _stage(out / "manifest.txt"):
        write_bundle(bundle, out)
    return bundle


def cmd_emit(args) -> int:
    qm = _quantized(args)
    bundle = _emit(qm, _timing(qm, args), args.timesteps, Path(args.out))
    print(f"bundle={args.out} config_hash={bundle.config_hash} files={len(bundle.files)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# pipeline

def cmd_pipeline(args) -> int:
    spec = _load_spec(args)
    seed = spec.seed
    out = Path(args.out)
    ckpt_dir = out / "checkpoints"
    models = {}
    if args.skip_train:
        for arch in spec.architectures:
            path = Path(spec.checkpoints.get(arch, ckpt_dir / f"{arch}.ckpt"))
            if not path.exists():
                raise UsageError(f"--skip-train but checkpoint missing: {path}")
            models[arch] = load_model(path)
    else:
        train_split = _load_split(args, "train", args.train_limit)
        for arch in spec.architectures:
            log.info("training %s", arch)
            models[arch], _ = _train_one(args, arch, ckpt_dir / f"{arch}.ckpt", seed,
                                         train_split, None)
    records = _do_sweep(args, spec, models, out / "sweep.jsonl")
    best = select_best(records)
    if best is None:
        print("no passing config with a known power figure; nothing emitted")
        return EXIT_OK
    q = QuantConfig(best["wb"], best["mb"], best["fpd"])
    qm = quantize_model(models[best["arch"]], q)
    tm = TimingModel(CALIBRATED.cycles_per_timestep, CALIBRATED.setup_cycles,
                     best["clock_period_ns"])
    timing = "calibrated"
    try:
        check_schedule(qm.sizes, tm)
    except ScheduleError:
        timing = "width_aware"
        log.warning("%s does not fit the calibrated schedule; emitting width-aware", qm.arch)
        tm = width_aware_model(qm.sizes, best["clock_period_ns"])
    bundle = _emit(qm, tm, best["timesteps"], out / "hdl")
    _write_kv(out / "selected.txt", {"index": best["index"], "arch": best["arch"],
                                     "quant": str(q), "timesteps": best["timesteps"],
                                     "timing": timing, "accuracy": best["accuracy"],
                                     "efficiency_img_s_w": best["efficiency_img_s_w"],
                                     "bundle_hash": bundle.config_hash, "seed": seed})
    print(f"selected [{best['index']}] {best['arch']} ({q}) "
          f"efficiency={best['efficiency_img_s_w']:.1f} img/s/W -> {out / 'hdl'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify

def cmd_verify(args) -> int:
    failed = False
    for p in map(Path, args.paths):
        if not p.exists():
            raise UsageError(f"not found: {p}")
        if p.is_dir():
            bad = verify_bundle(p)
            ok = not bad
            detail = "" if ok else " mismatched: " + ", ".join(bad)
        else:
            check = verify_results if p.suffix == ".jsonl" else verify_checkpoint
            try:
                ok, detail = check(p), ""
            except (ValueError, KeyError) as e:
                ok, detail = False, f" unreadable: {e}"
        print(f"{'ok' if ok else 'FAIL'} {p}{detail}")
        failed |= not ok
    return EXIT_DATA if failed else EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--data-dir", help="directory with the MNIST IDX files")
    common.add_argument("--seed", type=int, default=None, help="global seed ($SFATTI_SEED wins)")
    common.add_argument("-v", "--verbose", action="store_true")

    training = argparse.ArgumentParser(add_help=False)
    training.add_argument("--timesteps", type=_positive_int, default=10)
    training.add_argument("--epochs", type=_positive_int, default=25)
    training.add_argument("--batch-size", type=_positive_int, default=64)
    training.add_argument("--lr", type=float, default=5e-4)
    training.add_argument("--beta", type=float, default=0.9375, help="membrane decay before pow2 rounding")
    training.add_argument("--train-limit", type=_positive_int, help="use only the first N training images")

    hw = argparse.ArgumentParser(add_help=False)
    hw.add_argument("--power-table", help="JSON list of measured rows (arch, quant, power_mw, clock_mhz, ...)")
    hw.add_argument("--power-mw", type=float, help="power for configs without a table row")

    io_opts = argparse.ArgumentParser(add_help=False)
    io_opts.add_argument("--test-limit", type=_positive_int, help="use only the first N test images")
    io_opts.add_argument("--no-figures", action="store_true")

    sweep_opts = argparse.ArgumentParser(add_help=False)
    sweep_opts.add_argument("--config", "--spec", dest="config", help="sweep spec: JSON or key = value lines")
    sweep_opts.add_argument("--floor", type=float, help="override accuracy floor (fraction)")
    sweep_opts.add_argument("--eval-subset", type=_positive_int)
    sweep_opts.add_argument("--workers", type=_positive_int, default=1)

    model_opts = argparse.ArgumentParser(add_help=False)
    model_opts.add_argument("--checkpoint", "--model", dest="checkpoint", required=True)
    model_opts.add_argument("--quant", required=True, help="WB,MB,FPd e.g. 6,9,5")
    model_opts.add_argument("--timesteps", type=_positive_int, default=10)
    model_opts.add_argument("--clock-mhz", type=float)
    model_opts.add_argument("--width-aware", action="store_true",
                            help="per-timestep cycle budget from the layer widths")

    p = argparse.ArgumentParser(prog="sfatti", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"sfatti {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("train", parents=[common, training, io_opts], help="train a float model")
    s.add_argument("--arch", default="784-75-10")
    s.add_argument("--out", required=True, help="checkpoint path")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", parents=[common, hw, io_opts, sweep_opts], help="quantization sweep")
    s.add_argument("--checkpoint", action="append", metavar="ARCH=PATH")
    s.add_argument("--out", required=True, help="results log (.jsonl)")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("simulate", parents=[common, hw, model_opts], help="latency and trace")
    s.add_argument("--sample", type=int, help="test-set index to trace cycle by cycle")
    s.add_argument("--trace-out", help="write the trace events here")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("emit", parents=[common, hw, model_opts], help="generate the HDL bundle")
    s.add_argument("--out", required=True, help="bundle directory")
    s.set_defaults(func=cmd_emit)

    s = sub.add_parser("pipeline", parents=[common, training, hw, io_opts, sweep_opts],
                       help="train, sweep, select and emit")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--skip-train", action="store_true", help="reuse checkpoints under OUT/checkpoints")
    s.set_defaults(func=cmd_pipeline)

    s = sub.add_parser("verify", parents=[common], help="recheck artifact hashes")
    s.add_argument("paths", nargs="+", help="checkpoints, results logs or bundle directories")
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command in ("train", "simulate") and args.seed is None:
        args.seed = 0
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigurationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (IdxFormatError, CheckpointError, json.JSONDecodeError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as e:
        print(f"training failed: {e}", file=sys.stderr)
        return EXIT_TRAIN
    except (GenerationError, ScheduleError) as e:
        print(f"generation failed: {e}", file=sys.stderr)
        return EXIT_GEN


if __name__ == "__main__":
    sys.exit(main())
