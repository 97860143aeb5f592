"""Compile a quantized model into VHDL, .coe ROM images and a pin stub."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

from .. import __version__
from ..network import QuantizedModel
from ..provenance import arrays_hash, config_hash
from ..simulator import CALIBRATED, TimingModel
from .coe import GenerationError, emit_coe, nibbles, parse_coe
from .vhdl import (HEADER, check_topology, control_source, layer_source, neuron_source,
                   package_source, top_ports, top_source)

__all__ = ["EmitOptions", "GenerationError", "HdlBundle", "emit_coe", "emit_hdl",
           "emit_xdc_stub", "parse_coe", "quant_model_hash", "write_bundle", "verify_bundle",
           "nibbles"]


@dataclass(frozen=True)
class EmitOptions:
    timesteps: int = 10
    top_name: str = "snn_accelerator"
    clock_mhz: float = 100.0


@dataclass
class HdlBundle:
    files: dict[str, str]  # relative path -> text, manifest included
    config_hash: str
    seed: object = None
    top_name: str = "snn_accelerator"

    @property
    def top_entity(self) -> str:
        return self.files[f"rtl/{self.top_name}.vhd"]

    @property
    def neuron_module(self) -> str:
        return self.files["rtl/lif_neuron.vhd"]

    @property
    def control_fsm(self) -> str:
        return self.files["rtl/snn_control.vhd"]

    @property
    def rom_files(self) -> list[tuple[str, str]]:
        return [(k, v) for k, v in self.files.items() if k.startswith("mem/")]

    @property
    def constraints_stub(self) -> str:
        return self.files["constr/pins.xdc"]

    @property
    def datapath_files(self) -> dict[str, str]:
        return {k: v for k, v in self.files.items() if k.startswith("rtl/")}

    @property
    def manifest(self) -> dict[str, str]:
        return parse_manifest(self.files["manifest.txt"])


def quant_model_hash(qm: QuantizedModel) -> str:
    arrays = [l.weights for l in qm.layers]
    params = [
        {"threshold": l.threshold, "lif": vars(l.lif)} for l in qm.layers
    ]
    return config_hash({
        "weights": arrays_hash(*arrays),
        "layers": params,
        "wfmt": [qm.weight_format.total_bits, qm.weight_format.frac_bits],
        "mfmt": [qm.membrane_format.total_bits, qm.membrane_format.frac_bits],
    })


def emit_xdc_stub(qm: QuantizedModel, clock_mhz: float, top_name: str = "snn_accelerator") -> str:
    if not clock_mhz > 0:
        raise GenerationError(f"clock must be positive, got {clock_mhz} MHz")
    period = 1000.0 / clock_mhz
    lines = [
        f"## Pin constraints for {top_name}. Fill in PACKAGE_PIN and IOSTANDARD for your board.",
        f"create_clock -period {period:.3f} -name sys_clk [get_ports clk]",
    ]
    for name, direction, typ in top_ports(qm):
        target = f"{{{name}[*]}}" if "vector" in typ else name
        lines.append(f"# set_property -dict {{PACKAGE_PIN ?? IOSTANDARD ??}} [get_ports {target}]"
                     f" ;# {direction} {typ}")
    return "\n".join(lines) + "\n"


def emit_hdl(qm: QuantizedModel, tm: TimingModel = CALIBRATED,
             opts: EmitOptions = EmitOptions()) -> HdlBundle:
    check_topology(qm, tm)
    chash = config_hash({"model": quant_model_hash(qm), "timing": vars(tm), "opts": vars(opts)})
    seed = qm.meta.get("seed")
    head = HEADER.format(version=__version__, config_hash=chash, seed=seed)
    files = {
        "rtl/snn_pkg.vhd": package_source(head),
        "rtl/lif_neuron.vhd": neuron_source(head),
        "rtl/snn_control.vhd": control_source(head, qm, tm, opts.timesteps),
    }
    wb = qm.weight_format.total_bits
    for i in range(len(qm.layers)):
        files[f"rtl/snn_layer_{i}.vhd"] = layer_source(head, qm, i)
        # transpose to (fan_in, fan_out) so the flat order is presynaptic-major
        files[f"mem/weights_layer_{i}.coe"] = emit_coe(qm.layers[i].weights.T, wb)
    files[f"rtl/{opts.top_name}.vhd"] = top_source(head, qm, opts.timesteps, opts.top_name)
    files["constr/pins.xdc"] = emit_xdc_stub(qm, opts.clock_mhz, opts.top_name)
    files["manifest.txt"] = build_manifest(files, chash, seed)
    return HdlBundle(dict(sorted(files.items())), chash, seed, opts.top_name)


def build_manifest(files: dict[str, str], chash: str, seed) -> str:
    lines = [f"# sfatti {__version__} hdl bundle config={chash} seed={seed}"]
    for path in sorted(files):
        if path != "manifest.txt":
            lines.append(f"{hashlib.sha256(files[path].encode()).hexdigest()}  {path}")
    return "\n".join(lines) + "\n"


def parse_manifest(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if line and not line.startswith("#"):
            digest, path = line.split(None, 1)
            out[path.strip()] = digest
    return out


def write_bundle(bundle: HdlBundle, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    written = []
    for rel, text in bundle.files.items():
        path = out_dir / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        written.append(path)
    return written


def verify_bundle(out_dir) -> list[str]:
    """Paths whose content no longer matches the manifest (empty when intact)."""
    out_dir = Path(out_dir)
    manifest = parse_manifest((out_dir / "manifest.txt").read_text())
    bad = []
    for rel, digest in manifest.items():
        p = out_dir / rel
        if not p.exists() or hashlib.sha256(p.read_bytes()).hexdigest() != digest:
            bad.append(rel)
    return bad
