"""Feed-forward fully connected SNN: model types and reference inference.

Neuron dynamics per layer and timestep, with ``x`` the input spike vector::

    I' = alpha * I + W x          (alpha == 0: no current state, I' = W x)
    U' = beta * U + I'            (beta == 0: no leak, U' = U + I')
    s  = U' > threshold
    U' -= threshold * s           (or U' = 0 where s, for reset "zero")

A zero decay parameter therefore removes that stage: ``alpha == 0`` is the
I-order LIF, ``alpha == beta == 0`` the plain integrate-and-fire neuron.

The quantized path replaces each decay by a subtract-and-shift on raw
integers, accumulates the synaptic sum in a wide lane and saturates only when
the result is stored back into a membrane/current register.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .fixedpoint import FixedPointFormat, shift_decay_raw

RESET_MODES = ("subtract", "zero")
SHIFT_RANGE = range(1, 9)


class ConfigurationError(ValueError):
    pass


def decay_for_shift(k: int, pure: bool = False) -> float:
    return 2.0 ** -k if pure else 1.0 - 2.0 ** -k


@dataclass(frozen=True)
class LIFParams:
    alpha: float = 0.0
    beta: float = 0.9375
    threshold: float = 1.0
    alpha_shift: int | None = None
    beta_shift: int | None = None
    reset_mode: str = "subtract"
    pure_shift: bool = False

    def __post_init__(self):
        if not (0.0 <= self.alpha < 1.0 and 0.0 <= self.beta < 1.0):
            raise ConfigurationError(f"decays must lie in [0, 1): alpha={self.alpha}, beta={self.beta}")
        if not self.threshold > 0:
            raise ConfigurationError(f"threshold must be positive, got {self.threshold}")
        if self.reset_mode not in RESET_MODES:
            raise ConfigurationError(f"unknown reset mode {self.reset_mode!r}")
        for name in ("alpha", "beta"):
            k = getattr(self, name + "_shift")
            if k is not None and getattr(self, name) != decay_for_shift(k, self.pure_shift):
                raise ConfigurationError(f"{name} does not match {name}_shift={k}")

    @property
    def order(self) -> str:
        if self.alpha > 0:
            return "II-LIF"
        return "I-LIF" if self.beta > 0 else "IF"

    @property
    def leak(self) -> float:
        """Membrane carry factor; 1.0 when leakage is disabled."""
        return self.beta if self.beta > 0 else 1.0


@dataclass
class LayerSpec:
    weights: np.ndarray  # (fan_out, fan_in)
    lif: LIFParams = field(default_factory=LIFParams)

    def __post_init__(self):
        self.weights = np.asarray(self.weights)
        if self.weights.ndim != 2:
            raise ConfigurationError("weights must be a (fan_out, fan_in) matrix")

    @property
    def fan_in(self) -> int:
        return self.weights.shape[1]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[0]


def _check_chain(sizes_in_out, input_size, output_size):
    prev = input_size
    for i, (fi, fo) in enumerate(sizes_in_out):
        if fi != prev:
            raise ConfigurationError(f"layer {i} fan_in {fi} does not match previous fan_out {prev}")
        prev = fo
    if output_size is not None and prev != output_size:
        raise ConfigurationError(f"last layer has {prev} outputs, expected {output_size}")


@dataclass
class NetworkModel:
    layers: list[LayerSpec]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.layers:
            raise ConfigurationError("a network needs at least one layer")
        _check_chain([(l.fan_in, l.fan_out) for l in self.layers], self.layers[0].fan_in, None)

    @property
    def input_size(self) -> int:
        return self.layers[0].fan_in

    @property
    def output_size(self) -> int:
        return self.layers[-1].fan_out

    @property
    def sizes(self) -> list[int]:
        return [self.input_size] + [l.fan_out for l in self.layers]

    @property
    def arch(self) -> str:
        return "-".join(map(str, self.sizes))

    def copy(self) -> "NetworkModel":
        return NetworkModel([LayerSpec(l.weights.copy(), l.lif) for l in self.layers], dict(self.meta))


def parse_arch(arch: str) -> list[int]:
    try:
        sizes = [int(s) for s in arch.split("-")]
    except ValueError:
        raise ConfigurationError(f"bad architecture string {arch!r}") from None
    if len(sizes) < 2 or min(sizes) < 1:
        raise ConfigurationError(f"bad architecture string {arch!r}")
    return sizes


def init_model(arch, seed: int, lif: LIFParams | None = None, dtype=np.float32) -> NetworkModel:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights from a seeded generator."""
    sizes = parse_arch(arch) if isinstance(arch, str) else list(arch)
    rng = np.random.default_rng(seed)
    lif = lif or LIFParams()
    layers = []
    for fi, fo in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / math.sqrt(fi)
        layers.append(LayerSpec(rng.uniform(-bound, bound, size=(fo, fi)).astype(dtype), lif))
    return NetworkModel(layers, {"init_seed": seed})


def nearest_shift(decay: float, pure: bool = False) -> int:
    """Shift exponent in 1..8 whose decay factor is closest to ``decay``.

    Ties go to the smaller exponent.
    """
    return min(SHIFT_RANGE, key=lambda k: (abs(decay - decay_for_shift(k, pure)), k))


def round_lif_to_pow2(lif: LIFParams) -> LIFParams:
    changes = {}
    for name in ("alpha", "beta"):
        value = getattr(lif, name)
        if value > 0:
            k = nearest_shift(value, lif.pure_shift)
            changes[name] = decay_for_shift(k, lif.pure_shift)
            changes[name + "_shift"] = k
    return replace(lif, **changes)


def round_decays_to_pow2(model: NetworkModel) -> NetworkModel:
    out = model.copy()
    for layer in out.layers:
        layer.lif = round_lif_to_pow2(layer.lif)
    return out


# ---------------------------------------------------------------------------
# float dynamics

class LayerState(NamedTuple):
    current: np.ndarray
    membrane: np.ndarray


def zero_state(fan_out: int, batch: tuple = (), dtype=np.float64) -> LayerState:
    return LayerState(np.zeros(batch + (fan_out,), dtype), np.zeros(batch + (fan_out,), dtype))


def _apply_reset(u, spikes, threshold, mode):
    if mode == "subtract":
        return u - threshold * spikes
    return np.where(spikes > 0, 0, u)


def step_float(layer: LayerSpec, state: LayerState, spikes_in: np.ndarray):
    spikes_in = np.asarray(spikes_in)
    if spikes_in.shape[-1] != layer.fan_in or state.membrane.shape[-1] != layer.fan_out:
        raise ValueError(
            f"dimension mismatch: layer {layer.fan_in}->{layer.fan_out}, "
            f"input {spikes_in.shape}, state {state.membrane.shape}"
        )
    lif = layer.lif
    syn = spikes_in @ layer.weights.T
    current = lif.alpha * state.current + syn if lif.alpha > 0 else syn
    u = lif.leak * state.membrane + current
    spikes = (u > lif.threshold).astype(u.dtype)
    u = _apply_reset(u, spikes, lif.threshold, lif.reset_mode)
    return LayerState(current, u), spikes


# ---------------------------------------------------------------------------
# quantized dynamics

@dataclass
class QuantizedLayer:
    weights: np.ndarray  # (fan_out, fan_in) int64 raws in the weight lane
    threshold: int  # raw, membrane lane
    lif: LIFParams

    @property
    def fan_in(self) -> int:
        return self.weights.shape[1]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[0]


@dataclass
class QuantizedModel:
    layers: list[QuantizedLayer]
    weight_format: FixedPointFormat
    membrane_format: FixedPointFormat
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        _check_chain([(l.fan_in, l.fan_out) for l in self.layers], self.layers[0].fan_in, None)
        for i, layer in enumerate(self.layers):
            if not self.weight_format.contains(layer.weights):
                raise ConfigurationError(f"layer {i} weights exceed {self.weight_format}")
            if not self.membrane_format.contains(layer.threshold):
                raise ConfigurationError(f"layer {i} threshold exceeds {self.membrane_format}")
            for name in ("alpha", "beta"):
                if getattr(layer.lif, name) > 0 and getattr(layer.lif, name + "_shift") is None:
                    raise ConfigurationError(
                        f"layer {i} decays {name}={getattr(layer.lif, name)} without a shift exponent"
                    )

    @property
    def input_size(self) -> int:
        return self.layers[0].fan_in

    @property
    def output_size(self) -> int:
        return self.layers[-1].fan_out

    @property
    def sizes(self) -> list[int]:
        return [self.input_size] + [l.fan_out for l in self.layers]

    @property
    def arch(self) -> str:
        return "-".join(map(str, self.sizes))


def zero_qstate(fan_out: int, batch: tuple = ()) -> LayerState:
    return LayerState(np.zeros(batch + (fan_out,), np.int64), np.zeros(batch + (fan_out,), np.int64))


def synaptic_sum(weights: np.ndarray, spikes_in: np.ndarray) -> np.ndarray:
    """Exact integer sum of the weights of active inputs.

    Done through float64 BLAS: raws are < 2**16 and fan-in < 2**20, so every
    partial sum is an exact integer well inside the 53-bit mantissa.
    """
    return np.rint(np.asarray(spikes_in, np.float64) @ weights.T.astype(np.float64)).astype(np.int64)


def step_quant(layer: QuantizedLayer, fmt: FixedPointFormat, state: LayerState, spikes_in):
    spikes_in = np.asarray(spikes_in)
    if spikes_in.shape[-1] != layer.fan_in:
        raise ValueError(f"expected {layer.fan_in} input channels, got {spikes_in.shape[-1]}")
    lif = layer.lif
    syn = synaptic_sum(layer.weights, spikes_in)
    if lif.alpha > 0:
        _need_shift(lif.alpha_shift, "alpha")
        current = fmt.clip(shift_decay_raw(state.current, lif.alpha_shift, lif.pure_shift) + syn)
    else:
        current = syn
    u = state.membrane
    if lif.beta > 0:
        _need_shift(lif.beta_shift, "beta")
        u = shift_decay_raw(u, lif.beta_shift, lif.pure_shift)
    u = fmt.clip(u + current)
    spikes = (u > layer.threshold).astype(np.int64)
    if lif.reset_mode == "subtract":
        u = fmt.clip(u - layer.threshold * spikes)
    else:
        u = np.where(spikes > 0, 0, u)
    if lif.alpha <= 0:
        current = np.zeros_like(u)
    return LayerState(current, u), spikes


def _need_shift(k, name):
    if k is None:
        raise ConfigurationError(f"{name} decays but has no shift exponent")


# ---------------------------------------------------------------------------
# inference

def _is_quant(model) -> bool:
    return isinstance(model, QuantizedModel)


def run(model, spikes: np.ndarray, record: bool = False):
    """Run a (B, T, N) spike block; return output counts (B, out).

    With ``record=True`` also return per-layer spike rasters (B, T, n_l).
    """
    spikes = np.asarray(spikes)
    if spikes.ndim == 2:
        spikes = spikes[None]
    B, T, N = spikes.shape
    if N != model.input_size:
        raise ValueError(f"spike train has {N} channels, model expects {model.input_size}")
    quant = _is_quant(model)
    states = [
        zero_qstate(l.fan_out, (B,)) if quant else zero_state(l.fan_out, (B,))
        for l in model.layers
    ]
    counts = np.zeros((B, model.output_size), np.int64)
    rasters = [np.zeros((B, T, l.fan_out), np.uint8) for l in model.layers] if record else None
    for t in range(T):
        x = spikes[:, t, :]
        for li, layer in enumerate(model.layers):
            if quant:
                states[li], x = step_quant(layer, model.membrane_format, states[li], x)
            else:
                states[li], x = step_float(layer, states[li], x)
            if record:
                rasters[li][:, t, :] = x
        counts += x.astype(np.int64)
    return (counts, rasters) if record else counts


def decide(counts: np.ndarray) -> np.ndarray:
    """Spike-count argmax; np.argmax keeps the lowest index on ties."""
    return np.argmax(counts, axis=-1)


def infer(model, train) -> int:
    bits = getattr(train, "bits", train)
    return int(decide(run(model, bits))[0])


def infer_batch(model, spikes: np.ndarray) -> np.ndarray:
    return decide(run(model, spikes))
