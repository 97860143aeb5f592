"""Post-training quantization into a shared-FPd (WB, MB, FPd) fixed-point model."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import DatasetSplit
from .encoder import EncodingConfig, encode_array
from .fixedpoint import FixedPointFormat, quantize_array
from .network import (ConfigurationError, NetworkModel, QuantizedLayer, QuantizedModel,
                      decide, run)


@dataclass(frozen=True, order=True)
class QuantConfig:
    weight_bits: int
    membrane_bits: int
    frac_bits: int

    def __post_init__(self):
        for name in ("weight_bits", "membrane_bits"):
            if not 2 <= getattr(self, name) <= 16:
                raise ConfigurationError(f"{name} must be in 2..16, got {getattr(self, name)}")
        if not 0 <= self.frac_bits <= min(self.weight_bits, self.membrane_bits):
            raise ConfigurationError(
                f"frac_bits {self.frac_bits} exceeds min(WB, MB) = "
                f"{min(self.weight_bits, self.membrane_bits)}"
            )

    @classmethod
    def parse(cls, text: str) -> "QuantConfig":
        try:
            wb, mb, fp = (int(p) for p in text.split(","))
        except ValueError:
            raise ConfigurationError(f"quant config must look like 'WB,MB,FPd', got {text!r}") from None
        return cls(wb, mb, fp)

    @property
    def weight_format(self) -> FixedPointFormat:
        return FixedPointFormat(self.weight_bits, self.frac_bits)

    @property
    def membrane_format(self) -> FixedPointFormat:
        return FixedPointFormat(self.membrane_bits, self.frac_bits)

    @property
    def bits_cost(self) -> int:
        return self.weight_bits + self.membrane_bits

    def __str__(self):
        return f"{self.weight_bits},{self.membrane_bits},{self.frac_bits}"


def quantize_model(model: NetworkModel, q: QuantConfig) -> QuantizedModel:
    wf, mf = q.weight_format, q.membrane_format
    layers = []
    saturated = 0
    for i, layer in enumerate(model.layers):
        lif = layer.lif
        for name in ("alpha", "beta"):
            if getattr(lif, name) > 0 and getattr(lif, name + "_shift") is None:
                raise ConfigurationError(f"layer {i}: {name} has no shift exponent; round decays first")
        raws = quantize_array(layer.weights, wf)
        scaled = np.abs(np.ldexp(np.asarray(layer.weights, np.float64), q.frac_bits))
        saturated += int(np.count_nonzero(scaled > wf.max_raw + 0.5))
        threshold = int(quantize_array(np.array([lif.threshold]), mf)[0])
        layers.append(QuantizedLayer(raws, threshold, lif))
    meta = dict(model.meta)
    meta.update({"quant": str(q), "saturated_weights": saturated})
    return QuantizedModel(layers, wf, mf, meta)


def dequantize_weights(qm: QuantizedModel) -> list[np.ndarray]:
    return [np.ldexp(l.weights.astype(np.float64), -qm.weight_format.frac_bits) for l in qm.layers]


def predict_split(model, test: DatasetSplit, enc: EncodingConfig, batch: int = 500) -> np.ndarray:
    """Predicted classes for every sample, each encoded under its source index."""
    preds = np.empty(len(test), np.int64)
    for lo in range(0, len(test), batch):
        idx = np.arange(lo, min(lo + batch, len(test)))
        spikes = encode_array(test.pixels[idx], test.index[idx], enc.timesteps, enc.seed)
        preds[idx] = decide(run(model, spikes))
    return preds


def eval_quantized(qm: QuantizedModel, test: DatasetSplit, enc: EncodingConfig) -> float:
    if len(test) == 0:
        raise ValueError("cannot evaluate on an empty split")
    return float(np.mean(predict_split(qm, test, enc) == test.labels))
