"""Surrogate-gradient BPTT training of the float model.

The backward pass is written out by hand over the unrolled T-step window.
Decay factors are frozen at their power-of-two values; only weights and the
per-layer thresholds are optimized (Adam, cross-entropy on the softmax of
output spike counts).
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .dataset import DatasetSplit, shuffled_batches
from .encoder import encode_array, epoch_seed
from .network import NetworkModel, decide, run

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    def __init__(self, epoch, message):
        super().__init__(f"epoch {epoch}: {message}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainerConfig:
    epochs: int = 25
    batch_size: int = 64
    learning_rate: float = 5e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    surrogate_slope: float = 25.0
    seed: int = 0
    timesteps: int = 10
    detach_reset: bool = True
    train_threshold: bool = True
    eval_subset: int | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1 or self.timesteps < 1:
            raise ValueError("batch_size and timesteps must be >= 1")
        if self.learning_rate < 0 or self.adam_eps <= 0 or self.surrogate_slope <= 0:
            raise ValueError("rates must be positive")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")


@dataclass
class TrainReport:
    epoch_loss: list = field(default_factory=list)
    epoch_train_accuracy: list = field(default_factory=list)
    test_accuracy: float | None = None
    wall_time: float = 0.0

    def as_dict(self):
        return asdict(self)


def surrogate_grad(x, slope: float = 25.0):
    """Derivative of the fast-sigmoid spike surrogate, ``1 / (1 + slope*|x|)**2``."""
    return 1.0 / (1.0 + slope * np.abs(x)) ** 2


def relaxed_spike(x, slope: float = 25.0):
    """Smooth stand-in for the step whose derivative is exactly :func:`surrogate_grad`."""
    return 0.5 + x / (1.0 + slope * np.abs(x))


# ---------------------------------------------------------------------------
# forward / backward

@dataclass
class _LayerTape:
    x: np.ndarray  # (B, T, fan_in) input spikes
    v: np.ndarray  # (B, T, fan_out) membrane before reset
    s: np.ndarray  # (B, T, fan_out) output spikes (or relaxed values)


def forward(model: NetworkModel, spikes: np.ndarray, slope: float, relaxed=False, dtype=np.float32):
    """Unrolled forward pass; returns (counts, tapes)."""
    x = spikes.astype(dtype, copy=False)
    B, T, _ = x.shape
    tapes = []
    for layer in model.layers:
        lif = layer.lif
        w = layer.weights.astype(dtype, copy=False)
        syn = (x.reshape(B * T, -1) @ w.T).reshape(B, T, -1)
        theta = dtype(lif.threshold)
        cur = np.zeros((B, layer.fan_out), dtype)
        u = np.zeros((B, layer.fan_out), dtype)
        v_all = np.empty_like(syn)
        s_all = np.empty_like(syn)
        for t in range(T):
            cur = lif.alpha * cur + syn[:, t] if lif.alpha > 0 else syn[:, t]
            v = lif.leak * u + cur
            s = relaxed_spike(v - theta, slope) if relaxed else (v > theta).astype(dtype)
            u = v - theta * s if lif.reset_mode == "subtract" else v * (1 - s)
            v_all[:, t] = v
            s_all[:, t] = s
        tapes.append(_LayerTape(x, v_all, s_all))
        x = s_all
    return x.sum(axis=1), tapes


def softmax_xent(counts: np.ndarray, labels: np.ndarray):
    """Summed cross-entropy over the batch and its gradient w.r.t. counts."""
    z = counts - counts.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    idx = np.arange(len(labels))
    loss = -np.log(np.maximum(p[idx, labels], 1e-300)).sum()
    g = p
    g[idx, labels] -= 1.0
    return float(loss), g


def backward(model: NetworkModel, tapes, g_counts: np.ndarray, slope: float,
             relaxed=False, detach_reset=False):
    """Gradients w.r.t. each layer's weights and threshold.

    ``g_counts`` is dL/d(output counts), shape (B, out).
    """
    T = tapes[-1].s.shape[1]
    g_s = np.repeat(g_counts[:, None, :], T, axis=1).astype(tapes[-1].s.dtype)
    grads = [None] * len(model.layers)
    for li in reversed(range(len(model.layers))):
        layer, tape = model.layers[li], tapes[li]
        lif = layer.lif
        theta = tape.v.dtype.type(lif.threshold)
        subtract = lif.reset_mode == "subtract"
        B = g_s.shape[0]
        g_syn = np.empty_like(tape.v)
        g_theta = 0.0
        g_v_next = np.zeros((B, layer.fan_out), tape.v.dtype)
        g_cur_next = np.zeros_like(g_v_next)
        for t in reversed(range(T)):
            v, s = tape.v[:, t], tape.s[:, t]
            sg = surrogate_grad(v - theta, slope)
            g_u = lif.leak * g_v_next
            # U = V - theta*s  |  U = V*(1-s)
            if subtract:
                du_ds, du_dv = -theta, 1.0
                g_theta -= float((g_u * s).sum())
            else:
                du_ds, du_dv = -v, 1.0 - s
            gs_total = g_s[:, t] + (0.0 if detach_reset else g_u * du_ds)
            g_v = g_u * du_dv + gs_total * sg
            g_theta -= float((gs_total * sg).sum())
            g_cur = g_v + (lif.alpha * g_cur_next if lif.alpha > 0 else 0.0)
            g_syn[:, t] = g_cur
            g_v_next, g_cur_next = g_v, g_cur
        flat_g = g_syn.reshape(B * T, -1)
        flat_x = tape.x.reshape(B * T, -1)
        g_w = flat_g.T @ flat_x
        grads[li] = (g_w, g_theta)
        if li > 0:
            g_s = (flat_g @ layer.weights.astype(flat_g.dtype)).reshape(B, T, -1)
    return grads


def loss_and_grads(model, spikes, labels, slope=25.0, relaxed=False, detach_reset=False,
                   dtype=np.float32, reduce="mean"):
    counts, tapes = forward(model, spikes, slope, relaxed, dtype)
    loss, g = softmax_xent(counts.astype(np.float64), labels)
    if reduce == "mean":
        loss, g = loss / len(labels), g / len(labels)
    grads = backward(model, tapes, g.astype(dtype), slope, relaxed, detach_reset)
    return loss, grads, counts


# ---------------------------------------------------------------------------
# optimizer

class Adam:
    """Bias-corrected Adam over a flat list of arrays."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)


# ---------------------------------------------------------------------------
# training loop

def evaluate_float(model: NetworkModel, split: DatasetSplit, timesteps: int, seed: int,
                   batch: int = 500) -> float:
    if len(split) == 0:
        return 0.0
    correct = 0
    for lo in range(0, len(split), batch):
        idx = np.arange(lo, min(lo + batch, len(split)))
        spikes = encode_array(split.pixels[idx], split.index[idx], timesteps, seed)
        correct += int((decide(run(model, spikes)) == split.labels[idx]).sum())
    return correct / len(split)


def _check_decays(model):
    for i, layer in enumerate(model.layers):
        lif = layer.lif
        for name in ("alpha", "beta"):
            if getattr(lif, name) > 0 and getattr(lif, name + "_shift") is None:
                raise ValueError(
                    f"layer {i}: {name} is not a power-of-two decay; run round_decays_to_pow2 first"
                )


def train(model0: NetworkModel, train_split: DatasetSplit, test_split: DatasetSplit | None,
          cfg: TrainerConfig, progress=None):
    """Train a copy of ``model0``; returns (model, report)."""
    _check_decays(model0)
    t0 = time.perf_counter()
    model = model0.copy()
    for layer in model.layers:
        layer.weights = layer.weights.astype(np.float32)
    thresholds = [np.array([l.lif.threshold], np.float32) for l in model.layers]
    params = [l.weights for l in model.layers]
    if cfg.train_threshold:
        params += thresholds
    opt = Adam(params, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    report = TrainReport()
    rng_seq = np.random.SeedSequence(cfg.seed)
    shuffle_seeds = rng_seq.generate_state(cfg.epochs, np.uint64)

    for epoch in range(cfg.epochs):
        enc_seed = epoch_seed(cfg.seed, epoch)
        tot_loss, correct = 0.0, 0
        for idx in shuffled_batches(train_split, cfg.batch_size, int(shuffle_seeds[epoch])):
            spikes = encode_array(train_split.pixels[idx], train_split.index[idx], cfg.timesteps, enc_seed)
            labels = train_split.labels[idx]
            loss, grads, counts = loss_and_grads(
                model, spikes, labels, cfg.surrogate_slope, detach_reset=cfg.detach_reset
            )
            if not math.isfinite(loss):
                raise TrainingError(epoch, f"loss became non-finite ({loss})")
            tot_loss += loss * len(idx)
            correct += int((decide(counts) == labels).sum())
            g = [gw for gw, _ in grads]
            if cfg.train_threshold:
                g += [np.array([gt], np.float32) for _, gt in grads]
            opt.step(params, g)
            if cfg.train_threshold:
                _sync_thresholds(model, thresholds)
        report.epoch_loss.append(tot_loss / len(train_split))
        report.epoch_train_accuracy.append(correct / len(train_split))
        log.info("epoch %d loss %.4f train acc %.4f", epoch, report.epoch_loss[-1],
                 report.epoch_train_accuracy[-1])
        if progress:
            progress(epoch, report)

    if test_split is not None and len(test_split):
        report.test_accuracy = evaluate_float(model, test_split, cfg.timesteps, cfg.seed)
    report.wall_time = time.perf_counter() - t0
    model.meta.update({"trainer": asdict(cfg), "arch": model.arch, "seed": cfg.seed})
    return model, report


def _sync_thresholds(model, thresholds):
    for layer, th in zip(model.layers, thresholds):
        # keep the threshold strictly positive
        th[0] = max(float(th[0]), 1e-3)
        layer.lif = replace(layer.lif, threshold=float(th[0]))


def grad_check(model: NetworkModel, spikes: np.ndarray, labels: np.ndarray, slope: float = 25.0,
               h: float = 1e-4, n_samples: int = 40, seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    Runs on the relaxed forward (spike replaced by its smooth surrogate) in
    float64, over a seeded sample of weight entries plus every threshold.
    """
    model = model.copy()
    for layer in model.layers:
        layer.weights = layer.weights.astype(np.float64)

    def loss_of(m):
        return loss_and_grads(m, spikes, labels, slope, relaxed=True, dtype=np.float64)[0]

    _, grads, _ = loss_and_grads(model, spikes, labels, slope, relaxed=True, dtype=np.float64)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for li, layer in enumerate(model.layers):
        for _ in range(n_samples):
            i, j = rng.integers(layer.fan_out), rng.integers(layer.fan_in)
            orig = layer.weights[i, j]
            layer.weights[i, j] = orig + h
            up = loss_of(model)
            layer.weights[i, j] = orig - h
            down = loss_of(model)
            layer.weights[i, j] = orig
            worst = max(worst, _rel_err(grads[li][0][i, j], (up - down) / (2 * h)))
        lif = layer.lif
        layer.lif = replace(lif, threshold=lif.threshold + h)
        up = loss_of(model)
        layer.lif = replace(lif, threshold=lif.threshold - h)
        down = loss_of(model)
        layer.lif = lif
        worst = max(worst, _rel_err(grads[li][1], (up - down) / (2 * h)))
    return worst


def _rel_err(a, n):
    return abs(a - n) / max(abs(a), abs(n), 1e-8)
