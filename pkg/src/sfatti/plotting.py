"""Report figures, rendered headless to PNG next to the text outputs."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .dse import evaluated, pareto_front  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # fixed metadata keeps reruns byte-stable
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_sweep(records, floor: float, path) -> Path:
    """Accuracy against latency and against WB+MB, Pareto points highlighted."""
    ok = evaluated(records)
    front = {r["index"] for r in pareto_front(records)}
    fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharey=True)
    for ax, key, label in ((axes[0], "delta_t_ns", "latency per image (us)"),
                           (axes[1], "bits", "WB + MB (bits)")):
        xs = [(r["delta_t_ns"] / 1000.0 if key == "delta_t_ns" else r["wb"] + r["mb"]) for r in ok]
        ys = [100 * r["accuracy"] for r in ok]
        colors = ["tab:red" if r["index"] in front else "tab:gray" for r in ok]
        ax.scatter(xs, ys, c=colors, s=18)
        ax.axhline(100 * floor, ls="--", lw=1, color="k")
        ax.set_xlabel(label)
        ax.grid(alpha=0.3)
    axes[0].set_ylabel("test accuracy (%)")
    axes[0].set_title("sweep (red = Pareto front, dashed = floor)", fontsize=9, loc="left")
    fig.tight_layout()
    return _save(fig, path)


def plot_training(report, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    epochs = range(1, len(report.epoch_loss) + 1)
    ax.plot(epochs, report.epoch_loss, marker="o", ms=3, label="loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("cross-entropy")
    ax2 = ax.twinx()
    ax2.plot(epochs, [100 * a for a in report.epoch_train_accuracy], color="tab:orange",
             marker="s", ms=3, label="train acc")
    ax2.set_ylabel("train accuracy (%)")
    fig.tight_layout()
    return _save(fig, path)
