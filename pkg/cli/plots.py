"""
Figures rendered from the CSV/JSONL outputs
"""

from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from trainer.metrics import metrics_history  # noqa: E402

PathLike = Union[str, Path]


def plot_posterior(frame: pd.DataFrame, path: PathLike) -> Path:
    """
    One panel per observation x: oracle density against the learned q histogram

    Args:
        frame: long-format rows with columns x, series, z, density
        path: output image path
    """
    path = Path(path)
    observations = sorted(frame["x"].unique())
    fig, axes = plt.subplots(1, len(observations), figsize=(3.2 * len(observations), 3.2), squeeze=False)
    for ax, x in zip(axes[0], observations):
        panel = frame[frame["x"] == x]
        for series, color in (("oracle", "#1f77b4"), ("learned", "#ff7f0e")):
            rows = panel[panel["series"] == series]
            if len(rows):
                ax.plot(rows["z"].values, rows["density"].values, color=color, linewidth=2, label=series)
        ax.set_title(f"x = {x:g}")
        ax.set_xlabel("z")
        ax.grid(True, alpha=0.3)
    axes[0][0].set_ylabel("density")
    axes[0][0].legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_metrics(rows: Iterable[Mapping], keys: Sequence[str], path: PathLike) -> Path:
    """Metric curves over training steps; keys are flattened names such as 'oracle.kl_mean'"""
    path = Path(path)
    history = metrics_history(list(rows))
    keys = [k for k in keys if k in history.columns]
    fig, ax = plt.subplots(figsize=(8, 4))
    for key in keys:
        ax.plot(history["step"].values, history[key].astype(float).values, marker="o", linewidth=2, label=key)
    ax.set_xlabel("step")
    ax.grid(True, alpha=0.3)
    if keys:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path
