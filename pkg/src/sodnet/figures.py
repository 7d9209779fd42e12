"""Matplotlib figures rendered next to each command's text outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_encode_figure(signal: np.ndarray, recon: np.ndarray, stream, path):
    """Signal vs reconstruction on top, event raster below."""
    signal = np.atleast_2d(np.asarray(signal, dtype=np.float64).T).T
    recon = np.atleast_2d(np.asarray(recon, dtype=np.float64).T).T
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(8, 5), sharex=True,
                                   gridspec_kw={"height_ratios": [3, 1]})
    t = np.arange(signal.shape[0])
    for d in range(min(signal.shape[1], 4)):
        ax0.plot(t, signal[:, d], lw=1.2, label=f"signal[{d}]" if signal.shape[1] > 1 else "signal")
        ax0.step(t, recon[:, d], lw=1.0, where="post", alpha=0.8,
                 label=f"reconstruction[{d}]" if signal.shape[1] > 1 else "reconstruction")
    ax0.legend(loc="best", fontsize=8)
    ax0.set_ylabel("value")
    if stream.events:
        steps = [s for s, _ in stream.events]
        neurons = [k for _, k in stream.events]
        ax1.scatter(steps, neurons, marker="|", s=80, color="k")
    ax1.set_yticks(range(stream.n_neurons))
    ax1.set_ylim(-0.5, stream.n_neurons - 0.5)
    ax1.set_xlabel("step")
    ax1.set_ylabel("neuron")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_training_curves(history: list[dict], path):
    """Loss and accuracy per epoch for each split."""
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9, 3.5))
    for split in ("train", "val"):
        records = [r for r in history if r["split"] == split]
        if not records:
            continue
        epochs = [r["epoch"] for r in records]
        ax0.plot(epochs, [r["loss"] for r in records], marker="o", ms=3, label=split)
        ax1.plot(epochs, [r["accuracy"] for r in records], marker="o", ms=3, label=split)
    ax0.set_xlabel("epoch")
    ax0.set_ylabel("loss")
    ax0.legend()
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("accuracy")
    ax1.set_ylim(0, 1.02)
    ax1.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_firing_rate_curves(history: list[dict], path):
    """Per-layer mean firing rate (Hz) per training epoch."""
    records = [r for r in history if r["split"] == "train"]
    if not records:
        records = history
    fig, ax = plt.subplots(figsize=(6, 3.5))
    layers = sorted(records[0].get("firing_rate_hz", {}))
    epochs = [r["epoch"] for r in records]
    for layer in layers:
        ax.plot(epochs, [r["firing_rate_hz"][layer] for r in records], marker="o", ms=3,
                label=layer)
    ax.plot(epochs, [r["mean_firing_rate_hz"] for r in records], color="k", lw=2,
            label="mean")
    ax.set_xlabel("epoch")
    ax.set_ylabel("firing rate (Hz)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_firing_rate_bars(rates: dict[str, float], mean_rate: float, path):
    fig, ax = plt.subplots(figsize=(5, 3))
    names = sorted(rates)
    ax.bar(names, [rates[n] for n in names], color="tab:blue")
    ax.axhline(mean_rate, color="k", ls="--", lw=1, label=f"mean {mean_rate:.2f} Hz")
    ax.set_ylabel("firing rate (Hz)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_gradcheck_figure(report, path):
    fig, ax = plt.subplots(figsize=(6, 3))
    names = sorted(report.per_class)
    vals = [max(report.per_class[n], 1e-16) for n in names]
    ax.barh(names, vals, color="tab:green" if report.passed else "tab:red")
    ax.axvline(report.tolerance, color="k", ls="--", lw=1, label="tolerance")
    ax.set_xscale("log")
    ax.set_xlabel("worst relative error")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
