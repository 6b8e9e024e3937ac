"""Plots of the top-k and CDF tables of a generation task report, and of the
(alpha, beta) sweep grid."""

import os

import numpy as np
import pandas as pd
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from matplotlib.colors import TABLEAU_COLORS
COLORS = list(TABLEAU_COLORS.values())

from .utils import save_function, clean_field_name

def plot_topk(report_dir, field="", use_fig_name=True, fig_name="", save_fig=False, save_dir=""):
    """Side by side bars of the real and generated frequencies of the top-k real values."""

    df = pd.read_csv(os.path.join(report_dir, "topk.csv"), dtype={"value": str})
    x = np.arange(len(df))
    width = 0.4

    fig, ax = plt.subplots(figsize=(8, 5), constrained_layout=True)
    if use_fig_name:
        fig.suptitle(fig_name or f"Top-{len(df)} {clean_field_name(field)} Values", fontsize=14)
    ax.bar(x - width / 2, df["real_freq"], width, label="Real", color=COLORS[0])
    ax.bar(x + width / 2, df["generated_freq"], width, label="Generated", color=COLORS[1])
    ax.set_xticks(x)
    ax.set_xticklabels(df["value"], rotation=30, ha="right")
    ax.set_ylabel("Relative Frequency")
    ax.set_ylim([0, 1])
    ax.grid(axis="y")
    ax.legend()
    return save_function(save_fig, save_dir, "topk.png", fig)

def plot_cdf(report_dir, field="", use_fig_name=True, fig_name="", save_fig=False, save_dir=""):
    """Empirical CDFs of the real and generated values."""

    df = pd.read_csv(os.path.join(report_dir, "cdf.csv"), dtype={"value": str})
    fig, ax = plt.subplots(figsize=(8, 5), constrained_layout=True)
    if use_fig_name:
        fig.suptitle(fig_name or f"{clean_field_name(field)} CDF", fontsize=14)
    x = np.arange(len(df))
    ax.step(x, df["real_cdf"], where="post", label="Real", color=COLORS[0])
    ax.step(x, df["generated_cdf"], where="post", label="Generated", color=COLORS[1])
    ticks = x[::max(1, len(x) // 10)]
    ax.set_xticks(ticks)
    ax.set_xticklabels(df["value"].iloc[ticks], rotation=30, ha="right")
    ax.set_ylabel("CDF")
    ax.set_ylim([0, 1.05])
    ax.grid()
    ax.legend()
    return save_function(save_fig, save_dir, "cdf.png", fig)

def plot_sweep_grid(sweep_csv, use_fig_name=True, fig_name="", save_fig=False, save_dir=""):
    """Heatmap of the MSP accuracy for every (alpha, beta) pair."""

    grid = pd.read_csv(sweep_csv, index_col=0)
    fig, ax = plt.subplots(figsize=(6, 5), constrained_layout=True)
    if use_fig_name:
        fig.suptitle(fig_name or "MSP Accuracy", fontsize=14)
    im = ax.imshow(grid.values, cmap="viridis", vmin=0, vmax=1)
    for i in range(grid.shape[0]):
        for j in range(grid.shape[1]):
            ax.text(j, i, f"{grid.values[i, j]:.3f}", ha="center", va="center", color="w")
    ax.set_xticks(range(grid.shape[1]))
    ax.set_xticklabels(grid.columns)
    ax.set_yticks(range(grid.shape[0]))
    ax.set_yticklabels(grid.index)
    ax.set_xlabel("alpha")
    ax.set_ylabel("beta")
    fig.colorbar(im, ax=ax)
    return save_function(save_fig, save_dir, "sweep.png", fig)
