"""SVG figures of closed-loop traces and of the fast-switching experiment."""

import re

import matplotlib
import numpy as np
from matplotlib.figure import Figure

# fixed ids and no timestamp: the same data gives a byte-identical SVG
SVG_RC = {"svg.hashsalt": "slsq", "svg.fonttype": "none"}
SVG_METADATA = {"Date": None}
_METADATA_BLOCK = re.compile(r"\s*<metadata>.*?</metadata>", re.DOTALL)


def _save(fig: Figure, path: str) -> None:
    with matplotlib.rc_context(SVG_RC):
        fig.savefig(path, format="svg", metadata=SVG_METADATA, bbox_inches="tight")


def normalize_svg(text: str) -> str:
    """Drop the <metadata> block, which names the matplotlib version."""
    return _METADATA_BLOCK.sub("", text)


def plot_trace(trace, path: str, title: str = None) -> None:
    """||x(t)|| with the radii r_k, u(t), and sigma / sigma_hat, stacked."""
    s, b = trace.samples, trace.blocks
    fig = Figure(figsize=(8, 8))
    ax = fig.subplots(3, 1, sharex=True)

    xn = np.linalg.norm(s["x"], axis=1)
    ax[0].semilogy(s["t"], np.maximum(xn, 1e-300), "b-", linewidth=1, label="||x(t)||")
    ok = np.isfinite(b["r_k"])
    ax[0].step(b["t"][ok], b["r_k"][ok], "r--", where="post", linewidth=1, label="r_k")
    ax[0].set_ylabel("state norm")
    ax[0].grid(True, alpha=0.3)
    ax[0].legend()

    for i in range(s["u"].shape[1]):
        ax[1].plot(s["t"], s["u"][:, i], linewidth=1, label=f"u{i + 1}(t)")
    ax[1].set_ylabel("input")
    ax[1].grid(True, alpha=0.3)
    ax[1].legend()

    ax[2].step(s["t"], s["sigma"], "k-", where="post", linewidth=1, label="sigma")
    ax[2].step(s["t"], s["sigma_hat"], "g:", where="post", linewidth=1, label="sigma_hat")
    ax[2].set_ylabel("mode")
    ax[2].set_xlabel("t")
    ax[2].grid(True, alpha=0.3)
    ax[2].legend()

    if title:
        ax[0].set_title(title)
    _save(fig, path)


def plot_prop1(table: np.ndarray, path: str) -> None:
    """sup |int B_sigma_n u| versus n, log-log, with the T/(2n) reference."""
    fig = Figure(figsize=(6, 4))
    ax = fig.subplots()
    ax.loglog(table["n"], np.maximum(table["sup_integral"], 1e-300), "bo-", label="sup over inputs")
    ax.loglog(table["n"], table["linear_reference"], "r--", label="T/(2n)")
    ax.set_xlabel("n")
    ax.set_ylabel("|integral|")
    ax.grid(True, alpha=0.3)
    ax.legend()
    _save(fig, path)
