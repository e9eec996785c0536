"""Figure rendering with byte-deterministic SVG output.

All figures go through :func:`save_svg`, which pins matplotlib's hash salt
and strips the creation date so that identical inputs produce identical
bytes.  Generalization curves are drawn as step functions on fixed [0, 1]
axes; training histories as accuracy-vs-epoch lines, one series per
algorithm/split combination.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_HASH_SALT = "privfit"

_CURVE_STYLES = {"sgd": dict(color="tab:blue"), "dpsgd": dict(color="tab:red")}
_HISTORY_STYLES = {
    "sgd_train": dict(color="tab:blue", linestyle="-"),
    "sgd_test": dict(color="tab:blue", linestyle="--"),
    "dpsgd_train": dict(color="tab:red", linestyle="-"),
    "dpsgd_test": dict(color="tab:red", linestyle="--"),
}


def curve_figure(alphas, betas_sgd, betas_dpsgd, sigma: float | None = None):
    """Alpha/beta generalization curves for both algorithms at one noise
    scale (omitted from the title when None).  Both axes span [0, 1]."""
    if len(alphas) == 0:
        raise ValueError("cannot plot an empty curve")
    if len(betas_sgd) != len(alphas) or len(betas_dpsgd) != len(alphas):
        raise ValueError("curve series must match the alpha grid")
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.step(alphas, betas_sgd, where="post", label="SGD", **_CURVE_STYLES["sgd"])
    ax.step(alphas, betas_dpsgd, where="post", label="DPSGD", **_CURVE_STYLES["dpsgd"])
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.0)
    ax.set_xlabel("alpha (differential-error bound)")
    ax.set_ylabel("beta (exceedance probability)")
    title = "(alpha, beta)-generalization"
    ax.set_title(title if sigma is None else f"{title}, sigma={sigma:g}")
    ax.legend(loc="upper right")
    ax.grid(True, alpha=0.3)
    return fig


def history_figure(epochs, accuracy_series: dict, sigma: float | None = None):
    """Classification accuracy against training epochs.

    ``accuracy_series`` maps series names (sgd_train, sgd_test, dpsgd_train,
    dpsgd_test) to accuracy values aligned with ``epochs``.
    """
    if len(epochs) == 0:
        raise ValueError("cannot plot an empty history")
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for name, values in accuracy_series.items():
        if len(values) != len(epochs):
            raise ValueError(f"series {name!r} does not match the epoch axis")
        style = _HISTORY_STYLES.get(name, {})
        ax.plot(epochs, values, label=name.replace("_", " "), **style)
    ax.set_ylim(0.0, 1.0)
    ax.set_xlabel("epochs")
    ax.set_ylabel("classification accuracy")
    title = "accuracy vs epochs"
    ax.set_title(title if sigma is None else f"{title}, sigma={sigma:g}")
    ax.legend(loc="lower right")
    ax.grid(True, alpha=0.3)
    return fig


def save_svg(fig, path: str | os.PathLike) -> None:
    """Write ``fig`` as a self-contained SVG with deterministic bytes."""
    with plt.rc_context({"svg.hashsalt": _HASH_SALT}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
