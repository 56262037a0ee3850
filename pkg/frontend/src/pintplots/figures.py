"""The five standard figures, rendered deterministically.

Figure kinds
------------
stddev-evolution       per-iteration spread curves over the time mesh
bias-comparison        final-iteration |bias| per interval, one line per run
score-curves           time-averaged scores against the stopping iteration
spread-stratification  final-iteration spread per interval, one line per run
fill-decay             dataset coverage radius against the iteration

All rendering is pure CSV to image: fixed figure geometry, no clock, no
randomness, so re-rendering the same inputs reproduces the same bytes.
Spread and score axes default to log scale; nonpositive values are
masked rather than clipped so a flat zero shows up as a gap, not a lie.
"""

from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from pintplots import io

KINDS = (
    "stddev-evolution",
    "bias-comparison",
    "score-curves",
    "spread-stratification",
    "fill-decay",
)

_SCORE_COLUMNS = ("ES", "VS", "MAD", "MSE")


@dataclass(frozen=True)
class PlotSpec:
    """Everything a render needs: kind, inputs, output, axis options."""

    kind: str
    inputs: tuple = ()
    output: str = "figure.png"
    log_y: bool = True
    labels: tuple = field(default=None)
    t0: float = None
    t_end: float = None
    lyapunov_time: float = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}, have {KINDS}")
        if not self.inputs:
            raise ValueError("at least one input CSV is required")


def _label(spec, idx, df):
    if spec.labels and idx < len(spec.labels):
        return spec.labels[idx]
    if len(df):
        return str(df["run_id"].iloc[0])
    return f"input {idx}"


def _x_of(spec, i_values):
    """Map interval indices to the time axis when the mesh span is known."""
    i = np.asarray(i_values, dtype=float)
    if spec.t0 is not None and spec.t_end is not None and i.size:
        n = i.max()
        return spec.t0 + (spec.t_end - spec.t0) * i / n
    return i


def _masked(values):
    v = np.asarray(values, dtype=float).copy()
    v[v <= 0] = np.nan
    return v


def _stddev_evolution(ax, spec, frames):
    for idx, df in enumerate(frames):
        label = _label(spec, idx, df)
        many = len(frames) > 1
        for k, grp in df.groupby("k"):
            grp = grp.sort_values("i")
            y = _masked(grp["stddev_max"]) if spec.log_y else grp["stddev_max"]
            ax.plot(
                _x_of(spec, grp["i"]), y,
                label=f"{label} k={k}" if many else f"k={k}",
            )
    ax.set_ylabel("max coordinate stddev")


def _bias_comparison(ax, spec, frames):
    for idx, df in enumerate(frames):
        if not len(df):
            continue
        final = df[df["k"] == df["k"].max()].sort_values("i")
        y = np.abs(final["Bias"].to_numpy(dtype=float))
        ax.plot(
            _x_of(spec, final["i"]),
            _masked(y) if spec.log_y else y,
            label=_label(spec, idx, df),
        )
    ax.set_ylabel("|bias|")


def _score_curves(ax, spec, frames):
    for idx, df in enumerate(frames):
        if not len(df):
            continue
        label = _label(spec, idx, df)
        per_k = df.groupby("k")[list(_SCORE_COLUMNS)].mean()
        for col in _SCORE_COLUMNS:
            y = per_k[col].to_numpy(dtype=float)
            ax.plot(
                per_k.index, _masked(y) if spec.log_y else y,
                label=f"{label} {col}" if len(frames) > 1 else col,
            )
    ax.set_xlabel("iteration")
    ax.set_ylabel("time-averaged score")


def _spread_stratification(ax, spec, frames):
    for idx, df in enumerate(frames):
        if not len(df):
            continue
        final = df[df["k"] == df["k"].max()].sort_values("i")
        y = final["stddev_max"].to_numpy(dtype=float)
        ax.plot(
            _x_of(spec, final["i"]),
            _masked(y) if spec.log_y else y,
            label=_label(spec, idx, df),
        )
    ax.set_ylabel("max coordinate stddev")


def _fill_decay(ax, spec, frames):
    for idx, df in enumerate(frames):
        label = _label(spec, idx, df)
        for alpha, grp in df.groupby("alpha"):
            grp = grp.sort_values("k")
            y = grp["fill_distance"].to_numpy(dtype=float)
            ax.plot(
                grp["k"], _masked(y) if spec.log_y else y,
                marker="o",
                label=(
                    f"{label} alpha={alpha}" if len(frames) > 1
                    else f"alpha={alpha}"
                ),
            )
    ax.set_xlabel("iteration")
    ax.set_ylabel("mean local fill distance")


_RENDERERS = {
    "stddev-evolution": _stddev_evolution,
    "bias-comparison": _bias_comparison,
    "score-curves": _score_curves,
    "spread-stratification": _spread_stratification,
    "fill-decay": _fill_decay,
}


def build_figure(spec):
    """Validate the inputs and return the assembled matplotlib figure."""
    if spec.kind == "fill-decay":
        frames = io.read_fill(spec.inputs)
    else:
        frames = io.read_metrics(spec.inputs)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    if spec.log_y:
        ax.set_yscale("log")
    _RENDERERS[spec.kind](ax, spec, frames)
    if not ax.get_xlabel():
        time_axis = spec.t0 is not None and spec.t_end is not None
        ax.set_xlabel("time" if time_axis else "interval")
    if spec.lyapunov_time:
        lam = float(spec.lyapunov_time)
        sec = ax.secondary_xaxis(
            "top", functions=(lambda t: t / lam, lambda t: t * lam)
        )
        sec.set_xlabel("Lyapunov times")
    handles, _ = ax.get_legend_handles_labels()
    if handles:
        ax.legend(fontsize=7, ncols=2 if len(handles) > 8 else 1)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    return fig


def render(spec):
    """Render to spec.output and return the path."""
    fig = build_figure(spec)
    try:
        fig.savefig(spec.output, dpi=150, metadata={"Software": None})
    finally:
        plt.close(fig)
    return spec.output
