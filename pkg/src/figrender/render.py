"""Render figure families from long-format experiment CSV files.

Input rows have columns (experiment, scenario, strategy, m, seed, metric,
value, wall_time, params).  Rendering is a pure function of the CSV content
and the figure spec: styles are fixed per strategy, no timestamps are
embedded, and identical inputs produce identical image bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
import numpy as np
import pandas as pd

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

FAMILIES = ("fig1", "fig2", "fig5", "fig6", "fig7", "fig8", "fig9")

# fixed, deterministic styling per strategy name; unknown strategies get a
# stable style assigned by sorted order
_BASE_STYLES = {
    "C-MM+C-NN": {"color": "#d62728", "marker": "o", "linestyle": "-"},
    "E-MM+E-NN": {"color": "#1f77b4", "marker": "s", "linestyle": "--"},
    "T-ord+T-NN": {"color": "#2ca02c", "marker": "^", "linestyle": "-."},
    "T-ord+C-NN": {"color": "#9467bd", "marker": "v", "linestyle": ":"},
    "L-ord+C-NN": {"color": "#8c564b", "marker": "D", "linestyle": "--"},
    "R-ord+R-N": {"color": "#7f7f7f", "marker": "x", "linestyle": ":"},
    "exact": {"color": "black", "marker": "", "linestyle": "-"},
}
_FALLBACK_CYCLE = [
    {"color": c, "marker": mk, "linestyle": ls}
    for c, mk, ls in zip(
        ["#e377c2", "#17becf", "#bcbd22", "#ff7f0e"],
        ["P", "*", "h", "<"],
        ["-", "--", "-.", ":"],
    )
]

_SAVEFIG = {"dpi": 100, "metadata": {"Software": "figrender"}}


class SchemaMismatch(Exception):
    """The CSV input lacks a column, metric, or row subset the figure needs."""


@dataclass(frozen=True)
class FigureSpec:
    """What to render: family id, input CSV paths, output path, options."""

    family: str
    inputs: tuple
    out: str
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise SchemaMismatch(
                f"unknown figure family {self.family!r}; expected one of {FAMILIES}"
            )


def _styles(strategies) -> dict:
    out = {}
    fallback = 0
    for s in sorted(strategies):
        if s in _BASE_STYLES:
            out[s] = _BASE_STYLES[s]
        else:
            out[s] = _FALLBACK_CYCLE[fallback % len(_FALLBACK_CYCLE)]
            fallback += 1
    return out


def _load(paths) -> pd.DataFrame:
    frames = []
    for p in paths:
        df = pd.read_csv(p, dtype={"params": str}, keep_default_na=False)
        missing = {"experiment", "scenario", "strategy", "m", "seed", "metric",
                   "value"} - set(df.columns)
        if missing:
            raise SchemaMismatch(f"{p}: missing column(s) {sorted(missing)}")
        frames.append(df)
    df = pd.concat(frames, ignore_index=True)
    df = df[df["value"] != "failed"].copy()
    df["value"] = pd.to_numeric(df["value"], errors="coerce")
    if df["value"].isna().any():
        raise SchemaMismatch("non-numeric metric value in a non-failed row")
    return df


def _require_metric(df: pd.DataFrame, metric: str) -> pd.DataFrame:
    sub = df[df["metric"] == metric]
    if sub.empty:
        raise SchemaMismatch(f"no rows with metric {metric!r}")
    return sub


def _params_dict(s: str) -> dict:
    out = {}
    if not s:
        return out
    for part in s.split(";"):
        if "=" in part:
            k, v = part.split("=", 1)
            out[k] = v
    return out


def _finish(fig, out):
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, **_SAVEFIG)
    plt.close(fig)


def _curve_panel(ax, sub: pd.DataFrame, styles: dict, agg: str = "mean"):
    """Mean (or median) metric value vs m, one line per strategy."""
    for strat, grp in sub.groupby("strategy"):
        per_m = getattr(grp.groupby("m")["value"], agg)().sort_index()
        st = styles[strat]
        ax.plot(per_m.index, per_m.values, label=strat, **st)


def _render_kl_curves(spec: FigureSpec, df: pd.DataFrame, ncols_hint: int):
    sub = _require_metric(df, "kl")
    scenarios = sorted(sub["scenario"].unique())
    styles = _styles(sub["strategy"].unique())
    ncols = min(ncols_hint, len(scenarios))
    nrows = int(np.ceil(len(scenarios) / ncols))
    fig, axes = plt.subplots(
        nrows, ncols, figsize=(4.0 * ncols, 3.2 * nrows), squeeze=False
    )
    for k, scen in enumerate(scenarios):
        ax = axes[k // ncols][k % ncols]
        _curve_panel(ax, sub[sub["scenario"] == scen], styles)
        ax.set_yscale("log")
        ax.set_xlabel("m")
        ax.set_ylabel("KL divergence")
        ax.set_title(scen)
        ax.legend(fontsize=7)
    for k in range(len(scenarios), nrows * ncols):
        axes[k // ncols][k % ncols].axis("off")
    fig.tight_layout()
    _finish(fig, spec.out)


def _render_fig1(spec: FigureSpec, paths):
    """Ordering illustration: inputs, first-k ordered points numbered, and
    the conditioning set of the last numbered point boxed."""
    df = pd.read_csv(paths[0], keep_default_na=False)
    for col in ("x1", "x2", "order_pos"):
        if col not in df.columns:
            raise SchemaMismatch(f"ordering dump lacks column {col!r}")
    k = int(spec.options.get("count", 40))
    df = df.sort_values("order_pos")
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(df["x1"], df["x2"], s=6, color="#bbbbbb", zorder=1)
    head = df.head(k)
    for _, row in head.iterrows():
        ax.annotate(
            str(int(row["order_pos"]) + 1),
            (row["x1"], row["x2"]),
            fontsize=7,
            color="#d62728",
            zorder=3,
            ha="center",
            va="center",
        )
    if "neighbors" in df.columns and len(head) > 0:
        last = head.iloc[-1]
        neigh = [int(v) for v in str(last["neighbors"]).split(";") if v != ""]
        pos_map = df.set_index("order_pos")
        for p in neigh:
            if p in pos_map.index:
                r = pos_map.loc[p]
                ax.scatter(
                    [r["x1"]], [r["x2"]], s=90, facecolors="none",
                    edgecolors="#1f77b4", marker="s", zorder=2,
                )
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_aspect("equal")
    fig.tight_layout()
    _finish(fig, spec.out)


def _render_fig7(spec: FigureSpec, df: pd.DataFrame):
    """Estimation panels: KL at the estimates, plus RMSD of each estimated
    parameter relative to the exact-GP fit, per strategy and m."""
    kl = _require_metric(df, "kl")
    est_metrics = sorted(m for m in df["metric"].unique() if m.startswith("est_"))
    if not est_metrics:
        raise SchemaMismatch("no est_* metrics for the RMSD panel")
    strategies = sorted(df["strategy"].unique())
    if "exact" not in strategies:
        raise SchemaMismatch("RMSD panel needs 'exact' reference rows")
    styles = _styles(strategies)
    npanel = 1 + len(est_metrics)
    fig, axes = plt.subplots(1, npanel, figsize=(4.0 * npanel, 3.4), squeeze=False)
    ax = axes[0][0]
    _curve_panel(ax, kl, styles, agg="median")
    ax.set_yscale("log")
    ax.set_xlabel("m")
    ax.set_ylabel("median KL at estimates")
    ax.legend(fontsize=7)
    for j, met in enumerate(est_metrics):
        ax = axes[0][j + 1]
        sub = _require_metric(df, met)
        exact = sub[sub["strategy"] == "exact"].set_index("seed")["value"]
        for strat in strategies:
            if strat == "exact":
                continue
            grp = sub[sub["strategy"] == strat]
            rows = []
            for m, g in grp.groupby("m"):
                joined = g.set_index("seed")["value"].to_frame("v").join(
                    exact.to_frame("e"), how="inner"
                )
                if len(joined):
                    rows.append((m, float(np.sqrt(np.mean((joined.v - joined.e) ** 2)))))
            if rows:
                ms, vals = zip(*sorted(rows))
                ax.plot(ms, vals, label=strat, **styles[strat])
        ax.set_xlabel("m")
        ax.set_ylabel(f"RMSD vs exact: {met[4:]}")
        ax.legend(fontsize=7)
    fig.tight_layout()
    _finish(fig, spec.out)


def _render_fig8(spec: FigureSpec, df: pd.DataFrame):
    sub = _require_metric(df, "logscore")
    scenarios = sorted(sub["scenario"].unique())
    styles = _styles(sub["strategy"].unique())
    fig, axes = plt.subplots(
        1, len(scenarios), figsize=(4.0 * len(scenarios), 3.4), squeeze=False
    )
    for k, scen in enumerate(scenarios):
        ax = axes[0][k]
        grp = sub[sub["scenario"] == scen]
        # shift so a log-scale axis is usable even with negative scores
        floor = grp["value"].min()
        shift = -floor + 1e-3 if floor <= 0 else 0.0
        for strat, g in grp.groupby("strategy"):
            per_m = g.groupby("m")["value"].mean().sort_index()
            ax.plot(per_m.index, per_m.values + shift, label=strat, **styles[strat])
        ax.set_yscale("log")
        ax.set_xlabel("m")
        ax.set_ylabel("mean log score" + (" (shifted)" if shift else ""))
        ax.set_title(scen)
        ax.legend(fontsize=7)
    fig.tight_layout()
    _finish(fig, spec.out)


def _render_fig9(spec: FigureSpec, df: pd.DataFrame):
    metrics = sorted(m for m in df["metric"].unique() if m.startswith("marginal_density:"))
    if not metrics:
        raise SchemaMismatch("no marginal_density:* metrics")
    fig, axes = plt.subplots(
        1, len(metrics), figsize=(4.2 * len(metrics), 3.4), squeeze=False
    )
    for k, met in enumerate(metrics):
        ax = axes[0][k]
        sub = df[df["metric"] == met].copy()
        pd_params = sub["params"].map(_params_dict)
        sub["x"] = pd_params.map(lambda d: float(d.get("x", "nan")))
        sub["path"] = pd_params.map(lambda d: d.get("path", ""))
        labels = sorted(
            sub.groupby(["strategy", "m", "path"]).groups.keys()
        )
        styles = _styles({f"{s}|m={m}|{p}" for s, m, p in labels})
        for strat, m, path in labels:
            g = sub[(sub["strategy"] == strat) & (sub["m"] == m) & (sub["path"] == path)]
            g = g.sort_values("x")
            label = strat if strat == "exact" else f"{strat} m={m}" + (
                f" ({path})" if path else ""
            )
            key = f"{strat}|m={m}|{path}"
            st = dict(styles[key])
            st["marker"] = ""
            if strat == "exact":
                st = {"color": "black", "linestyle": "-", "marker": ""}
            ax.plot(g["x"], g["value"], label=label, **st)
        ax.set_xlabel(met.split(":", 1)[1])
        ax.set_ylabel("posterior density")
        ax.legend(fontsize=6)
    fig.tight_layout()
    _finish(fig, spec.out)


def render(spec: FigureSpec) -> str:
    """Render one figure family to ``spec.out``; returns the output path."""
    paths = list(spec.inputs)
    if not paths:
        raise SchemaMismatch("at least one input CSV is required")
    if spec.family == "fig1":
        _render_fig1(spec, paths)
        return spec.out
    df = _load(paths)
    if df.empty:
        raise SchemaMismatch("input CSV contains no usable rows")
    if spec.family == "fig2":
        _render_kl_curves(spec, df, ncols_hint=2)
    elif spec.family == "fig5":
        _render_kl_curves(spec, df, ncols_hint=4)
    elif spec.family == "fig6":
        _render_kl_curves(spec, df, ncols_hint=1)
    elif spec.family == "fig7":
        _render_fig7(spec, df)
    elif spec.family == "fig8":
        _render_fig8(spec, df)
    elif spec.family == "fig9":
        _render_fig9(spec, df)
    return spec.out
