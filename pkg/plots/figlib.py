"""Figure rendering for bifurcation-lab CSV/JSON outputs.

Three figure styles, all reading the files the simulator CLI writes:

* fig2-overlay : final-state density Q(y) from several analytic profile CSVs
                 on one axis, drawn dashed / thin / thick in input order.
* hist-overlay : weighted histogram of simulation records with the matching
                 analytic Q(y) curve on top.
* born-bars    : measured plus-channel frequency with its interval, one bar
                 per summary JSON, against the prepared state weight.

Inputs are never modified; outputs are written to a temporary sibling and
renamed into place, with fixed figure geometry and metadata so a rerun is
byte-identical.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

PROFILE_COLUMNS = ["y", "q", "Q", "Q_plus", "Q_minus"]
RECORDS_COLUMNS = ["y", "outcome", "weight", "p_plus", "log_w"]

_FIGSIZE = (6.4, 4.0)
_DPI = 150
_METADATA = {"Software": "bifurcation-lab plots"}


class SchemaError(ValueError):
    """An input file does not match the expected CSV/JSON schema."""


class Style(Enum):
    FIG2_OVERLAY = "fig2-overlay"
    HIST_OVERLAY = "hist-overlay"
    BORN_BARS = "born-bars"


@dataclass(frozen=True)
class FigureSpec:
    input_paths: list[str]
    output_path: str
    style: Style
    labels: list[str] = field(default_factory=list)


def _read_csv(path: str | Path, columns: list[str]) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"{path}: no such file")
    lines = path.read_text().strip().splitlines()
    if not lines or lines[0].split(",") != columns:
        raise SchemaError(f"{path}: expected header {','.join(columns)}")
    rows = [line.split(",") for line in lines[1:]]
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    if any(len(row) != len(columns) for row in rows):
        raise SchemaError(f"{path}: ragged rows")
    try:
        data = np.array([[float(v) for v in row] for row in rows])
    except ValueError as exc:
        raise SchemaError(f"{path}: non-numeric cell ({exc})") from None
    return {name: data[:, i] for i, name in enumerate(columns)}


def load_profile(path: str | Path) -> dict[str, np.ndarray]:
    """Analytic density profile: y,q,Q,Q_plus,Q_minus."""
    return _read_csv(path, PROFILE_COLUMNS)


def load_records(path: str | Path) -> dict[str, np.ndarray]:
    """Simulation records: y,outcome,weight,p_plus,log_w."""
    return _read_csv(path, RECORDS_COLUMNS)


def load_summary(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"{path}: no such file")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    for key in ("born_plus", "born_ci", "config_echo"):
        if key not in payload:
            raise SchemaError(f"{path}: summary JSON missing '{key}'")
    return payload


def _save(fig, output_path: str) -> None:
    out = Path(output_path)
    tmp = out.with_name(out.name + ".tmp")
    fig.savefig(tmp, format=out.suffix.lstrip(".") or "png", metadata=_METADATA)
    plt.close(fig)
    os.replace(tmp, out)


def _labels_for(spec: FigureSpec, default: list[str]) -> list[str]:
    if spec.labels and len(spec.labels) != len(spec.input_paths):
        raise SchemaError("need exactly one label per input")
    return spec.labels or default


def _new_axes():
    fig, ax = plt.subplots(figsize=_FIGSIZE, dpi=_DPI)
    ax.set_xlabel("y")
    return fig, ax


def render_fig2_overlay(spec: FigureSpec) -> None:
    if not spec.input_paths:
        raise SchemaError("fig2-overlay needs at least one profile CSV")
    profiles = [load_profile(p) for p in spec.input_paths]
    labels = _labels_for(spec, [Path(p).stem for p in spec.input_paths])
    # dashed, then thin, then thick; later inputs stay thick
    styles = [
        {"linestyle": "--", "linewidth": 1.2},
        {"linestyle": "-", "linewidth": 1.0},
        {"linestyle": "-", "linewidth": 2.4},
    ]
    fig, ax = _new_axes()
    for i, (profile, label) in enumerate(zip(profiles, labels)):
        kw = styles[min(i, len(styles) - 1)]
        ax.plot(profile["y"], profile["Q"], color="black", label=label, **kw)
    ax.set_ylabel("Q(y)")
    ax.legend(frameon=False)
    _save(fig, spec.output_path)


def render_hist_overlay(spec: FigureSpec) -> None:
    if len(spec.input_paths) != 2:
        raise SchemaError("hist-overlay needs a records CSV and a profile CSV")
    records = load_records(spec.input_paths[0])
    profile = load_profile(spec.input_paths[1])
    labels = _labels_for(spec, ["simulation", "analytic"])
    lo, hi = float(profile["y"][0]), float(profile["y"][-1])
    fig, ax = _new_axes()
    ax.hist(
        records["y"],
        bins=60,
        range=(lo, hi),
        weights=records["weight"],
        density=True,
        color="0.75",
        label=labels[0],
    )
    ax.plot(profile["y"], profile["Q"], color="black", linewidth=1.6, label=labels[1])
    ax.set_ylabel("density")
    ax.legend(frameon=False)
    _save(fig, spec.output_path)


def render_born_bars(spec: FigureSpec) -> None:
    if not spec.input_paths:
        raise SchemaError("born-bars needs at least one summary JSON")
    summaries = [load_summary(p) for p in spec.input_paths]
    prepared = [s["config_echo"]["psi_plus_sq"] for s in summaries]
    measured = [s["born_plus"] for s in summaries]
    intervals = [s["born_ci"] for s in summaries]
    labels = _labels_for(spec, [f"{p:g}" for p in prepared])
    x = np.arange(len(summaries))
    fig, ax = plt.subplots(figsize=_FIGSIZE, dpi=_DPI)
    ax.bar(x, measured, yerr=intervals, capsize=4, color="0.8", edgecolor="black")
    ax.scatter(x, prepared, marker="_", s=600, color="black", zorder=3,
               label="prepared weight")
    ax.set_xticks(x, labels)
    ax.set_xlabel("prepared |psi_plus|^2")
    ax.set_ylabel("plus-channel frequency")
    ax.set_ylim(0.0, 1.05)
    ax.legend(frameon=False)
    _save(fig, spec.output_path)


_RENDERERS = {
    Style.FIG2_OVERLAY: render_fig2_overlay,
    Style.HIST_OVERLAY: render_hist_overlay,
    Style.BORN_BARS: render_born_bars,
}


def render(spec: FigureSpec) -> None:
    """Render one figure; raises SchemaError before any output is written."""
    _RENDERERS[spec.style](spec)
