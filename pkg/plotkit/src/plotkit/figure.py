"""Comparison and effective-velocity figures from exported artifacts.

Inputs are the CSV/JSON files written by the simulation CLI: compare CSVs
(``t,xi,md_tS,ghd_value,stderr``), curve CSVs (``w,xi,value,diverged``) and
the GHD summary JSON.  Rendering is a pure function of these files and the
spec; outputs are byte-deterministic for fixed inputs.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["SchemaError", "PanelSpec", "FigureSpec", "render_comparison", "render_veff"]

COMPARE_HEADER = ["t", "xi", "md_tS", "ghd_value", "stderr"]
CURVE_HEADER = ["w", "xi", "value", "diverged"]

#: fixed deterministic styling
MD_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"]
DPI = 150


class SchemaError(ValueError):
    """Input file missing or not in the expected artifact schema."""


def _read_csv(path, expected_header) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"missing input file: {path}")
    with path.open() as fh:
        first = fh.readline()
        if first.startswith("#"):  # config-hash comment line
            first = fh.readline()
        header = next(csv.reader([first]))
        if header != expected_header:
            raise SchemaError(f"{path}: header {header} != {expected_header}")
        data = [[float(c) for c in row] for row in csv.reader(fh) if row]
    return np.asarray(data, dtype=float).reshape(-1, len(expected_header))


def _read_summary(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"missing summary file: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON") from exc
    if "xi0" not in doc:
        raise SchemaError(f"{path}: not a GHD summary (no xi0)")
    return doc


@dataclass(frozen=True)
class PanelSpec:
    """One panel: MD overlay (optional) plus GHD curve and shock marker."""

    summary_json: str
    compare_csv: str | None = None
    curve_csv: str | None = None
    title: str = ""
    xlim: tuple[float, float] | None = None
    ylim: tuple[float, float] | None = None


@dataclass(frozen=True)
class FigureSpec:
    """Panel list, layout and output path for one rendered figure."""

    panels: tuple[PanelSpec, ...]
    output: str
    ncols: int = 2

    def __post_init__(self) -> None:
        if not self.panels:
            raise SchemaError("figure needs at least one panel")
        if self.ncols < 1:
            raise SchemaError("ncols must be positive")

    @classmethod
    def from_json(cls, path) -> "FigureSpec":
        doc = json.loads(Path(path).read_text())
        try:
            panels = tuple(
                PanelSpec(
                    summary_json=p["summary_json"],
                    compare_csv=p.get("compare_csv"),
                    curve_csv=p.get("curve_csv"),
                    title=p.get("title", ""),
                    xlim=tuple(p["xlim"]) if "xlim" in p else None,
                    ylim=tuple(p["ylim"]) if "ylim" in p else None,
                )
                for p in doc["panels"]
            )
            return cls(panels=panels, output=doc["output"],
                       ncols=int(doc.get("ncols", 2)))
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"invalid figure spec {path}: {exc}") from exc


def _save(fig, path) -> None:
    """Write the figure without volatile metadata (dates, versions)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".svg":
        with matplotlib.rc_context({"svg.hashsalt": "plotkit"}):
            fig.savefig(path, metadata={"Date": None})
    else:
        fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def _ghd_line(panel: PanelSpec, compare: np.ndarray | None):
    """GHD curve samples: prefer the exported curve CSV, else the
    interpolated ghd_value column of the compare CSV."""
    if panel.curve_csv is not None:
        curve = _read_csv(panel.curve_csv, CURVE_HEADER)
        return curve[:, 1], curve[:, 2]
    if compare is None or compare.size == 0:
        raise SchemaError("panel has neither a curve CSV nor compare rows")
    t0 = np.min(compare[:, 0])
    block = compare[compare[:, 0] == t0]
    order = np.argsort(block[:, 1])
    return block[order, 1], block[order, 3]


def _draw_panel(ax, panel: PanelSpec) -> None:
    summary = _read_summary(panel.summary_json)
    xi0 = float(summary["xi0"])
    compare = None
    if panel.compare_csv is not None:
        compare = _read_csv(panel.compare_csv, COMPARE_HEADER)
        for k, t in enumerate(sorted(set(compare[:, 0]))):
            block = compare[compare[:, 0] == t]
            order = np.argsort(block[:, 1])
            ax.plot(block[order, 1], block[order, 2],
                    color=MD_COLORS[k % len(MD_COLORS)], lw=0.9,
                    label=f"MD t={t:g}")
    xi, val = _ghd_line(panel, compare)
    keep = np.isfinite(val)
    ax.plot(xi[keep], val[keep], "k--", lw=1.4, label="GHD")
    ax.axvline(xi0, color="0.5", lw=0.8, ls=":", label=r"$\xi_0$")
    ax.set_xlabel(r"$\xi = x/t$")
    ax.set_ylabel(r"$t\,\tilde S$")
    if panel.title:
        ax.set_title(panel.title)
    if panel.xlim:
        ax.set_xlim(*panel.xlim)
    if panel.ylim:
        ax.set_ylim(*panel.ylim)
    ax.legend(loc="upper left", fontsize=8)


def render_comparison(spec: FigureSpec) -> Path:
    """Render the multi-panel MD-versus-GHD comparison figure."""
    n = len(spec.panels)
    ncols = min(spec.ncols, n)
    nrows = (n + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols, figsize=(5.0 * ncols, 3.6 * nrows),
                             dpi=DPI, squeeze=False)
    for ax in axes.flat[n:]:
        ax.set_visible(False)
    for ax, panel in zip(axes.flat, spec.panels):
        _draw_panel(ax, panel)
    fig.tight_layout()
    _save(fig, spec.output)
    return Path(spec.output)


def render_veff(summary_json, output) -> Path:
    """Plot the even extension of v_eff(w) with its minimum at w = 0."""
    summary = _read_summary(summary_json)
    if "veff" not in summary or "grid" not in summary:
        raise SchemaError(f"{summary_json}: summary carries no veff samples")
    veff = np.asarray(summary["veff"], dtype=float)
    grid = summary["grid"]
    m, w_max = int(grid["m"]), float(grid["w_max"])
    w = (np.arange(1, m + 1) - 0.5) * (w_max / m)
    if veff.size != m:
        raise SchemaError("veff length does not match the grid")
    fig, ax = plt.subplots(figsize=(5.0, 3.6), dpi=DPI)
    ww = np.concatenate([-w[::-1], w])
    vv = np.concatenate([veff[::-1], veff])
    ax.plot(ww, vv, color=MD_COLORS[0], lw=1.2)
    v0 = float(veff[0])
    ax.plot([0.0], [v0], "ko", ms=3)
    ax.annotate("minimum at w=0", xy=(0.0, v0), xytext=(0.1 * w_max, v0),
                fontsize=8, arrowprops={"arrowstyle": "->", "lw": 0.7})
    ax.set_xlabel(r"$w$")
    ax.set_ylabel(r"$v_{\mathrm{eff}}(w)$")
    ax.set_title(f"beta = {summary.get('beta', '?')}")
    fig.tight_layout()
    _save(fig, output)
    return Path(output)
