"""Offline figure generation from exported CSV/JSON simulation artifacts.

Strictly a consumer of files written by the simulation CLI; no physics is
recomputed here.
"""
from .figure import FigureSpec, PanelSpec, render_comparison, render_veff

__all__ = ["FigureSpec", "PanelSpec", "render_comparison", "render_veff"]
