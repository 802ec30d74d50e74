"""Report writers: ``key = value`` documents, prose summaries and SVG plots."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .config import format_value


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, np.ndarray):
        return ", ".join(repr(float(v)) for v in value.ravel())
    if isinstance(value, (np.floating, np.integer)):
        return format_value(value.item())
    return format_value(value)


def write_kv(path: Path, entries: dict, cfg: dict) -> None:
    """Results then the effective configuration, one ``key = value`` per line, sorted."""
    lines = [f"{k} = {_fmt(v)}" for k, v in sorted(entries.items())]
    lines += [f"config.{k} = {_fmt(v)}" for k, v in sorted(cfg.items())]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_text(path: Path, title: str, body: list[str], cfg: dict) -> None:
    lines = [title, "=" * len(title), ""] + body + ["", "Effective configuration", "-----------------------"]
    lines += [f"  {k} = {_fmt(v)}" for k, v in sorted(cfg.items())]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _nice(v: float) -> str:
    return f"{v:.4g}"


def write_svg(path: Path, t: np.ndarray, series: list[tuple[str, np.ndarray]], time_label: str = "t [s]") -> None:
    """Stacked line panels sharing the time axis, as one self-contained SVG."""
    width, panel_h, left, right, top, gap = 720, 150, 90, 20, 20, 40
    inner_w = width - left - right
    height = top + len(series) * (panel_h + gap) + 10
    t = np.asarray(t, dtype=float)
    t0, t1 = float(t[0]), float(t[-1]) if t[-1] > t[0] else float(t[0]) + 1.0
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for k, (label, y) in enumerate(series):
        y = np.asarray(y, dtype=float)
        y0 = top + k * (panel_h + gap)
        lo, hi = float(np.min(y)), float(np.max(y))
        if hi - lo < 1e-300:
            lo, hi = lo - 1.0, hi + 1.0
        px = left + (t - t0) / (t1 - t0) * inner_w
        py = y0 + panel_h - (y - lo) / (hi - lo) * panel_h
        points = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
        out += [
            f'<rect x="{left}" y="{y0}" width="{inner_w}" height="{panel_h}" fill="none" stroke="#888"/>',
            f'<polyline fill="none" stroke="#1f5fa8" stroke-width="1.2" points="{points}"/>',
            f'<text x="{left - 6}" y="{y0 + 10}" text-anchor="end">{_nice(hi)}</text>',
            f'<text x="{left - 6}" y="{y0 + panel_h}" text-anchor="end">{_nice(lo)}</text>',
            f'<text x="12" y="{y0 + panel_h / 2}" transform="rotate(-90 12 {y0 + panel_h / 2})" '
            f'text-anchor="middle">{escape(label)}</text>',
            f'<text x="{left}" y="{y0 + panel_h + 14}">{_nice(t0)}</text>',
            f'<text x="{left + inner_w}" y="{y0 + panel_h + 14}" text-anchor="end">{_nice(t1)}</text>',
            f'<text x="{left + inner_w / 2}" y="{y0 + panel_h + 14}" text-anchor="middle">{escape(time_label)}</text>',
        ]
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")
