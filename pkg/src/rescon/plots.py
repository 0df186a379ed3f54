"""Self-contained SVG line charts for trace data (no plotting dependency)."""
from __future__ import annotations

from pathlib import Path
from typing import Mapping

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
           "#bcbd22", "#17becf")


def _decimate(t: np.ndarray, y: np.ndarray, max_points: int):
    if t.size <= max_points:
        return t, y
    idx = np.linspace(0, t.size - 1, max_points).round().astype(int)
    return t[idx], y[idx]


def line_chart_svg(t: np.ndarray, series: Mapping[str, np.ndarray], title: str, ylabel: str = "",
                   width: int = 720, height: int = 360, max_points: int = 1500) -> str:
    left, right, top, bottom = 60, 130, 30, 40
    pw, ph = width - left - right, height - top - bottom
    t = np.asarray(t, dtype=float)
    ys = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    finite = np.concatenate([v[np.isfinite(v)] for v in ys.values()] or [np.zeros(1)])
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    t0, t1 = float(t[0]), float(t[-1]) if t[-1] > t[0] else float(t[0]) + 1.0

    def sx(v):
        return left + (v - t0) / (t1 - t0) * pw

    def sy(v):
        return top + (hi - v) / (hi - lo) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" '
        f'font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left}" y="18" font-size="13">{title}</text>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
    ]
    for frac in np.linspace(0, 1, 5):
        yv = lo + frac * (hi - lo)
        tv = t0 + frac * (t1 - t0)
        parts.append(f'<text x="{left - 5}" y="{sy(yv) + 4:.1f}" text-anchor="end">{yv:.3g}</text>')
        parts.append(f'<text x="{sx(tv):.1f}" y="{top + ph + 15}" text-anchor="middle">{tv:.3g}</text>')
    parts.append(f'<text x="{left + pw / 2}" y="{height - 5}" text-anchor="middle">t [s]</text>')
    if ylabel:
        parts.append(f'<text x="12" y="{top + ph / 2}" transform="rotate(-90 12 {top + ph / 2})" '
                     f'text-anchor="middle">{ylabel}</text>')
    for n, (name, y) in enumerate(ys.items()):
        colour = PALETTE[n % len(PALETTE)]
        td, yd = _decimate(t, y, max_points)
        keep = np.isfinite(yd)
        pts = " ".join(f"{sx(a):.1f},{sy(b):.1f}" for a, b in zip(td[keep], yd[keep]))
        parts.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.2" points="{pts}"/>')
        ly = top + 14 * (n + 1)
        parts.append(f'<line x1="{left + pw + 10}" y1="{ly - 4}" x2="{left + pw + 28}" y2="{ly - 4}" '
                     f'stroke="{colour}" stroke-width="2"/>')
        parts.append(f'<text x="{left + pw + 32}" y="{ly}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_trace_charts(trace, out_dir) -> list[Path]:
    """states.svg (first state component), kl.svg (log10(1 + windowed average)), trust.svg."""
    out_dir = Path(out_dir)
    n = trace.n
    charts = {
        "states.svg": line_chart_svg(trace.times, {f"x{i}[0]": trace.x[:, i, 0] for i in range(n)},
                                     "Agent states (first component)", "x"),
        "kl.svg": line_chart_svg(
            trace.times,
            {**{f"imp {i}": np.log10(1 + trace.avg_imp[:, i]) for i in range(n)},
             **{f"non-IMP {i}": np.log10(1 + trace.avg_nonimp[:, i]) for i in range(n)}},
            "Windowed KL averages", "log10(1 + avg)"),
        "trust.svg": line_chart_svg(
            trace.times,
            {**{f"xi{i}": trace.xi[:, i] for i in range(n)},
             **{f"omega {int(j)}->{int(i)}": trace.omega[:, e]
                for e, (j, i) in enumerate(zip(trace.tails, trace.heads))}},
            "Self-belief and trust", "value"),
    }
    paths = []
    for name, svg in charts.items():
        p = out_dir / name
        p.write_text(svg)
        paths.append(p)
    return paths
