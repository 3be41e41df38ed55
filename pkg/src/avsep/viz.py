"""Deterministic CSV and SVG emitters (no plotting dependencies).

All float formatting is fixed-width so identical inputs produce
byte-identical files.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import numpy as np


def fmt(x: float, digits: int = 6) -> str:
    return f"{float(x):.{digits}f}"


def write_csv(path, header: Sequence[str], rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
    return path


def spectrogram_csv(path, values: np.ndarray):
    """One CSV row per frame."""
    rows = ([fmt(v, 8) for v in frame] for frame in values)
    header = [f"bin{j}" for j in range(values.shape[1])]
    return write_csv(path, header, rows)


def _color(v: float) -> str:
    """Map [0,1] to a dark-blue -> yellow ramp."""
    v = min(max(v, 0.0), 1.0)
    r = int(255 * v)
    g = int(255 * (v**0.7))
    b = int(80 + 120 * (1.0 - v))
    return f"#{r:02x}{g:02x}{b:02x}"

def heatmap_svg(path, values: np.ndarray, cell: int = 4, title: str = ""):
    """Spectrogram heatmap: time left-to-right, low frequencies at the bottom."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    t_n, f_n = values.shape
    vmax = float(values.max()) or 1.0
    w, h = t_n * cell, f_n * cell
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h + 16}">',
        f'<text x="2" y="12" font-size="10" font-family="monospace">{title}</text>',
    ]
    for t in range(t_n):
        for f in range(f_n):
            c = _color(values[t, f] / vmax)
            y = 16 + (f_n - 1 - f) * cell
            parts.append(
                f'<rect x="{t * cell}" y="{y}" width="{cell}" height="{cell}" fill="{c}"/>'
            )
    parts.append("</svg>")
    path.write_text("\n".join(parts))
    return path


def scatter_svg(path, xs, ys, labels, title: str = "", xlabel: str = "", ylabel: str = ""):
    """Labeled scatter plot with linear axes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    w, h, pad = 420, 320, 48
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    xr = (x1 - x0) or 1.0
    yr = (y1 - y0) or 1.0

    def px(x):
        return pad + (x - x0) / xr * (w - 2 * pad)

    def py(y):
        return h - pad - (y - y0) / yr * (h - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">',
        f'<text x="{w // 2}" y="16" text-anchor="middle" font-size="12">{title}</text>',
        f'<line x1="{pad}" y1="{h - pad}" x2="{w - pad}" y2="{h - pad}" stroke="#333"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{h - pad}" stroke="#333"/>',
        f'<text x="{w // 2}" y="{h - 8}" text-anchor="middle" font-size="10">{xlabel}</text>',
        f'<text x="12" y="{h // 2}" font-size="10" transform="rotate(-90 12 {h // 2})" text-anchor="middle">{ylabel}</text>',
    ]
    for x, y, label in zip(xs, ys, labels):
        cx, cy = fmt(px(x), 1), fmt(py(y), 1)
        parts.append(f'<circle cx="{cx}" cy="{cy}" r="4" fill="#2a6f97"/>')
        parts.append(
            f'<text x="{fmt(px(x) + 6, 1)}" y="{fmt(py(y) - 4, 1)}" font-size="9">{label}</text>'
        )
    parts.append("</svg>")
    path.write_text("\n".join(parts))
    return path


def lines_svg(path, series: dict[str, Sequence[float]], title: str = ""):
    """Overlaid line traces (loss curves)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    w, h, pad = 480, 280, 36
    palette = ["#2a6f97", "#c44536", "#3a7d44", "#8e5572", "#b8860b"]
    all_vals = np.concatenate([np.asarray(v, dtype=float) for v in series.values()])
    y0, y1 = float(all_vals.min()), float(all_vals.max())
    yr = (y1 - y0) or 1.0
    n = max(len(v) for v in series.values())
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">',
        f'<text x="{w // 2}" y="16" text-anchor="middle" font-size="12">{title}</text>',
        f'<line x1="{pad}" y1="{h - pad}" x2="{w - pad}" y2="{h - pad}" stroke="#333"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{h - pad}" stroke="#333"/>',
    ]
    for idx, (name, vals) in enumerate(series.items()):
        color = palette[idx % len(palette)]
        pts = []
        for i, v in enumerate(vals):
            x = pad + i / max(n - 1, 1) * (w - 2 * pad)
            y = h - pad - (float(v) - y0) / yr * (h - 2 * pad)
            pts.append(f"{fmt(x, 1)},{fmt(y, 1)}")
        parts.append(
            f'<polyline points="{" ".join(pts)}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        parts.append(
            f'<text x="{w - pad + 2}" y="{pad + 12 * idx}" font-size="9" fill="{color}">{name}</text>'
        )
    parts.append("</svg>")
    path.write_text("\n".join(parts))
    return path
