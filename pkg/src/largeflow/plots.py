"""Minimal log-log scatter plots written as SVG text."""
from __future__ import annotations

import numpy as np

_W, _H, _PAD = 420, 320, 50


def loglog_svg(path, log_x, log_y, slope: float, title: str, xlabel: str, ylabel: str) -> None:
    """Scatter of (log_x, log_y) with its least-squares line and slope label."""
    x = np.asarray(log_x, float)
    y = np.asarray(log_y, float)
    x0, x1 = x.min(), x.max()
    y0, y1 = y.min(), y.max()
    sx = (x1 - x0) or 1.0
    sy = (y1 - y0) or 1.0

    def px(v):
        return _PAD + (v - x0) / sx * (_W - 2 * _PAD)

    def py(v):
        return _H - _PAD - (v - y0) / sy * (_H - 2 * _PAD)

    icpt = float(np.mean(y) - slope * np.mean(x))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<line x1="{_PAD}" y1="{_H - _PAD}" x2="{_W - _PAD}" y2="{_H - _PAD}" stroke="black"/>',
        f'<line x1="{_PAD}" y1="{_PAD}" x2="{_PAD}" y2="{_H - _PAD}" stroke="black"/>',
        f'<text x="{_W / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<text x="{_W / 2}" y="{_H - 12}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="14" y="{_H / 2}" font-size="12" transform="rotate(-90 14 {_H / 2})">{ylabel}</text>',
    ]
    for a, b in zip(x, y):
        parts.append(f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="3" fill="steelblue"/>')
    parts.append(
        f'<line x1="{px(x0):.2f}" y1="{py(slope * x0 + icpt):.2f}" x2="{px(x1):.2f}" '
        f'y2="{py(slope * x1 + icpt):.2f}" stroke="crimson"/>'
    )
    parts.append(f'<text x="{_W - _PAD}" y="{_PAD}" text-anchor="end" font-size="12">slope {slope:.4f}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
