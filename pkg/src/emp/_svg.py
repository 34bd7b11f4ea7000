"""Tiny dependency-free SVG line plots for CLI convenience output."""

from __future__ import annotations

from ._files import atomic_write_text

_COLORS = ["#1f6fb2", "#d1495b", "#3a7d44", "#8a5a83", "#c77b2e", "#4a4a4a"]


def _ticks(lo: float, hi: float):
    if hi <= lo:
        hi = lo + 1.0
    return [lo, 0.5 * (lo + hi), hi]


def line_plot(series, path, title="", xlabel="", ylabel="", width=640, height=420) -> None:
    """Write a line/scatter plot of (label, xs, ys) triples to an SVG file.

    Purely a convenience artifact: layout is fixed, output is deterministic
    for identical inputs.
    """
    margin = 56
    inner_w = width - 2 * margin
    inner_h = height - 2 * margin
    xs_all = [x for _, xs, _ in series for x in xs]
    ys_all = [y for _, _, ys in series for y in ys]
    if not xs_all:
        raise ValueError("nothing to plot")
    x_lo, x_hi = min(xs_all), max(xs_all)
    y_lo, y_hi = min(ys_all), max(ys_all)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def sx(x):
        return margin + (x - x_lo) / (x_hi - x_lo) * inner_w

    def sy(y):
        return height - margin - (y - y_lo) / (y_hi - y_lo) * inner_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" font-size="15" '
        f'font-family="sans-serif">{title}</text>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 12}" text-anchor="middle" font-size="12" '
        f'font-family="sans-serif">{xlabel}</text>',
        f'<text x="16" y="{height / 2:.1f}" text-anchor="middle" font-size="12" '
        f'font-family="sans-serif" transform="rotate(-90 16 {height / 2:.1f})">{ylabel}</text>',
    ]
    for tx in _ticks(x_lo, x_hi):
        parts.append(
            f'<text x="{sx(tx):.1f}" y="{height - margin + 16}" text-anchor="middle" '
            f'font-size="10" font-family="sans-serif">{tx:g}</text>'
        )
    for ty in _ticks(y_lo, y_hi):
        parts.append(
            f'<text x="{margin - 6}" y="{sy(ty) + 3:.1f}" text-anchor="end" '
            f'font-size="10" font-family="sans-serif">{ty:g}</text>'
        )
    for i, (label, xs, ys) in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        points = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for x, y in zip(xs, ys):
            parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="2" fill="{color}"/>')
        parts.append(
            f'<text x="{width - margin - 4}" y="{margin + 14 + 14 * i}" text-anchor="end" '
            f'font-size="11" font-family="sans-serif" fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    atomic_write_text(path, "\n".join(parts) + "\n")
