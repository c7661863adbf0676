"""Standalone SVG plots of 2D trajectories."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

from ..errors import LeanmapError

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"]
WIDTH = 800
MARGIN = 0.05


class EmptyTrajectoryError(LeanmapError, ValueError):
    pass


def _xy(p) -> tuple[float, float]:
    return (p.x, p.y) if hasattr(p, "x") else (float(p[0]), float(p[1]))


def _num(v: float) -> str:
    s = f"{v:.6f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def render_svg(trajectories, title: str | None = None) -> str:
    """SVG text for ``[(label, poses), ...]``; y points up in the plot."""
    if not trajectories:
        raise EmptyTrajectoryError("no trajectories to plot")
    pts = []
    for label, poses in trajectories:
        if len(poses) == 0:
            raise EmptyTrajectoryError(f"trajectory {label!r} has no poses")
        pts.append([_xy(p) for p in poses])
    xs = [x for tr in pts for x, _ in tr]
    ys = [y for tr in pts for _, y in tr]
    w = max(max(xs) - min(xs), 1e-9)
    h = max(max(ys) - min(ys), 1e-9)
    span = max(w, h)
    mx, my = MARGIN * span, MARGIN * span
    vb_x, vb_w = min(xs) - mx, w + 2 * mx
    # y is flipped: world y maps to -y
    vb_y, vb_h = -max(ys) - my, h + 2 * my
    height = max(int(round(WIDTH * vb_h / vb_w)), 1)
    stroke = _num(span / 400.0)
    font = _num(span / 30.0)

    out = [
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{height}" '
        f'viewBox="{_num(vb_x)} {_num(vb_y)} {_num(vb_w)} {_num(vb_h)}">',
    ]
    if title:
        out.append(f"<title>{escape(title)}</title>")
    out.append(f'<rect x="{_num(vb_x)}" y="{_num(vb_y)}" width="{_num(vb_w)}" height="{_num(vb_h)}" fill="white"/>')
    for k, ((label, _), tr) in enumerate(zip(trajectories, pts)):
        color = PALETTE[k % len(PALETTE)]
        points = " ".join(f"{_num(x)},{_num(-y)}" for x, y in tr)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="{stroke}" points="{points}"/>')
    out.append('<g class="legend">')
    for k, (label, _) in enumerate(trajectories):
        color = PALETTE[k % len(PALETTE)]
        ty = vb_y + (k + 1.5) * float(font) * 1.2
        tx = vb_x + float(font)
        out.append(f'<text x="{_num(tx)}" y="{_num(ty)}" font-size="{font}" fill="{color}">{escape(str(label))}</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_svg(trajectories, out: str | Path, title: str | None = None) -> None:
    Path(out).write_text(render_svg(trajectories, title))
