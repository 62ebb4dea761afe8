"""Minimal raster plots (PNG dumps, no interactive backend).

Heatmaps show camera positions colored by score; curves show accuracy
against move budget. Both are drawn directly with PIL primitives.
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Sequence

from PIL import Image, ImageDraw

CANVAS = (640, 480)
MARGIN = 48

SERIES_COLORS = [
    (200, 60, 50),
    (50, 110, 200),
    (60, 160, 70),
    (150, 80, 180),
    (210, 150, 40),
    (80, 80, 80),
]


def _score_color(score: float):
    """Cold blue at 0 through warm red at 1."""
    s = min(max(score, 0.0), 1.0)
    return (int(40 + 215 * s), 60, int(255 - 215 * s))


def render_heatmap(records: Sequence[dict], out_path: Path, dot_radius: int = 5) -> None:
    """Scatter of {x, y, score} records over the ground plane."""
    img = Image.new("RGB", CANVAS, (255, 255, 255))
    draw = ImageDraw.Draw(img)
    w, h = CANVAS
    draw.rectangle([MARGIN, MARGIN, w - MARGIN, h - MARGIN], outline=(180, 180, 180))
    if records:
        xs = [r["x"] for r in records]
        ys = [r["y"] for r in records]
        x0, x1 = min(xs), max(xs)
        y0, y1 = min(ys), max(ys)
        span_x = max(x1 - x0, 1e-9)
        span_y = max(y1 - y0, 1e-9)
        for r in records:
            px = MARGIN + (r["x"] - x0) / span_x * (w - 2 * MARGIN)
            py = h - MARGIN - (r["y"] - y0) / span_y * (h - 2 * MARGIN)
            draw.ellipse(
                [px - dot_radius, py - dot_radius, px + dot_radius, py + dot_radius],
                fill=_score_color(r["score"]),
            )
        draw.text((MARGIN, 8), f"{len(records)} cameras, score 0=blue 1=red", fill=(0, 0, 0))
    else:
        draw.text((MARGIN, 8), "no records", fill=(0, 0, 0))
    img.save(out_path)


def render_curve(
    series: Dict[str, Dict[int, float]], out_path: Path, y_label: str = "accuracy"
) -> None:
    """Polyline per method: x = move budget, y in [0, 1]."""
    img = Image.new("RGB", CANVAS, (255, 255, 255))
    draw = ImageDraw.Draw(img)
    w, h = CANVAS
    draw.rectangle([MARGIN, MARGIN, w - MARGIN, h - MARGIN], outline=(120, 120, 120))
    budgets: List[int] = sorted({b for points in series.values() for b in points})
    if budgets:
        bx0, bx1 = budgets[0], budgets[-1]
        span = max(bx1 - bx0, 1)

        def to_px(budget: int, value: float):
            px = MARGIN + (budget - bx0) / span * (w - 2 * MARGIN)
            py = h - MARGIN - min(max(value, 0.0), 1.0) * (h - 2 * MARGIN)
            return px, py

        for i in range(0, 11, 2):
            y = h - MARGIN - i / 10 * (h - 2 * MARGIN)
            draw.line([(MARGIN - 4, y), (MARGIN, y)], fill=(120, 120, 120))
            draw.text((4, y - 6), f"{i/10:.1f}", fill=(0, 0, 0))
        for b in budgets:
            x, _ = to_px(b, 0.0)
            draw.line([(x, h - MARGIN), (x, h - MARGIN + 4)], fill=(120, 120, 120))
            draw.text((x - 4, h - MARGIN + 8), str(b), fill=(0, 0, 0))

        for idx, (name, points) in enumerate(sorted(series.items())):
            color = SERIES_COLORS[idx % len(SERIES_COLORS)]
            pts = [to_px(b, points[b]) for b in sorted(points)]
            if len(pts) > 1:
                draw.line(pts, fill=color, width=2)
            for px, py in pts:
                draw.ellipse([px - 3, py - 3, px + 3, py + 3], fill=color)
            draw.text((w - MARGIN - 120, MARGIN + 14 * idx), name, fill=color)
    draw.text((MARGIN, 8), f"{y_label} vs move budget", fill=(0, 0, 0))
    img.save(out_path)
