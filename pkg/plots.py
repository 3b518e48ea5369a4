"""Standalone SVG chart of normalized thresholds, no renderer needed."""
from typing import List

import numpy as np
import pandas as pd

SERIES = (
    ("mip_t_norm", "MIP threshold", "#1f77b4", "circle"),
    ("sets_t_norm", "SETS threshold", "#d62728", "square"),
    ("mean_norm", "Column mean", "#2ca02c", "diamond"),
)
Y_MIN, Y_MAX = -0.1, 1.1


def _escape(text: str) -> str:
    return (
        str(text).replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
        .replace("'", "&#39;")
    )


def _marker(shape: str, x: float, y: float, color: str, hollow: bool) -> str:
    fill = "#ffffff" if hollow else color
    style = f'fill="{fill}" stroke="{color}" stroke-width="2"'
    if shape == "square":
        return f'<rect x="{x - 5:.2f}" y="{y - 5:.2f}" width="10" height="10" {style}/>'
    if shape == "diamond":
        points = f"{x:.2f},{y - 6:.2f} {x + 6:.2f},{y:.2f} {x:.2f},{y + 6:.2f} {x - 6:.2f},{y:.2f}"
        return f'<polygon points="{points}" {style}/>'
    return f'<circle cx="{x:.2f}" cy="{y:.2f}" r="5" {style}/>'


def threshold_chart_svg(frame: pd.DataFrame, title: str = "Learned thresholds vs column means") -> str:
    """Grouped markers per feature; clipped values are drawn hollow."""
    n_features = len(frame)
    width = max(640, 120 + 70 * n_features)
    height = 520
    plot_left, plot_right = 80, width - 200
    plot_top, plot_bottom = 60, height - 150
    plot_width = plot_right - plot_left
    plot_height = plot_bottom - plot_top

    def x_to_px(idx: int, offset: int) -> float:
        slot = plot_width / max(n_features, 1)
        return plot_left + slot * (idx + 0.5) + offset * 12

    def y_to_px(value: float) -> float:
        return plot_bottom - (value - Y_MIN) / (Y_MAX - Y_MIN) * plot_height

    lines: List[str] = []
    lines.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">')
    lines.append('<rect x="0" y="0" width="100%" height="100%" fill="#ffffff"/>')
    lines.append(
        f'<text x="{width / 2:.1f}" y="32" text-anchor="middle" font-size="20" font-family="Arial">{_escape(title)}</text>'
    )

    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = y_to_px(tick)
        lines.append(f'<line x1="{plot_left}" y1="{y:.2f}" x2="{plot_right}" y2="{y:.2f}" stroke="#d9d9d9" stroke-width="1"/>')
        lines.append(
            f'<text x="{plot_left - 10}" y="{y + 5:.2f}" text-anchor="end" font-size="12" font-family="Arial">{tick:.2f}</text>'
        )
    lines.append(f'<line x1="{plot_left}" y1="{plot_bottom}" x2="{plot_right}" y2="{plot_bottom}" stroke="#000000" stroke-width="2"/>')
    lines.append(f'<line x1="{plot_left}" y1="{plot_top}" x2="{plot_left}" y2="{plot_bottom}" stroke="#000000" stroke-width="2"/>')
    lines.append(
        f'<text x="24" y="{(plot_top + plot_bottom) / 2:.1f}" text-anchor="middle" font-size="13" font-family="Arial" '
        f'transform="rotate(-90 24 {(plot_top + plot_bottom) / 2:.1f})">normalized value</text>'
    )

    for idx, record in enumerate(frame.to_dict(orient="records")):
        clipped = set(str(record.get("clipped") or "").split(";"))
        for offset, (column, _, color, shape) in zip((-1, 0, 1), SERIES):
            value = record[column]
            if value is None or not np.isfinite(value):
                continue
            hollow = column.split("_")[0] in clipped
            lines.append(_marker(shape, x_to_px(idx, offset), y_to_px(value), color, hollow))
        x = x_to_px(idx, 0)
        lines.append(
            f'<text x="{x:.2f}" y="{plot_bottom + 16}" text-anchor="end" font-size="12" font-family="Arial" '
            f'transform="rotate(-45 {x:.2f} {plot_bottom + 16})">{_escape(record["feature_name"])}</text>'
        )

    legend_x, legend_y = plot_right + 24, plot_top + 20
    for idx, (_, label, color, shape) in enumerate(SERIES):
        ly = legend_y + idx * 26
        lines.append(_marker(shape, legend_x, ly, color, False))
        lines.append(
            f'<text x="{legend_x + 14}" y="{ly + 5}" text-anchor="start" font-size="13" font-family="Arial">{_escape(label)}</text>'
        )
    ly = legend_y + len(SERIES) * 26
    lines.append(_marker("circle", legend_x, ly, "#555555", True))
    lines.append(
        f'<text x="{legend_x + 14}" y="{ly + 5}" text-anchor="start" font-size="13" font-family="Arial">clipped</text>'
    )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
