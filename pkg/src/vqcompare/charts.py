"""Standalone SVG bar charts for aggregated correlation results."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

# One colour per metric family; external models cycle through the tail.
_FAMILY_PALETTE = {
    "psnr": "#4878cf",
    "ssim": "#6acc65",
    "msssim": "#2e856e",
}
_EXTERNAL_PALETTE = ("#d65f5f", "#b47cc7", "#c4ad66", "#77bedb")


def _family(config_id: str) -> str:
    parts = config_id.split(":")
    if parts[0] == "external" and len(parts) > 1:
        return f"external:{parts[1]}"
    return parts[0]


def _palette(families):
    colors = {}
    external_idx = 0
    for family in families:
        if family in _FAMILY_PALETTE:
            colors[family] = _FAMILY_PALETTE[family]
        else:
            colors[family] = _EXTERNAL_PALETTE[external_idx % len(_EXTERNAL_PALETTE)]
            external_idx += 1
    return colors


def emit_bar_chart_svg(aggregates, title: str, path, sort_desc: bool = True) -> Path:
    """One bar per metric config (height = aggregated r) with CI whiskers."""
    aggregates = list(aggregates)
    if not aggregates:
        raise ValueError("no aggregates to chart")
    if sort_desc:
        aggregates = sorted(aggregates, key=lambda a: (-a.r_mean, a.config_id))

    n = len(aggregates)
    slot = 64
    margin_left, margin_right = 72, 24
    margin_top, margin_bottom = 56, 118
    plot_w = n * slot
    plot_h = 320
    width = margin_left + plot_w + margin_right
    height = margin_top + plot_h + margin_bottom

    lo = min(0.0, min(a.ci_low for a in aggregates))
    hi = max(1.0, max(a.ci_high for a in aggregates))

    def y_of(value: float) -> float:
        return margin_top + plot_h * (hi - value) / (hi - lo)

    families = []
    for agg in aggregates:
        family = _family(agg.config_id)
        if family not in families:
            families.append(family)
    colors = _palette(families)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        "<style>"
        "text { font-family: sans-serif; fill: #333; }"
        ".title { font-size: 15px; font-weight: 600; }"
        ".tick { font-size: 11px; }"
        ".label { font-size: 10px; }"
        ".axis, .whisker line { stroke: #333; stroke-width: 1; }"
        ".grid { stroke: #ccc; stroke-width: 0.5; }"
        "</style>",
        f'<text class="title" x="{margin_left}" y="24">{escape(title)}</text>',
    ]

    # horizontal grid and tick labels every 0.2 within range
    tick = -1.0
    while tick <= hi + 1e-9:
        if tick >= lo - 1e-9:
            y = y_of(tick)
            out.append(
                f'<line class="grid" x1="{margin_left}" y1="{y:.2f}" '
                f'x2="{margin_left + plot_w}" y2="{y:.2f}"/>'
            )
            out.append(
                f'<text class="tick" x="{margin_left - 8}" y="{y + 4:.2f}" '
                f'text-anchor="end">{tick:.1f}</text>'
            )
        tick = round(tick + 0.2, 10)

    baseline = y_of(max(0.0, lo))
    out.append(
        f'<line class="axis" x1="{margin_left}" y1="{baseline:.2f}" '
        f'x2="{margin_left + plot_w}" y2="{baseline:.2f}"/>'
    )
    out.append(
        f'<line class="axis" x1="{margin_left}" y1="{margin_top}" '
        f'x2="{margin_left}" y2="{margin_top + plot_h}"/>'
    )

    bar_w = slot * 0.62
    for i, agg in enumerate(aggregates):
        x_mid = margin_left + slot * (i + 0.5)
        x_bar = x_mid - bar_w / 2
        color = colors[_family(agg.config_id)]
        y_val = y_of(agg.r_mean)
        y0, y1 = sorted((y_val, y_of(0.0)))
        out.append(
            f'<rect class="bar" x="{x_bar:.2f}" y="{y0:.2f}" width="{bar_w:.2f}" '
            f'height="{max(y1 - y0, 0.5):.2f}" fill="{color}"/>'
        )
        y_lo, y_hi = y_of(agg.ci_low), y_of(agg.ci_high)
        cap = bar_w * 0.3
        out.append(
            '<g class="whisker">'
            f'<line x1="{x_mid:.2f}" y1="{y_hi:.2f}" x2="{x_mid:.2f}" y2="{y_lo:.2f}"/>'
            f'<line x1="{x_mid - cap:.2f}" y1="{y_hi:.2f}" x2="{x_mid + cap:.2f}" y2="{y_hi:.2f}"/>'
            f'<line x1="{x_mid - cap:.2f}" y1="{y_lo:.2f}" x2="{x_mid + cap:.2f}" y2="{y_lo:.2f}"/>'
            "</g>"
        )
        out.append(
            f'<text class="tick" x="{x_mid:.2f}" y="{y_of(agg.ci_high) - 6:.2f}" '
            f'text-anchor="middle">{agg.r_mean:.3f}</text>'
        )
        label_y = margin_top + plot_h + 14
        out.append(
            f'<text class="label" transform="rotate(-40 {x_mid:.2f} {label_y})" '
            f'x="{x_mid:.2f}" y="{label_y}" text-anchor="end">'
            f"{escape(agg.config_id)}</text>"
        )

    out.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(out) + "\n")
    return path
