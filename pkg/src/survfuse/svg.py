"""Minimal self-contained SVG rendering for stratified survival curves.

No plotting dependency: the output is a fixed-size step plot with two
curves (high and low risk), axis ticks, and a legend. The root element
carries a ``data-steps`` attribute listing every (time, survival) point
per group in plot order, which mirrors the CSV emitted next to the plot
so the two stay verifiably in sync. Output is byte-deterministic.
"""

from __future__ import annotations

from html import escape

WIDTH, HEIGHT = 640, 400
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 60, 20, 40, 50

_STYLES = {
    "high": "#c0392b",
    "low": "#2980b9",
}


def _fmt(x: float) -> str:
    """Shortest float form, so attribute and CSV text agree exactly."""
    return repr(float(x))


def _steps_attr(groups: dict) -> str:
    parts = []
    for name, points in groups.items():
        pairs = " ".join(f"{_fmt(p.time)},{_fmt(p.survival)}" for p in points)
        parts.append(f"{name}:{pairs}")
    return ";".join(parts)


def _step_path(points, max_time: float, x, y) -> str:
    d = [f"M {x(0.0):.2f} {y(1.0):.2f}"]
    for p in points:
        d.append(f"H {x(p.time):.2f}")
        d.append(f"V {y(p.survival):.2f}")
    d.append(f"H {x(max_time):.2f}")
    return " ".join(d)


def render_km_svg(high_points, low_points, title: str = "") -> str:
    """Render high/low survival step curves as an SVG document string."""
    groups = {"high": tuple(high_points), "low": tuple(low_points)}
    times = [p.time for pts in groups.values() for p in pts]
    max_time = max(times) if times else 1.0
    if max_time <= 0:
        max_time = 1.0
    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def x(t):
        return MARGIN_L + (t / max_time) * plot_w

    def y(s):
        return MARGIN_T + (1.0 - s) * plot_h

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" data-steps="{escape(_steps_attr(groups), quote=True)}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        lines.append(
            f'<text x="{WIDTH / 2:.0f}" y="24" text-anchor="middle" '
            f'font-family="sans-serif" font-size="16">{escape(title)}</text>'
        )
    # axes
    lines.append(
        f'<line x1="{MARGIN_L}" y1="{y(0.0):.2f}" x2="{WIDTH - MARGIN_R}" '
        f'y2="{y(0.0):.2f}" stroke="black"/>'
    )
    lines.append(
        f'<line x1="{MARGIN_L}" y1="{y(1.0):.2f}" x2="{MARGIN_L}" '
        f'y2="{y(0.0):.2f}" stroke="black"/>'
    )
    for k in range(5):
        sv = k / 4.0
        yy = y(sv)
        lines.append(f'<line x1="{MARGIN_L - 4}" y1="{yy:.2f}" x2="{MARGIN_L}" y2="{yy:.2f}" stroke="black"/>')
        lines.append(
            f'<text x="{MARGIN_L - 8}" y="{yy + 4:.2f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{sv:.2f}</text>'
        )
        tv = max_time * k / 4.0
        xx = x(tv)
        lines.append(f'<line x1="{xx:.2f}" y1="{y(0.0):.2f}" x2="{xx:.2f}" y2="{y(0.0) + 4:.2f}" stroke="black"/>')
        lines.append(
            f'<text x="{xx:.2f}" y="{y(0.0) + 18:.2f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{tv:g}</text>'
        )
    lines.append(
        f'<text x="{MARGIN_L + plot_w / 2:.0f}" y="{HEIGHT - 10}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">time (days)</text>'
    )
    lines.append(
        f'<text x="16" y="{MARGIN_T + plot_h / 2:.0f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 16 {MARGIN_T + plot_h / 2:.0f})">survival</text>'
    )
    for name, points in groups.items():
        color = _STYLES[name]
        if points:
            lines.append(
                f'<path d="{_step_path(points, max_time, x, y)}" fill="none" '
                f'stroke="{color}" stroke-width="2" data-group="{name}"/>'
            )
    # legend
    ly = MARGIN_T + 8
    for name in groups:
        color = _STYLES[name]
        n = len(groups[name])
        lines.append(
            f'<line x1="{WIDTH - MARGIN_R - 150}" y1="{ly}" x2="{WIDTH - MARGIN_R - 120}" '
            f'y2="{ly}" stroke="{color}" stroke-width="2"/>'
        )
        lines.append(
            f'<text x="{WIDTH - MARGIN_R - 112}" y="{ly + 4}" font-family="sans-serif" '
            f'font-size="12">{name} risk ({n} points)</text>'
        )
        ly += 18
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
