"""Static SVG panels drawn from stored outlier reports.

Each panel shows one component of one coordinate: on the left the boxplot
descriptors (Tukey box for translation; median, quartile and whisker curves
for amplitude and phase), on the right every member's statistic against its
index with the cut-offs drawn in and flagged members in red. Panels are built
only from the report files, so re-rendering is byte-stable.
"""

from xml.sax.saxutils import escape

import numpy as np

__all__ = ["COMPONENTS", "render_panel"]

COMPONENTS = ("translation", "amplitude", "phase")
WIDTH, HEIGHT = 760, 320
MARGIN = 40
PALETTE = {
    "median": "#000000",
    "quartile": "#1f77b4",
    "whisker": "#2ca02c",
    "point": "#7f7f7f",
    "flag": "#d62728",
    "cut": "#ff7f0e",
}


def _fmt(v):
    return f"{v:.3f}"


def _scale(lo, hi, a, b):
    """Affine map of ``[lo, hi]`` onto pixel range ``[a, b]``."""
    if not np.isfinite(lo) or not np.isfinite(hi) or hi <= lo:
        lo, hi = (lo - 1.0, hi + 1.0) if np.isfinite(lo) else (0.0, 1.0)
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    return lambda v: a + (np.asarray(v, dtype=float) - lo) * (b - a) / (hi - lo)


def _polyline(xs, ys, colour, width=1.5, dash=None):
    pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in zip(xs, ys))
    extra = f' stroke-dasharray="{dash}"' if dash else ""
    return f'<polyline fill="none" stroke="{colour}" stroke-width="{width}"{extra} points="{pts}"/>'


def _frame(x0, y0, x1, y1, title):
    return [
        f'<rect x="{x0}" y="{y0}" width="{x1 - x0}" height="{y1 - y0}" fill="none" stroke="#cccccc"/>',
        f'<text x="{(x0 + x1) / 2}" y="{y0 - 8}" text-anchor="middle" font-size="12">{escape(title)}</text>',
    ]


def _curves_panel(box, x0, y0, x1, y1):
    """Median, quartile and whisker elements as curves over ``t``."""
    names = ("median", "q1", "q3", "whisker1", "whisker3")
    curves = {k: np.asarray(box[k], dtype=float) for k in names if box.get(k) is not None}
    out = _frame(x0, y0, x1, y1, f"{box['component']} descriptors")
    if not curves:
        return out
    allv = np.concatenate(list(curves.values()))
    n = len(curves["median"])
    sx = _scale(0.0, 1.0, x0, x1)
    sy = _scale(float(allv.min()), float(allv.max()), y1, y0)
    t = np.linspace(0.0, 1.0, n)
    style = {
        "median": (PALETTE["median"], 2.0, None),
        "q1": (PALETTE["quartile"], 1.5, None),
        "q3": (PALETTE["quartile"], 1.5, None),
        "whisker1": (PALETTE["whisker"], 1.0, "4 3"),
        "whisker3": (PALETTE["whisker"], 1.0, "4 3"),
    }
    for k in names:
        if k in curves:
            colour, width, dash = style[k]
            out.append(_polyline(sx(t), sy(curves[k]), colour, width, dash))
    return out


def _tukey_panel(box, values, flags, x0, y0, x1, y1):
    """Vertical Tukey box with fences and the member values."""
    out = _frame(x0, y0, x1, y1, "translation box")
    lo_fence, hi_fence = box["lower_threshold"], box["threshold"]
    stats = [box["q1"], box["median"], box["q3"], lo_fence, hi_fence]
    span = np.concatenate([values, stats])
    sy = _scale(float(span.min()), float(span.max()), y1, y0)
    cx = 0.5 * (x0 + x1)
    half = 0.2 * (x1 - x0)
    q1, med, q3 = (float(sy(box[k])) for k in ("q1", "median", "q3"))
    out.append(
        f'<rect x="{_fmt(cx - half)}" y="{_fmt(q3)}" width="{_fmt(2 * half)}" '
        f'height="{_fmt(q1 - q3)}" fill="none" stroke="{PALETTE["quartile"]}"/>'
    )
    out.append(_polyline([cx - half, cx + half], [med, med], PALETTE["median"], 2.0))
    for fence in (lo_fence, hi_fence):
        yy = float(sy(fence))
        out.append(_polyline([x0, x1], [yy, yy], PALETTE["cut"], 1.0, "4 3"))
    for v, f in zip(values, flags):
        colour = PALETTE["flag"] if f else PALETTE["point"]
        out.append(f'<circle cx="{_fmt(cx)}" cy="{_fmt(float(sy(v)))}" r="2.5" fill="{colour}"/>')
    return out


def _strip_panel(values, flags, cuts, label, x0, y0, x1, y1):
    """Member statistic against index with horizontal cut-off lines."""
    out = _frame(x0, y0, x1, y1, label)
    n = len(values)
    span = np.concatenate([values, [c for c in cuts if c is not None]])
    sx = _scale(0.0, max(n - 1, 1), x0, x1)
    sy = _scale(float(span.min()), float(span.max()), y1, y0)
    for c in cuts:
        if c is not None:
            yy = float(sy(c))
            out.append(_polyline([x0, x1], [yy, yy], PALETTE["cut"], 1.0, "4 3"))
    for i, (v, f) in enumerate(zip(values, flags)):
        colour = PALETTE["flag"] if f else PALETTE["point"]
        out.append(f'<circle cx="{_fmt(float(sx(i)))}" cy="{_fmt(float(sy(v)))}" r="2.5" fill="{colour}"/>')
    return out


def render_panel(coordinate, component, report, rows):
    """SVG text of one panel.

    Parameters
    ----------
    coordinate : str
        Label of the analysed coordinate (``"x"`` or ``"y"``).
    component : {"translation", "amplitude", "phase"}
    report : dict
        Structured report as written by ``OutlierReport.to_json``.
    rows : dict of str -> ndarray
        Report table columns.
    """
    if component not in COMPONENTS:
        raise ValueError(f"unknown component {component!r}")
    box = report["boxplots"][component]
    flags = np.asarray(rows[f"{component}_outlier"], dtype=bool)
    half = WIDTH // 2
    top, bottom = MARGIN, HEIGHT - MARGIN
    if component == "translation":
        values = np.asarray(rows["translation"], dtype=float)
        left = _tukey_panel(box, values, flags, MARGIN, top, half - MARGIN // 2, bottom)
        cuts = (box["lower_threshold"], box["threshold"])
    else:
        values = np.asarray(rows[f"{component}_distance"], dtype=float)
        left = _curves_panel(box, MARGIN, top, half - MARGIN // 2, bottom)
        cuts = (box["threshold"],)
    right = _strip_panel(values, flags, cuts, f"{component} statistic by member", half + MARGIN // 2, top, WIDTH - MARGIN, bottom)
    title = f"{coordinate}(t): {component} ({int(flags.sum())} flagged)"
    body = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        '<rect width="100%" height="100%" fill="#ffffff"/>',
        f'<text x="{WIDTH / 2}" y="16" text-anchor="middle" font-size="14" font-family="sans-serif">{escape(title)}</text>',
        '<g font-family="sans-serif">',
        *left,
        *right,
        "</g>",
        "</svg>",
    ]
    return "\n".join(body) + "\n"
