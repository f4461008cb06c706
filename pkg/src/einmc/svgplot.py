"""Tiny native SVG line plots, enough for scan curves and tail plots.

No plotting dependency: the experiment reports need a handful of line
series with error bars, log axes and a legend, and nothing else.
"""
from __future__ import annotations

import math

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

WIDTH, HEIGHT = 640, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 64, 16, 34, 46


def _nice_ticks(lo: float, hi: float, n: int = 5):
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return [lo]
    raw = (hi - lo) / max(n, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    start = math.ceil(lo / step) * step
    ticks = []
    v = start
    while v <= hi + 1e-12 * step:
        ticks.append(round(v / step) * step)
        v += step
    return ticks


def _fmt(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-3:
        return f"{v:.1e}"
    return f"{v:.6g}"


class LinePlot:
    """Collect series, then render() to an SVG string or write_to(path)."""

    def __init__(self, title: str, xlabel: str, ylabel: str, logy: bool = False):
        self.title = title
        self.xlabel = xlabel
        self.ylabel = ylabel
        self.logy = logy
        self.series: list[dict] = []

    def add(self, x, y, label: str, yerr=None, dashed: bool = False):
        xs = [float(v) for v in x]
        ys = [float(v) for v in y]
        if len(xs) != len(ys):
            raise ValueError("x and y lengths differ")
        errs = None
        if yerr is not None:
            errs = [float(v) for v in yerr]
            if len(errs) != len(ys):
                raise ValueError("yerr length differs")
        self.series.append({"x": xs, "y": ys, "label": label,
                            "yerr": errs, "dashed": dashed})
        return self

    def _transformed(self):
        pts = []
        for s in self.series:
            for xv, yv in zip(s["x"], s["y"]):
                if self.logy:
                    if yv <= 0:
                        continue
                    yv = math.log10(yv)
                pts.append((xv, yv))
        return pts

    def render(self) -> str:
        pts = self._transformed()
        if not pts:
            raise ValueError("nothing to plot")
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        x_lo, x_hi = min(xs), max(xs)
        y_lo, y_hi = min(ys), max(ys)
        if x_hi == x_lo:
            x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
        if y_hi == y_lo:
            y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
        pad_y = 0.06 * (y_hi - y_lo)
        y_lo, y_hi = y_lo - pad_y, y_hi + pad_y
        plot_w = WIDTH - MARGIN_L - MARGIN_R
        plot_h = HEIGHT - MARGIN_T - MARGIN_B

        def px(xv):
            return MARGIN_L + (xv - x_lo) / (x_hi - x_lo) * plot_w

        def py(yv):
            if self.logy:
                yv = math.log10(yv) if yv > 0 else y_lo
            return MARGIN_T + (y_hi - yv) / (y_hi - y_lo) * plot_h

        def py_raw(yv):
            return MARGIN_T + (y_hi - yv) / (y_hi - y_lo) * plot_h

        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
            f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2}" y="20" text-anchor="middle" '
            f'font-family="sans-serif" font-size="14">{self.title}</text>',
        ]
        for tv in _nice_ticks(x_lo, x_hi):
            xp = px(tv)
            out.append(f'<line x1="{xp:.1f}" y1="{MARGIN_T}" x2="{xp:.1f}" '
                       f'y2="{HEIGHT - MARGIN_B}" stroke="#dddddd"/>')
            out.append(f'<text x="{xp:.1f}" y="{HEIGHT - MARGIN_B + 16}" '
                       f'text-anchor="middle" font-family="sans-serif" '
                       f'font-size="11">{_fmt(tv)}</text>')
        for tv in _nice_ticks(y_lo, y_hi):
            yp = py_raw(tv)
            label = f"1e{tv:.0f}" if self.logy else _fmt(tv)
            out.append(f'<line x1="{MARGIN_L}" y1="{yp:.1f}" '
                       f'x2="{WIDTH - MARGIN_R}" y2="{yp:.1f}" stroke="#dddddd"/>')
            out.append(f'<text x="{MARGIN_L - 6}" y="{yp + 4:.1f}" '
                       f'text-anchor="end" font-family="sans-serif" '
                       f'font-size="11">{label}</text>')
        out.append(f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w}" '
                   f'height="{plot_h}" fill="none" stroke="#333333"/>')
        out.append(f'<text x="{WIDTH / 2}" y="{HEIGHT - 10}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="12">{self.xlabel}</text>')
        out.append(f'<text x="16" y="{HEIGHT / 2}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="12" '
                   f'transform="rotate(-90 16 {HEIGHT / 2})">{self.ylabel}</text>')
        for idx, s in enumerate(self.series):
            color = PALETTE[idx % len(PALETTE)]
            dash = ' stroke-dasharray="6 4"' if s["dashed"] else ""
            coords = [
                (px(xv), py(yv)) for xv, yv in zip(s["x"], s["y"])
                if not self.logy or yv > 0
            ]
            if len(coords) >= 2:
                path = " ".join(f"{cx:.1f},{cy:.1f}" for cx, cy in coords)
                out.append(f'<polyline points="{path}" fill="none" '
                           f'stroke="{color}" stroke-width="1.8"{dash}/>')
            for cx, cy in coords:
                out.append(f'<circle cx="{cx:.1f}" cy="{cy:.1f}" r="3" '
                           f'fill="{color}"/>')
            if s["yerr"]:
                for xv, yv, ev in zip(s["x"], s["y"], s["yerr"]):
                    lo, hi = yv - ev, yv + ev
                    if self.logy and (lo <= 0 or yv <= 0):
                        continue
                    out.append(f'<line x1="{px(xv):.1f}" y1="{py(lo):.1f}" '
                               f'x2="{px(xv):.1f}" y2="{py(hi):.1f}" '
                               f'stroke="{color}" stroke-width="1"/>')
            ly = MARGIN_T + 14 + 16 * idx
            lx = MARGIN_L + 10
            out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" '
                       f'y2="{ly - 4}" stroke="{color}" stroke-width="2"{dash}/>')
            out.append(f'<text x="{lx + 28}" y="{ly}" font-family="sans-serif" '
                       f'font-size="11">{s["label"]}</text>')
        out.append("</svg>")
        return "\n".join(out)

    def write_to(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.render())
