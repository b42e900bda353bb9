"""SVG figures: cells coloured by gradient label, with a fixed legend."""
from __future__ import annotations

import numpy as np

from .geometry import LABELS

# one colour per matrix of E, in E order
PALETTE = {
    "+A1": "#e41a1c", "-A1": "#377eb8", "+A2": "#4daf4a", "-A2": "#984ea3",
    "+A3": "#ff7f00", "-A3": "#ffff33", "+A4": "#a65628", "-A4": "#f781bf",
}
UNTILED = "#d9d9d9"


def _fmt(v: float) -> str:
    return f"{v:.6g}"


class _Frame:
    def __init__(self, bounds, size: int, margin: int = 10, legend: int = 110):
        x0, y0, x1, y1 = bounds
        self.x0, self.y1 = x0, y1
        self.k = (size - 2 * margin) / max(x1 - x0, y1 - y0)
        self.m = margin
        self.w = int(round((x1 - x0) * self.k)) + 2 * margin
        self.h = int(round((y1 - y0) * self.k)) + 2 * margin
        self.legend = legend

    def xy(self, x, y) -> tuple[str, str]:
        return _fmt(self.m + (x - self.x0) * self.k), _fmt(self.m + (self.y1 - y) * self.k)

    def pt(self, x, y) -> str:
        return ",".join(self.xy(x, y))


def render_svg(polygons, labels=None, segments=None, boundary=None, untiled=None,
               size: int = 800, legend: bool = True) -> str:
    """SVG text for polygons (list of vertex arrays) coloured by label index (or None)."""
    pts = [np.asarray(p, dtype=float) for p in polygons]
    extra = [np.asarray(p, dtype=float) for p in (boundary or [])]
    allp = np.concatenate(pts + extra) if pts or extra else np.zeros((1, 2))
    fr = _Frame((*allp.min(axis=0), *allp.max(axis=0)), size)
    width = fr.w + (fr.legend if legend else 0)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{fr.h}" '
           f'viewBox="0 0 {width} {fr.h}">',
           f'<rect width="{width}" height="{fr.h}" fill="white"/>']
    for poly in untiled or []:
        out.append(f'<polygon points="{" ".join(fr.pt(x, y) for x, y in np.asarray(poly, float))}" '
                   f'fill="{UNTILED}" stroke="none"/>')
    for n, p in enumerate(pts):
        colour = PALETTE[LABELS[labels[n]]] if labels is not None and labels[n] >= 0 else "none"
        out.append(f'<polygon points="{" ".join(fr.pt(x, y) for x, y in p)}" fill="{colour}" '
                   f'stroke="{colour}" stroke-width="0.2"/>')
    for a, b in (segments if segments is not None else []):
        (ax, ay), (bx, by) = fr.xy(*a), fr.xy(*b)
        out.append(f'<line x1="{ax}" y1="{ay}" x2="{bx}" y2="{by}" stroke="black" stroke-width="0.8"/>')
    for poly in extra:
        out.append(f'<polygon points="{" ".join(fr.pt(x, y) for x, y in poly)}" fill="none" '
                   f'stroke="black" stroke-width="2.5"/>')
    if legend:
        lx = fr.w + 10
        for n, lab in enumerate(LABELS):
            y = 20 + 22 * n
            out.append(f'<rect x="{lx}" y="{y}" width="16" height="16" fill="{PALETTE[lab]}" stroke="black"/>')
            out.append(f'<text x="{lx + 22}" y="{y + 13}" font-family="monospace" font-size="13">{lab}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def map_svg(pm, segments=None, size: int = 800) -> str:
    """Cells of a piecewise-affine map, its domain and untiled frames."""
    return render_svg(list(pm.float_vertices()), pm.labels, segments, pm.domain, pm.untiled, size)


def covering_svg(cov, size: int = 800) -> str:
    polys = [np.array([(float(x), float(y)) for x, y in s.corners()]) for s in cov.squares]
    return render_svg(polys, None, [(p[i], p[(i + 1) % 4]) for p in polys for i in range(4)],
                      cov.domain, None, size, legend=False)
