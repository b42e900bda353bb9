"""Plain-text cell export and import.

Format (one record per line, whitespace separated, numerals exact: ``p``, ``p/2^k`` or ``p/q``)::

    vpyramid-cells 1
    depth <K>
    domain <x1> <y1> <x2> <y2> ...        (one line per domain polygon)
    cells <n>
    <label> <x1> <y1> <x2> <y2> <x3> <y3> <o1> <o2>

The cell value is ``M x + o`` with ``M`` the matrix named by the label (``+A1`` .. ``-A4``).
Lines starting with ``#`` are comments.
"""
from __future__ import annotations

from fractions import Fraction

import numpy as np

from .cells import PiecewiseAffineMap
from .geometry import LABELS, SignedMatrix, format_scalar, parse_scalar

MAGIC = "vpyramid-cells 1"


def _exact_rows(pm: PiecewiseAffineMap):
    s = Fraction(pm.scale)
    conv = Fraction if pm.vertices.dtype != float else (lambda v: Fraction(float(v)))
    labels = pm.labels
    for n in range(len(pm)):
        if labels[n] < 0:
            raise ValueError(f"cell {n} has a gradient outside E")
        verts = [conv(v) / s for v in pm.vertices[n].ravel()]
        offs = [conv(o) / s for o in pm.offsets[n]]
        yield LABELS[labels[n]], verts, offs


def dumps_cells(pm: PiecewiseAffineMap) -> str:
    out = [MAGIC, f"depth {pm.depth}"]
    for poly in pm.domain:
        out.append("domain " + " ".join(format_scalar(Fraction(v)) for p in poly for v in p))
    out.append(f"cells {len(pm)}")
    for label, verts, offs in _exact_rows(pm):
        out.append(" ".join([label, *map(format_scalar, verts), *map(format_scalar, offs)]))
    return "\n".join(out) + "\n"


def loads_cells(text: str) -> PiecewiseAffineMap:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines or lines[0] != MAGIC:
        raise ValueError("not a vpyramid cell file")
    depth, domain, count, rows = 0, [], None, []
    for ln in lines[1:]:
        head, *rest = ln.split()
        if head == "depth":
            depth = int(rest[0])
        elif head == "domain":
            vals = [parse_scalar(v) for v in rest]
            if len(vals) % 2:
                raise ValueError("odd number of domain coordinates")
            domain.append(list(zip(vals[0::2], vals[1::2])))
        elif head == "cells":
            count = int(rest[0])
        else:
            if len(rest) != 8:
                raise ValueError(f"malformed cell line: {ln!r}")
            rows.append((SignedMatrix.from_label(head), [parse_scalar(v) for v in rest]))
    if count is None or count != len(rows):
        raise ValueError(f"cell count mismatch: header {count}, found {len(rows)}")
    n = len(rows)
    verts = np.empty((n, 3, 2), dtype=object)
    offs = np.empty((n, 2), dtype=object)
    mats = np.empty((n, 2, 2), dtype=np.int64)
    for k, (m, vals) in enumerate(rows):
        verts[k] = np.array(vals[:6], dtype=object).reshape(3, 2)
        offs[k] = vals[6:]
        mats[k] = m.matrix
    return PiecewiseAffineMap(verts, mats, offs, 1, domain, depth)


def save_cells(pm: PiecewiseAffineMap, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_cells(pm))


def load_cells(path) -> PiecewiseAffineMap:
    with open(path) as fh:
        return loads_cells(fh.read())
