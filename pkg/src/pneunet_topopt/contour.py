"""Marching-squares iso-contours of an element field on its centroid grid.

The field is padded with a ring of void so every contour closes.  Loops are
oriented with solid (values above the level) on the left, which makes outer
boundaries counter-clockwise and hole boundaries clockwise.  Saddle cells are
resolved by the average of their four corners: when the average is above the
level the solid corners are joined.
"""

from __future__ import annotations

import numpy as np

from ._validation import ValidationError


class EmptyContourError(ValueError):
    """The field does not cross the requested level anywhere."""


# cell edges by index: 0 bottom, 1 right, 2 top, 3 left (counter-clockwise);
# edge k runs from corner k to corner k + 1, corners are
# (i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)
_CORNERS = ((0, 0), (1, 0), (1, 1), (0, 1))


def _edge_key(i: int, j: int, edge: int) -> tuple[str, int, int]:
    """Global id of a cell edge shared by the two neighbouring cells."""
    if edge == 0:
        return ("h", i, j)
    if edge == 2:
        return ("h", i, j + 1)
    if edge == 3:
        return ("v", i, j)
    return ("v", i + 1, j)


def _cell_segments(high: list[bool], average_high: bool) -> list[tuple[int, int]]:
    """Directed (from_edge, to_edge) pairs with high corners on the left.

    Walking the cell boundary counter-clockwise, an edge is "falling" when it
    goes from a high to a low corner and "rising" otherwise.  Each segment
    starts on a falling edge and ends on a rising edge.
    """
    falling = [e for e in range(4) if high[e] and not high[(e + 1) % 4]]
    rising = [e for e in range(4) if not high[e] and high[(e + 1) % 4]]
    if not falling:
        return []
    if len(falling) == 1:
        return [(falling[0], rising[0])]
    # saddle: pair each falling edge with the next rising edge when the
    # centre is solid (low corners cut off), with the previous one otherwise
    step = 1 if average_high else -1
    return [(e, (e + step) % 4) for e in falling]


def marching_squares(values: np.ndarray, level: float = 0.5) -> list[np.ndarray]:
    """Closed contour loops of a 2-D array ``values[j, i]`` in grid coordinates.

    Returns a list of ``(k, 2)`` arrays of ``(i, j)`` points; the last point
    repeats the first.  Grid index ``(0, 0)`` is the first entry of the
    unpadded array.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise ValidationError("contour input must be a 2-D array")
    if not np.all(np.isfinite(values)):
        raise ValidationError("contour input contains NaN or inf")
    if np.all(values > level) or np.all(values <= level):
        kind = "solid" if np.all(values > level) else "void"
        raise EmptyContourError(f"no contour at level {level}: the field is all {kind}")
    pad = np.pad(values, 1, constant_values=min(0.0, level - 1.0))
    high = pad > level
    ny, nx = pad.shape

    def point(i: int, j: int, edge: int) -> tuple[float, float]:
        (ai, aj), (bi, bj) = _CORNERS[edge], _CORNERS[(edge + 1) % 4]
        va, vb = pad[j + aj, i + ai], pad[j + bj, i + bi]
        t = (level - va) / (vb - va)
        return (i + ai + t * (bi - ai) - 1.0, j + aj + t * (bj - aj) - 1.0)

    nxt: dict[tuple, tuple] = {}
    coords: dict[tuple, tuple[float, float]] = {}
    for j in range(ny - 1):
        for i in range(nx - 1):
            corners = [bool(high[j + dj, i + di]) for di, dj in _CORNERS]
            if all(corners) or not any(corners):
                continue
            avg = np.mean([pad[j + dj, i + di] for di, dj in _CORNERS]) > level
            for a, b in _cell_segments(corners, avg):
                ka, kb = _edge_key(i, j, a), _edge_key(i, j, b)
                nxt[ka] = kb
                coords.setdefault(ka, point(i, j, a))
                coords.setdefault(kb, point(i, j, b))

    loops = []
    remaining = dict(nxt)
    for start in sorted(nxt):
        if start not in remaining:
            continue
        loop = [start]
        key = remaining.pop(start)
        while key != start:
            loop.append(key)
            key = remaining.pop(key)
        pts = np.array([coords[k] for k in loop + [start]])
        loops.append(pts)
    return loops


def signed_area(loop: np.ndarray) -> float:
    """Shoelace area; positive for counter-clockwise loops."""
    x, y = loop[:, 0], loop[:, 1]
    return 0.5 * float(np.sum(x[:-1] * y[1:] - x[1:] * y[:-1]))


def element_contours(rho_bar, nex: int, ney: int, lx: float, ly: float,
                     level: float = 0.5) -> list[np.ndarray]:
    """Contours of an element field in physical coordinates (metres).

    Element ``e = ey * nex + ex`` sits at its centroid
    ``((ex + 0.5) dx, (ey + 0.5) dy)``.
    """
    grid = np.asarray(rho_bar, dtype=float).reshape(ney, nex)
    dx, dy = lx / nex, ly / ney
    return [np.column_stack([(p[:, 0] + 0.5) * dx, (p[:, 1] + 0.5) * dy])
            for p in marching_squares(grid, level)]


def contours_to_csv(loops: list[np.ndarray]) -> str:
    lines = ["loop,vertex,x_mm,y_mm"]
    for k, loop in enumerate(loops):
        for v, (x, y) in enumerate(loop):
            lines.append(f"{k},{v},{x * 1e3:.6f},{y * 1e3:.6f}")
    return "\n".join(lines) + "\n"


def contours_to_svg(loops: list[np.ndarray], lx: float, ly: float) -> str:
    """SVG drawing in millimetres; the y axis is flipped so +y points up."""
    w, h = lx * 1e3, ly * 1e3
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:g}mm" height="{h:g}mm" '
        f'viewBox="0 0 {w:g} {h:g}">',
        f'  <rect x="0" y="0" width="{w:g}" height="{h:g}" fill="none" stroke="#999" stroke-width="0.2"/>',
    ]
    if loops:
        d = []
        for loop in loops:
            pts = [f"{x * 1e3:.4f},{h - y * 1e3:.4f}" for x, y in loop[:-1]]
            d.append("M " + " L ".join(pts) + " Z")
        out.append(f'  <path d="{" ".join(d)}" fill="#333" fill-rule="evenodd" stroke="black" '
                   'stroke-width="0.2"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
