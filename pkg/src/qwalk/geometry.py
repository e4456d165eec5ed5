"""Exact convex-polygon clipping for one-step jump laws of unimodular maps.

The image of the unit square under a unimodular matrix is a parallelogram
of area 1; its overlap with each integer tile is the probability of
jumping to that tile from a uniformly distributed start.
"""

from dataclasses import dataclass
from fractions import Fraction

from .errors import InvalidInput


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _dedupe(vertices):
    out = []
    for v in vertices:
        if not out or out[-1] != v:
            out.append(v)
    while len(out) > 1 and out[0] == out[-1]:
        out.pop()
    return out


@dataclass(frozen=True)
class RationalPolygon:
    """Convex polygon, counter-clockwise, with exact rational vertices."""
    vertices: tuple

    def __post_init__(self):
        verts = tuple((Fraction(x), Fraction(y)) for x, y in self.vertices)
        object.__setattr__(self, "vertices", verts)
        m = len(verts)
        for i in range(m):
            if verts[i] == verts[(i + 1) % m]:
                raise InvalidInput("duplicate consecutive vertices")
            if m >= 3 and _cross(verts[i], verts[(i + 1) % m], verts[(i + 2) % m]) < 0:
                raise InvalidInput("polygon is not convex and counter-clockwise")

    def translated(self, dx, dy):
        return RationalPolygon(tuple((x + dx, y + dy) for x, y in self.vertices))


def check_unimodular(M):
    (a, b), (c, d) = M
    if any(not isinstance(v, int) or v <= 0 for v in (a, b, c, d)):
        raise InvalidInput(f"matrix entries must be positive integers, got {M}")
    if a * d - b * c != 1:
        raise InvalidInput(f"matrix must have determinant 1, got {a * d - b * c}")


def image_parallelogram(M):
    """Image of the unit square: M(0,0), M(1,0), M(1,1), M(0,1)."""
    M = tuple(tuple(int(v) for v in row) for row in M)
    check_unimodular(M)
    (a, b), (c, d) = M
    return RationalPolygon(((0, 0), (a, c), (a + b, c + d), (b, d)))


def area(poly):
    verts = poly.vertices if isinstance(poly, RationalPolygon) else poly
    if verts is None or len(verts) < 3:
        return Fraction(0)
    s = Fraction(0)
    for (x0, y0), (x1, y1) in zip(verts, verts[1:] + verts[:1]):
        s += x0 * y1 - x1 * y0
    return abs(s) / 2


def _clip(vertices, inside, intersect):
    out = []
    m = len(vertices)
    for i in range(m):
        cur, nxt = vertices[i], vertices[(i + 1) % m]
        cin, nin = inside(cur), inside(nxt)
        if cin:
            out.append(cur)
        if cin != nin:
            out.append(intersect(cur, nxt))
    return out


def _x_cut(bound):
    def cut(p, q):
        t = (bound - p[0]) / (q[0] - p[0])
        return (bound, p[1] + t * (q[1] - p[1]))
    return cut


def _y_cut(bound):
    def cut(p, q):
        t = (bound - p[1]) / (q[1] - p[1])
        return (p[0] + t * (q[0] - p[0]), bound)
    return cut


def clip_to_tile(poly, tile):
    """Intersection with the closed square [k1, k1+1] x [k2, k2+1]; None if empty.

    The result can be degenerate (zero area) when the polygon only touches
    the tile along an edge.
    """
    k1, k2 = tile
    verts = list(poly.vertices)
    planes = (
        (lambda p: p[0] >= k1, _x_cut(Fraction(k1))),
        (lambda p: p[0] <= k1 + 1, _x_cut(Fraction(k1 + 1))),
        (lambda p: p[1] >= k2, _y_cut(Fraction(k2))),
        (lambda p: p[1] <= k2 + 1, _y_cut(Fraction(k2 + 1))),
    )
    for inside, cut in planes:
        if not verts:
            return None
        verts = _dedupe(_clip(verts, inside, cut))
    if len(verts) < 3:
        return None
    return RationalPolygon(_drop_collinear(verts)) if area(verts) else _Degenerate(tuple(verts))


def _drop_collinear(verts):
    m = len(verts)
    return tuple(verts[i] for i in range(m) if _cross(verts[i - 1], verts[i], verts[(i + 1) % m]) != 0)


@dataclass(frozen=True)
class _Degenerate:
    """Zero-area clip result (polygon touching a tile along an edge)."""
    vertices: tuple


def jump_distribution(M):
    """``[((k1, k2), probability), ...]`` for one step of ``M`` from a uniform start in a tile."""
    poly = image_parallelogram(M)
    xs = [v[0] for v in poly.vertices]
    ys = [v[1] for v in poly.vertices]
    out = []
    for k1 in range(int(min(xs)), int(max(xs))):
        for k2 in range(int(min(ys)), int(max(ys))):
            piece = clip_to_tile(poly, (k1, k2))
            a = area(piece) if piece is not None else 0
            if a:
                out.append(((k1, k2), a))
    return out
