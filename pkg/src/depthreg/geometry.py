"""Directions on the unit sphere, orthocomplement frames, and convex
polygon machinery for assembling bivariate depth contours.

All operations are pure functions on immutable inputs.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidDirectionError, InvalidInputError, UnsupportedDimensionError

UNIT_TOL = 1e-12
MERGE_TOL = 1e-9
DEFAULT_BOUND = 1e6


@dataclass
class DirectionFrame:
    """Unit direction u together with an orthonormal basis of its
    orthocomplement (columns of ``gamma``)."""

    u: np.ndarray
    gamma: np.ndarray

    @property
    def dim(self):
        return self.u.shape[0]


@dataclass
class DirectionGrid:
    """Ordered direction frames; for the planar case the angles are
    equispaced on [0, 2*pi)."""

    directions: list
    angles: np.ndarray = field(default=None)

    def __len__(self):
        return len(self.directions)

    def __iter__(self):
        return iter(self.directions)


@dataclass
class Halfspace2D:
    """Closed planar halfspace {y : normal . y >= offset}."""

    normal: np.ndarray
    offset: float


@dataclass
class ConvexPolygon:
    """Convex polygon with vertices in counterclockwise order, shape (k, 2)."""

    vertices: np.ndarray

    def __len__(self):
        return len(self.vertices)

    @property
    def area(self):
        return polygon_area(self.vertices)

    @property
    def centroid(self):
        return polygon_centroid(self.vertices)


def make_frame(u):
    """Normalize ``u`` and complete it to an orthogonal basis.

    Planar case: gamma is u rotated by -pi/2, i.e. (cos t, sin t) maps to
    (sin t, -cos t).  Higher dimensions use a Householder reflection pivoted
    on the largest-magnitude component, which keeps the result deterministic.
    """
    u = np.asarray(u, dtype=float).reshape(-1)
    if not np.all(np.isfinite(u)):
        raise InvalidDirectionError("direction must be finite", u=u.tolist())
    norm = np.linalg.norm(u)
    if norm <= 0.0:
        raise InvalidDirectionError("direction must be a nonzero vector")
    u = u / norm
    m = u.shape[0]
    if m < 2:
        raise UnsupportedDimensionError("directions live in dimension >= 2", m=m)
    if m == 2:
        gamma = np.array([[u[1]], [-u[0]]])
        return DirectionFrame(u=u, gamma=gamma)
    k = int(np.argmax(np.abs(u)))
    sigma = -math.copysign(1.0, u[k])
    v = u.copy()
    v[k] -= sigma
    h = np.eye(m) - 2.0 * np.outer(v, v) / (v @ v)
    gamma = np.delete(h, k, axis=1)
    return DirectionFrame(u=u, gamma=gamma)


def direction_grid(m, num_directions):
    """Equispaced frames on the unit circle; only m = 2 is supported."""
    if m != 2:
        raise UnsupportedDimensionError(
            "direction grids are only available for bivariate responses", m=m
        )
    if num_directions < 3:
        raise InvalidInputError("need at least 3 directions", M=num_directions)
    angles = 2.0 * np.pi * np.arange(num_directions) / num_directions
    frames = [make_frame(np.array([math.cos(a), math.sin(a)])) for a in angles]
    return DirectionGrid(directions=frames, angles=angles)


def grid_from_directions(directions):
    """DirectionGrid from explicit (possibly non-equispaced) unit vectors."""
    frames = [make_frame(np.asarray(u, dtype=float)) for u in directions]
    if frames and frames[0].dim == 2:
        angles = np.array([math.atan2(f.u[1], f.u[0]) for f in frames])
    else:
        angles = None
    return DirectionGrid(directions=frames, angles=angles)


def _clip_halfplane(vertices, normal, offset):
    """Sutherland-Hodgman clip of a convex polygon against one halfspace."""
    vals = vertices @ normal - offset
    out = []
    k = len(vertices)
    for i in range(k):
        p, vp = vertices[i], vals[i]
        q, vq = vertices[(i + 1) % k], vals[(i + 1) % k]
        if vp >= 0.0:
            out.append(p)
            if vq < 0.0:
                t = vp / (vp - vq)
                out.append(p + t * (q - p))
        elif vq >= 0.0:
            t = vp / (vp - vq)
            out.append(p + t * (q - p))
    return np.array(out) if out else np.empty((0, 2))


def _merge_close_vertices(vertices, tol=MERGE_TOL):
    if len(vertices) == 0:
        return vertices
    kept = [vertices[0]]
    for v in vertices[1:]:
        if np.linalg.norm(v - kept[-1]) > tol:
            kept.append(v)
    while len(kept) > 1 and np.linalg.norm(kept[0] - kept[-1]) <= tol:
        kept.pop()
    return np.array(kept)


def intersect_halfspaces(halfspaces, bound=DEFAULT_BOUND):
    """Intersect halfspaces with the square [-bound, bound]^2.

    Returns a counterclockwise ConvexPolygon, or None when the intersection
    is empty or degenerates to a point/segment.
    """
    if bound <= 0:
        raise InvalidInputError("bound must be positive", bound=bound)
    vertices = np.array(
        [[-bound, -bound], [bound, -bound], [bound, bound], [-bound, bound]], dtype=float
    )
    for hs in halfspaces:
        normal = np.asarray(hs.normal, dtype=float)
        if np.linalg.norm(normal) <= 0.0:
            raise InvalidInputError("halfspace normal must be nonzero")
        vertices = _clip_halfplane(vertices, normal, float(hs.offset))
        if len(vertices) < 3:
            return None
    vertices = _merge_close_vertices(vertices)
    if len(vertices) < 3 or polygon_area(vertices) <= 0.0:
        return None
    return ConvexPolygon(vertices=vertices)


def intersect_polygons(a, b):
    """Intersection of two convex polygons (None when empty)."""
    vertices = a.vertices
    bv = b.vertices
    k = len(bv)
    for i in range(k):
        edge = bv[(i + 1) % k] - bv[i]
        normal = np.array([-edge[1], edge[0]])
        vertices = _clip_halfplane(vertices, normal, normal @ bv[i])
        if len(vertices) < 3:
            return None
    vertices = _merge_close_vertices(vertices)
    if len(vertices) < 3 or polygon_area(vertices) <= 0.0:
        return None
    return ConvexPolygon(vertices=vertices)


def polygon_area(vertices):
    x, y = vertices[:, 0], vertices[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    return 0.5 * float(np.sum(x * yn - xn * y))


def polygon_centroid(vertices):
    x, y = vertices[:, 0], vertices[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = cross.sum() / 2.0
    if abs(area) < 1e-300:
        return vertices.mean(axis=0)
    cx = float(((x + xn) * cross).sum() / (6.0 * area))
    cy = float(((y + yn) * cross).sum() / (6.0 * area))
    return np.array([cx, cy])


def contains_point(polygon, point, tol=1e-9):
    """True when the point lies inside or on the polygon (CCW), within tol."""
    v = polygon.vertices
    k = len(v)
    p = np.asarray(point, dtype=float)
    for i in range(k):
        edge = v[(i + 1) % k] - v[i]
        if -edge[1] * (p[0] - v[i][0]) + edge[0] * (p[1] - v[i][1]) < -tol:
            return False
    return True


def touches_bounding_box(polygon, bound):
    """True when any vertex lies on the clipping square used to bootstrap
    the halfspace intersection (suggests an effectively unbounded region)."""
    reach = np.max(np.abs(polygon.vertices))
    return reach >= bound * (1.0 - 1e-9)


def _point_segment_distances(point, starts, ends):
    d = ends - starts
    lens2 = np.einsum("ij,ij->i", d, d)
    lens2 = np.where(lens2 <= 0.0, 1.0, lens2)
    t = np.clip(np.einsum("ij,ij->i", point - starts, d) / lens2, 0.0, 1.0)
    proj = starts + t[:, None] * d
    return np.hypot(point[0] - proj[:, 0], point[1] - proj[:, 1])


def _distance_to_boundary(point, starts, ends):
    return float(np.min(_point_segment_distances(point, starts, ends)))


def _inside_interval(p0, p1, vertices):
    """Parameter range of the segment p0 + t (p1 - p0), t in [0, 1], that
    lies inside the convex CCW polygon."""
    edges = np.roll(vertices, -1, axis=0) - vertices
    normals = np.column_stack([-edges[:, 1], edges[:, 0]])
    alpha = np.einsum("ij,ij->i", normals, p0 - vertices)
    beta = normals @ (p1 - p0)
    parallel = np.abs(beta) < 1e-300
    if np.any(parallel & (alpha < 0.0)):
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        crossing = -alpha / beta
    lo_candidates = crossing[(~parallel) & (beta > 0.0)]
    hi_candidates = crossing[(~parallel) & (beta < 0.0)]
    lo = max(0.0, lo_candidates.max()) if lo_candidates.size else 0.0
    hi = min(1.0, hi_candidates.min()) if hi_candidates.size else 1.0
    if lo > hi:
        return None
    return lo, hi


def _directed_hausdorff(src, dst):
    sv, dv = src.vertices, dst.vertices
    starts = dv
    ends = np.roll(dv, -1, axis=0)
    best = 0.0
    k = len(sv)
    for i in range(k):
        p0, p1 = sv[i], sv[(i + 1) % k]
        best = max(best, _distance_to_boundary(p0, starts, ends))
        # Inside the destination polygon the boundary distance is concave
        # along the edge, so its maximum can be interior; locate it by
        # ternary search on the inside sub-segment.
        span = _inside_interval(p0, p1, dv)
        if span is None:
            continue
        lo, hi = span
        if hi - lo <= 1e-15:
            continue
        seg = p1 - p0
        for _ in range(100):
            m1 = lo + (hi - lo) / 3.0
            m2 = hi - (hi - lo) / 3.0
            f1 = _distance_to_boundary(p0 + m1 * seg, starts, ends)
            f2 = _distance_to_boundary(p0 + m2 * seg, starts, ends)
            if f1 < f2:
                lo = m1
            elif f2 < f1:
                hi = m2
            else:
                lo, hi = m1, m2
            if hi - lo <= 1e-14:
                break
        best = max(best, _distance_to_boundary(p0 + 0.5 * (lo + hi) * seg, starts, ends))
    return best


def hausdorff_distance(a, b):
    """Symmetric Hausdorff distance between the boundaries of two convex
    polygons.  Exact up to the ternary-search tolerance (~1e-14 of the
    edge lengths)."""
    for poly in (a, b):
        if poly is None or len(poly) < 3:
            raise InvalidInputError("hausdorff_distance requires non-empty polygons")
    return max(_directed_hausdorff(a, b), _directed_hausdorff(b, a))


def polygon_to_json(polygon):
    """JSON-ready list of [y1, y2] pairs, counterclockwise."""
    return [[float(x), float(y)] for x, y in polygon.vertices]


def polygon_to_csv_rows(polygon):
    """Rows (vertex_index, y1, y2) matching the CSV export schema."""
    return [(i, float(x), float(y)) for i, (x, y) in enumerate(polygon.vertices)]
