"""Planar primitives, static obstacles and the collision predicates shared by
both planning stages.

All predicates are conservative: touching an obstacle boundary counts as a
collision, and so does leaving the workspace. The vehicle body is approximated
by a disc, which keeps every check rotation-invariant.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Point2",
    "Rect",
    "Circle",
    "ConvexPolygon",
    "Obstacle",
    "ObstacleMap",
    "distance",
    "segment_collides",
    "swept_path_collides",
]


def _require_finite(name, *values):
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True)
class Point2:
    """A point in the plane, metres."""

    x: float
    y: float

    def __post_init__(self):
        _require_finite("Point2 coordinates", self.x, self.y)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y])


def distance(p: Point2, q: Point2) -> float:
    """Euclidean distance between two points."""
    return math.hypot(p.x - q.x, p.y - q.y)


# ---------------------------------------------------------------------------
# Obstacle shapes
#
# Each shape answers three questions, in both scalar and vectorised form:
#   * does it contain a point (boundary inclusive)?
#   * how far is a point from it (0 inside)?
#   * how far is a segment from it (0 when intersecting)?
# Disc and inflated-segment tests reduce to distance comparisons.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle given by min and max corners."""

    min_x: float
    min_y: float
    max_x: float
    max_y: float

    def __post_init__(self):
        _require_finite("Rect corners", self.min_x, self.min_y, self.max_x, self.max_y)
        if not (self.min_x < self.max_x and self.min_y < self.max_y):
            raise ValueError("Rect requires min corner strictly below max corner")

    def contains_points(self, xy: np.ndarray) -> np.ndarray:
        x, y = xy[..., 0], xy[..., 1]
        return (x >= self.min_x) & (x <= self.max_x) & (y >= self.min_y) & (y <= self.max_y)

    def distance_to_points(self, xy: np.ndarray) -> np.ndarray:
        dx = np.maximum(np.maximum(self.min_x - xy[..., 0], 0.0), xy[..., 0] - self.max_x)
        dy = np.maximum(np.maximum(self.min_y - xy[..., 1], 0.0), xy[..., 1] - self.max_y)
        return np.hypot(dx, dy)

    def _edges(self) -> np.ndarray:
        c = np.array(
            [
                [self.min_x, self.min_y],
                [self.max_x, self.min_y],
                [self.max_x, self.max_y],
                [self.min_x, self.max_y],
            ]
        )
        return np.stack([c, np.roll(c, -1, axis=0)], axis=1)

    def segments_intersect(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        # Liang-Barsky slab clipping; boundary contact counts.
        p = np.atleast_2d(p)
        q = np.atleast_2d(q)
        d = q - p
        t0 = np.zeros(len(p))
        t1 = np.ones(len(p))
        hit = np.ones(len(p), dtype=bool)
        for axis, (lo, hi) in enumerate([(self.min_x, self.max_x), (self.min_y, self.max_y)]):
            di = d[:, axis]
            pi = p[:, axis]
            parallel = di == 0.0
            outside = parallel & ((pi < lo) | (pi > hi))
            hit &= ~outside
            with np.errstate(divide="ignore", invalid="ignore"):
                ta = (lo - pi) / di
                tb = (hi - pi) / di
            lo_t = np.where(parallel, 0.0, np.minimum(ta, tb))
            hi_t = np.where(parallel, 1.0, np.maximum(ta, tb))
            t0 = np.maximum(t0, lo_t)
            t1 = np.minimum(t1, hi_t)
        return hit & (t0 <= t1)

    def distance_to_segments(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        out = np.full(len(np.atleast_2d(p)), np.inf)
        inter = self.segments_intersect(p, q)
        out[inter] = 0.0
        if np.all(inter):
            return out
        edges = self._edges()
        rest = ~inter
        dmin = out[rest]
        for a, b in edges:
            dmin = np.minimum(dmin, _segment_segment_distance(p[rest], q[rest], a, b))
        out[rest] = dmin
        return out


@dataclass(frozen=True)
class Circle:
    cx: float
    cy: float
    radius: float

    def __post_init__(self):
        _require_finite("Circle", self.cx, self.cy, self.radius)
        if self.radius <= 0.0:
            raise ValueError("Circle radius must be positive")

    def contains_points(self, xy: np.ndarray) -> np.ndarray:
        return np.hypot(xy[..., 0] - self.cx, xy[..., 1] - self.cy) <= self.radius

    def distance_to_points(self, xy: np.ndarray) -> np.ndarray:
        return np.maximum(np.hypot(xy[..., 0] - self.cx, xy[..., 1] - self.cy) - self.radius, 0.0)

    def segments_intersect(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        c = np.array([self.cx, self.cy])
        return _point_segment_distance(c, p, q) <= self.radius

    def distance_to_segments(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        c = np.array([self.cx, self.cy])
        return np.maximum(_point_segment_distance(c, p, q) - self.radius, 0.0)


@dataclass(frozen=True)
class ConvexPolygon:
    """Strictly convex polygon, vertices counter-clockwise."""

    vertices: tuple  # of (x, y) pairs

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        object.__setattr__(self, "vertices", verts)
        for x, y in verts:
            _require_finite("polygon vertex", x, y)
        if len(verts) < 3:
            raise ValueError("polygon needs at least 3 vertices")
        v = np.array(verts)
        e = np.roll(v, -1, axis=0) - v
        cross = np.cross(e, np.roll(e, -1, axis=0))
        if np.any(cross <= 0.0):
            raise ValueError("polygon must be strictly convex and counter-clockwise")

    @property
    def _array(self) -> np.ndarray:
        return np.array(self.vertices)

    def contains_points(self, xy: np.ndarray) -> np.ndarray:
        v = self._array
        e = np.roll(v, -1, axis=0) - v  # (m, 2)
        rel = xy[..., None, :] - v  # (..., m, 2)
        cross = e[:, 0] * rel[..., 1] - e[:, 1] * rel[..., 0]
        return np.all(cross >= 0.0, axis=-1)

    def distance_to_points(self, xy: np.ndarray) -> np.ndarray:
        xy2 = np.atleast_2d(xy)
        v = self._array
        d = np.full(len(xy2), np.inf)
        for i in range(len(v)):
            a, b = v[i], v[(i + 1) % len(v)]
            d = np.minimum(d, _points_segment_distance(xy2, a, b))
        d[self.contains_points(xy2)] = 0.0
        return d if xy.ndim > 1 else d[0]

    def segments_intersect(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(p)
        q = np.atleast_2d(q)
        hit = self.contains_points(p) | self.contains_points(q)
        v = self._array
        for i in range(len(v)):
            a, b = v[i], v[(i + 1) % len(v)]
            hit |= _segments_cross(p, q, a, b)
        return hit

    def distance_to_segments(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        out = np.where(self.segments_intersect(p, q), 0.0, np.inf)
        v = self._array
        free = out > 0.0
        if np.any(free):
            d = out[free]
            for i in range(len(v)):
                a, b = v[i], v[(i + 1) % len(v)]
                d = np.minimum(d, _segment_segment_distance(p[free], q[free], a, b))
            out[free] = d
        return out


Obstacle = Rect | Circle | ConvexPolygon


# -- low-level kernels ------------------------------------------------------


def _points_segment_distance(pts: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each point in pts (n,2) to segment ab."""
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.hypot(pts[:, 0] - a[0], pts[:, 1] - a[1])
    t = np.clip(((pts - a) @ ab) / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.hypot(pts[:, 0] - proj[:, 0], pts[:, 1] - proj[:, 1])


def _point_segment_distance(c: np.ndarray, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Distance from a single point c to each segment (p[i], q[i])."""
    p = np.atleast_2d(p)
    q = np.atleast_2d(q)
    d = q - p
    denom = np.einsum("ij,ij->i", d, d)
    t = np.einsum("ij,ij->i", c - p, d)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(denom > 0.0, t / denom, 0.0)
    t = np.clip(t, 0.0, 1.0)
    proj = p + t[:, None] * d
    return np.hypot(c[0] - proj[:, 0], c[1] - proj[:, 1])


def _segments_cross(p: np.ndarray, q: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """True where segment (p[i], q[i]) intersects segment ab (touching counts)."""

    def orient(o, s, t):
        return (s[..., 0] - o[..., 0]) * (t[..., 1] - o[..., 1]) - (
            s[..., 1] - o[..., 1]
        ) * (t[..., 0] - o[..., 0])

    d1 = orient(p, q, a[None, :])
    d2 = orient(p, q, b[None, :])
    d3 = orient(a[None, :], b[None, :], p)
    d4 = orient(a[None, :], b[None, :], q)
    proper = ((d1 > 0) != (d2 > 0)) & ((d3 > 0) != (d4 > 0)) & (d1 != 0) & (d2 != 0) & (d3 != 0) & (d4 != 0)

    def on_seg(o, s, t):
        # collinear point t on segment os
        return (
            (np.minimum(o[..., 0], s[..., 0]) <= t[..., 0])
            & (t[..., 0] <= np.maximum(o[..., 0], s[..., 0]))
            & (np.minimum(o[..., 1], s[..., 1]) <= t[..., 1])
            & (t[..., 1] <= np.maximum(o[..., 1], s[..., 1]))
        )

    touch = (
        ((d1 == 0) & on_seg(p, q, a[None, :]))
        | ((d2 == 0) & on_seg(p, q, b[None, :]))
        | ((d3 == 0) & on_seg(a[None, :], b[None, :], p))
        | ((d4 == 0) & on_seg(a[None, :], b[None, :], q))
    )
    return proper | touch


def _segment_segment_distance(p: np.ndarray, q: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each segment (p[i], q[i]) to the fixed segment ab."""
    p = np.atleast_2d(p)
    q = np.atleast_2d(q)
    crossing = _segments_cross(p, q, a, b)
    d = np.minimum(
        np.minimum(_points_segment_distance(p, a, b), _points_segment_distance(q, a, b)),
        np.minimum(_point_segment_distance(a, p, q), _point_segment_distance(b, p, q)),
    )
    return np.where(crossing, 0.0, d)


# ---------------------------------------------------------------------------
# Obstacle map
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ObstacleMap:
    """Workspace bounds plus a list of static obstacles."""

    bounds: Rect
    obstacles: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        for obs in self.obstacles:
            if not self._touches_bounds(obs):
                raise ValueError(f"obstacle {obs!r} lies entirely outside map bounds")

    def _touches_bounds(self, obs: Obstacle) -> bool:
        b = self.bounds
        corners = np.array(
            [[b.min_x, b.min_y], [b.max_x, b.min_y], [b.max_x, b.max_y], [b.min_x, b.max_y]]
        )
        edges_p = corners
        edges_q = np.roll(corners, -1, axis=0)
        if np.any(obs.segments_intersect(edges_p, edges_q)):
            return True
        # obstacle fully inside, or bounds fully inside obstacle
        sample = np.array([[_shape_anchor(obs)[0], _shape_anchor(obs)[1]]])
        return bool(b.contains_points(sample)[0]) or bool(
            obs.contains_points(corners[:1])[0]
        )

    def points_inside_bounds(self, xy: np.ndarray, margin: float = 0.0) -> np.ndarray:
        b = self.bounds
        x, y = xy[..., 0], xy[..., 1]
        return (
            (x >= b.min_x + margin)
            & (x <= b.max_x - margin)
            & (y >= b.min_y + margin)
            & (y <= b.max_y - margin)
        )

    def points_collide(self, xy: np.ndarray, radius: float = 0.0) -> np.ndarray:
        """Disc-of-radius test against obstacles and bounds, per point."""
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        bad = ~self.points_inside_bounds(xy, margin=radius)
        for obs in self.obstacles:
            bad |= obs.distance_to_points(xy) <= radius
        return bad


def _shape_anchor(obs: Obstacle):
    if isinstance(obs, Rect):
        return (0.5 * (obs.min_x + obs.max_x), 0.5 * (obs.min_y + obs.max_y))
    if isinstance(obs, Circle):
        return (obs.cx, obs.cy)
    return obs.vertices[0]


def segment_collides(p: Point2, q: Point2, omap: ObstacleMap) -> bool:
    """True iff the closed segment pq touches any obstacle or exits the map."""
    pa = np.array([[p.x, p.y]])
    qa = np.array([[q.x, q.y]])
    both = np.vstack([pa, qa])
    if not np.all(omap.points_inside_bounds(both)):
        return True
    for obs in omap.obstacles:
        if bool(obs.segments_intersect(pa, qa)[0]):
            return True
    return False


def swept_path_collides(samples, footprint_radius: float, omap: ObstacleMap) -> bool:
    """Collision test for a disc of the given radius swept through the samples.

    Checks every sample's disc, plus every inter-sample segment against
    obstacles inflated by the footprint radius.
    """
    if footprint_radius < 0.0:
        raise ValueError("footprint_radius must be non-negative")
    xy = _as_xy_array(samples)
    if len(xy) == 0:
        raise ValueError("samples must be non-empty")
    if np.any(omap.points_collide(xy, footprint_radius)):
        return True
    if len(xy) > 1:
        p, q = xy[:-1], xy[1:]
        for obs in omap.obstacles:
            if np.any(obs.distance_to_segments(p, q) <= footprint_radius):
                return True
    return False


def _as_xy_array(samples) -> np.ndarray:
    if isinstance(samples, np.ndarray):
        return np.atleast_2d(samples.astype(float))
    return np.array([[s.x, s.y] if isinstance(s, Point2) else [s[0], s[1]] for s in samples])
