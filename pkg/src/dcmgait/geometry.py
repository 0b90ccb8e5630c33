"""Support polygons: convex hulls, winding-number containment, edge distance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .planner import BOTH, LEFT, RIGHT

BOUNDARY_TOL = 1e-12


@dataclass(frozen=True)
class SupportPolygon:
    vertices: np.ndarray  # (n, 2), counterclockwise, convex

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        object.__setattr__(self, "vertices", v)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise ValueError("support polygon needs at least 3 (x, y) vertices")
        if polygon_area(v) <= 0.0:
            raise ValueError("support polygon must be counterclockwise with positive area")

    @property
    def area(self) -> float:
        return polygon_area(self.vertices)

    @property
    def centroid(self) -> np.ndarray:
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        cross = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
        return ((v + w) * cross[:, None]).sum(axis=0) / (6.0 * self.area)

    @property
    def diameter(self) -> float:
        d = self.vertices[:, None, :] - self.vertices[None, :, :]
        return float(np.sqrt((d**2).sum(-1)).max())

    def inradius(self) -> float:
        """Radius of the largest inscribed circle (LP over the edge half-planes)."""
        from scipy.optimize import linprog

        v = self.vertices
        e = np.roll(v, -1, axis=0) - v
        n = np.column_stack([e[:, 1], -e[:, 0]]) / np.linalg.norm(e, axis=1)[:, None]
        # outward normal n_i: n_i . c + r <= n_i . v_i
        A = np.column_stack([n, np.ones(len(v))])
        b = (n * v).sum(axis=1)
        res = linprog([0, 0, -1], A_ub=A, b_ub=b, bounds=[(None, None)] * 2 + [(0, None)])
        return float(res.x[2])


def polygon_area(vertices) -> float:
    v = np.asarray(vertices, dtype=float)
    w = np.roll(v, -1, axis=0)
    return 0.5 * float(np.sum(v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]))


def convex_hull(points) -> np.ndarray:
    """Andrew's monotone chain; counterclockwise, collinear points dropped."""
    pts = sorted(set(map(tuple, np.asarray(points, dtype=float))))
    if len(pts) < 3:
        return np.array(pts)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def sole_polygon(position, sole_vertices, yaw: float = 0.0) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    R = np.array([[c, -s], [s, c]])
    return np.asarray(position, dtype=float)[:2] + np.asarray(sole_vertices) @ R.T


def support_polygon(stance: str, left_pos, right_pos, sole_vertices) -> SupportPolygon:
    """Stance sole in world frame, or the hull of both soles in double support."""
    if stance == LEFT:
        return SupportPolygon(sole_polygon(left_pos, sole_vertices))
    if stance == RIGHT:
        return SupportPolygon(sole_polygon(right_pos, sole_vertices))
    if stance == BOTH:
        pts = np.vstack([sole_polygon(left_pos, sole_vertices),
                         sole_polygon(right_pos, sole_vertices)])
        return SupportPolygon(convex_hull(pts))
    raise ValueError(f"unknown stance {stance!r}")


def _edges(poly: SupportPolygon) -> tuple[np.ndarray, np.ndarray]:
    v = poly.vertices
    return v, np.roll(v, -1, axis=0)


def distances_to_polygon(points, poly: SupportPolygon) -> np.ndarray:
    """Distance from each point to the polygon boundary (edges as segments)."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    a, b = _edges(poly)
    ab = b - a
    ap = p[:, None, :] - a[None, :, :]
    s = np.clip((ap * ab).sum(-1) / (ab * ab).sum(-1), 0.0, 1.0)
    closest = a[None] + s[..., None] * ab[None]
    return np.sqrt(((p[:, None, :] - closest) ** 2).sum(-1)).min(axis=1)


def distance_to_polygon(p, poly: SupportPolygon) -> float:
    return float(distances_to_polygon(p, poly)[0])


def winding_numbers(points, poly: SupportPolygon) -> np.ndarray:
    """Sunday's crossing-based winding number of the polygon around each point."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    a, b = _edges(poly)
    px, py = p[:, 0:1], p[:, 1:2]
    is_left = (b[:, 0] - a[:, 0]) * (py - a[:, 1]) - (px - a[:, 0]) * (b[:, 1] - a[:, 1])
    up = (a[:, 1] <= py) & (b[:, 1] > py) & (is_left > 0)
    down = (a[:, 1] > py) & (b[:, 1] <= py) & (is_left < 0)
    return up.sum(axis=1) - down.sum(axis=1)


def points_in_polygon(points, poly: SupportPolygon) -> np.ndarray:
    """Non-zero winding number, with boundary points counted as inside."""
    on_edge = distances_to_polygon(points, poly) <= BOUNDARY_TOL
    return on_edge | (winding_numbers(points, poly) != 0)


def point_in_polygon(p, poly: SupportPolygon) -> bool:
    return bool(points_in_polygon(p, poly)[0])


def signed_distances(points, poly: SupportPolygon) -> np.ndarray:
    """Negative inside, positive outside; zero on the boundary."""
    d = distances_to_polygon(points, poly)
    return np.where(points_in_polygon(points, poly), -d, d)
