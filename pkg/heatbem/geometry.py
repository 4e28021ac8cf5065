"""
Closed polygonal boundaries and their panel meshes.

A polygon is stored counterclockwise, so the outward normal of a panel with
unit tangent (tx, ty) is (ty, -tx) and points from the inclusion into the
exterior domain.
"""

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from heatbem.errors import GeometryError

logger = logging.getLogger(__name__)

AREA_TOLERANCE = 1e-14


def signed_area(vertices: np.ndarray) -> float:
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    def on_segment(a, b, c):
        return (min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
                and min(a[1], b[1]) <= c[1] <= max(a[1], b[1]))

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 * d2 != 0 and d3 * d4 != 0:
        return True
    if d1 == 0 and on_segment(q1, q2, p1):
        return True
    if d2 == 0 and on_segment(q1, q2, p2):
        return True
    if d3 == 0 and on_segment(p1, p2, q1):
        return True
    if d4 == 0 and on_segment(p1, p2, q2):
        return True
    return False


@dataclass(frozen=True)
class Polygon:
    vertices: np.ndarray

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def edge_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.roll(self.vertices, -1, axis=0) - self.vertices, axis=1)

    @property
    def perimeter(self) -> float:
        return float(np.sum(self.edge_lengths))

    @property
    def area(self) -> float:
        return signed_area(self.vertices)

    @property
    def centroid(self) -> np.ndarray:
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        cross = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
        a = 0.5 * np.sum(cross)
        cx = np.sum((v[:, 0] + w[:, 0]) * cross) / (6.0 * a)
        cy = np.sum((v[:, 1] + w[:, 1]) * cross) / (6.0 * a)
        return np.array([cx, cy])

    @property
    def diameter(self) -> float:
        diff = self.vertices[:, None, :] - self.vertices[None, :, :]
        return float(np.max(np.linalg.norm(diff, axis=-1)))


def make_polygon(vertices: Sequence[Sequence[float]]) -> Polygon:
    """
    Validate a vertex list and return a counterclockwise polygon.

    Raises GeometryError for fewer than three vertices, repeated consecutive
    vertices, zero area or self-intersections.
    """
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] != 2:
        raise GeometryError("vertices must be a list of 2D points")
    if v.shape[0] < 3:
        raise GeometryError(f"a polygon needs at least 3 vertices, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise GeometryError("vertices must be finite")

    edges = np.roll(v, -1, axis=0) - v
    lengths = np.linalg.norm(edges, axis=1)
    scale = float(np.max(np.abs(v))) or 1.0
    if np.any(lengths <= 1e-14 * scale):
        raise GeometryError("consecutive vertices must be distinct")

    area = signed_area(v)
    if abs(area) <= AREA_TOLERANCE * scale * scale:
        raise GeometryError("degenerate polygon (zero area)")

    n = v.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                raise GeometryError(f"self-intersecting polygon: edges {i} and {j} cross")

    if area < 0.0:
        logger.debug("Reorienting clockwise polygon")
        v = v[::-1].copy()
    v.flags.writeable = False
    return Polygon(vertices=v)


@dataclass(frozen=True)
class BoundaryMesh:
    """
    Straight panels around a closed polygon.

    Panel i runs from node i to node (i + 1) % n_panels; `edge_index` maps
    panels to polygon edges and `is_corner` marks nodes at polygon vertices.
    """
    polygon: Polygon
    nodes: np.ndarray
    edge_index: np.ndarray
    is_corner: np.ndarray

    @property
    def n_panels(self) -> int:
        return self.nodes.shape[0]

    @property
    def starts(self) -> np.ndarray:
        return self.nodes

    @property
    def ends(self) -> np.ndarray:
        return np.roll(self.nodes, -1, axis=0)

    @property
    def lengths(self) -> np.ndarray:
        return np.linalg.norm(self.ends - self.starts, axis=1)

    @property
    def tangents(self) -> np.ndarray:
        return (self.ends - self.starts) / self.lengths[:, None]

    @property
    def normals(self) -> np.ndarray:
        t = self.tangents
        return np.column_stack([t[:, 1], -t[:, 0]])

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.starts + self.ends)

    @property
    def h(self) -> float:
        return float(np.max(self.lengths))

    @property
    def panel_nodes(self) -> np.ndarray:
        i = np.arange(self.n_panels)
        return np.column_stack([i, (i + 1) % self.n_panels])

    def map_points(self, t: np.ndarray) -> np.ndarray:
        """Physical points for reference parameters t in [0, 1]; shape (n_panels, len(t), 2)"""
        t = np.asarray(t, dtype=float)
        return self.starts[:, None, :] + t[None, :, None] * (self.ends - self.starts)[:, None, :]


def mesh_polygon(poly: Polygon, target_h: float) -> BoundaryMesh:
    """Split every polygon edge uniformly into panels no longer than target_h"""
    if not target_h > 0.0:
        raise GeometryError(f"target_h must be positive, got {target_h}")
    v = poly.vertices
    nodes, edge_index, corner = [], [], []
    for e, length in enumerate(poly.edge_lengths):
        count = max(1, int(np.ceil(length / target_h - 1e-12)))
        a, b = v[e], v[(e + 1) % poly.n_vertices]
        for j in range(count):
            nodes.append(a + (j / count) * (b - a))
            edge_index.append(e)
            corner.append(j == 0)
    mesh = BoundaryMesh(
        polygon=poly,
        nodes=np.array(nodes),
        edge_index=np.array(edge_index, dtype=int),
        is_corner=np.array(corner, dtype=bool),
    )
    logger.debug("Meshed polygon with %d panels (h=%.4g)", mesh.n_panels, mesh.h)
    return mesh


def refine_uniform(mesh: BoundaryMesh) -> BoundaryMesh:
    """Bisect every panel; old nodes keep their positions"""
    n = mesh.n_panels
    nodes = np.empty((2 * n, 2))
    nodes[0::2] = mesh.starts
    nodes[1::2] = mesh.midpoints
    is_corner = np.zeros(2 * n, dtype=bool)
    is_corner[0::2] = mesh.is_corner
    return BoundaryMesh(
        polygon=mesh.polygon,
        nodes=nodes,
        edge_index=np.repeat(mesh.edge_index, 2),
        is_corner=is_corner,
    )


def point_in_polygon(poly: Polygon, points: np.ndarray) -> np.ndarray:
    """Ray-casting inside test; points exactly on the boundary are unspecified"""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x, y = pts[:, 0][:, None], pts[:, 1][:, None]
    a = poly.vertices[None, :, :]
    b = np.roll(poly.vertices, -1, axis=0)[None, :, :]
    ay, by = a[..., 1], b[..., 1]
    straddles = (ay > y) != (by > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_cross = a[..., 0] + (y - ay) * (b[..., 0] - a[..., 0]) / (by - ay)
    crossings = np.sum(straddles & (x < x_cross), axis=1)
    return crossings % 2 == 1


def distance_to_boundary(mesh: BoundaryMesh, points: np.ndarray) -> np.ndarray:
    """Euclidean distance from each point to the nearest panel"""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    a = mesh.starts[None, :, :]
    d = (mesh.ends - mesh.starts)[None, :, :]
    rel = pts[:, None, :] - a
    t = np.clip(np.sum(rel * d, axis=-1) / np.sum(d * d, axis=-1), 0.0, 1.0)
    closest = a + t[..., None] * d
    return np.min(np.linalg.norm(pts[:, None, :] - closest, axis=-1), axis=1)
