import logging
from typing import Dict

import numpy as np

from heatbem.geometry import BoundaryMesh, distance_to_boundary
from heatbem.operators import NEAR_POINT_TOLERANCE

logger = logging.getLogger(__name__)


class PointFilter:
    def __init__(self, mesh: BoundaryMesh, tolerance: float = NEAR_POINT_TOLERANCE):
        self.mesh = mesh
        self.band = tolerance * mesh.polygon.diameter

    def filter_points(self, points: np.ndarray) -> Dict:
        """
        Screen field evaluation points before potential evaluation.
        Returns: {"points": kept points, "kept": indices, "excluded": indices, "reasons": [...]}
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        result = {
            "points": points,
            "kept": np.arange(points.shape[0]),
            "excluded": [],
            "reasons": []
        }

        # 1. Non-finite coordinates
        finite = np.all(np.isfinite(points), axis=1)
        for i in np.flatnonzero(~finite):
            result["excluded"].append(int(i))
            result["reasons"].append(f"point {i}: non-finite coordinates")

        # 2. Points on (or numerically on) the boundary
        dist = np.full(points.shape[0], np.inf)
        if np.any(finite):
            dist[finite] = distance_to_boundary(self.mesh, points[finite])
        for i in np.flatnonzero(finite & (dist <= self.band)):
            result["excluded"].append(int(i))
            result["reasons"].append(f"point {i}: on the boundary (distance {dist[i]:.3g})")

        if result["excluded"]:
            keep = np.setdiff1d(np.arange(points.shape[0]), result["excluded"])
            result["kept"] = keep
            result["points"] = points[keep]
            logger.warning("Excluded %d of %d evaluation points", len(result["excluded"]), points.shape[0])
        return result
