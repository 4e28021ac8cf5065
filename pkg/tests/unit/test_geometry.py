"""
Unit tests for polygons and panel meshes
"""

import numpy as np
import pytest

from heatbem.config import PRESET_VERTICES
from heatbem.errors import GeometryError
from heatbem.geometry import (distance_to_boundary, make_polygon, mesh_polygon, point_in_polygon,
                              refine_uniform)


class TestMakePolygon:
    """Validation and orientation"""

    def test_unit_square(self, square):
        assert square.area == pytest.approx(1.0)
        assert square.perimeter == pytest.approx(4.0)
        assert square.diameter == pytest.approx(np.sqrt(2.0))
        np.testing.assert_allclose(square.centroid, [0.5, 0.5])

    def test_clockwise_input_is_reoriented(self):
        poly = make_polygon([[0, 0], [0, 1], [1, 1], [1, 0]])
        assert poly.area > 0.0

    def test_vertices_read_only(self, square):
        with pytest.raises(ValueError):
            square.vertices[0, 0] = 5.0

    @pytest.mark.parametrize("vertices", [
        [[0, 0], [1, 0]],
        [[0, 0], [1, 0], [1, 0], [0, 1]],
        [[0, 0], [1, 0], [2, 0]],
        [[0, 0], [1, 1], [1, 0], [0, 1]],
        [[0, 0], [1, 0], [float("nan"), 1]],
    ], ids=["too-few", "repeated", "collinear", "bowtie", "nan"])
    def test_invalid_polygons(self, vertices):
        with pytest.raises(GeometryError):
            make_polygon(vertices)

    @pytest.mark.parametrize("name", sorted(PRESET_VERTICES))
    def test_presets_are_valid(self, name):
        poly = make_polygon(PRESET_VERTICES[name])
        assert poly.area > 0.0


class TestBoundaryMesh:
    """Panel meshes of a polygon"""

    def test_square_panels(self, square):
        """h = 0.5 splits every unit edge in two"""
        mesh = mesh_polygon(square, 0.5)
        assert mesh.n_panels == 8
        assert np.sum(mesh.lengths) == pytest.approx(4.0)
        assert mesh.h == pytest.approx(0.5)
        assert np.count_nonzero(mesh.is_corner) == 4

    def test_outward_normals(self, quad):
        mesh = mesh_polygon(quad, 0.2)
        outside = mesh.midpoints + 1e-3 * mesh.normals
        inside = mesh.midpoints - 1e-3 * mesh.normals
        assert not np.any(point_in_polygon(quad, outside))
        assert np.all(point_in_polygon(quad, inside))

    def test_unit_normals_orthogonal_to_tangents(self, quad):
        mesh = mesh_polygon(quad, 0.3)
        np.testing.assert_allclose(np.linalg.norm(mesh.normals, axis=1), 1.0)
        np.testing.assert_allclose(np.sum(mesh.normals * mesh.tangents, axis=1), 0.0, atol=1e-15)

    def test_panels_respect_target(self, quad):
        mesh = mesh_polygon(quad, 0.15)
        assert mesh.h <= 0.15 + 1e-12

    def test_rejects_nonpositive_h(self, square):
        with pytest.raises(GeometryError):
            mesh_polygon(square, 0.0)

    def test_refine_uniform(self, square):
        mesh = mesh_polygon(square, 0.5)
        fine = refine_uniform(mesh)
        assert fine.n_panels == 16
        assert fine.h == pytest.approx(0.25)
        np.testing.assert_array_equal(fine.nodes[0::2], mesh.nodes)
        np.testing.assert_array_equal(fine.is_corner[0::2], mesh.is_corner)

    @pytest.mark.parametrize("name", sorted(PRESET_VERTICES))
    def test_repeated_refinement_keeps_perimeter(self, name):
        poly = make_polygon(PRESET_VERTICES[name])
        mesh = mesh_polygon(poly, 0.3)
        for _ in range(6):
            mesh = refine_uniform(mesh)
            assert np.sum(mesh.lengths) == pytest.approx(poly.perimeter, rel=1e-14)

    def test_normals_point_away_from_centroid(self, quad):
        """The quadrilateral is convex, so every panel faces away from its centroid"""
        mesh = refine_uniform(mesh_polygon(quad, 0.3))
        assert np.all(np.sum(mesh.normals * (mesh.midpoints - quad.centroid), axis=1) > 0.0)

    def test_map_points(self, square):
        mesh = mesh_polygon(square, 1.0)
        pts = mesh.map_points(np.array([0.0, 0.5, 1.0]))
        assert pts.shape == (4, 3, 2)
        np.testing.assert_allclose(pts[0, 1], [0.5, 0.0])
        np.testing.assert_allclose(pts[0, 2], mesh.starts[1])


class TestPointQueries:
    """Inside test and boundary distance"""

    def test_point_in_square(self, square):
        pts = np.array([[0.5, 0.5], [1.5, 0.5], [-0.1, 0.2], [0.9, 0.1]])
        np.testing.assert_array_equal(point_in_polygon(square, pts), [True, False, False, True])

    def test_point_in_horseshoe(self):
        poly = make_polygon(PRESET_VERTICES["horseshoe"])
        pts = np.array([[0.5, 0.6], [0.15, 0.6], [0.5, 0.15]])
        np.testing.assert_array_equal(point_in_polygon(poly, pts), [False, True, True])

    def test_distance_to_boundary(self, square):
        mesh = mesh_polygon(square, 0.5)
        pts = np.array([[0.5, 0.5], [2.0, 0.5], [0.25, 0.0]])
        np.testing.assert_allclose(distance_to_boundary(mesh, pts), [0.5, 1.0, 0.0], atol=1e-15)
