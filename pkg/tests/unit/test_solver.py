"""
Unit tests for the transmission solver and field postprocessing
"""

import logging

import numpy as np
import pytest

from heatbem.config import PRESET_VERTICES, parse_config
from heatbem.cq import bdf_scheme, parse_scheme
from heatbem.geometry import make_polygon, mesh_polygon
from heatbem.run_monitor import RunMonitor
from heatbem.solver import (BoundaryDataHistory, FieldSnapshot, SourceField, TransmissionProblem, circle_sources,
                            evaluate_fields, real_history, run_demo_simulation, sample_boundary_data,
                            solve_transmission, source_field, steps_for_times)
from heatbem.trace_spaces import X_SPACE, Y_SPACE, build_spaces
from heatbem.verification import boundary_l2_error, compute_errors, make_manufactured

INTERIOR_POINT = [0.5, 0.4]
EXTERIOR_POINT = [2.0, -0.5]


@pytest.fixture(scope="module")
def manufactured_run():
    """BDF2 solve of the point-source problem on the quadrilateral, N = 16"""
    polygon = make_polygon(PRESET_VERTICES["paper-quad"])
    exact = make_manufactured([1.5, 1.6], 0.8, 0.001, polygon, kappa=1.2)
    problem = exact.problem(polygon, 1.0)
    spaces = build_spaces(mesh_polygon(polygon, 0.25), 0)
    densities = solve_transmission(problem, spaces, bdf_scheme(2, 1.0 / 16.0, 16))
    return exact, problem, densities


class TestTransmissionProblem:
    """Problem parameters"""

    def test_diffusivity_ratio(self, square):
        problem = TransmissionProblem(polygon=square, rho=1.5, kappa=1.2)
        assert problem.m == pytest.approx(0.8)

    @pytest.mark.parametrize("field, value", [("rho", 0.0), ("kappa", -1.0), ("T", 0.0)])
    def test_rejects_nonpositive(self, square, field, value):
        kwargs = {"rho": 1.5, "kappa": 1.2, "T": 1.0}
        kwargs[field] = value
        with pytest.raises(ValueError):
            TransmissionProblem(polygon=square, **kwargs)


class TestBoundaryData:
    """Sampling of the jump data"""

    def test_shapes(self, square, square_spaces):
        exact = make_manufactured([1.5, 1.6], 0.8, 0.001, square)
        scheme = parse_scheme("radau:2", 0.25, 4)
        data = sample_boundary_data(exact.problem(square, 1.0), square_spaces, scheme)
        assert data.load0.shape == (4, 2, 8)
        assert data.b0.shape == (4, 2, 8)
        assert data.stacked().shape == (4, 2, 32)
        bdf = sample_boundary_data(exact.problem(square, 1.0), square_spaces, bdf_scheme(1, 0.25, 4))
        assert bdf.stacked().shape == (4, 32)

    def test_scaled(self, square, square_spaces):
        exact = make_manufactured([1.5, 1.6], 0.8, 0.001, square)
        data = sample_boundary_data(exact.problem(square, 1.0), square_spaces, bdf_scheme(1, 0.25, 4))
        np.testing.assert_allclose(data.scaled(3.0).stacked(), 3.0 * data.stacked())


class TestSolveTransmission:
    """Density solves"""

    def test_zero_data_gives_zero_densities(self, square, square_spaces):
        problem = TransmissionProblem(polygon=square, rho=1.5, kappa=1.2)
        densities = solve_transmission(problem, square_spaces, bdf_scheme(2, 0.25, 4))
        assert np.all(densities.lam == 0.0)
        assert np.all(densities.phi == 0.0)

    def test_linear_in_data(self, square, square_spaces):
        exact = make_manufactured([1.5, 1.6], 0.8, 0.001, square)
        problem = exact.problem(square, 1.0)
        scheme = bdf_scheme(2, 0.25, 4)
        data = sample_boundary_data(problem, square_spaces, scheme)
        once = solve_transmission(problem, square_spaces, scheme, data=data)
        twice = solve_transmission(problem, square_spaces, scheme, data=data.scaled(2.0))
        np.testing.assert_allclose(twice.lam, 2.0 * once.lam, atol=1e-12)
        np.testing.assert_allclose(twice.phi, 2.0 * once.phi, atol=1e-12)

    def test_rk_layout(self, square, square_spaces):
        exact = make_manufactured([1.5, 1.6], 0.8, 0.001, square)
        scheme = parse_scheme("radau:2", 0.25, 4)
        densities = solve_transmission(exact.problem(square, 1.0), square_spaces, scheme, workers=2)
        assert densities.lam.shape == (4, 2, 8)
        assert densities.phi.shape == (4, 2, 8)
        assert densities.node_count == 8
        np.testing.assert_array_equal(densities.step_phi(), densities.phi[:, -1, :])

    def test_real_data_logs_no_imaginary_warning(self, square, square_spaces, caplog):
        exact = make_manufactured([1.5, 1.6], 0.8, 0.001, square)
        with caplog.at_level(logging.WARNING, logger="heatbem"):
            solve_transmission(exact.problem(square, 1.0), square_spaces, bdf_scheme(2, 0.25, 4))
        assert "imaginary" not in caplog.text

    def test_complex_data_warns_about_imaginary_part(self, square, square_spaces, caplog):
        exact = make_manufactured([1.5, 1.6], 0.8, 0.001, square)
        problem = exact.problem(square, 1.0)
        scheme = bdf_scheme(2, 0.25, 4)
        data = sample_boundary_data(problem, square_spaces, scheme)
        rotated = BoundaryDataHistory(scheme, data.times, (1.0 + 0.5j) * data.load0, (1.0 + 0.5j) * data.load1,
                                      (1.0 + 0.5j) * data.b0, (1.0 + 0.5j) * data.b1)
        with caplog.at_level(logging.WARNING, logger="heatbem.solver"):
            densities = solve_transmission(problem, square_spaces, scheme, data=rotated)
        assert "Discarding imaginary part of the density history" in caplog.text
        assert np.isrealobj(densities.phi)
        reference = solve_transmission(problem, square_spaces, scheme, data=data)
        np.testing.assert_allclose(densities.phi, reference.phi, atol=1e-10)

    def test_manufactured_accuracy(self, manufactured_run):
        """Boundary errors are a small fraction of the solution size"""
        exact, _, densities = manufactured_run
        spaces = densities.spaces
        times = densities.scheme.step_times()
        phi_size = max(boundary_l2_error(np.zeros(spaces.dim_y), Y_SPACE, exact.trace, t, spaces) for t in times)
        lam_size = max(boundary_l2_error(np.zeros(spaces.dim_x), X_SPACE, exact.normal_derivative, t, spaces)
                       for t in times)
        errors = compute_errors(densities, exact)
        assert errors.e_phi < 0.25 * phi_size
        assert errors.e_lambda_0 < 0.5 * lam_size
        assert np.isfinite(errors.e_lambda_mhalf)


class TestEvaluateFields:
    """Potentials in the time domain"""

    def test_manufactured_fields(self, manufactured_run):
        exact, problem, densities = manufactured_run
        points = np.array([INTERIOR_POINT, EXTERIOR_POINT])
        snap = evaluate_fields(densities, problem, points, [16])[0]
        np.testing.assert_array_equal(snap.inside, [True, False])
        expected = exact.u_minus(np.array([INTERIOR_POINT]), 1.0)[0]
        assert snap.u_minus[0] == pytest.approx(expected, rel=0.15)
        assert abs(snap.u_plus[1]) < 0.15 * expected
        assert snap.u[0] == snap.u_minus[0]
        assert snap.regions == ["-", "+"]

    def test_step_zero_is_zero(self, manufactured_run):
        _, problem, densities = manufactured_run
        snap = evaluate_fields(densities, problem, np.array([INTERIOR_POINT]), [0])[0]
        assert snap.time == 0.0
        assert snap.u_minus[0] == 0.0 and snap.u_plus[0] == 0.0

    def test_step_out_of_range(self, manufactured_run):
        _, problem, densities = manufactured_run
        with pytest.raises(ValueError):
            evaluate_fields(densities, problem, np.array([INTERIOR_POINT]), [17])


class TestFieldSnapshot:
    """Total field assembly"""

    def test_source_added_outside(self):
        snap = FieldSnapshot(points=np.zeros((2, 2)), step=1, time=0.1, inside=np.array([True, False]),
                             u_minus=np.array([1.0, 9.0]), u_plus=np.array([9.0, 2.0]),
                             u_source=np.array([0.0, 0.5]))
        np.testing.assert_allclose(snap.u, [1.0, 2.5])


class TestSourceField:
    """Exterior point sources of the demo"""

    def test_circle_sources(self):
        sources = circle_sources(8, [0.5, 0.5], 0.9)
        assert sources.shape == (8, 2)
        np.testing.assert_allclose(np.linalg.norm(sources - 0.5, axis=1), 0.9)
        np.testing.assert_allclose(sources[0], [1.4, 0.5])

    def test_data_vanishes_before_start(self):
        field = source_field(circle_sources(4, [0.5, 0.5], 0.9))
        pts = np.array([[0.0, 0.0], [1.0, 0.5]])
        nrm = np.array([[0.0, -1.0], [1.0, 0.0]])
        assert np.all(field.beta0(pts, nrm, 0.0) == 0.0)
        assert np.all(field.beta1(pts, nrm, -0.5) == 0.0)
        assert np.all(field.beta0(pts, nrm, 0.1) > 0.0)

    def test_beta1_is_normal_derivative(self):
        field = SourceField(sources=np.array([[2.0, 0.5]]), t_lag=0.001)
        pts = np.array([[1.0, 0.5]])
        nrm = np.array([[1.0, 0.0]])
        h = 1e-6
        fd = (field.value(pts + [h, 0.0], 0.3) - field.value(pts - [h, 0.0], 0.3)) / (2 * h)
        assert field.beta1(pts, nrm, 0.3)[0] == pytest.approx(fd[0], rel=1e-6)

    def test_rejects_negative_lag(self):
        with pytest.raises(ValueError):
            source_field(np.array([[2.0, 0.0]]), t_lag=-1.0)


class TestSnapshotSteps:
    """Snapshot times rounded to the nearest step"""

    def test_demo_times(self):
        scheme = bdf_scheme(2, 1.0 / 16.0, 16)
        assert steps_for_times([0.0, 0.06, 0.2, 0.375, 0.75, 1.0], scheme) == [0, 1, 3, 6, 12, 16]

    def test_clipped(self):
        assert steps_for_times([5.0], bdf_scheme(1, 0.5, 2)) == [2]


class TestDemoSimulation:
    """Exterior-source demo on a coarse square"""

    def test_snapshots(self):
        config = parse_config({
            "geometry": [[0, 0], [1, 0], [1, 1], [0, 1]],
            "manufactured": False,
            "h": 0.5, "k": 0.25, "T": 1.0,
            "sources": {"count": 4, "center": [0.5, 0.5], "radius": 0.9},
            "snapshot_times": [0.0, 0.5, 1.0],
            "grid": {"x_min": -0.5, "x_max": 1.5, "y_min": -0.5, "y_max": 1.5, "nx": 5, "ny": 5},
        })
        with RunMonitor("fields") as monitor:
            snapshots = run_demo_simulation(config, monitor=monitor)
        assert [snap.step for snap in snapshots] == [0, 2, 4]
        assert monitor.counters["excluded_points"] == 8
        for snap in snapshots:
            assert snap.points.shape == (17, 2)
            assert np.all(np.isfinite(snap.u))
        assert np.all(snapshots[0].u[snapshots[0].inside] == 0.0)
