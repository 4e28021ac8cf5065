"""
Manufactured solutions, error quantities and convergence-rate estimation.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.linalg import eigh

from heatbem.cq import BDF, ContourParameters, CQScheme
from heatbem.errors import ConvergenceError, GeometryError
from heatbem.geometry import Polygon, mesh_polygon, point_in_polygon, refine_uniform
from heatbem.kernel import heat_kernel_time, heat_kernel_time_gradient
from heatbem.operators import build_norm_operators
from heatbem.solver import DensityHistory, TransmissionProblem, solve_transmission
from heatbem.trace_spaces import (NORM_HMINUSHALF, X_SPACE, Y_SPACE, DiscreteNormOperators,
                                  TraceSpacePair, build_spaces, discrete_norm, l2_project)

logger = logging.getLogger(__name__)

ERROR_NAMES = ("E_phi", "E_lambda_0", "E_lambda_mhalf")
DEFAULT_ERROR_FLOOR = 1e-13


@dataclass(frozen=True)
class ManufacturedSolution:
    """
    u_-(x, t) = heat kernel of diffusivity m centered at x_sc, evaluated at
    t + t_lag for t > 0 and zero before; u_+ = 0.
    """
    x_sc: np.ndarray
    m: float
    t_lag: float
    kappa: float

    @property
    def rho(self) -> float:
        return self.kappa / self.m

    def u_minus(self, x: np.ndarray, t: float) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if t <= 0.0:
            return np.zeros(x.shape[0])
        return np.asarray(heat_kernel_time(self.m, x, self.x_sc, t + self.t_lag))

    def trace(self, points: np.ndarray, normals: np.ndarray, t: float) -> np.ndarray:
        return self.u_minus(points, t)

    def normal_derivative(self, points: np.ndarray, normals: np.ndarray, t: float) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if t <= 0.0:
            return np.zeros(points.shape[0])
        grad = heat_kernel_time_gradient(self.m, points, self.x_sc, t + self.t_lag)
        return np.sum(grad * normals, axis=-1)

    def beta0(self, points: np.ndarray, normals: np.ndarray, t: float) -> np.ndarray:
        return self.trace(points, normals, t)

    def beta1(self, points: np.ndarray, normals: np.ndarray, t: float) -> np.ndarray:
        return self.kappa * self.normal_derivative(points, normals, t)

    def problem(self, polygon: Polygon, T: float) -> TransmissionProblem:
        return TransmissionProblem(polygon=polygon, rho=self.rho, kappa=self.kappa,
                                   beta0=self.beta0, beta1=self.beta1, T=T)


def make_manufactured(x_sc: Sequence[float], m: float, t_lag: float, polygon: Polygon,
                      kappa: float = 1.2) -> ManufacturedSolution:
    """Point-source solution; the source must lie strictly outside the closed inclusion"""
    x_sc = np.asarray(x_sc, dtype=float).reshape(2)
    if m <= 0.0 or kappa <= 0.0:
        raise ValueError("m and kappa must be positive")
    if t_lag < 0.0:
        raise ValueError(f"t_lag must be nonnegative, got {t_lag}")
    edges = np.roll(polygon.vertices, -1, axis=0) - polygon.vertices
    seg_t = np.clip(np.sum((x_sc - polygon.vertices) * edges, axis=1) / np.sum(edges * edges, axis=1), 0.0, 1.0)
    dist = np.min(np.linalg.norm(x_sc - (polygon.vertices + seg_t[:, None] * edges), axis=1))
    if dist <= 1e-12 * polygon.diameter or point_in_polygon(polygon, x_sc[None, :])[0]:
        raise GeometryError(f"source point {tuple(x_sc)} must lie outside the inclusion")
    return ManufacturedSolution(x_sc=x_sc, m=m, t_lag=t_lag, kappa=kappa)


def boundary_l2_error(coeffs: np.ndarray, space: str, exact, t: float, spaces: TraceSpacePair) -> float:
    """||f(t) - f_h||_{L2(Gamma)} by panel quadrature"""
    points, weights, ref = spaces.panel_quadrature(spaces.quad_order + 4)
    normals = np.repeat(spaces.mesh.normals[:, None, :], ref.size, axis=1)
    values = np.asarray(exact(points.reshape(-1, 2), normals.reshape(-1, 2), t)).reshape(weights.shape)
    diff = values - spaces.evaluate(coeffs, space, ref)
    return float(np.sqrt(np.sum(weights * np.abs(diff) ** 2)))


@dataclass(frozen=True)
class ErrorSummary:
    e_phi: float
    e_lambda_0: float
    e_lambda_mhalf: float
    stage_errors: Optional[Dict[str, float]] = None

    def as_tuple(self):
        return self.e_phi, self.e_lambda_0, self.e_lambda_mhalf


def compute_errors(densities: DensityHistory, exact: ManufacturedSolution,
                   norms: Optional[DiscreteNormOperators] = None,
                   stage_errors: bool = False) -> ErrorSummary:
    """
    Maximum errors over the step times t_1 .. t_N.

    E_phi and E_lambda_0 are L2(Gamma) errors against the exact traces;
    E_lambda_mhalf is the V(1)-energy norm of Pi lambda(t_n) - lambda_n with
    Pi the L2 projection onto X_h. RK step values are the last stages.
    """
    spaces, scheme = densities.spaces, densities.scheme
    norms = norms or build_norm_operators(spaces)
    step_times = scheme.step_times()
    lam, phi = densities.step_lambda(), densities.step_phi()

    e_phi = e_lam = e_half = 0.0
    for n, t in enumerate(step_times):
        e_phi = max(e_phi, boundary_l2_error(phi[n], Y_SPACE, exact.trace, t, spaces))
        e_lam = max(e_lam, boundary_l2_error(lam[n], X_SPACE, exact.normal_derivative, t, spaces))
        projected = l2_project(lambda pts, nrm, t=t: exact.normal_derivative(pts, nrm, t), spaces, X_SPACE)
        e_half = max(e_half, discrete_norm(projected - lam[n], NORM_HMINUSHALF, norms))

    stages = None
    if stage_errors:
        times = scheme.node_times()
        stage_phi = stage_lam = 0.0
        for n in range(times.shape[0]):
            for j in range(times.shape[1]):
                t = float(times[n, j])
                stage_phi = max(stage_phi, boundary_l2_error(densities.phi[n, j], Y_SPACE, exact.trace, t, spaces))
                stage_lam = max(stage_lam, boundary_l2_error(densities.lam[n, j], X_SPACE,
                                                             exact.normal_derivative, t, spaces))
        stages = {"E_phi": stage_phi, "E_lambda_0": stage_lam}
    return ErrorSummary(e_phi=e_phi, e_lambda_0=e_lam, e_lambda_mhalf=e_half, stage_errors=stages)


@dataclass(frozen=True)
class RateFit:
    rate: float
    levels_used: int
    monotone: bool
    floor_reached: bool


def fit_rate(ks: Sequence[float], errors: Sequence[float], discard_coarsest: bool = True,
             error_floor: float = DEFAULT_ERROR_FLOOR) -> RateFit:
    """
    Least-squares slope of log(error) against log(k).

    Levels from the first one at the error floor onwards are left out: an
    error below 10 x floor, or a change between consecutive levels below it.
    """
    ks = np.asarray(ks, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if ks.size < 3:
        raise ConvergenceError(f"rate estimation needs at least 3 levels, got {ks.size}")
    plateau = 10.0 * error_floor
    end = errors.size
    for i in range(errors.size):
        if errors[i] < plateau or (i > 0 and abs(errors[i - 1] - errors[i]) < plateau):
            end = i
            break
    floor_reached = end < errors.size
    start = 1 if discard_coarsest else 0
    used_k, used_e = ks[start:end], errors[start:end]
    if used_k.size < 2:
        raise ConvergenceError("too few levels above the error floor to fit a rate")
    monotone = bool(np.all(np.diff(errors[:end]) < 0.0))
    if not monotone:
        logger.warning("Errors are not monotonically decreasing; the fit is preasymptotic")
    slope = np.polyfit(np.log(used_k), np.log(used_e), 1)[0]
    return RateFit(rate=float(slope), levels_used=int(used_k.size), monotone=monotone,
                   floor_reached=floor_reached)


def expected_rates(scheme: CQScheme) -> Dict[str, float]:
    """Expected and conjectured orders for E_phi and E_lambda in the boundary norms"""
    if scheme.kind == BDF:
        q = float(scheme.order)
        return {"phi": q, "lambda": q, "phi_conjectured": q, "lambda_conjectured": q}
    p, q = float(scheme.classical_order), float(scheme.stage_order)
    return {
        "phi": min(q + 0.75, 0.75 * p + 0.25 * q),
        "lambda": q,
        "phi_conjectured": min(q + 1.0, 0.75 * p + 0.25 * q + 1.0 / 16.0),
        "lambda_conjectured": q + 0.25,
    }


@dataclass(frozen=True)
class LevelResult:
    level: int
    k: float
    h: float
    n_steps: int
    n_panels: int
    errors: ErrorSummary


@dataclass
class ConvergenceRecord:
    scheme_name: str
    p: int
    levels: List[LevelResult] = field(default_factory=list)

    def add(self, result: LevelResult):
        if self.levels and not result.k < self.levels[-1].k:
            raise ConvergenceError("levels must have strictly decreasing step sizes")
        self.levels.append(result)

    @property
    def ks(self) -> np.ndarray:
        return np.array([lvl.k for lvl in self.levels])

    def series(self, name: str) -> np.ndarray:
        index = ERROR_NAMES.index(name)
        return np.array([lvl.errors.as_tuple()[index] for lvl in self.levels])


def estimate_rates(record: ConvergenceRecord, error_floor: float = DEFAULT_ERROR_FLOOR) -> Dict[str, RateFit]:
    """Observed orders of the three error quantities, coarsest level discarded"""
    if len(record.levels) < 3:
        raise ConvergenceError(f"rate estimation needs at least 3 levels, got {len(record.levels)}")
    return {name: fit_rate(record.ks, record.series(name), error_floor=error_floor) for name in ERROR_NAMES}


def run_convergence_study(polygon: Polygon, exact: ManufacturedSolution, scheme: CQScheme, p: int,
                          h0: float, T: float, levels: int, workers: int = 1,
                          stage_errors: bool = False, contour_points: Optional[int] = None,
                          monitor=None) -> ConvergenceRecord:
    """
    Halving ladder: level i uses k = k0 / 2**i and the base mesh refined i times.

    `scheme` fixes the method and the coarsest step size k0.
    """
    if levels < 1:
        raise ConvergenceError("levels must be at least 1")
    record = ConvergenceRecord(scheme_name=scheme.name, p=p)
    problem = exact.problem(polygon, T)
    mesh = mesh_polygon(polygon, h0)
    for level in range(levels):
        k = scheme.k / 2 ** level
        n_steps = max(1, int(round(T / k)))
        level_scheme = scheme.with_steps(k, n_steps)
        spaces = build_spaces(mesh, p)
        contour = ContourParameters.for_steps(n_steps, contour_points and contour_points * 2 ** level)
        densities = solve_transmission(problem, spaces, level_scheme, contour, workers)
        errors = compute_errors(densities, exact, stage_errors=stage_errors)
        result = LevelResult(level=level, k=k, h=mesh.h, n_steps=n_steps, n_panels=mesh.n_panels, errors=errors)
        record.add(result)
        logger.info("Level %d: k=%.5g h=%.5g E_phi=%.3e E_lambda_0=%.3e E_lambda_mhalf=%.3e",
                    level, k, mesh.h, *errors.as_tuple())
        if monitor is not None:
            monitor.record_level(result)
        mesh = refine_uniform(mesh)
    return record


def norm_consistency_constant(spaces: TraceSpacePair, norms: Optional[DiscreteNormOperators] = None) -> float:
    """
    Smallest C with ||x||_{V(1)} <= C ||x||_{L2} on X_h: the square root of
    the largest generalized eigenvalue of (V(1) Gram, L2 Gram).
    """
    norms = norms or build_norm_operators(spaces)
    eigenvalues = eigh(norms.v_one, norms.gram_x, eigvals_only=True)
    return float(np.sqrt(np.max(eigenvalues)))
