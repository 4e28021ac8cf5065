"""
Transmission solver: boundary data sampling, the CQ-BEM density solve and
field postprocessing.

Unknowns are lambda = interior normal derivative (X_h) and phi = interior
trace (Y_h). The fields are
    u_-  = S(s/m) lambda - D(s/m) phi
    u_+  = -S(s) (kappa lambda - beta1) + D(s) (phi - beta0)
with m = kappa / rho, transformed to the time domain by CQ.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from heatbem.cq import (BDF, IMAGINARY_TOLERANCE, ContourParameters, CQScheme, forward_convolution,
                        solve_convolution_system)
from heatbem.geometry import Polygon, point_in_polygon
from heatbem.kernel import heat_kernel_time, heat_kernel_time_gradient
from heatbem.operators import assemble_frequency_system, potential_eval_matrix
from heatbem.point_filter import PointFilter
from heatbem.trace_spaces import X_SPACE, Y_SPACE, TraceSpacePair

logger = logging.getLogger(__name__)

# beta(points (n, 2), normals (n, 2), t) -> values (n,)
TimeBoundaryFunction = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


def zero_data(points: np.ndarray, normals: np.ndarray, t: float) -> np.ndarray:
    return np.zeros(np.asarray(points).shape[0])


@dataclass(frozen=True)
class TransmissionProblem:
    """
    Heat transmission through one inclusion.

    beta0 is the jump of the traces, beta1 the jump of the conormal
    derivatives kappa d_nu u_- - d_nu u_+. Both must vanish for t <= 0.
    """
    polygon: Polygon
    rho: float
    kappa: float
    beta0: TimeBoundaryFunction = zero_data
    beta1: TimeBoundaryFunction = zero_data
    T: float = 1.0

    def __post_init__(self):
        if not self.rho > 0.0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if not self.kappa > 0.0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if not self.T > 0.0:
            raise ValueError(f"end time must be positive, got {self.T}")

    @property
    def m(self) -> float:
        return self.kappa / self.rho


@dataclass(frozen=True)
class BoundaryDataHistory:
    """
    Sampled data per node, each of shape (N, stages, dim).

    load0/load1 are the exact-function loads <mu_i, beta0>, <beta1, phi_i>;
    b0 in Y_h and b1 in X_h are the L2 projections.
    """
    scheme: CQScheme
    times: np.ndarray
    load0: np.ndarray
    load1: np.ndarray
    b0: np.ndarray
    b1: np.ndarray

    def stacked(self) -> np.ndarray:
        data = np.concatenate([self.load0, self.load1, self.b0, self.b1], axis=-1)
        return data[:, 0, :] if self.scheme.kind == BDF else data

    def scaled(self, factor: float) -> "BoundaryDataHistory":
        return BoundaryDataHistory(self.scheme, self.times, factor * self.load0, factor * self.load1,
                                   factor * self.b0, factor * self.b1)


@dataclass(frozen=True)
class DensityHistory:
    """lambda (N, stages, dim X_h) and phi (N, stages, dim Y_h) at the scheme's nodes"""
    scheme: CQScheme
    spaces: TraceSpacePair
    lam: np.ndarray
    phi: np.ndarray
    contour: ContourParameters
    data: Optional[BoundaryDataHistory] = field(default=None, repr=False)

    @property
    def node_count(self) -> int:
        return self.lam.shape[0] * self.lam.shape[1]

    def step_lambda(self) -> np.ndarray:
        """Values at t_1 .. t_N; the last stage for RK schemes"""
        return self.lam[:, -1, :]

    def step_phi(self) -> np.ndarray:
        return self.phi[:, -1, :]


@dataclass(frozen=True)
class FieldSnapshot:
    points: np.ndarray
    step: int
    time: float
    inside: np.ndarray
    u_minus: np.ndarray
    u_plus: np.ndarray
    u_source: Optional[np.ndarray] = None

    @property
    def u(self) -> np.ndarray:
        exterior = self.u_plus if self.u_source is None else self.u_plus + self.u_source
        return np.where(self.inside, self.u_minus, exterior)

    @property
    def regions(self) -> List[str]:
        return ["-" if flag else "+" for flag in self.inside]


def sample_boundary_data(problem: TransmissionProblem, spaces: TraceSpacePair,
                         scheme: CQScheme) -> BoundaryDataHistory:
    """Loads and L2 projections of beta0, beta1 at every node time"""
    times = scheme.node_times()
    n, stages = times.shape
    shape_x = (n, stages, spaces.dim_x)
    shape_y = (n, stages, spaces.dim_y)
    load0, b1 = np.zeros(shape_x), np.zeros(shape_x)
    load1, b0 = np.zeros(shape_y), np.zeros(shape_y)
    for i in range(n):
        for j in range(stages):
            t = float(times[i, j])
            beta0 = lambda pts, nrm, t=t: problem.beta0(pts, nrm, t)
            beta1 = lambda pts, nrm, t=t: problem.beta1(pts, nrm, t)
            load0[i, j] = spaces.load_vector(beta0, X_SPACE)
            load1[i, j] = spaces.load_vector(beta1, Y_SPACE)
            b0[i, j] = spaces.solve_gram(spaces.load_vector(beta0, Y_SPACE), Y_SPACE)
            b1[i, j] = spaces.solve_gram(spaces.load_vector(beta1, X_SPACE), X_SPACE)
    return BoundaryDataHistory(scheme=scheme, times=times, load0=load0, load1=load1, b0=b0, b1=b1)


def real_history(values: np.ndarray, what: str) -> np.ndarray:
    """Real part of a CQ result, with a warning if the imaginary part is not negligible"""
    if not np.iscomplexobj(values) or values.size == 0:
        return values
    imag = np.max(np.abs(values.imag))
    size = np.max(np.abs(values.real))
    if imag > IMAGINARY_TOLERANCE * size:
        logger.warning("Discarding imaginary part of the %s: max |Im| = %.3e, max |Re| = %.3e", what, imag, size)
    return np.real(values)


def solve_transmission(problem: TransmissionProblem, spaces: TraceSpacePair, scheme: CQScheme,
                       contour: Optional[ContourParameters] = None, workers: int = 1,
                       data: Optional[BoundaryDataHistory] = None) -> DensityHistory:
    """Solve the fully discrete CQ-BEM system for (lambda, phi) at all nodes"""
    contour = contour or ContourParameters.for_steps(scheme.n_steps)
    data = data if data is not None else sample_boundary_data(problem, spaces, scheme)
    m, kappa = problem.m, problem.kappa
    logger.info("Solving %s on %d panels (p=%d), N=%d, N_zeta=%d",
                scheme.name, spaces.n_panels, spaces.p, scheme.n_steps, contour.n_zeta)

    def assembler(s):
        return assemble_frequency_system(s, m, kappa, spaces)

    solution = solve_convolution_system(assembler, data.stacked(), scheme, contour, workers)
    solution = real_history(solution, "density history").reshape(scheme.n_steps, scheme.stages, -1)
    return DensityHistory(
        scheme=scheme,
        spaces=spaces,
        lam=solution[..., :spaces.dim_x],
        phi=solution[..., spaces.dim_x:],
        contour=contour,
        data=data,
    )


def evaluate_fields(densities: DensityHistory, problem: TransmissionProblem, points: np.ndarray,
                    steps: Sequence[int], workers: int = 1) -> List[FieldSnapshot]:
    """
    u_- and u_+ at points off the boundary after the given step numbers.

    Step 0 is the initial state (zero field); step n is t_n = n k.
    """
    scheme, spaces = densities.scheme, densities.spaces
    points = np.atleast_2d(np.asarray(points, dtype=float))
    inside = point_in_polygon(problem.polygon, points)
    steps = [int(n) for n in steps]
    for n in steps:
        if not 0 <= n <= scheme.n_steps:
            raise ValueError(f"step {n} outside 0..{scheme.n_steps}")

    n_pts = points.shape[0]
    if any(n > 0 for n in steps):
        data = densities.data
        if data is None:
            data = sample_boundary_data(problem, spaces, scheme)
        m, kappa = problem.m, problem.kappa
        history = np.concatenate([
            densities.lam, densities.phi,
            kappa * densities.lam - data.b1, densities.phi - data.b0,
        ], axis=-1)
        dx, dy = spaces.dim_x, spaces.dim_y

        def family(s):
            out = np.zeros((2 * n_pts, 2 * (dx + dy)), dtype=complex)
            out[:n_pts, :dx] = potential_eval_matrix("S", s / m, spaces, points)
            out[:n_pts, dx:dx + dy] = -potential_eval_matrix("D", s / m, spaces, points)
            out[n_pts:, dx + dy:2 * dx + dy] = -potential_eval_matrix("S", s, spaces, points)
            out[n_pts:, 2 * dx + dy:] = potential_eval_matrix("D", s, spaces, points)
            return out

        g = history[:, 0, :] if scheme.kind == BDF else history
        fields = real_history(forward_convolution(family, g, scheme, densities.contour, workers), "potential history")
        if scheme.kind != BDF:
            fields = fields[:, -1, :]
    else:
        fields = None

    snapshots = []
    for n in steps:
        if n == 0:
            u_minus, u_plus = np.zeros(n_pts), np.zeros(n_pts)
        else:
            u_minus, u_plus = fields[n - 1, :n_pts], fields[n - 1, n_pts:]
        snapshots.append(FieldSnapshot(points=points, step=n, time=n * scheme.k, inside=inside,
                                       u_minus=u_minus, u_plus=u_plus))
    return snapshots


@dataclass(frozen=True)
class SourceField:
    """Sum of unit-diffusivity heat kernels at exterior sources, shifted by t_lag"""
    sources: np.ndarray
    t_lag: float = 0.001
    diffusivity: float = 1.0

    def value(self, x: np.ndarray, t: float) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        total = np.zeros(x.shape[0])
        for src in self.sources:
            total += heat_kernel_time(self.diffusivity, x, src, t + self.t_lag)
        return total

    def gradient(self, x: np.ndarray, t: float) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        total = np.zeros(x.shape)
        for src in self.sources:
            total += heat_kernel_time_gradient(self.diffusivity, x, src, t + self.t_lag)
        return total

    def beta0(self, points: np.ndarray, normals: np.ndarray, t: float) -> np.ndarray:
        if t <= 0.0:
            return np.zeros(np.asarray(points).shape[0])
        return self.value(points, t)

    def beta1(self, points: np.ndarray, normals: np.ndarray, t: float) -> np.ndarray:
        if t <= 0.0:
            return np.zeros(np.asarray(points).shape[0])
        return np.sum(self.gradient(points, t) * normals, axis=1)


def circle_sources(count: int, center: Sequence[float], radius: float) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(count) / max(count, 1)
    return np.asarray(center, dtype=float)[None, :] + radius * np.column_stack([np.cos(angles), np.sin(angles)])


def source_field(sources: np.ndarray, t_lag: float = 0.001) -> SourceField:
    """
    Exterior point-source field; its jump data beta0 = trace, beta1 = normal
    derivative make the total field u_src + u continuous across the boundary.
    """
    sources = np.asarray(sources, dtype=float).reshape(-1, 2)
    if t_lag < 0.0:
        raise ValueError(f"t_lag must be nonnegative, got {t_lag}")
    return SourceField(sources=sources, t_lag=t_lag)


def steps_for_times(times: Sequence[float], scheme: CQScheme) -> List[int]:
    """Nearest step number for each requested time, clipped to 0..N"""
    return [int(np.clip(np.rint(t / scheme.k), 0, scheme.n_steps)) for t in times]


def run_demo_simulation(config, workers: int = 1, points: Optional[np.ndarray] = None,
                        monitor=None) -> List[FieldSnapshot]:
    """
    Total field u_src + u for exterior sources on a circle around the inclusion.

    `config` is a RunConfig; snapshots at its snapshot times (rounded to the
    nearest step) on its point grid unless `points` are given.
    """
    from heatbem.config import build_geometry, build_scheme, grid_points

    polygon = build_geometry(config)
    scheme = build_scheme(config)
    spaces = config.build_spaces(polygon)
    field_src = source_field(circle_sources(config.sources.count, config.sources.center, config.sources.radius),
                             t_lag=config.t_lag)
    problem = TransmissionProblem(polygon=polygon, rho=config.rho, kappa=config.kappa,
                                  beta0=field_src.beta0, beta1=field_src.beta1, T=config.T)
    contour = ContourParameters.for_steps(scheme.n_steps, config.contour_points)
    densities = solve_transmission(problem, spaces, scheme, contour, workers)

    points = grid_points(config.grid) if points is None else np.atleast_2d(points)
    screened = PointFilter(spaces.mesh).filter_points(points)
    if monitor is not None and screened["reasons"]:
        monitor.record_excluded(screened["reasons"])
    points = screened["points"]
    steps = steps_for_times(config.snapshot_times, scheme)
    snapshots = evaluate_fields(densities, problem, points, steps, workers)
    out = []
    for snap in snapshots:
        u_src = np.where(snap.inside, 0.0, field_src.value(points, snap.time))
        out.append(FieldSnapshot(points=snap.points, step=snap.step, time=snap.time, inside=snap.inside,
                                 u_minus=snap.u_minus, u_plus=snap.u_plus, u_source=u_src))
    logger.info("Demo finished: %d snapshots at %d points", len(out), points.shape[0])
    return out
