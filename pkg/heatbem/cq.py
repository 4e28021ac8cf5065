"""
Convolution quadrature in time.

A causal convolution with a Laplace-domain family F(s) is discretized by
replacing s with delta(zeta) / k, where delta is the generating symbol of a
BDF method (scalar) or of a stiffly accurate Runge-Kutta method (s x s
matrix). Weights and convolutions are computed all at once: the histories
are scaled by R**n, transformed by an FFT over N_zeta points of the circle
|zeta| = R, each frequency is handled independently, and the result is
transformed back.

History layout: BDF histories hold N samples at t_1 .. t_N (index n is step
n + 1, the t_0 sample vanishes for causal data); RK histories hold N blocks
of stage samples at t_n + c k, n = 0 .. N - 1, and the last stage of block n
is the step value at t_{n + 1}.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy import linalg

from heatbem.errors import ContourError, KernelDomainError, SchemeError
from heatbem.kernel import LaplaceFrequency

logger = logging.getLogger(__name__)

MAX_BDF_ORDER = 6
EIGENVECTOR_CONDITION_LIMIT = 1e8
RADIAL_PERTURBATION = 1e-8
MACHINE_EPS = np.finfo(float).eps
# relative size of a discarded imaginary part that is reported
IMAGINARY_TOLERANCE = 1e-8

BDF = "bdf"
RK = "rk"


@dataclass(frozen=True)
class RKTableau:
    """Butcher tableau (Q, b, c) with classical order p and stage order q"""
    name: str
    Q: np.ndarray
    b: np.ndarray
    c: np.ndarray
    p: int
    q: int

    @property
    def stages(self) -> int:
        return self.b.size


def radau_iia(stages: int) -> RKTableau:
    """
    Radau IIA tableau by collocation.

    The nodes are the roots of d^{s-1}/dx^{s-1} [x^{s-1} (x - 1)^s]; Q follows
    from integrating the Lagrange polynomials, written with the Vandermonde
    matrix of the nodes.
    """
    if stages not in (2, 3):
        raise SchemeError(f"Radau IIA is available with 2 or 3 stages, got {stages}")
    poly = np.polynomial.Polynomial
    radau = poly([0.0, 1.0]) ** (stages - 1) * poly([-1.0, 1.0]) ** stages
    c = np.sort(radau.deriv(stages - 1).roots().real)
    c[-1] = 1.0
    vander = np.vander(c, increasing=True)
    scale = np.diag(1.0 / np.arange(1, stages + 1))
    Q = np.diag(c) @ vander @ scale @ np.linalg.inv(vander)
    b = Q[-1].copy()
    tableau = RKTableau(name=f"RadauIIA-{stages}", Q=Q, b=b, c=c, p=2 * stages - 1, q=stages)
    check_tableau(tableau)
    return tableau


def rk_stability(tableau: RKTableau, z: complex) -> complex:
    """r(z) = 1 + z b^T (I - z Q)^{-1} 1"""
    s = tableau.stages
    ones = np.ones(s)
    return complex(1.0 + z * tableau.b @ np.linalg.solve(np.eye(s) - z * tableau.Q, ones))


def check_tableau(tableau: RKTableau, samples: int = 64) -> None:
    """
    Check the hypotheses required of an RK method for CQ.

    (a) order conditions up to p, stage order q <= p - 1; (b) A-stability,
    sampled on the imaginary axis with the spectrum of Q in the right half
    plane; (c) stiff accuracy, b^T Q^{-1} = e_s^T; (d) Q invertible.
    """
    Q, b, c = tableau.Q, tableau.b, tableau.c
    s = tableau.stages
    if tableau.q > tableau.p - 1:
        raise SchemeError(f"{tableau.name}: (a) stage order {tableau.q} must be below order {tableau.p}")
    for j in range(1, tableau.p + 1):
        if abs(b @ c ** (j - 1) - 1.0 / j) > 1e-12:
            raise SchemeError(f"{tableau.name}: (a) quadrature condition of degree {j - 1} fails")
    for j in range(1, tableau.q + 1):
        if np.max(np.abs(Q @ c ** (j - 1) - c ** j / j)) > 1e-12:
            raise SchemeError(f"{tableau.name}: (a) stage condition of degree {j - 1} fails")
    if np.max(np.abs(Q @ np.ones(s) - c)) > 1e-12:
        raise SchemeError(f"{tableau.name}: Q 1 must equal c")

    if abs(np.linalg.det(Q)) < 1e-14:
        raise SchemeError(f"{tableau.name}: (d) Q is singular")
    if np.any(np.linalg.eigvals(Q).real <= 0.0):
        raise SchemeError(f"{tableau.name}: (b) spectrum of Q must lie in the right half plane")
    for y in np.logspace(-3, 3, samples):
        if abs(rk_stability(tableau, 1j * y)) > 1.0 + 1e-12:
            raise SchemeError(f"{tableau.name}: (b) |r(iy)| > 1 at y={y:.3g}")

    e_s = np.zeros(s)
    e_s[-1] = 1.0
    if np.max(np.abs(np.linalg.solve(Q.T, b) - e_s)) > 1e-12:
        raise SchemeError(f"{tableau.name}: (c) method is not stiffly accurate")


@dataclass(frozen=True)
class CQScheme:
    """A BDF(q) or RK time discretization with step k and N steps"""
    kind: str
    k: float
    n_steps: int
    order: int = 0
    tableau: Optional[RKTableau] = None

    def __post_init__(self):
        if not self.k > 0.0:
            raise SchemeError(f"step size must be positive, got {self.k}")
        if self.n_steps < 1:
            raise SchemeError(f"number of steps must be at least 1, got {self.n_steps}")
        if self.kind == BDF:
            if not 1 <= self.order <= MAX_BDF_ORDER:
                raise SchemeError(f"BDF order must be between 1 and {MAX_BDF_ORDER}, got {self.order}")
        elif self.kind == RK:
            if self.tableau is None:
                raise SchemeError("RK scheme needs a tableau")
        else:
            raise SchemeError(f"unknown scheme kind {self.kind!r}")

    @property
    def stages(self) -> int:
        return 1 if self.kind == BDF else self.tableau.stages

    @property
    def name(self) -> str:
        return f"BDF{self.order}" if self.kind == BDF else self.tableau.name

    @property
    def classical_order(self) -> int:
        return self.order if self.kind == BDF else self.tableau.p

    @property
    def stage_order(self) -> int:
        return self.order if self.kind == BDF else self.tableau.q

    @property
    def end_time(self) -> float:
        return self.k * self.n_steps

    def node_times(self) -> np.ndarray:
        """Sample times of shape (N, stages)"""
        n = np.arange(self.n_steps, dtype=float)
        if self.kind == BDF:
            return ((n + 1.0) * self.k)[:, None]
        return n[:, None] * self.k + self.tableau.c[None, :] * self.k

    def step_times(self) -> np.ndarray:
        return (np.arange(self.n_steps) + 1.0) * self.k

    def delta(self, zeta: complex):
        if self.kind == BDF:
            return bdf_delta(self.order, zeta)
        return rk_delta(self.tableau, zeta)

    def with_steps(self, k: float, n_steps: int) -> "CQScheme":
        return CQScheme(kind=self.kind, k=k, n_steps=n_steps, order=self.order, tableau=self.tableau)


def bdf_scheme(order: int, k: float, n_steps: int) -> CQScheme:
    return CQScheme(kind=BDF, k=k, n_steps=n_steps, order=order)


def rk_scheme(tableau: RKTableau, k: float, n_steps: int) -> CQScheme:
    return CQScheme(kind=RK, k=k, n_steps=n_steps, tableau=tableau)


def parse_scheme(descriptor: str, k: float, n_steps: int) -> CQScheme:
    """'bdf:q' or 'radau:s'"""
    kind, sep, value = str(descriptor).strip().lower().partition(":")
    if not sep or not value.isdigit():
        raise SchemeError(f"scheme descriptor must look like 'bdf:2' or 'radau:2', got {descriptor!r}")
    if kind == "bdf":
        return bdf_scheme(int(value), k, n_steps)
    if kind == "radau":
        return rk_scheme(radau_iia(int(value)), k, n_steps)
    raise SchemeError(f"unknown scheme family {kind!r}")


def bdf_delta(q: int, zeta: complex) -> complex:
    """delta(zeta) = sum_{j=1}^q (1 - zeta)^j / j"""
    if not 1 <= q <= MAX_BDF_ORDER:
        raise SchemeError(f"BDF order must be between 1 and {MAX_BDF_ORDER}, got {q}")
    w = 1.0 - zeta
    return sum(w ** j / j for j in range(1, q + 1))


def rk_delta(tableau: RKTableau, zeta: complex, form: str = "inverse") -> np.ndarray:
    """
    Matrix symbol of a stiffly accurate RK method.

    form="inverse": (Q + zeta / (1 - zeta) 1 b^T)^{-1};
    form="rank_one": Q^{-1} - zeta Q^{-1} 1 b^T Q^{-1}.
    """
    if zeta == 1.0:
        raise SchemeError("delta(zeta) has a pole at zeta = 1")
    s = tableau.stages
    ones = np.ones(s)
    if form == "inverse":
        return np.linalg.inv(tableau.Q + (zeta / (1.0 - zeta)) * np.outer(ones, tableau.b))
    if form == "rank_one":
        q_inv = np.linalg.inv(tableau.Q)
        return q_inv - zeta * np.outer(q_inv @ ones, tableau.b @ q_inv)
    raise ValueError(f"unknown form {form!r}")


@dataclass(frozen=True)
class ContourParameters:
    n_zeta: int
    radius: float

    def __post_init__(self):
        if self.n_zeta < 2:
            raise ContourError(f"need at least 2 transform points, got {self.n_zeta}")
        if not 0.0 < self.radius < 1.0:
            raise ContourError(f"contour radius must lie in (0, 1), got {self.radius}")
        if self.radius ** self.n_zeta < MACHINE_EPS:
            raise ContourError(f"R**N_zeta = {self.radius ** self.n_zeta:.3g} is below machine precision")

    @classmethod
    def for_steps(cls, n_steps: int, n_zeta: Optional[int] = None) -> "ContourParameters":
        """N_zeta = 2 (N + 1) rounded up to a power of two, R = eps**(1 / (2 N_zeta))"""
        if n_zeta is None:
            n_zeta = 1 << int(np.ceil(np.log2(2 * (n_steps + 1))))
        elif n_zeta < n_steps + 1:
            raise ContourError(f"N_zeta={n_zeta} must be at least N + 1 = {n_steps + 1}")
        return cls(n_zeta=n_zeta, radius=MACHINE_EPS ** (1.0 / (2.0 * n_zeta)))

    def points(self) -> np.ndarray:
        l = np.arange(self.n_zeta)
        return self.radius * np.exp(-2j * np.pi * l / self.n_zeta)


def cq_frequencies(scheme: CQScheme, contour: ContourParameters) -> List[Tuple[complex, object]]:
    """(zeta_l, delta(zeta_l) / k) for l = 0 .. N_zeta - 1"""
    out = []
    for l, zeta in enumerate(contour.points()):
        symbol = scheme.delta(zeta) / scheme.k
        if scheme.kind == BDF:
            _admissible(symbol, l)
        else:
            for lam in np.linalg.eigvals(symbol):
                if lam.real <= 0.0:
                    raise ContourError(f"eigenvalue {lam} of the symbol is not in the right half plane", l)
        out.append((complex(zeta), symbol))
    return out


def _admissible(s: complex, index: int) -> LaplaceFrequency:
    try:
        return LaplaceFrequency(s)
    except KernelDomainError as exc:
        raise ContourError(f"frequency {s} is not admissible; shrink the contour radius", index) from exc


# apply(s, vectors) -> values, vectors of shape (n_vec, dim), values of shape (n_vec, out_dim)
FrequencyApply = Callable[[complex, np.ndarray], np.ndarray]


def _diagonalize(scheme: CQScheme, zeta: complex, index: int):
    for attempt in range(2):
        delta = rk_delta(scheme.tableau, zeta)
        eigvals, eigvecs = linalg.eig(delta)
        if np.linalg.cond(eigvecs) <= EIGENVECTOR_CONDITION_LIMIT:
            return eigvals, eigvecs
        logger.warning("Ill-conditioned eigenvectors of delta(zeta) at frequency %d; perturbing radially", index)
        zeta = zeta * (1.0 - RADIAL_PERTURBATION)
    raise SchemeError(f"delta(zeta) is not safely diagonalizable at frequency {index}")


def _frequency_value(scheme: CQScheme, zeta: complex, index: int, block: np.ndarray,
                     apply: FrequencyApply) -> np.ndarray:
    """Apply the family at delta(zeta) / k to one transformed block of shape (stages, dim)"""
    try:
        if scheme.kind == BDF:
            s = _admissible(scheme.delta(zeta) / scheme.k, index).s
            return np.asarray(apply(s, block))
        eigvals, eigvecs = _diagonalize(scheme, zeta, index)
        rotated = np.linalg.solve(eigvecs, block)
        values = []
        for j, lam in enumerate(eigvals):
            s = _admissible(lam / scheme.k, index).s
            values.append(np.asarray(apply(s, rotated[j:j + 1]))[0])
        return eigvecs @ np.array(values)
    except ContourError as exc:
        if exc.frequency_index < 0:
            raise ContourError(str(exc), index) from exc
        raise
    except (KernelDomainError, np.linalg.LinAlgError) as exc:
        raise ContourError(f"evaluation failed at frequency {index}: {exc}", index) from exc


def _as_stage_history(g: np.ndarray, scheme: CQScheme) -> Tuple[np.ndarray, Tuple[int, ...]]:
    g = np.asarray(g)
    shape = g.shape
    if g.shape[0] != scheme.n_steps:
        raise ValueError(f"history has {g.shape[0]} samples, scheme has {scheme.n_steps} steps")
    if scheme.kind == BDF:
        g = g.reshape(scheme.n_steps, 1, -1)
    else:
        if g.ndim < 2 or g.shape[1] != scheme.stages:
            raise ValueError(f"RK history must have shape (N, {scheme.stages}, ...), got {shape}")
        g = g.reshape(scheme.n_steps, scheme.stages, -1)
    return g, shape


def _frequency_loop(g: np.ndarray, scheme: CQScheme, contour: ContourParameters,
                    apply: FrequencyApply, workers: int = 1) -> np.ndarray:
    """Scaled FFT, per-frequency apply, inverse FFT; g of shape (N, stages, dim)"""
    n_steps, n_zeta, radius = scheme.n_steps, contour.n_zeta, contour.radius
    if n_zeta < n_steps + 1:
        raise ContourError(f"N_zeta={n_zeta} must be at least N + 1 = {n_steps + 1}")
    scale = radius ** np.arange(n_steps)
    padded = np.zeros((n_zeta,) + g.shape[1:], dtype=g.dtype)
    padded[:n_steps] = g * scale[:, None, None]

    real = np.isrealobj(g)
    transformed = np.fft.rfft(padded, axis=0) if real else np.fft.fft(padded, axis=0)
    zetas = contour.points()[:transformed.shape[0]]
    logger.debug("CQ loop: %s, N=%d, N_zeta=%d, R=%.6f, %d frequencies",
                 scheme.name, n_steps, n_zeta, radius, transformed.shape[0])

    def work(l):
        return _frequency_value(scheme, zetas[l], l, transformed[l], apply)

    indices = range(transformed.shape[0])
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(work, indices))
    else:
        values = [work(l) for l in indices]
    spectrum = np.array(values)
    if real:
        _check_self_conjugate(spectrum, n_zeta, scheme.name)
        result = np.fft.irfft(spectrum, n=n_zeta, axis=0)
    else:
        result = np.fft.ifft(spectrum, axis=0)
    return result[:n_steps] / scale[:, None, None]


def _check_self_conjugate(spectrum: np.ndarray, n_zeta: int, name: str) -> None:
    """Values at zeta = R and zeta = -R of a real history must be real; irfft drops their imaginary parts"""
    bins = [0, n_zeta // 2] if n_zeta % 2 == 0 else [0]
    size = np.max(np.abs(spectrum)) if spectrum.size else 0.0
    if size == 0.0:
        return
    dropped = np.max(np.abs(np.imag(spectrum[bins])))
    if dropped > IMAGINARY_TOLERANCE * size:
        logger.warning("%s: discarding imaginary part %.3e (relative %.3e) of a real history",
                       name, dropped, dropped / size)


def forward_convolution(F: Callable, g: np.ndarray, scheme: CQScheme, contour: ContourParameters,
                        workers: int = 1) -> np.ndarray:
    """
    Discrete convolution sum_{m <= n} omega_{n-m}^F(k) g_m.

    F(s) returns a scalar or a matrix acting on the trailing dimension of g.
    The result keeps the history layout of g.
    """
    stage_history, shape = _as_stage_history(g, scheme)

    def apply(s, vectors):
        op = F(s)
        if np.ndim(op) == 0:
            return op * vectors
        return vectors @ np.asarray(op).T

    out = _frequency_loop(stage_history, scheme, contour, apply, workers)
    return _restore_layout(out, shape, scheme)


def _restore_layout(out: np.ndarray, shape: Tuple[int, ...], scheme: CQScheme) -> np.ndarray:
    if scheme.kind == BDF:
        out = out[:, 0, :]
        return out[:, 0] if len(shape) == 1 else out
    return out[..., 0] if len(shape) == 2 else out


def convolution_weights(F: Callable[[complex], complex], scheme: CQScheme,
                        contour: Optional[ContourParameters] = None) -> np.ndarray:
    """
    CQ weights omega_0 .. omega_{N-1} of a scalar family F.

    Shape (N,) for BDF; (N, s, s) blocks for RK schemes.
    """
    contour = contour or ContourParameters.for_steps(scheme.n_steps)
    if scheme.kind == BDF:
        impulse = np.zeros((scheme.n_steps, 1))
        impulse[0, 0] = 1.0
        return forward_convolution(F, impulse, scheme, contour)[:, 0]
    s = scheme.stages
    impulse = np.zeros((scheme.n_steps, s, s))
    impulse[0] = np.eye(s)
    return forward_convolution(F, impulse, scheme, contour)


def solve_convolution_system(assembler: Callable, data: np.ndarray, scheme: CQScheme,
                             contour: ContourParameters, workers: int = 1) -> np.ndarray:
    """
    All-at-once solve of A(delta(zeta)/k) X(zeta) = B(delta(zeta)/k) D(zeta).

    `assembler(s)` returns a FrequencySystem; `data` holds the stacked data
    vectors [load0, load1, b0, b1] per node. Returns unknown vectors per node
    in the layout of `data` with the trailing dimension dim X_h + dim Y_h.
    """
    stage_history, shape = _as_stage_history(data, scheme)

    def apply(s, vectors):
        system = assembler(s)
        return np.array([system.solve(system.rhs_stacked(v)) for v in vectors])

    out = _frequency_loop(stage_history, scheme, contour, apply, workers)
    return out[:, 0, :] if scheme.kind == BDF else out
