"""
Modified Bessel functions K0, K1 of complex argument and the heat kernels.

In the Laplace domain the heat equation becomes  Delta U - s U = 0, whose
fundamental solution in the plane is  G(s; x, y) = K0(sqrt(s) |x - y|) / (2 pi).
"""

import logging
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
from scipy import special

from heatbem.errors import KernelDomainError, SingularPointError

logger = logging.getLogger(__name__)

SERIES_RADIUS = 2.0
SERIES_TERMS = 30
SINGULAR_CUTOFF = 1e-14

ArrayLike = Union[complex, np.ndarray]


@dataclass(frozen=True)
class LaplaceFrequency:
    s: complex

    def __post_init__(self):
        s = complex(self.s)
        if not np.isfinite(s):
            raise KernelDomainError(f"frequency must be finite, got {self.s}")
        if s.imag == 0.0 and s.real <= 0.0:
            raise KernelDomainError(f"frequency {s} lies on the cut (-inf, 0]")
        object.__setattr__(self, "s", s)

    @property
    def root(self) -> complex:
        return complex(np.sqrt(self.s))

    def scaled(self, factor: float) -> "LaplaceFrequency":
        return LaplaceFrequency(self.s * factor)


def as_frequency(s) -> LaplaceFrequency:
    return s if isinstance(s, LaplaceFrequency) else LaplaceFrequency(s)


# Ascending series coefficients: c0_k = 1/(k!)^2, c1_k = 1/(k!(k+1)!),
# psi(k+1) = -gamma + H_k.
_k = np.arange(SERIES_TERMS)
_C0 = 1.0 / special.factorial(_k) ** 2
_C1 = 1.0 / (special.factorial(_k) * special.factorial(_k + 1))
_PSI0 = special.digamma(_k + 1.0)
_PSI1 = special.digamma(_k + 1.0) + special.digamma(_k + 2.0)


def _powers(z: np.ndarray) -> np.ndarray:
    q = 0.25 * z * z
    p = np.ones(q.shape + (SERIES_TERMS,), dtype=complex)
    p[..., 1:] = np.cumprod(np.broadcast_to(q[..., None], q.shape + (SERIES_TERMS - 1,)), axis=-1)
    return p


def _i0_series(z: np.ndarray) -> np.ndarray:
    return _powers(z) @ _C0


def _k0_smooth_series(z: np.ndarray) -> np.ndarray:
    """K0(z) + log(z/2) I0(z), analytic in z**2"""
    return _powers(z) @ (_C0 * _PSI0)


def _k0_series(z: np.ndarray) -> np.ndarray:
    p = _powers(z)
    return -np.log(0.5 * z) * (p @ _C0) + p @ (_C0 * _PSI0)


def _k1_series(z: np.ndarray) -> np.ndarray:
    p = _powers(z)
    i1 = 0.5 * z * (p @ _C1)
    return 1.0 / z + np.log(0.5 * z) * i1 - 0.25 * z * (p @ (_C1 * _PSI1))


def _kv_scipy(order: int, z: np.ndarray) -> np.ndarray:
    # kve avoids spurious overflow flags; exp(-z) underflows cleanly to 0
    with np.errstate(under="ignore"):
        return special.kve(order, z) * np.exp(-z)


def _bessel_k_unchecked(order: int, z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    small = np.abs(z) <= SERIES_RADIUS
    if np.any(small):
        out[small] = _k0_series(z[small]) if order == 0 else _k1_series(z[small])
    if np.any(~small):
        out[~small] = _kv_scipy(order, z[~small])
    return out


def bessel_k(order: int, z: ArrayLike) -> ArrayLike:
    """
    Modified Bessel function of the second kind K0 or K1.

    Ascending series (with the logarithmic term) for |z| <= 2, the AMOS
    routines of scipy.special above. Requires Re z > 0.
    """
    if order not in (0, 1):
        raise ValueError(f"only orders 0 and 1 are supported, got {order}")
    scalar = np.isscalar(z)
    z = np.asarray(z, dtype=complex)
    if np.any(z.real <= 0.0):
        raise KernelDomainError("bessel_k requires Re z > 0")
    out = _bessel_k_unchecked(order, z)
    return complex(out) if scalar else out


def k0_log_split(root: complex, r: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Split K0(root * r) = -log(r) A(r) + B(r) with A, B analytic in r.

    A = I0(root r). B is taken from the series near the origin (valid at
    r = 0) and from K0 + log(r) I0 elsewhere.
    """
    r = np.asarray(r, dtype=float)
    z = root * r
    a = np.empty(r.shape, dtype=complex)
    b = np.empty(r.shape, dtype=complex)
    small = np.abs(z) <= SERIES_RADIUS
    if np.any(small):
        zs = z[small]
        a[small] = _i0_series(zs)
        b[small] = _k0_smooth_series(zs) - np.log(0.5 * root) * a[small]
    if np.any(~small):
        zl = z[~small]
        a[~small] = special.iv(0, zl)
        b[~small] = _kv_scipy(0, zl) + np.log(r[~small]) * a[~small]
    return a, b


def _distance(x: np.ndarray, y: np.ndarray, length_scale: float) -> Tuple[np.ndarray, np.ndarray]:
    diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r = np.linalg.norm(diff, axis=-1)
    if np.any(r < SINGULAR_CUTOFF * length_scale):
        raise SingularPointError("kernel evaluated at coincident points")
    return diff, r


def fundamental_solution(s, x, y, length_scale: float = 1.0) -> ArrayLike:
    """G(s; x, y) = K0(sqrt(s) |x - y|) / (2 pi)"""
    freq = as_frequency(s)
    _, r = _distance(x, y, length_scale)
    value = _bessel_k_unchecked(0, freq.root * r) / (2.0 * np.pi)
    return complex(value) if np.ndim(value) == 0 else value


def grad_y_fundamental_solution(s, x, y, length_scale: float = 1.0) -> np.ndarray:
    """Gradient of G in y; nu(y) . grad_y G is the double-layer kernel"""
    freq = as_frequency(s)
    diff, r = _distance(x, y, length_scale)
    root = freq.root
    factor = root * _bessel_k_unchecked(1, root * r) / (2.0 * np.pi * r)
    return np.asarray(factor)[..., None] * diff


def heat_kernel_time(m: float, x, x_src, t) -> ArrayLike:
    """
    Two-dimensional heat kernel (4 pi m t)^{-1} exp(-|x - x_src|^2 / (4 m t)),
    extended by zero for t <= 0.
    """
    if m <= 0.0:
        raise ValueError(f"diffusivity must be positive, got {m}")
    r2 = np.sum((np.asarray(x, dtype=float) - np.asarray(x_src, dtype=float)) ** 2, axis=-1)
    t = np.asarray(t, dtype=float)
    positive = t > 0.0
    safe_t = np.where(positive, t, 1.0)
    value = np.where(positive, np.exp(-r2 / (4.0 * m * safe_t)) / (4.0 * np.pi * m * safe_t), 0.0)
    return float(value) if np.ndim(value) == 0 else value


def heat_kernel_time_gradient(m: float, x, x_src, t) -> np.ndarray:
    """Spatial gradient in x of heat_kernel_time"""
    diff = np.asarray(x, dtype=float) - np.asarray(x_src, dtype=float)
    t = np.asarray(t, dtype=float)
    safe_t = np.where(t > 0.0, t, 1.0)
    value = heat_kernel_time(m, x, x_src, t)
    return (-np.asarray(value) / (2.0 * m * safe_t))[..., None] * diff
