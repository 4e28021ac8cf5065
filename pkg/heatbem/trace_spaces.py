"""
Discrete trace spaces on a panel mesh.

X_h: discontinuous piecewise polynomials of degree p (Legendre modes per
panel), conforming in H^{-1/2}. Y_h: continuous piecewise polynomials of
degree p + 1 (Lagrange basis at Gauss-Lobatto points, shared end nodes),
conforming in H^{1/2}. Both have (p + 1) * n_panels degrees of freedom.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import legendre
from scipy.linalg import cho_factor, cho_solve

from heatbem.errors import SpaceError
from heatbem.geometry import BoundaryMesh
from heatbem.quadrature import gauss_rule

logger = logging.getLogger(__name__)

# f(points, normals) -> values, points/normals of shape (n, 2)
BoundaryFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]

X_SPACE = "X"
Y_SPACE = "Y"


class LegendreBasis:
    """P_a(2t - 1), a = 0..degree, on the reference panel t in [0, 1]"""

    def __init__(self, degree: int):
        self.degree = degree
        self.size = degree + 1

    def values(self, t: np.ndarray) -> np.ndarray:
        return legendre.legvander(2.0 * np.asarray(t) - 1.0, self.degree).T

    def derivatives(self, t: np.ndarray) -> np.ndarray:
        x = 2.0 * np.asarray(t) - 1.0
        out = np.zeros((self.size, x.size))
        for a in range(1, self.size):
            coef = np.zeros(a + 1)
            coef[a] = 1.0
            out[a] = 2.0 * legendre.legval(x, legendre.legder(coef))
        return out


class LobattoBasis:
    """Lagrange polynomials of given degree at Gauss-Lobatto points of [0, 1]"""

    def __init__(self, degree: int):
        if degree < 1:
            raise SpaceError("continuous space needs degree >= 1")
        self.degree = degree
        self.size = degree + 1
        interior = legendre.Legendre.basis(degree).deriv().roots().real if degree > 1 else np.array([])
        x = np.concatenate([[-1.0], np.sort(interior), [1.0]])
        self.nodes = 0.5 * (x + 1.0)
        self._coef = np.linalg.inv(legendre.legvander(x, degree))
        self._dcoef = legendre.legder(self._coef, axis=0)

    def values(self, t: np.ndarray) -> np.ndarray:
        x = 2.0 * np.asarray(t) - 1.0
        return (legendre.legvander(x, self.degree) @ self._coef).T

    def derivatives(self, t: np.ndarray) -> np.ndarray:
        x = 2.0 * np.asarray(t) - 1.0
        return 2.0 * (legendre.legvander(x, self.degree - 1) @ self._dcoef).T


@dataclass(frozen=True)
class DiscreteNormOperators:
    """Gram matrices realizing the discrete L2, H^{1/2} and H^{-1/2} norms"""
    gram_x: np.ndarray
    gram_y: np.ndarray
    v_one: np.ndarray
    w_one_plus_l2: np.ndarray


@dataclass(frozen=True, eq=False)
class TraceSpacePair:
    mesh: BoundaryMesh
    p: int
    quad_order: int
    x_basis: LegendreBasis = field(repr=False)
    y_basis: LobattoBasis = field(repr=False)

    @property
    def n_panels(self) -> int:
        return self.mesh.n_panels

    @property
    def dim_x(self) -> int:
        return (self.p + 1) * self.n_panels

    @property
    def dim_y(self) -> int:
        return (self.p + 1) * self.n_panels

    def dim(self, space: str) -> int:
        return self.dim_x if space == X_SPACE else self.dim_y

    @cached_property
    def x_dofs(self) -> np.ndarray:
        return np.arange(self.dim_x).reshape(self.n_panels, self.p + 1)

    @cached_property
    def y_dofs(self) -> np.ndarray:
        n, p = self.n_panels, self.p
        e = np.arange(n)
        interior = n + e[:, None] * p + np.arange(p)[None, :]
        return np.column_stack([e, interior, (e + 1) % n])

    def dofs(self, space: str) -> np.ndarray:
        return self.x_dofs if space == X_SPACE else self.y_dofs

    def basis(self, space: str):
        return self.x_basis if space == X_SPACE else self.y_basis

    def scatter(self, local: np.ndarray, rows: str, cols: str) -> np.ndarray:
        """Sum panel-pair blocks local[e, f, a, b] into a dense global matrix"""
        out = np.zeros((self.dim(rows), self.dim(cols)), dtype=local.dtype)
        r = self.dofs(rows)[:, None, :, None]
        c = self.dofs(cols)[None, :, None, :]
        r, c = np.broadcast_arrays(r, c)
        np.add.at(out, (r.ravel(), c.ravel()), local.ravel())
        return out

    def scatter_diagonal(self, local: np.ndarray, rows: str, cols: str) -> np.ndarray:
        """Sum same-panel blocks local[e, a, b] into a dense global matrix"""
        out = np.zeros((self.dim(rows), self.dim(cols)), dtype=local.dtype)
        r = self.dofs(rows)[:, :, None]
        c = self.dofs(cols)[:, None, :]
        r, c = np.broadcast_arrays(r, c)
        np.add.at(out, (r.ravel(), c.ravel()), local.ravel())
        return out

    def panel_quadrature(self, order: Optional[int] = None):
        """Points (P, nq, 2), physical weights (P, nq) and reference nodes"""
        t, w = gauss_rule(order or self.quad_order)
        points = self.mesh.map_points(t)
        weights = self.mesh.lengths[:, None] * w[None, :]
        return points, weights, t

    def evaluate(self, coeffs: np.ndarray, space: str, t: np.ndarray) -> np.ndarray:
        """Values of a discrete function at reference points t on every panel; (P, len(t))"""
        coeffs = np.asarray(coeffs)
        if coeffs.shape[-1] != self.dim(space):
            raise ValueError(f"coefficient length {coeffs.shape[-1]} does not match dim {space}_h")
        phi = self.basis(space).values(t)
        return np.einsum("...ea,at->...et", coeffs[..., self.dofs(space)], phi)

    def gram(self, space: str) -> np.ndarray:
        return self._gram_matrix(space, space)

    def duality(self) -> np.ndarray:
        """M[i, j] = <mu_i, phi_j> for mu_i in X_h, phi_j in Y_h"""
        return self._gram_matrix(X_SPACE, Y_SPACE)

    def _gram_matrix(self, rows: str, cols: str) -> np.ndarray:
        t, w = gauss_rule(self.p + 4)
        a = self.basis(rows).values(t)
        b = self.basis(cols).values(t)
        ref = np.einsum("at,bt,t->ab", a, b, w)
        local = self.mesh.lengths[:, None, None] * ref[None, :, :]
        return self.scatter_diagonal(local, rows, cols)

    def load_vector(self, f: BoundaryFunction, space: str, order: Optional[int] = None) -> np.ndarray:
        """b_i = integral over the boundary of f times basis function i"""
        points, weights, t = self.panel_quadrature(order or self.quad_order + 4)
        normals = np.repeat(self.mesh.normals[:, None, :], t.size, axis=1)
        values = np.asarray(f(points.reshape(-1, 2), normals.reshape(-1, 2)))
        values = values.reshape(self.n_panels, t.size)
        phi = self.basis(space).values(t)
        local = np.einsum("et,et,at->ea", values, weights, phi)
        out = np.zeros(self.dim(space), dtype=local.dtype)
        np.add.at(out, self.dofs(space).ravel(), local.ravel())
        return out

    @cached_property
    def _gram_factors(self):
        return {space: cho_factor(self.gram(space)) for space in (X_SPACE, Y_SPACE)}

    def solve_gram(self, rhs: np.ndarray, space: str) -> np.ndarray:
        try:
            return cho_solve(self._gram_factors[space], rhs)
        except np.linalg.LinAlgError as exc:
            raise SpaceError(f"singular Gram matrix for {space}_h") from exc


def build_spaces(mesh: BoundaryMesh, p: int, quad_order: Optional[int] = None) -> TraceSpacePair:
    if p < 0:
        raise SpaceError(f"polynomial degree must be nonnegative, got {p}")
    spaces = TraceSpacePair(
        mesh=mesh,
        p=p,
        quad_order=quad_order or p + 4,
        x_basis=LegendreBasis(p),
        y_basis=LobattoBasis(p + 1),
    )
    logger.debug("Built P%d-P%d spaces on %d panels", p, p + 1, mesh.n_panels)
    return spaces


def l2_project(f: BoundaryFunction, spaces: TraceSpacePair, space: str) -> np.ndarray:
    """Coefficients c with Gram c = (f, basis)"""
    return spaces.solve_gram(spaces.load_vector(f, space), space)


NORM_L2 = "L2"
NORM_HHALF = "Hhalf"
NORM_HMINUSHALF = "Hminushalf"


def discrete_norm(vec: np.ndarray, which: str, norms: DiscreteNormOperators,
                  space: str = X_SPACE) -> float:
    """
    sqrt(v^H G v) with G the Gram matrix of the chosen norm.

    Hminushalf uses V(1) on X_h, Hhalf uses W(1) + L2 on Y_h; `space` selects
    X_h or Y_h for the L2 norm.
    """
    if which == NORM_HMINUSHALF:
        gram = norms.v_one
    elif which == NORM_HHALF:
        gram = norms.w_one_plus_l2
    elif which == NORM_L2:
        gram = norms.gram_x if space == X_SPACE else norms.gram_y
    else:
        raise ValueError(f"unknown norm {which!r}")
    vec = np.asarray(vec)
    if vec.shape != (gram.shape[0],):
        raise ValueError(f"vector of shape {vec.shape} does not match Gram of size {gram.shape[0]}")
    value = np.real(np.vdot(vec, gram @ vec))
    return float(np.sqrt(max(value, 0.0)))
