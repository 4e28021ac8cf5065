"""
Galerkin matrices of the Laplace-domain boundary integral operators.

V, K, K^T and W of the kernel G(s; x, y) = K0(sqrt(s) |x - y|) / (2 pi) on a
TraceSpacePair, the transmission block system and the potential evaluation
matrices for postprocessing.

Panel pairs fall in four classes. Far pairs use tensor Gauss rules, near
pairs a raised Gauss order, and coincident or adjacent pairs a
log-regularized rule: K0 = -log(r) A(r) + B(r), the log part integrated with
a log-weighted Gauss rule in the variable that carries the singularity.
W uses the integration-by-parts form
    <W phi, psi> = int int G [phi'(y) psi'(x) + s (nu(x).nu(y)) phi(y) psi(x)].
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from heatbem.errors import ContourError, NearSingularError
from heatbem.geometry import distance_to_boundary
from heatbem.kernel import LaplaceFrequency, _bessel_k_unchecked, as_frequency, k0_log_split
from heatbem.quadrature import gauss_rule, log_gauss_rule
from heatbem.trace_spaces import X_SPACE, Y_SPACE, DiscreteNormOperators, TraceSpacePair

logger = logging.getLogger(__name__)

NEAR_FACTOR = 2.0
MIN_FAR_ORDER = 8
NEAR_POINT_TOLERANCE = 1e-10

FAR, NEAR, ADJACENT, COINCIDENT = 0, 1, 2, 3

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class PointSet:
    """
    Quadrature points for a batch of ordered panel pairs (e[k], f[k]).

    ue/uf are reference parameters on the test/trial panel; weight already
    contains the Jacobians. When `ell` is given the G-kernel uses the log
    split with r = ell * g: the log points carry the weight -log(ell).
    """
    e: np.ndarray
    f: np.ndarray
    ue: np.ndarray
    uf: np.ndarray
    weight: np.ndarray
    ell: Optional[np.ndarray] = None
    g: Optional[np.ndarray] = None
    is_log: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        return self.e.size


def _segment_distance(a0, a1, b0, b1) -> float:
    def point_segment(p, s0, s1):
        d = s1 - s0
        t = np.clip(np.dot(p - s0, d) / np.dot(d, d), 0.0, 1.0)
        return np.linalg.norm(p - (s0 + t * d))

    return min(point_segment(a0, b0, b1), point_segment(a1, b0, b1),
               point_segment(b0, a0, a1), point_segment(b1, a0, a1))


def _classify_pairs(mesh) -> np.ndarray:
    n = mesh.n_panels
    starts, ends, lengths = mesh.starts, mesh.ends, mesh.lengths
    cls = np.full((n, n), FAR, dtype=int)
    for e in range(n):
        for f in range(n):
            if e == f:
                cls[e, f] = COINCIDENT
            elif f == (e + 1) % n or e == (f + 1) % n:
                cls[e, f] = ADJACENT
            elif _segment_distance(starts[e], ends[e], starts[f], ends[f]) < NEAR_FACTOR * max(lengths[e], lengths[f]):
                cls[e, f] = NEAR
    return cls


def _tensor_set(pairs: np.ndarray, order: int, lengths: np.ndarray) -> PointSet:
    t, w = gauss_rule(order)
    ue, uf = np.meshgrid(t, t, indexing="ij")
    ww = np.outer(w, w).ravel()
    e, f = pairs[:, 0], pairs[:, 1]
    npairs = e.size
    return PointSet(
        e=e, f=f,
        ue=np.broadcast_to(ue.ravel(), (npairs, ww.size)).copy(),
        uf=np.broadcast_to(uf.ravel(), (npairs, ww.size)).copy(),
        weight=ww[None, :] * (lengths[e] * lengths[f])[:, None],
    )


def _coincident_set(mesh, order: int) -> PointSet:
    n = mesh.n_panels
    lengths = mesh.lengths
    td, wd = gauss_rule(order)
    tl, wl = log_gauss_rule(order)
    tw, ww = gauss_rule(order)

    ue, uf, ell, jac, wts, is_log = [], [], [], [], [], []
    for d_nodes, d_weights, flag in ((tl, wl, True), (td, wd, False)):
        d, w = np.meshgrid(d_nodes, tw, indexing="ij")
        wgt = np.outer(d_weights, ww)
        low = (1.0 - d) * w
        for swap in (False, True):
            high = low + d
            ue.append((low if swap else high).ravel())
            uf.append((high if swap else low).ravel())
            ell.append(d.ravel())
            jac.append((1.0 - d).ravel())
            wts.append(wgt.ravel())
            is_log.append(np.full(d.size, flag))
    ue, uf = np.concatenate(ue), np.concatenate(uf)
    ell, jac = np.concatenate(ell), np.concatenate(jac)
    wts, is_log = np.concatenate(wts), np.concatenate(is_log)

    e = np.arange(n)
    return PointSet(
        e=e, f=e.copy(),
        ue=np.broadcast_to(ue, (n, ue.size)).copy(),
        uf=np.broadcast_to(uf, (n, uf.size)).copy(),
        weight=(jac * wts)[None, :] * (lengths ** 2)[:, None],
        ell=np.broadcast_to(ell, (n, ell.size)).copy(),
        g=np.broadcast_to(lengths[:, None], (n, ell.size)).copy(),
        is_log=is_log,
    )


def _adjacent_set(mesh, order: int, with_log: bool = True) -> PointSet:
    """
    Duffy rule for panels sharing a node; the shared node sits at rho = 0.

    With with_log=False only Gauss points in rho are produced, which is the
    rule used for the bounded double-layer kernel.
    """
    n = mesh.n_panels
    starts, ends, lengths, tangents = mesh.starts, mesh.ends, mesh.lengths, mesh.tangents
    tr, wr = gauss_rule(order)
    tl, wl = log_gauss_rule(order)
    tw, ww = gauss_rule(order)

    rho_rules = [(tl, wl, True), (tr, wr, False)] if with_log else [(tr, wr, False)]
    pattern = []
    for r_nodes, r_weights, flag in rho_rules:
        rho, w = np.meshgrid(r_nodes, tw, indexing="ij")
        wgt = np.outer(r_weights, ww)
        for first in (True, False):
            a = rho if first else rho * w
            b = rho * w if first else rho
            pattern.append((a.ravel(), b.ravel(), rho.ravel(), (rho * wgt).ravel(), np.full(rho.size, flag)))
    a_ref = np.concatenate([p[0] for p in pattern])
    b_ref = np.concatenate([p[1] for p in pattern])
    rho_ref = np.concatenate([p[2] for p in pattern])
    w_ref = np.concatenate([p[3] for p in pattern])
    is_log = np.concatenate([p[4] for p in pattern])

    es, fs, ue, uf, ell, g, wts = [], [], [], [], [], [], []
    for e in range(n):
        for f in ((e + 1) % n, (e - 1) % n):
            if np.allclose(ends[e], starts[f]):
                # shared node: end of e, start of f
                ue_k = 1.0 - a_ref
                uf_k = b_ref.copy()
                dir_e, dir_f = -tangents[e], tangents[f]
            else:
                ue_k = a_ref.copy()
                uf_k = 1.0 - b_ref
                dir_e, dir_f = tangents[e], -tangents[f]
            sep = (a_ref / rho_ref)[:, None] * lengths[e] * dir_e - (b_ref / rho_ref)[:, None] * lengths[f] * dir_f
            es.append(e)
            fs.append(f)
            ue.append(ue_k)
            uf.append(uf_k)
            ell.append(rho_ref)
            g.append(np.linalg.norm(sep, axis=1))
            wts.append(w_ref * lengths[e] * lengths[f])
    return PointSet(
        e=np.array(es), f=np.array(fs),
        ue=np.array(ue), uf=np.array(uf), weight=np.array(wts),
        ell=np.array(ell) if with_log else None,
        g=np.array(g) if with_log else None,
        is_log=is_log if with_log else None,
    )


class AssemblyPlan:
    """Frequency-independent geometry and quadrature for one space pair"""

    def __init__(self, spaces: TraceSpacePair, quad_order: Optional[int] = None):
        mesh = spaces.mesh
        self.spaces = spaces
        self.far_order = max(quad_order or spaces.quad_order, MIN_FAR_ORDER)
        self.near_order = 3 * self.far_order
        self.singular_order = 2 * self.far_order
        self.classes = _classify_pairs(mesh)
        n = mesh.n_panels

        t, w = gauss_rule(self.far_order)
        self.t_far = t
        points = mesh.map_points(t)
        weights = mesh.lengths[:, None] * w[None, :]
        diff = points[:, :, None, None, :] - points[None, None, :, :, :]
        far = (self.classes == FAR)[:, None, :, None]
        far = np.broadcast_to(far, diff.shape[:-1])
        self.far_mask = far
        r = np.linalg.norm(diff, axis=-1)
        self.r_far = np.where(far, r, 1.0)
        self.weights_far = weights[:, :, None, None] * weights[None, None, :, :]
        normals = mesh.normals
        self.proj_trial = np.where(far, np.einsum("eifjk,fk->eifj", diff, normals) / self.r_far, 0.0)
        self.proj_test = np.where(far, np.einsum("eifjk,ek->eifj", diff, normals) / self.r_far, 0.0)

        near_pairs = np.argwhere(self.classes == NEAR)
        self.near = _tensor_set(near_pairs, self.near_order, mesh.lengths) if near_pairs.size else None
        self.coincident = _coincident_set(mesh, self.singular_order)
        self.adjacent = _adjacent_set(mesh, self.singular_order)
        self.adjacent_regular = _adjacent_set(mesh, self.singular_order, with_log=False)
        self.normal_dot = normals @ normals.T
        logger.debug("Assembly plan: %d panels, %d near pairs", n, len(near_pairs))

    def positions(self, pts: PointSet) -> Tuple[np.ndarray, np.ndarray]:
        mesh = self.spaces.mesh
        starts, edges = mesh.starts, mesh.ends - mesh.starts
        x = starts[pts.e][:, None, :] + pts.ue[..., None] * edges[pts.e][:, None, :]
        y = starts[pts.f][:, None, :] + pts.uf[..., None] * edges[pts.f][:, None, :]
        return x, y


@lru_cache(maxsize=8)
def assembly_plan(spaces: TraceSpacePair, quad_order: Optional[int] = None) -> AssemblyPlan:
    return AssemblyPlan(spaces, quad_order)


def _g_kernel(plan: AssemblyPlan, pts: PointSet, root: complex) -> np.ndarray:
    """Quadrature-weighted single-layer kernel values on a point set"""
    if pts.ell is None:
        x, y = plan.positions(pts)
        r = np.linalg.norm(x - y, axis=-1)
        values = _bessel_k_unchecked(0, root * r) / TWO_PI
    else:
        a, b = k0_log_split(root, pts.ell * pts.g)
        values = np.where(pts.is_log[None, :], a, b - np.log(pts.g) * a) / TWO_PI
    return values * pts.weight


def _dl_kernel(plan: AssemblyPlan, pts: PointSet, root: complex, normal_at_trial: bool) -> np.ndarray:
    """Quadrature-weighted normal derivative of G at y (trial) or x (test)"""
    mesh = plan.spaces.mesh
    x, y = plan.positions(pts)
    diff = x - y
    r = np.linalg.norm(diff, axis=-1)
    factor = root * _bessel_k_unchecked(1, root * r) / (TWO_PI * r)
    if normal_at_trial:
        proj = np.einsum("kpd,kd->kp", diff, mesh.normals[pts.f])
        return factor * proj * pts.weight
    proj = np.einsum("kpd,kd->kp", diff, mesh.normals[pts.e])
    return -factor * proj * pts.weight


def _basis_at(spaces: TraceSpacePair, space: str, u: np.ndarray, derivative: bool = False,
              panels: Optional[np.ndarray] = None) -> np.ndarray:
    basis = spaces.basis(space)
    flat = u.ravel()
    vals = basis.derivatives(flat) if derivative else basis.values(flat)
    vals = vals.reshape((basis.size,) + u.shape)
    if derivative:
        vals = vals / spaces.mesh.lengths[panels][None, :, None]
    return vals


def _add_blocks(local: np.ndarray, pts: PointSet, kern: np.ndarray, test: np.ndarray, trial: np.ndarray):
    blocks = np.einsum("kp,akp,bkp->kab", kern, test, trial, optimize=True)
    np.add.at(local, (pts.e, pts.f), blocks)


def _far_blocks(kern: np.ndarray, test: np.ndarray, trial: np.ndarray) -> np.ndarray:
    return np.einsum("ai,eifj,bj->efab", test, kern, trial, optimize=True)


@dataclass(frozen=True)
class OperatorMatrices:
    s: LaplaceFrequency
    V: np.ndarray
    K: np.ndarray
    KT: np.ndarray
    W: np.ndarray
    M: np.ndarray


class OperatorAssembler:
    """Assemble V, K, K^T, W at one frequency, sharing kernel evaluations"""

    def __init__(self, spaces: TraceSpacePair, quad_order: Optional[int] = None):
        self.spaces = spaces
        self.plan = assembly_plan(spaces, quad_order)

    def _far_g(self, root: complex) -> np.ndarray:
        plan = self.plan
        values = np.zeros(plan.r_far.shape, dtype=complex)
        mask = plan.far_mask
        values[mask] = _bessel_k_unchecked(0, root * plan.r_far[mask]) / TWO_PI
        return values * plan.weights_far

    def _far_k1(self, root: complex) -> np.ndarray:
        plan = self.plan
        values = np.zeros(plan.r_far.shape, dtype=complex)
        mask = plan.far_mask
        r = plan.r_far[mask]
        values[mask] = root * _bessel_k_unchecked(1, root * r) / TWO_PI
        return values * plan.weights_far

    def _g_sets(self):
        plan = self.plan
        return [pts for pts in (plan.near, plan.coincident, plan.adjacent) if pts is not None]

    def single_layer(self, s, far_g: Optional[np.ndarray] = None) -> np.ndarray:
        spaces, plan = self.spaces, self.plan
        root = as_frequency(s).root
        far_g = self._far_g(root) if far_g is None else far_g
        phi = spaces.x_basis.values(plan.t_far)
        local = _far_blocks(far_g, phi, phi)
        for pts in self._g_sets():
            kern = _g_kernel(plan, pts, root)
            _add_blocks(local, pts, kern, _basis_at(spaces, X_SPACE, pts.ue), _basis_at(spaces, X_SPACE, pts.uf))
        return spaces.scatter(local, X_SPACE, X_SPACE)

    def hypersingular(self, s, far_g: Optional[np.ndarray] = None) -> np.ndarray:
        spaces, plan = self.spaces, self.plan
        freq = as_frequency(s)
        root = freq.root
        far_g = self._far_g(root) if far_g is None else far_g
        lengths = spaces.mesh.lengths
        phi = spaces.y_basis.values(plan.t_far)
        dphi = spaces.y_basis.derivatives(plan.t_far)
        curl = np.einsum("ai,eifj,bj->efab", dphi, far_g, dphi, optimize=True)
        curl /= (lengths[:, None] * lengths[None, :])[:, :, None, None]
        mass = _far_blocks(far_g, phi, phi)
        local = curl + freq.s * plan.normal_dot[:, :, None, None] * mass
        for pts in self._g_sets():
            kern = _g_kernel(plan, pts, root)
            du = _basis_at(spaces, Y_SPACE, pts.ue, derivative=True, panels=pts.e)
            dv = _basis_at(spaces, Y_SPACE, pts.uf, derivative=True, panels=pts.f)
            _add_blocks(local, pts, kern, du, dv)
            scaled = kern * (freq.s * plan.normal_dot[pts.e, pts.f])[:, None]
            _add_blocks(local, pts, scaled, _basis_at(spaces, Y_SPACE, pts.ue), _basis_at(spaces, Y_SPACE, pts.uf))
        return spaces.scatter(local, Y_SPACE, Y_SPACE)

    def double_layer(self, s, far_k1: Optional[np.ndarray] = None) -> np.ndarray:
        """K[i, j] = <mu_i, K(s) phi_j>, mu_i in X_h, phi_j in Y_h"""
        return self._double_layer_type(s, far_k1, adjoint=False)

    def adjoint_double_layer(self, s, far_k1: Optional[np.ndarray] = None) -> np.ndarray:
        """KT[i, j] = <K^T(s) mu_j, phi_i>, phi_i in Y_h, mu_j in X_h"""
        return self._double_layer_type(s, far_k1, adjoint=True)

    def _double_layer_type(self, s, far_k1, adjoint: bool) -> np.ndarray:
        spaces, plan = self.spaces, self.plan
        root = as_frequency(s).root
        far_k1 = self._far_k1(root) if far_k1 is None else far_k1
        rows, cols = (Y_SPACE, X_SPACE) if adjoint else (X_SPACE, Y_SPACE)
        test = spaces.basis(rows).values(plan.t_far)
        trial = spaces.basis(cols).values(plan.t_far)
        kern = -far_k1 * plan.proj_test if adjoint else far_k1 * plan.proj_trial
        local = _far_blocks(kern, test, trial)
        # coincident straight panels: (x - y) . nu = 0, no contribution
        for pts in (plan.near, plan.adjacent_regular):
            if pts is None:
                continue
            k = _dl_kernel(plan, pts, root, normal_at_trial=not adjoint)
            _add_blocks(local, pts, k, _basis_at(spaces, rows, pts.ue), _basis_at(spaces, cols, pts.uf))
        return spaces.scatter(local, rows, cols)

    def assemble_all(self, s, with_adjoint: bool = False) -> OperatorMatrices:
        freq = as_frequency(s)
        far_g = self._far_g(freq.root)
        far_k1 = self._far_k1(freq.root)
        V = self.single_layer(freq, far_g)
        W = self.hypersingular(freq, far_g)
        K = self.double_layer(freq, far_k1)
        KT = self.adjoint_double_layer(freq, far_k1) if with_adjoint else K.T.copy()
        return OperatorMatrices(s=freq, V=V, K=K, KT=KT, W=W, M=self.spaces.duality())


def assemble_operator(which: str, s, spaces: TraceSpacePair, quad_order: Optional[int] = None) -> np.ndarray:
    """Galerkin matrix of V, K, KT or W at frequency s"""
    assembler = OperatorAssembler(spaces, quad_order)
    freq = as_frequency(s)
    if which == "V":
        return assembler.single_layer(freq)
    if which == "K":
        return assembler.double_layer(freq)
    if which == "KT":
        return assembler.adjoint_double_layer(freq)
    if which == "W":
        return assembler.hypersingular(freq)
    raise ValueError(f"unknown operator {which!r}")


def build_norm_operators(spaces: TraceSpacePair) -> DiscreteNormOperators:
    """Gram matrices for L2 and the V(1)/W(1) energy norms"""
    ops = OperatorAssembler(spaces).assemble_all(1.0)
    v_one = np.real(ops.V)
    w_one = np.real(ops.W)
    gram_y = spaces.gram(Y_SPACE)
    return DiscreteNormOperators(
        gram_x=spaces.gram(X_SPACE),
        gram_y=gram_y,
        v_one=0.5 * (v_one + v_one.T),
        w_one_plus_l2=0.5 * (w_one + w_one.T) + gram_y,
    )


class FrequencySystem:
    """
    Transmission block system at one frequency:

        [ V(s/m) + kappa V(s)    -K(s/m) - K(s)          ] [lambda]
        [ KT(s/m) + KT(s)         W(s/m) + W(s) / kappa  ] [phi   ]

    with right-hand side
        top    = 1/2 <mu, beta0> + V(s) b1 - K(s) b0
        bottom = 1/(2 kappa) <beta1, phi> + (KT(s) b1 + W(s) b0) / kappa
    where b0 in Y_h, b1 in X_h are the projected data.
    """

    def __init__(self, s: LaplaceFrequency, m: float, kappa: float,
                 interior: OperatorMatrices, exterior: OperatorMatrices):
        self.s = s
        self.m = m
        self.kappa = kappa
        self.exterior = exterior
        self.dim_x = exterior.V.shape[0]
        self.dim_y = exterior.W.shape[0]
        self.matrix = np.block([
            [interior.V + kappa * exterior.V, -interior.K - exterior.K],
            [interior.KT + exterior.KT, interior.W + exterior.W / kappa],
        ])
        if not np.all(np.isfinite(self.matrix)):
            raise ContourError(f"non-finite system matrix at s={s.s}")
        with np.errstate(all="ignore"):
            self._lu = lu_factor(self.matrix, check_finite=False)
        if np.any(np.diag(self._lu[0]) == 0.0):
            raise ContourError(f"singular system matrix at s={s.s}")

    @property
    def dim(self) -> int:
        return self.dim_x + self.dim_y

    @property
    def data_dim(self) -> int:
        return 2 * (self.dim_x + self.dim_y)

    def rhs(self, load0: np.ndarray, load1: np.ndarray, b0: np.ndarray, b1: np.ndarray) -> np.ndarray:
        ext, kappa = self.exterior, self.kappa
        top = 0.5 * load0 + ext.V @ b1 - ext.K @ b0
        bottom = (0.5 * load1 + ext.KT @ b1 + ext.W @ b0) / kappa
        return np.concatenate([top, bottom])

    def rhs_stacked(self, data: np.ndarray) -> np.ndarray:
        """Right-hand side from data stacked as [load0, load1, b0, b1]"""
        nx, ny = self.dim_x, self.dim_y
        load0 = data[:nx]
        load1 = data[nx:nx + ny]
        b0 = data[nx + ny:nx + 2 * ny]
        b1 = data[nx + 2 * ny:]
        return self.rhs(load0, load1, b0, b1)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return lu_solve(self._lu, rhs, check_finite=False)


def assemble_frequency_system(s, m: float, kappa: float, spaces: TraceSpacePair,
                              quad_order: Optional[int] = None) -> FrequencySystem:
    """Interior operators at s/m, exterior at s"""
    if m <= 0.0:
        raise ValueError(f"m must be positive, got {m}")
    if kappa <= 0.0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    freq = as_frequency(s)
    assembler = OperatorAssembler(spaces, quad_order)
    interior = assembler.assemble_all(freq.scaled(1.0 / m))
    exterior = interior if m == 1.0 else assembler.assemble_all(freq)
    return FrequencySystem(freq, m, kappa, interior, exterior)


def _subdivide(x: np.ndarray, a: np.ndarray, b: np.ndarray, lo: float, hi: float, out: list, depth: int = 0):
    p0 = a + lo * (b - a)
    p1 = a + hi * (b - a)
    seg = p1 - p0
    length = np.linalg.norm(seg)
    t = np.clip(np.dot(x - p0, seg) / np.dot(seg, seg), 0.0, 1.0)
    dist = np.linalg.norm(x - (p0 + t * seg))
    if dist > 2.0 * length or depth > 60:
        out.append((lo, hi))
        return
    mid = 0.5 * (lo + hi)
    _subdivide(x, a, b, lo, mid, out, depth + 1)
    _subdivide(x, a, b, mid, hi, out, depth + 1)


def potential_eval_matrix(which: str, s, spaces: TraceSpacePair, points: np.ndarray,
                          quad_order: Optional[int] = None) -> np.ndarray:
    """
    Matrix mapping density coefficients to potential values at points off the boundary.

    S acts on X_h coefficients, D on Y_h coefficients. Panels close to a
    point are subdivided until the point is farther than twice the
    sub-panel length.
    """
    if which not in ("S", "D"):
        raise ValueError(f"unknown potential {which!r}")
    mesh = spaces.mesh
    points = np.atleast_2d(np.asarray(points, dtype=float))
    dist = distance_to_boundary(mesh, points)
    too_close = np.flatnonzero(dist <= NEAR_POINT_TOLERANCE * mesh.polygon.diameter)
    if too_close.size:
        raise NearSingularError(f"{too_close.size} evaluation points lie on the boundary", too_close)

    root = as_frequency(s).root
    space = X_SPACE if which == "S" else Y_SPACE
    basis = spaces.basis(space)
    dofs = spaces.dofs(space)
    order = max(quad_order or spaces.quad_order, MIN_FAR_ORDER)
    t, w = gauss_rule(order)
    phi = basis.values(t)
    starts, ends, lengths, normals = mesh.starts, mesh.ends, mesh.lengths, mesh.normals

    def kernel(x, y, normal):
        diff = x - y
        r = np.linalg.norm(diff, axis=-1)
        if which == "S":
            return _bessel_k_unchecked(0, root * r) / TWO_PI
        proj = diff @ normal
        return root * _bessel_k_unchecked(1, root * r) * proj / (TWO_PI * r)

    out = np.zeros((points.shape[0], spaces.dim(space)), dtype=complex)
    ypts = mesh.map_points(t)
    for e in range(mesh.n_panels):
        d_panel = np.linalg.norm(points[:, None, :] - ypts[e][None, :, :], axis=-1).min(axis=1)
        near = d_panel <= 2.0 * lengths[e]
        far_idx = np.flatnonzero(~near)
        if far_idx.size:
            k = kernel(points[far_idx][:, None, :], ypts[e][None, :, :], normals[e])
            contrib = (k * (w * lengths[e])[None, :]) @ phi.T
            out[np.ix_(far_idx, dofs[e])] += contrib
        for i in np.flatnonzero(near):
            intervals = []
            _subdivide(points[i], starts[e], ends[e], 0.0, 1.0, intervals)
            lo = np.array([iv[0] for iv in intervals])
            hi = np.array([iv[1] for iv in intervals])
            tt = (lo[:, None] + (hi - lo)[:, None] * t[None, :]).ravel()
            ww = ((hi - lo)[:, None] * w[None, :]).ravel() * lengths[e]
            y = starts[e] + tt[:, None] * (ends[e] - starts[e])
            k = kernel(points[i][None, :], y, normals[e])
            out[i, dofs[e]] += (k * ww) @ basis.values(tt).T
    return out
