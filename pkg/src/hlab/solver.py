"""P1 Galerkin assembly and mean-zero conjugate-gradient solves for Neumann systems.

Degrees of freedom are node-major: dof ``node * m + alpha``.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .coefficients import CoefficientTensor
from .mesh import DomainMesh, P1Mesh, TorusMesh, boundary_geometry

log = logging.getLogger(__name__)

CELL = "cell"
QUADRATURE = "edge-midpoint-3"

# 2-point Gauss on [0, 1]
_GAUSS_T = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
_GAUSS_W = np.array([0.5, 0.5])


class SolverError(RuntimeError):
    pass


class OscillationUnresolvedError(SolverError):
    pass


class IncompatibleDataError(SolverError):
    def __init__(self, residual):
        self.residual = np.asarray(residual)
        super().__init__(f"incompatible Neumann data: per-component load sum {self.residual.tolist()}")


class ConvergenceError(SolverError):
    def __init__(self, iterations, residual):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"CG did not converge in {iterations} iterations (relative residual {residual:.3e})")


class OscillationWarning(UserWarning):
    pass


@dataclass
class DiscreteField:
    """Nodal P1 field with ``m`` components; ``values`` has shape ``(n_nodes, m)``."""

    mesh: P1Mesh
    values: np.ndarray
    info: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.mesh.n_nodes:
            raise ValueError(f"field has {v.shape[0]} rows, mesh has {self.mesh.n_nodes} nodes")
        self.values = v
        self._grad = None

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            self._grad = gradient(self)
        return self._grad

    def mean(self) -> np.ndarray:
        w = self.mesh.lumped_mass
        return w @ self.values / w.sum()

    def __add__(self, other):
        return DiscreteField(self.mesh, self.values + _vals(other))

    def __sub__(self, other):
        return DiscreteField(self.mesh, self.values - _vals(other))

    def __mul__(self, c):
        return DiscreteField(self.mesh, self.values * c)

    __rmul__ = __mul__


def _vals(other):
    return other.values if isinstance(other, DiscreteField) else other


def gradient(field: DiscreteField) -> np.ndarray:
    """Per-triangle gradients, shape ``(T, m, 2)`` with ``[t, alpha, j] = d_j u^alpha``."""
    mesh = field.mesh
    return np.einsum("tkj,tka->taj", mesh.grads, field.values[mesh.tri])


@dataclass
class LinearSystem:
    K: sp.csr_matrix
    mesh: P1Mesh
    A: CoefficientTensor
    eps: object
    m: int
    quadrature: str = QUADRATURE
    coef: np.ndarray = field(default=None, repr=False)  # triangle-averaged a, (T, 2, 2, m, m)
    _precond: dict = field(default_factory=dict, repr=False)

    @property
    def nullspace(self) -> np.ndarray:
        """One constant vector per component, shape ``(m, N*m)``."""
        ns = np.zeros((self.m, self.K.shape[0]))
        for a in range(self.m):
            ns[a, a::self.m] = 1.0
        return ns


def triangle_coefficients(A: CoefficientTensor, eps, mesh: P1Mesh) -> np.ndarray:
    """Edge-midpoint average of ``A(x / eps)`` on every triangle."""
    q = mesh.edge_midpoints.reshape(-1, 2)
    y = q if eps is None or eps == CELL else q / float(eps)
    vals = A.values(y)
    if not np.all(np.isfinite(vals)):
        raise SolverError("non-finite coefficient sample")
    return vals.reshape(mesh.n_tri, 3, *vals.shape[1:]).mean(axis=1)


def check_resolution(mesh: P1Mesh, eps) -> None:
    if eps is None or eps == CELL:
        return
    eps = float(eps)
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if mesh.h > eps / 2:
        raise OscillationUnresolvedError(f"h={mesh.h:.4g} > eps/2={eps / 2:.4g}")
    if mesh.h > eps / 4:
        warnings.warn(f"h={mesh.h:.4g} > eps/4={eps / 4:.4g}; oscillation poorly resolved",
                      OscillationWarning, stacklevel=3)


def assemble(A: CoefficientTensor, eps, mesh: P1Mesh) -> LinearSystem:
    """Stiffness matrix of ``int a_ij^{ab}(x/eps) d_j u^b d_i phi^a``.

    ``eps`` is a positive scalar for domain solves, :data:`CELL` for torus
    solves (``A`` evaluated at ``y`` directly) or ``None`` for
    constant-coefficient solves without a resolution check.
    """
    if eps == CELL and not isinstance(mesh, TorusMesh):
        raise ValueError("cell assembly requires a TorusMesh")
    if eps != CELL and eps is not None and not isinstance(mesh, DomainMesh):
        raise ValueError("eps assembly requires a DomainMesh")
    check_resolution(mesh, eps)
    m = A.m
    coef = triangle_coefficients(A, eps, mesh)
    G = mesh.grads
    # local[t, a, alpha, b, beta]
    local = np.einsum("t,tai,tijpq,tbj->tapbq", mesh.area, G, coef, G, optimize=True)
    dof = (mesh.tri[:, :, None] * m + np.arange(m)).reshape(mesh.n_tri, 3 * m)
    rows = np.repeat(dof, 3 * m, axis=1).ravel()
    cols = np.tile(dof, (1, 3 * m)).ravel()
    n = mesh.n_nodes * m
    K = sp.coo_matrix((local.reshape(-1), (rows, cols)), shape=(n, n)).tocsr()
    K.sum_duplicates()
    return LinearSystem(K=K, mesh=mesh, A=A, eps=eps, m=m, coef=coef)


@dataclass
class NeumannData:
    """Right-hand sides of ``L u = div f + F``, ``du/dnu = g - n.f``.

    ``f``: callable ``x -> (N, m, 2)`` or per-triangle array ``(T, m, 2)``.
    ``F``: callable ``x -> (N, m)`` or nodal array ``(n_nodes, m)``.
    ``g``: callable ``(x, normal) -> (N, m)``.
    ``linear``: ``(C, G)`` for conormal data ``n_i c_ij^{ab} G_{b j}`` of the
    linear map ``x -> G x`` under the constant tensor ``C`` (shape (2,2,m,m)).
    """

    m: int = 1
    f: object = None
    F: object = None
    g: Callable | None = None
    linear: tuple | None = None
    kinds: dict = field(default_factory=dict)

    def __post_init__(self):
        self.kinds = {
            "f": _kind(self.f),
            "F": _kind(self.F),
            "g": "conormal-of-linear" if self.linear is not None else _kind(self.g),
        }
        if self.linear is not None:
            C, Gm = self.linear
            C, Gm = np.asarray(C, float), np.asarray(Gm, float)
            if not (np.all(np.isfinite(C)) and np.all(np.isfinite(Gm))):
                raise ValueError("non-finite linear data")
            self.linear = (C, Gm)
        for name in ("f", "F"):
            v = getattr(self, name)
            if isinstance(v, np.ndarray) and not np.all(np.isfinite(v)):
                raise ValueError(f"non-finite data in {name}")


def _kind(v):
    if v is None:
        return "zero"
    return "analytic" if callable(v) else "nodal"


@dataclass
class Load:
    vector: np.ndarray  # (N*m,)
    residual: np.ndarray  # (m,) per-component sum

    @property
    def m(self) -> int:
        return self.residual.shape[0]


def load_vector(mesh: P1Mesh, data: NeumannData) -> Load:
    """``L(phi) = int(-f . grad phi + F phi) + int_{bdry} g phi``."""
    m = data.m
    L = np.zeros((mesh.n_nodes, m))
    T = mesh.n_tri
    if data.f is not None:
        if callable(data.f):
            q = mesh.edge_midpoints.reshape(-1, 2)
            fT = np.asarray(data.f(q), float).reshape(T, 3, m, 2).mean(axis=1)
        else:
            fT = np.asarray(data.f, float).reshape(T, m, 2)
        contrib = -np.einsum("t,taj,tkj->tka", mesh.area, fT, mesh.grads)
        for a in range(m):
            L[:, a] += np.bincount(mesh.tri.ravel(), contrib[:, :, a].ravel(), mesh.n_nodes)
    if data.F is not None:
        if callable(data.F):
            q = mesh.edge_midpoints.reshape(-1, 2)
            Fq = np.asarray(data.F(q), float).reshape(T, 3, m)
        else:
            Fn = np.asarray(data.F, float).reshape(mesh.n_nodes, m)[mesh.tri]
            Fq = 0.5 * (Fn + np.roll(Fn, -1, axis=1))
        # midpoint q_k lies on edge (k, k+1): phi = 1/2 at its endpoints
        w = mesh.area[:, None] / 3.0
        for a in range(m):
            vals = np.zeros((T, 3))
            for k in range(3):
                vals[:, k] += 0.5 * Fq[:, k, a] * w[:, 0]
                vals[:, (k + 1) % 3] += 0.5 * Fq[:, k, a] * w[:, 0]
            L[:, a] += np.bincount(mesh.tri.ravel(), vals.ravel(), mesh.n_nodes)
    if data.g is not None or data.linear is not None:
        if not isinstance(mesh, DomainMesh):
            raise ValueError("boundary data requires a DomainMesh")
        geo = boundary_geometry(mesh)
        p = mesh.nodes[mesh.boundary_edges[:, 0]]
        q = mesh.nodes[mesh.boundary_edges[:, 1]]
        for t, w in zip(_GAUSS_T, _GAUSS_W):
            x = (1 - t) * p + t * q
            if data.linear is not None:
                C, Gm = data.linear
                gv = np.einsum("ei,ijab,bj->ea", geo.normal, C, Gm)
                if data.g is not None:
                    gv = gv + np.asarray(data.g(x, geo.normal), float).reshape(-1, m)
            else:
                gv = np.asarray(data.g(x, geo.normal), float).reshape(-1, m)
            wl = (w * geo.length)[:, None] * gv
            for a in range(m):
                L[:, a] += np.bincount(mesh.boundary_edges[:, 0], (1 - t) * wl[:, a], mesh.n_nodes)
                L[:, a] += np.bincount(mesh.boundary_edges[:, 1], t * wl[:, a], mesh.n_nodes)
    return Load(vector=L.reshape(-1), residual=L.sum(axis=0))


def nodal_load(mesh: P1Mesh, m: int, values) -> Load:
    """Wrap a raw nodal load array ``(n_nodes, m)``."""
    L = np.asarray(values, float).reshape(mesh.n_nodes, m)
    return Load(vector=L.reshape(-1).copy(), residual=L.sum(axis=0))


def _jacobi(K):
    d = K.diagonal()
    inv = np.where(d > 0, 1.0 / np.where(d > 0, d, 1.0), 0.0)
    return lambda r: inv * r


def _amg(K, m):
    import pyamg

    B = np.zeros((K.shape[0], m))
    for a in range(m):
        B[a::m, a] = 1.0
    # "local" weighting avoids pyamg's randomised spectral-radius estimate, keeping solves bitwise reproducible
    ml = pyamg.smoothed_aggregation_solver(K, B=B, symmetry="hermitian", max_coarse=500,
                                           smooth=("jacobi", {"omega": 4.0 / 3.0, "weighting": "local"}))
    return lambda r: ml.aspreconditioner(cycle="V") @ r


def preconditioner(system: LinearSystem, kind: str):
    if kind not in system._precond:
        if kind == "jacobi":
            system._precond[kind] = _jacobi(system.K)
        elif kind == "amg":
            system._precond[kind] = _amg(system.K, system.m)
        elif kind == "none":
            system._precond[kind] = lambda r: r.copy()
        else:
            raise ValueError(f"unknown preconditioner {kind!r}")
    return system._precond[kind]


def _project_range(r, m):
    """Remove the per-component Euclidean mean (keeps ``r`` orthogonal to ker K)."""
    r = r.reshape(-1, m)
    r -= r.mean(axis=0)
    return r.reshape(-1)


def _remove_mass_mean(x, mass, m):
    x = x.reshape(-1, m)
    x -= (mass @ x) / mass.sum()
    return x.reshape(-1)


def solve_mean_zero(system: LinearSystem, load, tol: float = 1e-10, ctol: float = 1e-10,
                    project: bool = False, maxiter_factor: float = 20.0, precond: str = "jacobi",
                    x0=None) -> DiscreteField:
    """Preconditioned CG for the singular Neumann system, mass-weighted mean zero.

    The load must be compatible (per-component sum within ``ctol * ||L||_1``)
    unless ``project`` is set, in which case its component mean is removed.
    """
    if not isinstance(load, Load):
        load = nodal_load(system.mesh, system.m, load)
    m = system.m
    b = load.vector.astype(float).copy()
    scale = np.abs(b).sum()
    res = b.reshape(-1, m).sum(axis=0)
    if np.any(np.abs(res) > ctol * max(scale, 1e-300)) and scale > 0:
        if not project:
            raise IncompatibleDataError(res)
        b = _project_range(b, m)
    mass = system.mesh.lumped_mass
    K = system.K
    M = preconditioner(system, precond)
    n = b.shape[0]
    maxiter = int(maxiter_factor * np.sqrt(n)) + 1
    x = np.zeros(n) if x0 is None else _remove_mass_mean(np.asarray(x0, float).copy(), mass, m)
    bnorm = np.linalg.norm(b)
    info = {"iterations": 0, "residual": 0.0, "energy": [], "precond": precond,
            "compatibility": res.tolist()}
    if bnorm == 0:
        out = DiscreteField(system.mesh, np.zeros((system.mesh.n_nodes, m)), info)
        return out
    r = _project_range(b - K @ x, m)
    info["energy"].append(float(0.5 * x @ (K @ x) - b @ x))
    z = M(r)
    p = z.copy()
    rz = r @ z
    rel = np.linalg.norm(r) / bnorm
    it = 0
    while True:
        if rel <= tol:
            # guard against drift of the recursive residual
            r = _project_range(b - K @ x, m)
            rel = np.linalg.norm(r) / bnorm
            if rel <= tol:
                break
            z = M(r)
            p = z.copy()
            rz = r @ z
        if it >= maxiter:
            raise ConvergenceError(it, rel)
        Kp = K @ p
        pKp = p @ Kp
        if pKp <= 0:
            raise ConvergenceError(it, rel)
        alpha = rz / pKp
        x += alpha * p
        r -= alpha * Kp
        _project_range(r, m)
        z = M(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
        it += 1
        rel = np.linalg.norm(r) / bnorm
    _remove_mass_mean(x, mass, m)
    true_rel = np.linalg.norm(_project_range(b - K @ x, m)) / bnorm
    info["energy"].append(float(0.5 * x @ (K @ x) - b @ x))
    info.update(iterations=it, residual=float(true_rel))
    return DiscreteField(system.mesh, x.reshape(-1, m), info)
