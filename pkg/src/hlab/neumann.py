"""Oscillatory and homogenized Neumann solves, conormal traces, boundary correctors."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cell import CorrectorSet
from .coefficients import CoefficientTensor, constant_tensor
from .mesh import DomainMesh, boundary_geometry, boundary_projection
from .solver import (
    DiscreteField,
    LinearSystem,
    NeumannData,
    assemble,
    load_vector,
    solve_mean_zero,
)

D = 2


class MeshMismatchError(ValueError):
    pass


@dataclass
class SolveSpec:
    A: CoefficientTensor
    eps: float | None  # None: homogenized / constant-coefficient solve
    mesh: DomainMesh
    data: NeumannData
    tol: float = 1e-10
    ctol: float = 1e-10
    project: bool = False
    precond: str = "jacobi"
    system: LinearSystem | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.eps is not None and self.mesh.h > self.eps / 4:
            # assemble() decides between warning and error; record the policy here
            self.resolution = "coarse"
        else:
            self.resolution = "ok"


def get_system(spec: SolveSpec) -> LinearSystem:
    if spec.system is None:
        spec.system = assemble(spec.A, spec.eps, spec.mesh)
    return spec.system


def solve_eps(spec: SolveSpec) -> DiscreteField:
    """Mean-zero weak solution with coefficients ``A(x / eps)``."""
    system = get_system(spec)
    load = load_vector(spec.mesh, spec.data)
    u = solve_mean_zero(system, load, tol=spec.tol, ctol=spec.ctol, project=spec.project, precond=spec.precond)
    u.info["compatibility"] = load.residual.tolist()
    return u


def as_tensor(A_hat) -> CoefficientTensor:
    if isinstance(A_hat, CoefficientTensor):
        return A_hat
    return constant_tensor(np.asarray(A_hat, float), name="custom-homogenized")


def solve_homogenized(A_hat, mesh: DomainMesh, data: NeumannData, **kw) -> DiscreteField:
    """Same pipeline as :func:`solve_eps` with the constant tensor ``A_hat``."""
    return solve_eps(SolveSpec(as_tensor(A_hat), None, mesh, data, **kw))


def conormal_trace(A: CoefficientTensor, eps, field: DiscreteField) -> np.ndarray:
    """``n_i a_ij^{ab}(mid / eps) d_j u^b`` per boundary edge, shape ``(E, m)``.

    The gradient is the one of the triangle adjacent to the edge.
    """
    mesh = field.mesh
    geo = boundary_geometry(mesh)
    y = geo.midpoint if eps is None else geo.midpoint / float(eps)
    a = A.values(y)  # (E, i, j, alpha, beta)
    g = field.grad[geo.tri]  # (E, beta, j)
    return np.einsum("ei,eijab,ebj->ea", geo.normal, a, g)


def p1_l2_sq(mesh, corner_vals) -> float:
    """Exact ``int v^2`` for a (possibly broken) P1 field given by corner values ``(T, 3, ...)``."""
    v = corner_vals.reshape(mesh.n_tri, 3, -1)
    s = (v ** 2).sum(axis=1) + v.sum(axis=1) ** 2
    return float((mesh.area[:, None] * s).sum() / 12.0)


@dataclass
class TwoScaleResult:
    w: np.ndarray  # (T, 3, m) corner values of the broken P1 remainder
    l2_diff: float  # ||u_eps - u_0||_{L^2}
    w_l2: float
    w_h1: float  # broken W^{1,2} norm of w

    @property
    def w_w12(self) -> float:
        return float(np.sqrt(self.w_l2 ** 2 + self.w_h1 ** 2))


def two_scale_remainder(u_eps: DiscreteField, u0: DiscreteField, cs: CorrectorSet, eps: float) -> TwoScaleResult:
    """``w = u_eps - u_0 - eps chi(x/eps) grad u_0`` with per-triangle grad u_0.

    Both fields are first shifted to mass-weighted mean zero.  ``w`` is
    piecewise linear per triangle (discontinuous across edges).
    """
    if u_eps.mesh is not u0.mesh:
        raise MeshMismatchError("u_eps and u_0 live on different meshes")
    mesh = u_eps.mesh
    ue = u_eps.values - u_eps.mean()
    uz = u0.values - u0.mean()
    diff = (ue - uz)[mesh.tri]  # (T, 3, m)
    chi = cs.chi_at(mesh.nodes / eps)[mesh.tri]  # (T, 3, j, alpha, beta)
    g0 = u0.grad  # (T, beta, j)
    w = diff - eps * np.einsum("tkjab,tbj->tka", chi, g0)
    gw = np.einsum("tkj,tka->taj", mesh.grads, w)
    return TwoScaleResult(
        w=w,
        l2_diff=np.sqrt(p1_l2_sq(mesh, diff)),
        w_l2=np.sqrt(p1_l2_sq(mesh, w)),
        w_h1=float(np.sqrt((mesh.area[:, None, None] * gw ** 2).sum())),
    )


@dataclass
class BoundaryCorrectorSet:
    mesh: DomainMesh
    eps: float
    A_hat: np.ndarray
    anchor: int
    Phi: np.ndarray  # (N, j, alpha, beta)
    compatibility: np.ndarray  # (j, beta, alpha) load sums
    info: dict = field(default_factory=dict)
    Psi: np.ndarray | None = None


def boundary_corrector(A: CoefficientTensor, eps: float, mesh: DomainMesh, A_hat, tol: float = 1e-10,
                       precond: str = "jacobi", system: LinearSystem | None = None) -> BoundaryCorrectorSet:
    """Phi_j^beta solving L_eps Phi = 0 with conormal data n_i a_hat_ij^{alpha beta}; Phi(anchor) = 0."""
    A_hat = np.asarray(A_hat, float)
    m = A.m
    anchor = mesh.anchor
    Phi = np.zeros((mesh.n_nodes, D, m, m))
    comp = np.zeros((D, m, m))
    if system is None:
        system = assemble(A, eps, mesh)
    iters = {}
    for j in range(D):
        for b in range(m):
            G = np.zeros((m, D))
            G[b, j] = 1.0
            data = NeumannData(m=m, linear=(A_hat, G))
            load = load_vector(mesh, data)
            comp[j, b] = load.residual
            u = solve_mean_zero(system, load, tol=tol, precond=precond)
            Phi[:, j, :, b] = u.values - u.values[anchor]
            iters[f"Phi_{j + 1}{b + 1}"] = u.info["iterations"]
    return BoundaryCorrectorSet(mesh=mesh, eps=eps, A_hat=A_hat, anchor=anchor, Phi=Phi,
                                compatibility=comp, info=iters)


@dataclass
class PsiProfile:
    delta: np.ndarray  # per admissible triangle
    grad_norm: np.ndarray
    rho: np.ndarray
    excluded: int

    @property
    def max_rho(self) -> float:
        return float(self.rho.max()) if self.rho.size else float("nan")


PSI_METHODS = ("solve", "sampled")


def psi_remainder(bcs: BoundaryCorrectorSet, cs: CorrectorSet, eps: float, min_delta_h: float = 4.0,
                  method: str = "solve", A: CoefficientTensor | None = None, system: LinearSystem | None = None,
                  tol: float = 1e-10, precond: str = "jacobi"):
    """Psi = Phi - x_j delta_ab - eps chi(x/eps) and the profile rho = |grad Psi| delta / eps.

    ``method="sampled"`` forms Psi literally from nodal values; the nodal
    interpolant of ``eps chi(x/eps)`` carries an O(h/eps) gradient error that
    the weight delta/eps amplifies.  ``method="solve"`` (default) instead solves
    ``L_eps Psi = 0`` with conormal data ``n_i H_ij(x/eps)``, which Psi satisfies
    exactly, so only the usual discretisation error remains.

    Only triangles whose centroid has ``delta >= min_delta_h * h`` enter the
    profile; ``|grad Psi|`` is the Frobenius norm over all columns.
    """
    mesh = bcs.mesh
    if cs.m != bcs.Phi.shape[2]:
        raise MeshMismatchError("corrector set and boundary correctors disagree on m")
    if method not in PSI_METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {PSI_METHODS}")
    m = cs.m
    if method == "sampled":
        chi = cs.chi_at(mesh.nodes / eps)  # (N, j, a, b)
        lin = np.zeros_like(bcs.Phi)
        for j in range(D):
            for a in range(m):
                lin[:, j, a, a] = mesh.nodes[:, j]
        Psi = bcs.Phi - lin - eps * chi
    else:
        if cs.H is None:
            raise ValueError("flux correctors not computed")
        if system is None:
            system = assemble(A if A is not None else cs.A, eps, mesh)
        Psi = np.zeros_like(bcs.Phi)
        for j in range(D):
            for b in range(m):
                def g(x, normal, _j=j, _b=b):
                    return np.einsum("ei,eia->ea", normal, cs.H_at(x / eps)[:, :, _j, :, _b])
                # the data integrate to zero only up to the cell quadrature error
                load = load_vector(mesh, NeumannData(m=m, g=g))
                u = solve_mean_zero(system, load, tol=tol, precond=precond, project=True)
                Psi[:, j, :, b] = u.values - u.values[bcs.anchor]
    bcs.Psi = Psi
    grad = np.einsum("tkl,tkjab->tjabl", mesh.grads, Psi[mesh.tri])
    gnorm = np.sqrt((grad ** 2).reshape(mesh.n_tri, -1).sum(axis=1))
    delta = _centroid_delta(mesh)
    keep = delta >= min_delta_h * mesh.h
    prof = PsiProfile(delta=delta[keep], grad_norm=gnorm[keep], rho=gnorm[keep] * delta[keep] / eps,
                      excluded=int((~keep).sum()))
    return Psi, prof


def _centroid_delta(mesh: DomainMesh) -> np.ndarray:
    return _centroid_projection(mesh)[0]


def _centroid_projection(mesh: DomainMesh):
    """Cached (distance, closest boundary edge) of every triangle centroid."""
    cached = getattr(mesh, "_centroid_proj", None)
    if cached is None:
        cached = mesh._centroid_proj = boundary_projection(mesh, mesh.centroids)
    return cached
