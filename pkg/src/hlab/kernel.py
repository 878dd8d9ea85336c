"""Discrete Neumann functions N_eps(., y) and their symmetry and decay statistics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coefficients import CoefficientTensor
from .mesh import DomainMesh, boundary_geometry
from .solver import LinearSystem, SolverError, assemble, nodal_load, solve_mean_zero

GAMMA = 0.1


class KernelError(ValueError):
    pass


@dataclass
class KernelColumn:
    mesh: DomainMesh
    y_node: int
    beta: int
    values: np.ndarray  # (N, m): x -> N^{alpha beta}(x, y)
    boundary_mean: np.ndarray  # after normalisation (should be ~0)
    load_total: np.ndarray
    info: dict = field(default_factory=dict)

    @property
    def y(self) -> np.ndarray:
        return self.mesh.nodes[self.y_node]

    def grad(self) -> np.ndarray:
        mesh = self.mesh
        return np.einsum("tkj,tka->taj", mesh.grads, self.values[mesh.tri])


def boundary_weights(mesh: DomainMesh) -> np.ndarray:
    """``int_{bdry} phi_b d sigma / |bdry|`` per node (polygonal perimeter)."""
    geo = boundary_geometry(mesh)
    w = np.zeros(mesh.n_nodes)
    np.add.at(w, mesh.boundary_edges[:, 0], 0.5 * geo.length)
    np.add.at(w, mesh.boundary_edges[:, 1], 0.5 * geo.length)
    return w / geo.length.sum()


def boundary_mean(mesh: DomainMesh, values: np.ndarray) -> np.ndarray:
    return boundary_weights(mesh) @ values


def normalize(col: KernelColumn) -> KernelColumn:
    """Shift so the arclength-weighted boundary mean is zero (idempotent)."""
    bm = boundary_mean(col.mesh, col.values)
    col.values = col.values - bm
    col.boundary_mean = boundary_mean(col.mesh, col.values)
    return col


def neumann_function_column(A: CoefficientTensor, eps, mesh: DomainMesh, y_node: int, beta: int = 0,
                            system: LinearSystem | None = None, tol: float = 1e-10,
                            precond: str = "jacobi", min_delta_h: float = 4.0) -> KernelColumn:
    """Solve L_eps N = e^beta delta_y with conormal flux -e^beta / |bdry|, boundary mean zero."""
    if mesh.delta[y_node] < min_delta_h * mesh.h:
        raise KernelError(f"source node {y_node} too close to the boundary "
                          f"(delta={mesh.delta[y_node]:.3g} < {min_delta_h}h)")
    m = A.m
    if system is None:
        system = assemble(A, eps, mesh)
    L = np.zeros((mesh.n_nodes, m))
    L[y_node, beta] += 1.0
    L[:, beta] -= boundary_weights(mesh)
    load = nodal_load(mesh, m, L)
    u = solve_mean_zero(system, load, tol=tol, precond=precond)
    col = KernelColumn(mesh=mesh, y_node=int(y_node), beta=beta, values=u.values, boundary_mean=None,
                       load_total=load.residual, info=dict(u.info))
    return normalize(col)


def admissible_nodes(mesh: DomainMesh, min_delta_h: float = 4.0) -> np.ndarray:
    return np.nonzero(mesh.delta >= min_delta_h * mesh.h)[0]


def random_pairs(mesh: DomainMesh, count: int, seed: int = 0, min_delta_h: float = 4.0) -> np.ndarray:
    ok = admissible_nodes(mesh, min_delta_h)
    rng = np.random.default_rng(seed)
    pairs = []
    while len(pairs) < count:
        p, q = rng.choice(ok, size=2, replace=False)
        pairs.append((int(p), int(q)))
    return np.array(pairs)


def symmetry_check(A: CoefficientTensor, eps, mesh: DomainMesh, node_pairs, tol: float = 1e-10,
                   precond: str = "jacobi", system=None, columns: dict | None = None) -> float:
    """max |N^{ab}(x_p, x_q) - N^{ba}(x_q, x_p)| over pairs and components.

    Requires ``A* = A``: the conjugate-gradient solver only handles symmetric
    systems, so the adjoint kernel is the kernel itself.
    """
    if not A.symmetric:
        raise KernelError("symmetry_check needs a symmetric tensor (A* = A)")
    m = A.m
    if system is None:
        system = assemble(A, eps, mesh)
    cache = {} if columns is None else columns

    def col(node, b):
        key = (int(node), b)
        if key not in cache:
            cache[key] = neumann_function_column(A, eps, mesh, node, b, system=system, tol=tol,
                                                 precond=precond).values
        return cache[key]

    worst = 0.0
    for p, q in node_pairs:
        for a in range(m):
            for b in range(m):
                worst = max(worst, abs(col(q, b)[p, a] - col(p, a)[q, b]))
    return worst


@dataclass
class DecayTable:
    r: np.ndarray
    absN: np.ndarray
    absGradN: np.ndarray
    excluded: int

    @property
    def log_normalized(self) -> np.ndarray:
        return self.absN / (1.0 + np.abs(np.log(self.r)))

    @property
    def r_weighted_grad(self) -> np.ndarray:
        return self.absGradN * self.r ** (1.0 + GAMMA)

    @property
    def sup_log_normalized(self) -> float:
        return float(self.log_normalized.max())

    @property
    def sup_r_weighted_grad(self) -> float:
        return float(self.r_weighted_grad.max())

    def binned(self, bins: int = 48):
        """Per-r-bin maxima (row with the largest weighted gradient in each bin)."""
        edges = np.linspace(self.r.min(), self.r.max() + 1e-12, bins + 1)
        idx = np.digitize(self.r, edges) - 1
        rows = []
        rwg = self.r_weighted_grad
        for b in range(bins):
            s = np.nonzero(idx == b)[0]
            if len(s):
                k = s[np.argmax(rwg[s])]
                rows.append((self.r[k], self.absN[k], self.absGradN[k], self.log_normalized[k], rwg[k]))
        return rows


def kernel_profile(columns, sample_points=None, min_r_h: float = 8.0) -> DecayTable:
    """Decay statistics over triangle centroids (or given triangle ids) with |x - y| >= 8h."""
    if not columns:
        raise KernelError("no kernel columns given")
    rs, ns, gs = [], [], []
    excluded = 0
    for col in columns:
        mesh = col.mesh
        tids = np.arange(mesh.n_tri) if sample_points is None else np.asarray(sample_points)
        x = mesh.centroids[tids]
        r = np.linalg.norm(x - col.y, axis=1)
        keep = r >= min_r_h * mesh.h
        excluded += int((~keep).sum())
        t = tids[keep]
        vals = col.values[mesh.tri[t]].mean(axis=1)  # centroid value
        g = col.grad()[t]
        rs.append(r[keep])
        ns.append(np.linalg.norm(vals, axis=1))
        gs.append(np.sqrt((g ** 2).sum(axis=(1, 2))))
    r = np.concatenate(rs)
    if r.size == 0:
        raise KernelError("empty sample set after excluding |x - y| < 8h")
    return DecayTable(r=r, absN=np.concatenate(ns), absGradN=np.concatenate(gs), excluded=excluded)


def disk_laplace_neumann(x, y) -> np.ndarray:
    """Classical Neumann function of -Delta on the unit disk with flux -1/(2 pi).

    -(1/2pi) [ln|x - y| + ln| |y| x - y/|y| |], defined up to an additive constant.
    """
    x = np.atleast_2d(x)
    y = np.asarray(y, float)
    ny = np.linalg.norm(y)
    r1 = np.linalg.norm(x - y, axis=1)
    if ny < 1e-14:
        r2 = np.ones(len(x))
    else:
        r2 = np.linalg.norm(ny * x - y / ny, axis=1)
    return -(np.log(r1) + np.log(r2)) / (2 * np.pi)


__all__ = [
    "KernelColumn", "KernelError", "SolverError", "neumann_function_column", "symmetry_check",
    "kernel_profile", "DecayTable", "disk_laplace_neumann", "random_pairs", "normalize",
]
