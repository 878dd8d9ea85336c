"""Discrete norms, Hoelder seminorms, nontangential maximal functions and Rellich ratios."""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy.spatial import cKDTree

from ..coefficients import CoefficientTensor
from ..mesh import DomainMesh, boundary_geometry, nearest_boundary_node
from ..neumann import _centroid_delta, _centroid_projection, conormal_trace
from ..solver import _GAUSS_T, _GAUSS_W, DiscreteField, LinearSystem, assemble

KINDS = ("Lp-domain", "W1p-domain", "sup-gradient", "holder", "Lp-boundary", "ntmf-Lp", "rellich-ratio")
MAX_PAIRS = 1_000_000


class NormError(ValueError):
    pass


class UndefinedRatioError(NormError):
    pass


@dataclass(frozen=True)
class NormRequest:
    kind: str
    p: float = 2.0
    gamma: float = 0.5
    C0: float = 2.0
    seminorm: bool = False  # W1p: gradient part only
    samples: int = 1000
    seed: int = 0
    A: CoefficientTensor | None = None
    eps: object = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise NormError(f"unknown norm kind {self.kind!r}; choose from {KINDS}")
        if self.kind in ("Lp-domain", "W1p-domain", "Lp-boundary", "ntmf-Lp") and not 1 < self.p < np.inf:
            raise NormError(f"p must lie in (1, inf), got {self.p}")
        if self.kind == "holder" and not 0 < self.gamma <= 1:
            raise NormError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.kind == "ntmf-Lp" and not self.C0 > 1:
            raise NormError(f"aperture C0 must exceed 1, got {self.C0}")


@dataclass
class BoundaryFunction:
    """Values on the boundary of a domain mesh.

    ``where="node"``: one row per boundary node, in boundary order, linear on
    edges.  ``where="edge"``: one row per boundary edge, constant on it.
    """

    mesh: DomainMesh
    values: np.ndarray
    where: str = "node"
    fallback: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, float)
        self.values = v.reshape(len(v), -1)
        if self.where not in ("node", "edge"):
            raise NormError(f"unknown boundary location {self.where!r}")
        if len(v) != len(self.mesh.boundary_edges):
            raise NormError("boundary function length does not match the number of boundary edges")

    def __mul__(self, c):
        return BoundaryFunction(self.mesh, c * self.values, self.where, self.fallback)

    __rmul__ = __mul__


def trace(field: DiscreteField) -> BoundaryFunction:
    mesh = field.mesh
    return BoundaryFunction(mesh, field.values[mesh.boundary_nodes], "node")


def _pointwise(v):
    return np.sqrt((v.reshape(len(v), -1) ** 2).sum(axis=1))


def _grad_norm(field: DiscreteField) -> np.ndarray:
    return _pointwise(field.grad)


def lp_domain(field: DiscreteField, p: float) -> float:
    """Edge-midpoint quadrature (exact for quadratics) of ``|u|^p``."""
    mesh = field.mesh
    vals = field.values[mesh.tri]  # (T, 3, m)
    mid = 0.5 * (vals + np.roll(vals, -1, axis=1))
    pw = (np.sqrt((mid ** 2).sum(axis=2)) ** p).mean(axis=1)
    return float((mesh.area * pw).sum() ** (1.0 / p))


def grad_lp(field: DiscreteField, p: float) -> float:
    mesh = field.mesh
    return float((mesh.area * _grad_norm(field) ** p).sum() ** (1.0 / p))


def lp_boundary(bf: BoundaryFunction, p: float) -> float:
    geo = boundary_geometry(bf.mesh)
    if bf.where == "edge":
        return float((geo.length * _pointwise(bf.values) ** p).sum() ** (1.0 / p))
    a = bf.values
    b = np.roll(bf.values, -1, axis=0)
    tot = sum(w * _pointwise((1 - t) * a + t * b) ** p for t, w in zip(_GAUSS_T, _GAUSS_W))
    return float((geo.length * tot).sum() ** (1.0 / p))


def boundary_function_lp(mesh: DomainMesh, fun, p: float = 2.0) -> float:
    """``||fun||_{L^p(bdry)}`` of an analytic scalar ``x -> (N,)`` by 2-point Gauss per edge."""
    geo = boundary_geometry(mesh)
    P = mesh.nodes[mesh.boundary_edges[:, 0]]
    Q = mesh.nodes[mesh.boundary_edges[:, 1]]
    tot = sum(w * np.abs(fun((1 - t) * P + t * Q)) ** p for t, w in zip(_GAUSS_T, _GAUSS_W))
    return float((geo.length * tot).sum() ** (1.0 / p))


def domain_function_lp(mesh, fun, p: float = 2.0) -> float:
    """``||fun||_{L^p}`` of an analytic field ``x -> (N, ...)`` by edge-midpoint quadrature."""
    q = mesh.edge_midpoints.reshape(-1, 2)
    v = _pointwise(np.asarray(fun(q), float)).reshape(-1, 3)
    return float((mesh.area * (v ** p).mean(axis=1)).sum() ** (1.0 / p))


def holder_seminorm(field: DiscreteField, gamma: float, sample_count: int = 1000, seed: int = 0) -> float:
    """Sampled ``max |u(x) - u(y)| / |x - y|^gamma`` over node pairs at distance >= 2h.

    Nodes are a seeded random permutation prefix, so the value is monotone in
    ``sample_count``.  Pairs are capped at 10^6.
    """
    if not 0 < gamma <= 1:
        raise NormError(f"gamma must lie in (0, 1), got {gamma}")
    mesh = field.mesh
    cap = int((1 + np.sqrt(1 + 8 * MAX_PAIRS)) / 2)
    k = min(sample_count, mesh.n_nodes, cap)
    idx = np.random.default_rng(seed).permutation(mesh.n_nodes)[:k]
    x = mesh.nodes[idx]
    u = field.values[idx]
    hmin = 2.0 * mesh.h
    best, count = 0.0, 0
    for s in range(0, k, 256):
        xs, us = x[s:s + 256], u[s:s + 256]
        d = np.linalg.norm(xs[:, None] - x[None], axis=2)
        du = np.linalg.norm(us[:, None] - u[None], axis=2)
        # upper triangle only (each pair once)
        ii = np.arange(s, s + len(xs))[:, None]
        ok = (d >= hmin) & (np.arange(k)[None] > ii)
        count += int(ok.sum())
        if ok.any():
            best = max(best, float((du[ok] / d[ok] ** gamma).max()))
    if count < 10:
        raise NormError(f"only {count} admissible pairs (need >= 10)")
    return best


@numba.njit(cache=True)
def _arc_extent(c, R, k, P, sign):
    """Largest s with |c - P[k + sign * s']| < R for all s' <= s (binary search)."""
    nb = P.shape[0]
    lo, hi = 0, nb // 2
    while lo < hi:
        mid = (lo + hi + 1) // 2
        j = (k + sign * mid) % nb
        dx = c[0] - P[j, 0]
        dy = c[1] - P[j, 1]
        if dx * dx + dy * dy < R * R:
            lo = mid
        else:
            hi = mid - 1
    return lo


@numba.njit(cache=True)
def _find(nxt, i):
    root = i
    while nxt[root] != root:
        root = nxt[root]
    while nxt[i] != root:
        j = nxt[i]
        nxt[i] = root
        i = j
    return root


@numba.njit(cache=True)
def _paint(order, C, R, near, P, v, out, painted):
    """Visit triangles by decreasing value; each boundary node takes the first cone hit."""
    nb = P.shape[0]
    nxt = np.arange(nb + 1)
    for t in order:
        k = near[t]
        dx = C[t, 0] - P[k, 0]
        dy = C[t, 1] - P[k, 1]
        if dx * dx + dy * dy >= R[t] * R[t]:
            continue
        right = _arc_extent(C[t], R[t], k, P, 1)
        left = _arc_extent(C[t], R[t], k, P, -1)
        if left + right + 1 >= nb:
            segs = ((0, nb - 1), (0, -1))
        else:
            a = k - left
            b = k + right
            if a < 0:
                segs = ((a + nb, nb - 1), (0, b))
            elif b >= nb:
                segs = ((a, nb - 1), (0, b - nb))
            else:
                segs = ((a, b), (0, -1))
        for lo, hi in segs:
            i = _find(nxt, lo)
            while i <= hi:
                out[i] = v[t]
                painted[i] = True
                nxt[i] = i + 1
                i = _find(nxt, i + 1)


def nontangential_max(grad, mesh: DomainMesh, C0: float = 2.0) -> BoundaryFunction:
    """``(grad u)*(P) = max |grad u(x)|`` over triangles with centroid ``|x - P| < C0 delta(x)``.

    ``grad`` is a DiscreteField or a per-triangle gradient array.  The cone
    intersects the boundary nodes in an arc around the nearest node, found by
    bisection.  Nodes whose cone holds no centroid take the value of the
    nearest triangle; their count is stored in ``fallback``.
    """
    if not C0 > 1:
        raise NormError(f"aperture C0 must exceed 1, got {C0}")
    g = grad.grad if isinstance(grad, DiscreteField) else np.asarray(grad, float)
    v = _pointwise(g)
    C = mesh.centroids
    delta, edge = _centroid_projection(mesh)
    P = mesh.nodes[mesh.boundary_nodes]
    near = nearest_boundary_node(mesh, C, edge)
    order = np.argsort(-v, kind="stable")
    out = np.zeros(len(P))
    painted = np.zeros(len(P), dtype=bool)
    _paint(order, np.ascontiguousarray(C), C0 * delta, near, np.ascontiguousarray(P), v, out, painted)
    miss = np.nonzero(~painted)[0]
    if len(miss):
        t = cKDTree(C).query(P[miss])[1]
        out[miss] = v[t]
    return BoundaryFunction(mesh, out, "node", fallback=len(miss))


def cone_members(mesh: DomainMesh, node_pos: int, C0: float = 2.0) -> np.ndarray:
    """Brute-force list of triangles whose centroid lies in the cone at boundary node ``node_pos``."""
    P = mesh.nodes[mesh.boundary_nodes[node_pos]]
    d = np.linalg.norm(mesh.centroids - P, axis=1)
    return np.nonzero(d < C0 * _centroid_delta(mesh))[0]


def boundary_gradient_sq(field: DiscreteField) -> np.ndarray:
    """``|grad u|^2`` per boundary edge from the adjacent triangle."""
    geo = boundary_geometry(field.mesh)
    return _grad_norm(field)[geo.tri] ** 2


def rellich_ratio(field: DiscreteField, A: CoefficientTensor, eps, mesh: DomainMesh | None = None,
                  system: LinearSystem | None = None, check: bool = True, rtol: float = 1e-8) -> float:
    """``int_bdry |grad u|^2 / int_bdry |conormal u|^2`` by edge quadrature.

    With ``check`` the field must solve the homogeneous equation: the residual
    on nodes off the boundary is at most ``rtol`` times the boundary residual.
    """
    mesh = field.mesh if mesh is None else mesh
    if field.mesh is not mesh:
        raise NormError("field lives on a different mesh")
    geo = boundary_geometry(mesh)
    den = float((geo.length * (conormal_trace(A, eps, field) ** 2).sum(axis=1)).sum())
    if den < 1e-14:
        raise UndefinedRatioError(f"conormal integral {den:.3e} below 1e-14")
    if check:
        if system is None:
            system = assemble(A, eps, mesh)
        r = (system.K @ field.values.reshape(-1)).reshape(mesh.n_nodes, -1)
        on_b = np.zeros(mesh.n_nodes, dtype=bool)
        on_b[mesh.boundary_nodes] = True
        ri, rb = np.linalg.norm(r[~on_b]), np.linalg.norm(r[on_b])
        if ri > rtol * max(rb, 1e-300):
            raise NormError(f"field does not solve the homogeneous equation (interior residual {ri:.3e})")
    num = float((geo.length * boundary_gradient_sq(field)).sum())
    return num / den


def norm(obj, req: NormRequest) -> float:
    """Evaluate the norm described by ``req`` on a DiscreteField or BoundaryFunction."""
    kind = req.kind
    if isinstance(obj, BoundaryFunction):
        if kind != "Lp-boundary":
            raise NormError(f"norm kind {kind!r} needs a domain field, got a boundary function")
        return lp_boundary(obj, req.p)
    if not isinstance(obj, DiscreteField):
        raise NormError(f"cannot take a norm of {type(obj).__name__}")
    if kind == "Lp-domain":
        return lp_domain(obj, req.p)
    if kind == "W1p-domain":
        gp = grad_lp(obj, req.p)
        if req.seminorm:
            return gp
        return float((lp_domain(obj, req.p) ** req.p + gp ** req.p) ** (1.0 / req.p))
    if kind == "sup-gradient":
        return float(_grad_norm(obj).max())
    if kind == "holder":
        return holder_seminorm(obj, req.gamma, req.samples, req.seed)
    if not isinstance(obj.mesh, DomainMesh):
        raise NormError(f"norm kind {kind!r} needs a domain mesh")
    if kind == "Lp-boundary":
        return lp_boundary(trace(obj), req.p)
    if kind == "ntmf-Lp":
        return lp_boundary(nontangential_max(obj, obj.mesh, req.C0), req.p)
    if req.A is None:
        raise NormError("rellich-ratio needs the coefficient tensor in the request")
    return rellich_ratio(obj, req.A, req.eps)


def fit_rate(points) -> tuple[float, float]:
    """Least-squares slope of log(value) against log(eps) and the RMS of the fit errors."""
    pts = np.asarray(points, float)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise NormError("fit_rate needs at least 3 (eps, value) points")
    if np.any(pts[:, 1] <= 0) or np.any(pts[:, 0] <= 0):
        raise NormError("fit_rate needs positive values")
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    slope, icpt = np.polyfit(x, y, 1)
    res = y - (slope * x + icpt)
    return float(slope), float(np.sqrt((res ** 2).mean()))
