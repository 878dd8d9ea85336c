"""Structured P1 triangulations: the periodic unit cell and smooth planar domains."""
from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np


class MeshError(ValueError):
    pass


def _triangle_geometry(xy):
    """Areas and barycentric gradients for triangles given as ``(T, 3, 2)`` coordinates."""
    e1 = xy[:, 1] - xy[:, 0]
    e2 = xy[:, 2] - xy[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    area = 0.5 * det
    # gradients of barycentric coordinates: rotate opposite edges
    grads = np.empty_like(xy)
    for k in range(3):
        p, q = xy[:, (k + 1) % 3], xy[:, (k + 2) % 3]
        grads[:, k, 0] = (p[:, 1] - q[:, 1]) / det
        grads[:, k, 1] = (q[:, 0] - p[:, 0]) / det
    return area, grads


@dataclass
class P1Mesh:
    """Common triangle data consumed by assembly and norms.

    ``tri_xy`` holds per-triangle vertex coordinates; on the torus these are
    unwrapped so that each triangle is a genuine planar triangle.
    """

    nodes: np.ndarray
    tri: np.ndarray
    tri_xy: np.ndarray = field(repr=False)
    area: np.ndarray = field(init=False, repr=False)
    grads: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.area, self.grads = _triangle_geometry(self.tri_xy)
        self._mass = None

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_tri(self) -> int:
        return self.tri.shape[0]

    @property
    def centroids(self) -> np.ndarray:
        return self.tri_xy.mean(axis=1)

    @property
    def edge_midpoints(self) -> np.ndarray:
        """Quadrature points ``(T, 3, 2)``: midpoints of the three edges."""
        x = self.tri_xy
        return 0.5 * (x + np.roll(x, -1, axis=1))

    @property
    def lumped_mass(self) -> np.ndarray:
        """``int phi_b`` for every node (exact for P1)."""
        if self._mass is None:
            self._mass = np.bincount(self.tri.ravel(), np.repeat(self.area / 3.0, 3), self.n_nodes)
        return self._mass

    @property
    def total_area(self) -> float:
        return float(self.area.sum())

    def min_angle(self) -> float:
        """Smallest interior angle over all triangles, in degrees."""
        x = self.tri_xy
        angs = []
        for k in range(3):
            u = x[:, (k + 1) % 3] - x[:, k]
            v = x[:, (k + 2) % 3] - x[:, k]
            c = (u * v).sum(1) / np.linalg.norm(u, axis=1) / np.linalg.norm(v, axis=1)
            angs.append(np.degrees(np.arccos(np.clip(c, -1, 1))))
        return float(np.min(angs))


@dataclass
class TorusMesh(P1Mesh):
    n: int = 0

    @property
    def h(self) -> float:
        return 1.0 / self.n


def build_torus_mesh(n: int) -> TorusMesh:
    """Uniform ``n x n`` grid on [0,1)^2, each square split along its diagonal.

    Node ``(i, j)`` at ``(i/n, j/n)`` has id ``i * n + j``.
    """
    if n < 4:
        raise MeshError(f"torus resolution must be >= 4, got {n}")
    t = np.arange(n) / n
    X, Y = np.meshgrid(t, t, indexing="ij")
    nodes = np.stack([X.ravel(), Y.ravel()], axis=1)
    I, J = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    I, J = I.ravel(), J.ravel()

    def nid(i, j):
        return (i % n) * n + (j % n)

    lower = np.stack([nid(I, J), nid(I + 1, J), nid(I + 1, J + 1)], axis=1)
    upper = np.stack([nid(I, J), nid(I + 1, J + 1), nid(I, J + 1)], axis=1)
    tri = np.concatenate([lower, upper])
    h = 1.0 / n
    base = np.stack([I * h, J * h], axis=1)
    off_l = np.array([[0, 0], [h, 0], [h, h]])
    off_u = np.array([[0, 0], [h, h], [0, h]])
    tri_xy = np.concatenate([base[:, None, :] + off_l, base[:, None, :] + off_u])
    return TorusMesh(nodes=nodes, tri=tri, tri_xy=tri_xy, n=n)


def torus_interpolate(mesh: TorusMesh, values: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Evaluate the periodic P1 interpolant of nodal ``values`` at points ``y``.

    ``values`` has shape ``(n_nodes, ...)``; result ``(len(y), ...)``.
    """
    n = mesh.n
    s = np.mod(np.asarray(y, dtype=float), 1.0) * n
    i = np.floor(s[:, 0]).astype(int) % n
    j = np.floor(s[:, 1]).astype(int) % n
    u = s[:, 0] - np.floor(s[:, 0])
    v = s[:, 1] - np.floor(s[:, 1])

    def val(di, dj):
        return values[((i + di) % n) * n + (j + dj) % n]

    v00, v11 = val(0, 0), val(1, 1)
    lower = u >= v
    # lower triangle (0,0),(1,0),(1,1): 1-u, u-v, v ; upper (0,0),(1,1),(0,1): 1-v, u, v-u
    w0 = np.where(lower, 1 - u, 1 - v)
    w11 = np.where(lower, v, u)
    wx = np.where(lower, u - v, v - u)
    other = np.where(_expand(lower, v00.ndim), val(1, 0), val(0, 1))
    return _expand(w0, v00.ndim) * v00 + _expand(w11, v00.ndim) * v11 + _expand(wx, v00.ndim) * other


def torus_triangle(mesh: TorusMesh, y: np.ndarray) -> np.ndarray:
    """Index of the torus triangle containing each point of ``y`` (reduced mod 1)."""
    n = mesh.n
    s = np.mod(np.asarray(y, float), 1.0) * n
    fl = np.floor(s)
    i = fl[:, 0].astype(int) % n
    j = fl[:, 1].astype(int) % n
    u, v = s[:, 0] - fl[:, 0], s[:, 1] - fl[:, 1]
    return i * n + j + np.where(u >= v, 0, n * n)


def _expand(a, ndim):
    return a.reshape(a.shape + (1,) * (ndim - 1))


SHAPES = ("disk", "flower")


def boundary_radius(shape: str, theta):
    if shape == "disk":
        return np.ones_like(np.asarray(theta, dtype=float))
    if shape == "flower":
        return 1.0 + 0.1 * np.sin(3.0 * np.asarray(theta, dtype=float))
    raise MeshError(f"unknown domain shape {shape!r}")


@dataclass
class DomainMesh(P1Mesh):
    shape: str = "disk"
    n: int = 0
    boundary_edges: np.ndarray = field(default=None, repr=False)
    delta: np.ndarray = field(default=None, repr=False)

    @property
    def h(self) -> float:
        return 2.0 * np.pi / self.n

    @property
    def boundary_nodes(self) -> np.ndarray:
        return self.boundary_edges[:, 0]

    @property
    def anchor(self) -> int:
        """Node nearest the origin."""
        return int(np.argmin((self.nodes ** 2).sum(1)))

    def boundary_geometry(self):
        return boundary_geometry(self)

    @property
    def perimeter(self) -> float:
        return float(boundary_geometry(self).length.sum())


def _stitch(inner, a0, outer, b0):
    """Triangulate the annulus between two evenly spaced closed rings.

    ``a0`` / ``b0`` are the angles of ``inner[0]`` / ``outer[0]``; nodes advance
    counterclockwise.  Steps on either ring are merged in angular order.
    """
    na, nb = len(inner), len(outer)
    d = np.angle(np.exp(1j * (b0 + 2 * np.pi * np.arange(nb) / nb - a0)))
    j0 = int(np.argmin(np.abs(d)))
    outer = np.roll(outer, -j0)
    a_next = a0 + 2 * np.pi * np.arange(1, na + 1) / na
    b_next = a0 + d[j0] + 2 * np.pi * np.arange(1, nb + 1) / nb
    ang = np.concatenate([a_next, b_next])
    kind = np.concatenate([np.zeros(na, int), np.ones(nb, int)])
    order = np.lexsort((kind, ang))
    kind = kind[order]
    i = np.concatenate([[0], np.cumsum(kind == 0)[:-1]])
    j = np.concatenate([[0], np.cumsum(kind == 1)[:-1]])
    ai, ai1 = inner[i % na], inner[(i + 1) % na]
    bj, bj1 = outer[j % nb], outer[(j + 1) % nb]
    step_in = kind == 0
    return np.stack([ai, np.where(step_in, ai1, bj1), bj], axis=1)


def build_domain_mesh(shape: str, n: int) -> DomainMesh:
    """Ring mesh of the disk or the flower ``r = 1 + 0.1 sin(3 theta)``.

    ``n`` boundary nodes lie exactly on the curve; ``R = round(n / 2pi)``
    rings give radial and tangential spacing close to ``h = 2 pi / n``.
    """
    if shape not in SHAPES:
        raise MeshError(f"unknown domain shape {shape!r}")
    if n < 8:
        raise MeshError(f"domain resolution must be >= 8, got {n}")
    R = max(2, int(round(n / (2 * np.pi))))
    rho_list, th_list, rings = [0.0], [0.0], [np.array([0])]
    start = 1
    ring_ang = [np.array([0.0])]
    for k in range(1, R + 1):
        nk = n if k == R else max(6, int(round(n * k / R)))
        ang = 2 * np.pi * (np.arange(nk) + 0.5 * (k % 2)) / nk if k < R else 2 * np.pi * np.arange(nk) / nk
        rho_list.extend([k / R] * nk)
        th_list.extend(ang)
        rings.append(np.arange(start, start + nk))
        ring_ang.append(ang)
        start += nk
    rho = np.array(rho_list)
    th = np.array(th_list)
    r = rho * boundary_radius(shape, th)
    nodes = np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
    if shape == "disk":
        # exact unit radius on the boundary ring
        b = rings[-1]
        nodes[b] = np.stack([np.cos(th[b]), np.sin(th[b])], axis=1)

    r1 = rings[1]
    tris = [np.stack([np.zeros(len(r1), int), r1, np.roll(r1, -1)], axis=1)]
    for k in range(1, R):
        tris.append(_stitch(rings[k], ring_ang[k][0], rings[k + 1], ring_ang[k + 1][0]))
    tri = np.concatenate(tris).astype(np.int64)
    xy = nodes[tri]
    e1, e2 = xy[:, 1] - xy[:, 0], xy[:, 2] - xy[:, 0]
    neg = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0] < 0
    tri[neg] = tri[neg][:, [0, 2, 1]]

    b = rings[-1]
    bedges = np.stack([b, np.roll(b, -1)], axis=1)
    mesh = DomainMesh(nodes=nodes, tri=tri, tri_xy=nodes[tri], shape=shape, n=n, boundary_edges=bedges)
    mesh.delta = distance_to_boundary(mesh, nodes)
    mesh.delta[b] = 0.0
    return mesh


@dataclass
class BoundaryGeometry:
    normal: np.ndarray
    length: np.ndarray
    midpoint: np.ndarray
    tri: np.ndarray  # adjacent triangle per edge


def boundary_geometry(mesh: DomainMesh) -> BoundaryGeometry:
    """Outward unit normals, lengths, midpoints and adjacent triangles of boundary edges."""
    cached = getattr(mesh, "_bgeo", None)
    if cached is not None:
        return cached
    p = mesh.nodes[mesh.boundary_edges[:, 0]]
    q = mesh.nodes[mesh.boundary_edges[:, 1]]
    t = q - p
    length = np.hypot(t[:, 0], t[:, 1])
    normal = np.stack([t[:, 1], -t[:, 0]], axis=1) / length[:, None]
    # adjacent triangle: the one containing both endpoints
    N = mesh.n_nodes
    keys = np.concatenate([mesh.tri[:, k] * N + mesh.tri[:, (k + 1) % 3] for k in range(3)])
    tidx = np.tile(np.arange(mesh.n_tri), 3)
    order = np.argsort(keys)
    keys, tidx = keys[order], tidx[order]
    u, v = mesh.boundary_edges[:, 0], mesh.boundary_edges[:, 1]
    # counterclockwise boundary edge u->v appears with the same orientation in its triangle
    pos = np.searchsorted(keys, u * N + v)
    pos = np.minimum(pos, len(keys) - 1)
    if not np.all(keys[pos] == u * N + v):
        raise MeshError("boundary edge without adjacent triangle")
    adj = tidx[pos]
    geo = BoundaryGeometry(normal=normal, length=length, midpoint=0.5 * (p + q), tri=adj)
    mesh._bgeo = geo
    return geo


def _segment_distance(x, p, q):
    t = q - p
    s = np.clip(((x - p) * t).sum(-1) / (t * t).sum(-1), 0.0, 1.0)
    proj = p + s[..., None] * t
    return np.linalg.norm(x - proj, axis=-1)


@numba.njit(cache=True)
def _circles(p, q, block):
    ne = p.shape[0]
    nb = (ne + block - 1) // block
    cx = np.empty(nb)
    cy = np.empty(nb)
    cr = np.empty(nb)
    for b in range(nb):
        lo, hi = b * block, min(ne, (b + 1) * block)
        sx = 0.0
        sy = 0.0
        for e in range(lo, hi):
            sx += p[e, 0] + q[e, 0]
            sy += p[e, 1] + q[e, 1]
        sx /= 2 * (hi - lo)
        sy /= 2 * (hi - lo)
        r = 0.0
        for e in range(lo, hi):
            r = max(r, np.hypot(p[e, 0] - sx, p[e, 1] - sy), np.hypot(q[e, 0] - sx, q[e, 1] - sy))
        cx[b], cy[b], cr[b] = sx, sy, r
    return cx, cy, cr


@numba.njit(cache=True)
def _polygon_distance(x, p, q, block):
    """Exact point-to-polygon distance and closest edge, pruned by bounding circles of edge runs."""
    ne = p.shape[0]
    cx, cy, cr = _circles(p, q, block)
    nb = cx.shape[0]
    out = np.empty(x.shape[0])
    seg = np.empty(x.shape[0], dtype=np.int64)
    lb = np.empty(nb)
    for k in range(x.shape[0]):
        x0, x1 = x[k, 0], x[k, 1]
        first = 0
        for b in range(nb):
            lb[b] = np.hypot(cx[b] - x0, cy[b] - x1) - cr[b]
            if lb[b] < lb[first]:
                first = b
        best = np.inf
        arg = 0
        for b in range(nb):
            bb = (first + b) % nb
            if lb[bb] >= best:
                continue
            for e in range(bb * block, min(ne, (bb + 1) * block)):
                d = _seg(x0, x1, p[e, 0], p[e, 1], q[e, 0], q[e, 1])
                if d < best:
                    best = d
                    arg = e
        out[k] = best
        seg[k] = arg
    return out, seg


@numba.njit(cache=True)
def _descend(x, p, start):
    """Walk along polygon vertices from ``start`` while the distance decreases."""
    ne = p.shape[0]
    out = np.empty(x.shape[0], dtype=np.int64)
    for k in range(x.shape[0]):
        i = start[k]
        d = np.hypot(x[k, 0] - p[i, 0], x[k, 1] - p[i, 1])
        moved = True
        while moved:
            moved = False
            for s in (-1, 1):
                j = (i + s) % ne
                dj = np.hypot(x[k, 0] - p[j, 0], x[k, 1] - p[j, 1])
                if dj < d:
                    i, d, moved = j, dj, True
        out[k] = i
    return out


@numba.njit(cache=True, inline="always")
def _seg(x0, x1, p0, p1, q0, q1):
    t0, t1 = q0 - p0, q1 - p1
    s = ((x0 - p0) * t0 + (x1 - p1) * t1) / (t0 * t0 + t1 * t1)
    s = min(1.0, max(0.0, s))
    return np.hypot(x0 - p0 - s * t0, x1 - p1 - s * t1)


def _bdry_arrays(mesh, x):
    x = np.ascontiguousarray(np.atleast_2d(np.asarray(x, dtype=float)))
    p = np.ascontiguousarray(mesh.nodes[mesh.boundary_edges[:, 0]])
    q = np.ascontiguousarray(mesh.nodes[mesh.boundary_edges[:, 1]])
    return x, p, q, max(4, int(np.sqrt(len(p))))


def boundary_projection(mesh: DomainMesh, x: np.ndarray):
    """Exact distance to the boundary polygon and the index of the closest edge."""
    x, p, q, block = _bdry_arrays(mesh, x)
    if mesh.shape == "disk":
        return _regular_polygon_projection(x, p, q)
    return _polygon_distance(x, p, q, block)


def _regular_polygon_projection(x, p, q):
    """Disk boundary: a regular polygon with vertex k at angle 2 pi k / n.

    For interior points the closest edge lies in the angular sector of the
    point; the two neighbours are checked as well.
    """
    n = len(p)
    k = np.floor(np.mod(np.arctan2(x[:, 1], x[:, 0]), 2 * np.pi) * n / (2 * np.pi)).astype(np.int64)
    best = np.full(len(x), np.inf)
    arg = np.zeros(len(x), np.int64)
    for s in (-1, 0, 1):
        e = (k + s) % n
        d = _segment_distance(x, p[e], q[e])
        better = d < best
        best = np.where(better, d, best)
        arg = np.where(better, e, arg)
    return best, arg


def distance_to_boundary(mesh: DomainMesh, x: np.ndarray) -> np.ndarray:
    """Exact distance from points ``x`` to the boundary polygon."""
    return boundary_projection(mesh, x)[0]


def nearest_boundary_node(mesh: DomainMesh, x: np.ndarray, edge: np.ndarray | None = None) -> np.ndarray:
    """Position (in boundary order) of the boundary node nearest to each point.

    Starts from the closest edge and descends along the boundary, which finds
    the global minimum for points whose closest boundary arc is unimodal.
    """
    x, p, q, block = _bdry_arrays(mesh, x)
    if edge is None:
        edge = _polygon_distance(x, p, q, block)[1]
    return _descend(x, p, np.asarray(edge, np.int64))


def p1_evaluate(mesh: P1Mesh, values: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Evaluate a nodal P1 field at a few points (brute-force triangle search).

    Points outside every triangle get the value at the nearest node.
    """
    pts = np.atleast_2d(np.asarray(pts, float))
    values = np.asarray(values, float)
    out = np.empty((len(pts),) + values.shape[1:])
    xy = mesh.tri_xy
    a, b, c = xy[:, 0], xy[:, 1], xy[:, 2]
    det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1])
    for k, x in enumerate(pts):
        l1 = ((x[0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (x[1] - a[:, 1])) / det
        l2 = ((b[:, 0] - a[:, 0]) * (x[1] - a[:, 1]) - (x[0] - a[:, 0]) * (b[:, 1] - a[:, 1])) / det
        l0 = 1.0 - l1 - l2
        inside = np.nonzero((l0 >= -1e-12) & (l1 >= -1e-12) & (l2 >= -1e-12))[0]
        if len(inside):
            t = inside[0]
            w = np.array([l0[t], l1[t], l2[t]])
            out[k] = np.tensordot(w, values[mesh.tri[t]], axes=1)
        else:
            out[k] = values[np.argmin(((mesh.nodes - x) ** 2).sum(axis=1))]
    return out


def dump_mesh(mesh: P1Mesh, path) -> None:
    """Plain-text debug dump: ``# section <name> <rows> <cols>`` then rows."""
    with open(path, "w") as fh:
        fh.write(f"# hlab mesh dump ({type(mesh).__name__})\n")
        sections = [("nodes", mesh.nodes, "%.17g"), ("triangles", mesh.tri, "%d")]
        if isinstance(mesh, DomainMesh):
            sections.append(("boundary_edges", mesh.boundary_edges, "%d"))
            sections.append(("delta", mesh.delta[:, None], "%.17g"))
        for name, arr, fmt in sections:
            fh.write(f"# section {name} {arr.shape[0]} {arr.shape[1]}\n")
            np.savetxt(fh, arr, fmt=fmt)
