"""Cell correctors, the homogenized tensor and flux correctors on the torus."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .coefficients import CoefficientTensor, constant_tensor
from .mesh import TorusMesh, build_torus_mesh, torus_interpolate, torus_triangle
from .solver import CELL, NeumannData, SolverError, assemble, load_vector, nodal_load, solve_mean_zero

D = 2
MAGIC = "HLAB-CS1"


class QuadratureMismatchError(SolverError):
    pass


@dataclass
class CorrectorSet:
    """Cell-problem data on a torus mesh.

    Array layouts (N nodes, T triangles):

    * ``chi``   ``(N, j, alpha, beta)``      nodal correctors chi_j^{alpha beta}
    * ``A_hat`` ``(i, j, alpha, beta)``
    * ``H``     ``(T, i, l, alpha, gamma)``  per triangle
    * ``U``     ``(N, i, l, alpha, gamma)``  nodal
    * ``F``     ``(T, i, l, k, alpha, gamma)`` = d_k U_il^{alpha gamma}
    """

    A: CoefficientTensor
    mesh: TorusMesh
    chi: np.ndarray
    residuals: dict = field(default_factory=dict)
    A_hat: np.ndarray | None = None
    H: np.ndarray | None = None
    U: np.ndarray | None = None
    F: np.ndarray | None = None
    system: object = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.mesh.n

    @property
    def m(self) -> int:
        return self.A.m

    def chi_grad(self) -> np.ndarray:
        """``(T, j, gamma, beta, l)`` = d_l chi_j^{gamma beta}."""
        mesh = self.mesh
        return np.einsum("tkl,tkjgb->tjgbl", mesh.grads, self.chi[mesh.tri])

    def chi_at(self, y) -> np.ndarray:
        """Periodic P1 interpolant of chi at points ``y``; shape ``(len(y), j, alpha, beta)``."""
        return torus_interpolate(self.mesh, self.chi, np.asarray(y, float))

    def H_at(self, y) -> np.ndarray:
        """Piecewise-constant lookup of ``H`` at points ``y``; ``(len(y), i, l, alpha, gamma)``."""
        if self.H is None:
            raise ValueError("flux correctors not computed")
        return self.H[torus_triangle(self.mesh, y)]

    def homogenized_tensor_flat(self) -> np.ndarray:
        from .coefficients import to_flat
        return to_flat(self.A_hat)


def solve_correctors(A: CoefficientTensor, n: int, tol: float = 1e-10, precond: str = "jacobi") -> CorrectorSet:
    """Solve L_1(chi_j^beta) = -L_1(P_j^beta) on the torus, mean zero, for every (j, beta)."""
    mesh = build_torus_mesh(n)
    system = assemble(A, CELL, mesh)
    m = A.m
    coef = system.coef
    chi = np.zeros((mesh.n_nodes, D, m, m))
    residuals = {}
    for j in range(D):
        for b in range(m):
            # -int a_ij^{alpha beta} d_i phi^alpha  ==  divergence-form data f_i^alpha = a_ij^{alpha beta}
            f = coef[:, :, j, :, b].transpose(0, 2, 1)  # (T, alpha, i)
            load = load_vector(mesh, NeumannData(m=m, f=f))
            # compatible by construction on the torus; projecting drops the roundoff
            # that a near-zero load (constant A) would otherwise fail the check on
            u = solve_mean_zero(system, load, tol=tol, precond=precond, project=True)
            chi[:, j, :, b] = u.values
            residuals[f"chi_{j + 1}{b + 1}"] = u.info["residual"]
    cs = CorrectorSet(A=A, mesh=mesh, chi=chi, residuals=residuals, system=system)
    homogenized_tensor(cs)
    return cs


def homogenized_tensor(cs: CorrectorSet) -> np.ndarray:
    """Cell average of a_ij^{ab} + a_il^{ag} d_l chi_j^{gb}, same quadrature as assembly."""
    coef = cs.system.coef if cs.system is not None else _coef(cs)
    area = cs.mesh.area
    flux = _flux(coef, cs.chi_grad())
    cs.A_hat = np.einsum("t,tijab->ijab", area, flux)
    return cs.A_hat


def _coef(cs):
    from .solver import triangle_coefficients
    return triangle_coefficients(cs.A, CELL, cs.mesh)


def _flux(coef, gchi):
    """Per-triangle a_ij^{ab} + a_il^{ag} d_l chi_j^{gb}, layout (T, i, j, alpha, beta)."""
    return coef + np.einsum("tilag,tjgbl->tijab", coef, gchi)


def flux_correctors(cs: CorrectorSet, tol: float = 1e-10, precond: str = "jacobi",
                    mean_tol: float = 1e-8) -> CorrectorSet:
    """H = A_hat - a (I + grad chi); periodic Poisson solve Delta U = H; F = grad U."""
    if cs.A_hat is None:
        homogenized_tensor(cs)
    mesh = cs.mesh
    m = cs.m
    coef = cs.system.coef if cs.system is not None else _coef(cs)
    flux = _flux(coef, cs.chi_grad())  # (T, i, l, alpha, gamma) with column index l
    H = cs.A_hat[None] - flux
    scale = max(np.abs(cs.A_hat).max(), 1e-300)
    mean_H = np.einsum("t,tilag->ilag", mesh.area, H) / mesh.total_area
    cs.residuals["mean_H"] = float(np.abs(mean_H).max() / scale)
    if cs.residuals["mean_H"] > mean_tol:
        raise QuadratureMismatchError(f"mean of H is {cs.residuals['mean_H']:.3e} (relative)")
    lap = assemble(constant_tensor(np.eye(2).reshape(2, 2, 1, 1), name="custom-identity"), CELL, mesh)
    U = np.zeros((mesh.n_nodes, D, D, m, m))
    tri = mesh.tri.ravel()
    for i in range(D):
        for l in range(D):
            for a in range(m):
                for g in range(m):
                    # int grad U . grad phi = -int H phi
                    vals = np.repeat(-H[:, i, l, a, g] * mesh.area / 3.0, 3)
                    load = nodal_load(mesh, 1, np.bincount(tri, vals, mesh.n_nodes))
                    u = solve_mean_zero(lap, load, tol=tol, precond=precond, project=True)
                    U[:, i, l, a, g] = u.values[:, 0]
    cs.H = H
    cs.U = U
    cs.F = np.einsum("tqk,tqilag->tilkag", mesh.grads, U[mesh.tri])
    return cs


def periodic_test_fields(count: int = 20):
    """Smooth periodic fields cos/sin(2 pi (p y1 + q y2)) with their W^{1,2} norms."""
    modes = [(1, 0), (0, 1), (1, 1), (1, -1), (2, 0), (0, 2), (2, 1), (1, 2), (2, -1), (1, -2),
             (3, 0), (0, 3), (3, 1), (1, 3)]
    out = []
    for p, q in modes:
        for kind in ("cos", "sin"):
            if len(out) == count:
                return out
            k2 = (2 * np.pi) ** 2 * (p * p + q * q)
            out.append((kind, p, q, np.sqrt(0.5 + 0.5 * k2)))
    return out


def _edge_gauss(npts=4):
    t, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (t + 1), 0.5 * w


def weak_divergence(cs: CorrectorSet, count: int = 20) -> float:
    """max over test fields and (l, k, alpha, gamma) of |sum_i int F_ilk d_i phi| / ||phi||_{W^{1,2}}.

    ``int_T d_i phi`` is evaluated as a boundary integral with Gauss points.
    """
    if cs.F is None:
        raise ValueError("flux correctors not computed")
    mesh = cs.mesh
    x = mesh.tri_xy
    t, w = _edge_gauss()
    worst = 0.0
    for kind, p, q, nrm in periodic_test_fields(count):
        k = 2 * np.pi * np.array([p, q])
        fn = np.cos if kind == "cos" else np.sin
        # int_T d_i phi = sum_edges int_e phi n_i ds ; outward normal * length = rotate(edge)
        integ = np.zeros((mesh.n_tri, 2))
        for e in range(3):
            a, b = x[:, e], x[:, (e + 1) % 3]
            d = b - a
            nl = np.stack([d[:, 1], -d[:, 0]], axis=1)
            s = sum(wi * fn((a + ti * d) @ k) for ti, wi in zip(t, w))
            integ += s[:, None] * nl
        val = np.einsum("tilkag,ti->lkag", cs.F, integ) / nrm
        worst = max(worst, float(np.abs(val).max()))
    return worst


def chi_oracle_laminate(c0: float, c1: float, y1):
    """Exact corrector chi_1 of the scalar laminate a = c0 + c1 sin(2 pi y1), mean zero.

    chi' = q / a - 1 with q the harmonic mean sqrt(c0^2 - c1^2).
    """
    from scipy.integrate import quad

    y1 = np.mod(np.asarray(y1, float), 1.0)
    q = np.sqrt(c0 * c0 - c1 * c1)

    def prim(y):
        return quad(lambda s: q / (c0 + c1 * np.sin(2 * np.pi * s)) - 1.0, 0.0, y, epsabs=1e-13, epsrel=1e-13)[0]

    mean = quad(prim, 0.0, 1.0, epsabs=1e-12, epsrel=1e-12)[0]
    return np.array([prim(v) for v in np.ravel(y1)]).reshape(np.shape(y1)) - mean


def export_correctors(cs: CorrectorSet, path) -> None:
    """Write ``MAGIC\\n`` + JSON header line + raw little-endian float64 arrays.

    The header lists each array's name, shape and byte offset (relative to the
    start of the binary block that follows the header line).
    """
    arrays = {"chi": cs.chi}
    for name in ("H", "U", "F"):
        v = getattr(cs, name)
        if v is not None:
            arrays[name] = v
    header = {
        "format": MAGIC,
        "n": cs.n,
        "m": cs.m,
        "d": D,
        "coefficient": cs.A.name,
        "params": [list(p) for p in cs.A.params],
        "A_hat": cs.A_hat.tolist() if cs.A_hat is not None else None,
        "residuals": cs.residuals,
        "arrays": [],
    }
    off = 0
    for name, arr in arrays.items():
        header["arrays"].append({"name": name, "shape": list(arr.shape), "dtype": "<f8", "offset": off})
        off += arr.size * 8
    with open(path, "wb") as fh:
        fh.write((MAGIC + "\n").encode())
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
        for arr in arrays.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_correctors(path) -> tuple[dict, dict]:
    """Inverse of :func:`export_correctors`: ``(header, arrays)``."""
    with open(path, "rb") as fh:
        magic = fh.readline().decode().strip()
        if magic != MAGIC:
            raise ValueError(f"not a corrector file (magic {magic!r})")
        header = json.loads(fh.readline().decode())
        blob = fh.read()
    arrays = {}
    for a in header["arrays"]:
        size = int(np.prod(a["shape"]))
        arrays[a["name"]] = np.frombuffer(blob, dtype=a["dtype"], count=size, offset=a["offset"]).reshape(a["shape"])
    return header, arrays
