"""Catalog of Neumann data (g, F, f) referenced by string id from configs.

Ids may carry arguments, e.g. ``gaussian-bump-on-boundary(0.5,0.3)``.
"""
from __future__ import annotations

import re

import numpy as np

from .mesh import DomainMesh, boundary_geometry
from .solver import _GAUSS_T, _GAUSS_W, NeumannData

G_IDS = ("zero", "cos-theta", "sin-3theta", "gaussian-bump-on-boundary")
F_IDS = ("zero", "constant-balanced", "gaussian")
f_IDS = ("zero", "constant-vector", "rotating-vortex")

_DEFAULT_ARGS = {
    "gaussian-bump-on-boundary": (0.0, 0.3),
    "gaussian": (0.3, 0.2, 0.25),
    "constant-vector": (1.0, 0.5),
    "rotating-vortex": (0.3, 0.2),
    "constant-balanced": (1.0,),
}


class DataError(ValueError):
    pass


def parse_id(text: str):
    """``"name(a,b)"`` -> ``("name", (a, b))``; bare names get catalog defaults."""
    mt = re.fullmatch(r"\s*([a-z0-9-]+)\s*(?:\((.*)\))?\s*", text)
    if not mt:
        raise DataError(f"malformed data id {text!r}")
    name, args = mt.group(1), mt.group(2)
    if args is None or not args.strip():
        return name, _DEFAULT_ARGS.get(name, ())
    try:
        return name, tuple(float(a) for a in args.split(","))
    except ValueError as exc:
        raise DataError(f"bad arguments in {text!r}") from exc


def _theta(x):
    return np.arctan2(x[:, 1], x[:, 0])


def _boundary_mean(mesh: DomainMesh, fun):
    geo = boundary_geometry(mesh)
    p = mesh.nodes[mesh.boundary_edges[:, 0]]
    q = mesh.nodes[mesh.boundary_edges[:, 1]]
    tot = sum(w * (geo.length * fun((1 - t) * p + t * q)) for t, w in zip(_GAUSS_T, _GAUSS_W))
    return float(tot.sum() / geo.length.sum())


def boundary_flux(name: str, mesh: DomainMesh):
    """Scalar boundary function ``x -> (N,)`` for a g catalog id.

    Every entry has its discrete boundary mean removed, so the data are
    compatible on any domain (``sin-3theta`` is not mean-zero on the flower).
    """
    name, args = parse_id(name)
    if name == "zero":
        return None
    if name == "cos-theta":
        def base(x):
            return np.cos(_theta(x))
    elif name == "sin-3theta":
        def base(x):
            return np.sin(3 * _theta(x))
    elif name == "gaussian-bump-on-boundary":
        th0, sig = args

        def base(x):
            d = np.angle(np.exp(1j * (_theta(x) - th0)))
            return np.exp(-0.5 * (d / sig) ** 2)
    else:
        raise DataError(f"unknown boundary data id {name!r}; choose from {G_IDS}")
    mean = _boundary_mean(mesh, base)
    return lambda x: base(x) - mean


def make_data(mesh: DomainMesh, m: int = 1, g: str = "zero", F: str = "zero", f: str = "zero") -> NeumannData:
    """Resolve catalog ids into :class:`NeumannData` on ``mesh``.

    Scalar catalog entries are applied identically to every component.
    """
    gfun = boundary_flux(g, mesh)
    extra = 0.0
    Ffun = None
    Fname, Fargs = parse_id(F)
    if Fname == "constant-balanced":
        c = Fargs[0] if Fargs else 1.0
        Ffun = lambda x: np.full(len(x), c)
        # uniform outflow through the boundary balances the source
        extra = -c * mesh.total_area / mesh.perimeter
    elif Fname == "gaussian":
        x0, y0, sig = Fargs

        def gauss(x):
            return np.exp(-0.5 * ((x[:, 0] - x0) ** 2 + (x[:, 1] - y0) ** 2) / sig ** 2)

        q = mesh.edge_midpoints
        gm = float((mesh.area * gauss(q.reshape(-1, 2)).reshape(-1, 3).mean(1)).sum() / mesh.total_area)
        Ffun = lambda x: gauss(x) - gm
    elif Fname != "zero":
        raise DataError(f"unknown body force id {Fname!r}; choose from {F_IDS}")

    ffun = None
    fname, fargs = parse_id(f)
    if fname == "constant-vector":
        c = np.array(fargs[:2], float)
        ffun = lambda x: np.broadcast_to(c, (len(x), 2))
    elif fname == "rotating-vortex":
        xc = np.array(fargs[:2], float)
        ffun = lambda x: np.stack([-(x[:, 1] - xc[1]), x[:, 0] - xc[0]], axis=1)
    elif fname != "zero":
        raise DataError(f"unknown flux id {fname!r}; choose from {f_IDS}")

    def vec(fun):
        if fun is None:
            return None
        return lambda x: np.repeat(np.asarray(fun(x), float)[:, None], m, axis=1)

    def g_all(x, normal, _g=gfun, _e=extra):
        base = _g(x) if _g is not None else np.zeros(len(x))
        return np.repeat((base + _e)[:, None], m, axis=1)

    f_all = None
    if ffun is not None:
        f_all = lambda x: np.repeat(np.asarray(ffun(x), float)[:, None, :], m, axis=1)

    data = NeumannData(m=m, f=f_all, F=vec(Ffun), g=g_all if gfun is not None or extra else None)
    data.kinds["ids"] = {"g": g, "F": F, "f": f}
    data.g_scalar = gfun
    data.f_scalar = ffun
    return data
