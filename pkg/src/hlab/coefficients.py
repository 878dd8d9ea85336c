"""Periodic coefficient tensors a_{ij}^{alpha beta}(y) on the unit cell.

Values are stored with index layout ``(..., i, j, alpha, beta)``.  The flat
``dm x dm`` view used by :func:`evaluate` orders rows as ``(i, alpha)`` and
columns as ``(j, beta)``, i.e. row ``i * m + alpha``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

D = 2
TWO_PI = 2.0 * np.pi

CATALOG = ("constant", "laminate", "separable", "rotated-laminate")


class CoefficientError(ValueError):
    pass


@dataclass(frozen=True)
class CoefficientTensor:
    """Periodic, elliptic coefficient field.

    ``func`` maps an ``(N, 2)`` array of points already reduced to ``[0, 1)^2``
    to an ``(N, 2, 2, m, m)`` array.  Holder data (``lam``, ``tau``) are
    metadata only.
    """

    name: str
    m: int
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    mu: float
    symmetric: bool = True
    lam: float = 0.5
    tau: float = 0.0
    params: tuple = ()
    d: int = D

    def values(self, y) -> np.ndarray:
        """Vectorised evaluation; returns shape ``(N, d, d, m, m)``."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        return self.func(np.mod(y, 1.0))

    @property
    def is_constant(self) -> bool:
        return self.name == "constant" or self.name.startswith("custom")


def _scalar(m, s, coupling=0.0):
    """Embed a scalar field ``s`` (shape (N,)) as ``s * delta_ij`` per diagonal block."""
    n = s.shape[0]
    out = np.zeros((n, D, D, m, m))
    for i in range(D):
        for a in range(m):
            out[:, i, i, a, a] = s
        if m == 2 and coupling:
            out[:, i, i, 0, 1] = coupling
            out[:, i, i, 1, 0] = coupling
    return out


def _bounds_mu(lo, hi):
    return min(lo, 1.0 / hi)


def make_builtin(name: str, params=None, m: int = 1, coupling: float = 0.0) -> CoefficientTensor:
    """Build a catalog tensor.

    ``params`` is a mapping (or sequence, in catalog order) of
    ``constant: c``; ``laminate`` / ``separable``: ``c0, c1``;
    ``rotated-laminate``: ``c0, c1, k`` with integer shear ``k``.
    For ``m = 2`` the scalar field is repeated on both diagonal blocks and a
    constant coupling ``coupling * delta_ij`` fills the off-diagonal blocks.
    """
    if name not in CATALOG:
        raise CoefficientError(f"unknown coefficient catalog id {name!r}")
    if m not in (1, 2):
        raise CoefficientError(f"system size m must be 1 or 2, got {m}")
    if m == 1 and coupling:
        raise CoefficientError("coupling requires m = 2")
    keys = {
        "constant": ("c",),
        "laminate": ("c0", "c1"),
        "separable": ("c0", "c1"),
        "rotated-laminate": ("c0", "c1", "k"),
    }[name]
    defaults = {"c": 1.0, "c0": 2.0, "c1": 1.0, "k": 1}
    if params is None:
        params = {}
    if not isinstance(params, dict):
        params = dict(zip(keys, params))
    unknown = set(params) - set(keys)
    if unknown:
        raise CoefficientError(f"unknown parameters for {name}: {sorted(unknown)}")
    p = {k: params.get(k, defaults[k]) for k in keys}

    if name == "constant":
        c = float(p["c"])
        if c <= 0:
            raise CoefficientError(f"constant coefficient must be positive, got {c}")
        lo, hi = c, c

        def s_of(y):
            return np.full(y.shape[0], c)
    else:
        c0, c1 = float(p["c0"]), float(p["c1"])
        if c0 <= abs(c1):
            raise CoefficientError(
                f"ellipticity violated: c0={c0} <= |c1|={abs(c1)} (coefficient vanishes or changes sign)"
            )
        lo, hi = c0 - abs(c1), c0 + abs(c1)
        if name == "laminate":
            def s_of(y):
                return c0 + c1 * np.sin(TWO_PI * y[:, 0])
        elif name == "separable":
            def s_of(y):
                return c0 + c1 * np.sin(TWO_PI * y[:, 0]) * np.sin(TWO_PI * y[:, 1])
        else:
            k = p["k"]
            if int(k) != k:
                raise CoefficientError(f"shear must be an integer, got {k}")
            k = int(k)
            p["k"] = k

            def s_of(y):
                return c0 + c1 * np.sin(TWO_PI * (y[:, 0] + k * y[:, 1]))

    if m == 2 and abs(coupling) >= lo:
        raise CoefficientError(f"coupling {coupling} destroys ellipticity (needs |coupling| < {lo})")
    lo_sys, hi_sys = lo - abs(coupling), hi + abs(coupling)

    def func(y):
        return _scalar(m, s_of(y), coupling)

    return CoefficientTensor(
        name=name,
        m=m,
        func=func,
        mu=_bounds_mu(lo_sys, hi_sys),
        symmetric=True,
        params=tuple(sorted(p.items())) + ((("coupling", coupling),) if m == 2 else ()),
    )


def constant_tensor(a, name: str = "custom-constant") -> CoefficientTensor:
    """Wrap a constant array of shape ``(2, 2, m, m)`` (or flat ``dm x dm``)."""
    a = np.asarray(a, dtype=float)
    if a.ndim == 2:
        m = a.shape[0] // D
        a = a.reshape(D, m, D, m).transpose(0, 2, 1, 3)
    m = a.shape[-1]
    flat = a.transpose(0, 2, 1, 3).reshape(D * m, D * m)
    sym = np.allclose(flat, flat.T, rtol=0, atol=0)
    ev = np.linalg.eigvalsh(0.5 * (flat + flat.T))
    if ev[0] <= 0:
        raise CoefficientError("constant tensor is not Legendre elliptic")
    hi = np.linalg.norm(flat, 2)

    def func(y, _a=a.copy()):
        return np.broadcast_to(_a, (y.shape[0],) + _a.shape).copy()

    return CoefficientTensor(name=name, m=m, func=func, mu=_bounds_mu(ev[0], hi), symmetric=bool(sym))


def to_flat(a: np.ndarray) -> np.ndarray:
    """``(..., i, j, alpha, beta)`` -> ``(..., dm, dm)`` with rows (i, alpha)."""
    *lead, d, _, m, _ = a.shape
    return np.swapaxes(a, -3, -2).reshape(*lead, d * m, d * m)


def evaluate(A: CoefficientTensor, y) -> np.ndarray:
    """Return the ``dm x dm`` value array at a single point ``y``."""
    return to_flat(A.values(np.asarray(y, dtype=float).reshape(1, 2)))[0]


@dataclass
class EllipticityReport:
    lower: float
    upper: float
    samples: int
    worst: tuple
    violation: str | None = None

    @property
    def ok(self) -> bool:
        return self.violation is None


def estimate_ellipticity(A: CoefficientTensor, sample_count: int) -> EllipticityReport:
    """Sample the symmetrised quadratic form on a uniform grid over [0,1)^2.

    The grid has ``ceil(sqrt(sample_count))**2`` points.
    """
    if sample_count < 1:
        raise CoefficientError("sample_count must be >= 1")
    k = int(np.ceil(np.sqrt(sample_count)))
    t = np.arange(k) / k
    Y = np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1).reshape(-1, 2)
    flat = to_flat(A.values(Y))
    sym = 0.5 * (flat + np.swapaxes(flat, -1, -2))
    ev = np.linalg.eigvalsh(sym)
    lo_i = int(np.argmin(ev[:, 0]))
    lower, upper = float(ev[lo_i, 0]), float(ev[:, -1].max())
    violation = None
    if lower <= 0:
        violation = f"form not positive at y={tuple(Y[lo_i])}: lambda_min={lower:.3e}"
    return EllipticityReport(lower, upper, Y.shape[0], tuple(Y[lo_i]), violation)


def adjoint(A: CoefficientTensor) -> CoefficientTensor:
    """a*_{ij}^{ab}(y) = a_{ji}^{ba}(y)."""
    if A.symmetric:
        return A
    base = A.func

    def func(y):
        return base(y).transpose(0, 2, 1, 4, 3)

    name = A.name[:-len("*")] if A.name.endswith("*") else A.name + "*"
    inner = getattr(A, "_adjoint_of", None)
    if inner is not None:
        return inner
    out = CoefficientTensor(name=name, m=A.m, func=func, mu=A.mu, symmetric=False,
                            lam=A.lam, tau=A.tau, params=A.params)
    object.__setattr__(out, "_adjoint_of", A)
    return out
