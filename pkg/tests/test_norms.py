import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hlab.coefficients import make_builtin
from hlab.data import make_data
from hlab.mesh import build_domain_mesh
from hlab.neumann import SolveSpec, solve_eps
from hlab.solver import DiscreteField
from hlab.verify import (
    BoundaryFunction,
    NormError,
    NormRequest,
    UndefinedRatioError,
    fit_rate,
    holder_seminorm,
    nontangential_max,
    norm,
    rellich_ratio,
    trace,
)
from hlab.verify.norms import cone_members, grad_lp, lp_boundary, lp_domain


@pytest.fixture(scope="module")
def flower96():
    return build_domain_mesh("flower", 96)


def _smooth(mesh):
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    return DiscreteField(mesh, np.sin(2 * x) * np.cos(3 * y) + x * y)


def test_examples_unit_field_and_linear(disk64, disk256):
    one = DiscreteField(disk64, np.ones(disk64.n_nodes))
    assert abs(norm(one, NormRequest("Lp-domain", p=2)) - np.sqrt(np.pi)) <= 1e-2
    assert norm(one, NormRequest("Lp-domain", p=2)) == pytest.approx(np.sqrt(disk64.total_area), rel=1e-14)
    x1 = DiscreteField(disk64, disk64.nodes[:, 0])
    assert abs(norm(x1, NormRequest("sup-gradient")) - 1.0) <= 1e-13
    x1b = DiscreteField(disk256, disk256.nodes[:, 0])
    assert abs(norm(x1b, NormRequest("Lp-boundary", p=2)) - np.sqrt(np.pi)) <= 1e-2
    assert norm(trace(x1b), NormRequest("Lp-boundary", p=2)) == norm(x1b, NormRequest("Lp-boundary", p=2))


def test_lp_domain_exact_for_quadratics(disk64):
    u = DiscreteField(disk64, disk64.nodes[:, 0] + 2 * disk64.nodes[:, 1])
    # |u|^2 is quadratic on each triangle: edge-midpoint rule is exact
    xy = disk64.tri_xy
    ref = 0.0
    for t in range(disk64.n_tri):
        v = xy[t, :, 0] + 2 * xy[t, :, 1]
        ref += disk64.area[t] * ((v ** 2).sum() + v.sum() ** 2) / 12
    assert lp_domain(u, 2.0) == pytest.approx(np.sqrt(ref), rel=1e-13)


def test_w1p_composition(flower96):
    u = _smooth(flower96)
    p = 3.0
    full = norm(u, NormRequest("W1p-domain", p=p))
    semi = norm(u, NormRequest("W1p-domain", p=p, seminorm=True))
    assert semi == pytest.approx(grad_lp(u, p))
    assert full == pytest.approx((lp_domain(u, p) ** p + semi ** p) ** (1 / p))


def test_boundary_function_edge_values(disk64):
    bf = BoundaryFunction(disk64, np.full(len(disk64.boundary_edges), 2.0), "edge")
    assert lp_boundary(bf, 2.0) == pytest.approx(2 * np.sqrt(disk64.perimeter), rel=1e-14)
    with pytest.raises(NormError):
        BoundaryFunction(disk64, np.ones(3))
    with pytest.raises(NormError):
        BoundaryFunction(disk64, np.ones(64), where="corner")


@pytest.mark.parametrize("c", [-2.0, 0.5])
@pytest.mark.parametrize("kind", ["Lp-domain", "W1p-domain", "sup-gradient", "Lp-boundary", "ntmf-Lp", "holder"])
def test_norm_homogeneity(flower96, kind, c):
    u = _smooth(flower96)
    req = NormRequest(kind, p=3.0)
    a, b = norm(u, req), norm(u * c, req)
    assert b == pytest.approx(abs(c) * a, rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(c=st.floats(-100, 100).filter(lambda v: abs(v) > 1e-3), p=st.floats(1.1, 6.0))
def test_norm_homogeneity_property(c, p):
    mesh = build_domain_mesh("disk", 32)
    u = _smooth(mesh)
    for kind in ("Lp-domain", "W1p-domain", "Lp-boundary"):
        req = NormRequest(kind, p=p)
        assert norm(u * c, req) == pytest.approx(abs(c) * norm(u, req), rel=1e-12)


def test_request_validation():
    with pytest.raises(NormError):
        NormRequest("L7")
    with pytest.raises(NormError):
        NormRequest("Lp-domain", p=1.0)
    with pytest.raises(NormError):
        NormRequest("Lp-boundary", p=np.inf)
    with pytest.raises(NormError):
        NormRequest("holder", gamma=0.0)
    with pytest.raises(NormError):
        NormRequest("ntmf-Lp", C0=1.0)


def test_kind_input_mismatch(disk64):
    bf = trace(DiscreteField(disk64, disk64.nodes[:, 0]))
    with pytest.raises(NormError):
        norm(bf, NormRequest("sup-gradient"))
    with pytest.raises(NormError):
        norm(np.ones(3), NormRequest("Lp-domain"))
    with pytest.raises(NormError):
        norm(DiscreteField(disk64, disk64.nodes[:, 0]), NormRequest("rellich-ratio"))


def test_holder_examples(disk64):
    u = DiscreteField(disk64, disk64.nodes[:, 0])
    v = holder_seminorm(u, 1.0)
    assert 0.95 <= v <= 1.0 + 1e-12
    assert holder_seminorm(DiscreteField(disk64, np.full(disk64.n_nodes, 3.0)), 0.5) == 0.0
    with pytest.raises(NormError):
        holder_seminorm(u, 0.5, sample_count=4)
    with pytest.raises(NormError):
        holder_seminorm(u, 1.5)


def test_holder_monotone_in_samples(flower96):
    u = _smooth(flower96)
    vals = [holder_seminorm(u, 0.5, s, seed=7) for s in (20, 100, 400, 2000)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_ntmf_examples(disk64):
    x1 = nontangential_max(DiscreteField(disk64, disk64.nodes[:, 0]), disk64)
    np.testing.assert_allclose(x1.values[:, 0], 1.0, atol=1e-12)
    c = nontangential_max(DiscreteField(disk64, np.full(disk64.n_nodes, 2.0)), disk64)
    assert np.abs(c.values).max() <= 1e-12
    with pytest.raises(NormError):
        nontangential_max(DiscreteField(disk64, disk64.nodes[:, 0]), disk64, C0=1.0)


@pytest.mark.parametrize("shape", ["disk", "flower"])
@pytest.mark.parametrize("C0", [1.5, 2.0, 4.0])
def test_ntmf_matches_brute_force(shape, C0):
    mesh = build_domain_mesh(shape, 96)
    u = _smooth(mesh)
    star = nontangential_max(u, mesh, C0)
    g = np.linalg.norm(u.grad.reshape(mesh.n_tri, -1), axis=1)
    for k in range(len(mesh.boundary_nodes)):
        mem = cone_members(mesh, k, C0)
        if len(mem):
            assert star.values[k, 0] == g[mem].max()


def test_ntmf_dominates_trace_gradient(flower96):
    u = _smooth(flower96)
    star = nontangential_max(u, flower96)
    g = np.linalg.norm(u.grad.reshape(flower96.n_tri, -1), axis=1)
    # every boundary triangle touching node k has its centroid in the cone of k (C0 = 2)
    for k, node in enumerate(flower96.boundary_nodes):
        touching = np.nonzero((flower96.tri == node).any(axis=1))[0]
        inside = [t for t in touching if t in set(cone_members(flower96, k))]
        if inside:
            assert star.values[k, 0] >= g[inside].max()


def test_ntmf_fallback_counted():
    mesh = build_domain_mesh("disk", 64)
    u = _smooth(mesh)
    star = nontangential_max(u, mesh, C0=1.0001)
    assert star.fallback >= 0
    assert np.all(np.isfinite(star.values))


def test_rellich_linear_on_disk(identity, disk256):
    u = DiscreteField(disk256, disk256.nodes[:, 0])
    assert abs(rellich_ratio(u, identity, None) - 2.0) <= 5e-2
    assert norm(u, NormRequest("rellich-ratio", A=identity)) == pytest.approx(2.0, abs=5e-2)


def test_rellich_errors(identity, disk64):
    with pytest.raises(UndefinedRatioError):
        rellich_ratio(DiscreteField(disk64, np.full(disk64.n_nodes, 1.0)), identity, None)
    bumpy = DiscreteField(disk64, disk64.nodes[:, 0] ** 3)
    with pytest.raises(NormError):
        rellich_ratio(bumpy, identity, None)
    other = build_domain_mesh("disk", 32)
    with pytest.raises(NormError):
        rellich_ratio(DiscreteField(other, other.nodes[:, 0]), identity, None, mesh=disk64)


def test_rellich_accepts_discrete_solution(laminate, disk128):
    u = solve_eps(SolveSpec(laminate, 0.25, disk128, make_data(disk128, 1, g="cos-theta"), tol=1e-12))
    r = rellich_ratio(u, laminate, 0.25)
    # |conormal| <= max|a| |grad u| = 3 |grad u| pointwise
    assert 1 / 9 <= r < 20.0


def test_fit_rate_examples():
    s, r = fit_rate([(1 / 8, 0.1), (1 / 16, 0.05), (1 / 32, 0.025)])
    assert s == pytest.approx(1.0, abs=1e-12) and r <= 1e-12
    s, r = fit_rate([(1 / 8, 0.04), (1 / 16, 0.01), (1 / 32, 0.0025)])
    assert s == pytest.approx(2.0, abs=1e-12)
    s, r = fit_rate([(1 / 8, 3.0), (1 / 16, 3.0), (1 / 32, 3.0)])
    assert abs(s) <= 1e-12
    with pytest.raises(NormError):
        fit_rate([(1 / 8, 0.1), (1 / 16, 0.0), (1 / 32, 0.1)])
    with pytest.raises(NormError):
        fit_rate([(1 / 8, 0.1), (1 / 16, 0.05)])


@settings(max_examples=50, deadline=None)
@given(rate=st.floats(-3, 3), c=st.floats(1e-3, 1e3), k=st.integers(3, 6))
def test_fit_rate_exact_on_power_laws(rate, c, k):
    eps = 2.0 ** -np.arange(2, 2 + k)
    s, r = fit_rate(list(zip(eps, c * eps ** rate)))
    assert s == pytest.approx(rate, abs=1e-10)
    assert r <= 1e-12


def test_m2_pointwise_norms():
    A = make_builtin("laminate", {"c0": 2.0, "c1": 1.0}, m=2)
    mesh = build_domain_mesh("disk", 64)
    vals = np.stack([mesh.nodes[:, 0], mesh.nodes[:, 1]], axis=1)
    u = DiscreteField(mesh, vals)
    # |grad u|_F = sqrt(2) everywhere
    assert norm(u, NormRequest("sup-gradient")) == pytest.approx(np.sqrt(2), abs=1e-13)
    assert A.m == 2
