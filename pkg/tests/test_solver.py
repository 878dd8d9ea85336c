import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hlab.coefficients import make_builtin
from hlab.mesh import build_domain_mesh, build_torus_mesh
from hlab.solver import (
    CELL,
    ConvergenceError,
    DiscreteField,
    IncompatibleDataError,
    NeumannData,
    OscillationUnresolvedError,
    OscillationWarning,
    assemble,
    gradient,
    load_vector,
    nodal_load,
    solve_mean_zero,
)
from hlab.mesh import P1Mesh

IDENTITY = np.eye(2).reshape(2, 2, 1, 1)


def _x1_data():
    return NeumannData(m=1, linear=(IDENTITY, np.array([[1.0, 0.0]])))


def _harmonic_data():
    # u = x1^2 - x2^2, grad u = (2 x1, -2 x2)
    def g(x, normal):
        return (2 * x[:, 0] * normal[:, 0] - 2 * x[:, 1] * normal[:, 1])[:, None]
    return NeumannData(m=1, g=g)


def _l2_error(u, exact):
    mesh = u.mesh
    q = mesh.edge_midpoints.reshape(-1, 2)
    uq = 0.5 * (u.values[mesh.tri] + np.roll(u.values[mesh.tri], -1, axis=1)).reshape(-1)
    ex = exact(q)
    ex = ex - (mesh.area[:, None] * ex.reshape(-1, 3)).sum() / 3 / mesh.total_area
    return np.sqrt((mesh.area * ((uq - ex) ** 2).reshape(-1, 3).mean(axis=1)).sum())


def test_identity_stiffness_row_sums_and_laplacian(identity, disk64):
    sys_ = assemble(identity, None, disk64)
    K = sys_.K
    assert np.abs(K @ np.ones(K.shape[0])).max() <= 1e-12
    # standard P1 Laplacian: K_ab = sum_T area grad phi_a . grad phi_b
    M = disk64
    ref = np.zeros((M.n_nodes, M.n_nodes))
    loc = np.einsum("t,tai,tbi->tab", M.area, M.grads, M.grads)
    for k in range(3):
        for l in range(3):
            np.add.at(ref, (M.tri[:, k], M.tri[:, l]), loc[:, k, l])
    assert np.abs(K.toarray() - ref).max() <= 1e-12


def test_laminate_assembly_symmetric():
    A = make_builtin("laminate", {"c0": 2.0, "c1": 1.0})
    eps = 1 / 8
    mesh = build_domain_mesh("disk", int(np.ceil(2 * np.pi * 16 / eps)))
    K = assemble(A, eps, mesh).K
    kmax = np.abs(K).max()
    assert np.abs(K - K.T).max() <= 1e-12 * kmax


@pytest.mark.parametrize("name,m,coupling", [("laminate", 1, 0.0), ("separable", 2, 0.4)])
def test_system_invariants(name, m, coupling, rng):
    A = make_builtin(name, {"c0": 2.0, "c1": 1.0}, m=m, coupling=coupling)
    mesh = build_domain_mesh("flower", 100)
    sys_ = assemble(A, 0.5, mesh)
    K = sys_.K
    assert np.abs(K - K.T).max() <= 1e-12 * np.abs(K).max()
    X = rng.standard_normal((K.shape[0], 100))
    assert np.all(np.einsum("ij,ij->j", X, K @ X) >= 0)
    for c in sys_.nullspace:
        assert np.abs(K @ c).max() <= 1e-12


def test_torus_assembly_nullspace(laminate):
    sys_ = assemble(laminate, CELL, build_torus_mesh(16))
    assert np.abs(sys_.K @ np.ones(256)).max() <= 1e-12


def test_energy_of_linear_field(disk64):
    for c in (1.0, 2.5):
        A = make_builtin("constant", {"c": c})
        K = assemble(A, None, disk64).K
        u = disk64.nodes[:, 0]
        assert u @ (K @ u) == pytest.approx(c * disk64.total_area, rel=1e-12)


def test_resolution_rules(laminate, disk64):
    # disk64: h = 2 pi / 64 ~ 0.098
    with pytest.raises(OscillationUnresolvedError):
        assemble(laminate, 0.1, disk64)
    with pytest.warns(OscillationWarning):
        assemble(laminate, 0.3, disk64)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assemble(laminate, 0.5, disk64)


def test_nonfinite_coefficient_rejected(disk64):
    from dataclasses import replace

    from hlab.solver import SolverError
    A = replace(make_builtin("constant", {"c": 1.0}), func=lambda y: np.full((len(y), 2, 2, 1, 1), np.nan))
    with pytest.raises(SolverError):
        assemble(A, None, disk64)


def test_load_vector_examples(disk64):
    z = load_vector(disk64, NeumannData(m=2))
    assert np.all(z.vector == 0)
    one = load_vector(disk64, NeumannData(m=2, F=lambda x: np.ones((len(x), 2))))
    np.testing.assert_allclose(one.residual, disk64.total_area, rtol=1e-13)
    lin = load_vector(disk64, _x1_data())
    assert np.abs(lin.residual).max() <= 1e-12


def test_load_vector_divergence_form_sums_to_zero(disk64):
    f = lambda x: np.stack([np.sin(x[:, 0]), x[:, 1] ** 2], axis=1)[:, None, :]
    L = load_vector(disk64, NeumannData(m=1, f=f))
    assert abs(L.residual[0]) <= 1e-13


def test_linear_solution_reproduced(identity, disk64):
    u = solve_mean_zero(assemble(identity, None, disk64), load_vector(disk64, _x1_data()))
    x1 = disk64.nodes[:, 0]
    ref = x1 - disk64.lumped_mass @ x1 / disk64.lumped_mass.sum()
    assert np.abs(u.values[:, 0] - ref).max() <= 1e-9
    assert abs(u.mean()[0]) <= 1e-14
    assert u.info["residual"] <= 1e-10


def test_manufactured_harmonic_rate(identity):
    errs, energies = [], []
    for n in (32, 64, 128):
        mesh = build_domain_mesh("disk", n)
        sys_ = assemble(identity, None, mesh)
        u = solve_mean_zero(sys_, load_vector(mesh, _harmonic_data()))
        errs.append(_l2_error(u, lambda x: x[:, 0] ** 2 - x[:, 1] ** 2))
        # energy error ||grad(u - u_ex)||^2 via per-triangle midpoint rule
        q = mesh.edge_midpoints
        gex = np.stack([2 * q[..., 0], -2 * q[..., 1]], axis=-1)
        energies.append((mesh.area * ((u.grad[:, 0, None, :] - gex) ** 2).sum(-1).mean(-1)).sum())
    for a, b in zip(errs, errs[1:]):
        assert 3.5 <= a / b <= 4.5
    assert energies[0] > energies[1] > energies[2]


def test_incompatible_data_rejected(identity, disk64):
    sys_ = assemble(identity, None, disk64)
    data = NeumannData(m=1, g=lambda x, n: np.ones((len(x), 1)))
    with pytest.raises(IncompatibleDataError) as exc:
        solve_mean_zero(sys_, load_vector(disk64, data))
    assert float(exc.value.residual[0]) == pytest.approx(disk64.perimeter, rel=1e-12)
    u = solve_mean_zero(sys_, load_vector(disk64, data), project=True)
    assert abs(u.mean()[0]) <= 1e-14


def test_zero_load_gives_zero_field(identity, disk64):
    u = solve_mean_zero(assemble(identity, None, disk64), np.zeros(disk64.n_nodes))
    assert np.all(u.values == 0)


def test_nonconvergence_error(laminate):
    mesh = build_domain_mesh("disk", 128)
    sys_ = assemble(laminate, 0.25, mesh)
    with pytest.raises(ConvergenceError):
        solve_mean_zero(sys_, load_vector(mesh, _harmonic_data()), maxiter_factor=0.01, precond="none")


def test_shift_by_constant_invariance(laminate, rng):
    mesh = build_domain_mesh("flower", 96)
    sys_ = assemble(laminate, 0.5, mesh)
    L = load_vector(mesh, _harmonic_data())
    u1 = solve_mean_zero(sys_, L)
    shifted = nodal_load(mesh, 1, L.vector + sys_.K @ np.full(mesh.n_nodes, 7.0))
    u2 = solve_mean_zero(sys_, shifted)
    assert np.abs(u1.values - u2.values).max() <= 1e-9


@pytest.mark.parametrize("precond", ["jacobi", "amg", "none"])
def test_preconditioners_agree_and_energy_decreases(laminate, precond):
    mesh = build_domain_mesh("disk", 128)
    sys_ = assemble(laminate, 0.25, mesh)
    L = load_vector(mesh, _harmonic_data())
    u = solve_mean_zero(sys_, L, precond=precond)
    ref = solve_mean_zero(sys_, L, tol=1e-12)
    assert np.abs(u.values - ref.values).max() <= 1e-8
    e = u.info["energy"]
    assert e[-1] <= e[0]


def test_system_solve_m2(rng):
    A = make_builtin("laminate", {"c0": 2.0, "c1": 1.0}, m=2, coupling=0.3)
    mesh = build_domain_mesh("disk", 128)
    sys_ = assemble(A, 0.25, mesh)
    L = rng.standard_normal((mesh.n_nodes, 2))
    L -= L.mean(axis=0)
    u = solve_mean_zero(sys_, L, precond="amg")
    assert np.abs(u.mean()).max() <= 1e-13
    assert u.info["residual"] <= 1e-10


def test_gradient_examples(disk64):
    u = DiscreteField(disk64, disk64.nodes[:, 0])
    g = gradient(u)
    np.testing.assert_allclose(g[:, 0, 0], 1.0, atol=1e-13)
    np.testing.assert_allclose(g[:, 0, 1], 0.0, atol=1e-13)
    assert np.abs(gradient(DiscreteField(disk64, np.full(disk64.n_nodes, 3.0)))).max() <= 1e-12
    tri = np.array([[0, 1, 2]])
    xy = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    ref = P1Mesh(nodes=xy, tri=tri, tri_xy=xy[tri])
    vals = xy[:, 0] * xy[:, 1]
    assert np.all(gradient(DiscreteField(ref, vals)) == 0)


def test_gradient_cache_consistent(disk64, rng):
    u = DiscreteField(disk64, rng.standard_normal(disk64.n_nodes))
    assert u.grad.tobytes() == gradient(u).tobytes()


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), c=st.floats(-5, 5))
def test_gradient_of_linear_fields(a, b, c):
    mesh = build_domain_mesh("flower", 32)
    u = DiscreteField(mesh, a * mesh.nodes[:, 0] + b * mesh.nodes[:, 1] + c)
    scale = max(1.0, abs(a), abs(b), abs(c))
    assert np.abs(u.grad[:, 0] - [a, b]).max() <= 1e-13 * scale * 10


def test_single_threaded_solve_is_deterministic(laminate):
    mesh = build_domain_mesh("disk", 96)
    L = load_vector(mesh, _harmonic_data())
    a = solve_mean_zero(assemble(laminate, 0.5, mesh), L).values
    b = solve_mean_zero(assemble(laminate, 0.5, mesh), L).values
    assert a.tobytes() == b.tobytes()
