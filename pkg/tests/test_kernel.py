import numpy as np
import pytest

from hlab.coefficients import make_builtin
from hlab.kernel import (
    GAMMA,
    KernelError,
    admissible_nodes,
    boundary_mean,
    disk_laplace_neumann,
    kernel_profile,
    neumann_function_column,
    normalize,
    random_pairs,
    symmetry_check,
)
from hlab.mesh import build_domain_mesh, p1_evaluate
from hlab.solver import assemble, nodal_load, solve_mean_zero
from hlab.kernel import boundary_weights


def _node_near(mesh, p):
    return int(np.argmin(((mesh.nodes - p) ** 2).sum(1)))


@pytest.fixture(scope="module")
def id_sys(identity, disk256):
    return assemble(identity, None, disk256)


@pytest.fixture(scope="module")
def centered(identity, disk256, id_sys):
    return neumann_function_column(identity, None, disk256, 0, system=id_sys)


def test_load_sums_to_zero_and_boundary_mean(centered):
    assert np.abs(centered.load_total).max() <= 1e-12
    assert np.abs(centered.boundary_mean).max() <= 1e-10
    assert centered.info["residual"] <= 1e-10


def test_boundary_weights_partition(disk64):
    w = boundary_weights(disk64)
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.all(w[np.setdiff1d(np.arange(disk64.n_nodes), disk64.boundary_nodes)] == 0)


def test_normalization_idempotent(centered):
    before = centered.values.copy()
    normalize(centered)
    assert np.abs(centered.values - before).max() <= 1e-15


@pytest.mark.parametrize("ypos", [(0.0, 0.0), (0.3, 0.2)])
def test_disk_oracle_differences(identity, disk256, id_sys, ypos):
    y = _node_near(disk256, ypos)
    col = neumann_function_column(identity, None, disk256, y, system=id_sys)
    yy = disk256.nodes[y]
    pts = np.array([[r * np.cos(a), r * np.sin(a)] for r in (0.4, 0.7) for a in np.linspace(0, 2 * np.pi, 6, endpoint=False)])
    pts = pts[np.linalg.norm(pts - yy, axis=1) >= 0.1]
    num = p1_evaluate(disk256, col.values[:, 0], pts)
    ref = disk_laplace_neumann(pts, yy)
    worst = 0.0
    for i in range(len(pts)):
        for j in range(len(pts)):
            if np.linalg.norm(pts[i] - pts[j]) >= 0.3:
                worst = max(worst, abs((num[i] - num[j]) - (ref[i] - ref[j])))
    assert worst <= 2e-3


def test_disk_oracle_has_constant_flux():
    y = np.array([0.2, -0.35])
    th = np.linspace(0, 2 * np.pi, 50, endpoint=False)
    n = np.stack([np.cos(th), np.sin(th)], 1)
    h = 1e-6
    dn = (disk_laplace_neumann(n * (1 + h), y) - disk_laplace_neumann(n * (1 - h), y)) / (2 * h)
    np.testing.assert_allclose(dn, -1 / (2 * np.pi), atol=1e-7)
    # symmetric in its arguments
    x = np.array([[0.5, 0.1]])
    assert disk_laplace_neumann(x, y)[0] == pytest.approx(disk_laplace_neumann(y[None], x[0])[0], abs=1e-13)


def test_radial_symmetry_for_centered_source(centered, disk256):
    for r in (0.3, 0.6):
        a, b = np.array([[r, 0.0]]), np.array([[r * np.cos(2.0), r * np.sin(2.0)]])
        va = p1_evaluate(disk256, centered.values[:, 0], a)
        vb = p1_evaluate(disk256, centered.values[:, 0], b)
        assert abs(va[0] - vb[0]) <= 2e-3


def test_source_too_close_to_boundary(identity, disk64):
    b = int(disk64.boundary_nodes[0])
    with pytest.raises(KernelError):
        neumann_function_column(identity, None, disk64, b)
    ok = admissible_nodes(disk64)
    assert np.all(disk64.delta[ok] >= 4 * disk64.h)


def test_symmetry_identity(identity, disk256, id_sys):
    pairs = random_pairs(disk256, 10, seed=1)
    assert len(pairs) == 10 and np.all(pairs[:, 0] != pairs[:, 1])
    assert symmetry_check(identity, None, disk256, pairs, system=id_sys) <= 1e-8


def test_symmetry_laminate_eps8(laminate):
    eps = 1 / 8
    mesh = build_domain_mesh("disk", int(np.ceil(2 * np.pi * 16 / eps)))
    pairs = random_pairs(mesh, 10, seed=2)
    assert symmetry_check(laminate, eps, mesh, pairs, precond="amg") <= 1e-8


def test_symmetry_block_system():
    A = make_builtin("laminate", {"c0": 2.0, "c1": 1.0}, m=2, coupling=0.4)
    mesh = build_domain_mesh("disk", 256)
    pairs = random_pairs(mesh, 10, seed=3)
    cols = {}
    dev = symmetry_check(A, 0.25, mesh, pairs, precond="amg", columns=cols)
    assert dev <= 1e-8
    # cross components really are nonzero
    col = next(v for (node, b), v in cols.items() if b == 0)
    assert np.abs(col[:, 1]).max() > 1e-3


def test_symmetry_rejects_nonsymmetric_tensor():
    from hlab.coefficients import constant_tensor
    a = np.zeros((2, 2, 1, 1))
    a[:, :, 0, 0] = [[1.0, 0.4], [-0.2, 1.5]]
    A = constant_tensor(a)
    assert not A.symmetric
    mesh = build_domain_mesh("disk", 96)
    with pytest.raises(KernelError):
        symmetry_check(A, None, mesh, random_pairs(mesh, 4, seed=4))


def test_symmetry_tracks_solver_tolerance(laminate):
    mesh = build_domain_mesh("disk", 128)
    pairs = random_pairs(mesh, 10, seed=5)
    loose = symmetry_check(laminate, 0.25, mesh, pairs, tol=1e-4)
    tight = symmetry_check(laminate, 0.25, mesh, pairs, tol=1e-6)
    assert tight * 10 <= loose


def test_linearity(identity, disk256, id_sys):
    y1, y2 = _node_near(disk256, (0.2, 0.1)), _node_near(disk256, (-0.3, 0.25))
    c1 = neumann_function_column(identity, None, disk256, y1, system=id_sys, tol=1e-12)
    c2 = neumann_function_column(identity, None, disk256, y2, system=id_sys, tol=1e-12)
    L = np.zeros((disk256.n_nodes, 1))
    L[y1, 0] += 1
    L[y2, 0] += 1
    L[:, 0] -= 2 * boundary_weights(disk256)
    u = solve_mean_zero(id_sys, nodal_load(disk256, 1, L), tol=1e-12)
    v = u.values - boundary_mean(disk256, u.values)
    assert np.abs(v - (c1.values + c2.values)).max() <= 1e-8


def test_profile_identity_gradient_band(centered, disk256):
    tab = kernel_profile([centered])
    band = (tab.r >= 0.2) & (tab.r <= 0.5)
    prod = tab.absGradN[band] * tab.r[band]
    assert prod.min() >= 0.1 and prod.max() <= 0.3
    assert tab.r.min() >= 8 * disk256.h
    assert tab.excluded > 0
    assert tab.excluded + len(tab.r) == disk256.n_tri
    np.testing.assert_allclose(tab.r_weighted_grad, tab.absGradN * tab.r ** (1 + GAMMA))
    np.testing.assert_allclose(tab.log_normalized, tab.absN / (1 + np.abs(np.log(tab.r))))
    rows = tab.binned(16)
    assert 0 < len(rows) <= 16
    assert max(r[4] for r in rows) == pytest.approx(tab.sup_r_weighted_grad)


def test_profile_excludes_close_samples(centered, disk256):
    close = np.nonzero(np.linalg.norm(disk256.centroids - centered.y, axis=1) < 8 * disk256.h)[0]
    with pytest.raises(KernelError):
        kernel_profile([centered], sample_points=close)
    far = np.nonzero(np.linalg.norm(disk256.centroids - centered.y, axis=1) > 0.5)[0][:5]
    tab = kernel_profile([centered], sample_points=np.concatenate([close[:3], far]))
    assert tab.excluded == 3 and len(tab.r) == 5
    with pytest.raises(KernelError):
        kernel_profile([])
