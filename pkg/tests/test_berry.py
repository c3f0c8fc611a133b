import numpy as np
import pytest

from mpsprep.berry import (
    StackError,
    baseline_residual,
    berry_decompose,
    berry_decompose_mps,
    split_orthonormal,
)
from mpsprep.symmetry import contract_to_statevector, site_matrix

from conftest import canonical_mps, random_unitary


def random_stack(m, k, seed, real=False):
    q = random_unitary(2 * m, seed, real)[:, :k]
    return q[:m], q[m:]


def rank_deficient_stack(m, k, seed, real=False):
    """Column 0 lives only in A and column 1 only in B, then a random mix."""
    rng = np.random.default_rng(seed)
    a = np.zeros((m, k), dtype=float if real else complex)
    b = np.zeros_like(a)
    basis = random_unitary(m, seed, real)
    a[:, 0] = basis[:, 0]
    b[:, 1] = basis[:, 1]
    for j in range(2, k):
        t = rng.uniform(0, np.pi / 2)
        a[:, j] = np.cos(t) * basis[:, j]
        b[:, j] = np.sin(t) * basis[:, j]
    mix = random_unitary(k, seed + 1, real)
    return a @ mix, b @ mix


def check_split(a, b, tol=1e-10):
    sp = split_orthonormal(a, b)
    assert np.linalg.norm(sp.reconstruct() - np.vstack([a, b])) < tol
    assert np.allclose(sp.d1 ** 2 + sp.d2 ** 2, 1.0)
    assert np.all(sp.d1 >= 0) and np.all(sp.d2 >= 0)
    for mat in (sp.U1, sp.U2, sp.V):
        assert np.linalg.norm(mat.conj().T @ mat - np.eye(mat.shape[0])) < tol
    return sp


class TestSplit:
    def test_b_zero(self):
        a = random_unitary(3, 0)
        sp = check_split(a, np.zeros((3, 3)))
        assert np.allclose(sp.d1, 1) and np.allclose(sp.d2, 0)

    def test_a_zero(self):
        b = random_unitary(3, 1)
        sp = check_split(np.zeros((3, 3)), b)
        assert np.allclose(sp.d1, 0) and np.allclose(sp.d2, 1)

    @pytest.mark.parametrize("seed", range(10))
    @pytest.mark.parametrize("shape", [(4, 4), (5, 3), (6, 1)])
    def test_random(self, seed, shape):
        check_split(*random_stack(*shape, seed, real=bool(seed % 2)))

    @pytest.mark.parametrize("seed", range(10))
    def test_rank_deficient(self, seed):
        a, b = rank_deficient_stack(5, 4, seed, real=bool(seed % 2))
        assert np.linalg.matrix_rank(a) < 4 and np.linalg.matrix_rank(b) < 4
        check_split(a, b)

    def test_real_stays_real(self):
        sp = split_orthonormal(*random_stack(4, 3, 2, real=True))
        assert not any(np.iscomplexobj(m) for m in (sp.U1, sp.U2, sp.V))

    def test_not_orthonormal(self):
        with pytest.raises(StackError):
            split_orthonormal(np.ones((2, 2)), np.ones((2, 2)))

    def test_wide_rejected(self):
        with pytest.raises(ValueError):
            split_orthonormal(np.zeros((1, 2)), np.zeros((1, 2)))


class TestSiteStaging:
    @pytest.mark.parametrize("h,k", [(1, 1), (2, 4), (4, 4), (4, 2), (8, 5), (3, 7)])
    @pytest.mark.parametrize("real", [True, False])
    def test_residual(self, h, k, real):
        u = random_unitary(4 * h, 10 * h + k, real)[:, :k]
        circ = berry_decompose(u)
        assert circ.m == max(h, k)
        assert baseline_residual(circ, u) < 1e-9
        full = circ.unitary()
        assert np.linalg.norm(full.conj().T @ full - np.eye(4 * circ.m)) < 1e-9

    def test_real_input_real_stages(self):
        u = random_unitary(16, 3, True)[:, :4]
        circ = berry_decompose(u)
        assert not circ.is_complex
        assert not np.iscomplexobj(circ.unitary())

    def test_cs_pairs_on_circle(self):
        circ = berry_decompose(random_unitary(12, 4)[:, :3])
        assert len(circ.cs) == 3
        for c, s in circ.cs:
            assert np.allclose(c ** 2 + s ** 2, 1)

    def test_seven_stages(self):
        circ = berry_decompose(random_unitary(8, 0)[:, :2])
        kinds = [st[0] for st in circ.stages(include_v=True)]
        assert kinds == ["diag", "rot", "diag", "rot", "diag", "rot", "diag"]

    def test_wrong_site_dim(self):
        with pytest.raises(ValueError):
            berry_decompose(np.eye(6)[:, :1], site_dim=3)

    def test_not_isometric(self):
        with pytest.raises(StackError):
            berry_decompose(np.ones((8, 2)))


def state_from_circuits(circuits, bonds, site_dim=4):
    t = np.ones((1, 1))
    for circ, h in zip(circuits, bonds[1:]):
        u = circ.unitary()[:, : circ.k]
        rows = u.shape[0] // site_dim
        blocks = np.stack([u[d * rows:d * rows + h] for d in range(site_dim)])
        t = np.einsum("pu,dvu->pdv", t, blocks).reshape(-1, h)
    return t[:, 0]


class TestMPS:
    @pytest.mark.parametrize("kind", ["real", "complex"])
    @pytest.mark.parametrize("seed", range(3))
    def test_pushed_v_reproduces_state(self, kind, seed):
        mps = canonical_mps(4, 8, seed, kind)
        circuits = berry_decompose_mps(mps)
        assert not circuits[0].v_pushed
        assert all(c.v_pushed for c in circuits[1:])
        psi = contract_to_statevector(mps)
        out = state_from_circuits(circuits, mps.bond_dims)
        assert abs(abs(np.vdot(psi, out)) - 1) < 1e-9

    def test_last_site_matches_isometry(self):
        mps = canonical_mps(3, 4, 5)
        circuits = berry_decompose_mps(mps)
        u = site_matrix(mps.tensors[-1])
        assert baseline_residual(circuits[-1], u) < 1e-9
