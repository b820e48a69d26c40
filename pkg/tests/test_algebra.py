import numpy as np
import pytest

from spinphonon.algebra import (
    AlgebraError,
    HilbertLayout,
    annihilation_op,
    check_density_matrix,
    check_state_vector,
    dag,
    defect_projector_op,
    defect_transition_op,
    is_hermitian,
    kron_embed,
    level_projector,
    level_transition,
    number_op,
    partial_trace,
    pure_density,
    LEVELS,
)


class TestHilbertLayout:
    def test_total_dim(self):
        assert HilbertLayout(6, 1).total_dim == 24
        assert HilbertLayout(6, 3).total_dim == 384
        lay = HilbertLayout(5, 2)
        assert lay.total_dim == int(np.prod(lay.site_dims))

    @pytest.mark.parametrize("phonon,defects", [(2, 1), (6, 1), (4, 2), (3, 3)])
    def test_encode_decode_roundtrip(self, phonon, defects):
        lay = HilbertLayout(phonon, defects)
        seen = set()
        for idx in range(lay.total_dim):
            n, levels = lay.decode(idx)
            assert lay.encode(n, levels) == idx
            seen.add((n, levels))
        assert len(seen) == lay.total_dim

    def test_labels_cover_space_in_order(self):
        lay = HilbertLayout(3, 2)
        labels = list(lay.basis_labels())
        assert len(labels) == lay.total_dim
        for idx, (n, combo) in enumerate(labels):
            assert lay.encode(n, combo) == idx

    def test_invalid(self):
        with pytest.raises(AlgebraError):
            HilbertLayout(1, 1)
        with pytest.raises(AlgebraError):
            HilbertLayout(6, 0)
        lay = HilbertLayout(6, 1)
        with pytest.raises(AlgebraError):
            lay.encode(6, ["g1"])
        with pytest.raises(AlgebraError):
            lay.encode(0, ["nope"])
        with pytest.raises(AlgebraError):
            lay.decode(lay.total_dim)


class TestAnnihilation:
    def test_lowering_action(self):
        b = annihilation_op(6)
        lay = HilbertLayout(6, 1)
        one = np.zeros(6, dtype=complex)
        one[1] = 1.0
        assert np.allclose(b @ one, np.eye(6)[0])

    def test_number_operator_diag(self):
        b = annihilation_op(6)
        assert np.allclose(np.diag(dag(b) @ b), np.arange(6))

    def test_truncated_commutator(self):
        # [b, b+] = 1 except the top level, where truncation flips it to -(P-1)
        for p in (2, 4, 6, 9):
            b = annihilation_op(p)
            comm = np.diag(b @ dag(b) - dag(b) @ b).real
            expected = np.ones(p)
            expected[-1] = -(p - 1)
            assert np.allclose(comm, expected)

    def test_rejects_small(self):
        with pytest.raises(AlgebraError):
            annihilation_op(1)


class TestDefectOps:
    def setup_method(self):
        self.lay = HilbertLayout(4, 2)

    def test_adjoint_pairs(self):
        up = defect_transition_op(self.lay, 0, "g1", "e")
        down = defect_transition_op(self.lay, 0, "e", "g1")
        assert np.allclose(dag(up), down)

    def test_projector_completeness(self):
        total = sum(defect_projector_op(self.lay, 1, lv) for lv in LEVELS)
        assert np.allclose(total, np.eye(self.lay.total_dim))

    def test_different_sites_commute(self):
        a = defect_transition_op(self.lay, 0, "g1", "e")
        b = defect_transition_op(self.lay, 1, "g2", "e")
        assert np.max(np.abs(a @ b - b @ a)) < 1e-12

    def test_out_of_range(self):
        with pytest.raises(AlgebraError):
            defect_transition_op(self.lay, 2, "g1", "e")
        with pytest.raises(AlgebraError):
            defect_transition_op(self.lay, 0, "g5", "e")


class TestKronEmbed:
    def test_empty_is_identity(self):
        lay = HilbertLayout(3, 2)
        assert np.allclose(kron_embed(lay, []), np.eye(lay.total_dim))

    def test_single_site_dimensions(self):
        lay = HilbertLayout(6, 1)
        emb = kron_embed(lay, [(0, annihilation_op(6))])
        assert emb.shape == (24, 24)

    def test_homomorphism_same_site(self):
        lay = HilbertLayout(5, 1)
        rng = np.random.default_rng(0)
        a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        b = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        lhs = kron_embed(lay, [(1, a)]) @ kron_embed(lay, [(1, b)])
        rhs = kron_embed(lay, [(1, a @ b)])
        assert np.max(np.abs(lhs - rhs)) < 1e-12

    def test_duplicate_and_mismatch(self):
        lay = HilbertLayout(3, 1)
        with pytest.raises(AlgebraError):
            kron_embed(lay, [(0, np.eye(3)), (0, np.eye(3))])
        with pytest.raises(AlgebraError):
            kron_embed(lay, [(1, np.eye(3))])
        with pytest.raises(AlgebraError):
            kron_embed(lay, [(2, np.eye(4))])


class TestPartialTrace:
    def test_keep_phonon_of_product(self):
        lay = HilbertLayout(3, 1)
        rho = pure_density(lay.basis_state(1, "g1"))
        red = partial_trace(rho, lay, keep=[0])
        expected = np.zeros((3, 3))
        expected[1, 1] = 1.0
        assert np.allclose(red, expected)

    def test_trace_preserved(self):
        lay = HilbertLayout(3, 2)
        rng = np.random.default_rng(1)
        m = rng.normal(size=(lay.total_dim, lay.total_dim)) \
            + 1j * rng.normal(size=(lay.total_dim, lay.total_dim))
        rho = m @ m.conj().T
        rho /= np.trace(rho)
        for keep in ([0], [1], [0, 2], [1, 2]):
            red = partial_trace(rho, lay, keep=keep)
            assert abs(np.trace(red) - 1.0) < 1e-12

    def test_entangled_pair_reduces_to_mixed(self):
        lay = HilbertLayout(4, 1)
        psi = (lay.basis_state(0, "g1") + lay.basis_state(1, "g2")
               + lay.basis_state(2, "g3") + lay.basis_state(3, "e")) / 2.0
        red = partial_trace(pure_density(psi), lay, keep=[1])
        assert np.allclose(red, np.eye(4) / 4.0, atol=1e-12)

    def test_invalid_sites(self):
        lay = HilbertLayout(3, 1)
        rho = np.eye(lay.total_dim) / lay.total_dim
        with pytest.raises(AlgebraError):
            partial_trace(rho, lay, keep=[])
        with pytest.raises(AlgebraError):
            partial_trace(rho, lay, keep=[5])


class TestValidators:
    def test_state_vector(self):
        check_state_vector(np.array([1.0, 0.0], dtype=complex))
        with pytest.raises(AlgebraError):
            check_state_vector(np.array([1.0, 0.5], dtype=complex))

    def test_density_matrix(self):
        check_density_matrix(np.diag([0.25, 0.75]).astype(complex))
        with pytest.raises(AlgebraError):
            check_density_matrix(np.diag([0.5, 0.9]).astype(complex))
        bad = np.array([[0.5, 0.2], [0.3, 0.5]], dtype=complex)
        with pytest.raises(AlgebraError):
            check_density_matrix(bad)
        neg = np.diag([1.2, -0.2]).astype(complex)
        with pytest.raises(AlgebraError):
            check_density_matrix(neg)

    def test_hermiticity_predicate(self):
        assert is_hermitian(level_projector("e"))
        assert not is_hermitian(level_transition("g1", "e"))
