import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dynlock.spinops import (BranchAmbiguityWarning, ConfigurationError, ContractViolation, SpinSystem,
                             collective_operator, commutator, dipolar_hamiltonian, hermitian_expm,
                             interaction_hamiltonian, is_hermitian, normalized_frobenius_norm,
                             offset_hamiltonian, single_spin_operator, unitary_logm)
from dynlock.systems import builtin_system

from conftest import random_dipolar


def two_spin(d12=1000.0):
    return SpinSystem(("H", "H"), [[0, d12], [d12, 0]])


def explicit_pair_4x4(d12):
    # 2 pi d (IzIz - (IxIx + IyIy)/2) in the |uu>,|ud>,|du>,|dd> basis
    w = 2 * np.pi * d12
    h = np.zeros((4, 4))
    h[0, 0] = h[3, 3] = w / 4
    h[1, 1] = h[2, 2] = -w / 4
    h[1, 2] = h[2, 1] = -w / 4
    return h


class TestCollectiveOperator:
    def test_single_spin_z(self):
        s = SpinSystem(("H",), [[0]])
        np.testing.assert_allclose(collective_operator(s, "z"), np.diag([0.5, -0.5]))

    def test_two_spin_x_eigenvalues(self):
        ev = np.linalg.eigvalsh(collective_operator(two_spin(), "x"))
        np.testing.assert_allclose(np.sort(ev), [-1, 0, 0, 1], atol=1e-12)

    def test_ten_spin_trace_of_square(self):
        # oracle: sum_i Tr(Iz_i^2) + cross terms vanish -> N 2^N / 4
        s = builtin_system("pentagons10")
        z = np.diag(collective_operator(s, "z")).real
        assert np.sum(z**2) == pytest.approx(10 * 2**10 / 4)

    def test_unknown_species(self):
        with pytest.raises(ConfigurationError):
            collective_operator(two_spin(), "z", "C")

    @pytest.mark.parametrize("axis", "xyz")
    def test_hermitian_traceless(self, axis):
        op = collective_operator(builtin_system("cluster4"), axis)
        assert is_hermitian(op)
        assert abs(np.trace(op)) < 1e-12


class TestDipolar:
    def test_zero_couplings(self):
        s = SpinSystem(("H",) * 3, np.zeros((3, 3)))
        assert not np.any(dipolar_hamiltonian(s))

    def test_pair_matches_explicit_matrix(self):
        np.testing.assert_allclose(dipolar_hamiltonian(two_spin(1000.0)).real, explicit_pair_4x4(1000.0),
                                   atol=1e-9)
        np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(dipolar_hamiltonian(two_spin(1000.0)))),
                                   np.sort(np.linalg.eigvalsh(explicit_pair_4x4(1000.0))), atol=1e-9)

    def test_commutes_with_iz_pentagons(self):
        s = builtin_system("pentagons10")
        d = dipolar_hamiltonian(s)
        c = commutator(d, collective_operator(s, "z"))
        assert np.abs(c).max() <= 1e-12 * np.abs(d).max()

    def test_hermitian_traceless(self, cluster6):
        d = dipolar_hamiltonian(cluster6)
        assert is_hermitian(d)
        assert abs(np.trace(d)) < 1e-6 * np.abs(d).max()

    def test_heteronuclear_j_commutes_with_each_species(self):
        from dynlock.systems import heteronuclear_cluster

        s = heteronuclear_cluster()
        h = interaction_hamiltonian(s)
        for sp in ("H", "C"):
            assert np.abs(commutator(h, collective_operator(s, "z", sp))).max() < 1e-9


class TestSpinSystem:
    def test_asymmetric_rejected(self):
        with pytest.raises(ConfigurationError):
            SpinSystem(("H", "H"), [[0, 1], [2, 0]])

    def test_cap(self):
        with pytest.raises(ConfigurationError):
            SpinSystem(("H",) * 13, np.zeros((13, 13)))

    def test_offset_hamiltonian_units(self):
        s = SpinSystem(("H",), [[0]], offsets={"H": 1000.0})
        np.testing.assert_allclose(np.diag(offset_hamiltonian(s)).real, [np.pi * 1000, -np.pi * 1000])


class TestExpm:
    def test_zero_time(self, cluster4):
        np.testing.assert_array_equal(hermitian_expm(dipolar_hamiltonian(cluster4), 0.0), np.eye(16))

    def test_diagonal_case(self):
        w, t = 2 * np.pi * 700, 3e-4
        u = hermitian_expm(w * single_spin_operator(1, 0, "z"), t)
        np.testing.assert_allclose(u, np.diag([np.exp(-0.5j * w * t), np.exp(0.5j * w * t)]), atol=1e-14)

    def test_inverse_six_spin(self):
        rng = np.random.default_rng(4)
        s = SpinSystem(("H",) * 6, random_dipolar(rng, 6))
        h = dipolar_hamiltonian(s)
        prod = hermitian_expm(h, 1e-4) @ hermitian_expm(h, -1e-4)
        assert np.abs(prod - np.eye(64)).max() < 1e-11

    def test_non_hermitian_rejected(self):
        with pytest.raises(ContractViolation):
            hermitian_expm(np.array([[0, 1], [0, 0]], dtype=complex), 1.0)

    @given(t1=st.floats(-1e-3, 1e-3), t2=st.floats(-1e-3, 1e-3), seed=st.integers(0, 2**16))
    def test_composition(self, t1, t2, seed):
        rng = np.random.default_rng(seed)
        h = dipolar_hamiltonian(SpinSystem(("H",) * 3, random_dipolar(rng, 3)))
        lhs = hermitian_expm(h, t1) @ hermitian_expm(h, t2)
        assert np.abs(lhs - hermitian_expm(h, t1 + t2)).max() < 1e-10


class TestLogm:
    def test_identity(self):
        np.testing.assert_allclose(unitary_logm(np.eye(8)).generator, 0, atol=1e-15)

    def test_rotation_round_trip(self):
        s = SpinSystem(("H",) * 4, np.zeros((4, 4)))
        ix = collective_operator(s, "x")
        g = unitary_logm(hermitian_expm(0.3 * ix, 1.0)).generator
        assert np.abs(g - 0.3 * ix).max() < 1e-10

    def test_branch_cut_flag(self):
        u = np.diag([1.0, -1.0]).astype(complex)
        with pytest.warns(BranchAmbiguityWarning):
            res = unitary_logm(u)
        assert res.branch_ambiguous

    def test_not_unitary(self):
        with pytest.raises(ContractViolation):
            unitary_logm(2 * np.eye(2))

    @given(seed=st.integers(0, 2**16), scale=st.floats(0.05, 0.95))
    def test_principal_round_trip(self, seed, scale):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        g = a + a.conj().T
        g *= scale * np.pi / np.abs(np.linalg.eigvalsh(g)).max()
        with warnings.catch_warnings():
            warnings.simplefilter("error", BranchAmbiguityWarning)
            out = unitary_logm(hermitian_expm(g, 1.0))
        assert np.all(np.abs(out.phases) <= np.pi)
        assert np.abs(out.generator - g).max() < 1e-9


class TestNorm:
    def test_zero(self):
        assert normalized_frobenius_norm(np.zeros((4, 4))) == 0

    def test_identity(self):
        assert normalized_frobenius_norm(np.eye(32)) == pytest.approx(1.0)

    def test_pair_matches_explicit(self):
        h = explicit_pair_4x4(1000.0)
        ref = np.sqrt(np.trace(h @ h) / 4)
        assert normalized_frobenius_norm(dipolar_hamiltonian(two_spin(1000.0))) == pytest.approx(ref, rel=1e-12)
