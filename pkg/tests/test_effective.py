import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dynlock.effective import (LockingField, MagnusConvergenceWarning, bch_effective, cycle_rotation_2x2,
                               dip_predictions, factorized_cycle, fit_alpha, interval_frames,
                               locking_field, locking_field_at, locking_models, magnus_dipolar,
                               magnus_offset_expansion, magnus_offset_oracle, phase_insensitive_distance,
                               su2_axis_angle, toggling_frames, effective_reports)
from dynlock.engine import cycle_unitary
from dynlock.sequence import PulseSequence, builtin_dsl4, delay, free_evolution, pulse
from dynlock.spinops import (ConfigurationError, ContractViolation, SpinSystem, collective_operator,
                             commutator, hermitian_expm, normalized_frobenius_norm, rotation_2x2)

TAU = 20e-6
EQ6 = np.array([[0, 0, 1 / 3], [-2 / 3, 0, 1 / 3], [0, 0, -4 / 3], [19 / 9, 0, 19 / 18]])


def quiet(f, *a, **k):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MagnusConvergenceWarning)
        return f(*a, **k)


class TestTogglingFrames:
    def test_no_pulses(self, cluster4):
        seq = free_evolution(TAU, 3)
        fr = toggling_frames(seq, cluster4, 500.0)
        assert len(fr) == 1 and fr[0].length == 3
        np.testing.assert_allclose(fr[0].Iz_toggled["H"], collective_operator(cluster4, "z"), atol=1e-14)
        np.testing.assert_allclose(fr[0].Q, hermitian_expm(2 * np.pi * 500 * collective_operator(cluster4, "z"),
                                                           3 * TAU), atol=1e-13)

    def test_wahuha_axes(self, wahuha):
        # conjugation oracle: axis of A^dag sigma_z A with A the pulse product so far
        sz = np.diag([1.0, -1.0])
        acc = np.eye(2, dtype=complex)
        expected = [acc]
        for p in wahuha.pulses[:-1]:
            acc = p.rotation() @ acc
            expected.append(acc)
        frames = interval_frames(wahuha)
        assert len(frames) == 5
        for f, a in zip(frames, expected):
            m = a.conj().T @ sz @ a
            vec = np.array([m[0, 1].real, -m[0, 1].imag, m[0, 0].real])
            np.testing.assert_allclose(f.axes["H"], vec, atol=1e-12)
        dirs = [tuple(np.round(f.axes["H"]).astype(int)) for f in frames]
        assert dirs == [(0, 0, 1), (0, 1, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)]

    def test_commutation_cluster6(self, cluster6, dsl4):
        for f in toggling_frames(dsl4, cluster6, -1400.0):
            c = commutator(f.Iz_toggled["H"], f.D_toggled)
            assert np.abs(c).max() < 1e-11 * max(1.0, np.abs(f.D_toggled).max())
            np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(f.Iz_toggled["H"])),
                                       np.sort(np.diag(collective_operator(cluster6, "z")).real), atol=1e-12)

    def test_non_cyclic_rejected(self, cluster4):
        with pytest.raises(ContractViolation):
            toggling_frames(PulseSequence([delay(1), pulse("x"), delay(1)], TAU), cluster4)

    def test_finite_pulses_rejected(self, cluster4):
        with pytest.raises(ConfigurationError):
            toggling_frames(builtin_dsl4(TAU, 1e-6), cluster4)

    @pytest.mark.parametrize("nu", [-7000.0, -1400.0, 0.0, 3300.0, 24000.0])
    def test_factorization(self, cluster6, dsl4, nu):
        ud, uq = factorized_cycle(dsl4, cluster6, nu)
        assert np.abs(ud @ uq - cycle_unitary(cluster6, dsl4, nu)).max() < 1e-10


class TestLockingField:
    def test_zero_offset(self, dsl4):
        assert locking_field_at(dsl4, 0.0).amplitude == 0

    def test_period(self, dsl4):
        nus = np.linspace(-20000, 20000, 41)
        a = [f.magnitude for f in locking_field(dsl4, nus)]
        b = [f.magnitude for f in locking_field(dsl4, nus + 1 / TAU)]
        np.testing.assert_allclose(a, b, atol=1e-9 * 2 * np.pi / TAU)

    def test_small_offset_third(self, dsl4):
        for nu in (1.0, -5.0, 20.0):
            f = locking_field_at(dsl4, nu)
            w = 2 * np.pi * nu
            assert f.amplitude == pytest.approx(w / 3, rel=1e-2 * max(1.0, abs(nu) / 10))
            np.testing.assert_allclose(f.vector, [0, 0, w / 3], atol=3 * abs(w) * abs(w) * TAU)

    def test_axis_in_xz_plane(self, dsl4):
        for f in locking_field(dsl4, np.linspace(-25000, 25000, 201)):
            assert abs(f.axis[1]) <= 1e-9

    def test_reproduces_cycle_rotation(self, dsl4):
        for nu in (-2900.0, 700.0, 13000.0):
            f = locking_field_at(dsl4, nu)
            u = cycle_rotation_2x2(dsl4, nu)
            v = rotation_2x2(f.axis, f.amplitude * dsl4.cycle_duration)
            assert phase_insensitive_distance(u, v) < 1e-10

    @given(st.floats(-0.49, 0.49))
    def test_phase_collapse(self, phi):
        amps = []
        for tau in (10e-6, 20e-6, 40e-6):
            f = locking_field_at(builtin_dsl4(tau), phi / tau)
            amps.append(f.magnitude * tau)
        assert max(amps) - min(amps) <= 1e-9

    def test_signed_convention(self, dsl4):
        assert locking_field_at(dsl4, -1400.0).amplitude < 0
        assert locking_field_at(dsl4, 1400.0).amplitude > 0

    def test_reference_values(self, dsl4):
        # frozen from the 2x2 matrix-log computation
        assert locking_field_at(dsl4, -1400.0).amplitude / (2 * np.pi) == pytest.approx(-353.7, abs=0.1)
        assert locking_field_at(dsl4, 1400.0).amplitude / (2 * np.pi) == pytest.approx(523.0, abs=0.1)

    def test_su2_axis_angle(self):
        ang, ax = su2_axis_angle(rotation_2x2((0, 0.6, 0.8), 1.1))
        assert ang == pytest.approx(1.1) and np.allclose(ax, (0, 0.6, 0.8))


class TestMagnusOffset:
    def test_eq6(self, dsl4):
        np.testing.assert_allclose(magnus_offset_expansion(dsl4, 3), EQ6, atol=1e-12)

    def test_oracle_agrees(self, dsl4):
        np.testing.assert_allclose(magnus_offset_oracle(dsl4, 3), EQ6, atol=1e-6, rtol=1e-6)

    def test_delays_only(self):
        c = magnus_offset_expansion(free_evolution(TAU, 4), 3)
        np.testing.assert_allclose(c, [[0, 0, 1], [0, 0, 0], [0, 0, 0], [0, 0, 0]], atol=1e-14)

    def test_wahuha(self, wahuha):
        c = magnus_offset_expansion(wahuha, 1)
        np.testing.assert_allclose(c, [[1 / 3, 1 / 3, 1 / 3], [0, 0, 0]], atol=1e-12)

    def test_order_limit(self, dsl4):
        with pytest.raises(ConfigurationError):
            magnus_offset_expansion(dsl4, 4)


class TestMagnusDipolar:
    def test_zero_coupling(self, dsl4):
        s = SpinSystem(("H",) * 3, np.zeros((3, 3)))
        # per-cycle phase at rounding level
        assert dsl4.cycle_duration * np.abs(magnus_dipolar(dsl4, s, 800.0)).max() < 1e-14

    def test_pi_equals_zero(self, dsl4, cluster6):
        a = quiet(magnus_dipolar, dsl4, cluster6, 0.5 / TAU)
        b = quiet(magnus_dipolar, dsl4, cluster6, 0.0)
        assert np.abs(a - b).max() <= 1e-10

    def test_decoupling_at_zero(self, dsl4, cluster6):
        from dynlock.spinops import dipolar_hamiltonian

        dm = normalized_frobenius_norm(quiet(magnus_dipolar, dsl4, cluster6, 0.0))
        assert dm <= 0.1 * normalized_frobenius_norm(dipolar_hamiltonian(cluster6))

    def test_warns_when_slow(self, cluster6):
        with pytest.warns(MagnusConvergenceWarning):
            magnus_dipolar(builtin_dsl4(100e-6), cluster6, 0.0)

    def test_hermitian(self, dsl4, cluster4):
        dm = quiet(magnus_dipolar, dsl4, cluster4, 2100.0)
        assert np.abs(dm - dm.conj().T).max() < 1e-9


class TestBCH:
    def test_no_coupling(self, dsl4):
        s = SpinSystem(("H",) * 2, np.zeros((2, 2)))
        f = locking_field_at(dsl4, 1900.0)
        ref = sum(c * collective_operator(s, a) for c, a in zip(f.vector, "xyz"))
        np.testing.assert_allclose(bch_effective(dsl4, s, 1900.0), ref, atol=1e-9)

    def test_zero_offset(self, dsl4, cluster4):
        dm = quiet(magnus_dipolar, dsl4, cluster4, 0.0)
        np.testing.assert_allclose(quiet(bch_effective, dsl4, cluster4, 0.0), dm, atol=1e-9)

    def test_error_decreases(self, dsl4, cluster6):
        nu = 900.0
        u = cycle_unitary(cluster6, dsl4, nu)
        t_c = dsl4.cycle_duration
        errs = [phase_insensitive_distance(u, hermitian_expm(quiet(bch_effective, dsl4, cluster6, nu, k), t_c))
                for k in (0, 1, 2)]
        assert errs[0] > errs[1] > errs[2]


class TestModels:
    def test_no_dipolar(self):
        m = locking_models(LockingField(0.0, 3.0, np.array([0, 0, 1.0])), 0.0, 2.0, (0, 0, 1))
        assert m.L_C == 1 and m.S_C == 1

    def test_zero_field(self):
        m = locking_models(LockingField(0.0, 0.0, np.array([0, 0, 1.0])), 5.0, 2.0)
        assert (m.L_C, m.S_C) == (0.0, 0.0) and m.r == np.inf

    def test_perpendicular(self):
        m = locking_models(LockingField(0.0, 3.0, np.array([0, 0, 1.0])), 1.0, 2.0, (1, 0, 0))
        assert m.S_C == 0 and m.L_C > 0

    @given(st.floats(0, 1e4), st.floats(1e-3, 1e4), st.floats(0.1, 10))
    def test_bounds(self, dm, amp, alpha):
        m = locking_models(LockingField(0.0, amp, np.array([0.6, 0, 0.8])), dm, alpha)
        assert 0 <= m.S_C <= m.L_C <= 1 and m.r >= 0

    def test_fit_alpha_recovers(self):
        r = np.linspace(0.1, 3, 30)
        assert fit_alpha(r, 1 / (1 + r**2.7)) == pytest.approx(2.7, rel=1e-4)

    def test_reports(self, dsl4, cluster4):
        recs = [r.record() for r in quiet(effective_reports, dsl4, cluster4, [-1400.0, 0.0, 900.0])]
        assert set(recs[0]) == {"nu_hz", "delta_amp_rad_s", "tilt_rad", "d_magnus_norm", "r", "L_C", "S_C"}
        assert recs[1]["L_C"] == 0 and recs[1]["r"] is None


class TestDips:
    def test_root_at_zero(self, dsl4):
        dips = dip_predictions(dsl4, locking_field(dsl4, np.linspace(-3000, 3000, 61)), 0)
        assert any(d.m == 0 and abs(d.nu) < 1e-6 for d in dips)

    def test_residuals(self, dsl4):
        t_c = dsl4.cycle_duration
        dips = dip_predictions(dsl4, locking_field(dsl4, np.linspace(-25000, 25000, 401)), 1)
        assert dips
        for d in dips:
            f = locking_field_at(dsl4, d.nu)
            assert abs(t_c * f.magnitude - abs(d.m) * np.pi) < 1e-6

    def test_reference_roots(self, dsl4):
        # frozen from bisection on the 2x2 locking field
        dips = dip_predictions(dsl4, locking_field(dsl4, np.linspace(-25000, 25000, 401)), 1)
        got = {(d.m != 0, round(d.nu, 1)) for d in dips}
        for nu in (-4397.3, -12500.0, 0.0, 12500.0):
            assert (False, nu) in got
        for nu in (2709.1, 9111.2, 15888.8, 22290.9):
            assert (True, nu) in got

    def test_pi_roots_inert(self, dsl4, cluster6):
        dips = quiet(dip_predictions, dsl4, locking_field(dsl4, np.linspace(-25000, 25000, 401)), 0,
                     system=cluster6)
        edge = [d for d in dips if abs(abs(d.nu) - 25000) < 1e-6]
        mid = [d for d in dips if abs(abs(d.nu) - 12500) < 1e-6]
        assert edge and all(not d.dipolar_active for d in edge)
        assert mid and all(d.dipolar_active for d in mid)

    def test_empty_curve(self, dsl4):
        assert dip_predictions(dsl4, locking_field(dsl4, np.linspace(100, 200, 5)), 3) == []
