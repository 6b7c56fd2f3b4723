import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dynlock.search import (LOG_FLOOR, PHASE1_ACTIONS, WAHUHA_ACTIONS, Phase1Env, Phase2Action, Phase2Env,
                            SearchStrategy, actions_to_sequence, enumerate_action_strings, export_winners,
                            fidelity, phase1_search, phase2_extend, protocol_stats, reward_phase1,
                            scaled_offset_target)
from dynlock.sequence import parse_sequence as parse, validate_cyclic
from dynlock.spinops import ConfigurationError, collective_operator, hermitian_expm

TAU = 5e-6
INPUTS = Path(__file__).resolve().parents[1] / "inputs"
NU = 200.0


def random_unitary(rng, d):
    z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def block8():
    # a WaHuHa unit and its phase-inverted copy, one acquisition: 8 pulses over 12 tau
    return parse((INPUTS / "block8.seq").read_text())


class TestFidelity:
    def test_identity(self):
        u = random_unitary(np.random.default_rng(1), 8)
        assert fidelity(u, u) == pytest.approx(1.0)

    @given(st.floats(-np.pi, np.pi))
    def test_global_phase(self, phi):
        u = random_unitary(np.random.default_rng(2), 4)
        assert fidelity(u, np.exp(1j * phi) * u) == pytest.approx(1.0)

    def test_pi_rotation_single_spin(self, one_spin):
        u = hermitian_expm(collective_operator(one_spin, "x"), np.pi)
        assert fidelity(np.eye(2), u) == pytest.approx(0.0, abs=1e-15)

    def test_symmetric_and_invariant(self):
        rng = np.random.default_rng(3)
        u, v, a = (random_unitary(rng, 8) for _ in range(3))
        assert fidelity(u, v) == pytest.approx(fidelity(v, u))
        assert fidelity(a @ u, a @ v) == pytest.approx(fidelity(u, v))
        assert 0 <= fidelity(u, v) <= 1

    def test_literal_degenerate(self):
        rng = np.random.default_rng(4)
        assert fidelity(random_unitary(rng, 4), random_unitary(rng, 4), literal=True) == pytest.approx(1.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigurationError):
            fidelity(np.eye(2), np.eye(4))


class TestReward:
    def test_below_threshold(self):
        assert reward_phase1(0.5) == -1.0

    def test_at_threshold(self):
        assert reward_phase1(0.999, 0.999) == pytest.approx(6.9078, abs=1e-4)

    def test_floor(self):
        assert reward_phase1(1.0) == pytest.approx(-np.log(LOG_FLOOR)) == pytest.approx(34.54, abs=1e-2)

    @given(st.floats(0.999, 1.0), st.floats(0.999, 1.0))
    def test_monotone(self, a, b):
        lo, hi = sorted((a, b))
        assert reward_phase1(lo) <= reward_phase1(hi)


class TestPhase1:
    def test_action_space(self):
        assert len(PHASE1_ACTIONS) == 5
        assert len(enumerate_action_strings(4)) == 625

    def test_wahuha_actions_are_wahuha(self):
        seq = actions_to_sequence(WAHUHA_ACTIONS, TAU)
        assert seq.n_pulses == 4 and validate_cyclic(seq).is_cyclic

    def test_env_step_matches_evaluate(self, cluster4):
        env = Phase1Env(cluster4, TAU, NU, n_max=6, f_opt=1.1)
        env.reset()
        for a in WAHUHA_ACTIONS:
            state, r, done, info = env.step(a)
        assert done and r == -1.0
        assert info["fidelity"] == pytest.approx(env.evaluate(WAHUHA_ACTIONS).fidelity)
        assert np.allclose(state.U_tgt, scaled_offset_target(cluster4, NU, "H")(6 * TAU))
        with pytest.raises(ConfigurationError):
            env.step(None)

    def test_exhaustive_count(self, cluster4):
        res = phase1_search(cluster4, TAU, NU, n_max=4, strategy=SearchStrategy("exhaustive", depth=4))
        assert res.n_enumerated == 625

    def test_single_free_step(self, one_spin):
        w = 2 * np.pi * NU
        free = lambda t: hermitian_expm(w * collective_operator(one_spin, "z"), t)  # noqa: E731
        res = phase1_search(one_spin, TAU, NU, n_max=1, target=free)
        assert res.best.actions == (None,) and res.best.fidelity == pytest.approx(1.0)

    def test_rediscovers_wahuha(self, cluster4):
        res = phase1_search(cluster4, TAU, NU, n_max=6)
        assert res.baseline.fidelity >= 0.999
        assert res.winners and res.winners[0].fidelity >= res.baseline.fidelity
        assert all(validate_cyclic(c.sequence).is_cyclic for c in res.winners)
        assert res.n_enumerated == 5**6

    @pytest.mark.parametrize("kind", ["hill_climb", "beam"])
    def test_deterministic(self, cluster4, kind):
        s = SearchStrategy(kind, iterations=30, restarts=2, width=4, seed=7)
        a = phase1_search(cluster4, TAU, NU, n_max=6, strategy=s)
        b = phase1_search(cluster4, TAU, NU, n_max=6, strategy=s)
        assert [c.text for c in a.winners] == [c.text for c in b.winners]
        assert a.best.text == b.best.text

    def test_bad_config(self, cluster4):
        with pytest.raises(ConfigurationError):
            Phase1Env(cluster4, TAU, NU, n_max=25)
        with pytest.raises(ConfigurationError):
            SearchStrategy("ppo")
        with pytest.raises(ConfigurationError):
            Phase1Env(cluster4, TAU, NU, target=np.eye(3))

    def test_export(self, tmp_path, cluster4):
        s = SearchStrategy("exhaustive", depth=6)
        res = phase1_search(cluster4, TAU, NU, n_max=6, strategy=s, top_k=3)
        paths = export_winners(tmp_path, res.winners, s)
        meta = json.loads((tmp_path / "winners.json").read_text())
        assert len(paths) == len(res.winners) + 1
        assert {"fidelity", "reward", "steps", "seed", "strategy"} <= set(meta["winners"][0])
        assert parse((tmp_path / "winner_00.seq").read_text()) == res.winners[0].sequence


class TestPhase2:
    def test_stats_67(self):
        st_ = protocol_stats([block8()] * 67)
        assert (st_.n_pulses, st_.n_acquisitions, st_.n_blocks) == (536, 67, 67)
        assert st_.duration_tau == pytest.approx(804)

    def test_t_pj_shorter_rejected(self, cluster4):
        with pytest.raises(ConfigurationError):
            Phase2Env(cluster4, [block8()], 48 * TAU, 24 * TAU)

    def test_library_validation(self, cluster4):
        with pytest.raises(ConfigurationError):
            Phase2Env(cluster4, [], 48 * TAU, 480 * TAU)
        with pytest.raises(ConfigurationError):
            Phase2Env(cluster4, [parse("tau 5u\nd1\np90 x\nd1\n")], 48 * TAU, 480 * TAU)

    def test_episode(self, cluster4):
        env = Phase2Env(cluster4, [block8()], 48 * TAU, 480 * TAU, nu_probe=NU)
        env.reset()
        with pytest.raises(ConfigurationError):
            env.step(Phase2Action(2, op="phase_invert"))
        done, n = False, 0
        while not done:
            _, r, done, info = env.step(Phase2Action(0, block=0))
            n += 1
        assert n == 3 and info["duration"] == pytest.approx(48 * TAU)
        assert r == pytest.approx(env.projected_reward(env.state.blocks))

    def test_action_validation(self):
        with pytest.raises(ConfigurationError):
            Phase2Action(0)
        with pytest.raises(ConfigurationError):
            Phase2Action(1, op="rotate")
        with pytest.raises(ConfigurationError):
            Phase2Action(3)

    def test_search_beats_baseline(self, cluster4):
        res = phase2_extend(cluster4, [block8()], 48 * TAU, 480 * TAU, nu_probe=NU)
        assert res.projected_reward >= res.baseline_reward
        assert res.stats.duration >= 48 * TAU * (1 - 1e-9)
        again = phase2_extend(cluster4, [block8()], 48 * TAU, 480 * TAU, nu_probe=NU)
        assert again.protocol == res.protocol
