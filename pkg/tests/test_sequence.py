import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dynlock.sequence import (ACQ, PHASES, TRANSFORMS, ParseError, PulseSequence, builtin_dsl4,
                              builtin_wahuha, concat, delay, parse_sequence, pulse, pulse_product,
                              serialize, transform_block, validate_cyclic)
from dynlock.spinops import ConfigurationError

TAU = 20e-6


def su2_product(phases):
    # independent oracle: multiply exp(-i pi/4 n.sigma) with explicit Pauli matrices
    sx = np.array([[0, 1], [1, 0]])
    sy = np.array([[0, -1j], [1j, 0]])
    ang = {"x": 0, "y": 90, "-x": 180, "-y": 270}
    u = np.eye(2, dtype=complex)
    for p in phases:
        a = np.deg2rad(ang[p])
        n = np.cos(a) * sx + np.sin(a) * sy
        u = (np.cos(np.pi / 4) * np.eye(2) - 1j * np.sin(np.pi / 4) * n) @ u
    return u


class TestParse:
    def test_wahuha_unit(self):
        s = parse_sequence("tau 20u; [p90 x; d1; p90 -y; d2; p90 y; d1; p90 -x; d1; acq]")
        assert s.n_pulses == 4
        assert s.cycle_duration == pytest.approx(5 * TAU)
        assert s.n_acquisitions == 1
        assert [p.phase for p in s.pulses] == ["x", "-y", "y", "-x"]

    def test_full_wahuha_text_cycle_six_tau(self):
        s = parse_sequence("tau 20u\n[d1; p90 x; d1; p90 -y; d2; p90 y; d1; p90 -x; d1; acq]")
        assert s.cycle_duration == pytest.approx(6 * TAU)
        assert validate_cyclic(s).is_cyclic

    def test_empty(self):
        s = parse_sequence("")
        assert len(s) == 0 and s.cycle_duration == 0

    def test_unknown_phase(self):
        with pytest.raises(ParseError) as ei:
            parse_sequence("tau 1u\np90 q")
        assert ei.value.token == "q"
        assert (ei.value.line, ei.value.col) == (2, 5)
        assert "'q'" in str(ei.value)

    def test_negative_duration(self):
        with pytest.raises(ParseError, match="negative duration"):
            parse_sequence("tau 1u; d-2")

    def test_undeclared_channel(self):
        with pytest.raises(ParseError, match="undeclared channel"):
            parse_sequence("tau 1u; channel H; p90 x @C")

    def test_unterminated_group(self):
        with pytest.raises(ParseError, match="unterminated"):
            parse_sequence("tau 1u; [d1; p90 x")

    def test_delay_without_tau(self):
        with pytest.raises(ParseError):
            parse_sequence("d1")

    def test_repetition_and_comments(self):
        s = parse_sequence("tau 2u  # base\n[d1; p90 x] x3\n")
        assert s.n_pulses == 3 and s.cycle_duration == pytest.approx(6e-6)

    def test_finite_pulse_and_channels(self):
        s = parse_sequence("tau 6u; channel H; channel C; p90 x 2u; p90 y 1u @H; d1")
        assert s.channels == ("H", "C")
        assert s.events[0].channel == "C" and s.events[0].width == pytest.approx(2e-6)
        assert s.events[1].channel == "H"
        assert s.events[0].nutation_hz == pytest.approx(125e3)


class TestBuiltins:
    def test_dsl4_20us(self, dsl4):
        assert dsl4.cycle_duration == pytest.approx(480e-6, rel=1e-12)
        assert dsl4.n_acquisitions == 4 and dsl4.n_pulses == 16
        assert np.allclose(np.diff(dsl4.acquisition_times()), 6 * TAU)

    def test_dsl4_4us(self):
        assert builtin_dsl4(4e-6).cycle_duration == pytest.approx(96e-6, rel=1e-12)

    def test_dsl4_product_oracle(self, dsl4):
        u = su2_product([p.phase for p in dsl4.pulses])
        tr = np.trace(u)
        assert np.linalg.norm(u / (tr / abs(tr)) - np.eye(2)) < 1e-12
        assert validate_cyclic(dsl4).is_cyclic

    def test_finite_pulses_keep_cycle(self):
        s = builtin_dsl4(20e-6, pulse_width=3.6e-6)
        assert s.cycle_duration == pytest.approx(480e-6, rel=1e-12)

    def test_timing_overlap(self):
        with pytest.raises(ConfigurationError):
            builtin_dsl4(2e-6, pulse_width=1e-6)

    def test_unknown_variant(self):
        with pytest.raises(ConfigurationError):
            builtin_dsl4(20e-6, variant="nope")


class TestCyclic:
    def test_wahuha(self, wahuha):
        c = validate_cyclic(wahuha)
        assert c.is_cyclic and c.residual < 1e-12
        assert np.linalg.norm(su2_product(["x", "-y", "y", "-x"]) - pulse_product(wahuha, "H")) < 1e-12

    def test_single_pulse(self):
        assert not validate_cyclic(PulseSequence([pulse("x")], 0.0)).is_cyclic

    @given(st.lists(st.sampled_from(PHASES), min_size=1, max_size=12), st.integers(0, 11))
    def test_residual_invariant_under_rotation(self, phases, k):
        k %= len(phases)
        a = PulseSequence([pulse(p) for p in phases], 0.0)
        b = PulseSequence([pulse(p) for p in phases[k:] + phases[:k]], 0.0)
        assert validate_cyclic(a).residual == pytest.approx(validate_cyclic(b).residual, abs=1e-12)


class TestTransforms:
    def test_phase_invert(self, wahuha):
        assert [p.phase for p in transform_block(wahuha, "phase_invert").pulses] == ["-x", "y", "-y", "x"]

    def test_shift_four_times(self, dsl4):
        s = dsl4
        for _ in range(4):
            s = transform_block(s, "phase_shift_90")
        assert s == dsl4

    def test_time_reverse_cyclic(self, wahuha):
        r = transform_block(wahuha, "time_reverse")
        assert validate_cyclic(r).residual < 1e-12
        assert r.events[-1].kind == "acquire"

    @pytest.mark.parametrize("op", TRANSFORMS)
    def test_preserve_counts(self, dsl4, op):
        t = transform_block(dsl4, op)
        assert len(t) == len(dsl4)
        assert t.cycle_duration == pytest.approx(dsl4.cycle_duration)

    @pytest.mark.parametrize("op", ["phase_shift_90", "phase_invert"])
    def test_preserve_cyclicity(self, dsl4, op):
        assert validate_cyclic(transform_block(dsl4, op)).is_cyclic

    def test_unknown(self, wahuha):
        with pytest.raises(ConfigurationError):
            transform_block(wahuha, "spin")


class TestConcat:
    def test_four_wahuha(self, wahuha):
        s = concat([wahuha] * 4)
        assert s.cycle_duration == pytest.approx(24 * TAU) and s.n_pulses == 16

    def test_67_blocks(self):
        blk = concat([builtin_wahuha(TAU, acquire=False), builtin_wahuha(TAU, phases=("-x", "y", "-y", "x"))])
        s = concat([blk] * 67)
        assert (s.n_pulses, s.n_acquisitions) == (536, 67)
        assert s.cycle_duration / TAU == pytest.approx(804)

    def test_empty(self):
        assert len(concat([])) == 0

    def test_tau_mismatch(self):
        with pytest.raises(ConfigurationError):
            concat([builtin_wahuha(1e-6), builtin_wahuha(2e-6)])


_event = st.one_of(
    st.builds(lambda p, a, w: pulse(p, a, w), st.sampled_from(PHASES),
              st.sampled_from([90.0, 180.0, 45.0]), st.sampled_from([0.0, 1e-6, 2.5e-6])),
    st.builds(delay, st.sampled_from([0.5, 1.0, 2.0, 0.8333333333333334])),
    st.just(ACQ),
)


@given(st.lists(_event, max_size=20), st.sampled_from([20e-6, 6e-6, 4.4e-6, 1e-3, 3.7e-7]))
def test_serialize_round_trip(events, tau):
    s = PulseSequence(events, tau)
    text = serialize(s)
    back = parse_sequence(text)
    assert back == s
    assert serialize(back) == text


def test_tau_serialises_cleanly():
    assert serialize(builtin_wahuha(20e-6)).startswith("tau 20u\n")
