"""Pulse-sequence model and a small text DSL.

A sequence is a flat, time-ordered list of events. Delays are stored in
units of the base interpulse interval ``tau``; pulses are either ideal
(zero width, instantaneous rotation) or finite (width in seconds).

DSL example::

    tau 20u
    channel H
    [d1; p90 x; d1; p90 -y; d2; p90 y; d1; p90 -x; d1; acq] x4

Statements are separated by newlines or ``;``. ``#`` starts a comment.
"""

from __future__ import annotations

import re
from decimal import Decimal
from dataclasses import dataclass, replace
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .spinops import ConfigurationError, rotation_2x2

PHASES = ("x", "y", "-x", "-y")
PHASE_ANGLE = {"x": 0.0, "y": 90.0, "-x": 180.0, "-y": 270.0}
_SHIFT_90 = {"x": "y", "y": "-x", "-x": "-y", "-y": "x"}
_INVERT = {"x": "-x", "-x": "x", "y": "-y", "-y": "y"}
DEFAULT_CHANNEL = "H"


class ParseError(ConfigurationError):
    def __init__(self, message: str, line: int, col: int, token: str = ""):
        super().__init__(f"line {line}, column {col}: {message}")
        self.line = line
        self.col = col
        self.token = token


@dataclass(frozen=True)
class PulseEvent:
    """One event of a sequence.

    ``length`` is the delay in units of tau; ``width`` the pulse duration in
    seconds (0 for an ideal pulse).
    """

    kind: str
    phase: str | None = None
    flip_angle: float = 90.0
    width: float = 0.0
    length: float = 0.0
    channel: str | None = None

    def __post_init__(self):
        if self.kind == "pulse":
            if self.phase not in PHASES:
                raise ConfigurationError(f"unknown pulse phase {self.phase!r}")
            if self.width < 0:
                raise ConfigurationError("negative pulse width")
        elif self.kind == "delay":
            if self.length < 0:
                raise ConfigurationError("negative delay")
        elif self.kind != "acquire":
            raise ConfigurationError(f"unknown event kind {self.kind!r}")

    @property
    def is_pulse(self) -> bool:
        return self.kind == "pulse"

    def duration(self, tau: float) -> float:
        if self.kind == "delay":
            return self.length * tau
        if self.kind == "pulse":
            return self.width
        return 0.0

    @property
    def axis(self) -> np.ndarray:
        a = np.deg2rad(PHASE_ANGLE[self.phase])
        return np.array([np.cos(a), np.sin(a), 0.0])

    @property
    def nutation_hz(self) -> float:
        """Rabi frequency (turns/s) of a finite pulse."""
        if not self.width:
            return np.inf
        return self.flip_angle / (360.0 * self.width)

    def rotation(self) -> np.ndarray:
        """2x2 SU(2) rotation of the ideal pulse."""
        return rotation_2x2(self.axis, np.deg2rad(self.flip_angle))


def pulse(phase: str, flip_angle: float = 90.0, width: float = 0.0, channel: str = DEFAULT_CHANNEL) -> PulseEvent:
    return PulseEvent("pulse", phase=phase, flip_angle=flip_angle, width=width, channel=channel)


def delay(length: float) -> PulseEvent:
    return PulseEvent("delay", length=length)


ACQ = PulseEvent("acquire")


@dataclass(frozen=True)
class PulseSequence:
    events: tuple = ()
    tau: float = 0.0
    channels: tuple = (DEFAULT_CHANNEL,)

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        object.__setattr__(self, "channels", tuple(dict.fromkeys(self.channels)))
        if self.tau < 0:
            raise ConfigurationError("tau must be non-negative")
        for e in self.events:
            if e.is_pulse and e.channel not in self.channels:
                raise ConfigurationError(f"pulse on undeclared channel {e.channel!r}")
        if self.tau == 0 and any(e.kind == "delay" and e.length for e in self.events):
            raise ConfigurationError("delays require a positive tau")

    @property
    def cycle_duration(self) -> float:
        return float(sum(e.duration(self.tau) for e in self.events))

    @property
    def pulses(self) -> list[PulseEvent]:
        return [e for e in self.events if e.is_pulse]

    @property
    def n_pulses(self) -> int:
        return len(self.pulses)

    @property
    def n_acquisitions(self) -> int:
        return sum(e.kind == "acquire" for e in self.events)

    @property
    def has_finite_pulses(self) -> bool:
        return any(e.is_pulse and e.width > 0 for e in self.events)

    def acquisition_times(self) -> list[float]:
        t, out = 0.0, []
        for e in self.events:
            if e.kind == "acquire":
                out.append(t)
            t += e.duration(self.tau)
        return out

    def with_tau(self, tau: float) -> "PulseSequence":
        return replace(self, tau=tau)

    def on_channel(self, channel: str) -> "PulseSequence":
        """Same timing, every pulse moved to ``channel``."""
        ev = [replace(e, channel=channel) if e.is_pulse else e for e in self.events]
        return PulseSequence(ev, self.tau, (channel,))

    def __len__(self):
        return len(self.events)

    def __add__(self, other: "PulseSequence") -> "PulseSequence":
        return concat([self, other])

    def to_text(self) -> str:
        return serialize(self)


# --------------------------------------------------------------------------
# DSL

_UNITS = {"u": -6, "m": -3, "s": 0, "n": -9}
_NUM = r"[0-9]+(?:\.[0-9]*)?(?:[eE][-+]?[0-9]+)?"
_TIME_RE = re.compile(rf"^({_NUM})([umns]?)$")
_PULSE_RE = re.compile(rf"^p({_NUM})$")
_DELAY_RE = re.compile(rf"^d(-?{_NUM})$")
_REPEAT_RE = re.compile(r"^x([0-9]+)$")
_TOKEN_RE = re.compile(r"\[|\]|;|\n|[^\s;\[\]#]+|#[^\n]*|[ \t\r]+")


class _Tok(NamedTuple):
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks, line, col0 = [], 1, 0
    for m in _TOKEN_RE.finditer(text):
        s = m.group()
        col = m.start() - col0 + 1
        if s == "\n":
            toks.append(_Tok(";", line, col))
            line += 1
            col0 = m.end()
        elif s.startswith("#") or s.isspace():
            continue
        else:
            toks.append(_Tok(s, line, col))
    return toks


def _scale(number: str, unit: str) -> float:
    # decimal exponent arithmetic, so "20u" is the double nearest 2e-5
    return float(Decimal(number).scaleb(_UNITS[unit]))


def _parse_time(tok: _Tok) -> float:
    m = _TIME_RE.match(tok.text)
    if not m:
        raise ParseError(f"bad time value {tok.text!r}", tok.line, tok.col, tok.text)
    return _scale(m.group(1), m.group(2) or "s")


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.pos = 0
        self.tau = None
        self.channels: list[str] = []
        self.current = None

    def peek(self):
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def take(self):
        t = self.peek()
        self.pos += 1
        return t

    def error(self, msg, tok):
        if tok is None:
            last = self.toks[-1] if self.toks else _Tok("", 1, 1)
            raise ParseError(msg + " at end of input", last.line, last.col + len(last.text))
        raise ParseError(f"{msg} at token {tok.text!r}", tok.line, tok.col, tok.text)

    def block(self, closing: bool) -> list[PulseEvent]:
        events = []
        while True:
            tok = self.peek()
            if tok is None:
                if closing:
                    self.error("unterminated repetition group", None)
                return events
            if tok.text == ";":
                self.take()
                continue
            if tok.text == "]":
                if not closing:
                    self.error("unmatched ']'", tok)
                self.take()
                return events
            events.extend(self.statement())

    def end_statement(self):
        tok = self.peek()
        if tok is not None and tok.text not in (";", "]"):
            self.error("syntax error", tok)

    def statement(self) -> list[PulseEvent]:
        tok = self.take()
        word = tok.text
        if word == "[":
            inner = self.block(closing=True)
            count = 1
            nxt = self.peek()
            if nxt is not None and _REPEAT_RE.match(nxt.text):
                self.take()
                count = int(_REPEAT_RE.match(nxt.text).group(1))
            self.end_statement()
            return inner * count
        if word == "tau":
            arg = self.take()
            if arg is None or arg.text in (";", "]"):
                self.error("tau needs a value", arg)
            self.tau = _parse_time(arg)
            if self.tau <= 0:
                self.error("tau must be positive", arg)
            self.end_statement()
            return []
        if word == "channel":
            arg = self.take()
            if arg is None or not re.match(r"^[A-Za-z][A-Za-z0-9_]*$", arg.text):
                self.error("channel needs a name", arg)
            if arg.text not in self.channels:
                self.channels.append(arg.text)
            self.current = arg.text
            self.end_statement()
            return []
        if word == "acq":
            self.end_statement()
            return [ACQ]
        m = _DELAY_RE.match(word)
        if m:
            length = float(m.group(1))
            if length < 0:
                self.error("negative duration", tok)
            self.end_statement()
            return [delay(length)]
        m = _PULSE_RE.match(word)
        if m:
            return [self.pulse_args(float(m.group(1)))]
        self.error("syntax error", tok)

    def pulse_args(self, angle: float) -> PulseEvent:
        ph = self.take()
        if ph is None or ph.text in (";", "]"):
            self.error("pulse needs a phase", ph)
        phase = ph.text[1:] if ph.text in ("+x", "+y") else ph.text
        if phase not in PHASES:
            self.error("syntax error: unknown phase", ph)
        width, channel = 0.0, None
        while (tok := self.peek()) is not None and tok.text not in (";", "]"):
            self.take()
            if tok.text.startswith("@"):
                channel = tok.text[1:]
                if channel not in self.channels:
                    self.error("undeclared channel", tok)
            elif tok.text.startswith("-"):
                self.error("negative duration", tok)
            elif _TIME_RE.match(tok.text):
                width = _parse_time(tok)
            else:
                self.error("syntax error", tok)
        if channel is None:
            if self.current is None:
                self.channels.append(DEFAULT_CHANNEL)
                self.current = DEFAULT_CHANNEL
            channel = self.current
        return pulse(phase, angle, width, channel)


def parse_sequence(text: str) -> PulseSequence:
    """Parse DSL source into a :class:`PulseSequence`.

    Raises :class:`ParseError` carrying the 1-based line and column.
    """
    p = _Parser(text)
    events = p.block(closing=False)
    channels = tuple(p.channels) or (DEFAULT_CHANNEL,)
    tau = p.tau or 0.0
    if tau == 0 and any(e.kind == "delay" for e in events):
        raise ParseError("delays used but no tau declared", 1, 1)
    return PulseSequence(events, tau, channels)


def _fmt_num(v: float) -> str:
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _fmt_time(v: float) -> str:
    for unit in ("u", "m", "s"):
        scaled = v * 10.0 ** -_UNITS[unit]
        # shortest decimal that survives the round trip through the unit
        for digits in range(1, 18):
            s = _fmt_num(float(f"{scaled:.{digits}g}"))
            if _scale(s, unit) == v:
                return s + ("" if unit == "s" else unit)
    return repr(float(v))


def serialize(seq: PulseSequence) -> str:
    """Canonical DSL text; ``parse_sequence(serialize(s)) == s``."""
    lines = []
    if seq.tau:
        lines.append(f"tau {_fmt_time(seq.tau)}")
    for c in seq.channels:
        lines.append(f"channel {c}")
    default = seq.channels[-1] if seq.channels else DEFAULT_CHANNEL
    for e in seq.events:
        if e.kind == "acquire":
            lines.append("acq")
        elif e.kind == "delay":
            lines.append(f"d{_fmt_num(e.length)}")
        else:
            parts = [f"p{_fmt_num(e.flip_angle)}", e.phase]
            if e.width:
                parts.append(_fmt_time(e.width))
            if e.channel != default:
                parts.append("@" + e.channel)
            lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# cyclicity

class Cyclicity(NamedTuple):
    is_cyclic: bool
    residual: float
    per_channel: dict


def pulse_product(seq: PulseSequence, channel: str) -> np.ndarray:
    """Ordered product of the ideal pulse rotations on one channel (2x2)."""
    u = np.eye(2, dtype=complex)
    for e in seq.events:
        if e.is_pulse and e.channel == channel:
            u = e.rotation() @ u
    return u


def distance_to_identity(u: np.ndarray) -> float:
    """Frobenius distance of ``u`` to the identity, minimized over global phase."""
    tr = np.trace(u)
    phase = tr / abs(tr) if abs(tr) > 1e-300 else 1.0
    return float(np.linalg.norm(u / phase - np.eye(u.shape[0])))


def validate_cyclic(seq: PulseSequence, tol: float = 1e-9) -> Cyclicity:
    per = {c: distance_to_identity(pulse_product(seq, c)) for c in seq.channels}
    res = max(per.values(), default=0.0)
    return Cyclicity(res <= tol, res, per)


# --------------------------------------------------------------------------
# builders

WAHUHA_PHASES = ("x", "-y", "y", "-x")
# Unit order reproducing the offset Magnus coefficients 1/3; (-2/3, 0, 1/3);
# -4/3; (19/9, 0, 19/18) for I_z, I_x.
DSL4_VARIANTS = {
    "canonical": (("x", "y", "-y", "-x"), ("x", "-y", "y", "-x"),
                  ("-x", "-y", "y", "x"), ("-x", "y", "-y", "x")),
    "wahuha_x4": (WAHUHA_PHASES,) * 4,
    "alternating": (("x", "-y", "y", "-x"), ("-x", "y", "-y", "x")) * 2,
    "mirror": (("x", "-y", "y", "-x"), ("x", "y", "-y", "-x"),
               ("-x", "y", "-y", "x"), ("-x", "-y", "y", "x")),
}


def _unit_events(phases: Sequence[str], tau: float, width: float, channel: str,
                 gaps=(1, 1, 2, 1, 1), acquire: bool = True) -> list[PulseEvent]:
    """Pulses centred on the ideal positions; delays shortened by the widths."""
    if width and tau <= 2 * width:
        raise ConfigurationError(f"tau={tau} must exceed twice the pulse width {width}")
    w = width / tau if tau else 0.0
    ev = []
    for i, g in enumerate(gaps):
        shorten = (0.5 * w if i in (0, len(gaps) - 1) else w) if w else 0.0
        length = g - shorten
        if length < 0:
            raise ConfigurationError("pulse overlaps its neighbours")
        ev.append(delay(length))
        if i < len(phases):
            ev.append(pulse(phases[i], 90.0, width, channel))
    if acquire:
        ev.append(ACQ)
    return ev


def builtin_wahuha(tau: float, pulse_width: float = 0.0, phases=WAHUHA_PHASES,
                   channel: str = DEFAULT_CHANNEL, acquire: bool = True) -> PulseSequence:
    """tau - P1 - tau - P2 - 2 tau - P3 - tau - P4 - tau, cycle 6 tau."""
    return PulseSequence(_unit_events(phases, tau, pulse_width, channel, acquire=acquire), tau, (channel,))


def builtin_dsl4(tau: float, pulse_width: float = 0.0, variant: str = "canonical",
                 channel: str = DEFAULT_CHANNEL) -> PulseSequence:
    """Four WaHuHa units (24 tau, 16 pulses) with an acquisition every 6 tau."""
    if variant not in DSL4_VARIANTS:
        raise ConfigurationError(f"unknown DSL-4 variant {variant!r}; choose from {sorted(DSL4_VARIANTS)}")
    if tau <= 0:
        raise ConfigurationError("tau must be positive")
    ev = []
    for phases in DSL4_VARIANTS[variant]:
        ev += _unit_events(phases, tau, pulse_width, channel)
    return PulseSequence(ev, tau, (channel,))


def free_evolution(tau: float, n: int = 1, channel: str = DEFAULT_CHANNEL) -> PulseSequence:
    return PulseSequence([delay(1)] * n, tau, (channel,))


# --------------------------------------------------------------------------
# transforms

TRANSFORMS = ("phase_shift_90", "phase_invert", "time_reverse", "channel_swap")


def _time_reverse(seq: PulseSequence) -> PulseSequence:
    total = seq.cycle_duration
    acq = seq.acquisition_times()
    body = [e for e in seq.events if e.kind != "acquire"][::-1]
    out, t, k = [], 0.0, 0
    tol = 1e-12 * max(total, 1e-300)
    for e in body:
        while k < len(acq) and acq[k] <= t + tol:
            out.append(ACQ)
            k += 1
        out.append(e)
        t += e.duration(seq.tau)
    out.extend([ACQ] * (len(acq) - k))
    return PulseSequence(out, seq.tau, seq.channels)


def transform_block(seq: PulseSequence, op: str) -> PulseSequence:
    """Symmetry transformation of a block; event count and duration preserved.

    ``time_reverse`` reverses pulses and delays but keeps acquisition markers
    at their original elapsed times, so a block ending in ``acq`` still does.
    """
    if op == "phase_shift_90":
        f = lambda e: replace(e, phase=_SHIFT_90[e.phase])
    elif op == "phase_invert":
        f = lambda e: replace(e, phase=_INVERT[e.phase])
    elif op == "channel_swap":
        if len(seq.channels) != 2:
            return seq
        a, b = seq.channels
        f = lambda e: replace(e, channel=b if e.channel == a else a)
    elif op == "time_reverse":
        return _time_reverse(seq)
    else:
        raise ConfigurationError(f"unknown transform {op!r}; choose from {TRANSFORMS}")
    return PulseSequence([f(e) if e.is_pulse else e for e in seq.events], seq.tau, seq.channels)


def concat(blocks: Iterable[PulseSequence]) -> PulseSequence:
    blocks = list(blocks)
    if not blocks:
        return PulseSequence((), 0.0)
    tau, ch = blocks[0].tau, set(blocks[0].channels)
    for b in blocks[1:]:
        if b.tau != tau and b.events:
            raise ConfigurationError(f"tau mismatch in concat: {b.tau} vs {tau}")
        if set(b.channels) != ch:
            raise ConfigurationError("channel sets differ in concat")
    ev = [e for b in blocks for e in b.events]
    return PulseSequence(ev, tau, blocks[0].channels)
