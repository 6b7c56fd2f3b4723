"""Sequence-design environments with classical search strategies.

Phase 1 builds short blocks from five actions (a 90 degree pulse about
+x, -x, +y or -y followed by tau, or a bare tau) and scores the propagator
against a target. Phase 2 grows long protocols from a block library by
appending blocks or symmetry-transformed copies of the most recent ones,
scoring the protocol repeated up to a projection time.

Both environments expose ``reset``/``step`` so an external policy learner
could drive them; the built-in drivers are exhaustive enumeration, seeded
stochastic hill climbing and beam search.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .engine import Propagators, build_timeline, window_unitaries
from .sequence import (ACQ, TRANSFORMS, PulseSequence, concat, delay, pulse, serialize,
                       transform_block, validate_cyclic)
from .spinops import (TWO_PI, ConfigurationError, SpinSystem,
                      collective_operator, collective_rotation, hermitian_expm,
                      interaction_hamiltonian, is_unitary, offset_hamiltonian, rotation_2x2)

LOG_FLOOR = 1e-15
_REL_TICK = 1e-9


# --------------------------------------------------------------------------
# fidelity and reward

def fidelity(u_a: np.ndarray, u_tgt: np.ndarray, literal: bool = False) -> float:
    """Normalized trace fidelity ``|Tr(U_a^dag U_tgt)|^2 / d^2``.

    Parameters
    ----------
    u_a, u_tgt : ndarray
        Unitaries of equal dimension ``d = 2^N``.
    literal : bool
        Evaluate ``(Tr|sqrt(U_a U_tgt^dag)|)^2 / 2^N`` with both operators
        normalized to unit Frobenius norm instead. For unitaries this is
        identically 1, so it is kept only for reference.

    Returns
    -------
    float
        Value in [0, 1], invariant under a global phase of either argument.
    """
    a = np.asarray(u_a)
    b = np.asarray(u_tgt)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ConfigurationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    d = a.shape[0]
    if literal:
        from scipy.linalg import sqrtm

        an = a / np.sqrt(np.trace(a @ a.conj().T).real)
        bn = b / np.sqrt(np.trace(b @ b.conj().T).real)
        s = sqrtm(an @ bn.conj().T)
        # |M| = sqrt(M^dag M); its trace is the sum of singular values
        tr = np.linalg.svd(s, compute_uv=False).sum()
        return float(min(tr**2 / d, 1.0))
    return float(min(abs(np.vdot(a, b)) ** 2 / d**2, 1.0))


def reward_phase1(f: float, f_opt: float = 0.999) -> float:
    """``-ln(1 - F)`` when ``F >= f_opt`` (with ``1 - F`` floored), else -1."""
    if f >= f_opt:
        return float(-np.log(max(1.0 - f, LOG_FLOOR)))
    return -1.0


# --------------------------------------------------------------------------
# strategies

@dataclass(frozen=True)
class SearchStrategy:
    """Classical driver for an environment.

    ``kind`` is ``exhaustive`` (uses ``depth``), ``hill_climb`` (``restarts``,
    ``iterations``, ``temperature``) or ``beam`` (``width``). Stochastic kinds
    draw from ``numpy.random.default_rng(seed)`` only.
    """

    kind: str = "exhaustive"
    depth: int | None = None
    restarts: int = 4
    iterations: int = 200
    temperature: float = 0.05
    width: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("exhaustive", "hill_climb", "beam"):
            raise ConfigurationError(f"unknown strategy {self.kind!r}")
        if self.width < 1 or self.restarts < 1 or self.iterations < 0:
            raise ConfigurationError("strategy sizes must be positive")
        if self.temperature < 0:
            raise ConfigurationError("temperature must be non-negative")

    def record(self) -> dict:
        return {"kind": self.kind, "depth": self.depth, "restarts": self.restarts,
                "iterations": self.iterations, "temperature": self.temperature,
                "width": self.width, "seed": self.seed}


# --------------------------------------------------------------------------
# phase 1

PHASE1_ACTIONS = ("x", "-x", "y", "-y", None)
_AXES = {"x": (1.0, 0.0, 0.0), "-x": (-1.0, 0.0, 0.0), "y": (0.0, 1.0, 0.0), "-y": (0.0, -1.0, 0.0)}
WAHUHA_ACTIONS = (None, "x", "-y", None, "y", "-x")


def action_name(a) -> str:
    return "free" if a is None else a


def actions_to_sequence(actions: Sequence, tau: float, channel: str = "H",
                        acquire: bool = True) -> PulseSequence:
    """Each pulse action becomes ``p90 phase; d1``, a free action ``d1``."""
    ev = []
    for a in actions:
        if a is not None:
            ev.append(pulse(a, 90.0, 0.0, channel))
        ev.append(delay(1))
    if acquire:
        ev.append(ACQ)
    return PulseSequence(ev, tau, (channel,))


def scaled_offset_target(system: SpinSystem, nu_probe: float, channel: str,
                         scale: float = 1.0 / 3.0) -> Callable[[float], np.ndarray]:
    """``t -> exp(-i t (scale * 2 pi nu_probe) I_z)`` on ``channel``; D absent."""
    z = np.diag(collective_operator(system, "z", channel)).real
    w = TWO_PI * nu_probe * scale

    def target(t: float) -> np.ndarray:
        return np.diag(np.exp(-1j * t * w * z))

    return target


def _as_target(target, system, nu_probe, channel):
    if target is None or (isinstance(target, str) and target == "dipolar_decoupling"):
        return scaled_offset_target(system, nu_probe, channel)
    if isinstance(target, str):
        raise ConfigurationError(f"unknown target {target!r}")
    if callable(target):
        return target
    u = np.asarray(target, dtype=complex)
    if u.shape != (system.dim, system.dim) or not is_unitary(u):
        raise ConfigurationError("custom target must be a unitary of the system dimension")
    return lambda t: u


@dataclass
class Phase1State:
    """Partial sequence with its propagator and the target at the same time."""

    actions: tuple
    seq: PulseSequence
    U_a: np.ndarray
    U_tgt: np.ndarray
    steps: int


@dataclass(frozen=True)
class Candidate:
    """A terminated Phase-1 episode."""

    actions: tuple
    sequence: PulseSequence
    fidelity: float
    reward: float
    steps: int
    cyclic: bool

    @property
    def text(self) -> str:
        return serialize(self.sequence)

    def record(self) -> dict:
        return {"actions": [action_name(a) for a in self.actions], "fidelity": self.fidelity,
                "reward": self.reward, "steps": self.steps, "cyclic": self.cyclic}


class Phase1Env:
    """Five-action environment on a small spin system.

    Parameters
    ----------
    system : SpinSystem
        Couplings are present in ``U_a``.
    tau : float
        Base interval in seconds.
    nu_probe : float
        Offset (Hz) applied to ``channel`` in ``U_a`` and in the default target.
    n_max : int
        Episode length cap (at most 24).
    f_opt : float
        Early-termination threshold.
    target : None, "dipolar_decoupling", callable or ndarray
        Default is the one-third scaled offset evolution; a callable receives
        the elapsed time.
    """

    def __init__(self, system: SpinSystem, tau: float, nu_probe: float, n_max: int = 6,
                 f_opt: float = 0.999, target=None, channel: str | None = None):
        if not 1 <= n_max <= 24:
            raise ConfigurationError("n_max must be in [1, 24]")
        if tau <= 0:
            raise ConfigurationError("tau must be positive")
        if system.dim > 2**8:
            raise ConfigurationError("phase-1 search is limited to 8 spins")
        self.system = system
        self.tau = float(tau)
        self.nu_probe = float(nu_probe)
        self.n_max = int(n_max)
        self.f_opt = float(f_opt)
        self.channel = channel or system.species[0]
        self.target = _as_target(target, system, nu_probe, self.channel)
        h = interaction_hamiltonian(system) + offset_hamiltonian(system, {self.channel: nu_probe})
        self.u_tau = hermitian_expm(h, self.tau)
        self.kicks = {a: collective_rotation(system, {self.channel: rotation_2x2(v, np.pi / 2)})
                      for a, v in _AXES.items()}
        self.state: Phase1State | None = None

    @property
    def actions(self) -> tuple:
        return PHASE1_ACTIONS

    def advance(self, u: np.ndarray, action) -> np.ndarray:
        if action is not None:
            if action not in self.kicks:
                raise ConfigurationError(f"unknown action {action!r}")
            u = self.kicks[action] @ u
        return self.u_tau @ u

    def score(self, u: np.ndarray, steps: int) -> float:
        return fidelity(u, self.target(steps * self.tau))

    def reset(self) -> Phase1State:
        eye = np.eye(self.system.dim, dtype=complex)
        self.state = Phase1State((), actions_to_sequence((), self.tau, self.channel, False),
                                 eye, self.target(0.0), 0)
        return self.state

    def step(self, action):
        """Append an action; returns ``(state, reward, done, info)``."""
        if self.state is None:
            raise ConfigurationError("call reset() first")
        s = self.state
        if s.steps >= self.n_max:
            raise ConfigurationError("episode already finished")
        acts = s.actions + (action,)
        u = self.advance(s.U_a, action)
        n = s.steps + 1
        self.state = Phase1State(acts, actions_to_sequence(acts, self.tau, self.channel, False),
                                 u, self.target(n * self.tau), n)
        f = fidelity(u, self.state.U_tgt)
        done = f >= self.f_opt or n >= self.n_max
        return self.state, reward_phase1(f, self.f_opt), done, {"fidelity": f}

    def candidate(self, actions: Sequence, f: float) -> Candidate:
        seq = actions_to_sequence(actions, self.tau, self.channel)
        return Candidate(tuple(actions), seq, float(f), reward_phase1(f, self.f_opt),
                         len(actions), validate_cyclic(seq).is_cyclic)

    def evaluate(self, actions: Sequence) -> Candidate:
        """Run one episode following ``actions``; stops early at ``f_opt``."""
        u = np.eye(self.system.dim, dtype=complex)
        f = 0.0
        for k, a in enumerate(actions, 1):
            u = self.advance(u, a)
            f = self.score(u, k)
            if f >= self.f_opt:
                return self.candidate(actions[:k], f)
        return self.candidate(tuple(actions), f)


@dataclass
class Phase1Result:
    """Winners (cyclic, ``F >= f_opt``) plus bookkeeping."""

    winners: list
    best: Candidate | None
    baseline: Candidate
    n_enumerated: int
    n_evaluated: int
    strategy: SearchStrategy
    f_opt: float

    def record(self) -> dict:
        return {"winners": [c.record() for c in self.winners],
                "best": None if self.best is None else self.best.record(),
                "baseline": self.baseline.record(), "n_enumerated": self.n_enumerated,
                "n_evaluated": self.n_evaluated, "strategy": self.strategy.record(),
                "f_opt": self.f_opt}


def _rank_key(c: Candidate):
    return (-c.fidelity, c.steps, c.text)


def _exhaustive(env: Phase1Env, depth: int):
    """Depth-first enumeration of all ``5^depth`` action strings.

    A branch that reaches ``f_opt`` terminates; its subtree still counts
    toward ``n_enumerated``.
    """
    found: dict = {}
    counter = {"enum": 0, "eval": 0}

    def rec(u, acts):
        k = len(acts)
        if k:
            f = env.score(u, k)
            counter["eval"] += 1
            if f >= env.f_opt or k == depth:
                counter["enum"] += len(PHASE1_ACTIONS) ** (depth - k)
                found.setdefault(acts, env.candidate(acts, f))
                return
        for a in PHASE1_ACTIONS:
            rec(env.advance(u, a), acts + (a,))

    rec(np.eye(env.system.dim, dtype=complex), ())
    return list(found.values()), counter["enum"], counter["eval"]


def _hill_climb(env: Phase1Env, strategy: SearchStrategy, depth: int):
    rng = np.random.default_rng(strategy.seed)
    found: dict = {}
    n_eval = 0
    na = len(PHASE1_ACTIONS)
    for _ in range(strategy.restarts):
        cur = [PHASE1_ACTIONS[i] for i in rng.integers(0, na, depth)]
        c_cur = env.evaluate(cur)
        n_eval += 1
        found.setdefault(c_cur.actions, c_cur)
        for _ in range(strategy.iterations):
            prop = list(cur)
            prop[int(rng.integers(depth))] = PHASE1_ACTIONS[int(rng.integers(na))]
            c = env.evaluate(prop)
            n_eval += 1
            found.setdefault(c.actions, c)
            gain = np.log1p(-min(c_cur.fidelity, 1 - LOG_FLOOR)) - np.log1p(-min(c.fidelity, 1 - LOG_FLOOR))
            u = rng.random()
            if gain >= 0 or (strategy.temperature > 0 and u < np.exp(gain / strategy.temperature)):
                cur, c_cur = prop, c
    return list(found.values()), n_eval, n_eval


def _beam(env: Phase1Env, strategy: SearchStrategy, depth: int):
    beam = [((), np.eye(env.system.dim, dtype=complex))]
    found: dict = {}
    n_eval = 0
    for k in range(1, depth + 1):
        nxt = []
        for acts, u in beam:
            for a in PHASE1_ACTIONS:
                ua = env.advance(u, a)
                f = env.score(ua, k)
                n_eval += 1
                c = env.candidate(acts + (a,), f)
                if f >= env.f_opt or k == depth:
                    found.setdefault(c.actions, c)
                else:
                    nxt.append((c, ua))
        nxt.sort(key=lambda cu: _rank_key(cu[0]))
        beam = [(c.actions, ua) for c, ua in nxt[: strategy.width]]
        if not beam:
            break
    return list(found.values()), n_eval, n_eval


def phase1_search(system: SpinSystem, tau: float, nu_probe: float, n_max: int = 6,
                  f_opt: float = 0.999, strategy: SearchStrategy | None = None,
                  target=None, top_k: int = 10, channel: str | None = None) -> Phase1Result:
    """Search for short cyclic blocks approximating the target evolution.

    The WaHuHa block is evaluated first as a baseline. Winners are the
    cyclic terminated candidates with ``F >= f_opt``, ranked by fidelity,
    then length, then serialized text; the list may be empty.
    """
    strategy = strategy or SearchStrategy("exhaustive")
    env = Phase1Env(system, tau, nu_probe, n_max, f_opt, target, channel)
    depth = min(strategy.depth or n_max, n_max)
    baseline = env.candidate(WAHUHA_ACTIONS, env.score(_run(env, WAHUHA_ACTIONS), len(WAHUHA_ACTIONS)))
    if strategy.kind == "exhaustive":
        cands, n_enum, n_eval = _exhaustive(env, depth)
    elif strategy.kind == "hill_climb":
        cands, n_enum, n_eval = _hill_climb(env, strategy, depth)
    else:
        cands, n_enum, n_eval = _beam(env, strategy, depth)
    cands.sort(key=_rank_key)
    winners = [c for c in cands if c.cyclic and c.fidelity >= f_opt][:top_k]
    best = next((c for c in cands if c.cyclic), None)
    return Phase1Result(winners, best, baseline, n_enum, n_eval, strategy, f_opt)


def _run(env: Phase1Env, actions) -> np.ndarray:
    u = np.eye(env.system.dim, dtype=complex)
    for a in actions:
        u = env.advance(u, a)
    return u


def enumerate_action_strings(depth: int) -> list[tuple]:
    """All ``5^depth`` action strings in lexicographic action order."""
    return list(itertools.product(PHASE1_ACTIONS, repeat=depth))


# --------------------------------------------------------------------------
# phase 2

@dataclass(frozen=True)
class Phase2Action:
    """``kind`` 0 appends library block ``block``; 1 appends ``op`` applied to
    the last block; 2 appends ``op`` applied to the block before the last."""

    kind: int
    block: int | None = None
    op: str | None = None

    def __post_init__(self):
        if self.kind == 0:
            if self.block is None or self.block < 0:
                raise ConfigurationError("type-0 action needs a block index")
        elif self.kind in (1, 2):
            if self.op not in TRANSFORMS:
                raise ConfigurationError(f"unknown transform {self.op!r}")
        else:
            raise ConfigurationError(f"unknown action type {self.kind!r}")

    @property
    def label(self) -> str:
        return f"append:{self.block}" if self.kind == 0 else f"t{self.kind}:{self.op}"


@dataclass
class ProtocolStats:
    n_blocks: int
    n_pulses: int
    n_acquisitions: int
    duration: float
    duration_tau: float

    def record(self) -> dict:
        return dict(self.__dict__)


def protocol_stats(blocks: Sequence[PulseSequence]) -> ProtocolStats:
    seq = concat(blocks)
    return ProtocolStats(len(blocks), seq.n_pulses, seq.n_acquisitions, seq.cycle_duration,
                         seq.cycle_duration / seq.tau if seq.tau else 0.0)


@dataclass
class Phase2State:
    blocks: tuple
    actions: tuple
    duration: float


@dataclass
class Phase2Result:
    protocol: PulseSequence
    blocks: tuple
    actions: tuple
    projected_reward: float
    baseline_reward: float
    stats: ProtocolStats
    n_evaluated: int
    strategy: SearchStrategy

    def record(self) -> dict:
        return {"actions": [a.label for a in self.actions], "projected_reward": self.projected_reward,
                "baseline_reward": self.baseline_reward, "stats": self.stats.record(),
                "n_evaluated": self.n_evaluated, "strategy": self.strategy.record()}


class Phase2Env:
    """Protocol-growing environment.

    Parameters
    ----------
    system : SpinSystem
    blocks : sequence of PulseSequence
        Library; all share ``tau`` and channels and end in an acquisition.
    t_tgt, t_pj : float
        Target duration (episode ends once reached) and projection time.
    nu_probe : float
        Offset (Hz) used for the propagator and the default target.
    target : as for :class:`Phase1Env`
    initial : int
        Library index of the starting block.
    """

    def __init__(self, system: SpinSystem, blocks: Sequence[PulseSequence], t_tgt: float,
                 t_pj: float, nu_probe: float = 0.0, target=None, initial: int = 0,
                 transforms: Sequence[str] = TRANSFORMS):
        blocks = tuple(blocks)
        if not blocks:
            raise ConfigurationError("block library is empty")
        tau, chans = blocks[0].tau, set(blocks[0].channels)
        for b in blocks:
            if b.tau != tau or set(b.channels) != chans:
                raise ConfigurationError("library blocks must share tau and channels")
            if not b.events or b.events[-1].kind != "acquire":
                raise ConfigurationError("every library block must end in an acquisition")
            if b.cycle_duration <= 0:
                raise ConfigurationError("library blocks must have positive duration")
        if t_tgt <= 0:
            raise ConfigurationError("t_tgt must be positive")
        if t_pj < t_tgt:
            raise ConfigurationError(f"t_pj={t_pj} is shorter than t_tgt={t_tgt}")
        if not 0 <= initial < len(blocks):
            raise ConfigurationError("initial block index out of range")
        self.system = system
        self.library = blocks
        self.t_tgt = float(t_tgt)
        self.t_pj = float(t_pj)
        self.initial = initial
        self.channel = blocks[0].channels[0]
        self.target = _as_target(target, system, nu_probe, self.channel)
        self.offsets = {s: 0.0 for s in system.species_set}
        self.offsets.update(system.offsets)
        self.offsets[self.channel] = float(nu_probe)
        self.props = Propagators(system)
        self.transforms = tuple(t for t in transforms if t != "channel_swap" or len(chans) == 2)
        self._win_cache: dict = {}
        self.state: Phase2State | None = None

    @property
    def actions(self) -> list[Phase2Action]:
        acts = [Phase2Action(0, block=i) for i in range(len(self.library))]
        for kind in (1, 2):
            acts += [Phase2Action(kind, op=op) for op in self.transforms]
        return acts

    def _done(self, duration: float) -> bool:
        return duration >= self.t_tgt * (1 - _REL_TICK)

    def apply(self, blocks: tuple, action: Phase2Action) -> tuple:
        if action.kind == 0:
            if action.block >= len(self.library):
                raise ConfigurationError("block index out of range")
            new = self.library[action.block]
        elif action.kind == 1:
            new = transform_block(blocks[-1], action.op)
        else:
            if len(blocks) < 2:
                raise ConfigurationError("type-2 action needs two blocks")
            new = transform_block(blocks[-2], action.op)
        return blocks + (new,)

    def legal(self, blocks: tuple) -> list[Phase2Action]:
        return [a for a in self.actions if a.kind != 2 or len(blocks) >= 2]

    def reset(self) -> Phase2State:
        b = (self.library[self.initial],)
        self.state = Phase2State(b, (), b[0].cycle_duration)
        return self.state

    def step(self, action: Phase2Action):
        """Append a block; returns ``(state, reward, done, info)``.

        Before termination the reward is the summed fidelity over the new
        block's acquisition windows; at termination it is the projected
        reward of the whole protocol.
        """
        if self.state is None:
            raise ConfigurationError("call reset() first")
        if self._done(self.state.duration):
            raise ConfigurationError("episode already finished")
        blocks = self.apply(self.state.blocks, action)
        dur = self.state.duration + blocks[-1].cycle_duration
        self.state = Phase2State(blocks, self.state.actions + (action,), dur)
        done = self._done(dur)
        if done:
            r = self.projected_reward(blocks)
        else:
            scores = self.window_scores(blocks)
            r = float(sum(scores[-blocks[-1].n_acquisitions:]))
        return self.state, r, done, {"duration": dur}

    def _block_windows(self, block: PulseSequence):
        key = serialize(block)
        w = self._win_cache.get(key)
        if w is None:
            steps, _ = build_timeline({c: block for c in block.channels})
            w = window_unitaries(steps, self.props, self.offsets)
            self._win_cache[key] = w
        return w

    def _acq_unitaries(self, blocks):
        """Propagators at every acquisition of one protocol pass, and the full pass."""
        dim = self.system.dim
        u = np.eye(dim, dtype=complex)
        t = 0.0
        out = []
        for b in blocks:
            wins = self._block_windows(b)
            times = b.acquisition_times()
            base = u
            for k, w in enumerate(wins[:-1]):
                base = w @ base
                out.append((t + times[k], base))
            u = wins[-1] @ base
            t += b.cycle_duration
        return out, u, t

    def window_scores(self, blocks) -> list[float]:
        acq, _, _ = self._acq_unitaries(blocks)
        return [fidelity(u, self.target(t)) for t, u in acq]

    def projected_reward(self, blocks) -> float:
        """Summed fidelity over all acquisitions with ``t <= t_pj`` when the
        protocol is repeated back to back."""
        acq, u_pass, period = self._acq_unitaries(blocks)
        total = 0.0
        rep = np.eye(self.system.dim, dtype=complex)
        start = 0.0
        limit = self.t_pj * (1 + _REL_TICK)
        while start + acq[0][0] <= limit:
            for t, u in acq:
                if start + t > limit:
                    break
                total += fidelity(u @ rep, self.target(start + t))
            rep = u_pass @ rep
            start += period
        return float(total)

    def rollout(self, actions: Sequence[Phase2Action]):
        """Apply ``actions`` until termination; returns ``(blocks, used_actions)``."""
        blocks = (self.library[self.initial],)
        dur = blocks[0].cycle_duration
        used = []
        for a in actions:
            if self._done(dur):
                break
            if a.kind == 2 and len(blocks) < 2:
                continue
            blocks = self.apply(blocks, a)
            dur += blocks[-1].cycle_duration
            used.append(a)
        while not self._done(dur):
            blocks = self.apply(blocks, Phase2Action(0, block=self.initial))
            dur += blocks[-1].cycle_duration
            used.append(Phase2Action(0, block=self.initial))
        return blocks, tuple(used)


def _protocol_key(blocks) -> str:
    return serialize(concat(blocks))


def phase2_extend(system: SpinSystem, blocks: Sequence[PulseSequence], t_tgt: float, t_pj: float,
                  strategy: SearchStrategy | None = None, nu_probe: float = 0.0, target=None,
                  initial: int = 0) -> Phase2Result:
    """Grow a protocol to ``t_tgt`` and score it over ``t_pj``.

    The naive repetition of the initial block is evaluated first and kept
    as a candidate, so the returned reward never falls below it.
    """
    strategy = strategy or SearchStrategy("beam", width=4)
    env = Phase2Env(system, blocks, t_tgt, t_pj, nu_probe, target, initial)
    base_blocks, base_actions = env.rollout(())
    base_r = env.projected_reward(base_blocks)
    best = (base_r, base_blocks, base_actions)
    n_eval = 1

    def better(cand, cur):
        # higher reward wins; ties go to the lexicographically smaller protocol
        if cand[0] != cur[0]:
            return cand[0] > cur[0]
        return _protocol_key(cand[1]) < _protocol_key(cur[1])

    if strategy.kind == "beam":
        beam = [((env.library[initial],), ())]
        while beam:
            nxt = []
            for bl, acts in beam:
                for a in env.legal(bl):
                    nb = env.apply(bl, a)
                    r = env.projected_reward(nb)
                    n_eval += 1
                    cand = (r, nb, acts + (a,))
                    if env._done(sum(b.cycle_duration for b in nb)):
                        if better(cand, best):
                            best = cand
                    else:
                        nxt.append(cand)
            nxt.sort(key=lambda c: (-c[0], _protocol_key(c[1])))
            beam = [(bl, acts) for _, bl, acts in nxt[: strategy.width]]
    elif strategy.kind == "hill_climb":
        rng = np.random.default_rng(strategy.seed)
        acts_all = env.actions
        n_slots = max(1, int(np.ceil(env.t_tgt / min(b.cycle_duration for b in env.library))))
        for _ in range(strategy.restarts):
            cur = [acts_all[int(i)] for i in rng.integers(0, len(acts_all), n_slots)]
            bl, used = env.rollout(cur)
            cur_r = env.projected_reward(bl)
            n_eval += 1
            if better((cur_r, bl, used), best):
                best = (cur_r, bl, used)
            for _ in range(strategy.iterations):
                prop = list(cur)
                prop[int(rng.integers(n_slots))] = acts_all[int(rng.integers(len(acts_all)))]
                bl, used = env.rollout(prop)
                r = env.projected_reward(bl)
                n_eval += 1
                if better((r, bl, used), best):
                    best = (r, bl, used)
                gain = r - cur_r
                if gain >= 0 or (strategy.temperature > 0 and rng.random() < np.exp(gain / strategy.temperature)):
                    cur, cur_r = prop, r
    else:
        depth = strategy.depth
        n_slots = int(np.ceil(env.t_tgt / min(b.cycle_duration for b in env.library)))
        depth = n_slots if depth is None else min(depth, n_slots)
        if len(env.actions) ** depth > 200_000:
            raise ConfigurationError("exhaustive phase-2 search is too large; use beam or hill_climb")
        seen = set()
        for combo in itertools.product(env.actions, repeat=depth):
            bl, used = env.rollout(combo)
            key = _protocol_key(bl)
            if key in seen:
                continue
            seen.add(key)
            r = env.projected_reward(bl)
            n_eval += 1
            if better((r, bl, used), best):
                best = (r, bl, used)
    r, bl, acts = best
    return Phase2Result(concat(bl), bl, acts, r, base_r, protocol_stats(bl), n_eval, strategy)


# --------------------------------------------------------------------------
# export

def export_winners(directory, winners: Sequence[Candidate], strategy: SearchStrategy,
                   extra: dict | None = None) -> list[Path]:
    """Write ``winner_NN.seq`` files plus ``winners.json``; returns the paths."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths, entries = [], []
    for k, c in enumerate(winners):
        p = d / f"winner_{k:02d}.seq"
        p.write_text(c.text)
        paths.append(p)
        entries.append({"file": p.name, "fidelity": c.fidelity, "reward": c.reward,
                        "steps": c.steps, "seed": strategy.seed, "strategy": strategy.kind})
    m = d / "winners.json"
    m.write_text(json.dumps({"winners": entries, "strategy": strategy.record(), **(extra or {})},
                            indent=2, sort_keys=True) + "\n")
    paths.append(m)
    return paths
