"""Exact piecewise-constant propagation of a spin cluster under pulse sequences.

The cluster evolves under ``sum_s omega_s I_z^s + D + J + H_rf(t)`` in the
high-temperature (deviation density operator) picture. Two propagation
routes are used:

* direct stepping ``rho <- W rho W^dagger`` over acquisition windows, used
  for small clusters and for offset schedules;
* a Floquet route for long constant-offset runs: the cycle propagator is
  diagonalised once and every sample is a bilinear form in its eigenphases.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .sequence import PulseSequence
from .spinops import (
    TWO_PI, ConfigurationError, Eigensystem, SpinSystem,
    apply_local, collective_operator, interaction_hamiltonian, single_spin_operator,
    vector_operator,
)

_TICK = 1e-13  # time quantum (s) used to align channel timelines

SAMPLINGS = ("per_acquire", "per_cycle", "sub_cycle")


# --------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class InitialState:
    """Traceless initial deviation operator.

    ``kind`` is one of ``along_x``, ``along_y``, ``along_z``, ``along_vector``,
    ``along_locking_axis`` or ``single_spin``.
    """

    kind: str = "along_x"
    species: str | None = None
    spin: int | None = None
    axis: tuple = (1.0, 0.0, 0.0)

    def __post_init__(self):
        kinds = ("along_x", "along_y", "along_z", "along_vector", "along_locking_axis", "single_spin")
        if self.kind not in kinds:
            raise ConfigurationError(f"unknown initial state {self.kind!r}")
        if self.kind == "single_spin" and self.spin is None:
            raise ConfigurationError("single_spin requires a spin index")


def single_spin(i: int, axis="x") -> InitialState:
    vec = {"x": (1.0, 0, 0), "y": (0, 1.0, 0), "z": (0, 0, 1.0)}[axis] if isinstance(axis, str) else tuple(axis)
    return InitialState("single_spin", spin=i, axis=vec)


def _as_initial(spec) -> InitialState:
    if isinstance(spec, InitialState):
        return spec
    if isinstance(spec, str):
        return InitialState(spec)
    return InitialState("along_vector", axis=tuple(float(c) for c in spec))


@dataclass(frozen=True)
class OffsetSchedule:
    """Piecewise-linear offsets ``nu_s(t)`` in Hz, knots ``(t_s, nu_hz)``."""

    knots: Mapping[str, Sequence[tuple[float, float]]]

    def __post_init__(self):
        for s, k in self.knots.items():
            t = [p[0] for p in k]
            if len(t) == 0 or any(b < a for a, b in zip(t, t[1:])):
                raise ConfigurationError(f"schedule for {s!r} must have increasing knot times")

    @property
    def end(self) -> float:
        return min(k[-1][0] for k in self.knots.values())

    def at(self, t: float) -> dict:
        return {s: float(np.interp(t, [p[0] for p in k], [p[1] for p in k])) for s, k in self.knots.items()}


@dataclass(frozen=True, eq=False)
class SimulationConfig:
    system: SpinSystem
    sequence: PulseSequence | Mapping[str, PulseSequence]
    n_cycles: int = 1
    initial_state: object = "along_x"
    sampling: str = "per_acquire"
    sub_cycle_points: int | None = None
    offset_schedule: OffsetSchedule | None = None
    observe: Sequence[str] | None = None
    per_spin: bool = False
    method: str = "auto"

    def __post_init__(self):
        if self.n_cycles < 1:
            raise ConfigurationError("n_cycles must be at least 1")
        if self.sampling not in SAMPLINGS:
            raise ConfigurationError(f"sampling must be one of {SAMPLINGS}")
        if self.sampling == "sub_cycle" and not self.sub_cycle_points:
            raise ConfigurationError("sub_cycle sampling needs sub_cycle_points")
        if self.method not in ("auto", "direct", "floquet"):
            raise ConfigurationError("method must be auto, direct or floquet")
        for ch in self.channel_sequences:
            if ch not in self.system.species_set:
                raise ConfigurationError(f"channel {ch!r} is not a species of the system")

    @property
    def channel_sequences(self) -> dict[str, PulseSequence]:
        if isinstance(self.sequence, PulseSequence):
            return {ch: self.sequence for ch in self.sequence.channels}
        return dict(self.sequence)

    @property
    def primary(self) -> PulseSequence:
        return next(iter(self.channel_sequences.values()))

    @property
    def observed_species(self) -> tuple:
        return tuple(self.observe) if self.observe else self.system.species_set


@dataclass
class Trajectory:
    """Sampled observables.

    ``observables[s]`` has shape (n_samples, 3) holding the normalised
    ``<I_x>, <I_y>, <I_z>`` of species ``s``; ``per_spin[s]`` (optional) has
    shape (n_samples, n_spins_of_s, 3).
    """

    times: np.ndarray
    observables: dict
    per_spin: dict | None = None
    initial: dict = field(default_factory=dict)
    n_initialized: float = 1.0
    recovered_polarization: float | None = None
    offsets: np.ndarray | None = None

    def signal(self, species: str | None = None) -> np.ndarray:
        """Complex ``<I_x> + i <I_y>``."""
        obs = self.observables[species or next(iter(self.observables))]
        return obs[:, 0] + 1j * obs[:, 1]

    def magnitude(self, species: str | None = None) -> np.ndarray:
        return np.linalg.norm(self.observables[species or next(iter(self.observables))], axis=1)

    def polarization(self, species: str, n_spins: int) -> np.ndarray:
        """Per-spin polarisation of ``species`` in units of the initialised spins."""
        return self.magnitude(species) * self.n_initialized / n_spins

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_s", "Ix", "Iy", "Iz", "species", "spin"])
            for i, t in enumerate(self.times):
                for s, obs in self.observables.items():
                    w.writerow([repr(float(t)), *map(lambda v: repr(float(v)), obs[i]), s, "all"])
                    if self.per_spin and s in self.per_spin:
                        for j, row in enumerate(self.per_spin[s][i]):
                            w.writerow([repr(float(t)), *map(lambda v: repr(float(v)), row), s, j])


def read_trajectory_csv(path) -> Trajectory:
    """Inverse of :meth:`Trajectory.to_csv` (collective rows only)."""
    rows: dict = {}
    times: list = []
    with open(path) as fh:
        for r in csv.DictReader(fh):
            if r["spin"] != "all":
                continue
            t = float(r["t_s"])
            if not times or times[-1] != t:
                times.append(t)
            rows.setdefault(r["species"], []).append([float(r["Ix"]), float(r["Iy"]), float(r["Iz"])])
    return Trajectory(np.array(times), {s: np.array(v) for s, v in rows.items()})


# --------------------------------------------------------------------------
# timelines

@dataclass(frozen=True)
class _Free:
    duration: float
    rf: tuple  # ((channel, omega1, phase_x, phase_y), ...)


@dataclass(frozen=True)
class _Kick:
    rotations: tuple  # ((channel, 2x2 as bytes key), ...)
    mats: tuple


@dataclass(frozen=True)
class _Acq:
    pass


def _channel_items(seq: PulseSequence, channel: str):
    """(tick intervals with rf, instant events) for one channel's sequence."""
    t = 0.0
    intervals, instants = [], []
    for order, e in enumerate(seq.events):
        d = e.duration(seq.tau)
        t0 = round(t / _TICK)
        if e.kind == "acquire":
            instants.append((t0, order, "acq", None))
        elif e.is_pulse and e.channel == channel:
            if e.width == 0:
                instants.append((t0, order, "kick", e.rotation()))
            else:
                intervals.append((t0, round((t + d) / _TICK), (e.channel, TWO_PI * e.nutation_hz,
                                                                float(e.axis[0]), float(e.axis[1]))))
        t += d
    return intervals, instants, round(t / _TICK)


def build_timeline(channel_seqs: Mapping[str, PulseSequence], extra_breaks: Sequence[int] = ()):
    """Merge synchronised channel sequences into piecewise-constant steps.

    Acquisitions come from the first channel's sequence. Returns the step
    list and the cycle length in ticks.
    """
    chans = list(channel_seqs)
    per = [_channel_items(channel_seqs[c], c) for c in chans]
    ends = {p[2] for p in per}
    if len(ends) != 1:
        raise ConfigurationError("channel sequences must share the same cycle duration")
    end = ends.pop()
    taus = {channel_seqs[c].tau for c in chans}
    if len(taus) != 1:
        raise ConfigurationError("channel sequences must share tau")
    breaks = {0, end, *extra_breaks}
    for iv, inst, _ in per:
        for a, b, _ in iv:
            breaks.update((a, b))
        for t0, *_ in inst:
            breaks.add(t0)
    for ci, (iv, _, _) in enumerate(per):
        for a, b, _ in iv:
            for cj, (iv2, inst2, _) in enumerate(per):
                if cj != ci and any(a < t0 < b for t0, _, k, _ in inst2 if k == "kick"):
                    raise ConfigurationError("unsynchronised timing: ideal pulse inside a finite pulse on another channel")
    pts = sorted(breaks)
    steps: list = []
    for idx, t in enumerate(pts):
        kicks_here = []
        for ci, (iv, inst, _) in enumerate(per):
            for t0, order, kind, payload in sorted(inst, key=lambda x: x[1]):
                if t0 != t:
                    continue
                if kind == "kick":
                    kicks_here.append((chans[ci], payload))
                elif ci == 0:
                    if kicks_here:
                        steps.append(_make_kick(kicks_here))
                        kicks_here = []
                    steps.append(_Acq())
        if kicks_here:
            steps.append(_make_kick(kicks_here))
        if idx + 1 < len(pts):
            nxt = pts[idx + 1]
            rf = []
            for iv, _, _ in per:
                for a, b, spec in iv:
                    if a <= t and nxt <= b:
                        rf.append(spec)
            if len({r[0] for r in rf}) != len(rf):
                raise ConfigurationError("overlapping finite pulses on one channel")
            steps.append(_Free((nxt - t) * _TICK, tuple(sorted(rf))))
    return steps, end


def _make_kick(kicks):
    # combine successive kicks on the same channel
    merged: dict = {}
    for ch, m in kicks:
        merged[ch] = m @ merged.get(ch, np.eye(2, dtype=complex))
    return _Kick(tuple(merged), tuple(merged.values()))


# --------------------------------------------------------------------------
# propagators

class Propagators:
    """Segment propagators for one system and one set of offsets.

    The interaction eigensystem is shared across offsets, since offsets
    commute with the secular interactions; rf segments are cached by key.
    """

    def __init__(self, system: SpinSystem, h_int: np.ndarray | None = None,
                 eig: Eigensystem | None = None):
        self.system = system
        self.h_int = interaction_hamiltonian(system) if h_int is None else h_int
        self._eig = eig
        self._zdiag = {s: np.diag(collective_operator(system, "z", s)).real for s in system.species_set}
        self._ops = {}
        self._cache: dict = {}

    @property
    def eig(self) -> Eigensystem:
        if self._eig is None:
            self._eig = Eigensystem.of(self.h_int)
        return self._eig

    def _op(self, ch, axis):
        key = (ch, axis)
        if key not in self._ops:
            self._ops[key] = collective_operator(self.system, axis, ch)
        return self._ops[key]

    def offset_diag(self, offsets: Mapping[str, float]) -> np.ndarray:
        d = np.zeros(self.system.dim)
        for s, z in self._zdiag.items():
            d += TWO_PI * offsets.get(s, 0.0) * z
        return d

    def free(self, step: _Free, offsets: Mapping[str, float]) -> np.ndarray:
        key = (step.duration, step.rf, tuple(sorted(offsets.items())))
        u = self._cache.get(key)
        if u is not None:
            return u
        dz = self.offset_diag(offsets)
        if not step.rf:
            e = self.eig
            u = (e.vectors * np.exp(-1j * step.duration * e.values)) @ e.vectors.conj().T
            u = u * np.exp(-1j * step.duration * dz)[None, :]
        else:
            h = self.h_int + np.diag(dz)
            for ch, w1, cx, cy in step.rf:
                h = h + w1 * (cx * self._op(ch, "x") + cy * self._op(ch, "y"))
            u = Eigensystem.of(h).expm(step.duration)
        if len(self._cache) > 256:
            self._cache.clear()
        self._cache[key] = u
        return u

    def kick(self, step: _Kick, u: np.ndarray) -> np.ndarray:
        return apply_local(u, self.system, dict(zip(step.rotations, step.mats)))


def window_unitaries(steps, props: Propagators, offsets, split_at_acq: bool = True):
    """Unitaries between consecutive acquisitions; the last one runs to cycle end."""
    dim = props.system.dim
    wins, cur = [], np.eye(dim, dtype=complex)
    for st in steps:
        if isinstance(st, _Acq):
            if split_at_acq:
                wins.append(cur)
                cur = np.eye(dim, dtype=complex)
        elif isinstance(st, _Kick):
            cur = props.kick(st, cur)
        else:
            cur = props.free(st, offsets) @ cur
    wins.append(cur)
    return wins


def cycle_unitary(system: SpinSystem, seq: PulseSequence | Mapping[str, PulseSequence],
                  offsets=None, props: Propagators | None = None) -> np.ndarray:
    """Exact one-cycle propagator ``U(t_c)``."""
    chans = {c: seq for c in seq.channels} if isinstance(seq, PulseSequence) else dict(seq)
    steps, _ = build_timeline(chans)
    props = props or Propagators(system)
    offs = _resolve_offsets(system, offsets)
    u = np.eye(system.dim, dtype=complex)
    for w in window_unitaries(steps, props, offs):
        u = w @ u
    return u


def _resolve_offsets(system, offsets):
    if offsets is None:
        return dict(system.offsets)
    if isinstance(offsets, Mapping):
        return {**system.offsets, **offsets}
    return {s: float(offsets) for s in system.species_set}


# --------------------------------------------------------------------------
# simulation

def initial_density(system: SpinSystem, spec, seq: PulseSequence | None = None,
                    offsets: Mapping[str, float] | None = None) -> np.ndarray:
    st = _as_initial(spec)
    species = st.species or system.species_set[0]
    if st.kind == "single_spin":
        if not 0 <= st.spin < system.n_spins:
            raise ConfigurationError(f"spin index {st.spin} out of range")
        return sum(c * single_spin_operator(system.n_spins, st.spin, a)
                   for c, a in zip(st.axis, "xyz") if c) + np.zeros((system.dim,) * 2, complex)
    if st.kind == "along_locking_axis":
        from .effective import locking_field_at

        if seq is None:
            raise ConfigurationError("along_locking_axis needs a sequence")
        nu = (offsets or system.offsets).get(species, 0.0)
        ch = species if species in seq.channels else seq.channels[0]
        return vector_operator(system, locking_field_at(seq, nu, channel=ch).axis, species)
    vec = {"along_x": (1, 0, 0), "along_y": (0, 1, 0), "along_z": (0, 0, 1)}.get(st.kind, st.axis)
    return vector_operator(system, vec, species)


def _sample_steps(cfg: SimulationConfig, seqs):
    """Timeline whose ``_Acq`` markers sit at the requested sample points."""
    if cfg.sampling == "per_acquire":
        steps, end = build_timeline(seqs)
        if not any(isinstance(s, _Acq) for s in steps):
            raise ConfigurationError("sequence has no acquisition; use per_cycle sampling")
        return steps, end
    if cfg.sampling == "per_cycle":
        steps, end = build_timeline(seqs)
        return [s for s in steps if not isinstance(s, _Acq)] + [_Acq()], end
    k = int(cfg.sub_cycle_points)
    steps, end = build_timeline(seqs)
    pts = []
    for j in range(1, k + 1):
        p = round(end * j / k)
        if abs(p - end * j / k) > 1:
            raise ConfigurationError(f"sub-cycle point {j}/{k} is not on the time grid")
        pts.append(p)
    # free segments are split at sample points; rf segments must not be
    out, t, todo = [], 0, list(pts)
    for s in steps:
        if isinstance(s, _Acq):
            continue
        if not isinstance(s, _Free):
            out.append(s)
            continue
        n = round(s.duration / _TICK)
        start = t
        while todo and todo[0] < t + n:
            if todo[0] <= start:
                todo.pop(0)
                continue
            if s.rf:
                raise ConfigurationError("sub-cycle sample point falls inside a finite pulse")
            out.append(_Free((todo[0] - start) * _TICK, s.rf))
            out.append(_Acq())
            start = todo.pop(0)
        out.append(s if start == t else _Free((t + n - start) * _TICK, s.rf))
        t += n
        if todo and todo[0] == t:
            out.append(_Acq())
            todo.pop(0)
    return out, end


def _sample_offsets(steps, end):
    """Sample times within a cycle (ticks) for each ``_Acq`` marker."""
    t, out = 0, []
    for s in steps:
        if isinstance(s, _Free):
            t += round(s.duration / _TICK)
        elif isinstance(s, _Acq):
            out.append(t * _TICK)
    return out


def _observable_ops(system, species, per_spin):
    ops = []
    for s in species:
        for a in "xyz":
            ops.append(collective_operator(system, a, s))
    if per_spin:
        for s in species:
            for i in system.indices(s):
                for a in "xyz":
                    ops.append(single_spin_operator(system.n_spins, i, a))
    return ops


def _pack(system, species, per_spin, values, norm):
    vals = np.asarray(values).real / norm  # (n_samples, n_ops)
    obs, k = {}, 0
    for s in species:
        obs[s] = vals[:, k:k + 3]
        k += 3
    ps = None
    if per_spin:
        ps = {}
        for s in species:
            n = len(system.indices(s))
            ps[s] = vals[:, k:k + 3 * n].reshape(-1, n, 3)
            k += 3 * n
    return obs, ps


def _floquet_values(wins, rho0, ops, n_cycles):
    from scipy.linalg import schur

    u_c = np.eye(rho0.shape[0], dtype=complex)
    partial = []
    for w in wins[:-1]:
        u_c = w @ u_c
        partial.append(u_c.copy())
    u_c = wins[-1] @ u_c
    t, z = schur(u_c, output="complex")
    phases = np.angle(np.diag(t))
    rho_t = z.conj().T @ rho0 @ z
    l = np.arange(n_cycles)
    powers = np.exp(1j * np.outer(l, phases))  # u_a^l
    out = np.empty((n_cycles, len(partial), len(ops)), dtype=complex)
    for j, p in enumerate(partial):
        pz = p @ z
        for k, o in enumerate(ops):
            ot = pz.conj().T @ o @ pz
            m = rho_t * ot.T
            out[:, j, k] = np.einsum("la,ab,lb->l", powers, m, powers.conj(), optimize=True)
    return out.reshape(n_cycles * len(partial), len(ops))


def _direct_values(wins, rho0, ops, n_cycles, per_cycle_wins=None):
    rho = rho0.copy()
    vals = []
    for c in range(n_cycles):
        ws = per_cycle_wins(c) if per_cycle_wins is not None else wins
        for w in ws[:-1]:
            rho = w @ rho @ w.conj().T
            vals.append([np.vdot(o, rho) for o in ops])  # Tr(O rho) for Hermitian O
        w = ws[-1]
        rho = w @ rho @ w.conj().T
    return np.array(vals), rho


def run_simulation(cfg: SimulationConfig) -> Trajectory:
    """Exact propagation with constant offsets (or a schedule when given)."""
    if cfg.offset_schedule is not None:
        return run_offset_schedule(cfg)
    system = cfg.system
    seqs = cfg.channel_sequences
    steps, end = _sample_steps(cfg, seqs)
    t_c = end * _TICK
    offs = dict(system.offsets)
    props = Propagators(system)
    wins = window_unitaries(steps, props, offs)
    rho0 = initial_density(system, cfg.initial_state, cfg.primary, offs)
    norm = np.vdot(rho0, rho0).real
    if norm == 0:
        raise ConfigurationError("initial state is zero")
    species = cfg.observed_species
    ops = _observable_ops(system, species, cfg.per_spin)
    method = cfg.method
    if method == "auto":
        method = "floquet" if system.dim >= 64 and cfg.n_cycles > 8 else "direct"
    if method == "floquet":
        vals = _floquet_values(wins, rho0, ops, cfg.n_cycles)
    else:
        vals, _ = _direct_values(wins, rho0, ops, cfg.n_cycles)
    offsets_in_cycle = _sample_offsets(steps, end)
    times = np.array([c * t_c + a for c in range(cfg.n_cycles) for a in offsets_in_cycle])
    obs, ps = _pack(system, species, cfg.per_spin, vals, norm)
    init = {s: np.array([np.vdot(collective_operator(system, a, s), rho0).real / norm for a in "xyz"])
            for s in species}
    return Trajectory(times, obs, ps, init, _n_initialized(system, rho0))


def _n_initialized(system, rho0):
    # number of spin-equivalents in rho0: Tr(rho0^2) / (dim/4)
    return float(np.vdot(rho0, rho0).real / (system.dim / 4))


def run_two_species(cfg: SimulationConfig) -> Trajectory:
    """Synchronised driving of two species; reports both."""
    if len(cfg.channel_sequences) != 2:
        raise ConfigurationError("run_two_species needs sequences on exactly two channels")
    seqs = list(cfg.channel_sequences.values())
    if len({round(s.cycle_duration / _TICK) for s in seqs}) != 1 or len({s.tau for s in seqs}) != 1:
        raise ConfigurationError("unsynchronised timing between channels")
    centres = [_pulse_centres(s) for s in seqs]
    if len(centres[0]) != len(centres[1]) or any(abs(a - b) > 2 for a, b in zip(*centres)):
        raise ConfigurationError("unsynchronised timing: pulse centres differ between channels")
    return run_simulation(cfg)


def _pulse_centres(seq: PulseSequence) -> list[int]:
    t, out = 0.0, []
    for e in seq.events:
        d = e.duration(seq.tau)
        if e.is_pulse:
            out.append(round((t + d / 2) / _TICK))
        t += d
    return out


def run_offset_schedule(cfg: SimulationConfig) -> Trajectory:
    """Offsets follow ``cfg.offset_schedule``, held constant within each cycle.

    The schedule is evaluated at each cycle midpoint. ``recovered_polarization``
    is the ratio of ``|<I>|`` of the first observed species at the last and the
    first sample.
    """
    sched = cfg.offset_schedule
    system = cfg.system
    seqs = cfg.channel_sequences
    steps, end = _sample_steps(cfg, seqs)
    t_c = end * _TICK
    total = cfg.n_cycles * t_c
    if sched is None:
        sched = OffsetSchedule({s: [(0.0, system.offsets[s]), (total, system.offsets[s])]
                                for s in system.species_set})
    if sched.end < total * (1 - 1e-12):
        raise ConfigurationError(f"offset schedule ends at {sched.end:.6g} s, before the run ({total:.6g} s)")
    props = Propagators(system)
    cache: dict = {}

    def offs_of(c):
        return {**system.offsets, **sched.at((c + 0.5) * t_c)}

    def wins_of(c):
        o = offs_of(c)
        key = tuple(sorted(o.items()))
        if key not in cache:
            if len(cache) > 64:
                cache.clear()
            cache[key] = window_unitaries(steps, props, o)
        return cache[key]

    rho0 = initial_density(system, cfg.initial_state, cfg.primary, offs_of(0))
    norm = np.vdot(rho0, rho0).real
    species = cfg.observed_species
    ops = _observable_ops(system, species, cfg.per_spin)
    vals, _ = _direct_values(None, rho0, ops, cfg.n_cycles, wins_of)
    offsets_in_cycle = _sample_offsets(steps, end)
    times = np.array([c * t_c + a for c in range(cfg.n_cycles) for a in offsets_in_cycle])
    obs, ps = _pack(system, species, cfg.per_spin, vals, norm)
    init = {s: np.array([np.vdot(collective_operator(system, a, s), rho0).real / norm for a in "xyz"])
            for s in species}
    first = species[0]
    start = np.linalg.norm(init[first])
    rec = float(np.linalg.norm(obs[first][-1]) / start) if start > 0 else float("nan")
    nu_track = np.array([offs_of(c)[first] for c in range(cfg.n_cycles) for _ in offsets_in_cycle])
    return Trajectory(times, obs, ps, init, _n_initialized(system, rho0), rec, nu_track)


def per_spin_traces(cfg: SimulationConfig) -> Trajectory:
    st = _as_initial(cfg.initial_state)
    if st.kind != "single_spin":
        raise ConfigurationError("per_spin_traces expects a single_spin initial state")
    from dataclasses import replace

    return run_simulation(replace(cfg, per_spin=True))
