"""Polarization transfer between locked species and adiabatic offset sweeps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .effective import dip_predictions, locking_field, locking_field_at
from .engine import InitialState, OffsetSchedule, SimulationConfig, run_offset_schedule, run_two_species
from .sequence import PulseSequence
from .spinops import TWO_PI, ConfigurationError, SpinSystem


# --------------------------------------------------------------------------
# heteronuclear transfer

def locking_amplitude_hz(seq: PulseSequence, nu: float, channel: str | None = None) -> float:
    """``|delta| / 2 pi`` in Hz at offset ``nu``."""
    return abs(locking_field_at(seq, nu, channel=channel).amplitude) / TWO_PI


def matched_offset(seq_i: PulseSequence, nu_i: float, seq_s: PulseSequence, channel_i: str,
                   channel_s: str, span: float = 3000.0, n_grid: int = 61) -> float | None:
    """Offset of ``S`` closest to ``nu_i`` with ``|delta_S| = |delta_I|``.

    Scans ``nu_i +- span`` and refines sign changes with Brent's method;
    returns None when no match exists in the window.
    """
    target = locking_amplitude_hz(seq_i, nu_i, channel_i)

    def g(nu):
        return locking_amplitude_hz(seq_s, nu, channel_s) - target

    grid = np.linspace(nu_i - span, nu_i + span, n_grid)
    vals = np.array([g(x) for x in grid])
    roots = [float(x) for x, v in zip(grid, vals) if v == 0.0]
    for k in range(n_grid - 1):
        if vals[k] * vals[k + 1] < 0:
            roots.append(brentq(g, grid[k], grid[k + 1], xtol=1e-6))
    if not roots:
        return None
    return min(roots, key=lambda r: (abs(r - nu_i), r))


@dataclass
class TransferResult:
    nu_i: float
    nu_s: float
    delta_i_hz: float
    delta_s_hz: float
    times: np.ndarray
    polarization_s: np.ndarray
    polarization_i: np.ndarray

    @property
    def mismatch_hz(self) -> float:
        return abs(abs(self.delta_i_hz) - abs(self.delta_s_hz))

    @property
    def max_polarization_s(self) -> float:
        return float(self.polarization_s.max())

    def record(self) -> dict:
        return {"nu_i": self.nu_i, "nu_s": self.nu_s, "delta_i_hz": self.delta_i_hz,
                "delta_s_hz": self.delta_s_hz, "mismatch_hz": self.mismatch_hz,
                "max_polarization_s": self.max_polarization_s,
                "final_polarization_s": float(self.polarization_s[-1])}


def polarization_transfer(system: SpinSystem, seq_i: PulseSequence, seq_s: PulseSequence,
                          nu_i: float, nu_s: float, n_cycles: int = 400,
                          species_i: str = "H", species_s: str = "C") -> TransferResult:
    """Start with ``I`` along its locking axis and ``S`` unpolarized; record the
    per-spin polarization of both species once per cycle.

    ``seq_i`` and ``seq_s`` must be synchronized (same pulse centres).
    """
    for s in (species_i, species_s):
        if s not in system.species_set:
            raise ConfigurationError(f"species {s!r} absent from the system")
    sys_off = system.with_offsets(**{species_i: nu_i, species_s: nu_s})
    cfg = SimulationConfig(sys_off, {species_i: seq_i.on_channel(species_i),
                                     species_s: seq_s.on_channel(species_s)}, n_cycles,
                           initial_state=InitialState("along_locking_axis", species=species_i),
                           sampling="per_cycle")
    tr = run_two_species(cfg)
    n_i = len(system.indices(species_i))
    n_s = len(system.indices(species_s))
    return TransferResult(float(nu_i), float(nu_s), locking_amplitude_hz(seq_i, nu_i, species_i),
                          locking_amplitude_hz(seq_s, nu_s, species_s), tr.times,
                          tr.polarization(species_s, n_s), tr.polarization(species_i, n_i))


def max_polarization(system: SpinSystem, species_s: str = "C") -> float:
    """Spin-temperature bound ``N_I / (N_I + N_S)`` per ``S`` spin."""
    n = system.n_spins
    n_s = len(system.indices(species_s))
    return (n - n_s) / n


# --------------------------------------------------------------------------
# adiabatic offset sweeps

@dataclass
class RoundTrip:
    nu_start: float
    nu_turn: float
    n_cycles: int
    duration: float
    recovered: float
    times: np.ndarray
    magnitude: np.ndarray

    def record(self) -> dict:
        return {"nu_start": self.nu_start, "nu_turn": self.nu_turn, "n_cycles": self.n_cycles,
                "duration_s": self.duration, "recovered": self.recovered}


def adrf_round_trip(system: SpinSystem, seq: PulseSequence, nu_start: float, nu_turn: float,
                    n_cycles: int, species: str | None = None) -> RoundTrip:
    """Linear offset sweep ``nu_start -> nu_turn -> nu_start`` over ``n_cycles``.

    The state starts along the locking axis at ``nu_start``; ``recovered`` is
    ``|<I>|`` at the end divided by its initial value.
    """
    if n_cycles < 2:
        raise ConfigurationError("a round trip needs at least two cycles")
    sp = species or system.species[0]
    t_c = seq.cycle_duration
    total = n_cycles * t_c
    sched = OffsetSchedule({sp: [(0.0, nu_start), (total / 2, nu_turn), (total, nu_start)]})
    cfg = SimulationConfig(system.with_offsets(**{sp: nu_start}), seq, n_cycles,
                           initial_state=InitialState("along_locking_axis", species=sp),
                           sampling="per_cycle", offset_schedule=sched)
    tr = run_offset_schedule(cfg)
    return RoundTrip(float(nu_start), float(nu_turn), int(n_cycles), total,
                     float(tr.recovered_polarization), tr.times, tr.magnitude(sp))


@dataclass(frozen=True)
class RootChoice:
    nu_start: float
    active: float
    inert: float
    active_norm: float
    inert_norm: float


def pick_roots(seq: PulseSequence, system: SpinSystem, nu_start: float,
               nu_grid: np.ndarray | None = None, threshold: float = 0.05) -> RootChoice:
    """Nearest dipolar-active and dipolar-inert roots of the locking field.

    Roots come from the ``m = 0`` dip predictor; a root is active when the
    dressed dipolar norm exceeds ``threshold * ||D||``.
    """
    if nu_grid is None:
        half = 0.5 / seq.tau
        nu_grid = np.linspace(-half, half, 401)
    curve = locking_field(seq, np.asarray(nu_grid, dtype=float))
    dips = dip_predictions(seq, curve, 0, system=system, threshold=threshold)
    act = [d for d in dips if d.dipolar_active]
    ine = [d for d in dips if not d.dipolar_active]
    if not act or not ine:
        raise ConfigurationError("need at least one active and one inert root in the grid")
    a = min(act, key=lambda d: (abs(d.nu - nu_start), d.nu))
    i = min(ine, key=lambda d: (abs(d.nu - nu_start), d.nu))
    return RootChoice(float(nu_start), a.nu, i.nu, a.d_magnus_norm, i.d_magnus_norm)
