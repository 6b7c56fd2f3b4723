"""Spectra, offset sweeps, simulated locking efficiency and AHT comparisons."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .effective import (
    MagnusConvergenceWarning, locking_field_at, locking_models,
    magnus_dipolar, magnus_offset_expansion, offset_magnus_hamiltonian_2x2,
    cycle_rotation_2x2,
)
from .engine import SimulationConfig, Trajectory, run_simulation
from .sequence import PulseSequence, serialize
from .spinops import SPIN_HALF, ConfigurationError, SpinSystem, normalized_frobenius_norm
from .systems import dump_system

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# spectra

@dataclass(frozen=True)
class Spectrum:
    """Magnitude spectrum of ``<I_x> + i<I_y>`` on a signed frequency axis."""

    freqs: np.ndarray
    magnitude: np.ndarray
    sampling_rate: float
    n_samples: int
    source: str = ""

    @property
    def bin_width(self) -> float:
        return self.sampling_rate / len(self.freqs)

    @property
    def resolution(self) -> float:
        """Natural (unpadded) resolution ``1/(N dt)``."""
        return self.sampling_rate / self.n_samples

    def peak_bin(self, band: tuple[float, float] | None = None) -> int:
        mag = self.magnitude
        if band is not None:
            mask = (self.freqs >= band[0]) & (self.freqs <= band[1])
            mag = np.where(mask, mag, -np.inf)
        return int(np.argmax(mag))

    def peak_frequency(self, band=None) -> float:
        return float(self.freqs[self.peak_bin(band)])

    def bin_of(self, f: float) -> int:
        return int(np.argmin(np.abs(self.freqs - f)))


def spectrum(traj_or_signal, dt: float | None = None, species: str | None = None,
             pad_factor: int = 4) -> Spectrum:
    """Rectangular-window FFT, zero-padded to the next power of two >= 4N.

    Magnitudes are divided by the number of samples, so a unit-amplitude tone
    peaks at 1.
    """
    if isinstance(traj_or_signal, Trajectory):
        t = traj_or_signal.times
        x = traj_or_signal.signal(species)
        if len(t) > 1:
            steps = np.diff(t)
            if np.ptp(steps) > 1e-9 * steps.mean():
                raise ConfigurationError("spectrum needs uniform sampling; use per_cycle sampling "
                                         "or a sequence with evenly spaced acquisitions")
            dt = float(steps.mean())
        source = "trajectory"
    else:
        x = np.asarray(traj_or_signal, dtype=complex)
        source = "signal"
    if dt is None or dt <= 0:
        raise ConfigurationError("spectrum needs a positive sampling interval")
    n = len(x)
    if n == 0:
        raise ConfigurationError("empty signal")
    nfft = 1 << max(0, math.ceil(math.log2(pad_factor * n)))
    spec = np.fft.fftshift(np.fft.fft(x, nfft)) / n
    freqs = np.fft.fftshift(np.fft.fftfreq(nfft, dt))
    return Spectrum(freqs, np.abs(spec), 1.0 / dt, n, source)


def alias(f: float, rate: float) -> float:
    """Fold ``f`` into ``[-rate/2, rate/2)``."""
    return float((f + rate / 2) % rate - rate / 2)


def cycle_envelope(traj: Trajectory, per_cycle: int, species: str | None = None) -> np.ndarray:
    """Mean in-plane magnitude ``|<I_x> + i<I_y>|`` over each cycle's samples."""
    m = np.abs(traj.signal(species))
    n = len(m) // per_cycle
    return m[: n * per_cycle].reshape(n, per_cycle).mean(axis=1)


def envelope_retention(traj: Trajectory, per_cycle: int, late_fraction: float = 0.1,
                       species: str | None = None) -> float:
    """Late-window mean envelope relative to the first cycle's envelope."""
    env = cycle_envelope(traj, per_cycle, species)
    k = max(1, int(round(late_fraction * len(env))))
    return float(env[-k:].mean() / env[0])


# --------------------------------------------------------------------------
# locking efficiency

@dataclass(frozen=True)
class LockingEfficiency:
    nu: float
    L_S: float
    delta_amplitude: float
    zero_delta: bool
    signal: float  # S_S: projection of an x start onto delta, times L_S


def locking_efficiency_sim(system: SpinSystem, seq: PulseSequence, nu: float, n_cycles: int = 256,
                           init_axis=(1.0, 0.0, 0.0), species: str | None = None,
                           method: str = "auto") -> LockingEfficiency:
    """Simulated L_S at one offset.

    The cluster starts along the locking axis and is sampled once per cycle.
    A component along ``delta`` is invariant under the cycle's collective
    rotation, so the locked amplitude sits in the zero-frequency bin of the
    projected signal ``<I>.delta_hat``; L_S is that bin's magnitude divided by
    the non-interacting value (which is 1). If ``t_c |delta|`` vanishes, L_S
    falls back to the terminal ``|<I>|`` fraction and ``zero_delta`` is set.
    """
    species = species or system.species_set[0]
    ch = species if species in seq.channels else seq.channels[0]
    f = locking_field_at(seq, nu, channel=ch)
    sysn = system.with_offsets(**{species: nu})
    cfg = SimulationConfig(sysn, seq, n_cycles, initial_state=_locking_init(species),
                           sampling="per_cycle", observe=[species], method=method)
    traj = run_simulation(cfg)
    obs = traj.observables[species]
    zero = abs(f.amplitude) * seq.cycle_duration < 1e-9
    if zero:
        ls = float(np.linalg.norm(obs[-1]))
    else:
        proj = obs @ f.axis
        ls = float(abs(proj.mean()))
    u = np.asarray(init_axis, float)
    u = u / np.linalg.norm(u)
    return LockingEfficiency(nu, ls, f.amplitude, zero, abs(float(f.axis @ u)) * ls)


def _locking_init(species):
    from .engine import InitialState

    return InitialState("along_locking_axis", species=species)


# --------------------------------------------------------------------------
# AHT breakdown

@dataclass(frozen=True)
class AHTComparison:
    nu: np.ndarray
    distance: np.ndarray  # (n_nu, n_orders) relative L2 gap of magnitude spectra
    exact_peak: np.ndarray  # Hz
    aht_peak: np.ndarray  # (n_nu, n_orders) Hz
    bin_width: float
    orders: tuple

    def peak_bin_gap(self) -> np.ndarray:
        return np.rint(np.abs(self.aht_peak - self.exact_peak[:, None]) / self.bin_width).astype(int)


def _stroboscopic_signal(u2: np.ndarray, n_cycles: int, rho0: np.ndarray) -> np.ndarray:
    out = np.empty(n_cycles, dtype=complex)
    plus = SPIN_HALF["x"] + 1j * SPIN_HALF["y"]
    norm = np.trace(rho0 @ rho0).real
    rho = rho0.astype(complex)
    for k in range(n_cycles):
        rho = u2 @ rho @ u2.conj().T
        out[k] = np.trace(rho @ plus) / norm
    return out


def aht_breakdown_compare(seq: PulseSequence, nu_grid: Sequence[float], orders=(0, 1, 2, 3),
                          n_cycles: int = 256, initial_axis: str = "y") -> AHTComparison:
    """Exact vs truncated-Magnus spectra of a non-interacting spin, sampled per cycle."""
    coeffs = magnus_offset_expansion(seq, max(orders))
    t_c = seq.cycle_duration
    rho0 = SPIN_HALF[initial_axis]
    nus = np.asarray(nu_grid, dtype=float)
    dist = np.zeros((len(nus), len(orders)))
    ex_pk = np.zeros(len(nus))
    ah_pk = np.zeros((len(nus), len(orders)))
    bw = None
    for i, nu in enumerate(nus):
        ex = spectrum(_stroboscopic_signal(cycle_rotation_2x2(seq, nu), n_cycles, rho0), t_c)
        bw = ex.bin_width
        ex_pk[i] = ex.peak_frequency()
        for j, m in enumerate(orders):
            h = offset_magnus_hamiltonian_2x2(coeffs, nu, seq.tau, m)
            w, v = np.linalg.eigh(h)
            u = (v * np.exp(-1j * t_c * w)) @ v.conj().T
            ah = spectrum(_stroboscopic_signal(u, n_cycles, rho0), t_c)
            dist[i, j] = np.linalg.norm(ex.magnitude - ah.magnitude) / np.linalg.norm(ex.magnitude)
            ah_pk[i, j] = ah.peak_frequency()
    return AHTComparison(nus, dist, ex_pk, ah_pk, bw, tuple(orders))


# --------------------------------------------------------------------------
# sweeps

@dataclass
class SweepPoint:
    nu: float
    record: dict
    spectrum: np.ndarray | None = None
    error: str | None = None


@dataclass
class SweepResult:
    nu_grid: np.ndarray
    points: list
    freqs: np.ndarray | None = None

    @property
    def L_S(self) -> np.ndarray:
        return np.array([p.record.get("L_S", np.nan) if p.error is None else np.nan for p in self.points])

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for p in self.points:
                rec = dict(p.record, nu_hz=p.nu)
                if p.error:
                    rec["error"] = p.error
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    def write_heatmap_csv(self, path) -> None:
        """Rows: offsets; columns: frequency bins (magnitude)."""
        if self.freqs is None:
            raise ConfigurationError("sweep carries no spectra")
        with open(path, "w") as fh:
            fh.write("nu_hz," + ",".join(repr(float(f)) for f in self.freqs) + "\n")
            for p in self.points:
                row = p.spectrum if p.spectrum is not None else np.full(len(self.freqs), np.nan)
                fh.write(repr(float(p.nu)) + "," + ",".join(repr(float(v)) for v in row) + "\n")


def _point_key(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=float)
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class SweepSpec:
    system: SpinSystem
    sequence: PulseSequence
    n_cycles: int = 256
    sampling: str = "per_acquire"
    initial_state: str = "along_x"
    locking_efficiency: bool = True
    effective_report: bool = True
    alpha: float = 2.0

    def payload(self, nu: float) -> dict:
        return {
            "version": __version__,
            "system": dump_system(self.system),
            "sequence": serialize(self.sequence),
            "n_cycles": self.n_cycles,
            "sampling": self.sampling,
            "initial_state": self.initial_state,
            "locking_efficiency": self.locking_efficiency,
            "effective_report": self.effective_report,
            "alpha": self.alpha,
            "nu": float(nu),
        }


def _evaluate_point(spec: SweepSpec, nu: float) -> tuple[dict, np.ndarray]:
    sysn = spec.system.with_offsets(**{s: nu for s in spec.system.species_set})
    traj = run_simulation(SimulationConfig(sysn, spec.sequence, spec.n_cycles,
                                           initial_state=spec.initial_state, sampling=spec.sampling))
    sp = spectrum(traj)
    rec = {"peak_hz": sp.peak_frequency(), "peak_magnitude": float(sp.magnitude.max()),
           "final_magnitude": float(traj.magnitude()[-1])}
    if spec.locking_efficiency:
        le = locking_efficiency_sim(spec.system, spec.sequence, nu, spec.n_cycles)
        rec.update(L_S=le.L_S, L_S_zero_delta=le.zero_delta, S_S=le.signal)
    if spec.effective_report:
        f = locking_field_at(spec.sequence, nu)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", MagnusConvergenceWarning)
            dm = normalized_frobenius_norm(magnus_dipolar(spec.sequence, spec.system, nu))
        mod = locking_models(f, dm, spec.alpha)
        rec.update(delta_amp_rad_s=f.amplitude, tilt_rad=f.tilt, d_magnus_norm=dm,
                   r=mod.r if math.isfinite(mod.r) else None, L_C=mod.L_C, S_C=mod.S_C)
    return rec, sp.magnitude


def _worker(args):
    spec, nu = args
    try:
        rec, mag = _evaluate_point(spec, nu)
        return nu, rec, mag, None
    except Exception as exc:  # recorded per point; the sweep continues
        return nu, {}, None, f"{type(exc).__name__}: {exc}"


def offset_sweep(spec: SweepSpec, nu_grid: Sequence[float], cache_dir=None, jobs: int = 1) -> SweepResult:
    """Evaluate every offset, reusing per-point results cached under ``cache_dir``."""
    nus = np.asarray(nu_grid, dtype=float)
    if np.any(np.diff(nus) < 0):
        raise ConfigurationError("nu grid must be sorted")
    cache = Path(cache_dir) if cache_dir else None
    if cache:
        cache.mkdir(parents=True, exist_ok=True)
    results: dict = {}
    todo = []
    for nu in nus:
        if cache:
            f = cache / f"{_point_key(spec.payload(nu))}.json"
            if f.exists():
                d = json.loads(f.read_text())
                results[float(nu)] = (d["record"], np.array(d["spectrum"]) if d["spectrum"] is not None else None,
                                      d.get("error"))
                continue
        todo.append(float(nu))
    log.info("sweep: %d cached, %d to compute", len(nus) - len(todo), len(todo))
    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            outs = list(ex.map(_worker, [(spec, nu) for nu in todo]))
    else:
        outs = [_worker((spec, nu)) for nu in todo]
    for nu, rec, mag, err in outs:
        results[nu] = (rec, mag, err)
        if cache and err is None:
            f = cache / f"{_point_key(spec.payload(nu))}.json"
            tmp = f.with_suffix(".tmp")
            tmp.write_text(json.dumps({"record": rec, "spectrum": None if mag is None else mag.tolist(),
                                       "error": err}))
            os.replace(tmp, f)
    points = [SweepPoint(float(nu), *results[float(nu)]) for nu in nus]
    freqs = None
    ok = next((p for p in points if p.spectrum is not None), None)
    if ok is not None:
        t_sample = _sample_interval(spec)
        freqs = np.fft.fftshift(np.fft.fftfreq(len(ok.spectrum), t_sample))
    return SweepResult(nus, points, freqs)


def _sample_interval(spec: SweepSpec) -> float:
    if spec.sampling == "per_cycle":
        return spec.sequence.cycle_duration
    t = spec.sequence.acquisition_times()
    return spec.sequence.cycle_duration / max(1, len(t))


def locking_efficiency_curve(system: SpinSystem, seq: PulseSequence, nu_grid, n_cycles: int = 256,
                             jobs: int = 1) -> np.ndarray:
    """L_S over a grid of offsets (no caching)."""
    args = [(system, seq, float(nu), n_cycles) for nu in nu_grid]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return np.array(list(ex.map(_ls_worker, args)))
    return np.array([_ls_worker(a) for a in args])


def _ls_worker(a):
    system, seq, nu, n = a
    return locking_efficiency_sim(system, seq, nu, n).L_S


def local_minima(values: Sequence[float]) -> list[int]:
    """Indices not exceeding their neighbours (endpoints compare to one side)."""
    v = np.asarray(values, dtype=float)
    out = []
    for i in range(len(v)):
        left = v[i - 1] if i > 0 else np.inf
        right = v[i + 1] if i + 1 < len(v) else np.inf
        if v[i] <= left and v[i] <= right:
            out.append(i)
    return out
