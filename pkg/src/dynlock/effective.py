"""Toggling frames, offset-dressed dipolar operators and the locking field.

For ideal pulses the cycle propagator factorises as
``U(t_c) = prod_k exp(-i tau_k Dt_k) * prod_k Q_k`` where
``Q_k = exp(-i omega tau_k I'_{z,k})`` are collective rotations and
``Dt_k`` are the toggling-frame interactions dressed by the rotations that
follow them. ``prod Q_k = exp(-i t_c delta . I)`` defines the locking field.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import expm as _expm

from .sequence import PulseSequence, validate_cyclic
from .spinops import (
    SPIN_HALF, TWO_PI, BranchAmbiguityWarning, ConfigurationError, ContractViolation, Eigensystem,
    SpinSystem, apply_local, collective_rotation, commutator,
    interaction_hamiltonian, normalized_frobenius_norm, rotation_2x2, unitary_logm,
    vector_operator,
)

_SIGMA = [2 * SPIN_HALF[a] for a in "xyz"]


class MagnusConvergenceWarning(RuntimeWarning):
    pass


def su2_vector(op2: np.ndarray) -> np.ndarray:
    """Components v with ``op2 = v . sigma/2`` for a traceless 2x2 operator."""
    return np.array([np.trace(op2 @ s).real for s in _SIGMA])


def su2_axis_angle(u: np.ndarray) -> tuple[float, np.ndarray]:
    """Rotation angle in [0, pi] and unit axis of an SU(2)/U(2) element.

    ``u ~ exp(-i angle axis.sigma/2)`` up to global phase; at angle 0 the axis
    defaults to z.
    """
    det = np.linalg.det(u)
    v = u / np.sqrt(det)
    c = np.clip(np.trace(v).real / 2, -1.0, 1.0)
    s = np.array([(1j * np.trace(v @ sig)).real / 2 for sig in _SIGMA])
    # v = cos(a/2) - i sin(a/2) n.sigma, a in [0, 2pi]
    half = math.atan2(np.linalg.norm(s), c)
    angle = 2 * half
    ns = np.linalg.norm(s)
    axis = s / ns if ns > 1e-300 else np.array([0.0, 0.0, 1.0])
    if angle > np.pi:
        angle = 2 * np.pi - angle
        axis = -axis
    return angle, axis


# --------------------------------------------------------------------------
# toggling frames

@dataclass(frozen=True)
class IntervalFrame:
    """Free-evolution interval in the 2x2 picture: length (tau units) and
    the toggled z axis per species."""

    k: int
    length: float
    axes: Mapping[str, np.ndarray]


def interval_frames(seq: PulseSequence, species: Sequence[str] | None = None) -> list[IntervalFrame]:
    """Merge consecutive delays into intervals; record toggled I_z axes.

    Channels map to species by name. A species without a channel sees no
    pulses.
    """
    if seq.has_finite_pulses:
        raise ConfigurationError("toggling frames are defined for ideal (delta) pulses only")
    species = tuple(species) if species is not None else seq.channels
    acc = {s: np.eye(2, dtype=complex) for s in species}
    frames: list[IntervalFrame] = []
    open_frame = False
    for e in seq.events:
        if e.kind == "delay":
            if e.length == 0:
                continue
            if open_frame:
                last = frames[-1]
                frames[-1] = IntervalFrame(last.k, last.length + e.length, last.axes)
            else:
                axes = {}
                for s, a in acc.items():
                    t = a.conj().T
                    axes[s] = su2_vector(t @ SPIN_HALF["z"] @ t.conj().T)
                frames.append(IntervalFrame(len(frames) + 1, e.length, axes))
                open_frame = True
        elif e.is_pulse:
            if e.channel in acc:
                acc[e.channel] = e.rotation() @ acc[e.channel]
            open_frame = False
    return frames


def _require_cyclic(seq: PulseSequence):
    cyc = validate_cyclic(seq)
    if not cyc.is_cyclic:
        raise ContractViolation(f"sequence is not cyclic (residual {cyc.residual:.3g})")


@dataclass(frozen=True, eq=False)
class TogglingFrame:
    k: int
    length: float
    axes: Mapping[str, np.ndarray]
    Iz_toggled: Mapping[str, np.ndarray]
    D_toggled: np.ndarray
    D_dressed: np.ndarray
    Q: np.ndarray
    Q_factors: Mapping[str, np.ndarray]


def _toggling_rotations(seq: PulseSequence, system: SpinSystem):
    """Per-interval full-space toggling transforms T_k = A_k^{-1}."""
    acc = {s: np.eye(2, dtype=complex) for s in system.species_set}
    out = []
    open_frame = False
    for e in seq.events:
        if e.kind == "delay" and e.length:
            if open_frame:
                out[-1][1] += e.length
            else:
                out.append([{s: a.conj().T for s, a in acc.items()}, e.length])
                open_frame = True
        elif e.is_pulse:
            if e.channel in acc:
                acc[e.channel] = e.rotation() @ acc[e.channel]
            open_frame = False
    return out


def _offsets(system: SpinSystem, nu) -> dict:
    if nu is None:
        return dict(system.offsets)
    if isinstance(nu, Mapping):
        return {**system.offsets, **nu}
    return {s: float(nu) for s in system.species_set}


def toggling_frames(seq: PulseSequence, system: SpinSystem, nu=None) -> list[TogglingFrame]:
    """Toggling-frame and offset-dressed operators for every interval.

    ``nu`` is a per-species mapping in Hz, a scalar applied to every species,
    or ``None`` to use the system's own offsets.
    """
    raw = _frame_blocks(seq, system, nu)
    frames = []
    acc = np.eye(system.dim, dtype=complex)
    for idx in range(len(raw) - 1, -1, -1):
        length, axes, d, local = raw[idx]
        q = collective_rotation(system, local)
        acc = acc @ q  # Q_n ... Q_k
        dressed = acc @ d @ acc.conj().T
        iz = {s: vector_operator(system, axes[s], s) for s in system.species_set}
        frames.append(TogglingFrame(idx + 1, length, axes, iz, d, dressed, q, local))
    return frames[::-1]


def _frame_blocks(seq: PulseSequence, system: SpinSystem, nu) -> list:
    """``(length, toggled z axes, D_k, per-species 2x2 factors of Q_k)`` per interval."""
    _require_cyclic(seq)
    if seq.has_finite_pulses:
        raise ConfigurationError("toggling frames are defined for ideal (delta) pulses only")
    offsets = _offsets(system, nu)
    h_int = interaction_hamiltonian(system)
    out = []
    for rots, length in _toggling_rotations(seq, system):
        # T H T^dagger with T the collective rotation
        d = apply_local(apply_local(h_int, system, rots).conj().T, system, rots).conj().T
        axes, local = {}, {}
        for s in system.species_set:
            t = rots[s]
            axes[s] = su2_vector(t @ SPIN_HALF["z"] @ t.conj().T)
            # offset term is a sum of one-spin generators, so its propagator factorizes
            local[s] = rotation_2x2(axes[s] / np.linalg.norm(axes[s]),
                                    TWO_PI * offsets[s] * length * seq.tau)
        out.append((length, axes, d, local))
    return out


def factorized_cycle(seq: PulseSequence, system: SpinSystem, nu=None):
    """(U_D, U_Q) with ``U(t_c) = U_D @ U_Q``."""
    frames = toggling_frames(seq, system, nu)
    ud = _dressed_cycle_propagator(system, [(f.length, f.D_toggled, f.Q_factors) for f in frames], seq.tau)
    uq = np.eye(system.dim, dtype=complex)
    for f in frames:
        uq = f.Q @ uq
    return ud, uq


# --------------------------------------------------------------------------
# locking field

@dataclass(frozen=True)
class LockingField:
    nu: float
    amplitude: float
    axis: np.ndarray
    branch_flag: bool = False

    @property
    def tilt(self) -> float:
        """Angle of the axis from +z, radians."""
        return float(np.arccos(np.clip(self.axis[2], -1, 1)))

    @property
    def vector(self) -> np.ndarray:
        return self.amplitude * self.axis

    @property
    def magnitude(self) -> float:
        return abs(self.amplitude)


def cycle_rotation_2x2(seq: PulseSequence, nu: float, channel: str | None = None,
                       tau: float | None = None) -> np.ndarray:
    """Non-interacting single-spin cycle propagator (2x2) on one channel.

    Ideal pulses: product of the Q_k (the pulse product is the identity for
    cyclic sequences). Finite pulses: exact product including nutation under
    offset.
    """
    channel = channel or seq.channels[0]
    tau = seq.tau if tau is None else tau
    w = TWO_PI * nu
    if not seq.has_finite_pulses:
        u = np.eye(2, dtype=complex)
        for f in interval_frames(seq, [channel]):
            u = rotation_2x2(f.axes[channel], w * f.length * tau) @ u
        return u
    u = np.eye(2, dtype=complex)
    hz = w * SPIN_HALF["z"]
    for e in seq.events:
        if e.kind == "delay" and e.length:
            u = rotation_2x2([0, 0, 1], w * e.length * tau) @ u
        elif e.is_pulse:
            if e.channel != channel:
                continue
            if e.width == 0:
                u = e.rotation() @ u
            else:
                w1 = TWO_PI * e.nutation_hz
                h = hz + w1 * (e.axis[0] * SPIN_HALF["x"] + e.axis[1] * SPIN_HALF["y"])
                u = _expm(-1j * e.width * h) @ u
    return u


def order0_direction(seq: PulseSequence, channel: str | None = None) -> np.ndarray:
    channel = channel or seq.channels[0]
    if seq.has_finite_pulses:
        # finite-pulse sequences: fall back on the ideal-pulse skeleton
        from dataclasses import replace
        seq = PulseSequence([replace(e, width=0.0) if e.is_pulse else e for e in seq.events],
                            seq.tau, seq.channels)
    v = sum((f.length * f.axes[channel] for f in interval_frames(seq, [channel])), np.zeros(3))
    n = np.linalg.norm(v)
    return v / n if n > 1e-12 else np.array([0.0, 0.0, 1.0])


_IDENTITY_ANGLE = 1e-12


def _principal_field(seq, nu, channel, tau, t_c):
    angle, axis = su2_axis_angle(cycle_rotation_2x2(seq, nu, channel, tau))
    return angle / t_c, axis, abs(angle - np.pi) < 1e-10


def _is_identity(amp, t_c):
    return abs(amp) * t_c < _IDENTITY_ANGLE


def _continue(amp, axis, prev_amp, prev_axis, period):
    """Pick sign and 2pi/t_c branch closest to the previous point."""
    if np.dot(axis, prev_axis) < 0:
        axis, amp = -axis, -amp
    k = np.round((prev_amp - amp) / period)
    return amp + k * period, axis


def locking_field(seq: PulseSequence, nu_grid: Sequence[float], tau: float | None = None,
                  channel: str | None = None) -> list[LockingField]:
    """Signed, continuity-unwrapped locking field along a frequency grid.

    The grid is anchored at the point of smallest |nu|; the axis sign there
    follows the zeroth-order average field, and every other point takes the
    sign and 2pi/t_c branch nearest its neighbour towards the anchor.
    """
    tau = seq.tau if tau is None else tau
    seq = seq.with_tau(tau) if tau != seq.tau else seq
    _require_cyclic(seq)
    t_c = seq.cycle_duration
    if t_c <= 0:
        raise ConfigurationError("sequence has zero duration")
    nus = np.asarray(nu_grid, dtype=float)
    if nus.size == 0:
        return []
    if np.any(np.diff(nus) <= 0) and nus.size > 1:
        raise ConfigurationError("nu grid must be strictly increasing")
    period = TWO_PI / t_c
    ref = order0_direction(seq, channel)
    raw = [_principal_field(seq, v, channel, tau, t_c) for v in nus]
    out: list = [None] * len(nus)
    i0 = int(np.argmin(np.abs(nus)))
    amp, axis, flag = raw[i0]
    if _is_identity(amp, t_c):
        amp, axis = 0.0, ref
    elif np.dot(axis, ref) < 0:
        axis, amp = -axis, -amp
    out[i0] = LockingField(float(nus[i0]), float(amp), axis, flag)
    for direction in (1, -1):
        prev = out[i0]
        j = i0 + direction
        while 0 <= j < len(nus):
            a, ax, fl = raw[j]
            if _is_identity(a, t_c):
                # identity cycle: the axis is undefined, keep the neighbour's
                a, ax = 0.0, prev.axis
            if prev.amplitude == 0.0:
                if np.dot(ax, prev.axis) < 0:
                    ax, a = -ax, -a
            else:
                a, ax = _continue(a, ax, prev.amplitude, prev.axis, period)
            out[j] = LockingField(float(nus[j]), float(a), ax, fl)
            prev = out[j]
            j += direction
    return out


def locking_field_at(seq: PulseSequence, nu: float, near: LockingField | None = None,
                     channel: str | None = None) -> LockingField:
    """Single-point locking field, continued from ``near`` when given."""
    t_c = seq.cycle_duration
    a, ax, fl = _principal_field(seq, nu, channel, seq.tau, t_c)
    if _is_identity(a, t_c):
        a, ax = 0.0, (near.axis if near is not None else order0_direction(seq, channel))
    if near is not None and near.amplitude != 0.0:
        a, ax = _continue(a, ax, near.amplitude, near.axis, TWO_PI / t_c)
    elif np.dot(ax, (near.axis if near is not None else order0_direction(seq, channel))) < 0:
        ax, a = -ax, -a
    return LockingField(float(nu), float(a), ax, fl)


def locking_operator(system: SpinSystem, fields: Mapping[str, LockingField]) -> np.ndarray:
    """``sum_s delta_s . I_s`` in rad/s."""
    out = np.zeros((system.dim, system.dim), dtype=complex)
    for s, f in fields.items():
        out += vector_operator(system, f.vector, s)
    return out


# --------------------------------------------------------------------------
# Magnus expansions

def _series_mult(a, b, order):
    c = np.zeros_like(a)
    for i in range(order + 1):
        for j in range(order + 1 - i):
            c[i + j] += a[i] @ b[j]
    return c


def magnus_offset_expansion(seq: PulseSequence, order: int = 3, channel: str | None = None) -> np.ndarray:
    """Offset Magnus terms of a non-interacting, ideal-pulse cycle.

    Returns ``c`` of shape (order+1, 3) with the order-m term equal to
    ``tau^m omega^(m+1) (c[m] . I)``. Computed exactly by multiplying the
    truncated power series of each ``Q_k`` in ``phi = omega tau`` and taking
    the truncated series logarithm.
    """
    if order > 3:
        raise ConfigurationError("offset Magnus terms are supported up to order 3")
    if order < 0:
        raise ConfigurationError("order must be non-negative")
    _require_cyclic(seq)
    channel = channel or seq.channels[0]
    frames = interval_frames(seq, [channel])
    total = sum(f.length for f in frames)
    if total == 0:
        raise ConfigurationError("sequence has no free evolution")
    p = order + 1
    u = np.zeros((p + 1, 2, 2), dtype=complex)
    u[0] = np.eye(2)
    for f in frames:
        a = -1j * f.length * (f.axes[channel][0] * SPIN_HALF["x"] + f.axes[channel][1] * SPIN_HALF["y"]
                              + f.axes[channel][2] * SPIN_HALF["z"])
        e = np.zeros_like(u)
        term = np.eye(2, dtype=complex)
        for j in range(p + 1):
            e[j] = term / math.factorial(j)
            term = term @ a
        u = _series_mult(e, u, p)
    x = u.copy()
    x[0] -= np.eye(2)
    log = np.zeros_like(u)
    power = x.copy()
    for m in range(1, p + 1):
        log += ((-1) ** (m + 1) / m) * power
        power = _series_mult(power, x, p)
    # i log U = t_c H_M = sum_j g_j phi^j, t_c = total * tau
    return np.array([su2_vector(1j * log[m + 1]) / total for m in range(p)])


def magnus_offset_oracle(seq: PulseSequence, order: int = 3, channel: str | None = None,
                         phi_max: float = 0.08, degree: int = 18) -> np.ndarray:
    """Independent check of :func:`magnus_offset_expansion`.

    Samples the exact 2x2 matrix logarithm on a Chebyshev ladder of
    ``phi = omega tau`` and reads the Taylor coefficients off a polynomial
    fit.
    """
    channel = channel or seq.channels[0]
    total = sum(f.length for f in interval_frames(seq, [channel]))
    k = np.arange(degree + 1)
    phis = phi_max * np.cos(np.pi * (k + 0.5) / (degree + 1))
    g = []
    for phi in phis:
        nu = phi / (TWO_PI * seq.tau)
        angle, axis = su2_axis_angle(cycle_rotation_2x2(seq, nu, channel))
        g.append(angle * axis)
    g = np.array(g)
    # sign continuity: principal angle is in [0, pi], fine for small phi; the
    # axis flips with sign(phi), so fix orientation by the order-0 direction
    ref = order0_direction(seq, channel)
    for i, phi in enumerate(phis):
        if np.dot(g[i], ref) * np.sign(phi) < 0:
            g[i] = -g[i]
    coef = np.polynomial.chebyshev.chebfit(phis / phi_max, g, degree)
    poly = np.array([np.polynomial.chebyshev.cheb2poly(coef[:, c]) for c in range(3)]).T
    out = np.zeros((order + 1, 3))
    for m in range(order + 1):
        if m + 1 < len(poly):
            out[m] = poly[m + 1] / phi_max ** (m + 1) / total
    return out


def offset_magnus_hamiltonian_2x2(coeffs: np.ndarray, nu: float, tau: float, upto: int) -> np.ndarray:
    """2x2 ``sum_{m<=upto} tau^m omega^(m+1) c_m . I`` in rad/s."""
    w = TWO_PI * nu
    v = sum(tau**m * w ** (m + 1) * coeffs[m] for m in range(upto + 1))
    return sum(v[i] * SPIN_HALF[a] for i, a in enumerate("xyz"))


_SAME_BLOCK_RTOL = 1e-12


def _dressed_cycle_propagator(system: SpinSystem, blocks, tau: float) -> np.ndarray:
    """``prod_k exp(-i tau_k Dt_k)`` from ``(length, D_k, Q_k factors)`` blocks.

    With ``Dt_k = A_k D_k A_k^dagger`` and ``A_k = Q_n ... Q_k`` the product
    telescopes to ``Q_n E_n ... Q_1 E_1 U_Q^dagger`` with ``E_k = exp(-i tau_k D_k)``,
    so only the ``E_k`` are dense. Toggled interactions repeat within a cycle
    up to rounding, and each distinct one is diagonalized once.
    """
    u = np.eye(system.dim, dtype=complex)
    uq = {s: np.eye(2, dtype=complex) for s in system.species_set}
    seen: list[tuple[np.ndarray, Eigensystem]] = []
    for length, d, local in blocks:
        tol = _SAME_BLOCK_RTOL * max(np.abs(d).max(), 1e-300)
        eig = next((e for d0, e in seen if np.abs(d0 - d).max() <= tol), None)
        if eig is None:
            eig = Eigensystem.of(d)
            seen.append((d, eig))
        u = apply_local(eig.expm(length * tau) @ u, system, local)
        uq = {s: local[s] @ uq[s] for s in uq}
    return apply_local(u.conj().T, system, uq).conj().T


def magnus_dipolar(seq: PulseSequence, system: SpinSystem, nu=None,
                   frames: list[TogglingFrame] | None = None) -> np.ndarray:
    """Cycle-averaged dressed interaction ``(i/t_c) log prod exp(-i tau_k Dt_k)``."""
    if frames is None:
        blocks = [(length, d, local) for length, _, d, local in _frame_blocks(seq, system, nu)]
    else:
        blocks = [(f.length, f.D_toggled, f.Q_factors) for f in frames]
    t_c = seq.cycle_duration
    # the norm is unitarily invariant, so ||Dt_k|| = ||D_k||
    worst = max((t_c * normalized_frobenius_norm(d) for _, d, _ in blocks), default=0.0)
    if worst > 0.1:
        warnings.warn(f"t_c*||D'|| = {worst:.3g} exceeds 0.1; Magnus average may be inaccurate",
                      MagnusConvergenceWarning, stacklevel=2)
    u = _dressed_cycle_propagator(system, blocks, seq.tau)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BranchAmbiguityWarning)
        log = unitary_logm(u, atol=1e-8)
    if log.branch_ambiguous:
        raise ContractViolation("dipolar cycle propagator has an eigen-phase at pi; "
                                "reduce tau so the Magnus average stays on the principal branch")
    return log.generator / t_c


def bch_effective(seq: PulseSequence, system: SpinSystem, nu=None, bch_order: int = 2,
                  d_magnus: np.ndarray | None = None) -> np.ndarray:
    """Effective cycle Hamiltonian from ``exp(-i t_c D_M) exp(-i t_c delta.I)``.

    Order 0: ``delta.I + D_M``; order 1 adds ``(i t_c/2)[delta.I, D_M]``;
    order 2 adds ``-(t_c^2/12)([delta.I,[delta.I,D_M]] + [D_M,[D_M,delta.I]])``.
    """
    if not 0 <= bch_order <= 2:
        raise ConfigurationError("bch_order must be 0, 1 or 2")
    offsets = _offsets(system, nu)
    dm = d_magnus if d_magnus is not None else magnus_dipolar(seq, system, offsets)
    fields = {s: locking_field_at(seq, offsets[s], channel=s)
              for s in system.species_set}
    delta = locking_operator(system, fields)
    t_c = seq.cycle_duration
    h = delta + dm
    if bch_order >= 1:
        h = h + 0.5j * t_c * commutator(delta, dm)
    if bch_order >= 2:
        h = h - t_c**2 / 12 * (commutator(delta, commutator(delta, dm)) + commutator(dm, commutator(dm, delta)))
    return 0.5 * (h + h.conj().T)


def phase_insensitive_distance(u: np.ndarray, v: np.ndarray) -> float:
    """min_phi ||u - e^{i phi} v||_F / sqrt(dim)."""
    ov = np.vdot(v, u)
    ph = ov / abs(ov) if abs(ov) > 0 else 1.0
    return float(np.linalg.norm(u - ph * v) / np.sqrt(u.shape[0]))


# --------------------------------------------------------------------------
# locking models and dips

@dataclass(frozen=True)
class LockingModel:
    r: float
    L_C: float
    S_C: float


def locking_models(delta: LockingField, d_magnus_norm: float, alpha: float,
                   init_axis: Sequence[float] = (1.0, 0.0, 0.0)) -> LockingModel:
    """``r = ||D_M||/|delta|``, ``L_C = 1/(1+r^alpha)``, ``S_C = |delta_hat.u| L_C``."""
    if alpha <= 0:
        raise ConfigurationError("alpha must be positive")
    amp = abs(delta.amplitude)
    if amp == 0:
        return LockingModel(math.inf, 0.0, 0.0)
    r = d_magnus_norm / amp
    lc = 1.0 / (1.0 + r**alpha)
    u = np.asarray(init_axis, dtype=float)
    u = u / np.linalg.norm(u)
    return LockingModel(r, lc, abs(float(np.dot(delta.axis, u))) * lc)


def fit_alpha(r: Sequence[float], l_s: Sequence[float], bounds=(0.05, 20.0)) -> float:
    """Least-squares steepness so that 1/(1+r^alpha) tracks simulated L_S."""
    from scipy.optimize import minimize_scalar

    r = np.asarray(r, dtype=float)
    l_s = np.asarray(l_s, dtype=float)
    ok = np.isfinite(r) & np.isfinite(l_s) & (r > 0)
    r, l_s = r[ok], l_s[ok]
    if r.size == 0:
        raise ConfigurationError("no finite points to fit alpha")

    def loss(log_a):
        return float(np.sum((1.0 / (1.0 + r ** np.exp(log_a)) - l_s) ** 2))

    res = minimize_scalar(loss, bounds=np.log(bounds), method="bounded")
    return float(np.exp(res.x))


@dataclass(frozen=True)
class Dip:
    nu: float
    m: int
    residual: float
    d_magnus_norm: float | None = None
    dipolar_active: bool | None = None


def dip_predictions(seq: PulseSequence, curve: Sequence[LockingField], m_max: int = 1,
                    system: SpinSystem | None = None, threshold: float = 0.05,
                    tol: float = 1e-9) -> list[Dip]:
    """Offsets where ``t_c delta(nu) = m pi`` for ``|m| <= m_max``.

    Brackets sign changes along the signed curve and bisects on the exact
    locking field. With a ``system`` each root is labelled dipolar-active
    when ``||D_M||`` there exceeds ``threshold * ||D||``.
    """
    t_c = seq.cycle_duration
    out = []
    if len(curve) == 0:
        return out
    base = None
    if system is not None:
        base = normalized_frobenius_norm(interaction_hamiltonian(system))
    for m in range(-m_max, m_max + 1):
        target = m * np.pi
        g = [t_c * f.amplitude - target for f in curve]
        on_grid = [abs(v) < 1e-9 for v in g]
        for i in range(len(curve)):
            if on_grid[i]:
                if i > 0 and on_grid[i - 1]:
                    continue
                out.append(_dip(seq, curve[i], m, abs(g[i]), system, base, threshold))
                continue
            if i + 1 < len(curve) and not on_grid[i + 1] and g[i] * g[i + 1] < 0:
                lo, hi = curve[i], curve[i + 1]
                # discard branch jumps masquerading as crossings
                if abs(g[i] - g[i + 1]) > np.pi:
                    continue
                glo = g[i]
                for _ in range(200):
                    mid = 0.5 * (lo.nu + hi.nu)
                    f = locking_field_at(seq, mid, lo)
                    gm = t_c * f.amplitude - target
                    if gm == 0 or hi.nu - lo.nu < tol * max(1.0, abs(mid)):
                        break
                    if np.sign(gm) == np.sign(glo):
                        lo, glo = f, gm
                    else:
                        hi = f
                out.append(_dip(seq, f, m, abs(gm), system, base, threshold))
    out.sort(key=lambda d: (d.nu, d.m))
    return out


def _dip(seq, f, m, residual, system, base, threshold):
    if system is None:
        return Dip(f.nu, m, residual)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MagnusConvergenceWarning)
        dm = normalized_frobenius_norm(magnus_dipolar(seq, system, f.nu))
    return Dip(f.nu, m, residual, dm, bool(dm > threshold * base))


@dataclass
class EffectiveReport:
    nu: float
    delta: LockingField
    d_magnus_norm: float
    model: LockingModel

    def record(self) -> dict:
        return {
            "nu_hz": self.nu,
            "delta_amp_rad_s": self.delta.amplitude,
            "tilt_rad": self.delta.tilt,
            "d_magnus_norm": self.d_magnus_norm,
            "r": self.model.r if math.isfinite(self.model.r) else None,
            "L_C": self.model.L_C,
            "S_C": self.model.S_C,
        }


def effective_reports(seq: PulseSequence, system: SpinSystem, nu_grid: Sequence[float],
                      alpha: float = 2.0, init_axis=(1.0, 0.0, 0.0)) -> list[EffectiveReport]:
    curve = locking_field(seq, nu_grid)
    out = []
    for f in curve:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", MagnusConvergenceWarning)
            dm = normalized_frobenius_norm(magnus_dipolar(seq, system, f.nu))
        out.append(EffectiveReport(f.nu, f, dm, locking_models(f, dm, alpha, init_axis)))
    return out
