"""Operator algebra on the 2^N product space of spin-1/2 particles.

Operators are plain complex ``numpy`` arrays of shape ``(2**N, 2**N)``.
Spin 0 is the most significant tensor factor; basis bit ``0`` is spin up
(``I_z = +1/2``).

All Hamiltonians are stored in rad/s. Couplings and offsets enter in Hz and
are converted once, here.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

TWO_PI = 2.0 * np.pi
MAX_SPINS = 12

# rad s^-1 T^-1
GAMMA = {
    "H": 267.5221874e6,
    "C": 67.2828e6,
    "N": -27.116e6,
    "F": 251.815e6,
    "P": 108.394e6,
    "e": -1.76085963e11,
}

PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}
SPIN_HALF = {k: v / 2 for k, v in PAULI.items()}


class ConfigurationError(ValueError):
    """Invalid system, sequence or run configuration."""


class ContractViolation(ValueError):
    """A numerical precondition of an operation does not hold."""


class BranchAmbiguityWarning(RuntimeWarning):
    pass


@dataclass(frozen=True, eq=False)
class SpinSystem:
    """Cluster of spin-1/2 nuclei.

    Parameters
    ----------
    species : sequence of str
        Per-spin species label (``"H"``, ``"C"``, ...).
    dipolar : (N, N) array
        Homonuclear couplings D_ij in Hz. Only same-species pairs may be
        non-zero.
    j_couplings : (N, N) array, optional
        Heteronuclear secular couplings J_ij in Hz (``2 pi J I_z S_z``).
    offsets : mapping species -> Hz
        Frequency offsets in the (multiply) rotating frame.
    """

    species: tuple
    dipolar: np.ndarray
    j_couplings: np.ndarray = None
    offsets: Mapping[str, float] = field(default_factory=dict)
    max_spins: int = MAX_SPINS

    def __post_init__(self):
        species = tuple(self.species)
        n = len(species)
        if n == 0:
            raise ConfigurationError("a spin system needs at least one spin")
        if n > self.max_spins:
            raise ConfigurationError(f"{n} spins exceeds the cap of {self.max_spins}")
        object.__setattr__(self, "species", species)
        d = np.array(self.dipolar, dtype=float)
        if d.shape != (n, n):
            raise ConfigurationError(f"dipolar matrix must be {n}x{n}, got {d.shape}")
        j = np.zeros((n, n)) if self.j_couplings is None else np.array(self.j_couplings, dtype=float)
        if j.shape != (n, n):
            raise ConfigurationError(f"J matrix must be {n}x{n}, got {j.shape}")
        for name, m in (("dipolar", d), ("J", j)):
            if not np.allclose(m, m.T, atol=0):
                raise ConfigurationError(f"{name} matrix is not symmetric")
            if np.any(np.diag(m) != 0):
                raise ConfigurationError(f"{name} matrix has a non-zero diagonal")
        same = np.array([[a == b for b in species] for a in species])
        if np.any(d[~same] != 0):
            raise ConfigurationError("dipolar couplings given between different species")
        if np.any(j[same] != 0):
            raise ConfigurationError("J couplings given between like spins")
        offsets = {s: float(self.offsets.get(s, 0.0)) for s in self.species_set}
        unknown = set(self.offsets) - set(offsets)
        if unknown:
            raise ConfigurationError(f"offsets given for unknown species {sorted(unknown)}")
        d.setflags(write=False)
        j.setflags(write=False)
        object.__setattr__(self, "dipolar", d)
        object.__setattr__(self, "j_couplings", j)
        object.__setattr__(self, "offsets", offsets)

    @property
    def n_spins(self) -> int:
        return len(self.species)

    @property
    def dim(self) -> int:
        return 2**self.n_spins

    @property
    def species_set(self) -> tuple:
        """Distinct species in order of first appearance."""
        return tuple(dict.fromkeys(self.species))

    def indices(self, species: str | None = None) -> list[int]:
        if species is None:
            return list(range(self.n_spins))
        if species not in self.species_set:
            raise ConfigurationError(f"species {species!r} not present in system {self.species_set}")
        return [i for i, s in enumerate(self.species) if s == species]

    def with_offsets(self, **offsets: float) -> "SpinSystem":
        merged = dict(self.offsets)
        merged.update(offsets)
        return SpinSystem(self.species, self.dipolar, self.j_couplings, merged, self.max_spins)

    def scaled(self, dipolar: float = 1.0, j: float = 1.0) -> "SpinSystem":
        return SpinSystem(self.species, self.dipolar * dipolar, self.j_couplings * j,
                          self.offsets, self.max_spins)

    def without_couplings(self) -> "SpinSystem":
        return self.scaled(0.0, 0.0)

    @classmethod
    def homonuclear(cls, dipolar, species: str = "H", offset: float = 0.0) -> "SpinSystem":
        d = np.asarray(dipolar, dtype=float)
        return cls((species,) * d.shape[0], d, offsets={species: offset})

    def gamma_ratio(self, a: str, b: str) -> float:
        return abs(GAMMA[a] / GAMMA[b])


def _bits(n: int) -> np.ndarray:
    """(2**n, n) array of basis bits, spin 0 most significant."""
    states = np.arange(2**n)
    return (states[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1


def single_spin_operator(n: int, i: int, axis: str) -> np.ndarray:
    """I_axis acting on spin ``i`` of an ``n``-spin register."""
    left = np.eye(2**i)
    right = np.eye(2 ** (n - i - 1))
    return np.kron(np.kron(left, SPIN_HALF[axis]), right)


def collective_operator(system: SpinSystem, axis: str, species: str | None = None) -> np.ndarray:
    """Sum of ``I_axis`` over all spins, or over one species."""
    if axis not in SPIN_HALF:
        raise ConfigurationError(f"axis must be one of x, y, z; got {axis!r}")
    idx = system.indices(species)
    n = system.n_spins
    if axis == "z":
        bits = _bits(n)[:, idx]
        return np.diag((0.5 * len(idx) - bits.sum(axis=1)).astype(complex))
    out = np.zeros((system.dim, system.dim), dtype=complex)
    for i in idx:
        out += single_spin_operator(n, i, axis)
    return out


def vector_operator(system: SpinSystem, vec: Sequence[float], species: str | None = None) -> np.ndarray:
    """``v . I`` for a real 3-vector ``v``."""
    return sum(c * collective_operator(system, a, species) for c, a in zip(vec, "xyz") if c != 0) \
        + np.zeros((system.dim, system.dim), dtype=complex)


def _pair_hamiltonian(n: int, couplings: np.ndarray, flipflop: float) -> np.ndarray:
    """sum_{i<j} c_ij (I_z^i I_z^j + flipflop * (I_+^i I_-^j + I_-^i I_+^j))."""
    dim = 2**n
    bits = _bits(n)
    sz = 0.5 - bits
    out = np.zeros((dim, dim), dtype=complex)
    diag = np.zeros(dim)
    states = np.arange(dim)
    for i in range(n):
        for j in range(i + 1, n):
            c = couplings[i, j]
            if c == 0:
                continue
            diag += c * sz[:, i] * sz[:, j]
            if flipflop:
                differ = bits[:, i] != bits[:, j]
                mask = (1 << (n - 1 - i)) | (1 << (n - 1 - j))
                src = states[differ]
                out[src ^ mask, src] += c * flipflop
    out[states, states] += diag
    return out


def dipolar_hamiltonian(system: SpinSystem) -> np.ndarray:
    """Secular homonuclear dipolar Hamiltonian in rad/s.

    ``sum_{i<j} 2 pi D_ij (I_z I_z - (I_+ I_- + I_- I_+)/4)``
    """
    return _pair_hamiltonian(system.n_spins, TWO_PI * system.dipolar, -0.25)


def j_hamiltonian(system: SpinSystem) -> np.ndarray:
    """Heteronuclear secular coupling ``sum 2 pi J_ij I_z^i S_z^j`` in rad/s."""
    return _pair_hamiltonian(system.n_spins, TWO_PI * system.j_couplings, 0.0)


def interaction_hamiltonian(system: SpinSystem) -> np.ndarray:
    return dipolar_hamiltonian(system) + j_hamiltonian(system)


def offset_hamiltonian(system: SpinSystem, offsets: Mapping[str, float] | None = None) -> np.ndarray:
    """``sum_s 2 pi nu_s I_z(s)`` in rad/s (diagonal)."""
    offsets = system.offsets if offsets is None else {**system.offsets, **offsets}
    diag = np.zeros(system.dim)
    bits = _bits(system.n_spins)
    for i, s in enumerate(system.species):
        diag += TWO_PI * offsets[s] * (0.5 - bits[:, i])
    return np.diag(diag.astype(complex))


def is_hermitian(a: np.ndarray, rtol: float = 1e-12) -> bool:
    scale = max(np.abs(a).max(), 1e-300) if a.size else 1.0
    return np.abs(a - a.conj().T).max() <= rtol * scale


def is_unitary(u: np.ndarray, atol: float = 1e-9) -> bool:
    return np.abs(u.conj().T @ u - np.eye(u.shape[0])).max() <= atol


def _check_dim(a: np.ndarray):
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractViolation(f"operator must be square, got shape {a.shape}")
    d = a.shape[0]
    if d & (d - 1):
        raise ContractViolation(f"operator dimension {d} is not a power of two")


@dataclass(frozen=True)
class Eigensystem:
    """Cached Hermitian eigendecomposition used to exponentiate repeatedly."""

    values: np.ndarray
    vectors: np.ndarray

    @classmethod
    def of(cls, h: np.ndarray, check: bool = True) -> "Eigensystem":
        _check_dim(h)
        if check and not is_hermitian(h, 1e-10):
            raise ContractViolation("hermitian_expm requires a Hermitian operator")
        w, v = np.linalg.eigh(h)
        return cls(w, v)

    def expm(self, t: float) -> np.ndarray:
        """exp(-i t H)."""
        return (self.vectors * np.exp(-1j * t * self.values)) @ self.vectors.conj().T


def hermitian_expm(h: np.ndarray, t: float) -> np.ndarray:
    """Exact ``exp(-i t H)`` via eigendecomposition."""
    if t == 0:
        _check_dim(h)
        return np.eye(h.shape[0], dtype=complex)
    if np.count_nonzero(h - np.diag(np.diag(h))) == 0:
        d = np.diag(h)
        if np.abs(d.imag).max(initial=0) > 1e-10 * max(np.abs(d).max(), 1e-300):
            raise ContractViolation("hermitian_expm requires a Hermitian operator")
        return np.diag(np.exp(-1j * t * d.real))
    return Eigensystem.of(h).expm(t)


@dataclass(frozen=True)
class UnitaryLog:
    """Principal generator ``G`` with ``exp(-i G) = U``."""

    generator: np.ndarray
    phases: np.ndarray
    branch_ambiguous: bool


def unitary_logm(u: np.ndarray, atol: float = 1e-9) -> UnitaryLog:
    """Principal-branch Hermitian logarithm: returns G with exp(-iG) = U.

    Eigen-phases of ``G`` lie in (-pi, pi]. A phase within 1e-10 of pi is
    flagged, since then the branch choice is arbitrary.
    """
    from scipy.linalg import schur

    _check_dim(u)
    if not is_unitary(u, atol):
        raise ContractViolation("unitary_logm requires a unitary operator")
    t, z = schur(u, output="complex")
    ev = np.diag(t)
    ev = ev / np.abs(ev)
    # exp(-i g) = ev  ->  g = -angle(ev) in [-pi, pi); map -pi to +pi
    g = -np.angle(ev)
    g[g <= -np.pi] += 2 * np.pi
    ambiguous = bool(np.any(np.abs(np.abs(g) - np.pi) < 1e-10))
    if ambiguous:
        warnings.warn("eigen-phase at the branch cut of the matrix logarithm",
                      BranchAmbiguityWarning, stacklevel=2)
    gen = (z * g) @ z.conj().T
    gen = 0.5 * (gen + gen.conj().T)
    return UnitaryLog(gen, g, ambiguous)


def normalized_frobenius_norm(a: np.ndarray) -> float:
    """sqrt(Tr(A^dagger A) / dim)."""
    return float(np.sqrt(np.vdot(a, a).real / a.shape[0]))


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def rotation_2x2(axis: Sequence[float], angle: float) -> np.ndarray:
    """SU(2) element ``exp(-i angle n.sigma/2)`` for unit axis ``n``."""
    n = np.asarray(axis, dtype=float)
    gen = n[0] * SPIN_HALF["x"] + n[1] * SPIN_HALF["y"] + n[2] * SPIN_HALF["z"]
    return np.cos(angle / 2) * np.eye(2) - 2j * np.sin(angle / 2) * gen


def collective_rotation(system: SpinSystem, rotations: Mapping[str, np.ndarray]) -> np.ndarray:
    """Tensor product of per-species 2x2 unitaries (identity on absent species)."""
    eye = np.eye(2, dtype=complex)
    out = np.ones((1, 1), dtype=complex)
    for s in system.species:
        out = np.kron(out, rotations.get(s, eye))
    return out


def apply_local(op: np.ndarray, system: SpinSystem, rotations: Mapping[str, np.ndarray]) -> np.ndarray:
    """``R @ op`` for ``R = collective_rotation(system, rotations)`` without building R.

    Works on the row index of ``op`` (a matrix or a stack of column vectors).
    """
    n = system.n_spins
    tail = op.shape[1:]
    t = op.reshape((2,) * n + tail)
    for i, s in enumerate(system.species):
        r = rotations.get(s)
        if r is None:
            continue
        t = np.moveaxis(np.tensordot(r, t, axes=([1], [i])), 0, i)
    return t.reshape(op.shape)


def second_moment(system: SpinSystem, species: str | None = None) -> float:
    """Van Vleck second moment (rad/s)^2 of the homonuclear dipolar line.

    For ``H = sum b_ij (I_z I_z - (I_+I_- + I_-I_+)/4)`` with spin-1/2 the
    pair contributions are additive: ``M2 = (9/16) * sum_{i!=j} b_ij^2 / N``.
    """
    idx = system.indices(species)
    b = TWO_PI * system.dipolar[np.ix_(idx, idx)]
    return float(9.0 / 16.0 * np.sum(b**2) / len(idx))


def gaussian_linewidth(system: SpinSystem, species: str | None = None) -> float:
    """FWHM in Hz of the Gaussian line with the cluster's second moment."""
    return float(2.0 * np.sqrt(2.0 * np.log(2.0) * second_moment(system, species)) / TWO_PI)
