"""Cluster geometries and the JSON system description.

Couplings from coordinates follow ``D_ij = kappa / r_ij^3`` (no angular
factor) for like spins and ``J_ij = kappa (gamma_S/gamma_I) / r_ij^3`` for
unlike pairs, where ``kappa`` is either the physical prefactor or chosen so
that the Gaussian linewidth of the first species hits a target.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .spinops import GAMMA, ConfigurationError, SpinSystem, gaussian_linewidth

# D (Hz) of two protons 1 nm apart: mu0/(4 pi) hbar gamma_H^2 / (2 pi)
KAPPA_H_HZ_NM3 = 120.1e3


def couplings_from_coordinates(species, coords_nm, kappa: float = KAPPA_H_HZ_NM3,
                               reference: str | None = None):
    """(D, J) matrices in Hz for ``kappa`` in Hz nm^3 referenced to ``reference``
    (default: the first species)."""
    x = np.asarray(coords_nm, dtype=float)
    species = tuple(species)
    n = len(species)
    if x.shape != (n, 3):
        raise ConfigurationError(f"coordinates must have shape ({n}, 3)")
    ref = reference or species[0]
    d = np.zeros((n, n))
    j = np.zeros((n, n))
    for a in range(n):
        for b in range(a + 1, n):
            r = np.linalg.norm(x[a] - x[b])
            if r <= 0:
                raise ConfigurationError(f"spins {a} and {b} coincide")
            if species[a] == species[b]:
                g = abs(GAMMA[species[a]] / GAMMA[ref]) ** 2
                d[a, b] = d[b, a] = kappa * g / r**3
            else:
                g = abs(GAMMA[species[a]] * GAMMA[species[b]]) / GAMMA[ref] ** 2
                j[a, b] = j[b, a] = kappa * g / r**3
    return d, j


def system_from_coordinates(species, coords_nm, linewidth_hz: float | None = None,
                            kappa: float | None = None, offsets=None):
    """Build a system, scaling ``kappa`` to ``linewidth_hz`` when given.

    Returns ``(system, kappa)``.
    """
    species = tuple(species)
    k0 = KAPPA_H_HZ_NM3 if kappa is None else float(kappa)
    d, j = couplings_from_coordinates(species, coords_nm, k0)
    sys0 = SpinSystem(species, d, j, offsets or {})
    if linewidth_hz is not None:
        lw = gaussian_linewidth(sys0, species[0])
        if lw == 0:
            raise ConfigurationError("cannot scale a cluster without like-spin couplings to a linewidth")
        scale = linewidth_hz / lw
        return sys0.scaled(scale, scale), k0 * scale
    return sys0, k0


def stacked_pentagons(radius_nm: float = 0.25, spacing_nm: float = 0.22, twist_deg: float = 36.0):
    """Ten sites on two parallel pentagons, the upper one twisted."""
    pts = []
    for layer, z in enumerate((0.0, spacing_nm)):
        off = np.deg2rad(twist_deg) * layer
        for k in range(5):
            a = 2 * np.pi * k / 5 + off
            pts.append((radius_nm * np.cos(a), radius_nm * np.sin(a), z))
    return np.array(pts)


# irregular fixed clusters: no exact symmetry, so no accidental degeneracies
CLUSTER6_NM = np.array([
    [0.000, 0.000, 0.000],
    [0.178, 0.012, 0.031],
    [0.071, 0.183, -0.042],
    [-0.112, 0.121, 0.135],
    [0.151, 0.170, 0.197],
    [-0.043, -0.147, 0.168],
])

CLUSTER4_NM = np.array([
    [0.000, 0.000, 0.000],
    [0.181, 0.021, 0.013],
    [0.058, 0.176, -0.031],
    [0.047, 0.069, 0.192],
])

# one 13C with four 1H, slightly distorted tetrahedron, 0.2-0.3 nm C-H
CH4_CLUSTER_NM = np.array([
    [0.000, 0.000, 0.000],
    [0.160, 0.150, 0.145],
    [-0.150, -0.170, 0.150],
    [-0.155, 0.160, -0.140],
    [0.170, -0.150, -0.165],
])


def builtin_system(name: str, linewidth_hz: float = 5500.0, offsets=None) -> SpinSystem:
    """Named clusters: ``pentagons10``, ``cluster6``, ``cluster4``."""
    geoms = {"pentagons10": stacked_pentagons(), "cluster6": CLUSTER6_NM, "cluster4": CLUSTER4_NM}
    if name not in geoms:
        raise ConfigurationError(f"unknown builtin system {name!r}; choose from {sorted(geoms)}")
    x = geoms[name]
    return system_from_coordinates(("H",) * len(x), x, linewidth_hz, offsets=offsets)[0]


def heteronuclear_cluster(linewidth_hz: float = 3000.0, j_hz: float | None = 200.0,
                          offsets=None) -> SpinSystem:
    """Four 1H and one 13C (spin 0).

    The H-H couplings follow the geometry scaled to ``linewidth_hz``; the C-H
    couplings follow the same geometry and are then rescaled so the largest
    equals ``j_hz`` (``None`` keeps the geometric value).
    """
    species = ("C", "H", "H", "H", "H")
    d, j = couplings_from_coordinates(species, CH4_CLUSTER_NM, reference="H")
    sys0 = SpinSystem(species, d, j)
    scale = linewidth_hz / gaussian_linewidth(sys0, "H")
    d = d * scale
    j = j * scale if j_hz is None else j * (j_hz / np.abs(j).max())
    return SpinSystem(species, d, j, offsets or {})


# --------------------------------------------------------------------------
# JSON description

def load_system(path_or_dict) -> tuple[SpinSystem, dict]:
    """Parse a system description.

    Keys: ``species`` (list), and either ``coordinates_nm`` (with optional
    ``linewidth_hz`` and ``kappa_hz_nm3``) or ``dipolar_hz`` (with optional
    ``j_hz``); optional ``offsets_hz``. Alternatively ``builtin`` names one of
    ``pentagons10``, ``cluster6``, ``cluster4`` or ``ch4`` (one 13C, four 1H;
    ``j_max_hz`` sets the largest C-H coupling), with optional ``linewidth_hz``.
    """
    if isinstance(path_or_dict, (str, Path)):
        try:
            spec = json.loads(Path(path_or_dict).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path_or_dict}: invalid JSON ({exc})") from exc
    else:
        spec = dict(path_or_dict)
    offsets = spec.get("offsets_hz", {})
    info: dict = {}
    if "builtin" in spec:
        if spec["builtin"] == "ch4":
            sys = heteronuclear_cluster(spec.get("linewidth_hz", 3000.0), spec.get("j_max_hz", 200.0), offsets)
        else:
            sys = builtin_system(spec["builtin"], spec.get("linewidth_hz", 5500.0), offsets)
        info["builtin"] = spec["builtin"]
    elif "coordinates_nm" in spec:
        if "species" not in spec:
            raise ConfigurationError("system description needs 'species'")
        sys, kappa = system_from_coordinates(spec["species"], spec["coordinates_nm"],
                                             spec.get("linewidth_hz"), spec.get("kappa_hz_nm3"), offsets)
        info["kappa_hz_nm3"] = kappa
    elif "dipolar_hz" in spec:
        species = spec.get("species") or ["H"] * len(spec["dipolar_hz"])
        sys = SpinSystem(species, spec["dipolar_hz"], spec.get("j_hz"), offsets)
    else:
        raise ConfigurationError("system description needs 'builtin', 'coordinates_nm' or 'dipolar_hz'")
    info["linewidth_hz"] = gaussian_linewidth(sys, sys.species[0]) if np.any(sys.dipolar) else 0.0
    return sys, info


def dump_system(system: SpinSystem) -> dict:
    return {
        "species": list(system.species),
        "dipolar_hz": system.dipolar.tolist(),
        "j_hz": system.j_couplings.tolist(),
        "offsets_hz": dict(system.offsets),
    }
