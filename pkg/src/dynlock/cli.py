"""Command-line front end.

Every subcommand writes its outputs into ``--out`` together with a
``manifest.json`` listing the resolved configuration, input hashes, tool
version, wall time and output files. Exit codes: 0 success, 2 usage,
3 parse or validation error, 4 numerical-contract violation.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import re
import sys
import time
import warnings
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .spinops import TWO_PI, ConfigurationError, ContractViolation

log = logging.getLogger("dynlock")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3, 4


class InputError(ConfigurationError):
    """Missing or unreadable input file."""


# --------------------------------------------------------------------------
# helpers

def parse_grid(text: str) -> np.ndarray:
    """``start:stop:count`` to an inclusive linear grid (Hz)."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigurationError(f"grid {text!r} must be start:stop:count")
    try:
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise ConfigurationError(f"grid {text!r}: {exc}") from exc
    if n < 1:
        raise ConfigurationError(f"grid {text!r}: count must be positive")
    if n == 1:
        return np.array([a])
    return np.linspace(a, b, n)


def parse_time(text: str) -> float:
    """Seconds from ``20u``, ``1.5m``, ``3e-6`` and similar."""
    from .sequence import _parse_time, _Tok

    return _parse_time(_Tok(text, 1, 1))


def _read_text(path: str) -> str:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"input file not found: {path}")
    return p.read_text()


class Inputs:
    """Tracks every file read so the manifest can hash it."""

    def __init__(self):
        self.hashes: dict[str, str] = {}

    def text(self, path: str) -> str:
        t = _read_text(path)
        self.hashes[str(path)] = hashlib.sha256(t.encode()).hexdigest()
        return t

    def sequence(self, ref: str, tau: float | None = None, channel: str | None = None):
        """A ``.seq`` file or ``builtin:dsl4`` / ``builtin:wahuha`` (needs ``tau``)."""
        from .sequence import builtin_dsl4, builtin_wahuha, parse_sequence

        if ref.startswith("builtin:"):
            name = ref.split(":", 1)[1]
            if tau is None:
                raise ConfigurationError(f"{ref} needs --tau")
            ch = channel or "H"
            if name == "dsl4":
                return builtin_dsl4(tau, channel=ch)
            if name == "wahuha":
                return builtin_wahuha(tau, channel=ch)
            raise ConfigurationError(f"unknown builtin sequence {name!r}; choose dsl4 or wahuha")
        text = self.text(ref)
        try:
            seq = parse_sequence(text)
        except ConfigurationError as exc:
            raise ConfigurationError(f"{ref}: {exc}") from exc
        if tau is not None:
            seq = seq.with_tau(tau)
        if channel is not None:
            seq = seq.on_channel(channel)
        return seq

    def system(self, ref: str):
        from .systems import load_system

        if ref.startswith("builtin:"):
            return load_system({"builtin": ref.split(":", 1)[1]})
        text = self.text(ref)
        try:
            return load_system(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{ref}: invalid JSON ({exc})") from exc
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise ConfigurationError(f"{ref}: {exc}") from exc
            raise ConfigurationError(f"{ref}: invalid system description ({exc})") from exc


class Outputs:
    def __init__(self, out_dir: str):
        self.dir = Path(out_dir)
        self.paths: list[str] = []

    def path(self, name: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        p = self.dir / name
        self.paths.append(str(p))
        return p

    def json(self, name: str, obj) -> Path:
        p = self.path(name)
        p.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
        return p

    def add(self, paths):
        self.paths.extend(str(p) for p in paths)


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.floating, float)):
        v = float(o)
        return v if np.isfinite(v) else None
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    return o


def _fmt(v: float) -> str:
    return repr(float(v))


def _with_offset(system, nu, species=None):
    sp = species or system.species[0]
    return system.with_offsets(**{sp: float(nu)})


# --------------------------------------------------------------------------
# subcommands

def cmd_simulate(args, inp: Inputs, out: Outputs) -> dict:
    from .analysis import spectrum
    from .engine import InitialState, SimulationConfig, run_simulation

    seq = inp.sequence(args.seq, args.tau)
    system, info = inp.system(args.system)
    sp = seq.channels[0]
    init = {"x": "along_x", "y": "along_y", "z": "along_z", "locking": "along_locking_axis"}[args.init]
    cfg = SimulationConfig(_with_offset(system, args.nu, sp), seq, args.cycles,
                           initial_state=InitialState(init, species=sp), sampling=args.sampling,
                           method=args.method)
    traj = run_simulation(cfg)
    traj.to_csv(out.path("trajectory.csv"))
    spec = spectrum(traj, species=sp)
    with open(out.path("spectrum.csv"), "w") as fh:
        fh.write("freq_hz,magnitude\n")
        for f, m in zip(spec.freqs, spec.magnitude):
            fh.write(f"{_fmt(f)},{_fmt(m)}\n")
    summary = {"peak_hz": spec.peak_frequency(), "peak_magnitude": float(spec.magnitude.max()),
               "bin_width_hz": spec.bin_width, "resolution_hz": spec.resolution,
               "n_samples": spec.n_samples, "system": info}
    out.json("summary.json", summary)
    print(f"peak {summary['peak_hz']:.1f} Hz (bin {spec.bin_width:.2f} Hz)")
    return {"system_info": info}


def cmd_sweep(args, inp: Inputs, out: Outputs) -> dict:
    from .analysis import SweepSpec, offset_sweep

    seq = inp.sequence(args.seq, args.tau)
    system, info = inp.system(args.system)
    grid = parse_grid(args.nu_range)
    spec = SweepSpec(system, seq, args.cycles, args.sampling, "along_x",
                     locking_efficiency=not args.no_locking_efficiency,
                     effective_report=not args.no_effective, alpha=args.alpha)
    res = offset_sweep(spec, grid, cache_dir=args.cache, jobs=args.jobs)
    res.write_jsonl(out.path("sweep.jsonl"))
    res.write_heatmap_csv(out.path("heatmap.csv"))
    n_err = sum(p.error is not None for p in res.points)
    print(f"{len(grid)} offsets, {n_err} failed")
    return {"system_info": info, "failed_points": n_err}


def cmd_locking_field(args, inp: Inputs, out: Outputs) -> dict:
    from .effective import locking_field

    seq = inp.sequence(args.seq, args.tau)
    grid = parse_grid(args.nu_range)
    curve = locking_field(seq, grid, channel=args.channel)
    rows = [{"nu_hz": f.nu, "amplitude_hz": f.amplitude / TWO_PI, "axis": f.axis, "tilt_rad": f.tilt,
             "branch_flag": f.branch_flag} for f in curve]
    out.json("locking_field.json", {"tau_s": seq.tau, "cycle_s": seq.cycle_duration,
                                    "period_hz": 1.0 / seq.tau, "points": rows})
    print(f"{len(rows)} points, period {1e-3 / seq.tau:.3f} kHz")
    return {}


def cmd_magnus(args, inp: Inputs, out: Outputs) -> dict:
    from .effective import magnus_offset_expansion, magnus_offset_oracle

    seq = inp.sequence(args.seq, args.tau)
    coeffs = magnus_offset_expansion(seq, args.order, channel=args.channel)
    rows = []
    for k, c in enumerate(coeffs):
        fr = [Fraction(float(v)).limit_denominator(1000) for v in c]
        rows.append({"order": k, "coefficients": c,
                     "rational": [f"{f.numerator}/{f.denominator}" if f.denominator != 1 else str(f.numerator)
                                  for f in fr]})
        print(f"order {k}: " + ", ".join(rows[-1]["rational"]))
    rec = {"convention": "H^(k) = coefficient . (I_x, I_y, I_z) * omega^(k+1) tau^k", "orders": rows}
    if args.oracle:
        orc = magnus_offset_oracle(seq, args.order, channel=args.channel)
        rec["oracle"] = orc
        rec["oracle_max_abs_diff"] = float(np.abs(orc - coeffs).max())
    out.json("magnus.json", rec)
    return {}


def cmd_dips(args, inp: Inputs, out: Outputs) -> dict:
    from .effective import dip_predictions, locking_field

    seq = inp.sequence(args.seq, args.tau)
    system = inp.system(args.system)[0] if args.system else None
    if args.nu_range:
        grid = parse_grid(args.nu_range)
    else:
        half = 0.5 / seq.tau
        grid = np.linspace(-half, half, 401)
    curve = locking_field(seq, grid, channel=args.channel)
    dips = dip_predictions(seq, curve, args.m_max, system=system, threshold=args.threshold)
    rows = [{"nu_hz": d.nu, "m": d.m, "residual": d.residual, "d_magnus_norm": d.d_magnus_norm,
             "dipolar_active": d.dipolar_active} for d in dips]
    out.json("dips.json", rows)
    print(f"{len(rows)} predicted dips")
    return {}


def cmd_search(args, inp: Inputs, out: Outputs) -> dict:
    from .search import SearchStrategy, export_winners, phase1_search, phase2_extend

    system, info = inp.system(args.system)
    strat = SearchStrategy(args.strategy, depth=args.depth, restarts=args.restarts,
                           iterations=args.iterations, temperature=args.temperature,
                           width=args.width, seed=args.seed)
    if args.phase == 1:
        if args.tau is None:
            raise ConfigurationError("phase-1 search needs --tau")
        res = phase1_search(system, args.tau, args.nu_probe, args.n_max, args.f_opt, strat,
                            top_k=args.top_k)
        out.add(export_winners(out.dir, res.winners, strat,
                               {"baseline_wahuha": res.baseline.record(), "f_opt": args.f_opt}))
        out.json("search.json", res.record())
        print(f"{len(res.winners)} winners; WaHuHa baseline F = {res.baseline.fidelity:.6f}; "
              f"best F = {res.best.fidelity if res.best else float('nan'):.6f}")
        return {"system_info": info}
    if not args.blocks:
        raise ConfigurationError("phase-2 search needs --blocks")
    blocks = [inp.sequence(b, args.tau) for b in args.blocks]
    tau = blocks[0].tau
    t_tgt = _time_or_tau(args.t_tgt, tau)
    t_pj = _time_or_tau(args.t_pj, tau)
    res = phase2_extend(system, blocks, t_tgt, t_pj, strat, nu_probe=args.nu_probe)
    from .sequence import serialize

    out.path("protocol.seq").write_text(serialize(res.protocol))
    out.json("search.json", res.record())
    print(f"projected reward {res.projected_reward:.6f} (baseline {res.baseline_reward:.6f}); "
          f"{res.stats.n_pulses} pulses, {res.stats.n_acquisitions} windows")
    return {"system_info": info}


def _time_or_tau(text: str, tau: float) -> float:
    if text.endswith("tau"):
        return float(text[:-3]) * tau
    return parse_time(text)


def cmd_transfer(args, inp: Inputs, out: Outputs) -> dict:
    from .protocols import matched_offset, max_polarization, polarization_transfer

    system, info = inp.system(args.system)
    si, ss = args.species_i, args.species_s
    seq_i = inp.sequence(args.seq_i, args.tau, si)
    seq_s = inp.sequence(args.seq_s, args.tau, ss)
    nu_s = args.nu_s
    if nu_s is None:
        nu_s = matched_offset(seq_i, args.nu_i, seq_s, si, ss)
        if nu_s is None:
            raise ConfigurationError("no matched S offset within 3 kHz; give --nu-s")
    res = polarization_transfer(system, seq_i, seq_s, args.nu_i, nu_s, args.cycles, si, ss)
    with open(out.path("transfer.csv"), "w") as fh:
        fh.write(f"t_s,p_{si},p_{ss}\n")
        for t, a, b in zip(res.times, res.polarization_i, res.polarization_s):
            fh.write(f"{_fmt(t)},{_fmt(a)},{_fmt(b)}\n")
    rec = res.record()
    rec["max_polarization_bound"] = max_polarization(system, ss)
    out.json("transfer.json", rec)
    print(f"nu_S = {nu_s:.1f} Hz, mismatch {res.mismatch_hz:.1f} Hz, max p_S {res.max_polarization_s:.3f}")
    return {"system_info": info}


def cmd_adrf(args, inp: Inputs, out: Outputs) -> dict:
    from .protocols import adrf_round_trip, pick_roots

    seq = inp.sequence(args.seq, args.tau)
    system, info = inp.system(args.system)
    roots = None
    if args.nu_turn is not None:
        turns = {"custom": args.nu_turn}
    else:
        roots = pick_roots(seq, system, args.nu_start)
        turns = {"active": roots.active, "inert": roots.inert}
    cycles = [int(c) for c in args.cycles.split(",")]
    rows = []
    with open(out.path("adrf.csv"), "w") as fh:
        fh.write("label,n_cycles,t_s,magnitude\n")
        for label, nu_t in turns.items():
            for n in cycles:
                rt = adrf_round_trip(system, seq, args.nu_start, nu_t, n)
                rows.append(dict(rt.record(), label=label))
                for t, m in zip(rt.times, rt.magnitude):
                    fh.write(f"{label},{n},{_fmt(t)},{_fmt(m)}\n")
                print(f"{label} turn {nu_t:.1f} Hz, {n} cycles: recovered {rt.recovered:.3f}")
    rec = {"round_trips": rows}
    if roots is not None:
        rec["roots"] = roots.__dict__
    out.json("adrf.json", rec)
    return {"system_info": info}


# --------------------------------------------------------------------------
# parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _time_arg(text):
    try:
        return parse_time(text)
    except ConfigurationError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dynlock", description="Spin-locking simulations and sequence analysis.")
    p.add_argument("--version", action="version", version=f"dynlock {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seq=True, system=True, system_required=True):
        sp.add_argument("--out", default=".", help="output directory (default: current)")
        sp.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                        help="worker processes (default: available cores)")
        sp.add_argument("-v", "--verbose", action="store_true")
        if seq:
            sp.add_argument("--seq", required=True, help=".seq file or builtin:dsl4 / builtin:wahuha")
            sp.add_argument("--tau", type=_time_arg, default=None, help="override tau, e.g. 20u")
        if system:
            sp.add_argument("--system", required=system_required,
                            help="system JSON or builtin:NAME (pentagons10, cluster6, cluster4, ch4)")

    s = sub.add_parser("simulate", help="trajectory and spectrum at one offset")
    common(s)
    s.add_argument("--nu", type=float, required=True, help="offset in Hz")
    s.add_argument("--cycles", type=int, default=256)
    s.add_argument("--sampling", choices=("per_acquire", "per_cycle"), default="per_acquire")
    s.add_argument("--init", choices=("x", "y", "z", "locking"), default="x")
    s.add_argument("--method", choices=("auto", "direct", "floquet"), default="auto")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="spectra, L_S and effective reports over an offset grid")
    common(s)
    s.add_argument("--nu-range", required=True, help="start:stop:count in Hz")
    s.add_argument("--cycles", type=int, default=256)
    s.add_argument("--sampling", choices=("per_acquire", "per_cycle"), default="per_acquire")
    s.add_argument("--cache", default=None, help="per-point cache directory")
    s.add_argument("--alpha", type=float, default=2.0)
    s.add_argument("--no-locking-efficiency", action="store_true")
    s.add_argument("--no-effective", action="store_true")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("locking-field", help="locking field over an offset grid")
    common(s, system=False)
    s.add_argument("--nu-range", required=True, help="start:stop:count in Hz")
    s.add_argument("--channel", default=None)
    s.set_defaults(func=cmd_locking_field)

    s = sub.add_parser("magnus", help="offset Magnus coefficients")
    common(s, system=False)
    s.add_argument("--order", type=int, default=3, choices=range(4))
    s.add_argument("--oracle", action="store_true", help="also evaluate the numerical oracle")
    s.add_argument("--channel", default=None)
    s.set_defaults(func=cmd_magnus)

    s = sub.add_parser("dips", help="predicted locking dips t_c delta = m pi")
    common(s, system_required=False)
    s.add_argument("--nu-range", default=None, help="start:stop:count in Hz (default +-1/(2 tau))")
    s.add_argument("--m-max", type=int, default=1)
    s.add_argument("--threshold", type=float, default=0.05)
    s.add_argument("--channel", default=None)
    s.set_defaults(func=cmd_dips)

    s = sub.add_parser("search", help="phase-1 block search or phase-2 protocol extension")
    common(s, seq=False)
    s.add_argument("--phase", type=int, choices=(1, 2), default=1)
    s.add_argument("--tau", type=_time_arg, default=None)
    s.add_argument("--nu-probe", type=float, default=200.0, help="probe offset in Hz")
    s.add_argument("--n-max", type=int, default=6)
    s.add_argument("--f-opt", type=float, default=0.999)
    s.add_argument("--top-k", type=int, default=10)
    s.add_argument("--strategy", choices=("exhaustive", "hill_climb", "beam"), default="exhaustive")
    s.add_argument("--depth", type=int, default=None)
    s.add_argument("--restarts", type=int, default=4)
    s.add_argument("--iterations", type=int, default=200)
    s.add_argument("--temperature", type=float, default=0.05)
    s.add_argument("--width", type=int, default=8)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--blocks", nargs="*", default=None, help="phase 2: block .seq files")
    s.add_argument("--t-tgt", default="48tau", help="phase 2: target duration, e.g. 804tau or 4m")
    s.add_argument("--t-pj", default="480tau", help="phase 2: projection time")
    s.set_defaults(func=cmd_search)

    s = sub.add_parser("transfer", help="heteronuclear polarization transfer")
    common(s, seq=False)
    s.add_argument("--seq-i", required=True)
    s.add_argument("--seq-s", required=True)
    s.add_argument("--tau", type=_time_arg, default=None)
    s.add_argument("--species-i", default="H")
    s.add_argument("--species-s", default="C")
    s.add_argument("--nu-i", type=float, required=True)
    s.add_argument("--nu-s", type=float, default=None, help="default: matched |delta_S| = |delta_I|")
    s.add_argument("--cycles", type=int, default=400)
    s.set_defaults(func=cmd_transfer)

    s = sub.add_parser("adrf", help="offset round trips through locking-field roots")
    common(s)
    s.add_argument("--nu-start", type=float, required=True)
    s.add_argument("--nu-turn", type=float, default=None,
                   help="turning offset; default: nearest active and inert roots")
    s.add_argument("--cycles", default="100,300,1000", help="comma-separated sweep lengths")
    s.set_defaults(func=cmd_adrf)
    return p


def _join_negative_values(argv: list[str]) -> list[str]:
    # argparse reads "-25000:25000:101" as an option; bind it to its flag
    out, i = [], 0
    while i < len(argv):
        a = argv[i]
        if (a.startswith("--") and "=" not in a and i + 1 < len(argv)
                and re.match(r"^-[0-9.]", argv[i + 1])):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
        else:
            out.append(a)
            i += 1
    return out


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(_join_negative_values(argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    inp, out = Inputs(), Outputs(args.out)
    t0 = time.perf_counter()
    status, error, extra = EXIT_OK, None, {}
    try:
        with warnings.catch_warnings():
            if not args.verbose:
                warnings.simplefilter("ignore", RuntimeWarning)
            extra = args.func(args, inp, out) or {}
    except ContractViolation as exc:
        status, error = EXIT_NUMERIC, f"numerical contract violation: {exc}"
    except np.linalg.LinAlgError as exc:
        status, error = EXIT_NUMERIC, f"numerical failure: {exc}"
    except (ConfigurationError, OSError) as exc:
        status, error = EXIT_INPUT, str(exc)
    if error:
        print(f"dynlock {args.command}: error: {error}", file=sys.stderr)
    config = {k: v for k, v in vars(args).items() if k not in ("func", "jobs", "verbose")}
    manifest = {
        "command": args.command,
        "argv": argv,
        "config": config,
        "input_sha256": inp.hashes,
        "version": __version__,
        "wall_time_s": time.perf_counter() - t0,
        "outputs": sorted(out.paths),
        "exit_code": status,
        "error": error,
        **extra,
    }
    try:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "manifest.json").write_text(
            json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        print(f"dynlock: could not write manifest: {exc}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
