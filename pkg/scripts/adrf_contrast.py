"""Offset round trips through a dipolar-active and a dipolar-inert locking-field root."""

from _common import outdir, parser, write_csv
from dynlock.protocols import adrf_round_trip, pick_roots
from dynlock.sequence import builtin_dsl4
from dynlock.systems import builtin_system


def main():
    p = parser(__doc__.splitlines()[0], "adrf")
    p.add_argument("--system", default="cluster6")
    p.add_argument("--nu-start", type=float, default=19000.0)
    p.add_argument("--cycles", type=int, nargs="*", default=[100, 300, 1000])
    args = p.parse_args()
    out = outdir(args.out)
    seq = builtin_dsl4(20e-6)
    system = builtin_system(args.system)
    roots = pick_roots(seq, system, args.nu_start)
    print(f"active root {roots.active:.1f} Hz (|D_M| {roots.active_norm:.0f}), "
          f"inert root {roots.inert:.1f} Hz (|D_M| {roots.inert_norm:.0f})")
    rows = []
    for n in args.cycles:
        a = adrf_round_trip(system, seq, args.nu_start, roots.active, n)
        i = adrf_round_trip(system, seq, args.nu_start, roots.inert, n)
        rows.append([n, a.duration, a.recovered, i.recovered, a.recovered / i.recovered])
        print(f"{n:5d} cycles: active {a.recovered:.3f}  inert {i.recovered:.3f}  "
              f"ratio {a.recovered / i.recovered:.2f}")
    write_csv(out / "adrf.csv", ["cycles", "duration_s", "active", "inert", "ratio"], rows)


if __name__ == "__main__":
    main()
