"""Phase-1 block search on a 4-spin cluster followed by phase-2 protocol extension."""

from _common import INPUTS, outdir, parser, write_json
from dynlock.search import SearchStrategy, export_winners, phase1_search, phase2_extend, protocol_stats
from dynlock.sequence import parse_sequence, serialize
from dynlock.systems import builtin_system


def main():
    p = parser(__doc__.splitlines()[0], "search")
    p.add_argument("--tau", type=float, default=5e-6)
    p.add_argument("--nu-probe", type=float, default=200.0)
    p.add_argument("--depth", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    out = outdir(args.out)
    system = builtin_system("cluster4")
    strat = SearchStrategy("exhaustive", depth=args.depth, seed=args.seed)
    res = phase1_search(system, args.tau, args.nu_probe, n_max=args.depth, strategy=strat)
    print(f"WaHuHa F = {res.baseline.fidelity:.7f}; {len(res.winners)} winners")
    for c in res.winners[:5]:
        print(f"  F = {c.fidelity:.7f}  {' '.join(a or 'free' for a in c.actions)}")
    export_winners(out / "phase1", res.winners, strat, {"baseline": res.baseline.record()})

    blocks = [parse_sequence((INPUTS / n).read_text()) for n in ("block8.seq", "block8b.seq")]
    tau = blocks[0].tau
    p2 = phase2_extend(system, blocks, 48 * tau, 480 * tau, nu_probe=args.nu_probe)
    print(f"phase 2: reward {p2.projected_reward:.5f} vs naive repetition {p2.baseline_reward:.5f}; "
          f"actions {[a.label for a in p2.actions]}")
    (out / "protocol.seq").write_text(serialize(p2.protocol))
    full = protocol_stats([blocks[0]] * 67)
    write_json(out / "phase2.json", {**p2.record(), "reference_67_blocks": full.record()})


if __name__ == "__main__":
    main()
