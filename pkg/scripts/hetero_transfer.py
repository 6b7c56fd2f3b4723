"""1H to 13C transfer under synchronized DSL-4 across matched and mismatched offsets."""

import numpy as np

from _common import INPUTS, outdir, parser, write_csv, write_json
from dynlock.protocols import matched_offset, max_polarization, polarization_transfer
from dynlock.sequence import parse_sequence
from dynlock.systems import heteronuclear_cluster


def main():
    p = parser(__doc__.splitlines()[0], "transfer")
    p.add_argument("--cycles", type=int, default=400)
    p.add_argument("--nu-h", type=float, nargs="*", default=[-8000.0, -4000.0, -2000.0, 2000.0, 4000.0, 8000.0])
    p.add_argument("--detune", type=float, nargs="*", default=[0.0, 300.0, 1000.0, 3000.0],
                   help="offsets added to the matched 13C offset, Hz")
    args = p.parse_args()
    out = outdir(args.out)
    system = heteronuclear_cluster()
    h = parse_sequence((INPUTS / "dsl4_h_6us.seq").read_text())
    c = parse_sequence((INPUTS / "dsl4_c_6us.seq").read_text())
    rows, recs = [], []
    for nu_h in args.nu_h:
        nu_c0 = matched_offset(h, nu_h, c, "H", "C")
        if nu_c0 is None:
            print(f"no match near {nu_h} Hz")
            continue
        for dd in args.detune:
            tr = polarization_transfer(system, h, c, nu_h, nu_c0 + dd, args.cycles)
            recs.append(tr.record())
            rows.append([nu_h, nu_c0 + dd, tr.mismatch_hz, tr.max_polarization_s])
            print(f"nu_H {nu_h:8.0f}  nu_C {nu_c0 + dd:9.1f}  mismatch {tr.mismatch_hz:7.1f} Hz  "
                  f"max p_C {tr.max_polarization_s:.3f}")
            np.savetxt(out / f"p_c_{int(nu_h)}_{int(dd)}.csv",
                       np.column_stack([tr.times, tr.polarization_s, tr.polarization_i]),
                       delimiter=",", header="t_s,p_C,p_H", comments="")
    write_csv(out / "transfer_summary.csv", ["nu_h", "nu_c", "mismatch_hz", "max_p_c"], rows)
    write_json(out / "transfer.json", {"max_polarization": max_polarization(system), "runs": recs})


if __name__ == "__main__":
    main()
