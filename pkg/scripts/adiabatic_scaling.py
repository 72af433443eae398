"""Final and peak infidelity of the canonical schedule against ramp duration."""
import argparse
import csv
import sys

import numpy as np

from bohmlab.config import ProtectiveConfig
from bohmlab.evolve import propagate
from bohmlab.protect import build_schedule
from bohmlab.spectral import eigenstates


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--times", type=float, nargs="+", default=[50.0, 100.0, 200.0, 400.0])
    ap.add_argument("--shape", default="sin2", choices=["sin2", "linear", "smoothstep"])
    ap.add_argument("--strength", type=float, default=0.05)
    args = ap.parse_args()

    base = ProtectiveConfig()
    rows = []
    for T in args.times:
        cfg = base.replace(ramp={"total_time": T, "shape": args.shape}, bump={"strength": args.strength})
        sched = build_schedule(cfg)
        phi = eigenstates(sched.base, 2).states[0]
        tr = propagate(phi, sched, cfg.numerics.dt, store_stride=cfg.numerics.store_stride)
        rows.append((T, tr.infidelities[-1], np.nanmax(tr.infidelities), tr.max_norm_drift()))
        print(f"T={T:g} done", file=sys.stderr)

    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["T", "final_infidelity", "peak_infidelity", "norm_drift", "ratio_to_next"])
    for i, (T, fin, peak, nd) in enumerate(rows):
        ratio = fin / rows[i + 1][1] if i + 1 < len(rows) else ""
        w.writerow([T, f"{fin:.6e}", f"{peak:.6e}", f"{nd:.2e}", f"{ratio:.3f}" if ratio != "" else ""])


if __name__ == "__main__":
    main()
