"""Dual-method gap (ODE vs quantile) on the non-adiabatic schedule under repeated joint refinement."""
import argparse

from bohmlab.cli import dual_method_errors, lemma_config, refined_config
from bohmlab.config import RunConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--levels", type=int, default=3, help="number of resolutions, each 2x finer")
    args = ap.parse_args()

    pcfg = lemma_config(RunConfig())
    prev = None
    print(f"{'n':>6} {'dt':>9} {'max sup |x_ode - x_q|':>22} {'max quantile drift':>19} {'ratio':>6}")
    for level in range(args.levels):
        cfg = refined_config(pcfg, 2**level) if level else pcfg
        _, sup, drift, _ = dual_method_errors(cfg)
        ratio = f"{prev / sup.max():6.2f}" if prev else ""
        print(f"{cfg.grid.n:6d} {cfg.numerics.dt:9.2e} {sup.max():22.3e} {drift.max():19.3e} {ratio}")
        prev = sup.max()


if __name__ == "__main__":
    main()
