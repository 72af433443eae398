"""Canonical protective run: writes the same files as `bohmlab protect` and prints the headline numbers."""
import argparse
from pathlib import Path

from bohmlab import config as cfgmod
from bohmlab.cli import write_protect_outputs
from bohmlab.output import emit_plot_script
from bohmlab.protect import run_protective


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=Path(__file__).resolve().parents[1] / "configs" / "canonical.toml")
    ap.add_argument("--out", default="results/canonical")
    args = ap.parse_args()

    cfg = cfgmod.load(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = write_protect_outputs(cfg, out, run_protective(cfg.protective()))
    emit_plot_script(out)

    for key in ("initial_interval_mass", "ensemble_interval_prob_time_avg", "fraction_never_entered",
                "max_occupancy_never_entered", "weakness_ratio", "min_fidelity", "final_infidelity",
                "max_norm_drift", "max_position_drift", "max_final_drift", "max_sup_difference",
                "max_quantile_drift"):
        print(f"{key:34s} {summary[key]}")
    print(f"files in {out}")


if __name__ == "__main__":
    main()
