"""Run the shipped presets and print a one-line summary of each check.

    python scripts/run_presets.py --out runs/ [preset ...]
"""
import argparse
import json
import time
from pathlib import Path

from cylch.experiment import PRESET_DIR, load_config, preset_path, run_scenario

# the headline number for each check
HEADLINE = {
    "dissipativity": ("plateau_spread", "alpha_hat", "fit_residual"),
    "uniqueness_probe": ("K_hat", "K_hat_recentered", "linearization_gap"),
    "smoothing_probe": ("slope", "bound_ratio_slope"),
    "separation_probe": ("delta_hat", "f_Linf_max"),
    "energy_identity": ("ratios",),
    "mass_balance": ("max_violation",),
    "absorbing": ("entry_times",),
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("presets", nargs="*")
    ap.add_argument("--out", default="runs")
    args = ap.parse_args()
    names = args.presets or sorted(p.stem for p in PRESET_DIR.glob("*.cfg"))
    for name in names:
        t0 = time.perf_counter()
        out = Path(args.out) / name
        status = run_scenario(load_config(preset_path(name)), out)
        report = json.loads((out / "report.json").read_text())
        print(f"{name}: {'PASS' if status == 0 else 'FAIL'} ({time.perf_counter() - t0:.0f} s)")
        for e in report["checks"]:
            keys = HEADLINE.get(e["name"], ())
            vals = ", ".join(f"{k}={e['measured'][k]}" for k in keys if k in e["measured"])
            print(f"  {'ok ' if e['pass'] else 'BAD'} {e['name']}: {vals}")
        if report["error"]:
            print(f"  error: {report['error']}")


if __name__ == "__main__":
    main()
