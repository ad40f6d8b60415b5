"""Run a simulation config and print a compact error-rate table.

    python scripts/run_simulation.py scripts/configs/table_s1_gaussian_N1000.toml --workers 4 -o results/s1

Writes ``<out>.csv`` and ``<out>.svg`` when ``-o`` is given.
"""
import argparse
import time
from dataclasses import replace
from pathlib import Path

from ebnpmle.dataio import atomic_write_text
from ebnpmle.simulator import bar_chart_svg, load_experiment_configs, run_suite


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--reps", type=int, default=None, help="override the reps in the config")
    ap.add_argument("-o", "--output", default=None, help="output stem")
    args = ap.parse_args()

    configs = load_experiment_configs(args.config, seed=args.seed)
    if args.reps is not None:
        configs = [replace(c, reps=args.reps) for c in configs]
    t0 = time.perf_counter()
    table = run_suite(configs, workers=args.workers)
    elapsed = time.perf_counter() - t0

    methods = list(dict.fromkeys(r["method"] for r in table.rows))
    print(f"{'scenario':<34}" + "".join(f"{m:>11}" for m in methods))
    seen = {}
    for r in table.rows:
        key = (r["N"], r["m"], r["delta"], r["noise"], r["rho"])
        seen.setdefault(key, {})[r["method"]] = r
    for (N, m, delta, noise, rho), cells in seen.items():
        label = f"N={N} m={m} d={delta} {noise}" + (f" rho={rho}" if noise in ("ar1", "exchangeable") else "")
        print(f"{label:<34}" + "".join(f"{cells[k]['mean_rate']:>11.4f}" if k in cells else f"{'-':>11}" for k in methods))
    print(f"elapsed {elapsed:.1f}s")

    if args.output:
        stem = Path(args.output)
        stem.parent.mkdir(parents=True, exist_ok=True)
        atomic_write_text(stem.with_suffix(".csv"), table.to_csv())
        atomic_write_text(stem.with_suffix(".svg"), bar_chart_svg(table))


if __name__ == "__main__":
    main()
