"""Hellinger accuracy of the fitted marginal as N grows.

    python scripts/run_rate_check.py scripts/configs/rate_check.toml --workers 4
"""
import argparse
import math

from ebnpmle.simulator import load_rate_config, rate_experiment, rate_table_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("-o", "--output", default=None, help="csv file for the per-N summary")
    args = ap.parse_args()

    rows = rate_experiment(load_rate_config(args.config, seed=args.seed), workers=args.workers)
    print(f"{'N':>7} {'K':>5} {'median':>9} {'iqr':>9} {'sqrt(N)*median':>15} {'nonconv':>8}")
    for r in rows:
        print(f"{r.N:>7} {r.K:>5} {r.median:>9.5f} {r.iqr:>9.5f} {math.sqrt(r.N) * r.median:>15.4f} {r.nonconverged:>8}")
    # log-log slope across the whole range; about -1/2 up to log factors
    if len(rows) > 1:
        a, b = rows[0], rows[-1]
        print(f"slope {math.log(b.median / a.median) / math.log(b.N / a.N):.3f}")
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(rate_table_csv(rows))


if __name__ == "__main__":
    main()
