"""Weight recovery on the K=3 benchmark at several corpus sizes."""
import argparse
import csv
from pathlib import Path

import numpy as np

from hawkinfluence.experiments import recovery_trial


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("results/recovery"))
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--sizes", type=int, nargs="+", default=[500, 2000, 8000])
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    with open(args.out / "recovery.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["expected_events", "seed", "n_events", "median_abs_error", "max_abs_error", "passed"])
        for n in args.sizes:
            errs, passed = [], 0
            for seed in range(args.seeds):
                t = recovery_trial(seed, n)
                err = np.abs(t.estimate - t.truth)
                w.writerow([n, seed, t.n_events, np.median(err), err.max(), t.passed])
                errs.append(np.median(err))
                passed += t.passed
            print(f"N~{n}: median |W error| {np.median(errs):.4f}, within tolerance {passed}/{args.seeds}")


if __name__ == "__main__":
    main()
