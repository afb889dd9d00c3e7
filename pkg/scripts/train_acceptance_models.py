"""Train (or verify cached) every run the acceptance suite needs.

Usage: python3 scripts/train_acceptance_models.py [run names...]
Runs go to tests/acceptance_runs/ (override with SPARSE_DBM_RUN_DIR).
"""
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

import acceptance_setup as A  # noqa: E402


def main(names):
    for name in names or list(A.RUNS):
        t0 = time.time()
        _, _, log = A.trained_run(name, verbose=True)
        acc = [r.train_acc for r in log if r.train_acc == r.train_acc]
        print(f"{name}: {len(log)} epochs, final train accuracy {acc[-1] if acc else float('nan'):.3f}, "
              f"{time.time() - t0:.0f} s", flush=True)


if __name__ == "__main__":
    main(sys.argv[1:])
