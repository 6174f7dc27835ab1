#!/usr/bin/env python3
# run_lab.py
"""
Entry script for the forecasting lab.

Usage:
  python run_lab.py generate-mso --nodes 8 --steps 400 --seed 7 --out data/mso8
  python run_lab.py partition --in data/mso8 --patches 2 --seed 7
  python run_lab.py train --data data/mso8 --config configs/tgmm_default.json --threads 1
  python run_lab.py gradcheck --module all
"""
import os
import pathlib
import sys

# Ensure repo root on sys.path so imports work when running the file directly
REPO_ROOT = pathlib.Path(__file__).resolve().parent
if str(REPO_ROOT) not in sys.path:
    sys.path.insert(0, str(REPO_ROOT))


def _pin_blas_threads(argv):
    """BLAS thread pools are sized when numpy loads, so --threads must land in the env first."""
    threads = os.getenv("TGMM_THREADS")
    for i, arg in enumerate(argv):
        if arg == "--threads" and i + 1 < len(argv):
            threads = argv[i + 1]
        elif arg.startswith("--threads="):
            threads = arg.split("=", 1)[1]
    if threads and threads.isdigit():
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)


if __name__ == "__main__":
    _pin_blas_threads(sys.argv[1:])
    from tgmm_lab.cli import main
    main()
