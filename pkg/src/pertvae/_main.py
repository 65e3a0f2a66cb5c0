"""Console entry point. Applies the thread cap before numpy is imported."""

from __future__ import annotations

import os
import sys


def main() -> None:
    threads = os.environ.get("PERTVAE_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)
    from .cli import run_cli

    sys.exit(run_cli())


if __name__ == "__main__":
    main()
