"""Spatial and temporal MMS convergence tables."""

import sys

from ensconv.cli import main

if __name__ == "__main__":
    extra = sys.argv[1:]
    code = main(["convergence-space", "--outdir", "out/convergence_space", *extra])
    code = code or main(["convergence-time", "--outdir", "out/convergence_time", *extra])
    sys.exit(code)
