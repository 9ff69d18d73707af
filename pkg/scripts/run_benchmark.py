"""Cavity benchmark at desk scale (m=32, Ra=1e3 and 1e4); pass extra CLI flags to override."""

import sys

from ensconv.cli import main

if __name__ == "__main__":
    sys.exit(main(["benchmark", "--m", "32", "--Ra", "1e3,1e4", "--outdir", "out/benchmark", *sys.argv[1:]]))
