"""Energy, variance, growth-rate and horizon series for Ra = 1e2, 1e3, 1e4 on m=32."""

import sys

from ensconv.cli import main

if __name__ == "__main__":
    sys.exit(main(["predictability", "--m", "32", "--outdir", "out/predictability", *sys.argv[1:]]))
