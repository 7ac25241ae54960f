"""Size ladder of one generated instance: RCG against the monolithic MIP, with a per-solve time cap.

Usage: python3 scripts/scaling_bench.py [OUT_DIR] [CAP_SECONDS]
"""

import sys

from robustsiting.cli import main

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "out/bench"
    cap = sys.argv[2] if len(sys.argv) > 2 else "120"
    sys.exit(main(["bench", "--spacings", "5,2.5,1.25,0.625", "--n-sites", "25", "--n-regions", "5",
                   "--p", "2", "--beta", "0.9", "--methods", "rcg,direct", "--backend", "highs",
                   "--time-limit-s", cap, "--out", out]))
