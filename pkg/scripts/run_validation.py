"""Out-of-sample comparison of the nominal and robust deployments on the bundled downtown city.

Usage: python3 scripts/run_validation.py [OUT_DIR] [TRIALS]
"""

import sys

from robustsiting.cli import main

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "out/validate"
    trials = sys.argv[2] if len(sys.argv) > 2 else "30"
    sys.exit(main(["validate", "--bundle", "downtown", "--sigma", "20", "--p", "30", "--beta", "0.9",
                   "--bandwidths", "10,100", "--trials", trials, "--per-trial-n", "100",
                   "--backend", "highs", "--out", out]))
