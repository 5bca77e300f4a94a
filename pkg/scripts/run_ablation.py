"""Run the five-seed loss-term ablation at the shipped defaults.

Thirty training runs (six loss configurations, five seeds), so expect
tens of seconds.  Writes per-run rows to --out and prints the
per-configuration SCC medians.
"""

import argparse
from pathlib import Path

from depthuq import cli


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", default="0,1,2,3,4", help="comma-separated list")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default="results/ablation.csv")
    args = ap.parse_args()
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    return cli.main([
        "ablate",
        "--seeds", args.seeds,
        "--threads", str(args.threads),
        "--out", args.out,
    ])


if __name__ == "__main__":
    raise SystemExit(main())
