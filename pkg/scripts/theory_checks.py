"""Run the numerical bound checks over many seeds and summarize margins.

    python scripts/theory_checks.py --seeds 20 --out theory.json
"""

import argparse
import json

from firkrylov.verify import CHECKS, TheoryCheckConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--check", nargs="+", default=list(CHECKS), choices=list(CHECKS))
    ap.add_argument("--out", default=None, help="write every report as JSON")
    args = ap.parse_args()

    reports = []
    for name in args.check:
        m = 200 if name in ("cg", "precond") else 100
        passed = 0
        for seed in range(args.seeds):
            rep = CHECKS[name](TheoryCheckConfig(m=m, seed=seed))
            passed += rep.passed
            reports.append(json.loads(rep.to_json()))
        print(f"{name:20s} {passed}/{args.seeds} seeds passed")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(reports, fh, indent=2)
        print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
