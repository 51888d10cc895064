"""Run every shipped scenario and write one JSON report per scenario.

Scenarios run in parallel worker processes; the summary is printed in
scenario-name order so the output does not depend on scheduling."""

import argparse
import os
from concurrent.futures import ProcessPoolExecutor

from quasilie.pipelines.scenarios import SCENARIOS, run_scenario


def _run(name, seed):
    rep = run_scenario(name, seed=seed)
    return name, rep.passed, rep.wall_time, rep.to_json()


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="reports", help="output directory")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    names = sorted(SCENARIOS)
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        results = sorted(pool.map(_run, names, [args.seed] * len(names)))
    failed = 0
    for name, ok, wall, text in results:
        with open(os.path.join(args.out, f"{name}.json"), "w", encoding="utf-8") as fh:
            fh.write(text)
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'}  {name:<20s} {wall:6.2f} s")
    raise SystemExit(1 if failed else 0)


if __name__ == "__main__":
    main()
