"""Verify every bundled protocol at each preprocessing level and print a result table."""
import argparse
import time

from ccsa import smt
from ccsa.preprocess import LEVELS
from ccsa.ptcl import bundled_protocols, load
from ccsa.smt import emit, split_iff
from ccsa.theory import build


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--timeout", type=float, default=60.0)
    ap.add_argument("--protocol", action="append", help="protocol name (default: all bundled)")
    args = ap.parse_args()
    solvers = smt.available_solvers(args.timeout)
    if not solvers:
        raise SystemExit("no SMT solver on PATH")
    names = args.protocol or [p.stem for p in bundled_protocols()]
    print(f"{'protocol':<12} {'level':<10} {'result':<18} {'build s':>8} {'solve s':>8}")
    for name in names:
        problem = load(name)
        for level in LEVELS:
            t0 = time.monotonic()
            script = build(problem, level)
            parts = split_iff(script.query) if script.query is not None else [None]
            texts = []
            for q in parts:
                script.query = q
                texts.append(emit(script))
            t1 = time.monotonic()
            verdicts = [smt.portfolio(solvers, t) for t in texts]
            t2 = time.monotonic()
            worst = [v for v in verdicts if not v.proved]
            result = worst[0].outcome if worst else "proved"
            print(f"{name:<12} {level:<10} {result:<18} {t1 - t0:>8.2f} {t2 - t1:>8.2f}")


if __name__ == "__main__":
    main()
