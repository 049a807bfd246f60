"""Run the ground subterm-set oracle over a grid of bounds for every bundled protocol."""
import argparse
import time

from ccsa.oracle import check_subterm_soundness
from ccsa.ptcl import bundled_protocols, load


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--max-indices", type=int, default=2)
    ap.add_argument("--max-steps", type=int, default=4)
    ap.add_argument("--mutate", action="store_true", help="also run with the input case of st disabled")
    args = ap.parse_args()
    print(f"{'protocol':<12} {'n':>2} {'k':>2} {'mutant':<6} {'traces':>7} {'pairs':>7} {'result':<15} {'s':>6}")
    for path in bundled_protocols():
        problem = load(path)
        for n in range(1, args.max_indices + 1):
            for k in range(1, args.max_steps + 1):
                for mutant in (False, True) if args.mutate else (False,):
                    t0 = time.monotonic()
                    rep = check_subterm_soundness(problem, n, k, disable_input=mutant)
                    result = "ok" if rep.ok else "counterexample"
                    print(f"{path.stem:<12} {n:>2} {k:>2} {str(mutant):<6} {rep.traces:>7} {rep.pairs:>7} "
                          f"{result:<15} {time.monotonic() - t0:>6.2f}")


if __name__ == "__main__":
    main()
