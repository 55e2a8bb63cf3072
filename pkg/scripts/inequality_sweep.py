"""Check S_2 <= sum |a_n|^2 #{pairs} on every shell, observable and basis family."""

import argparse
import time

from torusqe.lattice import nonempty_shells
from torusqe.observables import dictionary
from torusqe.spectral import basis_family
from torusqe.variance import master_inequality_sweep

FAMILIES = ["exponential", "paired", "reflected"] + [f"haar:{s}" for s in range(5)]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--E2", type=int, default=2500, help="largest shell in d=2")
    ap.add_argument("--E3", type=int, default=400, help="largest shell in d=3")
    args = ap.parse_args()

    fams = {name: basis_family(name) for name in FAMILIES}
    tally = None
    for d, E_max in ((2, args.E2), (3, args.E3)):
        t = time.perf_counter()
        tally = master_inequality_sweep(d, nonempty_shells(d, E_max), dictionary(d), fams, tally=tally)
        print(f"d={d} E<={E_max}: {tally.checks} checks so far ({time.perf_counter() - t:.1f} s)")
    print(f"violations: {len(tally.violations)}  max S2/RHS: {tally.max_ratio:.12f}")
    for v in tally.violations[:20]:
        print("  ", v)
    return 1 if tally.violations else 0


if __name__ == "__main__":
    raise SystemExit(main())
