"""How many d=2 shells fail the lam^(1-delta) separation condition, and exact cancellation on the rest."""

import argparse

from torusqe.lattice import enumerate_shell, min_separation_sq, separation_survey
from torusqe.variance import cancellation_residual, haar_vectors


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--N", type=int, default=2000)
    ap.add_argument("--delta", type=float, default=0.2)
    ap.add_argument("--samples", type=int, default=5)
    args = ap.parse_args()

    surv = separation_survey(args.N, args.delta)
    print(f"{len(surv.records)} shells, {surv.n_not_separated} not separated "
          f"({surv.fraction_not_separated:.4f}); ratio to N^(1-delta/3): {surv.ratio_to_bound:.4f}")
    worst = 0.0
    for rec in surv.records:
        if rec.is_separated:
            sh = enumerate_shell(2, rec.norm_sq)
            worst = max(worst, cancellation_residual(sh, haar_vectors(sh, args.samples), min_separation_sq(sh)))
    print(f"max |int e_p |psi|^2| over separated shells and |p| < min separation: {worst:.3e}")


if __name__ == "__main__":
    main()
