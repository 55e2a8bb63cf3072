"""Period decay and L2 restriction ratios on the unit circle."""

import argparse

from torusqe.measures import circle_measure
from torusqe.restriction import br_sweep, period_decay_sweep
from torusqe.spectral import basis_family


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--basis", default="haar:0")
    ap.add_argument("--period-E", type=int, default=400)
    ap.add_argument("--br-E", type=int, default=2500)
    ap.add_argument("--delta", type=float, default=0.1)
    args = ap.parse_args()

    prov = basis_family(args.basis)
    sigma = circle_measure()
    rows = period_decay_sweep(sigma, args.period_E, prov, delta=args.delta, curvature=1.0)
    top = max(rows, key=lambda r: r.scaled)
    print(f"period decay: {len(rows)} shells, max lam^(1/2-delta) * bound = {top.scaled:.6f} at E={top.norm_sq}")
    print(f"              largest |period| = {max(r.max_period for r in rows):.6f}")

    br = br_sweep(sigma, args.br_E, prov)
    print(f"L2 restriction ratio over {br.n_rows} eigenfunctions: "
          f"min {br.ratio_min:.6f} at {br.argmin}, max {br.ratio_max:.6f} at {br.argmax}")


if __name__ == "__main__":
    main()
