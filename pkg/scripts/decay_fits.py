"""Fourier decay exponents of the unit circle and sphere, plus the Littman sup."""

import argparse

import numpy as np

from torusqe.lattice import ball_points
from torusqe.measures import circle_measure, decay_fit, sphere_measure


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--E-max", type=int, default=400)
    ap.add_argument("--littman-E", type=int, default=10**4)
    args = ap.parse_args()

    for name, mu in (("circle", circle_measure()), ("sphere", sphere_measure())):
        fit = decay_fit(mu, args.E_max)
        print(f"{name:7s} alpha={fit.alpha:.4f} C={fit.C:.4f}  "
              f"(1+|n|) fit: alpha={fit.alpha_shifted:.4f}  shells={fit.n_shells}")

    ns = ball_points(2, args.littman_E, 1)
    vals = np.abs(circle_measure().coeffs(ns)) ** 2 * np.sqrt((ns * ns).sum(axis=1))
    i = int(vals.argmax())
    print(f"sup |sigma_hat(n)|^2 |n| over 1 <= |n|^2 <= {args.littman_E}: {vals[i]:.6f} at n={tuple(ns[i].tolist())}")


if __name__ == "__main__":
    main()
