"""How the uniform stationary state depends on the cap ``N`` and on ``rho0``.

For each number density the flow method is run at caps ``N`` and ``2N``; the
table lists the ``Y1`` distance between the two results and the mass left in
the upper half of the smaller cap.

    python scripts/truncation_study.py [--N 128]
"""

from __future__ import annotations

import argparse

from collbreak import CollisionKernel, Problem, Uniform, find_stationary_by_flow, make_initial, y1_distance
from collbreak.stationary import tail_mass


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=128)
    args = ap.parse_args()

    problem = Problem(CollisionKernel(1.0, 0.5, 0.5), Uniform())
    print(f"{'rho0':>6} {'w1*':>10} {'residual':>10} {'tail':>10} {'|N vs 2N|':>10}")
    for rho0 in (0.5, 0.6, 0.7, 0.8, 0.9):
        small = find_stationary_by_flow(make_initial("two_point", rho0, 1.0, args.N), problem)
        big = find_stationary_by_flow(make_initial("two_point", rho0, 1.0, 2 * args.N), problem)
        print(
            f"{rho0:6.2f} {small.state.counts[0]:10.6f} {small.residual:10.1e} "
            f"{tail_mass(small.state):10.1e} {y1_distance(small.state, big.state):10.1e}"
        )


if __name__ == "__main__":
    main()
