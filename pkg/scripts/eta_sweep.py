"""Stationary states of the keep-two daughter as a function of the dimer density.

Every state supported on monomers and dimers is stationary for keep-two, so
the stationary state reached depends on the start. Away from that set the
tail decays only like 1/t, so the flow horizon is long. This script starts from
states with the same mass but increasing tail weight and reports where each
one settles.

    python scripts/eta_sweep.py [--N 128]
"""

from __future__ import annotations

import argparse

import numpy as np

from collbreak import CollisionKernel, KeepTwo, Problem, find_stationary_by_flow, make_initial


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=128)
    ap.add_argument("--rho1", type=float, default=1.0)
    args = ap.parse_args()

    problem = Problem(CollisionKernel(1.0, 0.5, 0.5), KeepTwo())
    print(f"{'eta':>8} {'support':>8} {'converged':>9} {'w1*':>8} {'w2*':>8} {'M0*':>8} {'M0(0)':>8}")
    for eta in np.linspace(0.05, 0.45, 5):
        for support in (2, 8, 32):
            if support == 2:
                w0 = make_initial("two_point", None, args.rho1, args.N, eta=float(eta))
            else:
                rho0 = args.rho1 - eta
                w0 = make_initial("power_law", rho0, args.rho1, args.N, support=support)
            res = find_stationary_by_flow(w0, problem, t_max=1e6)
            c = res.state.counts
            print(
                f"{eta:8.3f} {support:8d} {str(res.converged):>9} {c[0]:8.4f} {c[1]:8.4f} "
                f"{res.properties['M0']:8.4f} {w0.counts.sum():8.4f}"
            )


if __name__ == "__main__":
    main()
