"""Constant kernel against its closed-form solution.

With ``K = 1``, no source, no removal and ``zeta_in = exp(-p)`` the solution
is ``(2/(2+t))^2 exp(-2p/(2+t))``.  The script integrates the sectional
system and prints the weighted L1 error and the number density ``M0``,
which should follow ``2/(2+t)``.

Run with ``python demos/analytic_constant.py``.
"""
import numpy as np

from coagsed.fixtures import analytic_constant_cell_averages, fixture
from coagsed.integrator import StepControl, integrate


def main():
    f = fixture("constant")
    g = f.grid
    times = [0.5, 1.0, 2.0, 5.0, 10.0]
    traj = integrate(f.spec, g, StepControl(), f.t_end, snapshot_times=times)
    wt = (1 + g.pivots) * g.widths
    print(f"{'t':>5} {'M0':>10} {'2/(2+t)':>10} {'rel L1 err':>11}")
    m0 = traj.m0()
    for t in times:
        k = traj.index_of(t)
        exact = analytic_constant_cell_averages(t, g)
        err = np.abs(traj.zetas[k] - exact) @ wt / (exact @ wt)
        print(f"{t:5g} {m0[k]:10.6f} {2 / (2 + t):10.6f} {err:11.2e}")
    print(f"{len(traj.steps)} accepted steps on {g.cells} cells")


if __name__ == "__main__":
    main()
