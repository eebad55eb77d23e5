"""Mass budget of a linear-kernel run with injection and settling.

Particles arrive at rate ``exp(-p)``, settle at rate ``0.5 (1+p)^0.5`` and
coagulate with the linear kernel on ``(0, 50]``.  The script prints the
mass ``M1`` next to the accumulated source, removal and overflow fluxes.
Their sum should reproduce ``M1`` to rounding, and the a-priori bounds
should hold at every snapshot.

Run with ``python demos/sedimentation_budget.py``.
"""
from coagsed.analysis import MassBalanceMonitor, check_bounds, gelation_monitor
from coagsed.discretization import precompute_tables
from coagsed.fixtures import fixture
from coagsed.integrator import StepControl, integrate


def main():
    f = fixture("class1")
    tables = precompute_tables(f.spec, f.grid)
    mon = MassBalanceMonitor(tables)
    traj = integrate(f.spec, f.grid, StepControl(), f.t_end, [mon],
                     snapshot_times=f.snapshot_times[::4], tables=tables)
    c = traj.cumulative
    m1 = traj.m1()
    print(f"{'t':>5} {'M1':>10} {'+source':>10} {'-removal':>10} {'-overflow':>10} {'budget gap':>11}")
    for k, t in enumerate(traj.times):
        gap = m1[k] - (m1[0] + c["source_mass"][k] - c["removal_mass"][k] - c["overflow_mass"][k])
        print(f"{t:5.2f} {m1[k]:10.6f} {c['source_mass'][k]:10.6f} {c['removal_mass'][k]:10.6f} "
              f"{c['overflow_mass'][k]:10.2e} {gap:11.2e}")
    print(f"worst instantaneous mass-balance residual / M1: {mon.worst:.2e}")
    rep = check_bounds(traj, tables)
    for chk in rep.checks:
        print(f"  {chk.name:<20} {'ok' if chk.passed else 'VIOLATED':<9} ratio {chk.worst_ratio:.3g}")
    print("gelation:", "none detected" if not gelation_monitor(traj).gelled else "detected")


if __name__ == "__main__":
    main()
