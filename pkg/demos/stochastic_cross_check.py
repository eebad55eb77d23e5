"""Deterministic moments against a Marcus-Lushnikov particle ensemble.

For the constant kernel, 200 particle systems in a volume ``V = 1000`` are
simulated exactly and their mean ``M0`` and ``M1`` compared with the
sectional solution.  The z-scores should be of order one.

Run with ``python demos/stochastic_cross_check.py``.
"""
from coagsed.analysis import compare_with_oracle
from coagsed.fixtures import fixture
from coagsed.integrator import StepControl, integrate
from coagsed.stochastic import run_ensemble


def main(volume=1e3, replicas=200, seed=2024):
    f = fixture("constant")
    times = [0.5, 1.0, 2.0]
    traj = integrate(f.spec, f.grid, StepControl(), 2.0, snapshot_times=times)
    ens = run_ensemble(f.spec, volume, 2.0, replicas, seed, times)
    print(f"V = {volume:g}, {replicas} replicas, seed {seed}")
    print(f"{'t':>4} {'det M0':>9} {'mean M0':>9} {'z':>6} {'det M1':>9} {'mean M1':>9} {'z':>6}")
    for r in compare_with_oracle(traj, ens):
        print(f"{r.t:4g} {r.det_M0:9.5f} {r.mean_M0:9.5f} {r.z_M0:6.2f} "
              f"{r.det_M1:9.5f} {r.mean_M1:9.5f} {r.z_M1:6.2f}")


if __name__ == "__main__":
    main()
