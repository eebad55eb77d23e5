"""Shared, cached fixture runs for the test suite."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from coagsed.analysis import MassBalanceMonitor
from coagsed.discretization import Tables, precompute_tables
from coagsed.fixtures import Fixture, fixture
from coagsed.integrator import StepControl, Trajectory, integrate

#: acceptance outcomes, printed in the terminal summary
ACCEPTANCE: dict = {}


@dataclass
class FixtureRun:
    fixture: Fixture
    tables: Tables
    traj: Trajectory
    monitor: MassBalanceMonitor


@lru_cache(maxsize=None)
def run_fixture(name: str) -> FixtureRun:
    f = fixture(name)
    tables = precompute_tables(f.spec, f.grid)
    mon = MassBalanceMonitor(tables)
    traj = integrate(f.spec, f.grid, StepControl(), f.t_end, [mon],
                     snapshot_times=f.snapshot_times, tables=tables)
    return FixtureRun(f, tables, traj, mon)


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(passed), detail)
    print(f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
