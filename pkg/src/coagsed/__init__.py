"""Sectional solver and verification suite for coagulation with injection and removal.

The main entry points are re-exported here; see the submodules for the rest.
"""
from .model import (ClassIIProduct, ClassILinear, DomainError, ExponentialInitial, GammaInitial,
                    PowerGrowthRemoval, PowerLawEta, ProblemSpec, SourceSpec, SqrtBounded,
                    TabulatedEta, TabulatedInitial, TabulatedRemoval, ValidationAdditive,
                    ValidationConstant, validate_assumptions)
from .grid import SizeGrid, make_geometric_grid, pair_target
from .discretization import State, precompute_tables, rhs, mass_balance_residual
from .integrator import StepControl, Trajectory, integrate, picard_solve, project_initial
from .functionals import (MASS, ONE, ONE_PLUS_MASS, SQRT_CAP, build_dlvp, check_convexp_identities,
                          indicator, moment, weak_form_residual)
from .stochastic import run_ensemble, ssa_step
from .analysis import (check_bounds, conservation_check, gelation_monitor, truncation_convergence,
                       uniqueness_probe)

__version__ = "0.1.0"
