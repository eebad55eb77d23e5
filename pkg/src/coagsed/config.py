"""Run configuration: a strict, sectioned ``key = value`` text format.

Grammar (INI as read by :mod:`configparser`, ``;`` and ``#`` start comments)::

    [problem]       kernel, A, eta, eta_beta, eta_points, eta_values,
                    source_s0, source_lambda, removal, removal_k, removal_alpha,
                    removal_points, removal_values, initial, initial_c0,
                    initial_mu, initial_shape, initial_scale, initial_edges,
                    initial_values, n
    [grid]          p_min, cells
    [integrator]    t_end, rel_tol, abs_tol, dt_init, dt_min, dt_max,
                    positivity_rel, snapshots | snapshot_count, workers
    [experiment]    seed, checks, weights, lambda, convergence_n,
                    convergence_per_doubling, convergence_p_min, delta,
                    volume, replicas, ensemble_times
    [output]        directory, snapshot

``[problem]``, ``[grid]`` and ``[integrator]`` are required.  Lists are
comma separated.  Unknown sections or keys are errors that name the key and
its line.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field

import numpy as np

from .functionals import parse_weight
from .grid import SizeGrid, make_geometric_grid
from .integrator import StepControl
from .model import (ClassIIProduct, ClassILinear, ExponentialInitial, GammaInitial,
                    PowerGrowthRemoval, PowerLawEta, ProblemSpec, SourceSpec, SqrtBounded,
                    TabulatedEta, TabulatedInitial, TabulatedRemoval, ValidationAdditive,
                    ValidationConstant)

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "ALL_CHECKS"]

ALL_CHECKS = ("mass_balance", "bounds", "weak_form", "convexity", "conservation", "gelation")

_KEYS = {
    "problem": {"kernel", "A", "eta", "eta_beta", "eta_points", "eta_values", "source_s0",
                "source_lambda", "removal", "removal_k", "removal_alpha", "removal_points",
                "removal_values", "initial", "initial_c0", "initial_mu", "initial_shape",
                "initial_scale", "initial_edges", "initial_values", "n"},
    "grid": {"p_min", "cells"},
    "integrator": {"t_end", "rel_tol", "abs_tol", "dt_init", "dt_min", "dt_max",
                   "positivity_rel", "snapshots", "snapshot_count", "workers"},
    "experiment": {"seed", "checks", "weights", "lambda", "convergence_n",
                   "convergence_per_doubling", "convergence_p_min", "delta", "volume",
                   "replicas", "ensemble_times"},
    "output": {"directory", "snapshot"},
}
_REQUIRED = ("problem", "grid", "integrator")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


@dataclass
class RunConfig:
    spec: ProblemSpec
    grid: SizeGrid
    control: StepControl
    t_end: float
    snapshot_times: np.ndarray
    workers: int = 1
    seed: int = 0
    checks: tuple = ALL_CHECKS
    weights: tuple = ()
    lam: float = 2.0
    convergence_n: tuple = ()
    convergence_per_doubling: int = 8
    convergence_p_min: float | None = None
    delta: float = 1e-3
    volume: float = 1e3
    replicas: int = 200
    ensemble_times: tuple = ()
    output_dir: str = "out"
    snapshot: bool = True
    source_text: str = field(default="", repr=False)


def _line_index(text: str) -> dict:
    """``(section, key) -> line number`` of every key in ``text``."""
    where = {}
    section = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            where.setdefault((section, None), no)
            continue
        for sep in ("=", ":"):
            if sep in line and section is not None:
                where.setdefault((section, line.split(sep, 1)[0].strip()), no)
                break
    return where


class _Section:
    def __init__(self, name, items, lines):
        self.name = name
        self.items = items
        self.lines = lines

    def where(self, key):
        no = self.lines.get((self.name, key))
        return f"[{self.name}] {key}" + (f" (line {no})" if no else "")

    def has(self, key):
        return key in self.items

    def raw(self, key, default=None):
        if key in self.items:
            return self.items[key]
        if default is None:
            raise ConfigError(f"missing required key {key!r} in [{self.name}]")
        return default

    def float(self, key, default=None):
        v = self.raw(key, None if default is None else str(default))
        try:
            return float(v)
        except ValueError:
            raise ConfigError(f"{self.where(key)}: expected a number, got {v!r}") from None

    def int(self, key, default=None):
        v = self.raw(key, None if default is None else str(default))
        try:
            f = float(v)
        except ValueError:
            f = math.nan
        if not math.isfinite(f) or f != int(f):
            raise ConfigError(f"{self.where(key)}: expected an integer, got {v!r}")
        return int(f)

    def floats(self, key, default=None):
        if key not in self.items and default is not None:
            return tuple(default)
        v = self.raw(key)
        parts = [x.strip() for x in v.split(",") if x.strip()]
        try:
            return tuple(float(x) for x in parts)
        except ValueError:
            raise ConfigError(f"{self.where(key)}: expected a comma-separated list of numbers") from None

    def words(self, key, default=()):
        if key not in self.items:
            return tuple(default)
        return tuple(x.strip() for x in self.items[key].split(",") if x.strip())

    def bool(self, key, default):
        if key not in self.items:
            return default
        v = self.items[key].strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{self.where(key)}: expected a boolean, got {v!r}")

    def build(self, key, fn, *args):
        """Call a constructor, reporting its ``ValueError`` against ``key``."""
        try:
            return fn(*args)
        except ValueError as exc:
            raise ConfigError(f"{self.where(key)}: {exc}") from None


def _kernel(sec: _Section):
    name = sec.raw("kernel").lower()
    A = sec.float("A", 1.0)
    if name == "constant":
        return sec.build("A", ValidationConstant, A)
    if name == "class1":
        return sec.build("A", ClassILinear, A)
    if name == "sqrt":
        return sec.build("A", SqrtBounded, A)
    if name == "additive":
        return sec.build("A", ValidationAdditive, A)
    if name == "class2":
        kind = sec.raw("eta", "power").lower()
        if kind == "power":
            eta = sec.build("eta_beta", PowerLawEta, sec.float("eta_beta", 0.5))
        elif kind == "table":
            eta = sec.build("eta_points", TabulatedEta, sec.floats("eta_points"), sec.floats("eta_values"))
        else:
            raise ConfigError(f"{sec.where('eta')}: unknown eta {kind!r} (power, table)")
        return sec.build("A", ClassIIProduct, A, eta)
    raise ConfigError(f"{sec.where('kernel')}: unknown kernel {name!r} "
                      "(constant, class1, class2, sqrt, additive)")


def _removal(sec: _Section):
    kind = sec.raw("removal", "power").lower()
    if kind == "power":
        return sec.build("removal_alpha", PowerGrowthRemoval, sec.float("removal_k", 0.0),
                         sec.float("removal_alpha", 0.0))
    if kind == "table":
        return sec.build("removal_points", TabulatedRemoval, sec.floats("removal_points"),
                         sec.floats("removal_values"))
    raise ConfigError(f"{sec.where('removal')}: unknown removal {kind!r} (power, table)")


def _initial(sec: _Section):
    kind = sec.raw("initial", "exponential").lower()
    if kind == "exponential":
        return sec.build("initial_mu", ExponentialInitial, sec.float("initial_c0", 1.0),
                         sec.float("initial_mu", 1.0))
    if kind == "gamma":
        return sec.build("initial_shape", GammaInitial, sec.float("initial_c0", 1.0),
                         sec.float("initial_shape", 2.0), sec.float("initial_scale", 1.0))
    if kind == "table":
        return sec.build("initial_edges", TabulatedInitial, sec.floats("initial_edges"),
                         sec.floats("initial_values"))
    raise ConfigError(f"{sec.where('initial')}: unknown initial data {kind!r} (exponential, gamma, table)")


def parse_config(text: str) -> RunConfig:
    """Parse configuration text; raises :class:`ConfigError` on any problem."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"),
                                   default_section="\0none")
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse configuration: {exc}") from None
    lines = _line_index(text)
    for name in cp.sections():
        if name not in _KEYS:
            no = lines.get((name, None))
            raise ConfigError(f"unknown section [{name}]" + (f" (line {no})" if no else ""))
        for key in cp[name]:
            if key not in _KEYS[name]:
                no = lines.get((name, key))
                raise ConfigError(f"unknown key {key!r} in [{name}]" + (f" (line {no})" if no else ""))
    for name in _REQUIRED:
        if not cp.has_section(name):
            raise ConfigError(f"missing required section [{name}]")
    sec = {name: _Section(name, dict(cp[name]) if cp.has_section(name) else {}, lines) for name in _KEYS}

    P, G, I, E, O = (sec[k] for k in ("problem", "grid", "integrator", "experiment", "output"))
    kernel = _kernel(P)
    source = P.build("source_lambda", SourceSpec, P.float("source_s0", 0.0), P.float("source_lambda", 1.0))
    removal = _removal(P)
    initial = _initial(P)
    n = P.float("n")
    if not n > 1:
        raise ConfigError(f"{P.where('n')}: truncation size must exceed 1")
    # the only remaining ProblemSpec refusal concerns the removal rate
    spec = P.build("removal", ProblemSpec, kernel, source, removal, initial, n)
    grid = G.build("cells", make_geometric_grid, G.float("p_min"), n, G.int("cells"))

    t_end = I.float("t_end")
    if not t_end > 0:
        raise ConfigError(f"{I.where('t_end')}: must be positive")
    control = I.build("rel_tol", StepControl, I.float("rel_tol", 1e-8), I.float("abs_tol", 1e-14),
                      I.float("dt_init", 1e-3), I.float("dt_min", 1e-12), I.float("dt_max", math.inf),
                      I.float("positivity_rel", 1e-12))
    if I.has("snapshots") and I.has("snapshot_count"):
        raise ConfigError(f"{I.where('snapshot_count')}: give either snapshots or snapshot_count")
    if I.has("snapshots"):
        snaps = np.array(I.floats("snapshots"))
        if np.any(snaps < 0) or np.any(snaps > t_end):
            raise ConfigError(f"{I.where('snapshots')}: snapshot times must lie in [0, t_end]")
        snaps = np.unique(np.concatenate([[0.0], snaps, [t_end]]))
    else:
        cnt = I.int("snapshot_count", 21)
        if cnt < 2:
            raise ConfigError(f"{I.where('snapshot_count')}: need at least 2 snapshots")
        snaps = np.linspace(0.0, t_end, cnt)
    workers = I.int("workers", 1)
    if workers < 1:
        raise ConfigError(f"{I.where('workers')}: must be >= 1")

    checks = E.words("checks", ALL_CHECKS) if E.has("checks") else ALL_CHECKS
    for c in checks:
        if c not in ALL_CHECKS:
            raise ConfigError(f"{E.where('checks')}: unknown check {c!r} ({', '.join(ALL_CHECKS)})")
    weights = E.words("weights")
    for w in weights:
        try:
            parse_weight(w)
        except ValueError as exc:
            raise ConfigError(f"{E.where('weights')}: {exc}") from None
    conv_n = E.floats("convergence_n", ())
    if conv_n and len(conv_n) < 3:
        raise ConfigError(f"{E.where('convergence_n')}: need at least three truncation sizes")
    ens = E.floats("ensemble_times", ())
    if any(t < 0 or t > t_end for t in ens):
        raise ConfigError(f"{E.where('ensemble_times')}: times must lie in [0, t_end]")
    replicas = E.int("replicas", 200)
    if replicas < 2:
        raise ConfigError(f"{E.where('replicas')}: need at least 2 replicas")
    volume = E.float("volume", 1e3)
    if not volume > 0:
        raise ConfigError(f"{E.where('volume')}: must be positive")
    delta = E.float("delta", 1e-3)
    if not delta >= 0:
        raise ConfigError(f"{E.where('delta')}: must be >= 0")
    lam = E.float("lambda", 2.0)
    if not lam > 1:
        raise ConfigError(f"{E.where('lambda')}: must exceed 1")

    return RunConfig(
        spec=spec, grid=grid, control=control, t_end=t_end, snapshot_times=snaps,
        workers=workers, seed=E.int("seed", 0), checks=tuple(checks), weights=tuple(weights),
        lam=lam, convergence_n=tuple(conv_n),
        convergence_per_doubling=E.int("convergence_per_doubling", 8),
        convergence_p_min=E.float("convergence_p_min") if E.has("convergence_p_min") else None,
        delta=delta, volume=volume, replicas=replicas, ensemble_times=tuple(ens),
        output_dir=O.raw("directory", "out"), snapshot=O.bool("snapshot", True),
        source_text=text,
    )


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc.strerror}") from None
    return parse_config(text)
