"""Command-line front end.

Subcommands
-----------
simulate       integrate and write ``trajectory.csv`` (plus a final snapshot)
verify         run the assertion suite and write ``verify_report.csv``
convergence    truncation study over ``convergence_n``; ``convergence.csv``
uniqueness     continuous-dependence probe; ``uniqueness.csv``
oracle         deterministic run against a stochastic ensemble; ``oracle.csv``
kernels-check  assumption report for the configured problem; ``kernels_check.csv``

The output directory is ``--out``, else ``$COAGSED_OUT``, else the
configuration's ``[output] directory``.

Exit status: 0 success, 1 a check failed, 2 configuration or usage error,
3 problem refused by the assumption checks, 4 integration failure.
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (GeometricPolicy, MassBalanceMonitor, check_bounds, compare_with_oracle,
                       conservation_check, gelation_monitor, truncation_convergence,
                       uniqueness_probe)
from .config import ConfigError, RunConfig, load_config
from .discretization import TableSizeError, precompute_tables
from .functionals import (ONE, build_sigma_pair, check_convexp_identities, gamma_constants,
                          indicator, moment, parse_weight, weak_form_residual)
from .integrator import FLUX_NAMES, IntegrationError, integrate
from .io import Snapshot, save_snapshot, write_csv
from .model import satisfies_sqrt_bound, validate_assumptions
from .stochastic import run_ensemble

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_REFUSED, EXIT_RUNTIME = 0, 1, 2, 3, 4
OUT_ENV = "COAGSED_OUT"

MASS_BALANCE_RTOL = 1e-10
WEAK_FORM_TOL = 1e-4
CONVEXITY_TOL = -1e-10
GAMMA_RTOL = 1e-6
Z_LIMIT = 4.0


class _Refused(Exception):
    pass


def _say(msg: str) -> None:
    print(msg, flush=True)


def _err(msg: str) -> None:
    print(f"coagsed: error: {msg}", file=sys.stderr, flush=True)


def _out_dir(args, cfg: RunConfig) -> Path:
    d = Path(args.out or os.environ.get(OUT_ENV) or cfg.output_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _tables(cfg: RunConfig, args):
    report = validate_assumptions(cfg.spec)
    if not report.ok and not args.allow_invalid:
        lines = [f"  {c.name}: {c.detail or 'failed'}" + (f" at {c.witness}" if c.witness else "")
                 for c in report.failures()]
        raise _Refused("problem fails assumption checks (use --allow-invalid to run anyway):\n"
                       + "\n".join(lines))
    return precompute_tables(cfg.spec, cfg.grid, check=False, workers=cfg.workers,
                             defect=args.inject_defect)


def _run(cfg, tables, observers=(), snapshot_times=None):
    return integrate(cfg.spec, cfg.grid, cfg.control, cfg.t_end, observers,
                     snapshot_times=cfg.snapshot_times if snapshot_times is None else snapshot_times,
                     tables=tables, check=False)


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_simulate(cfg: RunConfig, args) -> int:
    tables = _tables(cfg, args)
    mon = MassBalanceMonitor(tables)
    traj = _run(cfg, tables, [mon])
    out = _out_dir(args, cfg)
    weights = [parse_weight(w) for w in cfg.weights]
    cols = [("t", "time"), ("M0", "number/volume"), ("M1", "mass/volume"),
            ("overflow_cum", "mass/volume"), ("min_zeta", "number/(size*volume)")]
    cols += [(f"w_{w.name}", "weighted number/volume") for w in weights]
    m0, m1 = traj.m0(), traj.m1()
    rows = []
    for k, t in enumerate(traj.times):
        z = traj.zetas[k]
        rows.append([t, m0[k], m1[k], traj.overflow_cum[k], float(z.min())]
                    + [moment(z, w, cfg.grid) for w in weights])
    write_csv(out / "trajectory.csv", cols, rows)
    if cfg.snapshot:
        cum = {name: float(traj.cumulative[name][-1]) for name in FLUX_NAMES}
        save_snapshot(out / "snapshot_final.json", Snapshot(cfg.grid, traj.state(len(traj) - 1), cum))
    _say(f"simulate: {len(traj.steps)} steps to t={cfg.t_end:g}; M0={m0[-1]:.6g} M1={m1[-1]:.6g} "
         f"-> {out / 'trajectory.csv'}")
    if args.strict:
        breaches = []
        if mon.violations(MASS_BALANCE_RTOL):
            breaches.append(f"mass balance residual {mon.worst:.3g} x M1")
        rep = check_bounds(traj, tables, lam=cfg.lam)
        breaches += [f"{c.name} ({c.detail})" for c in rep.checks if not c.passed]
        if breaches:
            _err("invariant breach: " + "; ".join(breaches))
            return EXIT_FAIL
    return EXIT_OK


def _verify_rows(cfg: RunConfig, args, tables):
    """``(check, passed, value, tolerance, detail)`` rows."""
    rows = []
    need_run = {"mass_balance", "bounds", "weak_form", "conservation", "gelation"} & set(cfg.checks)
    if need_run:
        mon = MassBalanceMonitor(tables)
        dense = np.union1d(cfg.snapshot_times, np.linspace(0.0, cfg.t_end, 401))
        traj = _run(cfg, tables, [mon], dense)
    if "mass_balance" in cfg.checks:
        rows.append(("mass_balance", mon.violations(MASS_BALANCE_RTOL) == 0, mon.worst,
                     MASS_BALANCE_RTOL, "max per-step residual / M1"))
    if "bounds" in cfg.checks:
        for c in check_bounds(traj, tables, lam=cfg.lam).checks:
            rows.append((f"bound:{c.name}", c.passed, c.worst_ratio, 1.0, c.detail))
    if "weak_form" in cfg.checks:
        for w in (ONE, indicator(1.0, 2.0)):
            r = weak_form_residual(traj, tables, w, cfg.t_end)
            rows.append((f"weak_form:{w.name}", r <= WEAK_FORM_TOL, r, WEAK_FORM_TOL,
                         f"normalised residual at t={cfg.t_end:g} over {len(traj)} snapshots"))
    if "conservation" in cfg.checks:
        cons = conservation_check(traj, tables)
        m1 = traj.m1()
        scale = max(float(np.max(np.abs(m1))) / cfg.t_end,
                    max(abs(r.flux) for r in cons), max(r.source_rate for r in cons), 1e-300)
        worst = max(abs(r.defect) for r in cons) / scale
        rows.append(("conservation:budget", worst <= 1e-8, worst, 1e-8,
                     "max |dM1/dt - net flux| / flux scale"))
        bal = [r for r in cons if r.balanced]
        ok = all(r.locally_constant for r in bal)
        rows.append(("conservation:balanced_constant", ok, float(len(bal)), 0.0,
                     "M1 locally constant on every balanced interval (value = #balanced)"))
    if "gelation" in cfg.checks:
        g = gelation_monitor(traj)
        rows.append(("gelation", not g.gelled, float(-min(0.0, float(g.unexplained.min()))), 0.0,
                     "no unexplained mass loss" if not g.gelled else f"unexplained loss from t={g.time:g}"))
    if "convexity" in cfg.checks:
        s1, s2 = build_sigma_pair(cfg.spec)
        rng = np.random.default_rng([cfg.seed, 7])
        pairs = np.exp(rng.uniform(np.log(1e-3), np.log(1e3), size=(1000, 2)))
        for name, s in (("sigma1", s1), ("sigma2", s2)):
            rep = check_convexp_identities(s, pairs)
            rows.append((f"convexity:{name}", rep.worst >= CONVEXITY_TOL, rep.worst, CONVEXITY_TOL,
                         f"worst pair {rep.worst_pair}"))
        ga = gamma_constants(s1, s2, cfg.spec.initial, cfg.spec.source, nodes=16)
        gb = gamma_constants(s1, s2, cfg.spec.initial, cfg.spec.source, nodes=32)
        for k in ("gamma1", "gamma2", "gamma3", "gamma4"):
            a, b = getattr(ga, k), getattr(gb, k)
            rel = abs(a - b) / max(abs(b), 1e-300) if b else abs(a)
            rows.append((f"convexity:{k}", np.isfinite(a) and rel <= GAMMA_RTOL, rel, GAMMA_RTOL,
                         f"{k} = {b:.10g} (16 vs 32 nodes)"))
    return rows


def cmd_verify(cfg: RunConfig, args) -> int:
    out = _out_dir(args, cfg)
    cols = [("check", "name"), ("passed", "bool"), ("value", "ratio"), ("tolerance", "ratio"),
            ("detail", "text")]
    if not cfg.checks:
        write_csv(out / "verify_report.csv", cols, [])
        _say("verify: no checks requested")
        return EXIT_OK
    tables = _tables(cfg, args)
    rows = _verify_rows(cfg, args, tables)
    write_csv(out / "verify_report.csv", cols, rows)
    for name, ok, value, tol, detail in rows:
        _say(f"{'PASS' if ok else 'FAIL'} {name}: {value:.3g} (tolerance {tol:g}) {detail}")
    failed = [r for r in rows if not r[1]]
    _say(f"verify: {len(rows) - len(failed)}/{len(rows)} checks passed")
    return EXIT_FAIL if failed else EXIT_OK


def cmd_convergence(cfg: RunConfig, args) -> int:
    if not cfg.convergence_n:
        raise ConfigError("[experiment] convergence_n is required for the convergence command")
    _tables(cfg, args)  # assumption gate
    specs = [replace(cfg.spec, n=n) for n in cfg.convergence_n]
    policy = GeometricPolicy(cfg.convergence_p_min or cfg.grid.p_min, cfg.convergence_per_doubling)
    table = truncation_convergence(specs, cfg.t_end, policy=policy, control=cfg.control,
                                   times=cfg.snapshot_times, check=False)
    out = _out_dir(args, cfg)
    rows = [(t, a, b, d[k]) for (a, b), d in table.distances.items() for k, t in enumerate(table.times)]
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    write_csv(out / "convergence.csv",
              [("t", "time"), ("n_a", "size"), ("n_b", "size"), ("distance", "weighted L1")], rows)
    dec = table.decreasing()
    _say(f"convergence: distances between consecutive n {'decrease' if dec else 'do not decrease'} "
         f"at t={cfg.t_end:g}")
    return EXIT_FAIL if (args.strict and not dec) else EXIT_OK


def cmd_uniqueness(cfg: RunConfig, args) -> int:
    if not satisfies_sqrt_bound(cfg.spec.kernel):
        raise ConfigError(f"uniqueness probe needs a kernel bounded by A sqrt((1+p)(1+q)); "
                          f"{type(cfg.spec.kernel).__name__} is not")
    _tables(cfg, args)
    res = uniqueness_probe(cfg.spec, cfg.grid, cfg.delta, cfg.t_end, control=cfg.control,
                           snapshot_times=cfg.snapshot_times, check=False)
    out = _out_dir(args, cfg)
    env = res.envelope
    marg = res.d[0] * np.exp(res.rate * res.times / res.margin)
    write_csv(out / "uniqueness.csv",
              [("t", "time"), ("d", "weighted L1"), ("envelope", "weighted L1"),
               ("margin_bound", "weighted L1")],
              [(t, d, e, m) for t, d, e, m in zip(res.times, res.d, env, marg)])
    _say(f"uniqueness: delta={cfg.delta:g} rate 36*A*Lambda={res.rate:.6g}; "
         f"within envelope={res.within_envelope} margin={res.within_margin} "
         f"normalised nonincreasing={res.normalized_nonincreasing}")
    if cfg.delta == 0:
        ok = bool(np.all(res.d <= 1e-10 * res.scale))
    else:
        ok = res.ok
    return EXIT_OK if ok else EXIT_FAIL


def cmd_oracle(cfg: RunConfig, args) -> int:
    if not cfg.ensemble_times:
        raise ConfigError("[experiment] ensemble_times is required for the oracle command")
    snaps = cfg.snapshot_times
    for t in cfg.ensemble_times:
        if not np.any(np.isclose(snaps, t, rtol=1e-12, atol=1e-12)):
            raise ConfigError(f"ensemble time {t:g} is not a deterministic snapshot time; "
                              "the two runs would be compared on mismatched grids")
    tables = _tables(cfg, args)
    traj = _run(cfg, tables)
    ens = run_ensemble(cfg.spec, cfg.volume, cfg.t_end, cfg.replicas, cfg.seed, cfg.ensemble_times)
    rows = compare_with_oracle(traj, ens)
    out = _out_dir(args, cfg)
    write_csv(out / "oracle.csv",
              [("t", "time"), ("det_M0", "number/volume"), ("mean_M0", "number/volume"),
               ("se_M0", "number/volume"), ("z_M0", "standard errors"),
               ("det_M1", "mass/volume"), ("mean_M1", "mass/volume"), ("se_M1", "mass/volume"),
               ("z_M1", "standard errors")],
              [(r.t, r.det_M0, r.mean_M0, r.se_M0, r.z_M0, r.det_M1, r.mean_M1, r.se_M1, r.z_M1)
               for r in rows])
    zs = np.array([[r.z_M0, r.z_M1] for r in rows], dtype=float)
    defined = zs[np.isfinite(zs)]
    worst = float(np.max(np.abs(defined))) if defined.size else float("nan")
    _say(f"oracle: V={cfg.volume:g}, {cfg.replicas} replicas, seed {cfg.seed}; "
         + (f"max |z| = {worst:.3g}" if defined.size else "all z undefined (no particles)"))
    return EXIT_FAIL if defined.size and worst > Z_LIMIT else EXIT_OK


def cmd_kernels_check(cfg: RunConfig, args) -> int:
    report = validate_assumptions(cfg.spec)
    out = _out_dir(args, cfg)
    write_csv(out / "kernels_check.csv",
              [("check", "name"), ("passed", "bool"), ("witness", "size"), ("detail", "text")],
              [(c.name, c.passed, "" if c.witness is None else " ".join(f"{x:.17g}" for x in c.witness),
                c.detail) for c in report])
    for c in report:
        _say(f"{'PASS' if c.passed else 'FAIL'} {c.name}" + (f" at {c.witness}" if c.witness else "")
             + (f": {c.detail}" if c.detail else ""))
    return EXIT_OK if report.ok else EXIT_FAIL


COMMANDS = {
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "convergence": cmd_convergence,
    "uniqueness": cmd_uniqueness,
    "oracle": cmd_oracle,
    "kernels-check": cmd_kernels_check,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coagsed", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, metavar="PATH")
        s.add_argument("--out", metavar="DIR", help=f"output directory (overrides ${OUT_ENV})")
        s.add_argument("--strict", action="store_true", help="nonzero exit on any invariant breach")
        s.add_argument("--allow-invalid", action="store_true",
                       help="run problems that fail the assumption checks")
        s.add_argument("--seed", type=int, metavar="N", help="override [experiment] seed")
        s.add_argument("--inject-defect", choices=["mass"], metavar="NAME",
                       help="deliberately break the discretisation (self-test of the checks)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except _Refused as exc:
        _err(str(exc))
        return EXIT_REFUSED
    except TableSizeError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except IntegrationError as exc:
        _err(str(exc))
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
