"""Command line entry point.

    g2flow run <config> [--seed N] [--output DIR] [--snapshot-every K]
    g2flow verify <config>

Exit status: 0 on success, 1 on a bad config, a failed identity check or
an input the flow refuses, 2 on a numerical abort (after the last good
state has been written as snapshot_final). G2FLOW_THREADS caps the BLAS
and OpenMP worker pools.
"""

import argparse
import csv
import json
import os
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import flow, initial, store, su3
from .config import load_config
from .errors import (G2FlowError, NotIntegrable, NumericalAbort, ParseError,
                     ValidationError)
from .identities import run_suites

THREADS_VAR = "G2FLOW_THREADS"
REDUCTION_COLUMNS = ("quantity", "residual")
IDENTITY_COLUMNS = ("name", "residual", "tol", "status")


def _log(msg):
    print(msg, file=sys.stderr)


def thread_limit():
    """Context capping native thread pools from G2FLOW_THREADS, if set."""
    raw = os.environ.get(THREADS_VAR)
    if raw is None or raw.strip() == "":
        return nullcontext()
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(THREADS_VAR, f"not an integer: {raw!r}") from None
    if n < 1:
        raise ValidationError(THREADS_VAR, "must be >= 1")
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def _rng(cfg):
    return np.random.Generator(np.random.PCG64(cfg.initial.seed))


def _amplitude(ini):
    return ini.eps if ini.dilaton_amplitude is None else ini.dilaton_amplitude


# ------------------------------------------------------------ initial data

def flow_initial(cfg):
    ini, grid, rng = cfg.initial, cfg.grid, _rng(cfg)
    if ini.kind == "flat":
        f = initial.random_dilaton(grid, rng, ini.dilaton_amplitude or 0.0, ini.modes)
        return flow.FlowState(initial.flat_field(grid), f)
    if ini.kind == "coclosed":
        fld, f = initial.conformally_coclosed(grid, rng, ini.eps,
                                              ini.dilaton_amplitude, ini.modes)
        return flow.FlowState(fld, f)
    if ini.kind == "conformal":
        f = initial.random_dilaton(grid, rng, _amplitude(ini), ini.modes)
        return flow.FlowState(initial.conformal_field(grid, f), f)
    fld = initial.perturbed_field(grid, rng, ini.eps, ini.modes)
    return flow.FlowState(fld, np.zeros(grid.shape))


def su3_initial(cfg):
    """(SU3Field, built G2Field, dilaton) for the reduction modes."""
    ini, rng = cfg.initial, _rng(cfg)
    grid6 = cfg.grid.sub(6)
    if ini.kind == "invariant":
        fld, f = su3.invariant_coclosed(cfg.grid.sub(7), rng, ini.eps,
                                        ini.dilaton_amplitude, ini.modes)
        return su3.SU3Field.from_g2(fld, f), fld, f
    if ini.kind == "coframe":
        s = su3.coframe_su3(grid6, rng, ini.eps, ini.modes)
    else:
        f = initial.random_dilaton(grid6, rng, ini.dilaton_amplitude or 0.0, ini.modes)
        s = su3.SU3Field.flat(grid6, f)
    fld, f = su3.build_invariant_g2(s)
    return s, fld, f


# ------------------------------------------------------------------ modes

def _snapshot(root, label, fields, grid, meta):
    d = store.write_snapshot(Path(root) / label, fields, grid)
    (d / "meta.json").write_text(json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8")


def run_identity(cfg):
    kw = {"algebra": {"count": cfg.count}}
    checks = run_suites(list(cfg.suites), **{k: v for k, v in kw.items() if k in cfg.suites})
    for c in checks:
        print(c.line())
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    rows = [{"name": c.name, "residual": c.residual, "tol": c.tol,
             "status": "PASS" if c.ok else "FAIL"} for c in checks]
    with open(cfg.output_dir / "identities.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, IDENTITY_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({**r, "residual": repr(r["residual"]), "tol": repr(r["tol"])})
    failed = [c for c in checks if not c.ok]
    if failed:
        _log(f"{len(failed)} of {len(checks)} identity checks failed")
        return 1
    return 0


def run_flow(cfg):
    state = flow_initial(cfg)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "diagnostics.csv"
    meta = {"mode": cfg.mode, "seed": cfg.initial.seed}
    count = [0]

    def snap(s, label):
        _snapshot(out, label, {"phi": s.phi, "dilaton": s.dilaton}, s.grid,
                  {**meta, "t": s.t})

    with store.CsvWriter(csv_path, flow.COLUMNS) as w:
        def on_sample(s, row):
            w.write(row)
            snap(s, store.snapshot_dir(".", count[0]).name)
            count[0] += 1
            print(f"t = {row['t']:.6f}  M = {row['M']:.12g}  "
                  f"coclosed = {row['coclosed_residual']:.2e}", flush=True)

        try:
            result = flow.run(state, cfg.params, on_sample=on_sample, keep_states=False)
        except G2FlowError as exc:
            part = getattr(exc, "partial", None)
            if part is not None and part.rows:
                store.write_csv(csv_path, part.rows, flow.COLUMNS)
            if isinstance(exc, NumericalAbort) or (
                    isinstance(exc, NotIntegrable) and part is not None and part.steps > 0):
                snap(part.final, "snapshot_final")
                _log(f"numerical abort: {exc}")
                return 2
            raise
    store.write_csv(csv_path, result.rows, flow.COLUMNS)
    return 0


def run_reduced_flow(cfg):
    ini, rng = cfg.initial, _rng(cfg)
    if ini.kind == "coframe":
        s = su3.coframe_su3(cfg.grid, rng, ini.eps, ini.modes)
    else:
        f = initial.random_dilaton(cfg.grid, rng, ini.dilaton_amplitude or 0.0, ini.modes)
        s = su3.SU3Field.flat(cfg.grid, f)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "reduced.csv"
    meta = {"mode": cfg.mode, "seed": ini.seed}
    count = [0]

    def snap(r, label):
        _snapshot(out, label, {"su3:Omega": r.Omega, "su3:R": r.R,
                               "su3:dilaton": r.dilaton}, r.grid, {**meta, "t": r.t})

    with store.CsvWriter(csv_path, su3.REDUCED_COLUMNS) as w:
        def on_sample(r, row):
            w.write(row)
            snap(r, store.snapshot_dir(".", count[0]).name)
            count[0] += 1
            print(f"t = {row['t']:.6f}  M = {row['M']:.12g}  "
                  f"|h-1| = {row['h_deviation']:.2e}", flush=True)

        try:
            su3.run_reduced(su3.ReducedState.from_su3(s), cfg.params, on_sample=on_sample)
        except NumericalAbort as exc:
            snap(exc.partial[1], "snapshot_final")
            _log(f"numerical abort: {exc}")
            return 2
    return 0


def reduction_report(s, fld, f, params):
    """Residuals of the reduction formulas as an ordered {quantity: value}."""
    rep = {f"torsion.{k}": v for k, v in su3.reduction_torsion_check(s, fld, f).items()}
    rep.update({f"rates.{k}": v for k, v in su3.general_rates_check(fld, f, params).items()})
    hyp = max(float(np.max(np.abs(s.h - 1.0))), float(np.max(np.abs(s.Ftheta))))
    if hyp <= su3.HYPOTHESIS_TOL:
        rep.update({f"reduced_rhs.{k}": v for k, v in su3.reduced_rhs_residuals(s, params).items()})
        rep.update({f"matched_step.{k}": v
                    for k, v in su3.matched_step_residuals(s, params).items()})
        rep.update({f"fixed_point.{k}": v
                    for k, v in su3.reduced_fixed_point_residuals(s).items()})
    return rep


def run_reduction_check(cfg):
    s, fld, f = su3_initial(cfg)
    rep = reduction_report(s, fld, f, cfg.params)
    for k, v in rep.items():
        print(f"{k:<28s} {v:.3e}")
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    store.write_csv(out / "reduction.csv",
                    [{"quantity": k, "residual": v} for k, v in rep.items()],
                    REDUCTION_COLUMNS)
    _snapshot(out, "snapshot_000000",
              {"phi": fld.phi, "dilaton": f, "su3:omega": s.omega,
               "su3:rho_plus": s.rho_plus}, fld.grid,
              {"mode": cfg.mode, "seed": cfg.initial.seed, "t": 0.0})
    return 0


MODES = {"identity_suite": run_identity, "flow": run_flow,
         "reduced_flow": run_reduced_flow, "reduction_check": run_reduction_check}


# ------------------------------------------------------------------- main

def build_parser():
    p = argparse.ArgumentParser(prog="g2flow", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (("run", "run a scenario"), ("verify", "run identity suites")):
        sp = sub.add_parser(name, help=text)
        sp.add_argument("config")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--output")
        sp.add_argument("--snapshot-every", type=int, dest="snapshot_every")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "verify" and cfg.mode != "identity_suite":
            raise ValidationError("scenario.mode", "verify only runs identity_suite configs")
        if args.snapshot_every is not None and cfg.params is None:
            raise ValidationError("snapshot_every", f"not used by mode {cfg.mode}")
        cfg = cfg.with_overrides(seed=args.seed, output=args.output,
                                 snapshot_every=args.snapshot_every)
        with thread_limit():
            return MODES[cfg.mode](cfg)
    except (ParseError, ValidationError) as exc:
        _log(f"config error: {exc}")
        return 1
    except NumericalAbort as exc:
        _log(f"numerical abort: {exc}")
        return 2
    except G2FlowError as exc:
        _log(f"error: {type(exc).__name__}: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
