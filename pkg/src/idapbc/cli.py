"""Command-line front end.

    idapbc {check,design,simulate,sweep} --config PATH [--out DIR] [--set section.key=value ...]

Exit codes: 0 success, 1 check/certificate/audit failure, 2 configuration
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

from . import pipeline
from .config import ConfigError, parse_overrides
from .errors import ContractError, NumericalFailure, ShapeabilityError
from .report import write_kv, write_svg, write_text
from .sim import write_csv

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="idapbc", description="IDA-PBC design with maximum energy shapeability")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("check", "validate the system and test energy shapeability"),
        ("design", "build the shaped energy and certify it"),
        ("simulate", "design, then simulate the closed loop"),
        ("sweep", "certificate and convergence over a grid of two gains"),
    ]:
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", help="flat 'section.key = value' config file")
        sp.add_argument("--out", help="output directory (overrides output.dir)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    return p


def _outdir(cfg: dict, out: str | None) -> Path:
    path = Path(out or cfg["output.dir"])
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {path} is not writable: {exc.strerror or exc}") from exc
    return path


def _check_lines(res: pipeline.CheckResult) -> list[str]:
    lines = ["System validation (sampled at %d points)" % res.validation.grid_count]
    for c in res.validation.checks:
        lines.append(f"  {'ok  ' if c.passed else 'FAIL'} {c.name}: {c.value:.3e} (tol {c.tol:.1e}) {c.note}".rstrip())
    lo, hi = res.validation.dissipation_extrema
    lines.append(f"  eigenvalues of F_d + F_d^T range over [{lo:.4g}, {hi:.4g}]")
    lines += ["", res.shapeability.summary(), "", f"Result: {'PASS' if res.passed else 'FAIL'}"]
    if not res.passed:
        failed = res.validation.failures() + (["shapeability"] if not res.shapeability.passed else [])
        lines.append("Failed: " + ", ".join(failed))
    return lines


def _design_lines(res: pipeline.DesignResult) -> list[str]:
    lines = _check_lines(res.check)
    if res.energy is None:
        return lines + ["", "Design not attempted: the check failed."]
    s, c = res.selection, res.certificate
    lines += [
        "",
        "Energy design",
        f"  B = drho/deta(z*) = {s.B.tolist()}",
        f"  C = drho/dxi(z*) = {s.C.tolist()}",
        f"  lambda_max(C^T B^-1 C) = {s.schur_max:.6g}",
        f"  gain bound lambda_max(C^T B^-1 C) - lambda_min(M1(z*)) = {s.bound:.6g}",
        f"  (same bound with C^T B C instead of C^T B^-1 C: {s.literal_bound:.6g}, reported only)",
        f"  M1(z*) = {s.M1_star.tolist()}",
        f"  M2 used = {res.energy.M2.tolist()} (automatic choice would be {s.value:.6g} with margin {s.margin:.4g})",
        f"  M1 conditions: symmetry {res.m1.symmetry:.2e}, xi cross-derivatives {res.m1.xi_cross:.2e}, "
        f"eta coupling {res.m1.eta:.2e}",
        f"  Hessian at equilibrium: lambda_min {c.lam_min_z:.6g} (z), {c.lam_min_x:.6g} (x); "
        f"{'positive definite' if c.positive else 'NOT positive definite'}",
        f"  matching residual (max over grid) {res.matching:.3e}",
        f"  integrability residual {res.integrability:.3e}",
        "",
        f"Design: {'PASS' if res.passed else 'FAIL'}",
    ]
    if res.failures:
        lines.append("Failed: " + ", ".join(res.failures))
    return lines


def cmd_check(cfg: dict, out: Path) -> int:
    res = pipeline.run_check(cfg)
    write_kv(out / "check.kv", res.to_dict(), cfg)
    write_text(out / "check.txt", "Shapeability check", _check_lines(res), cfg)
    print("\n".join(_check_lines(res)))
    return EXIT_OK if res.passed else EXIT_FAIL


def _design(cfg: dict, out: Path):
    try:
        res = pipeline.run_design(cfg)
    except ShapeabilityError as exc:
        msg = f"gain bound not applicable: {exc}"
        write_text(out / "design.txt", "Energy design", [msg], cfg)
        write_kv(out / "design.kv", {"design.passed": False, "design.failures": "rho_eta_not_positive"}, cfg)
        print(msg, file=sys.stderr)
        return None, EXIT_FAIL
    write_kv(out / "design.kv", res.to_dict(), cfg)
    write_text(out / "design.txt", "Energy design", _design_lines(res), cfg)
    print("\n".join(_design_lines(res)))
    return res, EXIT_OK if res.passed else EXIT_FAIL


def cmd_design(cfg: dict, out: Path) -> int:
    return _design(cfg, out)[1]


def cmd_simulate(cfg: dict, out: Path) -> int:
    res, code = _design(cfg, out)
    if res is None or res.controller is None:
        return code
    traj, (increase, violation) = pipeline.run_simulation(cfg, res.controller)
    entry = pipeline.entry_for(cfg)
    offset = entry.offset(pipeline.config_mod.section(cfg, "params"))
    write_csv(traj, out / "trajectory.csv", offset)
    if cfg["sim.svg"]:
        y = traj.x if offset is None else traj.x + offset
        series = [(lab, y[:, i]) for i, lab in enumerate(entry.state_labels)]
        series += [(lab, traj.u[:, j]) for j, lab in enumerate(entry.input_labels)]
        write_svg(out / "trajectory.svg", traj.t, series)
    final_err = float(math.dist(traj.x[-1], res.controller.system.x_star))
    ok = res.passed and traj.ok and violation is None
    entries = {
        "sim.rows": len(traj),
        "sim.final_time": float(traj.t[-1]),
        "sim.final_state": traj.x[-1],
        "sim.final_error": final_err,
        "sim.max_abs_u": float(abs(traj.u).max()),
        "sim.max_residual": float(traj.r.max()),
        "sim.lyapunov_max_increase": increase,
        "sim.lyapunov_violation_time": violation,
        "sim.events": "; ".join(f"{t:.6g} {k}" for t, k in traj.events) or "none",
        "sim.passed": ok,
    }
    write_kv(out / "simulate.kv", entries, cfg)
    body = [
        f"{len(traj)} recorded states up to t = {traj.t[-1]:.6g} s",
        f"final distance to equilibrium {final_err:.3e}",
        f"largest energy increase between records {increase:.3e}"
        + ("" if violation is None else f" (first violation at t = {violation:.6g} s)"),
        "events: " + entries["sim.events"],
        f"Simulation: {'PASS' if ok else 'FAIL'}",
    ]
    write_text(out / "simulate.txt", "Closed-loop simulation", body, cfg)
    print("\n".join(body))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_sweep(cfg: dict, out: Path) -> int:
    rows = pipeline.run_sweep(cfg)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(pipeline.SWEEP_COLUMNS)
        for r in rows:
            w.writerow([repr(r["gain1"]), repr(r["gain2"]), str(r["certificate"]).lower(),
                        str(r["converged"]).lower(), repr(r["final_err"])])
    body = [f"{cfg['sweep.gain1']} = {r['gain1']:g}, {cfg['sweep.gain2']} = {r['gain2']:g}: "
            f"certificate {r['certificate']}, converged {r['converged']}, final error {r['final_err']:.3e}"
            for r in rows]
    write_text(out / "sweep.txt", "Gain sweep", body, cfg)
    write_kv(out / "sweep.kv", {"sweep.cells": len(rows)}, cfg)
    print("\n".join(body))
    return EXIT_OK


COMMANDS = {"check": cmd_check, "design": cmd_design, "simulate": cmd_simulate, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = pipeline.load_config(args.config, parse_overrides(args.set))
        out = _outdir(cfg, args.out)
        return COMMANDS[args.command](cfg, out)
    except (ConfigError, ContractError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
