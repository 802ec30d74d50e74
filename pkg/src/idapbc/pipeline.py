"""End-to-end design steps driven by an effective configuration dictionary.

These functions return data; :mod:`idapbc.cli` turns it into files and exit
codes. ``cfg`` is the flat dictionary produced by :func:`idapbc.config.load`.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import config as config_mod
from .config import AUTO, ConfigError
from .controller import Controller, synthesize
from .errors import ContractError, IdaPbcError
from .model import SampleGrid, ValidationReport, make_grid, validate_system
from .registry import REGISTRY, Design, SystemEntry
from .shapeability import ShapeabilityReport, assess
from .shaping import (
    HessianCertificate,
    M1Residuals,
    M2Selection,
    ShapedEnergy,
    hessian_certificate,
    integrability_residual,
    shape_energy,
    verify_M1,
)
from .sim import SimConfig, Trajectory, lyapunov_audit, simulate


def system_schema(name: str):
    entry = REGISTRY.get(name)
    if entry is None:
        raise ConfigError(f"unknown system {name!r}; registered: {', '.join(sorted(REGISTRY))}")
    return entry.schema(), entry.defaults


def load_config(path, overrides: dict) -> dict:
    return config_mod.load(path, overrides, system_schema)


def entry_for(cfg: dict) -> SystemEntry:
    return REGISTRY[cfg["system.resolved"]]


def build(cfg: dict) -> Design:
    """Instantiate the configured system; invalid parameters become :class:`ConfigError`."""
    entry = entry_for(cfg)
    try:
        return entry.build(config_mod.section(cfg, "params"), config_mod.section(cfg, "gains"))
    except ContractError as exc:
        raise ConfigError(str(exc)) from exc


def grid_for(cfg: dict, design: Design) -> SampleGrid:
    try:
        return make_grid(design.system, cfg["grid.count"], cfg["grid.seed"], cfg["grid.method"])
    except ContractError as exc:
        raise ConfigError(str(exc)) from exc


def _tolerances(cfg):
    try:
        return config_mod.tolerances(cfg), config_mod.steps(cfg)
    except ContractError as exc:
        raise ConfigError(str(exc)) from exc


@dataclass
class CheckResult:
    validation: ValidationReport
    shapeability: ShapeabilityReport

    @property
    def passed(self) -> bool:
        return self.validation.passed and self.shapeability.passed

    def to_dict(self) -> dict:
        out = self.validation.to_dict()
        out.update(self.shapeability.to_dict())
        out["check.passed"] = self.passed
        return out


def run_check(cfg: dict, design: Design | None = None) -> CheckResult:
    design = design or build(cfg)
    tol, steps = _tolerances(cfg)
    grid = grid_for(cfg, design)
    validation = validate_system(design.system, design.target, grid, tol)
    report = assess(design.system, design.target, design.coords, grid, tol, steps)
    return CheckResult(validation, report)


@dataclass
class DesignResult:
    check: CheckResult
    energy: ShapedEnergy | None = None
    selection: M2Selection | None = None
    m1: M1Residuals | None = None
    certificate: HessianCertificate | None = None
    matching: float = math.nan
    integrability: float = math.nan
    controller: Controller | None = None
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        out = self.check.to_dict()
        if self.selection is not None:
            s = self.selection
            out.update(
                {
                    "design.bound": s.bound,
                    "design.schur_max": s.schur_max,
                    "design.bound_literal": s.literal_bound,
                    "design.margin": s.margin,
                    "design.M2_auto": s.value,
                    "design.B": s.B,
                    "design.C": s.C,
                    "design.M1_star": s.M1_star,
                }
            )
        if self.energy is not None:
            out["design.M2"] = self.energy.M2
        if self.m1 is not None:
            out.update(
                {
                    "design.m1.symmetry": self.m1.symmetry,
                    "design.m1.xi_cross": self.m1.xi_cross,
                    "design.m1.eta": self.m1.eta,
                }
            )
        if self.certificate is not None:
            out.update(
                {
                    "design.lambda_min_z": self.certificate.lam_min_z,
                    "design.lambda_min_x": self.certificate.lam_min_x,
                    "design.certificate": self.certificate.positive,
                    "design.certificate_consistent": self.certificate.consistent,
                }
            )
        out["design.matching_residual"] = self.matching
        out["design.integrability_residual"] = self.integrability
        out["design.failures"] = ",".join(self.failures) or "none"
        out["design.passed"] = self.passed
        return out


def run_design(cfg: dict, design: Design | None = None, check: bool = True) -> DesignResult:
    """Check, shape, verify and certify. ``ShapeabilityError`` propagates (B not positive definite)."""
    design = design or build(cfg)
    tol, steps = _tolerances(cfg)
    grid = grid_for(cfg, design)
    chk = run_check(cfg, design) if check else None
    result = DesignResult(chk)
    if chk is not None and not chk.passed:
        result.failures.append("check")
        return result

    m2 = cfg["design.m2"]
    margin = None if cfg["design.margin"] == AUTO else cfg["design.margin"]
    try:
        energy, selection = shape_energy(
            design.system, design.target, design.coords, design.M1, M2=m2, margin=margin, cfg=steps
        )
    except ContractError as exc:
        raise ConfigError(str(exc)) from exc
    ctrl = synthesize(design.system, design.target, design.coords, energy)
    Z = design.coords.tau(grid.points)
    result.energy, result.selection, result.controller = energy, selection, ctrl
    result.m1 = verify_M1(design.M1, energy.rho, Z, design.coords.m, steps)
    result.certificate = hessian_certificate(energy)
    result.matching = float(np.max(ctrl.matching_residual(grid.points)))
    result.integrability = integrability_residual(energy, grid)

    if not result.m1.passed(tol.pde, tol.pde2):
        result.failures.append("m1_conditions")
    if not result.certificate.positive:
        result.failures.append("hessian_certificate")
    if not result.matching <= tol.match:
        result.failures.append("matching_residual")
    if not result.integrability <= tol.grad:
        result.failures.append("integrability")
    return result


def sim_config(cfg: dict, t_end: float | None = None, record_every: int | None = None) -> SimConfig:
    entry = entry_for(cfg)
    x0 = cfg["sim.x0"]
    if x0 == "default":
        x0 = entry.default_x0(config_mod.section(cfg, "params"))
    try:
        return SimConfig(
            dt=cfg["sim.dt"],
            t_end=cfg["sim.t_end"] if t_end is None else t_end,
            x0=tuple(x0),
            record_every=cfg["sim.record_every"] if record_every is None else record_every,
        )
    except ContractError as exc:
        raise ConfigError(str(exc)) from exc


def run_simulation(cfg: dict, ctrl: Controller) -> tuple[Trajectory, tuple]:
    sc = sim_config(cfg)
    try:
        traj = simulate(ctrl, sc)
    except ContractError as exc:
        raise ConfigError(str(exc)) from exc
    return traj, lyapunov_audit(traj, cfg["tol.lyap"])


# --- sweeps -------------------------------------------------------------------

SWEEP_COLUMNS = ("gain1", "gain2", "certificate", "converged", "final_err")


def sweep_cells(cfg: dict) -> list[tuple[float, float]]:
    entry = entry_for(cfg)
    g1, g2 = cfg["sweep.gain1"], cfg["sweep.gain2"]
    for g in (g1, g2):
        if g not in entry.gains:
            raise ConfigError(f"sweep gain {g!r} is not a gain of {entry.name}")
    if g1 == g2:
        raise ConfigError("sweep.gain1 and sweep.gain2 must differ")
    values1 = cfg["sweep.values1"]
    values2 = cfg["sweep.values2"] or (cfg[f"gains.{g2}"],)
    if not values1:
        raise ConfigError("sweep.values1 is empty")
    if cfg["sweep.workers"] < 1:
        raise ConfigError("sweep.workers must be at least 1")
    cells = [(a, b) for a in values1 for b in values2]
    for a, b in cells:  # reject invalid gain values before any work starts
        build(_cell_cfg(cfg, a, b))
    return cells


def _cell_cfg(cfg: dict, a: float, b: float) -> dict:
    out = dict(cfg)
    out[f"gains.{cfg['sweep.gain1']}"] = a
    out[f"gains.{cfg['sweep.gain2']}"] = b
    return out


def sweep_cell(cfg: dict, a: float, b: float, simulate_cell: bool = True) -> dict:
    """One sweep cell; failures become data (``certificate``/``converged`` false)."""
    cell = _cell_cfg(cfg, a, b)
    row = {"gain1": a, "gain2": b, "certificate": False, "converged": False, "final_err": math.nan}
    try:
        res = run_design(cell, check=False)
    except IdaPbcError:
        return row
    row["certificate"] = bool(res.certificate.positive)
    if not simulate_cell:
        return row
    t_end = cfg["sweep.t_end"]
    sc = sim_config(cell, t_end=t_end, record_every=max(1, int(t_end / cfg["sim.dt"])))
    try:
        traj = simulate(res.controller, sc)
    except IdaPbcError:
        return row
    err = float(np.linalg.norm(traj.x[-1] - res.controller.system.x_star))
    row["final_err"] = err
    row["converged"] = bool(traj.ok and lyapunov_audit(traj, cfg["tol.lyap"])[1] is None and err <= cfg["sweep.conv_tol"])
    return row


def _cell_task(args):
    return sweep_cell(*args)


def run_sweep(cfg: dict, simulate_cells: bool = True) -> list[dict]:
    cells = sweep_cells(cfg)
    tasks = [(cfg, a, b, simulate_cells) for a, b in cells]
    workers = min(cfg["sweep.workers"], len(tasks))
    if workers == 1:
        return [_cell_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_cell_task, tasks))
