"""Acceptance suite for the magnetic-levitation design.

Each test prints one ``PASS``/``FAIL`` line (repeated in the terminal summary)
before asserting, so a failing criterion still reports its measured value.
"""

import numpy as np
import pytest

from idapbc import maglev, pipeline
from idapbc.controller import synthesize
from idapbc.model import make_grid
from idapbc.numerics import jacobian
from idapbc.shapeability import check_characteristic, check_constant_route, involutivity_check
from idapbc.shaping import hessian_certificate, integrability_residual, shape_energy
from idapbc.sim import SimConfig, lyapunov_audit, simulate

P = maglev.MaglevParams()
GAINS = maglev.MaglevGains()


@pytest.fixture(scope="module")
def design():
    return maglev.build(P, GAINS)


@pytest.fixture(scope="module")
def grid(design):
    return make_grid(design.system, 512, seed=0)


@pytest.fixture(scope="module")
def energy(design):
    E, selection = shape_energy(design.system, design.target, design.coords, design.M1, M2=0.0)
    return E, selection


@pytest.fixture(scope="module")
def ctrl(design, energy):
    return synthesize(design.system, design.target, design.coords, energy[0])


@pytest.fixture(scope="module")
def random_states(design):
    return make_grid(design.system, 100, seed=7, method="uniform").points


def test_criterion_1_beta_matches_closed_form(design, energy, random_states, criterion):
    E, _ = energy
    Z = design.coords.tau(random_states)
    err = np.max(np.abs(E.beta(Z)[:, 0] - maglev.closed_form_grad_z1(Z, P, GAINS)))
    ok = criterion(1, "line-integral beta vs closed form", err < 1e-10, f"max |err| = {err:.2e} < 1e-10, 100 points")
    assert ok


def test_criterion_2_control_law_equivalence(ctrl, random_states, criterion):
    u = ctrl.u(random_states)[:, 0]
    err_closed = np.max(np.abs(u - maglev.closed_form_control(random_states, P, GAINS)))
    err_forms = np.max(np.abs(u - ctrl.u_direct(random_states)[:, 0]))
    ok = criterion(
        2,
        "control law vs closed form and gradient forms",
        err_closed < 1e-8 and err_forms < 1e-9,
        f"closed form {err_closed:.2e} < 1e-8; chain-rule vs direct gradient {err_forms:.2e} < 1e-9",
    )
    assert ok


def test_criterion_3_matching_residual(ctrl, grid, criterion):
    X = grid.points[:512]
    res = float(np.max(ctrl.matching_residual(X)))
    ok = criterion(3, "matching residual", res < 1e-7, f"max {res:.2e} < 1e-7 over {len(X)} points")
    assert ok


def test_criterion_4_gain_bound_and_certificate(design, energy, criterion):
    _, sel = energy
    B, C = sel.B, sel.C
    bound_ok = abs(sel.schur_max - 345.3) <= 0.5
    b_ok = np.allclose(B, np.diag([23.697, 321.60]), atol=5e-3)
    c_ok = np.allclose(C[:, 0], [-23.697, -321.60], atol=5e-3)
    cert_400 = hessian_certificate(energy[0]).positive
    low = maglev.build(P, maglev.MaglevGains(p1=100.0))
    E_low, _ = shape_energy(low.system, low.target, low.coords, low.M1, M2=0.0)
    cert_100 = hessian_certificate(E_low).positive
    ok = criterion(
        4,
        "gain bound and Hessian certificate",
        bound_ok and b_ok and c_ok and cert_400 and not cert_100,
        f"lambda_max(C^T B^-1 C) = {sel.schur_max:.4f}; B diag = {np.diag(B).round(4).tolist()}; "
        f"C = {C[:, 0].round(4).tolist()}; certificate p1=400 {cert_400}, p1=100 {cert_100}",
    )
    assert ok


def test_criterion_5_lie_condition(grid, design, criterion):
    nominal = check_constant_route(design.system, design.target, grid)
    d = maglev.build(P, maglev.MaglevGains(v11=1.0))
    perturbed = check_constant_route(d.system, d.target, grid)
    x1 = grid.points[:, 0]
    expected = np.max(np.abs(P.y1_star + x1) / P.k)
    ok = criterion(
        5,
        "pairwise Lie-derivative condition",
        nominal.lie_residual < 1e-9 and perturbed.lie_residual > 1e2,
        f"v11 = 0: {nominal.lie_residual:.2e} < 1e-9; v11 = 1: {perturbed.lie_residual:.4g} > 1e2 "
        f"(expected max |y1* + x1|/k = {expected:.4g})",
    )
    assert ok


def test_criterion_6_characteristic_and_involutivity(design, grid, criterion):
    v = np.linalg.solve(GAINS.F_d, np.array([1.0, 0.0, 0.0]))  # F_d^-1 g

    def xi(x):
        return np.asarray(x) @ v

    char = check_characteristic(design.target, xi, grid)
    inv = involutivity_check(design.target, grid)
    ok = criterion(
        6,
        "characteristic coordinate and involutivity",
        char.residual < 1e-9 and char.independent and inv.max_bracket < 1e-10 and inv.involutive,
        f"||G_perp F_d grad xi|| = {char.residual:.2e} < 1e-9; max bracket {inv.max_bracket:.2e} < 1e-10",
    )
    assert ok


def test_criterion_7_closed_loop_simulation(ctrl, criterion):
    x0 = (0.0, -0.002, 0.0)
    run = simulate(ctrl, SimConfig(dt=1e-4, t_end=2.0, x0=x0))
    half = simulate(ctrl, SimConfig(dt=5e-5, t_end=2.0, x0=x0, record_every=40000))
    y2_end = run.x[-1, 1] + P.y2_star
    increase, violation = lyapunov_audit(run, 1e-9)
    u_max = float(np.max(np.abs(run.u)))
    step_diff = float(np.max(np.abs(run.x[-1] - half.x[-1])))
    checks = [
        abs(run.t[-1] - 2.0) < 1e-12,
        abs(y2_end - 0.002) < 1e-5,
        violation is None,
        np.isfinite(u_max) and u_max < 10.0,
        run.ok and half.ok,
        step_diff < 1e-8,
    ]
    ok = criterion(
        7,
        "closed-loop simulation",
        all(checks),
        f"|y2(2) - 0.002| = {abs(y2_end - 0.002):.2e} < 1e-5; max energy increase {increase:.1e}; "
        f"max |u| = {u_max:.3f} V; events {run.events + half.events}; dt-halving change {step_diff:.1e} < 1e-8",
    )
    assert ok


def test_criterion_8_gradient_and_hessian_numerics(design, energy, grid, criterion):
    E, _ = energy
    grad_rel = integrability_residual(E, grid)
    Z = design.coords.tau(grid.points)
    J = jacobian(lambda z: E.grad_z(z, check=False), Z, E.cfg)
    asym = float(np.max(np.abs(J - np.swapaxes(J, -1, -2)) / np.abs(J).max(axis=(-2, -1), keepdims=True)))
    g_star = float(np.max(np.abs(E.grad_x(design.system.x_star))))
    cert = hessian_certificate(E)
    ok = criterion(
        8,
        "gradient and Hessian numerics",
        grad_rel < 1e-6 and asym < 1e-5 and g_star < 1e-9 and cert.lam_min_x > 0,
        f"gradient relative {grad_rel:.2e} < 1e-6; Hessian asymmetry {asym:.2e} < 1e-5; "
        f"|grad H_d(x*)| = {g_star:.1e} < 1e-9; lambda_min = {cert.lam_min_x:.4g} > 0",
    )
    assert ok


def test_criterion_9_sweep_brackets_bound(criterion):
    cfg = pipeline.load_config(None, {"sweep.values1": "100,200,300,350,400,500", "sweep.values2": "20"})
    rows = pipeline.run_sweep(cfg, simulate_cells=False)
    certs = [(r["gain1"], r["certificate"]) for r in rows]
    flips = [(a[0], b[0]) for a, b in zip(certs, certs[1:]) if a[1] != b[1]]
    ok = criterion(
        9,
        "certificate boundary in a p1 sweep",
        flips == [(300.0, 350.0)] and not certs[0][1],
        f"certificate by p1: {certs}; flips between {flips}",
    )
    assert ok
