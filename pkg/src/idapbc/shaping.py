"""Construction of the shaped energy in characteristic coordinates.

In ``z = (xi, eta)`` the energy gradient splits as ``(beta(z), rho(z))``:

* ``rho`` solves the reduced algebraic system obtained from the matching
  equation once ``xi`` is characteristic;
* ``beta`` and the energy ``H_bar`` are recovered by line integrals from the
  equilibrium ``z*``, with a user-supplied ``M1`` (verified, not solved for)
  plus a constant ``M2 = c I`` chosen to make the Hessian at ``z*`` positive.

All evaluators are batched over leading axes.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ContractError, DomainError, NumericalFailure, ShapeabilityError, SingularityError
from .model import AffineSystem, CoordinateChange, SampleGrid, TargetStructure
from .numerics import DEFAULT_STEPS, FieldFn, StepConfig, constant_value, gauss_legendre, gradient, hessian, jacobian

GUARD_POINTS = 8
GUARD_SLACK = 0.01
COND_LIMIT = 1e12


def build_rho(
    system: AffineSystem, target: TargetStructure, coords: CoordinateChange, cfg: StepConfig | None = None
) -> FieldFn:
    """Gradient of the energy along ``eta``: ``(G_perp F_d deta/dx^T)^-1 G_perp f`` at ``x = tau^-1(z)``.

    The ``eta`` Jacobian comes from ``coords.jacobian`` (analytic when the
    coordinates provide one).
    """
    m = coords.m
    W, Gp = target.W_constant, constant_value(target.G_perp)
    if coords.matrix is not None and W is not None:
        # constant reduced system: rho(z) = K f(tau^-1(z)) with K computed once
        K = _checked_solve(W @ coords.matrix[m:].T, Gp)
        return lambda z: np.asarray(system.f(coords.inverse(z)), dtype=float) @ K.T

    def rho(z):
        x = coords.inverse(z)
        J_eta = coords.jacobian(x)[..., m:, :]
        A = np.asarray(target.W(x), dtype=float) @ np.swapaxes(J_eta, -1, -2)
        b = np.asarray(target.G_perp(x), dtype=float) @ np.asarray(system.f(x), dtype=float)[..., None]
        return _checked_solve(A, b)[..., 0]

    return rho


def _checked_solve(A, b):
    """``A^-1 b`` with a 1-norm condition estimate guarding against near-singular ``A``."""
    try:
        A_inv = np.linalg.inv(A)
    except np.linalg.LinAlgError as exc:
        raise SingularityError("reduced matching system is singular (condition estimate inf)") from exc
    cond = np.abs(A).sum(axis=-2).max(axis=-1) * np.abs(A_inv).sum(axis=-2).max(axis=-1)
    if not np.all(cond < COND_LIMIT):
        worst = float(np.max(np.where(np.isfinite(cond), cond, np.inf)))
        raise SingularityError(f"reduced matching system is singular (condition estimate {worst:.3g})")
    return A_inv @ b


def segment_guard(system: AffineSystem, coords: CoordinateChange, slack: float = GUARD_SLACK) -> Callable:
    """Return ``check(z)`` raising :class:`DomainError` if the segment ``z* -> z`` leaves the box.

    For linear coordinates the segment maps to the straight segment ``x* -> x``,
    which stays in the (convex) box iff its endpoint does; otherwise
    ``GUARD_POINTS`` points along the segment are mapped back and tested.
    """
    z_star = coords.z_star
    lams = np.array([1.0]) if coords.linear else np.arange(1, GUARD_POINTS + 1) / GUARD_POINTS

    def check(z):
        z = np.asarray(z, dtype=float)
        pts = z_star + lams.reshape((-1,) + (1,) * z.ndim) * (z - z_star)
        inside = system.contains(coords.inverse(pts), slack=slack)
        if not np.all(inside):
            bad = np.argwhere(~inside)[0]
            raise DomainError(
                f"integration segment from z* to z leaves the domain near lambda={lams[bad[0]]:.3g}"
            )

    return check


def _along_segment(z_star, z, nodes):
    z = np.asarray(z, dtype=float)
    lam = nodes.reshape((-1,) + (1,) * z.ndim)
    return z_star + lam * (z - z_star)


@functools.lru_cache(maxsize=None)
def _stencil(q: int, m: int, n: int, with_end: bool):
    """Segment parameters and unit offsets of every point ``_segment_terms`` evaluates.

    Rows are ordered ``[+e_1 .. +e_m, -e_1 .. -e_m]`` blocks of ``q`` nodes,
    followed by the endpoint ``lambda = 1`` when ``with_end``.
    """
    nodes, _ = gauss_legendre(q)
    lam = np.tile(nodes, 2 * m)
    offset = np.zeros((2 * m * q, n))
    for i in range(m):
        offset[i * q : (i + 1) * q, i] = 1.0
        offset[(m + i) * q : (m + i + 1) * q, i] = -1.0
    if with_end:
        lam = np.append(lam, 1.0)
        offset = np.vstack([offset, np.zeros(n)])
    for a in (lam, offset):
        a.setflags(write=False)
    return lam, offset


def _segment_terms(M: FieldFn, rho: FieldFn, z_star, m: int, cfg: StepConfig, z, with_rho: bool):
    """``beta(z)`` and optionally ``rho(z)`` from one batched call of ``rho``.

    The integrand needs ``drho/dxi`` at every quadrature node; the central
    difference probes and, if requested, ``z`` itself are evaluated together.
    One step ``h = fd_step * max(1, |xi|)`` serves the whole segment, with
    ``|xi|`` bounded by its values at the two (convexly combined) endpoints.
    """
    q = cfg.quad_order
    nodes, weights = gauss_legendre(q)
    lam, offset = _stencil(q, m, z.shape[-1] if np.ndim(z) else 0, with_rho)
    z = np.asarray(z, dtype=float)
    n = z.shape[-1]
    batch = z.shape[:-1]
    dz = z - z_star
    floor = max(1.0, float(np.abs(z_star[:m]).max(initial=0.0)))
    h = cfg.fd_step * np.maximum(np.abs(z[..., :m]).max(axis=-1), floor)
    pad = (1,) * len(batch)
    lam_b = lam.reshape((-1,) + pad + (1,))
    pts = z_star + lam_b * dz + offset.reshape((-1,) + pad + (n,)) * h[..., None]
    vals = np.asarray(rho(pts), dtype=float)  # (rows, ..., n-m)
    if not np.isfinite(vals).all():
        raise NumericalFailure("rho is not finite along the integration segment")
    k = 2 * m * q
    r = vals[:k].reshape((2, m, q) + batch + (n - m,))
    C = (r[0] - r[1]) / (2.0 * h[..., None])  # (m, q, ..., n-m): C[i, ..., k] = drho_k / dxi_i
    P = z_star + nodes.reshape((-1,) + pad + (1,)) * dz
    Mv = np.asarray(M(P), dtype=float)  # (q, ..., m, m)
    integrand = (Mv @ dz[..., :m, None])[..., 0] + np.einsum("iq...k,...k->q...i", C, dz[..., m:])
    beta = (weights @ integrand.reshape(q, -1)).reshape(batch + (m,))
    if with_rho:
        return beta, vals[k]
    return beta


def build_beta(M: FieldFn, rho: FieldFn, z_star, m: int, cfg: StepConfig | None = None) -> FieldFn:
    """``beta(z) = (int_0^1 [M, drho/dxi^T](z* + lam dz) dlam) dz``; zero at ``z*`` exactly."""
    cfg = cfg or DEFAULT_STEPS
    z_star = np.asarray(z_star, dtype=float)
    return lambda z: _segment_terms(M, rho, z_star, m, cfg, z, with_rho=False)


def build_energy(beta: FieldFn, rho: FieldFn, z_star, cfg: StepConfig | None = None) -> FieldFn:
    """``H_bar(z) = (int_0^1 [beta^T, rho^T](z* + lam dz) dlam) dz``; zero at ``z*`` exactly."""
    cfg = cfg or DEFAULT_STEPS
    z_star = np.asarray(z_star, dtype=float)
    nodes, weights = gauss_legendre(cfg.quad_order)

    def H_bar(z):
        z = np.asarray(z, dtype=float)
        P = _along_segment(z_star, z, nodes)
        grad = np.concatenate([beta(P), rho(P)], axis=-1)
        return np.tensordot(weights, np.einsum("...i,...i->...", grad, z - z_star), axes=(0, 0))

    return H_bar


@dataclass(frozen=True)
class M1Residuals:
    symmetry: float
    xi_cross: float
    eta: float

    def passed(self, tol_pde: float, tol_pde2: float) -> bool:
        return self.symmetry <= tol_pde and self.xi_cross <= tol_pde and self.eta <= tol_pde2


def verify_M1(M1: FieldFn, rho: FieldFn, Z, m: int, cfg: StepConfig | None = None) -> M1Residuals:
    """Worst residuals, over the points ``Z`` (in z coordinates), of the three conditions on ``M1``:

    ``M = M^T``; ``dM_ij/dxi_k = dM_ik/dxi_j``; ``dM_ij/deta_k = d2 rho_k / dxi_i dxi_j``.
    """
    cfg = cfg or DEFAULT_STEPS
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    n = Z.shape[-1]
    Mv = np.asarray(M1(Z), dtype=float)
    sym = float(np.max(np.abs(Mv - np.swapaxes(Mv, -1, -2))))

    D_xi = jacobian(M1, Z, cfg, columns=range(m))  # [..., i, j, k] = dM_ij / dxi_k
    xi_cross = float(np.max(np.abs(D_xi - np.swapaxes(D_xi, -1, -2))))

    D_eta = jacobian(M1, Z, cfg, columns=range(m, n))  # [..., i, j, k] = dM_ij / deta_k
    eta = 0.0
    for k in range(n - m):
        H_k = hessian(lambda z, k=k: rho(z)[..., k], Z, cfg)[..., :m, :m]
        eta = max(eta, float(np.max(np.abs(D_eta[..., k] - H_k))))
    return M1Residuals(sym, xi_cross, eta)


@dataclass(frozen=True)
class M2Selection:
    """Constant ``M2 = value * I`` and the data behind it.

    ``bound`` is ``lambda_max(C^T B^-1 C) - lambda_min(M1(z*))``; ``literal_bound``
    uses ``C^T B C`` instead and is kept only for reporting.
    """

    M2: np.ndarray
    bound: float
    literal_bound: float
    margin: float
    B: np.ndarray
    C: np.ndarray
    M1_star: np.ndarray

    @property
    def value(self) -> float:
        return float(self.M2[0, 0])

    @property
    def schur_max(self) -> float:
        """``lambda_max(C^T B^-1 C)``, the bound before subtracting ``M1(z*)``."""
        return self.bound + float(np.linalg.eigvalsh(0.5 * (self.M1_star + self.M1_star.T))[0])


def default_margin(bound: float) -> float:
    return max(1.0, 0.1 * abs(bound))


def select_M2(
    rho: FieldFn, M1: FieldFn, z_star, m: int, margin: float | None = None, cfg: StepConfig | None = None
) -> M2Selection:
    """Smallest scalar ``M2`` (plus ``margin``) making the Hessian at ``z*`` positive definite.

    With ``B = drho/deta(z*)`` and ``C = drho/dxi(z*)`` the Hessian is
    ``[[M1 + M2, C^T], [C, B]]``; it is positive definite iff ``B > 0`` and the
    Schur complement ``M1 + M2 - C^T B^-1 C > 0``.

    Raises
    ------
    ShapeabilityError
        If ``B`` is not symmetric positive definite.
    """
    z_star = np.asarray(z_star, dtype=float)
    J = jacobian(rho, z_star, cfg)
    C, B = J[:, :m], J[:, m:]
    scale = max(1.0, float(np.max(np.abs(B))))
    if np.max(np.abs(B - B.T)) > 1e-6 * scale:
        raise ShapeabilityError(f"drho/deta(z*) is not symmetric: {B.tolist()}")
    B = 0.5 * (B + B.T)
    if np.linalg.eigvalsh(B)[0] <= 0.0:
        raise ShapeabilityError(f"drho/deta(z*) is not positive definite (eigenvalues {np.linalg.eigvalsh(B)})")
    M1_star = np.asarray(M1(z_star), dtype=float).reshape(m, m)
    lam_m1 = float(np.linalg.eigvalsh(0.5 * (M1_star + M1_star.T))[0])
    S = C.T @ np.linalg.solve(B, C)
    bound = float(np.linalg.eigvalsh(0.5 * (S + S.T))[-1]) - lam_m1
    literal = float(np.linalg.eigvalsh(C.T @ B @ C)[-1]) - lam_m1
    if margin is None:
        margin = default_margin(bound)
    elif not margin > 0:
        raise ContractError(f"M2 margin must be positive, got {margin}")
    M2 = max(0.0, bound + margin) * np.eye(m)
    return M2Selection(M2, bound, literal, float(margin), B, C, M1_star)


@dataclass(frozen=True)
class ShapedEnergy:
    """The assembled energy and its gradients in both coordinate systems."""

    system: AffineSystem
    coords: CoordinateChange
    rho: FieldFn
    M1: FieldFn
    M2: np.ndarray
    cfg: StepConfig = DEFAULT_STEPS
    guard: Callable | None = None

    def __post_init__(self):
        M2 = np.array(self.M2, dtype=float).reshape(self.coords.m, self.coords.m)
        if np.max(np.abs(M2 - M2.T)) > 0:
            raise ContractError("M2 must be symmetric")
        M2.setflags(write=False)
        object.__setattr__(self, "M2", M2)
        beta = build_beta(self.M, self.rho, self.coords.z_star, self.coords.m, self.cfg)
        object.__setattr__(self, "_beta", beta)
        object.__setattr__(self, "_H_bar", build_energy(beta, self.rho, self.coords.z_star, self.cfg))

    @property
    def m(self) -> int:
        return self.coords.m

    def M(self, z):
        return np.asarray(self.M1(z), dtype=float) + self.M2

    def _check(self, z):
        if self.guard is not None:
            self.guard(z)

    def beta(self, z):
        self._check(z)
        return self._beta(z)

    def H_bar(self, z, check: bool = True):
        """Energy in z coordinates; ``check=False`` skips the domain guard (for stencils)."""
        if check:
            self._check(z)
        return self._H_bar(z)

    def grad_z(self, z, check: bool = True):
        """``(beta(z), rho(z))``."""
        if check:
            self._check(z)
        beta, rho = _segment_terms(self.M, self.rho, self.coords.z_star, self.m, self.cfg, z, with_rho=True)
        return np.concatenate([beta, rho], axis=-1)

    def H(self, x, check: bool = True):
        return self.H_bar(self.coords.tau(x), check)

    def grad_x(self, x):
        """``dtau/dx^T grad_z H_bar`` at ``z = tau(x)``."""
        x = np.asarray(x, dtype=float)
        J = self.coords.jacobian(x)
        return np.einsum("...ji,...j->...i", J, self.grad_z(self.coords.tau(x)))


def shape_energy(
    system: AffineSystem,
    target: TargetStructure,
    coords: CoordinateChange,
    M1: FieldFn,
    M2="auto",
    margin: float | None = None,
    cfg: StepConfig | None = None,
    guard: bool = True,
) -> tuple[ShapedEnergy, M2Selection]:
    """Build ``rho``, select or accept ``M2``, and assemble the energy.

    ``M2`` is ``"auto"`` (use :func:`select_M2`), a scalar (times identity) or
    an ``m x m`` matrix. The selection is always computed so the bound can be
    reported.
    """
    cfg = cfg or DEFAULT_STEPS
    if coords.m != system.m:
        raise ContractError(f"coords provide {coords.m} characteristic coordinates, system has m={system.m}")
    rho = build_rho(system, target, coords, cfg)
    selection = select_M2(rho, M1, coords.z_star, coords.m, margin, cfg)
    if isinstance(M2, str):
        if M2 != "auto":
            raise ContractError(f"M2 must be 'auto', a number or a matrix, got {M2!r}")
        M2_value = selection.M2
    else:
        M2_value = np.asarray(M2, dtype=float)
        M2_value = M2_value * np.eye(coords.m) if M2_value.ndim == 0 else M2_value
    energy = ShapedEnergy(
        system, coords, rho, M1, M2_value, cfg, segment_guard(system, coords) if guard else None
    )
    return energy, selection


def integrability_residual(energy: ShapedEnergy, grid: SampleGrid) -> float:
    """Worst relative gap between a finite-difference gradient of ``H_bar`` and ``(beta, rho)``."""
    Z = energy.coords.tau(grid.points)
    fd = gradient(energy._H_bar, Z, energy.cfg)
    an = energy.grad_z(Z)
    scale = np.maximum(1.0, np.linalg.norm(an, axis=-1))
    return float(np.max(np.linalg.norm(fd - an, axis=-1) / scale))


@dataclass(frozen=True)
class HessianCertificate:
    lam_min_z: float
    lam_min_x: float
    hessian_z: np.ndarray
    hessian_x: np.ndarray

    @property
    def consistent(self) -> bool:
        """Congruence preserves definiteness, so the two signs must agree."""
        return bool(np.sign(self.lam_min_z) == np.sign(self.lam_min_x))

    @property
    def positive(self) -> bool:
        return self.lam_min_z > 0 and self.lam_min_x > 0


def hessian_certificate(energy: ShapedEnergy, x_star=None) -> HessianCertificate:
    """Finite-difference Hessians of the energy at the equilibrium in ``z`` and in ``x``."""
    x_star = energy.coords.x_star if x_star is None else np.asarray(x_star, dtype=float)
    Hz = hessian(energy._H_bar, energy.coords.tau(x_star), energy.cfg)
    Hx = hessian(lambda x: energy._H_bar(energy.coords.tau(x)), x_star, energy.cfg)
    return HessianCertificate(float(np.linalg.eigvalsh(Hz)[0]), float(np.linalg.eigvalsh(Hx)[0]), Hz, Hx)
