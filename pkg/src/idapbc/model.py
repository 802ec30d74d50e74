"""Plant, target port-Hamiltonian structure and characteristic change of coordinates.

Conditions that the theory states "for all x in Omega" are verified on a
finite :class:`SampleGrid`; a passing :class:`ValidationReport` is evidence on
the samples, not a proof over the box.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np
from scipy.stats import qmc

from .errors import ContractError, NumericalFailure, SingularityError
from .numerics import DEFAULT_STEPS, FieldFn, StepConfig, constant_value, jacobian, numerical_rank, pseudo_inverse


@dataclass(frozen=True)
class Tolerances:
    """Acceptance thresholds used across the toolkit (absolute unless noted)."""

    ann: float = 1e-9  # ||G_perp G||
    eq: float = 1e-9  # ||G_perp f|| at x*
    psd: float = 1e-9  # lambda_max(F_d + F_d^T)
    inv: float = 1e-12  # ||tau(tau^-1(z)) - z||
    char: float = 1e-9  # ||G_perp F_d grad xi||
    sym: float = 1e-7  # asymmetry of d(F_d^-1 g_i)/dx
    lie: float = 1e-9  # L_wi s_j - L_wj s_i
    const: float = 1e-9  # variation of G_perp F_d over the grid
    pde: float = 1e-6  # M1 symmetry and xi-integrability
    pde2: float = 1e-4  # M1 eta-condition (second derivatives of rho)
    match: float = 1e-7  # matching-equation residual
    grad: float = 1e-6  # relative gradient consistency of the energy
    lyap: float = 1e-9  # relative per-step energy increase

    def replace(self, **changes) -> "Tolerances":
        known = {f.name for f in fields(self)}
        unknown = set(changes) - known
        if unknown:
            raise ContractError(f"unknown tolerance(s): {sorted(unknown)}")
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update({k: float(v) for k, v in changes.items()})
        return Tolerances(**values)


DEFAULT_TOLERANCES = Tolerances()


def _frozen_array(a, name: str, shape=None) -> np.ndarray:
    a = np.array(a, dtype=float)
    if shape is not None and a.shape != shape:
        raise ContractError(f"{name} must have shape {shape}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ContractError(f"{name} has non-finite entries")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class AffineSystem:
    """Control-affine plant ``dx/dt = f(x) + G(x) u`` on a box domain.

    ``f`` maps ``(..., n) -> (..., n)`` and ``G`` maps ``(..., n) -> (..., n, m)``.
    """

    n: int
    m: int
    f: FieldFn
    G: FieldFn
    lower: np.ndarray
    upper: np.ndarray
    x_star: np.ndarray
    name: str = "system"

    def __post_init__(self):
        if not 0 < self.m < self.n:
            raise ContractError(f"need 0 < m < n for an underactuated system, got n={self.n}, m={self.m}")
        for name in ("lower", "upper", "x_star"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name), name, (self.n,)))
        if np.any(self.lower >= self.upper):
            raise ContractError("domain box needs lower < upper in every coordinate")
        if not self.contains(self.x_star):
            raise ContractError("x_star lies outside the domain box")

    def contains(self, x, slack: float = 0.0):
        """True where ``x`` lies in the box widened by ``slack`` times its width."""
        x = np.asarray(x, dtype=float)
        lo, hi = self.lower, self.upper
        if slack:
            pad = slack * (hi - lo)
            lo, hi = lo - pad, hi + pad
        # NaN compares false, so non-finite states are outside
        return ((x >= lo) & (x <= hi)).all(axis=-1)

    def vector_field(self, x, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return self.f(x) + np.einsum("...ij,...j->...i", self.G(x), u)


@dataclass(frozen=True)
class TargetStructure:
    """Desired closed-loop structure: ``F_d = J_d - R_d`` and a left annihilator of ``G``."""

    F_d: FieldFn
    G_perp: FieldFn

    def W(self, x) -> np.ndarray:
        """``G_perp(x) F_d(x)``; its rows span the distribution Delta."""
        W = self.W_constant
        if W is not None:
            return np.broadcast_to(W, np.shape(x)[:-1] + W.shape)
        return self.G_perp(x) @ self.F_d(x)

    @property
    def W_constant(self) -> np.ndarray | None:
        """``G_perp F_d`` when both factors are :class:`ConstantField`, else ``None``."""
        Gp, Fd = constant_value(self.G_perp), constant_value(self.F_d)
        return None if Gp is None or Fd is None else Gp @ Fd


def newton_inverse(
    tau: FieldFn,
    z,
    x_guess,
    tol: float = 1e-12,
    max_iter: int = 50,
    cfg: StepConfig | None = None,
    jac: FieldFn | None = None,
    full_output: bool = False,
):
    """Solve ``tau(x) = z`` by Newton's method, batched over leading axes of ``z``.

    Parameters
    ----------
    tau : callable
        Forward map ``(..., n) -> (..., n)``.
    z : array_like, shape (..., n)
    x_guess : array_like, broadcastable to ``z``
    tol : float
        Absolute bound on ``||tau(x) - z||`` at every point.
    jac : callable, optional
        Analytic ``d tau / dx``; finite differences otherwise.
    full_output : bool
        Also return ``(iterations, trace)`` with the worst residual per iterate.

    Raises
    ------
    SingularityError
        If the Jacobian is singular at an iterate.
    NumericalFailure
        If ``max_iter`` iterations do not reach ``tol``.
    """
    z = np.asarray(z, dtype=float)
    x = np.array(np.broadcast_to(np.asarray(x_guess, dtype=float), z.shape))
    jac = jac or (lambda y: jacobian(tau, y, cfg or DEFAULT_STEPS))
    trace = []
    for it in range(max_iter + 1):
        r = tau(x) - z
        err = float(np.max(np.linalg.norm(r, axis=-1), initial=0.0))
        trace.append(err)
        if not np.isfinite(err):
            raise NumericalFailure(f"newton_inverse diverged; residual trace {trace}")
        if err <= tol:
            return (x, it, trace) if full_output else x
        if it == max_iter:
            break
        J = jac(x)
        try:
            dx = np.linalg.solve(J, r[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise SingularityError(f"newton_inverse: singular Jacobian at iteration {it}; trace {trace}") from exc
        x = x - dx
    raise NumericalFailure(f"newton_inverse: no convergence in {max_iter} iterations; residual trace {trace}")


@dataclass(frozen=True)
class CoordinateChange:
    """``z = tau(x) = (xi(x), eta(x))`` with ``xi`` the characteristic coordinates.

    ``inverse`` and ``jacobian`` may be supplied in closed form; otherwise the
    inverse is computed by Newton iteration from ``x_star`` and the Jacobian
    by central differences. ``matrix`` holds ``T`` for linear coordinates
    ``z = T x`` built by :meth:`from_matrix`.
    """

    xi: FieldFn
    eta: FieldFn
    x_star: np.ndarray
    inverse_fn: FieldFn | None = None
    jacobian_fn: FieldFn | None = None
    linear: bool = False
    matrix: np.ndarray | None = None
    cfg: StepConfig = DEFAULT_STEPS
    tol_inv: float = 1e-12
    z_star: np.ndarray = field(init=False)
    m: int = field(init=False)

    def __post_init__(self):
        x_star = _frozen_array(self.x_star, "x_star")
        object.__setattr__(self, "x_star", x_star)
        xi_star = np.atleast_1d(np.asarray(self.xi(x_star), dtype=float))
        object.__setattr__(self, "m", xi_star.shape[-1])
        object.__setattr__(self, "z_star", _frozen_array(self.tau(x_star), "z_star"))
        if self.z_star.shape != x_star.shape:
            raise ContractError(f"tau must map R^n to R^n, got {self.z_star.shape} for n={x_star.size}")

    @classmethod
    def from_matrix(cls, T, x_star, m: int, T_inv=None) -> "CoordinateChange":
        """Linear coordinates ``z = T x``; the first ``m`` rows are the characteristic part.

        ``T_inv`` may be passed when an exact inverse is known.
        """
        T = _frozen_array(T, "T")
        n = T.shape[0]
        if T.shape != (n, n) or not 0 < m < n:
            raise ContractError("T must be square and 0 < m < n")
        if numerical_rank(T) < n:
            raise SingularityError("linear coordinate change is singular")
        T_inv = _frozen_array(np.linalg.inv(T) if T_inv is None else T_inv, "T_inv", (n, n))
        return cls(
            xi=lambda x: np.asarray(x) @ T[:m].T,
            eta=lambda x: np.asarray(x) @ T[m:].T,
            x_star=x_star,
            inverse_fn=lambda z: np.asarray(z) @ T_inv.T,
            jacobian_fn=lambda x: np.broadcast_to(T, np.shape(x)[:-1] + T.shape),
            linear=True,
            matrix=T,
        )

    def tau(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        xi = np.asarray(self.xi(x), dtype=float)
        if xi.ndim == x.ndim - 1:
            xi = xi[..., None]
        return np.concatenate([xi, np.asarray(self.eta(x), dtype=float)], axis=-1)

    def jacobian(self, x) -> np.ndarray:
        """``d tau / dx`` with shape ``(..., n, n)``."""
        if self.jacobian_fn is not None:
            return np.asarray(self.jacobian_fn(x), dtype=float)
        return jacobian(self.tau, x, self.cfg)

    def inverse(self, z) -> np.ndarray:
        if self.inverse_fn is not None:
            return np.asarray(self.inverse_fn(z), dtype=float)
        jac = self.jacobian if self.jacobian_fn is not None else None
        return newton_inverse(self.tau, z, self.x_star, tol=self.tol_inv, cfg=self.cfg, jac=jac)


@dataclass(frozen=True)
class SampleGrid:
    """Finite stand-in for the domain: sample points, the target equilibrium last."""

    points: np.ndarray

    @property
    def count(self) -> int:
        return self.points.shape[0]


def make_grid(system: AffineSystem, count: int = 512, seed: int = 0, method: str = "lhs") -> SampleGrid:
    """Latin-hypercube (or uniform) samples of the domain box plus ``x_star``."""
    if count < 0:
        raise ContractError("grid count must be non-negative")
    if method == "lhs":
        unit = qmc.LatinHypercube(d=system.n, seed=seed).random(count) if count else np.empty((0, system.n))
    elif method == "uniform":
        unit = np.random.default_rng(seed).random((count, system.n))
    else:
        raise ContractError(f"unknown grid method {method!r}")
    pts = system.lower + unit * (system.upper - system.lower)
    pts = np.vstack([pts, system.x_star[None, :]])
    pts.setflags(write=False)
    return SampleGrid(pts)


@dataclass
class Check:
    name: str
    value: float
    tol: float
    passed: bool
    note: str = ""


@dataclass
class ValidationReport:
    """Worst-case residuals of the structural preconditions over a grid."""

    checks: list[Check]
    dissipation_extrema: tuple[float, float]
    grid_count: int

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        out = {"validation.grid_count": self.grid_count, "validation.passed": self.passed}
        for c in self.checks:
            out[f"validation.{c.name}.value"] = c.value
            out[f"validation.{c.name}.tol"] = c.tol
            out[f"validation.{c.name}.passed"] = c.passed
        out["validation.dissipation.lambda_min"] = self.dissipation_extrema[0]
        out["validation.dissipation.lambda_max"] = self.dissipation_extrema[1]
        return out


def validate_system(
    system: AffineSystem,
    target: TargetStructure,
    grid: SampleGrid,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> ValidationReport:
    """Check the preconditions of the IDA-PBC problem on every grid point.

    Covers the rank of ``G``, annihilation ``G_perp G = 0`` and rank of
    ``G_perp``, the dissipation inequality ``F_d + F_d^T <= 0`` and the
    assignability of ``x_star``. Failures are recorded, never raised.
    """
    X = grid.points
    n, m = system.n, system.m
    G = np.asarray(system.G(X), dtype=float)
    Gp = np.asarray(target.G_perp(X), dtype=float)
    Fd = np.asarray(target.F_d(X), dtype=float)
    if G.shape != (len(X), n, m):
        raise ContractError(f"G must return (..., {n}, {m}), got {G.shape[1:]}")
    if Gp.shape != (len(X), n - m, n):
        raise ContractError(f"G_perp must return (..., {n - m}, {n}), got {Gp.shape[1:]}")
    if Fd.shape != (len(X), n, n):
        raise ContractError(f"F_d must return (..., {n}, {n}), got {Fd.shape[1:]}")

    checks = []
    g_rank = int(np.min(numerical_rank(G)))
    checks.append(Check("rank_G", g_rank, m, g_rank == m, "minimum numerical rank of G over the grid"))
    gp_rank = int(np.min(numerical_rank(Gp)))
    checks.append(Check("rank_G_perp", gp_rank, n - m, gp_rank == n - m))

    ann = float(np.max(np.linalg.norm(Gp @ G, axis=(-2, -1))))
    checks.append(Check("annihilation", ann, tol.ann, ann <= tol.ann, "max ||G_perp G||_F"))

    if g_rank == m:
        Gd = pseudo_inverse(G)
        pinv = float(np.max(np.abs(Gd @ G - np.eye(m))))
        checks.append(Check("pseudo_inverse", pinv, tol.ann, pinv <= tol.ann, "max |G^+ G - I|"))

    lam = np.linalg.eigvalsh(Fd + np.swapaxes(Fd, -1, -2))
    lam_min, lam_max = float(lam[:, 0].min()), float(lam[:, -1].max())
    checks.append(Check("dissipation", lam_max, tol.psd, lam_max <= tol.psd, "max lambda_max(F_d + F_d^T)"))

    xs = system.x_star
    eq = float(np.linalg.norm(target.G_perp(xs) @ system.f(xs)))
    checks.append(Check("equilibrium", eq, tol.eq, eq <= tol.eq, "||G_perp(x*) f(x*)||"))

    return ValidationReport(checks, (lam_min, lam_max), grid.count)


def check_roundtrip(coords: CoordinateChange, grid: SampleGrid) -> float:
    """Worst ``||tau^-1(tau(x)) - x||`` over the grid."""
    X = grid.points
    return float(np.max(np.linalg.norm(coords.inverse(coords.tau(X)) - X, axis=-1)))

