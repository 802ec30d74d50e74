"""Sampled tests for maximum energy shapeability.

Let ``W(x) = G_perp(x) F_d(x)`` with rows ``w_i`` and ``s(x) = G_perp(x) f(x)``.
A system is maximally shapeable when the matching equation ``W grad H = s``
is solvable and its homogeneous part admits ``m`` independent solutions
(the characteristic coordinates). Three sufficient routes are checked:

* gradient route: ``F_d`` invertible, ``d(F_d^-1 g_i)/dx`` symmetric, and the
  augmented distribution spanned by ``(w_i, s_i)`` closes at rank ``n - m``;
* codimension-one route: ``m = n - 1`` with ``W`` nonvanishing;
* constant route: ``W`` constant with full rank and
  ``L_{w_i} s_j = L_{w_j} s_i`` for all pairs.

Every statement here holds at the grid points only. Reports say "consistent
with involutive", never "involutive".
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, ShapeabilityError, SingularityError
from .model import DEFAULT_TOLERANCES, AffineSystem, CoordinateChange, SampleGrid, TargetStructure, Tolerances
from .numerics import DEFAULT_STEPS, RANK_RTOL, FieldFn, StepConfig, jacobian, numerical_rank


@dataclass
class InvolutivityResult:
    rank_delta: np.ndarray
    rank_closure: np.ndarray
    max_bracket: float
    expected: int

    @property
    def regular(self) -> bool:
        """Rank of the spanning fields is ``expected`` at every sample."""
        return bool(np.all(self.rank_delta == self.expected))

    @property
    def involutive(self) -> bool:
        """Brackets never raise the rank (consistent with involutive on the grid)."""
        return self.regular and bool(np.all(self.rank_closure == self.rank_delta))


def _pair_indices(d: int):
    return [(i, j) for i in range(d) for j in range(i + 1, d)]


def _distribution_ranks(vectors: np.ndarray, brackets: np.ndarray, expected: int) -> InvolutivityResult:
    rank_delta = numerical_rank(np.swapaxes(vectors, -1, -2), RANK_RTOL)
    if brackets.shape[-2]:
        closure = np.concatenate([vectors, brackets], axis=-2)
        rank_closure = numerical_rank(np.swapaxes(closure, -1, -2), RANK_RTOL)
        max_bracket = float(np.max(np.linalg.norm(brackets, axis=-1)))
    else:
        rank_closure, max_bracket = rank_delta, 0.0
    return InvolutivityResult(np.atleast_1d(rank_delta), np.atleast_1d(rank_closure), max_bracket, expected)


def _row_brackets(W_fn: FieldFn, X: np.ndarray, cfg: StepConfig):
    W = np.asarray(W_fn(X), dtype=float)  # (N, d, n)
    DW = jacobian(W_fn, X, cfg)  # (N, d, n, n): DW[..., i, :, :] = D w_i
    pairs = _pair_indices(W.shape[-2])
    br = [
        np.einsum("...ab,...b->...a", DW[..., j, :, :], W[..., i, :])
        - np.einsum("...ab,...b->...a", DW[..., i, :, :], W[..., j, :])
        for i, j in pairs
    ]
    brackets = np.stack(br, axis=-2) if br else np.zeros(W.shape[:-2] + (0, W.shape[-1]))
    return W, brackets


def involutivity_check(
    target: TargetStructure, grid: SampleGrid, expected: int | None = None, cfg: StepConfig | None = None
) -> InvolutivityResult:
    """Rank of ``{w_i}`` versus ``{w_i} + {[w_i, w_j]}`` at every grid point.

    ``expected`` defaults to the number of rows of ``W`` (that is ``n - m``).
    """
    cfg = cfg or DEFAULT_STEPS
    W, brackets = _row_brackets(target.W, grid.points, cfg)
    return _distribution_ranks(W, brackets, W.shape[-2] if expected is None else expected)


def augmented_involutivity_check(
    system: AffineSystem, target: TargetStructure, grid: SampleGrid, cfg: StepConfig | None = None
) -> InvolutivityResult:
    """Same test for the fields ``(w_i, s_i)`` on ``R^{n+1}``.

    The fields do not depend on the extra coordinate, so a bracket is
    ``([w_i, w_j], L_{w_i} s_j - L_{w_j} s_i)``.
    """
    cfg = cfg or DEFAULT_STEPS
    X = grid.points
    W, brackets = _row_brackets(target.W, X, cfg)
    s = _annihilated_drift(system, target)
    S = np.asarray(s(X), dtype=float)
    Ds = jacobian(s, X, cfg)
    lie = np.einsum("...jb,...ib->...ij", Ds, W)  # lie[i, j] = L_{w_i} s_j
    pairs = _pair_indices(W.shape[-2])
    tail = np.stack([lie[..., i, j] - lie[..., j, i] for i, j in pairs], axis=-1) if pairs else np.zeros(X.shape[:-1] + (0,))
    vectors = np.concatenate([W, S[..., :, None]], axis=-1)
    brackets = np.concatenate([brackets, tail[..., :, None]], axis=-1)
    return _distribution_ranks(vectors, brackets, system.n - system.m)


def _annihilated_drift(system: AffineSystem, target: TargetStructure) -> FieldFn:
    return lambda x: np.einsum("...ij,...j->...i", target.G_perp(x), system.f(x))


@dataclass
class CharacteristicResult:
    residuals: np.ndarray  # worst ||W grad xi_i|| per coordinate
    rank_min: int
    m: int

    @property
    def residual(self) -> float:
        return float(np.max(self.residuals, initial=0.0))

    @property
    def independent(self) -> bool:
        return self.rank_min == self.m

    def passed(self, tol: float) -> bool:
        return self.independent and self.residual <= tol


def check_characteristic(
    target: TargetStructure, xi: FieldFn, grid: SampleGrid, cfg: StepConfig | None = None
) -> CharacteristicResult:
    """Residual of the homogeneous matching equation for candidate coordinates ``xi``."""
    X = grid.points
    val = np.asarray(xi(X), dtype=float)
    if val.ndim == X.ndim - 1:
        scalar_xi = xi
        xi = lambda x: np.asarray(scalar_xi(x), dtype=float)[..., None]
    grad = jacobian(xi, X, cfg or DEFAULT_STEPS)  # (N, m, n)
    W = target.W(X)
    res = np.linalg.norm(np.einsum("...ab,...ib->...ia", W, grad), axis=-1)  # (N, m)
    rank = numerical_rank(grad, RANK_RTOL)
    return CharacteristicResult(np.max(res, axis=0), int(np.min(rank)), grad.shape[-2])


@dataclass
class GradientRouteResult:
    residual: float
    augmented: InvolutivityResult

    def passed(self, tol: float) -> bool:
        return self.residual <= tol and self.augmented.involutive


def _check_nonsingular(Fd: np.ndarray, X: np.ndarray) -> None:
    cond = np.linalg.cond(Fd)
    bad = np.flatnonzero(~np.isfinite(cond) | (cond > 1e12))
    if bad.size:
        raise SingularityError(f"F_d is singular at sample point {X[bad[0]].tolist()} (cond={cond[bad[0]]:.3g})")


def check_gradient_route(
    system: AffineSystem, target: TargetStructure, grid: SampleGrid, cfg: StepConfig | None = None
) -> GradientRouteResult:
    """Worst asymmetry ``||J - J^T||_2`` of ``J = d(F_d^-1 g_i)/dx`` over the grid and all ``i``.

    Also runs :func:`augmented_involutivity_check`, the solvability half of the route.

    Raises
    ------
    SingularityError
        If ``F_d`` is singular at a sample point.
    """
    cfg = cfg or DEFAULT_STEPS
    X = grid.points
    _check_nonsingular(np.asarray(target.F_d(X), dtype=float), X)

    def fields(x):
        return np.linalg.solve(target.F_d(x), system.G(x))  # (..., n, m), column i = F_d^-1 g_i

    J = jacobian(fields, X, cfg)  # (N, n, m, n)
    J = np.moveaxis(J, -2, -3)  # (N, m, n, n)
    asym = np.linalg.norm(J - np.swapaxes(J, -1, -2), ord=2, axis=(-2, -1))
    return GradientRouteResult(float(np.max(asym)), augmented_involutivity_check(system, target, grid, cfg))


def gradient_route_coordinates(system: AffineSystem, target: TargetStructure, grid: SampleGrid) -> FieldFn:
    """Characteristic coordinates ``xi = (F_d^-1 G)^T x`` when ``F_d^-1 G`` is constant.

    Raises
    ------
    ShapeabilityError
        If ``F_d^-1 G`` varies over the grid (closed form unavailable).
    """
    X = grid.points
    V = np.linalg.solve(target.F_d(X), system.G(X))
    V0 = V[-1]
    if np.max(np.abs(V - V0)) > 1e-12 * max(1.0, np.max(np.abs(V0))):
        raise ShapeabilityError("F_d^-1 G is not constant on the grid; supply xi explicitly")
    V0 = V0.copy()
    return lambda x: np.asarray(x, dtype=float) @ V0


@dataclass
class ConstantRouteResult:
    const_residual: float
    lie_residual: float
    rank: int
    expected_rank: int
    residual_matrix: np.ndarray  # at the worst grid point, antisymmetric

    def passed(self, tol_const: float, tol_lie: float) -> bool:
        return (
            self.const_residual <= tol_const and self.lie_residual <= tol_lie and self.rank == self.expected_rank
        )


def check_constant_route(
    system: AffineSystem, target: TargetStructure, grid: SampleGrid, cfg: StepConfig | None = None
) -> ConstantRouteResult:
    """Constancy of ``W`` and the pairwise Lie-derivative condition on ``s``.

    Only pairs ``i < j`` are evaluated; the reported matrix is filled in by
    antisymmetry.
    """
    cfg = cfg or DEFAULT_STEPS
    X = grid.points
    W = np.asarray(target.W(X), dtype=float)
    x_star_idx = _index_of(grid, system.x_star)
    W_star = target.W(system.x_star) if x_star_idx is None else W[x_star_idx]
    const_res = float(np.max(np.abs(W - W_star)))

    Ds = jacobian(_annihilated_drift(system, target), X, cfg)  # (N, d, n)
    d = W.shape[-2]
    R = np.zeros(X.shape[:-1] + (d, d))
    for i, j in _pair_indices(d):
        # L_{w_i} s_j - L_{w_j} s_i
        R[..., i, j] = np.einsum("...b,...b->...", Ds[..., j, :], W[..., i, :]) - np.einsum(
            "...b,...b->...", Ds[..., i, :], W[..., j, :]
        )
        R[..., j, i] = -R[..., i, j]
    per_point = np.max(np.abs(R), axis=(-2, -1)) if d > 1 else np.zeros(X.shape[:-1])
    worst = int(np.argmax(per_point))
    return ConstantRouteResult(
        const_residual=const_res,
        lie_residual=float(per_point[worst]),
        rank=int(numerical_rank(W_star, RANK_RTOL)),
        expected_rank=system.n - system.m,
        residual_matrix=R[worst],
    )


# shorter names under which the two sampled solvability tests are also known
check_theorem3 = check_gradient_route
check_theorem5 = check_constant_route


def _index_of(grid: SampleGrid, x) -> int | None:
    hits = np.flatnonzero(np.all(grid.points == x, axis=-1))
    return int(hits[0]) if hits.size else None


@dataclass
class ShapeabilityReport:
    """Sampled shapeability verdicts.

    Solvability routes:

    ``gradient_fields``
        each ``F_d^-1 g_i`` has a symmetric Jacobian and the distribution
        augmented with ``G_perp f`` is involutive.
    ``single_field``
        ``m = n - 1`` and the single row of ``G_perp F_d`` never vanishes.
    ``constant_structure``
        ``G_perp F_d`` is constant with full rank and ``L_{w_i} s_j = L_{w_j} s_i``.
    """

    involutivity: InvolutivityResult
    characteristic: CharacteristicResult
    gradient_fields: GradientRouteResult | None
    single_field_applicable: bool
    constant_structure: ConstantRouteResult
    verdicts: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def routes(self) -> list[str]:
        return [r for r in ("gradient_fields", "single_field", "constant_structure") if self.verdicts.get(r)]

    @property
    def passed(self) -> bool:
        return bool(self.verdicts.get("overall"))

    def to_dict(self) -> dict:
        inv = self.involutivity
        out = {
            "shapeability.involutivity.rank_min": int(inv.rank_delta.min()),
            "shapeability.involutivity.rank_max": int(inv.rank_delta.max()),
            "shapeability.involutivity.closure_rank_max": int(inv.rank_closure.max()),
            "shapeability.involutivity.max_bracket": inv.max_bracket,
            "shapeability.characteristic.residual": self.characteristic.residual,
            "shapeability.characteristic.rank_min": self.characteristic.rank_min,
            "shapeability.gradient_fields.residual": None if self.gradient_fields is None else self.gradient_fields.residual,
            "shapeability.single_field.applicable": self.single_field_applicable,
            "shapeability.constant_structure.const_residual": self.constant_structure.const_residual,
            "shapeability.constant_structure.lie_residual": self.constant_structure.lie_residual,
            "shapeability.constant_structure.rank": self.constant_structure.rank,
        }
        out.update({f"shapeability.verdict.{k}": v for k, v in self.verdicts.items()})
        out["shapeability.routes"] = ",".join(self.routes) or "none"
        return out

    def summary(self) -> str:
        inv = self.involutivity
        lines = [
            "Shapeability (sampled at %d points)" % inv.rank_delta.size,
            "  distribution rank %d..%d (expected %d); %s"
            % (
                inv.rank_delta.min(),
                inv.rank_delta.max(),
                inv.expected,
                "consistent with involutive" if inv.involutive else "NOT consistent with involutive",
            ),
            "  characteristic residual %.3e, independence rank %d of %d"
            % (self.characteristic.residual, self.characteristic.rank_min, self.characteristic.m),
            "  solvability routes passing: %s" % (", ".join(self.routes) or "none"),
            "  verdict: %s" % ("PASS" if self.passed else "FAIL"),
        ]
        lines += ["  note: " + n for n in self.notes]
        return "\n".join(lines)


def assess(
    system: AffineSystem,
    target: TargetStructure,
    coords: CoordinateChange,
    grid: SampleGrid,
    tol: Tolerances = DEFAULT_TOLERANCES,
    cfg: StepConfig | None = None,
) -> ShapeabilityReport:
    """Aggregate all sampled shapeability tests into one verdict.

    The verdict passes iff the ``m`` coordinates in ``coords.xi`` are verified
    characteristic and independent, the distribution is regular, and at least
    one solvability route passes.
    """
    if coords.m != system.m:
        raise ContractError(f"coords provide {coords.m} characteristic coordinates, system has m={system.m}")
    cfg = cfg or DEFAULT_STEPS
    notes = []
    inv = involutivity_check(target, grid, system.n - system.m, cfg)
    char = check_characteristic(target, coords.xi, grid, cfg)

    try:
        grad_route = check_gradient_route(system, target, grid, cfg)
    except SingularityError as exc:
        grad_route = None
        notes.append(f"gradient_fields route skipped: {exc}")

    W_norm = np.linalg.norm(target.W(grid.points), axis=(-2, -1))
    single = system.m == system.n - 1 and bool(np.all(W_norm > 0.0))
    const_route = check_constant_route(system, target, grid, cfg)

    verdicts = {
        "regular": inv.regular,
        "involutive": inv.involutive,
        "characteristic": char.passed(tol.char),
        "gradient_fields": grad_route is not None and grad_route.passed(tol.sym),
        "single_field": single,
        "constant_structure": const_route.passed(tol.const, tol.lie),
    }
    if not inv.regular:
        notes.append("distribution rank varies or drops below n - m on the grid; verdict withheld")
    verdicts["overall"] = (
        verdicts["regular"]
        and verdicts["characteristic"]
        and (verdicts["gradient_fields"] or verdicts["single_field"] or verdicts["constant_structure"])
    )
    return ShapeabilityReport(inv, char, grad_route, single, const_route, verdicts, notes)
