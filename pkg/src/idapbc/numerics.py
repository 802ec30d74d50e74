"""Finite differences, Gauss-Legendre line integrals and small symmetric linear algebra.

Every field handled by the toolkit follows one convention: it is a callable
taking states of shape ``(..., n)`` and returning an array of shape
``(..., *out)``, i.e. it broadcasts over any leading batch axes. Finite
difference probes and quadrature nodes are stacked onto those batch axes so a
whole stencil costs a single field call. Plain single-point functions can be
adapted with :func:`pointwise`.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ContractError, NumericalFailure, SingularityError

FieldFn = Callable[[np.ndarray], np.ndarray]

RANK_RTOL = 1e-8


@dataclass(frozen=True)
class StepConfig:
    """Step sizes shared by all finite-difference and quadrature routines.

    ``fd_step`` and ``hess_step`` are relative: coordinate ``i`` is perturbed by
    ``step * max(1, |x_i|)``.
    """

    fd_step: float = 1e-6
    hess_step: float = 1e-4
    quad_order: int = 16

    def __post_init__(self):
        for name in ("fd_step", "hess_step"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ContractError(f"{name} must lie in (0, 1), got {value}")
        if not 2 <= self.quad_order <= 64:
            raise ContractError(f"quad_order must lie in [2, 64], got {self.quad_order}")


DEFAULT_STEPS = StepConfig()


class ConstantField:
    """A field with the same value at every state.

    Callable like any other field; builders that recognise it hoist the
    value out of their inner loops.
    """

    def __init__(self, value):
        value = np.array(value, dtype=float)
        value.setflags(write=False)
        self.value = value

    def __call__(self, x):
        return np.broadcast_to(self.value, np.shape(x)[:-1] + self.value.shape)

    def __repr__(self):
        return f"ConstantField({self.value.tolist()})"


def constant_value(field) -> np.ndarray | None:
    """The value of a :class:`ConstantField`, else ``None``."""
    return field.value if isinstance(field, ConstantField) else None


def pointwise(fn: Callable[[np.ndarray], np.ndarray]) -> FieldFn:
    """Lift a function of a single state vector to the batched field convention."""

    @functools.wraps(fn)
    def batched(x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return np.asarray(fn(x), dtype=float)
        flat = x.reshape(-1, x.shape[-1])
        vals = np.array([np.asarray(fn(p), dtype=float) for p in flat])
        return vals.reshape(x.shape[:-1] + vals.shape[1:])

    return batched


def _as_state(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        raise ContractError("state must have at least one axis")
    if not np.all(np.isfinite(x)):
        raise ContractError("state contains non-finite entries")
    return x


def _evaluate_probes(field: FieldFn, probes: np.ndarray, probe_axis: int, what: str) -> np.ndarray:
    """Evaluate ``field`` on stacked probe points, naming the coordinate on failure."""
    try:
        vals = np.asarray(field(probes), dtype=float)
    except (ArithmeticError, ValueError, FloatingPointError) as exc:
        vals = None
        cause = exc
    else:
        cause = None
        if vals.shape[: probes.ndim - 1] != probes.shape[:-1]:
            raise ContractError(
                f"{what}: field returned shape {vals.shape} for input {probes.shape}; "
                "fields must broadcast over leading axes"
            )
        if np.all(np.isfinite(vals)):
            return vals

    # locate the offending coordinate
    for j in range(probes.shape[probe_axis]):
        sub = np.take(probes, [j], axis=probe_axis)
        try:
            sub_vals = np.asarray(field(sub), dtype=float)
            ok = np.all(np.isfinite(sub_vals))
        except (ArithmeticError, ValueError, FloatingPointError):
            ok = False
        if not ok:
            raise NumericalFailure(f"{what}: evaluation failed at probe along coordinate {j}") from cause
    raise NumericalFailure(f"{what}: evaluation failed at a probe point") from cause


def jacobian(field: FieldFn, x, cfg: StepConfig | None = None, columns=None) -> np.ndarray:
    """Central-difference Jacobian of a vector or matrix field.

    Parameters
    ----------
    field : callable
        Batched field ``(..., n) -> (..., *out)``.
    x : array_like, shape (..., n)
        Evaluation point(s).
    cfg : StepConfig, optional
        Uses ``cfg.fd_step``.
    columns : sequence of int, optional
        Differentiate only with respect to these coordinates.

    Returns
    -------
    ndarray, shape (..., *out, k)
        Derivative along the last axis, ``k = n`` or ``len(columns)``.
    """
    cfg = cfg or DEFAULT_STEPS
    x = _as_state(x)
    n = x.shape[-1]
    cols = np.arange(n) if columns is None else np.asarray(columns, dtype=int)
    k = cols.size

    h = cfg.fd_step * np.maximum(1.0, np.abs(x[..., cols]))
    unit = np.zeros((k, n))
    unit[np.arange(k), cols] = 1.0
    step = h[..., :, None] * unit
    base = x[..., None, :]
    plus, minus = base + step, base - step
    # actual representable step, cancels part of the rounding in x +/- h
    dx = plus[..., np.arange(k), cols] - minus[..., np.arange(k), cols]

    vals = _evaluate_probes(field, np.stack([plus, minus]), x.ndim, "jacobian")
    diff = vals[0] - vals[1]
    batch = x.ndim - 1
    out_nd = diff.ndim - batch - 1
    diff = diff / dx.reshape(dx.shape + (1,) * out_nd)
    return np.moveaxis(diff, batch, -1)


def gradient(scalar: FieldFn, x, cfg: StepConfig | None = None) -> np.ndarray:
    """Fourth-order central-difference gradient of a scalar field.

    Uses the five-point stencil, which is exact (to rounding) for polynomials of
    degree four, with the Hessian step ``cfg.hess_step``.
    """
    cfg = cfg or DEFAULT_STEPS
    x = _as_state(x)
    n = x.shape[-1]
    h = cfg.hess_step * np.maximum(1.0, np.abs(x))
    step = h[..., :, None] * np.eye(n)
    base = x[..., None, :]
    offsets = np.array([2.0, 1.0, -1.0, -2.0]).reshape((4,) + (1,) * (x.ndim + 1))
    probes = base + offsets * step
    vals = _evaluate_probes(scalar, probes, x.ndim, "gradient")
    return (-vals[0] + 8.0 * vals[1] - 8.0 * vals[2] + vals[3]) / (12.0 * h)


def hessian(scalar: FieldFn, x, cfg: StepConfig | None = None) -> np.ndarray:
    """Symmetrized central-difference Hessian of a scalar field.

    Entry ``(i, j)`` uses the four-point stencil ``x +/- h_i e_i +/- h_j e_j``;
    the result is averaged with its transpose so it is exactly symmetric.
    """
    cfg = cfg or DEFAULT_STEPS
    x = _as_state(x)
    n = x.shape[-1]
    h = cfg.hess_step * np.maximum(1.0, np.abs(x))
    step = h[..., :, None] * np.eye(n)  # (..., n, n), row i = h_i e_i
    base = x[..., None, None, :]
    si = step[..., :, None, :]
    sj = step[..., None, :, :]
    probes = np.stack([base + si + sj, base + si - sj, base - si + sj, base - si - sj])
    vals = _evaluate_probes(scalar, probes, x.ndim, "hessian")
    if vals.ndim != probes.ndim - 1:
        raise ContractError("hessian requires a scalar-valued field")
    H = (vals[0] - vals[1] - vals[2] + vals[3]) / (4.0 * h[..., :, None] * h[..., None, :])
    return 0.5 * (H + np.swapaxes(H, -1, -2))


def lie_bracket(v: FieldFn, w: FieldFn, x, cfg: StepConfig | None = None) -> np.ndarray:
    """Lie bracket ``[v, w](x) = Dw(x) v(x) - Dv(x) w(x)``."""
    x = _as_state(x)
    n = x.shape[-1]
    vx = np.asarray(v(x), dtype=float)
    wx = np.asarray(w(x), dtype=float)
    if vx.shape != x.shape or wx.shape != x.shape:
        raise ContractError(
            f"lie_bracket needs vector fields on R^{n}; got {vx.shape} and {wx.shape} at {x.shape}"
        )
    Dv = jacobian(v, x, cfg)
    Dw = jacobian(w, x, cfg)
    return np.einsum("...ij,...j->...i", Dw, vx) - np.einsum("...ij,...j->...i", Dv, wx)


@functools.lru_cache(maxsize=None)
def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to [0, 1]."""
    t, w = np.polynomial.legendre.leggauss(order)
    nodes, weights = 0.5 * (t + 1.0), 0.5 * w
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def line_integral(integrand: Callable, cfg: StepConfig | None = None, vectorized: bool = False):
    """Integrate ``integrand(lam)`` over ``lam`` in [0, 1] by Gauss-Legendre quadrature.

    With ``vectorized=True`` the integrand receives all nodes at once, shape
    ``(q,)``, and must return an array with leading axis ``q``.
    """
    cfg = cfg or DEFAULT_STEPS
    nodes, weights = gauss_legendre(cfg.quad_order)
    if vectorized:
        vals = np.asarray(integrand(nodes), dtype=float)
        if vals.shape[:1] != nodes.shape:
            raise ContractError("vectorized integrand must return the node axis first")
    else:
        vals = np.array([np.asarray(integrand(lam), dtype=float) for lam in nodes])
    if not np.all(np.isfinite(vals)):
        bad = int(np.argmax(~np.isfinite(vals.reshape(len(nodes), -1)).any(axis=1)))
        raise NumericalFailure(f"line_integral: non-finite integrand at node lambda={nodes[bad]:.6g}")
    return np.tensordot(weights, vals, axes=(0, 0))


def _check_symmetric(A: np.ndarray, rtol: float = 1e-10) -> None:
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ContractError(f"expected a square matrix, got shape {A.shape}")
    asym = np.max(np.abs(A - np.swapaxes(A, -1, -2)), initial=0.0)
    scale = max(1.0, float(np.max(np.abs(A), initial=0.0)))
    if asym > rtol * scale:
        raise ContractError(f"matrix is not symmetric (max asymmetry {asym:.3e})")


def sym_eig_extrema(A) -> tuple[float, float]:
    """Smallest and largest eigenvalue of a symmetric matrix (batched allowed)."""
    A = np.asarray(A, dtype=float)
    _check_symmetric(A)
    lam = np.linalg.eigvalsh(A)
    lo, hi = lam[..., 0], lam[..., -1]
    if lam.ndim == 1:
        return float(lo), float(hi)
    return lo, hi


def numerical_rank(A, rtol: float = RANK_RTOL) -> np.ndarray | int:
    """Number of singular values above ``rtol * sigma_max`` (batched allowed)."""
    A = np.asarray(A, dtype=float)
    s = np.linalg.svd(A, compute_uv=False)
    smax = s[..., :1]
    rank = np.sum((s > rtol * smax) & (s > 0.0), axis=-1)
    return int(rank) if np.ndim(rank) == 0 else rank


def pseudo_inverse(G, rtol: float = RANK_RTOL) -> np.ndarray:
    """Left pseudo-inverse ``(G^T G)^{-1} G^T`` of a full column rank matrix."""
    G = np.asarray(G, dtype=float)
    if G.ndim < 2:
        raise ContractError(f"expected a matrix, got shape {G.shape}")
    m = G.shape[-1]
    if np.any(np.atleast_1d(numerical_rank(G, rtol)) < m):
        raise SingularityError(f"input matrix is rank deficient (needs column rank {m})")
    Gt = np.swapaxes(G, -1, -2)
    return np.linalg.solve(Gt @ G, Gt)
