"""State feedback induced by a shaped energy, and closed-loop diagnostics.

With ``grad_x H_d = dtau/dx^T (beta, rho)`` the control law is

    u = G^+ (F_d grad_x H_d - f),

which makes the closed loop ``f + G u`` equal to ``F_d grad_x H_d`` up to the
matching residual. :meth:`Controller.u_direct` evaluates the same expression
from an independent finite-difference gradient of the scalar energy, as a
cross-check on the chain-rule assembly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import AffineSystem, CoordinateChange, SampleGrid, TargetStructure
from .numerics import StepConfig, constant_value, gradient, pseudo_inverse
from .errors import DomainError
from .shaping import GUARD_SLACK, ShapedEnergy


@dataclass(frozen=True)
class Controller:
    system: AffineSystem
    target: TargetStructure
    coords: CoordinateChange
    energy: ShapedEnergy
    _G: np.ndarray | None = field(init=False, repr=False)
    _G_pinv: np.ndarray | None = field(init=False, repr=False)
    _F_d: np.ndarray | None = field(init=False, repr=False)

    def __post_init__(self):
        G = constant_value(self.system.G)
        object.__setattr__(self, "_G", G)
        object.__setattr__(self, "_G_pinv", None if G is None else pseudo_inverse(G))
        object.__setattr__(self, "_F_d", constant_value(self.target.F_d))

    def _pinv(self, x):
        return self._G_pinv if self._G_pinv is not None else pseudo_inverse(self.system.G(x))

    def _apply_F_d(self, x, v):
        F = self._F_d if self._F_d is not None else self.target.F_d(x)
        return (F @ v[..., None])[..., 0]

    def grad_H(self, x):
        """``grad_x H_d`` by the chain rule through the characteristic coordinates."""
        x = np.asarray(x, dtype=float)
        T = self.coords.matrix
        if T is not None:
            # linear coordinates: the segment guard reduces to a test on x itself
            if self.energy.guard is not None and not np.all(self.system.contains(x, GUARD_SLACK)):
                raise DomainError("state outside the domain")
            return self.energy.grad_z(x @ T.T, check=False) @ T
        g = self.energy.grad_z(self.coords.tau(x))
        return (np.swapaxes(self.coords.jacobian(x), -1, -2) @ g[..., None])[..., 0]

    def _law(self, x, grad, fx):
        return (self._pinv(x) @ (self._apply_F_d(x, grad) - fx)[..., None])[..., 0]

    def u(self, x, fx=None):
        """``G^+ (F_d dxi/dx^T beta + F_d deta/dx^T rho - f)``."""
        x = np.asarray(x, dtype=float)
        fx = self.system.f(x) if fx is None else fx
        return self._law(x, self.grad_H(x), fx)

    def u_direct(self, x, cfg: StepConfig | None = None):
        """Same law with ``grad_x H_d`` from a fourth-order difference of ``H_d(x)``."""
        x = np.asarray(x, dtype=float)
        self.energy.H(x)  # guards x itself; the stencil may poke just outside
        grad = gradient(lambda p: self.energy.H(p, check=False), x, cfg or self.energy.cfg)
        return self._law(x, grad, self.system.f(x))

    def closed_loop(self, x):
        """``f(x) + G(x) u(x)``."""
        x = np.asarray(x, dtype=float)
        fx = self.system.f(x)
        u = self.u(x, fx)
        G = self._G if self._G is not None else self.system.G(x)
        return fx + (G @ u[..., None])[..., 0]

    def target_field(self, x):
        """``F_d(x) grad_x H_d(x)``, the field the closed loop should match."""
        x = np.asarray(x, dtype=float)
        return self._apply_F_d(x, self.grad_H(x))

    def matching_residual(self, x):
        """``||G_perp F_d grad H_d - G_perp f||`` at each state."""
        x = np.asarray(x, dtype=float)
        Gp = self.target.G_perp(x)
        lhs = (Gp @ self.target_field(x)[..., None])[..., 0]
        rhs = (Gp @ self.system.f(x)[..., None])[..., 0]
        return np.linalg.norm(lhs - rhs, axis=-1)

    def energy_rate(self, x):
        """``grad H_d . (f + G u)``; non-positive when ``F_d + F_d^T`` is negative semidefinite."""
        x = np.asarray(x, dtype=float)
        return np.einsum("...i,...i->...", self.grad_H(x), self.closed_loop(x))


def synthesize(
    system: AffineSystem, target: TargetStructure, coords: CoordinateChange, energy: ShapedEnergy
) -> Controller:
    return Controller(system, target, coords, energy)


def closed_loop_field(ctrl: Controller):
    return ctrl.closed_loop


def matching_residual(ctrl: Controller, x) -> np.ndarray:
    return ctrl.matching_residual(x)


def max_matching_residual(ctrl: Controller, grid: SampleGrid) -> float:
    return float(np.max(ctrl.matching_residual(grid.points)))
