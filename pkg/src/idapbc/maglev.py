"""Magnetic levitation worked example.

Physical state ``y = (flux, position, momentum)``; the design works in the
error state ``x = y - y*`` so the target equilibrium is ``x* = 0``. The
interconnection/damping matrix is the constant

    F_d = [[alpha11,  0,     alpha13],
           [v11,      v12,   v13    ],
           [-alpha13, -v13,  v23    ]]

with ``v11 = v23 = 0`` in the design (they are exposed only so the
shapeability checks can be shown failing). The characteristic coordinates
are ``z = F_d^{-T} x``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ContractError, SingularityError
from .model import AffineSystem, CoordinateChange, TargetStructure
from .numerics import ConstantField, FieldFn

DEFAULT_LOWER = (-0.005, -0.002, -0.01)
DEFAULT_UPPER = (0.005, 0.0025, 0.01)


@dataclass(frozen=True)
class MaglevParams:
    gamma: float = 2.52  # ohm
    k: float = 6.4042e-5  # N m / A
    c: float = 0.005  # m, contact gap
    mass: float = 0.0844  # kg
    a: float = 9.81  # m / s^2
    y2_star: float = 0.002  # m

    def __post_init__(self):
        for name in ("gamma", "k", "c", "mass", "a", "y2_star"):
            if not getattr(self, name) > 0:
                raise ContractError(f"maglev parameter {name} must be positive")
        if not self.y2_star < self.c:
            raise ContractError("maglev parameter y2_star must be below the contact gap c")

    @property
    def y1_star(self) -> float:
        """Equilibrium flux ``sqrt(2 k m a)``."""
        return float(np.sqrt(2.0 * self.k * self.mass * self.a))

    @property
    def y_star(self) -> np.ndarray:
        return np.array([self.y1_star, self.y2_star, 0.0])


@dataclass(frozen=True)
class MaglevGains:
    """Free entries of ``F_d`` and of the shaped energy.

    ``alpha13 < 0`` and ``v13 > 0`` make the eta-block of the energy Hessian
    positive definite and are enforced here. ``alpha11 < 0`` and ``v12 < 0``
    are the dissipation conditions; they are left to
    :func:`idapbc.model.validate_system` so that a violating choice is
    reported rather than rejected.
    """

    alpha11: float = -2.0
    alpha13: float = -2.0
    v12: float = -2.0
    v13: float = 2.0
    p1: float = 400.0
    p2: float = 20.0
    v11: float = 0.0
    v23: float = 0.0

    def __post_init__(self):
        if not self.alpha13 < 0:
            raise ContractError(f"gain alpha13 must be negative, got {self.alpha13}")
        if not self.v13 > 0:
            raise ContractError(f"gain v13 must be positive, got {self.v13}")
        if not self.p1 > 0:
            raise ContractError(f"gain p1 must be positive, got {self.p1}")
        if not self.p2 > 0:
            raise ContractError(f"gain p2 must be positive, got {self.p2}")

    @property
    def F_d(self) -> np.ndarray:
        return np.array(
            [
                [self.alpha11, 0.0, self.alpha13],
                [self.v11, self.v12, self.v13],
                [-self.alpha13, -self.v13, self.v23],
            ]
        )


class MaglevDesign(NamedTuple):
    system: AffineSystem
    target: TargetStructure
    coords: CoordinateChange
    M1: FieldFn
    params: MaglevParams
    gains: MaglevGains


def build(
    params: MaglevParams | None = None,
    gains: MaglevGains | None = None,
    lower=DEFAULT_LOWER,
    upper=DEFAULT_UPPER,
) -> MaglevDesign:
    """Assemble the error system, target structure, coordinates and ``M1``."""
    p = params or MaglevParams()
    g = gains or MaglevGains()
    y1s, k, mass = p.y1_star, p.k, p.mass

    def f(x):
        x = np.asarray(x, dtype=float)
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        out = np.empty(x.shape)
        out[..., 0] = -p.gamma / k * (p.c - x2 - p.y2_star) * (x1 + y1s)
        out[..., 1] = x3 / mass
        out[..., 2] = x1**2 / (2.0 * k) + y1s / k * x1
        return out

    system = AffineSystem(
        n=3,
        m=1,
        f=f,
        G=ConstantField([[1.0], [0.0], [0.0]]),
        lower=lower,
        upper=upper,
        x_star=np.zeros(3),
        name="maglev",
    )
    Fd = g.F_d
    target = TargetStructure(F_d=ConstantField(Fd), G_perp=ConstantField([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]))

    if abs(np.linalg.det(Fd)) > 1e-12:
        coords = CoordinateChange.from_matrix(np.linalg.inv(Fd).T, system.x_star, m=1, T_inv=Fd.T)
    else:
        coords = _kernel_coordinates(Fd, system.x_star)

    c_z3 = g.alpha11**2 / k

    def M1(z):
        z = np.asarray(z, dtype=float)
        return (g.p1 + g.p2 * z[..., 0] ** 2 + c_z3 * z[..., 2])[..., None, None]

    return MaglevDesign(system, target, coords, M1, p, g)


def _kernel_coordinates(Fd: np.ndarray, x_star) -> CoordinateChange:
    """Linear coordinates for a singular ``F_d``: xi along ker(G_perp F_d), eta = G_perp F_d x."""
    W = Fd[1:]
    _, s, vt = np.linalg.svd(W)
    if s[-1] < 1e-12 * s[0]:
        raise SingularityError("G_perp F_d is rank deficient; no characteristic coordinate can be built")
    T = np.vstack([vt[-1], W])
    return CoordinateChange.from_matrix(T, x_star, m=1)


def error_coordinates(z, gains: MaglevGains) -> np.ndarray:
    """``x = F_d^T z``."""
    return np.asarray(z, dtype=float) @ gains.F_d


def closed_form_rho(z, params: MaglevParams, gains: MaglevGains) -> np.ndarray:
    """Gradient of the shaped energy along the eta coordinates, in closed form."""
    z = np.asarray(z, dtype=float)
    z1, z2, z3 = z[..., 0], z[..., 1], z[..., 2]
    k, y1s = params.k, params.y1_star
    s = gains.alpha11 * z1 - gains.alpha13 * z3
    return np.stack(
        [(gains.alpha13 * z1 + gains.v13 * z2) / params.mass, s**2 / (2.0 * k) + y1s / k * s],
        axis=-1,
    )


def closed_form_grad_z1(z, params: MaglevParams, gains: MaglevGains):
    """Gradient of the shaped energy along the characteristic coordinate, in closed form."""
    z = np.asarray(z, dtype=float)
    z1, z2, z3 = z[..., 0], z[..., 1], z[..., 2]
    k, m, y1s = params.k, params.mass, params.y1_star
    a11, a13 = gains.alpha11, gains.alpha13
    return (
        gains.p1 * z1
        + gains.p2 / 3.0 * z1**3
        + a11**2 / k * z1 * z3
        + a13 / m * z2
        + a11 * y1s / k * z3
        - a11 * a13 / (2.0 * k) * z3**2
    )


def closed_form_control(x, params: MaglevParams, gains: MaglevGains):
    """Closed-form IDA-PBC voltage: flux feedforward plus the shaped gradient term."""
    x = np.asarray(x, dtype=float)
    z = x @ np.linalg.inv(gains.F_d)  # z = F_d^{-T} x, row-vector form
    feedforward = params.gamma / params.k * (params.c - x[..., 1] - params.y2_star) * (x[..., 0] + params.y1_star)
    return feedforward + closed_form_grad_z1(z, params, gains)
