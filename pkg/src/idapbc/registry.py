"""Named systems available to the command line.

An entry turns ``params``/``gains`` dictionaries into the design ingredients
and describes how to label trajectories. New systems are added with
:func:`register`.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import maglev
from .model import AffineSystem, CoordinateChange, TargetStructure
from .numerics import ConstantField, FieldFn


class Design(NamedTuple):
    system: AffineSystem
    target: TargetStructure
    coords: CoordinateChange
    M1: FieldFn


@dataclass(frozen=True)
class SystemEntry:
    name: str
    params: dict
    gains: dict
    build: Callable[[dict, dict], Design]
    state_labels: tuple
    input_labels: tuple
    default_x0: Callable[[dict], tuple]
    offset: Callable[[dict], np.ndarray] = lambda params: None
    defaults: dict = field(default_factory=dict)

    def schema(self):
        extra = {f"params.{k}": ("float", v) for k, v in self.params.items()}
        extra.update({f"gains.{k}": ("float", v) for k, v in self.gains.items()})
        return extra


REGISTRY: dict[str, SystemEntry] = {}


def register(entry: SystemEntry) -> None:
    REGISTRY[entry.name] = entry


def _dataclass_defaults(cls) -> dict:
    return {f.name: float(f.default) for f in dataclasses.fields(cls)}


def _build_maglev(params: dict, gains: dict) -> Design:
    d = maglev.build(maglev.MaglevParams(**params), maglev.MaglevGains(**gains))
    return Design(d.system, d.target, d.coords, d.M1)


register(
    SystemEntry(
        name="maglev",
        params=_dataclass_defaults(maglev.MaglevParams),
        gains=_dataclass_defaults(maglev.MaglevGains),
        build=_build_maglev,
        state_labels=("y1 flux [Wb]", "y2 position [m]", "y3 momentum [kg m/s]"),
        input_labels=("u voltage [V]",),
        default_x0=lambda params: (0.0, -params["y2_star"], 0.0),
        offset=lambda params: maglev.MaglevParams(**params).y_star,
        # the designed M1(z*) = p1 is meant to carry the certificate on its own
        defaults={"design.m2": 0.0},
    )
)


def _build_double_integrator(params: dict, gains: dict) -> Design:
    """``x1' = x2, x2' = u`` with ``F_d = [[0, 1], [-1, -r]]``; xi = x1, eta = x2, M1 = k1."""
    from .errors import ContractError

    r, k1 = gains["r"], gains["k1"]
    if not r > 0:
        raise ContractError(f"gain r must be positive, got {r}")
    if not k1 >= 0:
        raise ContractError(f"gain k1 must be non-negative, got {k1}")
    half = params["half_width"]
    if not half > 0:
        raise ContractError(f"parameter half_width must be positive, got {half}")
    system = AffineSystem(
        n=2,
        m=1,
        f=lambda x: np.stack([x[..., 1], np.zeros(np.shape(x)[:-1])], axis=-1),
        G=ConstantField([[0.0], [1.0]]),
        lower=[-half, -half],
        upper=[half, half],
        x_star=[0.0, 0.0],
        name="double_integrator",
    )
    target = TargetStructure(F_d=ConstantField([[0.0, 1.0], [-1.0, -r]]), G_perp=ConstantField([[1.0, 0.0]]))
    coords = CoordinateChange.from_matrix(np.eye(2), system.x_star, m=1)
    return Design(system, target, coords, ConstantField([[k1]]))


register(
    SystemEntry(
        name="double_integrator",
        params={"half_width": 1.0},
        gains={"k1": 0.0, "r": 1.0},
        build=_build_double_integrator,
        state_labels=("x1 position [m]", "x2 velocity [m/s]"),
        input_labels=("u force [N]",),
        default_x0=lambda params: (0.5 * params["half_width"], 0.0),
    )
)
