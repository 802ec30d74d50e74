"""Numerical toolkit for IDA-PBC design with maximum energy shapeability.

Typical use::

    from idapbc import maglev, shape_energy, synthesize, simulate

    d = maglev.build()
    energy, selection = shape_energy(d.system, d.target, d.coords, d.M1, M2=0.0)
    ctrl = synthesize(d.system, d.target, d.coords, energy)
    traj = simulate(ctrl)
"""

from . import maglev
from .controller import Controller, synthesize
from .errors import ContractError, DomainError, IdaPbcError, NumericalFailure, ShapeabilityError, SingularityError
from .model import AffineSystem, CoordinateChange, TargetStructure, Tolerances, make_grid, validate_system
from .numerics import ConstantField, StepConfig
from .shapeability import assess
from .shaping import hessian_certificate, shape_energy, verify_M1
from .sim import SimConfig, simulate

__version__ = "0.1.0"

__all__ = [
    "AffineSystem",
    "ConstantField",
    "ContractError",
    "Controller",
    "CoordinateChange",
    "DomainError",
    "IdaPbcError",
    "NumericalFailure",
    "ShapeabilityError",
    "SimConfig",
    "SingularityError",
    "StepConfig",
    "TargetStructure",
    "Tolerances",
    "assess",
    "hessian_certificate",
    "maglev",
    "make_grid",
    "shape_energy",
    "simulate",
    "synthesize",
    "validate_system",
    "verify_M1",
]
