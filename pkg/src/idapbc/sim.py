"""Fixed-step RK4 simulation of the closed loop with energy monitoring."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .controller import Controller
from .errors import ContractError, DomainError, NumericalFailure

CSV_HEADER = "t,y1,y2,y3,u,H_d,residual"
LYAP_TOL = 1e-9


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-4
    t_end: float = 2.0
    x0: tuple | None = None
    record_every: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ContractError(f"dt must be positive, got {self.dt}")
        if not self.t_end >= self.dt:
            raise ContractError(f"t_end must be at least dt, got t_end={self.t_end}, dt={self.dt}")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ContractError(f"record_every must be an integer >= 1, got {self.record_every}")

    @property
    def n_steps(self) -> int:
        # guard against t_end/dt landing a hair under an integer
        return int(math.floor(self.t_end / self.dt + 1e-9))


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    H: np.ndarray
    r: np.ndarray
    events: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.events

    def __len__(self) -> int:
        return self.t.size


def rk4_step(field_fn, x, dt):
    k1 = field_fn(x)
    k2 = field_fn(x + 0.5 * dt * k1)
    k3 = field_fn(x + 0.5 * dt * k2)
    k4 = field_fn(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4(field_fn, x0, dt: float, n_steps: int) -> np.ndarray:
    """Plain RK4 for an autonomous field; returns all ``n_steps + 1`` states."""
    xs = np.empty((n_steps + 1,) + np.shape(x0))
    xs[0] = x0
    for i in range(n_steps):
        xs[i + 1] = rk4_step(field_fn, xs[i], dt)
    return xs


def simulate(ctrl: Controller, cfg: SimConfig | None = None) -> Trajectory:
    """Integrate ``dx/dt = f(x) + G(x) u(x)`` from ``cfg.x0`` (default ``x*``).

    Leaving the domain box or producing a non-finite state stops the run and is
    recorded as an event; the recorded states plus the last accepted one are
    returned. ``u``,
    ``H_d`` and the matching residual are evaluated on the recorded states
    after integration.

    Raises
    ------
    ContractError
        If ``x0`` is outside the domain.
    """
    cfg = cfg or SimConfig()
    system = ctrl.system
    x = system.x_star.copy() if cfg.x0 is None else np.array(cfg.x0, dtype=float)
    if x.shape != (system.n,) or not system.contains(x):
        raise ContractError(f"initial state {x.tolist()} is outside the domain")

    n_steps, every, dt = cfg.n_steps, int(cfg.record_every), cfg.dt
    rows = [x.copy()]
    times = [0.0]
    events = []

    for i in range(1, n_steps + 1):
        t = i * dt
        try:
            x_new = rk4_step(ctrl.closed_loop, x, dt)
        except DomainError:
            events.append((t, "domain_exit"))
            break
        except (NumericalFailure, FloatingPointError, np.linalg.LinAlgError) as exc:
            events.append((t, f"numerical_failure: {exc}"))
            break
        if not np.all(np.isfinite(x_new)):
            events.append((t, "non_finite"))
            break
        if not system.contains(x_new):
            events.append((t, "domain_exit"))
            break
        x = x_new
        if i % every == 0:
            rows.append(x.copy())
            times.append(t)

    if events and i - 1 > 0 and (i - 1) % every:  # keep the last accepted state
        rows.append(x.copy())
        times.append((i - 1) * dt)

    X = np.array(rows)
    u = ctrl.u(X)
    H = ctrl.energy.H(X)
    r = ctrl.matching_residual(X)
    return Trajectory(np.array(times), X, u, H, r, events)


def lyapunov_audit(traj: Trajectory, tol: float = LYAP_TOL) -> tuple[float, float | None]:
    """Largest forward increase of ``H_d`` and the time of the first step exceeding ``tol (1 + |H|)``."""
    if len(traj) < 2:
        return 0.0, None
    dH = np.diff(traj.H)
    limit = tol * (1.0 + np.abs(traj.H[:-1]))
    bad = np.flatnonzero(dH > limit)
    first = float(traj.t[bad[0] + 1]) if bad.size else None
    return float(max(0.0, dH.max())), first


def write_csv(traj: Trajectory, path, offset=None) -> None:
    """Write ``t, y, u, H_d, residual`` with 17 significant digits; ``y = x + offset``."""
    y = traj.x if offset is None else traj.x + np.asarray(offset, dtype=float)
    n, m = y.shape[1], traj.u.shape[1]
    header = ["t"] + [f"y{i + 1}" for i in range(n)] + (["u"] if m == 1 else [f"u{j + 1}" for j in range(m)])
    header += ["H_d", "residual"]
    data = np.column_stack([traj.t, y, traj.u, traj.H, traj.r])
    np.savetxt(path, data, delimiter=",", header=",".join(header), comments="", fmt="%.17g")
