"""Right-hand sides and explicit time stepping in conservative variables ``(rho, m)``.

Every system has the form::

    rho_t + div m = 0
    m_t + div(m x m / rho) = div S(rho) + div sigma[m / rho] - zeta m

where ``S`` is the stress of the energy model and ``sigma`` the Navier-Stokes
stress (only for the viscous systems). The state also carries the running
integral of the dissipation rate, integrated with the same Runge-Kutta
weights, so that ``energy + dissipated`` is conserved up to the time-stepping
error.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

import numpy as np

from .energy import EulerPoisson, Korteweg, LowerOrder, QHD, capillary_stiffness, check_admissible
from .errors import NonFiniteError
from .torus import TorusGrid, contract, dot, outer

SYSTEM_MODELS = {
    "EulerKorteweg": (Korteweg,),
    "NSK": (Korteweg,),
    "QHD": (QHD,),
    "EulerPoisson": (EulerPoisson,),
    "LowerOrder": (LowerOrder,),
}
VISCOUS_SYSTEMS = ("NSK", "LowerOrder")
INTEGRATORS = ("RK4", "SSPRK3")


@dataclass(frozen=True, eq=False)
class State:
    """Density, momentum, time, and the dissipation accumulated since ``t = 0``."""

    rho: np.ndarray
    m: np.ndarray
    time: float = 0.0
    dissipated: float = 0.0

    def __post_init__(self):
        rho = np.array(self.rho, dtype=float)
        m = np.array(self.m, dtype=float)
        if m.shape != (rho.ndim,) + rho.shape:
            raise ValueError(f"momentum shape {m.shape} does not match density shape {rho.shape}")
        rho.flags.writeable = False
        m.flags.writeable = False
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "m", m)

    @property
    def velocity(self) -> np.ndarray:
        return self.m / self.rho

    @classmethod
    def from_velocity(cls, rho, u, time: float = 0.0) -> "State":
        rho = np.asarray(rho, dtype=float)
        return cls(rho, rho * np.asarray(u, dtype=float), time)


@dataclass(frozen=True, eq=False)
class SystemSpec:
    system: str
    model: object
    grid: TorusGrid
    zeta: float = 0.0
    lam: float = 0.0
    mu: float = 0.0
    dt: float = 1e-3
    t_end: float = 1.0
    integrator: str = "RK4"
    force_form: str = "conservative"
    cfl: float = 0.3
    check_cfl: bool = True

    def __post_init__(self):
        if self.system not in SYSTEM_MODELS:
            raise ValueError(f"unknown system {self.system!r}; expected one of {sorted(SYSTEM_MODELS)}")
        if not isinstance(self.model, SYSTEM_MODELS[self.system]):
            raise ValueError(f"system {self.system} needs a {SYSTEM_MODELS[self.system][0].__name__} model")
        if self.system == "NSK" and self.model.cap.kind != "constant":
            raise ValueError("NSK uses a constant capillarity")
        if not self.zeta >= 0:
            raise ValueError(f"friction must be nonnegative, got {self.zeta}")
        if self.lam or self.mu:
            if self.system not in VISCOUS_SYSTEMS:
                raise ValueError(f"viscosity is only available for {VISCOUS_SYSTEMS}")
            if self.mu < 0 or self.lam + 2.0 * self.mu / self.grid.dim < 0:
                raise ValueError("viscosity needs mu >= 0 and lambda + (2/d) mu >= 0")
        if not (self.dt > 0 and self.t_end > 0):
            raise ValueError("dt and t_end must be positive")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if self.force_form not in ("conservative", "primitive"):
            raise ValueError(f"unknown force form {self.force_form!r}")
        if not self.cfl > 0:
            raise ValueError("cfl factor must be positive")

    @property
    def viscous(self) -> bool:
        return bool(self.lam or self.mu)


def viscous_stress(grid: TorusGrid, u, lam: float, mu: float) -> np.ndarray:
    """``sigma[u] = lambda div(u) I + mu (grad u + grad u^T)``."""
    j = grid.jacobian(u)
    div = np.trace(j, axis1=0, axis2=1)
    return lam * grid.identity(div) + mu * (j + np.swapaxes(j, 0, 1))


def dissipation_density(grid: TorusGrid, u, lam: float, mu: float) -> np.ndarray:
    """``sigma[u] : grad u``."""
    return contract(viscous_stress(grid, u, lam, mu), grid.jacobian(u))


def dissipation_split(grid: TorusGrid, u, lam: float, mu: float) -> np.ndarray:
    """``(lambda + (2/d) mu)(div u)^2 + 2 mu |traceless sym grad u|^2``; equal to :func:`dissipation_density`."""
    j = grid.jacobian(u)
    d = grid.dim
    div = np.trace(j, axis1=0, axis2=1)
    sym = 0.5 * (j + np.swapaxes(j, 0, 1)) - grid.identity(div / d)
    return (lam + 2.0 * mu / d) * div**2 + 2.0 * mu * contract(sym, sym)


def rhs(spec: SystemSpec, s: State) -> tuple:
    """Return ``(drho/dt, dm/dt, dissipation rate)`` for the state ``s``."""
    grid, model = spec.grid, spec.model
    rho = check_admissible(s.rho, model.band, s.time)
    m = s.m
    u = m / rho
    flux = -outer(m, u)
    if spec.force_form == "conservative":
        flux = flux + model.stress(grid, rho)
    if spec.viscous:
        flux = flux + viscous_stress(grid, u, spec.lam, spec.mu)
    dm = grid.tensor_divergence(flux)
    if spec.force_form == "primitive":
        dm = dm - rho * grid.gradient(model.variational_derivative(grid, rho))
    rate = 0.0
    if spec.zeta:
        dm = dm - spec.zeta * m
        rate += spec.zeta * grid.integrate(rho * dot(u, u))
    if spec.viscous:
        rate += grid.integrate(dissipation_density(grid, u, spec.lam, spec.mu))
    drho = -grid.divergence(m)
    drho = grid.dealias_filter(drho)
    dm = grid.dealias_filter(dm)
    if not (np.all(np.isfinite(drho)) and np.all(np.isfinite(dm)) and np.isfinite(rate)):
        raise NonFiniteError("non-finite right-hand side", s.time)
    return drho, dm, rate


def _combine(s: State, dt: float, increments) -> State:
    rho, m, diss = s.rho, s.m, s.dissipated
    for weight, (dr, dmm, rate) in increments:
        rho = rho + dt * weight * dr
        m = m + dt * weight * dmm
        diss = diss + dt * weight * rate
    return rho, m, diss


def step(spec: SystemSpec, s: State) -> State:
    """Advance one step of size ``spec.dt``."""
    dt, t = spec.dt, s.time
    if spec.integrator == "RK4":
        k1 = rhs(spec, s)
        k2 = rhs(spec, State(*_combine(s, dt, [(0.5, k1)])[:2], t + 0.5 * dt))
        k3 = rhs(spec, State(*_combine(s, dt, [(0.5, k2)])[:2], t + 0.5 * dt))
        k4 = rhs(spec, State(*_combine(s, dt, [(1.0, k3)])[:2], t + dt))
        rho, m, diss = _combine(s, dt, [(1 / 6, k1), (1 / 3, k2), (1 / 3, k3), (1 / 6, k4)])
    else:
        k1 = rhs(spec, s)
        r1, m1, d1 = _combine(s, dt, [(1.0, k1)])
        s1 = State(r1, m1, t + dt, d1)
        k2 = rhs(spec, s1)
        r2, m2, d2 = _combine(s1, dt, [(1.0, k2)])
        s2 = State(0.75 * s.rho + 0.25 * r2, 0.75 * s.m + 0.25 * m2, t + 0.5 * dt,
                   0.75 * s.dissipated + 0.25 * d2)
        k3 = rhs(spec, s2)
        r3, m3, d3 = _combine(s2, dt, [(1.0, k3)])
        rho = s.rho / 3.0 + 2.0 * r3 / 3.0
        m = s.m / 3.0 + 2.0 * m3 / 3.0
        diss = s.dissipated / 3.0 + 2.0 * d3 / 3.0
    new_time = t + dt
    if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(m))):
        raise NonFiniteError("non-finite state after step", new_time)
    check_admissible(rho, spec.model.band, new_time)
    return State(rho, m, new_time, diss)


def stable_dt(spec: SystemSpec, s: State) -> float:
    """Empirical explicit stability bound.

    ``cfl * min(dx / (|u| + c_s), dx^2 / nu_eff, dx^2 / sqrt(rho kappa))`` where
    ``c_s`` is the largest linear wave speed of the first-order part.
    """
    grid, model = spec.grid, spec.model
    rho = check_admissible(s.rho, model.band, s.time)
    dx = grid.dx
    lo, hi = float(np.min(rho)), float(np.max(rho))
    r = np.linspace(lo, hi, 32)
    c2 = np.abs(model.local.dpressure(r))
    if isinstance(model, LowerOrder):
        c2 = c2 + model.c_kappa * model.alpha * r
    speed = float(np.max(np.abs(s.velocity)) + np.sqrt(np.max(c2)))
    bounds = [dx / speed] if speed > 0 else []
    if spec.viscous:
        nu = (abs(spec.lam) + 2.0 * spec.mu) / lo
        if nu > 0:
            bounds.append(dx**2 / nu)
    stiff = capillary_stiffness(model, lo, hi)
    if stiff > 0:
        bounds.append(dx**2 / stiff)
    if spec.zeta:
        bounds.append(1.0 / spec.zeta)
    return spec.cfl * min(bounds) if bounds else float("inf")


@dataclass
class Trajectory:
    """States recorded every ``observe_every`` steps (the initial state included)."""

    states: list = field(default_factory=list)
    observe_every: int = 1
    dt: float = 0.0

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.states])

    def __len__(self):
        return len(self.states)

    def __getitem__(self, i):
        return self.states[i]


def integrate(spec: SystemSpec, s0: State, observers: Iterable[Callable] = (), observe_every: int = 1,
              t_end: float | None = None, record: bool = True) -> Trajectory:
    """Advance ``s0`` to ``t_end`` (default ``spec.t_end``) in steps of ``spec.dt``.

    Observers are called with each recorded state. Raises ``ValueError`` if
    ``spec.dt`` violates :func:`stable_dt` (unless ``spec.check_cfl`` is off).
    """
    if observe_every < 1:
        raise ValueError("observe_every must be a positive integer")
    t_end = spec.t_end if t_end is None else t_end
    n_steps = int(round((t_end - s0.time) / spec.dt))
    if n_steps < 0 or abs(s0.time + n_steps * spec.dt - t_end) > 1e-9 * max(1.0, abs(t_end)):
        raise ValueError(f"t_end={t_end} is not reachable from t={s0.time} in steps of dt={spec.dt}")
    if spec.check_cfl:
        bound = stable_dt(spec, s0)
        if spec.dt > bound:
            raise ValueError(f"dt={spec.dt:.3g} exceeds the stability bound {bound:.3g}")
    observers = list(observers)
    traj = Trajectory(observe_every=observe_every, dt=spec.dt)
    s = s0
    for i in range(n_steps + 1):
        if i % observe_every == 0:
            if record:
                traj.states.append(s)
            for obs in observers:
                obs(s)
        if i < n_steps:
            s = step(spec, s)
            # re-anchor the clock to avoid drift from repeated additions
            s = replace(s, time=s0.time + (i + 1) * spec.dt)
    if not record:
        traj.states.append(s)
    return traj


def kinetic_energy(grid: TorusGrid, s: State) -> float:
    return grid.integrate(0.5 * dot(s.m, s.m) / s.rho)


def total_energy(spec: SystemSpec, s: State) -> float:
    return kinetic_energy(spec.grid, s) + spec.model.energy(spec.grid, s.rho)
