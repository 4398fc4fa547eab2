"""Potential-energy functionals, their first variations and Korteweg-type stresses.

Four model families are provided, all acting on a density field on a
:class:`~relenlab.torus.TorusGrid`:

``Korteweg``      F(rho, q) = h(rho) + kappa(rho)|q|^2 / 2 with q = grad rho
``QHD``           the Korteweg family with kappa(rho) = eps^2 / (4 rho)
``EulerPoisson``  h(rho) - rho c / 2 with -lap c + beta c = rho - mean(rho)
``LowerOrder``    h(rho) + C alpha (rho - c)^2 / 2 + C |grad c|^2 / 2 with c - lap c / alpha = rho

Every model exposes the same methods: ``energy``, ``variational_derivative``,
``stress`` (a symmetric tensor with ``div S = -rho grad(dE/drho)``),
``stress_linearization``, ``relative_stress``, ``relative_potential`` and
``second_variation``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import AdmissibilityError, NonFiniteError, VacuumError
from .torus import TorusGrid, dot, outer

DEFAULT_BAND = (1e-6, 1e6)


def check_admissible(rho, band=DEFAULT_BAND, time: float | None = None):
    """Raise unless every density value lies in ``(rho_min, rho_max]``."""
    rho = np.asarray(rho, dtype=float)
    if not np.all(np.isfinite(rho)):
        raise NonFiniteError("density contains non-finite values", time)
    lo, hi = float(np.min(rho)), float(np.max(rho))
    if lo <= band[0]:
        raise VacuumError(f"density {lo:.6g} at or below rho_min = {band[0]:g}", time)
    if hi > band[1]:
        raise AdmissibilityError(f"density {hi:.6g} above rho_max = {band[1]:g}", time)
    return rho


# -- local (internal) energy ----------------------------------------------------
@dataclass(frozen=True, eq=False)
class LocalEnergy:
    """Internal energy density ``h`` with its first three derivatives."""

    kind: str
    params: dict
    h: Callable
    dh: Callable
    d2h: Callable
    d3h: Callable

    def pressure(self, rho):
        return rho * self.dh(rho) - self.h(rho)

    def dpressure(self, rho):
        return rho * self.d2h(rho)

    def d2pressure(self, rho):
        return self.d2h(rho) + rho * self.d3h(rho)

    def relative(self, rho, rho_bar):
        """Taylor remainder ``h(rho | rho_bar)``."""
        return self.h(rho) - self.h(rho_bar) - self.dh(rho_bar) * (rho - rho_bar)

    def relative_pressure(self, rho, rho_bar):
        return self.pressure(rho) - self.pressure(rho_bar) - self.dpressure(rho_bar) * (rho - rho_bar)

    def relative_dh(self, rho, rho_bar):
        """``h'(rho) - h'(rho_bar) - h''(rho_bar)(rho - rho_bar)``."""
        return self.dh(rho) - self.dh(rho_bar) - self.d2h(rho_bar) * (rho - rho_bar)


def gamma_law(k: float = 1.0, gamma: float = 2.0) -> LocalEnergy:
    """``h = k rho^gamma / (gamma - 1)``, so that ``p = k rho^gamma``."""
    if not (k > 0 and gamma > 1):
        raise ValueError(f"gamma law needs k > 0 and gamma > 1, got k={k}, gamma={gamma}")
    g = float(gamma)
    return LocalEnergy(
        kind="gamma_law",
        params={"k": k, "gamma": g},
        h=lambda r: k * r**g / (g - 1.0),
        dh=lambda r: k * g * r ** (g - 1.0) / (g - 1.0),
        d2h=lambda r: k * g * r ** (g - 2.0),
        d3h=lambda r: k * g * (g - 2.0) * r ** (g - 3.0),
    )


def double_well(a: float = 0.6, b: float = 1.4, c0: float = 0.0) -> LocalEnergy:
    """Quartic ``h = (rho - a)^2 (rho - b)^2 + c0 rho``; non-convex between the wells."""
    if not a < b:
        raise ValueError(f"double well needs a < b, got a={a}, b={b}")
    return LocalEnergy(
        kind="double_well",
        params={"a": a, "b": b, "c0": c0},
        h=lambda r: (r - a) ** 2 * (r - b) ** 2 + c0 * r,
        dh=lambda r: 2.0 * (r - a) * (r - b) * (2.0 * r - a - b) + c0,
        d2h=lambda r: 2.0 * ((2.0 * r - a - b) ** 2 + 2.0 * (r - a) * (r - b)),
        d3h=lambda r: 12.0 * (2.0 * r - a - b),
    )


def custom_local(h, dh, d2h, d3h, **params) -> LocalEnergy:
    return LocalEnergy(kind="custom", params=dict(params), h=h, dh=dh, d2h=d2h, d3h=d3h)


def pressure(local: LocalEnergy, rho):
    """``p = rho h'(rho) - h(rho)``; rejects nonpositive densities."""
    if np.any(np.asarray(rho) <= 0):
        raise VacuumError("pressure is only defined for positive density")
    return local.pressure(rho)


# -- capillarity --------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class Capillarity:
    """Capillarity coefficient ``kappa(rho) > 0`` with two derivatives."""

    kind: str
    params: dict
    kappa: Callable
    dkappa: Callable
    d2kappa: Callable

    def A(self, rho):
        return 0.5 * (rho * self.dkappa(rho) + self.kappa(rho))

    def dA(self, rho):
        return 0.5 * (2.0 * self.dkappa(rho) + rho * self.d2kappa(rho))

    def B(self, rho):
        return rho * self.kappa(rho)

    def dB(self, rho):
        return self.kappa(rho) + rho * self.dkappa(rho)


def constant_capillarity(c_kappa: float) -> Capillarity:
    if not c_kappa > 0:
        raise ValueError(f"capillarity must be positive, got {c_kappa}")
    c = float(c_kappa)
    return Capillarity(
        kind="constant",
        params={"C": c},
        kappa=lambda r: c + 0.0 * r,
        dkappa=lambda r: 0.0 * r,
        d2kappa=lambda r: 0.0 * r,
    )


def qhd_capillarity(epsilon: float) -> Capillarity:
    """``kappa = eps^2 / (4 rho)``, which turns the capillary force into the Bohm force."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    e2 = float(epsilon) ** 2
    return Capillarity(
        kind="qhd",
        params={"epsilon": float(epsilon)},
        kappa=lambda r: e2 / (4.0 * r),
        dkappa=lambda r: -e2 / (4.0 * r**2),
        d2kappa=lambda r: e2 / (2.0 * r**3),
    )


def power_sum_capillarity(terms) -> Capillarity:
    """``kappa = sum_i c_i rho^p_i`` for a list of ``(c_i, p_i)`` pairs."""
    terms = tuple((float(c), float(p)) for c, p in terms)
    if not terms:
        raise ValueError("power-sum capillarity needs at least one term")
    return Capillarity(
        kind="power_sum",
        params={"terms": [list(t) for t in terms]},
        kappa=lambda r: sum(c * r**p for c, p in terms),
        dkappa=lambda r: sum(c * p * r ** (p - 1.0) for c, p in terms),
        d2kappa=lambda r: sum(c * p * (p - 1.0) * r ** (p - 2.0) for c, p in terms),
    )


# -- pointwise constituents of the Korteweg family --------------------------------
# rho has shape S, q has shape (dim,) + S. All functions broadcast.
def _qq(q):
    return np.sum(q * q, axis=0)


def korteweg_F(local, cap, rho, q):
    return local.h(rho) + 0.5 * cap.kappa(rho) * _qq(q)


def korteweg_F_rho(local, cap, rho, q):
    return local.dh(rho) + 0.5 * cap.dkappa(rho) * _qq(q)


def korteweg_s(local, cap, rho, q):
    """``s = rho F_rho + q . F_q - F = p + A(rho)|q|^2``."""
    return local.pressure(rho) + cap.A(rho) * _qq(q)


def _remainder(value, value_bar, grad_rho_bar, grad_q_bar, drho, dq):
    """``g - g_bar - g_rho(bar) drho - g_q(bar) . dq`` with the q-contraction on axis 0."""
    return value - value_bar - grad_rho_bar * drho - np.sum(grad_q_bar * dq, axis=0)


def relative_scalar(name: str, local: LocalEnergy, cap: Capillarity | None, rho, q, rho_bar, q_bar):
    """Second-order Taylor remainder ``g(rho, q | rho_bar, q_bar)`` for a named constituent.

    ``name`` is one of ``h, p, kappa, A, B`` (functions of the density only)
    or ``s, F`` (functions of density and gradient).
    """
    drho = rho - rho_bar
    if name == "h":
        return local.relative(rho, rho_bar)
    if name == "p":
        return local.relative_pressure(rho, rho_bar)
    if cap is None:
        raise ValueError(f"relative {name!r} needs a capillarity")
    if name == "kappa":
        return cap.kappa(rho) - cap.kappa(rho_bar) - cap.dkappa(rho_bar) * drho
    if name == "A":
        return cap.A(rho) - cap.A(rho_bar) - cap.dA(rho_bar) * drho
    if name == "B":
        return cap.B(rho) - cap.B(rho_bar) - cap.dB(rho_bar) * drho
    q, q_bar = np.asarray(q, dtype=float), np.asarray(q_bar, dtype=float)
    dq = q - q_bar
    if name == "s":
        s_rho = local.dpressure(rho_bar) + cap.dA(rho_bar) * _qq(q_bar)
        s_q = 2.0 * cap.A(rho_bar) * q_bar
        return _remainder(korteweg_s(local, cap, rho, q), korteweg_s(local, cap, rho_bar, q_bar),
                          s_rho, s_q, drho, dq)
    if name == "F":
        return _remainder(korteweg_F(local, cap, rho, q), korteweg_F(local, cap, rho_bar, q_bar),
                          korteweg_F_rho(local, cap, rho_bar, q_bar), cap.kappa(rho_bar) * q_bar,
                          drho, dq)
    raise ValueError(f"unknown relative function {name!r}")


def relative_r(cap: Capillarity, rho, q, rho_bar, q_bar):
    """Vector remainder of ``r(rho, q) = rho kappa(rho) q``."""
    q, q_bar = np.asarray(q, dtype=float), np.asarray(q_bar, dtype=float)
    drho, dq = rho - rho_bar, q - q_bar
    return cap.B(rho) * q - cap.B(rho_bar) * q_bar - cap.dB(rho_bar) * q_bar * drho - cap.B(rho_bar) * dq


def relative_H(cap: Capillarity, rho, q, rho_bar, q_bar):
    """Tensor remainder of ``H(rho, q) = kappa(rho) q x q``."""
    q, q_bar = np.asarray(q, dtype=float), np.asarray(q_bar, dtype=float)
    drho, dq = rho - rho_bar, q - q_bar
    k_bar = cap.kappa(rho_bar)
    return (cap.kappa(rho) * outer(q, q) - k_bar * outer(q_bar, q_bar)
            - cap.dkappa(rho_bar) * drho * outer(q_bar, q_bar)
            - k_bar * (outer(q_bar, dq) + outer(dq, q_bar)))


def relative_s_expanded(local, cap, rho, q, rho_bar, q_bar):
    """Regrouped remainder of ``s``: the form used to read off the sign structure.

    ``p(rho|rho_bar) + A(rho|rho_bar)|q_bar|^2 + A(rho)|q - q_bar|^2 + 2 (A(rho) - A(rho_bar)) q_bar . (q - q_bar)``
    """
    q, q_bar = np.asarray(q, dtype=float), np.asarray(q_bar, dtype=float)
    dq = q - q_bar
    a_rel = cap.A(rho) - cap.A(rho_bar) - cap.dA(rho_bar) * (rho - rho_bar)
    return (local.relative_pressure(rho, rho_bar) + a_rel * _qq(q_bar) + cap.A(rho) * _qq(dq)
            + 2.0 * (cap.A(rho) - cap.A(rho_bar)) * np.sum(q_bar * dq, axis=0))


def relative_H_expanded(cap, rho, q, rho_bar, q_bar):
    """``kappa(rho) dq x dq + kappa(rho|rho_bar) q_bar x q_bar + (kappa(rho) - kappa(rho_bar)) (q_bar x dq + dq x q_bar)``."""
    q, q_bar = np.asarray(q, dtype=float), np.asarray(q_bar, dtype=float)
    dq = q - q_bar
    k_rel = cap.kappa(rho) - cap.kappa(rho_bar) - cap.dkappa(rho_bar) * (rho - rho_bar)
    return (cap.kappa(rho) * outer(dq, dq) + k_rel * outer(q_bar, q_bar)
            + (cap.kappa(rho) - cap.kappa(rho_bar)) * (outer(q_bar, dq) + outer(dq, q_bar)))


def relative_r_expanded(cap, rho, q, rho_bar, q_bar):
    """``B(rho|rho_bar) q_bar + (B(rho) - B(rho_bar)) (q - q_bar)``."""
    q, q_bar = np.asarray(q, dtype=float), np.asarray(q_bar, dtype=float)
    b_rel = cap.B(rho) - cap.B(rho_bar) - cap.dB(rho_bar) * (rho - rho_bar)
    return b_rel * q_bar + (cap.B(rho) - cap.B(rho_bar)) * (q - q_bar)


# -- models -----------------------------------------------------------------------------
class _KortewegFamily:
    """Shared implementation for ``F = h + kappa |grad rho|^2 / 2``."""

    local: LocalEnergy
    band: tuple

    @property
    def cap(self) -> Capillarity:  # pragma: no cover - overridden
        raise NotImplementedError

    def aux(self, grid, rho):
        return None

    def energy_density(self, grid: TorusGrid, rho):
        rho = check_admissible(grid.scalar(rho), self.band)
        return korteweg_F(self.local, self.cap, rho, grid.gradient(rho))

    def energy(self, grid: TorusGrid, rho) -> float:
        return grid.integrate(self.energy_density(grid, rho))

    def variational_derivative(self, grid: TorusGrid, rho):
        """``h'(rho) + kappa'(rho)|grad rho|^2 / 2 - div(kappa(rho) grad rho)``."""
        rho = check_admissible(grid.scalar(rho), self.band)
        cap = self.cap
        q = grid.gradient(rho)
        return self.local.dh(rho) + 0.5 * cap.dkappa(rho) * _qq(q) - grid.divergence(cap.kappa(rho) * q)

    def stress(self, grid: TorusGrid, rho):
        """``S = (-p - A|q|^2 + div(rho kappa q)) I - kappa q x q``."""
        rho = check_admissible(grid.scalar(rho), self.band)
        cap = self.cap
        q = grid.gradient(rho)
        iso = -self.local.pressure(rho) - cap.A(rho) * _qq(q) + grid.divergence(cap.B(rho) * q)
        return grid.identity(iso) - cap.kappa(rho) * outer(q, q)

    def stress_linearization(self, grid: TorusGrid, rho, psi):
        """Directional derivative ``dS(rho)[psi]`` assembled from the partials of s, r and H."""
        rho = check_admissible(grid.scalar(rho), self.band)
        psi = grid.scalar(psi)
        cap = self.cap
        q, dq = grid.gradient(rho), grid.gradient(psi)
        ds = (self.local.dpressure(rho) + cap.dA(rho) * _qq(q)) * psi + 2.0 * cap.A(rho) * dot(q, dq)
        dr = cap.dB(rho) * q * psi + cap.B(rho) * dq
        dh = cap.dkappa(rho) * psi * outer(q, q) + cap.kappa(rho) * (outer(q, dq) + outer(dq, q))
        return grid.identity(-ds + grid.divergence(dr)) - dh

    def relative_stress(self, grid: TorusGrid, rho, rho_bar):
        """``S(rho) - S(rho_bar) - dS(rho_bar)[rho - rho_bar]``."""
        rho = grid.scalar(rho)
        rho_bar = grid.scalar(rho_bar)
        return (self.stress(grid, rho) - self.stress(grid, rho_bar)
                - self.stress_linearization(grid, rho_bar, rho - rho_bar))

    def relative_potential_density(self, grid: TorusGrid, rho, rho_bar):
        rho = check_admissible(grid.scalar(rho), self.band)
        rho_bar = check_admissible(grid.scalar(rho_bar), self.band)
        return relative_scalar("F", self.local, self.cap, rho, grid.gradient(rho),
                               rho_bar, grid.gradient(rho_bar))

    def relative_potential(self, grid: TorusGrid, rho, rho_bar) -> float:
        return grid.integrate(self.relative_potential_density(grid, rho, rho_bar))

    def second_variation(self, grid: TorusGrid, rho, psi, phi) -> float:
        """Quadrature of the Hessian form ``(F_rr, F_rq; F_rq, F_qq)`` on ``(psi, phi)``."""
        rho = check_admissible(grid.scalar(rho), self.band)
        cap = self.cap
        q = grid.gradient(rho)
        gpsi, gphi = grid.gradient(psi), grid.gradient(phi)
        f_rr = self.local.d2h(rho) + 0.5 * cap.d2kappa(rho) * _qq(q)
        dens = (f_rr * psi * phi + cap.dkappa(rho) * (psi * dot(q, gphi) + phi * dot(q, gpsi))
                + cap.kappa(rho) * dot(gpsi, gphi))
        return grid.integrate(dens)


@dataclass(frozen=True, eq=False)
class Korteweg(_KortewegFamily):
    local: LocalEnergy
    capillarity: Capillarity
    band: tuple = DEFAULT_BAND
    type: str = field(default="Korteweg", init=False)

    @property
    def cap(self) -> Capillarity:
        return self.capillarity


@dataclass(frozen=True, eq=False)
class QHD(_KortewegFamily):
    """Quantum hydrodynamics: the Korteweg family with ``kappa = eps^2 / (4 rho)``."""

    local: LocalEnergy
    epsilon: float
    band: tuple = DEFAULT_BAND
    type: str = field(default="QHD", init=False)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def cap(self) -> Capillarity:
        return qhd_capillarity(self.epsilon)

    def bohm_variational_derivative(self, grid: TorusGrid, rho):
        """``h'(rho) - (eps^2/2) lap(sqrt rho) / sqrt rho``."""
        rho = check_admissible(grid.scalar(rho), self.band)
        root = np.sqrt(rho)
        return self.local.dh(rho) - 0.5 * self.epsilon**2 * grid.laplacian(root) / root

    def bohm_stress(self, grid: TorusGrid, rho):
        """``(eps^2/4) lap(rho) I - (eps^2 / 4 rho) grad rho x grad rho - p I``."""
        rho = check_admissible(grid.scalar(rho), self.band)
        e2 = self.epsilon**2
        q = grid.gradient(rho)
        return (grid.identity(0.25 * e2 * grid.laplacian(rho) - self.local.pressure(rho))
                - (e2 / (4.0 * rho)) * outer(q, q))

    def relative_potential_bohm(self, grid: TorusGrid, rho, rho_bar) -> float:
        """``h(rho|rho_bar) + (eps^2/8) rho |grad rho / rho - grad rho_bar / rho_bar|^2``."""
        rho = check_admissible(grid.scalar(rho), self.band)
        rho_bar = check_admissible(grid.scalar(rho_bar), self.band)
        w = grid.gradient(rho) / rho - grid.gradient(rho_bar) / rho_bar
        dens = self.local.relative(rho, rho_bar) + 0.125 * self.epsilon**2 * rho * _qq(w)
        return grid.integrate(dens)


@dataclass(frozen=True, eq=False)
class EulerPoisson:
    """``E = int h(rho) - rho c / 2`` with ``-lap c + beta c = rho - mean(rho)``."""

    local: LocalEnergy
    beta: float = 0.0
    band: tuple = DEFAULT_BAND
    type: str = field(default="EulerPoisson", init=False)

    def __post_init__(self):
        if not self.beta >= 0:
            raise ValueError(f"beta must be nonnegative, got {self.beta}")

    def aux(self, grid: TorusGrid, rho):
        return grid.screened_poisson_mean_free(rho, self.beta)

    def energy_density(self, grid: TorusGrid, rho):
        rho = check_admissible(grid.scalar(rho), self.band)
        return self.local.h(rho) - 0.5 * rho * self.aux(grid, rho)

    def energy(self, grid: TorusGrid, rho) -> float:
        return grid.integrate(self.energy_density(grid, rho))

    def variational_derivative(self, grid: TorusGrid, rho):
        rho = check_admissible(grid.scalar(rho), self.band)
        return self.local.dh(rho) - self.aux(grid, rho)

    def stress(self, grid: TorusGrid, rho):
        """``-(p - |grad c|^2/2 - beta c^2/2 - mean(rho) c) I - grad c x grad c``."""
        rho = check_admissible(grid.scalar(rho), self.band)
        c = self.aux(grid, rho)
        gc = grid.gradient(c)
        iso = -(self.local.pressure(rho) - 0.5 * _qq(gc) - 0.5 * self.beta * c**2 - grid.mean(rho) * c)
        return grid.identity(iso) - outer(gc, gc)

    def stress_linearization(self, grid: TorusGrid, rho, psi):
        rho = check_admissible(grid.scalar(rho), self.band)
        psi = grid.scalar(psi)
        c, dc = self.aux(grid, rho), self.aux(grid, psi)
        gc, gdc = grid.gradient(c), grid.gradient(dc)
        iso = -(self.local.dpressure(rho) * psi - dot(gc, gdc) - self.beta * c * dc
                - grid.mean(psi) * c - grid.mean(rho) * dc)
        return grid.identity(iso) - outer(gdc, gc) - outer(gc, gdc)

    def relative_stress(self, grid: TorusGrid, rho, rho_bar):
        rho, rho_bar = grid.scalar(rho), grid.scalar(rho_bar)
        return (self.stress(grid, rho) - self.stress(grid, rho_bar)
                - self.stress_linearization(grid, rho_bar, rho - rho_bar))

    def relative_stress_closed(self, grid: TorusGrid, rho, rho_bar):
        """``(-p(rho|rho_bar) + |grad dc|^2/2 + beta dc^2/2 + mean(drho) dc) I - grad dc x grad dc``."""
        rho = check_admissible(grid.scalar(rho), self.band)
        rho_bar = check_admissible(grid.scalar(rho_bar), self.band)
        dc = self.aux(grid, rho - rho_bar)
        gdc = grid.gradient(dc)
        iso = (-self.local.relative_pressure(rho, rho_bar) + 0.5 * _qq(gdc) + 0.5 * self.beta * dc**2
               + grid.mean(rho - rho_bar) * dc)
        return grid.identity(iso) - outer(gdc, gdc)

    def relative_potential_parts(self, grid: TorusGrid, rho, rho_bar) -> tuple:
        """``(int h(rho|rho_bar), field term)`` where the field term is
        ``||grad dc||^2/2 + beta ||dc||^2/2`` and enters the relative potential with a minus sign."""
        rho = check_admissible(grid.scalar(rho), self.band)
        rho_bar = check_admissible(grid.scalar(rho_bar), self.band)
        dc = self.aux(grid, rho - rho_bar)
        field_term = 0.5 * grid.h1_seminorm(dc) ** 2 + 0.5 * self.beta * grid.l2_norm(dc) ** 2
        return grid.integrate(self.local.relative(rho, rho_bar)), field_term

    def relative_potential(self, grid: TorusGrid, rho, rho_bar) -> float:
        local_part, field_term = self.relative_potential_parts(grid, rho, rho_bar)
        return local_part - field_term

    def second_variation(self, grid: TorusGrid, rho, psi, phi) -> float:
        rho = check_admissible(grid.scalar(rho), self.band)
        return grid.integrate(self.local.d2h(rho) * psi * phi - psi * self.aux(grid, phi))


@dataclass(frozen=True, eq=False)
class LowerOrder:
    """Order-parameter energy ``h + C alpha (rho - c)^2 / 2 + C |grad c|^2 / 2`` with ``c = G_alpha rho``."""

    local: LocalEnergy
    c_kappa: float
    alpha: float
    band: tuple = DEFAULT_BAND
    type: str = field(default="LowerOrder", init=False)

    def __post_init__(self):
        if not (self.c_kappa > 0 and self.alpha > 0):
            raise ValueError(f"LowerOrder needs C_kappa > 0 and alpha > 0, got {self.c_kappa}, {self.alpha}")

    def aux(self, grid: TorusGrid, rho):
        return grid.helmholtz_inverse(rho, self.alpha)

    def energy_density(self, grid: TorusGrid, rho):
        rho = check_admissible(grid.scalar(rho), self.band)
        c = self.aux(grid, rho)
        ck, a = self.c_kappa, self.alpha
        return self.local.h(rho) + 0.5 * ck * a * (rho - c) ** 2 + 0.5 * ck * _qq(grid.gradient(c))

    def energy(self, grid: TorusGrid, rho) -> float:
        return grid.integrate(self.energy_density(grid, rho))

    def energy_forms(self, grid: TorusGrid, rho) -> dict:
        """The three equivalent ways of writing the energy (they agree after integration)."""
        rho = check_admissible(grid.scalar(rho), self.band)
        c = self.aux(grid, rho)
        ck, a = self.c_kappa, self.alpha
        h = self.local.h(rho)
        return {
            "split": grid.integrate(h + 0.5 * ck * a * (rho - c) ** 2 + 0.5 * ck * _qq(grid.gradient(c))),
            "quadratic": grid.integrate(h + 0.5 * ck * a * rho**2 - 0.5 * ck * a * rho * c),
            "gradient": grid.integrate(h + 0.5 * ck * dot(grid.gradient(rho), grid.gradient(c))),
        }

    def variational_derivative(self, grid: TorusGrid, rho):
        rho = check_admissible(grid.scalar(rho), self.band)
        return self.local.dh(rho) + self.c_kappa * self.alpha * (rho - self.aux(grid, rho))

    def stress(self, grid: TorusGrid, rho):
        """``-(p + C alpha rho^2/2 - C |grad c|^2/2 - C alpha c^2/2) I - C grad c x grad c``."""
        rho = check_admissible(grid.scalar(rho), self.band)
        ck, a = self.c_kappa, self.alpha
        c = self.aux(grid, rho)
        gc = grid.gradient(c)
        iso = -(self.local.pressure(rho) + 0.5 * ck * a * rho**2 - 0.5 * ck * _qq(gc) - 0.5 * ck * a * c**2)
        return grid.identity(iso) - ck * outer(gc, gc)

    def stress_linearization(self, grid: TorusGrid, rho, psi):
        rho = check_admissible(grid.scalar(rho), self.band)
        psi = grid.scalar(psi)
        ck, a = self.c_kappa, self.alpha
        c, dc = self.aux(grid, rho), self.aux(grid, psi)
        gc, gdc = grid.gradient(c), grid.gradient(dc)
        iso = -(self.local.dpressure(rho) * psi + ck * a * rho * psi - ck * dot(gc, gdc) - ck * a * c * dc)
        return grid.identity(iso) - ck * (outer(gdc, gc) + outer(gc, gdc))

    def relative_stress(self, grid: TorusGrid, rho, rho_bar):
        rho, rho_bar = grid.scalar(rho), grid.scalar(rho_bar)
        return (self.stress(grid, rho) - self.stress(grid, rho_bar)
                - self.stress_linearization(grid, rho_bar, rho - rho_bar))

    def relative_stress_closed(self, grid: TorusGrid, rho, rho_bar):
        rho = check_admissible(grid.scalar(rho), self.band)
        rho_bar = check_admissible(grid.scalar(rho_bar), self.band)
        ck, a = self.c_kappa, self.alpha
        drho = rho - rho_bar
        dc = self.aux(grid, drho)
        gdc = grid.gradient(dc)
        iso = -(self.local.relative_pressure(rho, rho_bar) + 0.5 * ck * a * drho**2
                - 0.5 * ck * _qq(gdc) - 0.5 * ck * a * dc**2)
        return grid.identity(iso) - ck * outer(gdc, gdc)

    def relative_potential(self, grid: TorusGrid, rho, rho_bar) -> float:
        rho = check_admissible(grid.scalar(rho), self.band)
        rho_bar = check_admissible(grid.scalar(rho_bar), self.band)
        ck, a = self.c_kappa, self.alpha
        drho = rho - rho_bar
        dc = self.aux(grid, drho)
        dens = self.local.relative(rho, rho_bar) + 0.5 * ck * a * (drho - dc) ** 2 + 0.5 * ck * _qq(grid.gradient(dc))
        return grid.integrate(dens)

    def second_variation(self, grid: TorusGrid, rho, psi, phi) -> float:
        rho = check_admissible(grid.scalar(rho), self.band)
        ck, a = self.c_kappa, self.alpha
        dens = (self.local.d2h(rho) + ck * a) * psi * phi - ck * a * psi * self.aux(grid, phi)
        return grid.integrate(dens)


EnergyModel = Korteweg | QHD | EulerPoisson | LowerOrder


def energy_total(model, grid: TorusGrid, rho) -> float:
    return model.energy(grid, rho)


def variational_derivative(model, grid: TorusGrid, rho):
    return model.variational_derivative(grid, rho)


def stress_tensor(model, grid: TorusGrid, rho):
    return model.stress(grid, rho)


def relative_stress(model, grid: TorusGrid, rho, rho_bar):
    return model.relative_stress(grid, rho, rho_bar)


def local_relative_energy(model, grid: TorusGrid, rho, rho_bar) -> float:
    """``int h(rho | rho_bar)``, the part dropped by the reduced relative energy."""
    rho = check_admissible(grid.scalar(rho), model.band)
    rho_bar = check_admissible(grid.scalar(rho_bar), model.band)
    return grid.integrate(model.local.relative(rho, rho_bar))


def noether_residual(model, grid: TorusGrid, rho) -> float:
    """``||rho grad(dE/drho) + div S||_inf / ||div S||_inf``."""
    rho = grid.scalar(rho)
    div_s = grid.tensor_divergence(model.stress(grid, rho))
    prim = rho * grid.gradient(model.variational_derivative(grid, rho))
    scale = np.max(np.abs(div_s))
    return float(np.max(np.abs(prim + div_s)) / scale) if scale > 0 else float(np.max(np.abs(prim)))


# -- convexity ----------------------------------------------------------------------
@dataclass(frozen=True)
class ConvexityReport:
    band: tuple
    min_h2: float
    min_kappa: float
    min_kappa_condition: float  # min of kappa kappa'' - 2 kappa'^2
    min_kappa2: float
    local_convex: bool
    kappa_positive: bool
    strictly_convex: bool  # h'' > 0, kappa > 0, kappa kappa'' - 2 kappa'^2 >= 0
    uniformly_convex: bool  # h'' >= a1 > 0, kappa - 2 kappa'^2 / kappa'' >= a2 > 0, kappa'' > 0
    alpha1: float
    alpha2: float
    min_hessian_eigenvalue: float
    decomposition_bound: float  # min(h'', (kappa kappa'' - 2 kappa'^2)/kappa'') where kappa'' > 0


def check_convexity(cap: Capillarity, local: LocalEnergy, band=(0.1, 10.0),
                    samples: int = 401, q_max: float = 10.0, tol: float = 1e-12) -> ConvexityReport:
    """Sample the convexity conditions of ``F = h + kappa |q|^2 / 2`` over a density band.

    The Hessian of ``F`` acting on ``(a, b)`` has eigenvalue ``kappa`` on directions
    orthogonal to ``q`` and otherwise reduces to the 2x2 block
    ``[[h'' + kappa''|q|^2/2, kappa'|q|], [kappa'|q|, kappa]]``; both are evaluated on a
    ``(rho, |q|)`` sample grid.
    """
    lo, hi = float(band[0]), float(band[1])
    if not 0 < lo < hi:
        raise ValueError(f"band must satisfy 0 < rho_min < rho_max, got {band}")
    rho = np.geomspace(lo, hi, samples)
    h2 = local.d2h(rho)
    k0, k1, k2 = cap.kappa(rho) + 0 * rho, cap.dkappa(rho) + 0 * rho, cap.d2kappa(rho) + 0 * rho
    cond = k0 * k2 - 2.0 * k1**2
    scale = np.maximum(np.abs(k0 * k2), 2.0 * k1**2) + 1e-300
    local_convex = bool(np.all(h2 > 0))
    kappa_positive = bool(np.all(k0 > 0))
    strictly = local_convex and kappa_positive and bool(np.all(cond >= -tol * scale))
    if np.all(k2 > 0):
        a2 = float(np.min(k0 - 2.0 * k1**2 / k2))
        decomposition = float(np.min(np.minimum(h2, cond / k2)))
    else:
        a2 = float("nan")
        decomposition = float("nan")
    a1 = float(np.min(h2))
    uniformly = bool(a1 > 0 and np.all(k2 > 0) and a2 > 0)

    t = np.linspace(0.0, q_max, 41)
    R, T = np.meshgrid(rho, t, indexing="ij")
    hh = local.d2h(R) + 0.5 * cap.d2kappa(R) * T**2
    off = cap.dkappa(R) * T
    kk = cap.kappa(R) + 0 * R
    block = np.stack([np.stack([hh, off], -1), np.stack([off, kk], -1)], -2)
    eig = np.linalg.eigvalsh(block)
    min_eig = float(min(np.min(eig), np.min(kk)))
    return ConvexityReport(
        band=(lo, hi), min_h2=a1, min_kappa=float(np.min(k0)),
        min_kappa_condition=float(np.min(cond)), min_kappa2=float(np.min(k2)),
        local_convex=local_convex, kappa_positive=kappa_positive, strictly_convex=strictly,
        uniformly_convex=uniformly, alpha1=a1, alpha2=a2, min_hessian_eigenvalue=min_eig,
        decomposition_bound=decomposition,
    )


def hessian_quadratic_form(local, cap, rho, q, a, b):
    """``(a, b) . Hess F(rho, q) . (a, b)`` evaluated directly."""
    q, b = np.asarray(q, dtype=float), np.asarray(b, dtype=float)
    return ((local.d2h(rho) + 0.5 * cap.d2kappa(rho) * _qq(q)) * a**2
            + 2.0 * cap.dkappa(rho) * a * np.sum(q * b, axis=0) + cap.kappa(rho) * _qq(b))


def hessian_quadratic_form_split(local, cap, rho, q, a, b):
    """The same form regrouped as a sum with sign-definite pieces (requires kappa'' != 0).

    ``h'' a^2 + (kappa kappa'' - 2 kappa'^2)/kappa'' |b|^2 + (2/kappa'') |kappa'' a q / 2 + kappa' b|^2``
    """
    q, b = np.asarray(q, dtype=float), np.asarray(b, dtype=float)
    k0, k1, k2 = cap.kappa(rho), cap.dkappa(rho), cap.d2kappa(rho)
    v = 0.5 * k2 * a * q + k1 * b
    return local.d2h(rho) * a**2 + (k0 * k2 - 2.0 * k1**2) / k2 * _qq(b) + (2.0 / k2) * _qq(v)


# -- kinetic energy -----------------------------------------------------------------
def kinetic_hessian(rho: float, m) -> np.ndarray:
    """Hessian of ``k(rho, m) = |m|^2 / (2 rho)`` in the variables ``(rho, m)``."""
    if rho <= 0:
        raise VacuumError("kinetic energy needs positive density")
    m = np.atleast_1d(np.asarray(m, dtype=float))
    d = m.size
    out = np.empty((d + 1, d + 1))
    out[0, 0] = m @ m / rho**3
    out[0, 1:] = out[1:, 0] = -m / rho**2
    out[1:, 1:] = np.eye(d) / rho
    return out


def kinetic_hessian_eigenvalues(rho: float, m) -> np.ndarray:
    """Closed form ``(0, 1/rho (d-1 times), 1/rho + |m|^2/rho^3)``."""
    if rho <= 0:
        raise VacuumError("kinetic energy needs positive density")
    m = np.atleast_1d(np.asarray(m, dtype=float))
    d = m.size
    return np.array([0.0] + [1.0 / rho] * (d - 1) + [1.0 / rho + (m @ m) / rho**3])


def kinetic_quadratic_form(rho: float, m, a: float, b) -> float:
    """``(1/rho) |(m/rho) a - b|^2``, which equals ``(a, b) . Hess k . (a, b)``."""
    m, b = np.atleast_1d(np.asarray(m, dtype=float)), np.atleast_1d(np.asarray(b, dtype=float))
    v = m / rho * a - b
    return float(v @ v / rho)


# -- construction from configuration ------------------------------------------------
def local_from_config(block: dict) -> LocalEnergy:
    kind = block.get("kind")
    params = dict(block.get("params", {}))
    if kind == "gamma_law":
        return gamma_law(**params)
    if kind == "double_well":
        return double_well(**params)
    raise ValueError(f"unknown local energy kind {kind!r}")


def capillarity_from_config(block: dict) -> Capillarity:
    kind = block.get("kind")
    params = dict(block.get("params", {}))
    if kind == "constant":
        return constant_capillarity(params["C"])
    if kind == "qhd":
        return qhd_capillarity(params["epsilon"])
    if kind == "power_sum":
        return power_sum_capillarity(params["terms"])
    raise ValueError(f"unknown capillarity kind {kind!r}")


def model_from_config(block: dict, band=DEFAULT_BAND):
    """Build a model from ``{type, h:{kind, params}, kappa:{kind, params}, beta?, alpha?, epsilon?}``."""
    kind = block.get("type")
    local = local_from_config(block["h"])
    band = tuple(band)
    if kind == "Korteweg":
        return Korteweg(local, capillarity_from_config(block["kappa"]), band)
    if kind == "QHD":
        return QHD(local, float(block["epsilon"]), band)
    if kind == "EulerPoisson":
        return EulerPoisson(local, float(block.get("beta", 0.0)), band)
    if kind == "LowerOrder":
        cap = block.get("kappa", {})
        if cap.get("kind") != "constant":
            raise ValueError("LowerOrder needs a constant capillarity block")
        return LowerOrder(local, float(cap["params"]["C"]), float(block["alpha"]), band)
    raise ValueError(f"unknown model type {kind!r}")


def capillary_stiffness(model, rho_min: float, rho_max: float) -> float:
    """Largest ``sqrt(rho kappa(rho))`` over the density range; zero without a gradient term."""
    if isinstance(model, _KortewegFamily):
        r = np.linspace(rho_min, rho_max, 64)
        return float(np.sqrt(np.max(r * model.cap.kappa(r))))
    return 0.0
