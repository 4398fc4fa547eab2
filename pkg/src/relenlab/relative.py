"""Relative energies between two solutions and the identities that govern them.

Conventions: the second state argument (``s_bar``) is always the reference
("strong") solution whose velocity ``u_bar`` appears in the identities, and
``grad u_bar`` is the Jacobian ``J[i, j] = d u_bar_i / d x_j``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import State, viscous_stress
from .energy import (Korteweg, LowerOrder, _KortewegFamily, check_admissible,
                     relative_H_expanded, relative_r_expanded, relative_s_expanded)
from .torus import TorusGrid, contract, dot, outer

CSV_COLUMNS = ["t", "rel_kinetic", "rel_potential", "rel_total", "reduced", "lhs_rate",
               "rhs_value", "residual"] + [f"A{i}" for i in range(1, 9)]


@dataclass
class RelativeEnergyReport:
    time: float
    rel_kinetic: float
    rel_potential: float
    rel_total: float
    reduced: float = math.nan
    rhs_value: float = math.nan
    lhs_rate: float = math.nan
    residual: float = math.nan
    terms: dict = field(default_factory=dict)

    def row(self) -> dict:
        out = {"t": self.time, "rel_kinetic": self.rel_kinetic, "rel_potential": self.rel_potential,
               "rel_total": self.rel_total, "reduced": self.reduced, "lhs_rate": self.lhs_rate,
               "rhs_value": self.rhs_value, "residual": self.residual}
        for i in range(1, 9):
            out[f"A{i}"] = self.terms.get(f"A{i}", math.nan)
        return out


def write_reports_csv(path, reports) -> None:
    """Write reports with the fixed column set; NaN entries are written as empty cells."""
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for rep in reports:
            row = rep.row() if isinstance(rep, RelativeEnergyReport) else rep
            writer.writerow({k: ("" if _isnan(row.get(k)) else repr(float(row[k]))) for k in CSV_COLUMNS})


def _isnan(v) -> bool:
    return v is None or (isinstance(v, float) and math.isnan(v))


def _pair(model, grid: TorusGrid, s: State, s_bar: State):
    rho = check_admissible(grid.scalar(s.rho), model.band)
    rho_bar = check_admissible(grid.scalar(s_bar.rho), model.band)
    return rho, rho_bar, s.m / rho, s_bar.m / rho_bar


# -- relative energies -----------------------------------------------------------
def relative_kinetic(grid: TorusGrid, s: State, s_bar: State) -> float:
    """``int rho |u - u_bar|^2 / 2``."""
    w = s.m / s.rho - s_bar.m / s_bar.rho
    return grid.integrate(0.5 * s.rho * dot(w, w))


def relative_kinetic_bregman(grid: TorusGrid, s: State, s_bar: State) -> float:
    """The same quantity as the Taylor remainder of ``k(rho, m) = |m|^2 / (2 rho)``."""
    rho, m, rb, mb = s.rho, s.m, s_bar.rho, s_bar.m
    k = 0.5 * dot(m, m) / rho
    kb = 0.5 * dot(mb, mb) / rb
    k_rho = -0.5 * dot(mb, mb) / rb**2
    k_m = mb / rb
    return grid.integrate(k - kb - k_rho * (rho - rb) - dot(k_m, m - mb))


def relative_potential(model, grid: TorusGrid, rho, rho_bar) -> float:
    return model.relative_potential(grid, rho, rho_bar)


def relative_total(model, grid: TorusGrid, s: State, s_bar: State) -> float:
    return relative_kinetic(grid, s, s_bar) + model.relative_potential(grid, s.rho, s_bar.rho)


def reduced_relative_energy(model, grid: TorusGrid, s: State, s_bar: State) -> float:
    """Relative energy with the local part ``int h(rho|rho_bar)`` removed.

    For constant capillarity this is ``int C |grad(rho - rho_bar)|^2 / 2 + rho |u - u_bar|^2 / 2``.
    """
    rho = check_admissible(grid.scalar(s.rho), model.band)
    rho_bar = check_admissible(grid.scalar(s_bar.rho), model.band)
    local = grid.integrate(model.local.relative(rho, rho_bar))
    return relative_total(model, grid, s, s_bar) - local


def reduced_relative_energy_lo(lo_model: LowerOrder, grid: TorusGrid, nsk_state: State,
                               lo_state: State) -> tuple:
    """``eta_R^alpha`` between an NSK state and a lower-order state, with its three parts.

    Returns ``(total, {"gradient", "penalty", "kinetic"})`` where ``gradient`` is
    ``C |grad(c - rho)|^2 / 2``, ``penalty`` is ``alpha C |rho^alpha - c|^2 / 2`` and
    ``kinetic`` is ``rho^alpha |u - u^alpha|^2 / 2`` (all integrated).
    """
    ck, alpha = lo_model.c_kappa, lo_model.alpha
    rho = check_admissible(grid.scalar(nsk_state.rho), lo_model.band)
    ra = check_admissible(grid.scalar(lo_state.rho), lo_model.band)
    c = lo_model.aux(grid, ra)
    g = grid.gradient(c - rho)
    w = nsk_state.m / rho - lo_state.m / ra
    parts = {
        "gradient": grid.integrate(0.5 * ck * dot(g, g)),
        "penalty": grid.integrate(0.5 * alpha * ck * (ra - c) ** 2),
        "kinetic": grid.integrate(0.5 * ra * dot(w, w)),
    }
    return sum(parts.values()), parts


def reduced_relative_energy_lo_from_energy(lo_model: LowerOrder, grid: TorusGrid, nsk_state: State,
                                           lo_state: State) -> float:
    """``eta_R^alpha`` rebuilt from the quadratic form of the lower-order energy.

    Uses ``int alpha C (rho^a - c)^2/2 + C|grad c|^2/2 = int alpha C rho^a (rho^a - c)/2`` and
    integration by parts on the cross term ``-C int grad c . grad rho = C int c lap rho``.
    """
    ck, alpha = lo_model.c_kappa, lo_model.alpha
    rho, ra = grid.scalar(nsk_state.rho), grid.scalar(lo_state.rho)
    c = lo_model.aux(grid, ra)
    quad = grid.integrate(0.5 * alpha * ck * ra * (ra - c))
    rest = 0.5 * ck * grid.h1_seminorm(rho) ** 2 + ck * grid.inner(c, grid.laplacian(rho))
    return quad + rest + relative_kinetic(grid, lo_state, nsk_state)


# -- stability functionals used by the twin-run experiments -----------------------
def stability_functional(kind: str, model, grid: TorusGrid, s: State, s_bar: State) -> float:
    """Distance functionals between two solutions.

    ``phi``  full relative energy (kinetic + relative potential)
    ``Phi``  ``int rho|u - u_bar|^2/2 + |rho - rho_bar|^2 + |grad rho - grad rho_bar|^2``
    ``Psi``  ``int rho|u - u_bar|^2/2 + h(rho|rho_bar) + rho|grad rho/rho - grad rho_bar/rho_bar|^2/2``
    ``eta_R`` reduced relative energy
    """
    if kind == "phi":
        return relative_total(model, grid, s, s_bar)
    if kind == "eta_R":
        return reduced_relative_energy(model, grid, s, s_bar)
    kin = relative_kinetic(grid, s, s_bar)
    rho, rho_bar = grid.scalar(s.rho), grid.scalar(s_bar.rho)
    if kind == "Phi":
        d = rho - rho_bar
        return kin + grid.l2_norm(d) ** 2 + grid.h1_seminorm(d) ** 2
    if kind == "Psi":
        w = grid.gradient(rho) / rho - grid.gradient(rho_bar) / rho_bar
        return kin + grid.integrate(model.local.relative(rho, rho_bar) + 0.5 * rho * dot(w, w))
    raise ValueError(f"unknown stability functional {kind!r}")


# -- the integrated relative-energy identity ----------------------------------------
def identity_terms(model, grid: TorusGrid, s: State, s_bar: State, zeta: float = 0.0) -> dict:
    """Right-hand side of the relative-energy identity, computed two ways.

    ``abstract``     ``int grad u_bar : S(rho|rho_bar)`` with the relative stress of the model
    ``specialized``  the model-specific expansion; for the Korteweg family
                     ``-int div u_bar s(.|.) + grad div u_bar . r(.|.) + grad u_bar : H(.|.)``
    ``kinetic``      ``-int rho grad u_bar : (u - u_bar) x (u - u_bar)``
    ``friction``     ``-zeta int rho |u - u_bar|^2``
    """
    rho, rho_bar, u, u_bar = _pair(model, grid, s, s_bar)
    jac = grid.jacobian(u_bar)
    w = u - u_bar
    kinetic = -grid.integrate(rho * contract(jac, outer(w, w)))
    friction = -zeta * grid.integrate(rho * dot(w, w))
    abstract = grid.integrate(contract(jac, model.relative_stress(grid, rho, rho_bar)))
    if isinstance(model, _KortewegFamily):
        cap, local = model.cap, model.local
        q, q_bar = grid.gradient(rho), grid.gradient(rho_bar)
        div_ub = np.trace(jac, axis1=0, axis2=1)
        dens = (div_ub * relative_s_expanded(local, cap, rho, q, rho_bar, q_bar)
                + dot(grid.grad_div(u_bar), relative_r_expanded(cap, rho, q, rho_bar, q_bar))
                + contract(jac, relative_H_expanded(cap, rho, q, rho_bar, q_bar)))
        specialized = -grid.integrate(dens)
    else:
        specialized = grid.integrate(contract(jac, model.relative_stress_closed(grid, rho, rho_bar)))
    return {"abstract": abstract, "specialized": specialized, "kinetic": kinetic, "friction": friction}


def identity_rhs(model, grid: TorusGrid, s: State, s_bar: State, zeta: float = 0.0,
                 form: str = "abstract") -> float:
    """``d/dt (relative energy)`` predicted by the identity."""
    if form not in ("abstract", "specialized"):
        raise ValueError(f"unknown form {form!r}")
    t = identity_terms(model, grid, s, s_bar, zeta)
    return t[form] + t["kinetic"] + t["friction"]


def _check_time_grids(traj, traj_bar):
    if len(traj) != len(traj_bar):
        raise ValueError(f"trajectories have {len(traj)} and {len(traj_bar)} samples")
    t, tb = np.array([s.time for s in traj]), np.array([s.time for s in traj_bar])
    if not np.allclose(t, tb, rtol=0.0, atol=1e-12 * max(1.0, float(np.max(np.abs(t))))):
        raise ValueError("trajectories are not sampled at matching times")
    if len(t) < 3:
        raise ValueError("need at least three samples for a central difference")
    return t


def identity_residual(model, grid: TorusGrid, traj, traj_bar, zeta: float = 0.0) -> list:
    """Central-difference rate of the relative energy minus the identity's right-hand side.

    One report per interior sample; ``terms`` holds the abstract and specialized forms.
    """
    t = _check_time_grids(traj, traj_bar)
    kin = [relative_kinetic(grid, a, b) for a, b in zip(traj, traj_bar)]
    pot = [model.relative_potential(grid, a.rho, b.rho) for a, b in zip(traj, traj_bar)]
    tot = [k + p for k, p in zip(kin, pot)]
    reports = []
    for i in range(1, len(t) - 1):
        lhs = (tot[i + 1] - tot[i - 1]) / (t[i + 1] - t[i - 1])
        terms = identity_terms(model, grid, traj[i], traj_bar[i], zeta)
        rhs_val = terms["abstract"] + terms["kinetic"] + terms["friction"]
        local = grid.integrate(model.local.relative(traj[i].rho, traj_bar[i].rho))
        reports.append(RelativeEnergyReport(
            time=float(t[i]), rel_kinetic=kin[i], rel_potential=pot[i], rel_total=tot[i],
            reduced=tot[i] - local, rhs_value=rhs_val, lhs_rate=lhs, residual=lhs - rhs_val,
            terms={"abstract": terms["abstract"], "specialized": terms["specialized"],
                   "kinetic": terms["kinetic"], "friction": terms["friction"]}))
    return reports


# -- rate terms ------------------------------------------------------------------------
def _constant_capillarity(model) -> float:
    if not (isinstance(model, Korteweg) and model.cap.kind == "constant"):
        raise ValueError("rate terms are defined for Korteweg models with constant capillarity")
    return model.cap.params["C"]


def rate_terms_nsk(model: Korteweg, grid: TorusGrid, s: State, s_bar: State,
                   lam: float = 0.0, mu: float = 0.0) -> dict:
    """Integrated rate terms ``A1..A6`` between two constant-capillarity solutions.

    ``A1 + ... + A4`` is the rate of the relative energy and ``A1 + ... + A6`` that
    of the reduced relative energy. With viscosity an extra term ``Av`` (the
    counterpart of the viscous term in :func:`rate_terms_lo`) joins both sums.
    """
    ck = _constant_capillarity(model)
    rho, rho_bar, u, u_bar = _pair(model, grid, s, s_bar)
    local = model.local
    m, m_bar = s.m, s_bar.m
    d = rho_bar - rho
    grad_rb = grid.gradient(rho_bar)
    p_rel = local.relative_pressure(rho, rho_bar)
    div_m, div_mb = grid.divergence(m), grid.divergence(m_bar)
    v = u_bar - u
    a = {
        "A1": -ck * d * dot(u_bar, grid.grad_laplacian(d)),
        "A2": (dot(grad_rb, v) / rho_bar) * dot(u_bar, rho * v) + dot(u_bar, grad_rb) / rho_bar * p_rel,
        "A3": contract(grid.jacobian(m_bar), outer(-rho * v, v)) / rho_bar,
        "A4": -div_mb / rho_bar * p_rel,
        "A5": div_mb * local.relative_dh(rho, rho_bar),
        "A6": (local.dh(rho) - local.dh(rho_bar)) * (div_m - div_mb),
    }
    out = {k: grid.integrate(val) for k, val in a.items()}
    if lam or mu:
        ds_bar = grid.tensor_divergence(viscous_stress(grid, u_bar, lam, mu))
        ds = grid.tensor_divergence(viscous_stress(grid, u, lam, mu))
        out["Av"] = grid.integrate(dot(ds_bar, v) / rho_bar * (rho - rho_bar) + dot(v, ds_bar - ds))
    return out


def rate_terms_lo(lo_model: LowerOrder, grid: TorusGrid, nsk_state: State, lo_state: State,
                  lam: float = 0.0, mu: float = 0.0) -> dict:
    """Integrated rate terms ``A1..A8`` between an NSK solution and a lower-order solution.

    ``A1 + ... + A6`` is the rate of ``eta^alpha`` and ``A1 + ... + A8`` that of
    ``eta_R^alpha``. Both systems share the capillarity ``C``, the local energy
    and the viscosity ``(lam, mu)``.
    """
    ck, local = lo_model.c_kappa, lo_model.local
    rho = check_admissible(grid.scalar(nsk_state.rho), lo_model.band)
    ra = check_admissible(grid.scalar(lo_state.rho), lo_model.band)
    m, ma = nsk_state.m, lo_state.m
    u, ua = m / rho, ma / ra
    c = lo_model.aux(grid, ra)
    w = u - ua
    div_m, div_ma = grid.divergence(m), grid.divergence(ma)
    ds = grid.tensor_divergence(viscous_stress(grid, u, lam, mu))
    dsa = grid.tensor_divergence(viscous_stress(grid, ua, lam, mu))
    grad_r = grid.gradient(rho)
    p_rel = local.relative_pressure(ra, rho)
    ra_t = -div_ma
    c_t = lo_model.aux(grid, ra_t)
    a = {
        "A1": dot(ds, w) / rho * (ra - rho) + dot(w, ds - dsa),
        "A2": -ck * dot(u, grid.grad_laplacian(rho - c)) * (rho - ra),
        "A3": (dot(grad_r, w) / rho) * dot(u, ra * w) + dot(u, grad_r) / rho * p_rel,
        "A4": contract(grid.jacobian(m), outer(-ra * w, w)) / rho,
        "A5": -div_m / rho * p_rel,
        "A6": -ck * (ra_t - c_t) * grid.laplacian(rho),
        "A7": div_m * local.relative_dh(ra, rho),
        "A8": (local.dh(ra) - local.dh(rho)) * (div_ma - div_m),
    }
    return {k: grid.integrate(val) for k, val in a.items()}


def relative_energy_lo(lo_model: LowerOrder, grid: TorusGrid, nsk_state: State, lo_state: State) -> float:
    """``eta^alpha = eta_R^alpha + int h(rho^alpha | rho)``."""
    reduced, _ = reduced_relative_energy_lo(lo_model, grid, nsk_state, lo_state)
    return reduced + grid.integrate(lo_model.local.relative(lo_state.rho, nsk_state.rho))


# -- local (pointwise) identity for the Korteweg family -------------------------------
def relative_flux(model, grid: TorusGrid, s: State, s_bar: State) -> np.ndarray:
    """Flux ``J`` of the relative potential energy for ``F = h + kappa |q|^2 / 2``."""
    if not isinstance(model, _KortewegFamily):
        raise ValueError("the local identity is implemented for the Korteweg family")
    rho, rho_bar, u, u_bar = _pair(model, grid, s, s_bar)
    cap = model.cap
    m, m_bar = s.m, s_bar.m
    q, q_bar = grid.gradient(rho), grid.gradient(rho_bar)
    drho = rho - rho_bar
    gd = grid.gradient(drho)
    mu_ = model.variational_derivative(grid, rho)
    mu_bar = model.variational_derivative(grid, rho_bar)
    fq, fq_bar = cap.kappa(rho) * q, cap.kappa(rho_bar) * q_bar
    lin = cap.dkappa(rho_bar) * q_bar * drho + cap.kappa(rho_bar) * gd  # F_rq(bar) drho + F_qq(bar) grad drho
    ds = model.stress(grid, rho) - model.stress(grid, rho_bar)
    s_ub = np.einsum("ij...,j...->i...", ds, u_bar)
    div_ub = grid.divergence(u_bar)
    r_rel = relative_r_expanded(cap, rho, q, rho_bar, q_bar)
    return (m * (mu_ - mu_bar) + (fq - fq_bar) * grid.divergence(m) + s_ub
            - lin * grid.divergence(m_bar) + dot(u_bar, q_bar) * lin
            - (u_bar * grid.divergence(drho * fq_bar) - dot(u_bar, gd) * fq_bar)
            - div_ub * r_rel)


def local_identity_parts(model, grid: TorusGrid, s: State, s_bar: State, zeta: float = 0.0) -> tuple:
    """``(density, flux, source)`` of the pointwise relative-energy balance

    ``d/dt density + div flux = source`` where density is
    ``rho|u - u_bar|^2/2 + F(.|.)`` and flux is ``m|u - u_bar|^2/2 + J``.
    """
    rho, rho_bar, u, u_bar = _pair(model, grid, s, s_bar)
    cap, local = model.cap, model.local
    w = u - u_bar
    q, q_bar = grid.gradient(rho), grid.gradient(rho_bar)
    density = 0.5 * rho * dot(w, w) + model.relative_potential_density(grid, rho, rho_bar)
    flux = 0.5 * s.m * dot(w, w) + relative_flux(model, grid, s, s_bar)
    jac = grid.jacobian(u_bar)
    div_ub = np.trace(jac, axis1=0, axis2=1)
    source = (-rho * contract(jac, outer(w, w))
              - div_ub * relative_s_expanded(local, cap, rho, q, rho_bar, q_bar)
              - contract(jac, relative_H_expanded(cap, rho, q, rho_bar, q_bar))
              - dot(grid.grad_div(u_bar), relative_r_expanded(cap, rho, q, rho_bar, q_bar))
              - zeta * rho * dot(w, w))
    return density, flux, source


@dataclass
class LocalIdentitySample:
    time: float
    residual_linf: float
    source_linf: float
    flux_divergence_integral: float
    flux_l2: float


def local_identity_residual(model, grid: TorusGrid, traj, traj_bar, zeta: float = 0.0) -> tuple:
    """Pointwise residual of the local balance at every interior sample.

    Returns ``(samples, residual_fields)``; the time derivative of the density is a
    central difference of the recorded snapshots.
    """
    t = _check_time_grids(traj, traj_bar)
    if np.ptp(np.diff(t)) > 1e-9 * np.mean(np.diff(t)):
        raise ValueError("local identity needs uniformly spaced snapshots")
    dens = [local_identity_parts(model, grid, a, b, zeta)[0] for a, b in zip(traj, traj_bar)]
    samples, fields = [], []
    for i in range(1, len(t) - 1):
        _, flux, source = local_identity_parts(model, grid, traj[i], traj_bar[i], zeta)
        j = relative_flux(model, grid, traj[i], traj_bar[i])
        rate = (dens[i + 1] - dens[i - 1]) / (t[i + 1] - t[i - 1])
        res = rate + grid.divergence(flux) - source
        fields.append(res)
        samples.append(LocalIdentitySample(
            time=float(t[i]), residual_linf=float(np.max(np.abs(res))),
            source_linf=float(np.max(np.abs(source))),
            flux_divergence_integral=grid.integrate(grid.divergence(j)),
            flux_l2=grid.l2_norm(j)))
    return samples, fields
