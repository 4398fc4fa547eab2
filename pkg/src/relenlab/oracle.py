"""Finite-difference oracles and convergence-rate fitting.

These helpers only ever evaluate the functional handed to them, so they can
check analytic derivatives without sharing code with them.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import AdmissibilityError

# eps**(1/3) balances the O(tau^2) truncation of a central difference against roundoff / tau
_CBRT_EPS = float(np.cbrt(np.finfo(float).eps))


@dataclass(frozen=True)
class ConvergenceFit:
    """Least-squares line through ``(log x, log error)``."""

    xs: tuple
    errors: tuple
    slope: float
    r_squared: float

    @property
    def ratios(self) -> tuple:
        """Successive error ratios ``e[i] / e[i + 1]``."""
        e = self.errors
        return tuple(e[i] / e[i + 1] for i in range(len(e) - 1))


def fit_rate(xs: Sequence[float], errors: Sequence[float]) -> ConvergenceFit:
    xs = np.asarray(xs, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if xs.shape != errors.shape or xs.ndim != 1:
        raise ValueError("xs and errors must be 1-d sequences of equal length")
    if xs.size < 3:
        raise ValueError(f"need at least 3 points for a rate fit, got {xs.size}")
    if np.any(xs <= 0) or np.any(errors <= 0) or not np.all(np.isfinite(errors)):
        raise ValueError("rate fits need positive finite xs and errors")
    d = np.diff(xs)
    if not (np.all(d > 0) or np.all(d < 0)):
        raise ValueError("xs must be strictly monotone")
    lx, le = np.log(xs), np.log(errors)
    slope, intercept = np.polyfit(lx, le, 1)
    resid = le - (slope * lx + intercept)
    ss_tot = float(np.sum((le - le.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return ConvergenceFit(tuple(xs.tolist()), tuple(errors.tolist()), float(slope), r2)


def _default_step(rho: np.ndarray, psi: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(rho))), 1.0) / max(float(np.max(np.abs(psi))), 1e-300)
    return _CBRT_EPS * scale


def gateaux_fd(energy: Callable, rho, psi, tau: float | None = None) -> float:
    """Central difference ``(E(rho + tau psi) - E(rho - tau psi)) / (2 tau)``."""
    rho = np.asarray(rho, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if not np.any(psi):
        return 0.0
    tau = _default_step(rho, psi) if tau is None else float(tau)
    if not tau > 0:
        raise ValueError("tau must be positive")
    try:
        plus, minus = energy(rho + tau * psi), energy(rho - tau * psi)
    except AdmissibilityError as exc:
        raise type(exc)(f"perturbed state is inadmissible: {exc}") from exc
    return (plus - minus) / (2.0 * tau)


def second_variation_fd(energy: Callable, rho, psi, phi, eps: float | None = None,
                        tau: float | None = None) -> float:
    """Central difference in direction ``phi`` of the Gateaux derivative in direction ``psi``."""
    rho = np.asarray(rho, dtype=float)
    psi = np.asarray(psi, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if not np.any(phi) or not np.any(psi):
        return 0.0
    if eps is None:
        # eps**(1/4) balances the O(eps^2) truncation against roundoff / eps^2
        eps = float(np.finfo(float).eps) ** 0.25 * max(float(np.max(np.abs(rho))), 1.0) \
            / float(np.max(np.abs(phi)))
    eps = float(eps)
    if tau is None:
        tau = eps * float(np.max(np.abs(phi))) / float(np.max(np.abs(psi)))
    up = gateaux_fd(energy, rho + eps * phi, psi, tau)
    down = gateaux_fd(energy, rho - eps * phi, psi, tau)
    return (up - down) / (2.0 * eps)


def remainder_order(fn: Callable, base, direction, scales: Sequence[float]) -> ConvergenceFit:
    """Fit ``|fn(base + t direction, base)|`` against ``t`` for decreasing ``t``.

    ``fn(x, x_bar)`` should return a Taylor remainder (array or scalar); its max
    norm is the error. A second-order remainder gives slope 2.
    """
    scales = np.asarray(scales, dtype=float)
    if scales.size < 3:
        raise ValueError("need at least 3 scales")
    if np.any(np.diff(scales) >= 0):
        raise ValueError("scales must be strictly decreasing")
    base = np.asarray(base, dtype=float)
    direction = np.asarray(direction, dtype=float)
    errs = [float(np.max(np.abs(fn(base + t * direction, base)))) for t in scales]
    return fit_rate(scales, errs)
