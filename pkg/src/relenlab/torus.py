"""Pseudo-spectral calculus on the periodic torus.

Fields are plain numpy arrays sampled on a uniform grid:

* a scalar field has shape ``(N,) * dim``,
* a vector field has shape ``(dim,) + (N,) * dim``,
* a tensor field has shape ``(dim, dim) + (N,) * dim`` with ``T[i, j]``
  the ``(i, j)`` component.

All operators are pure functions of their inputs and return new arrays.
Derivatives are computed with real FFTs; the Nyquist mode is dropped from
odd-order derivatives so that they map real fields to real fields.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NonFiniteError


@dataclass(frozen=True)
class TorusGrid:
    """Uniform isotropic grid on the torus ``[0, L)^dim``.

    ``dealias`` switches the 2/3-rule truncation applied by :meth:`dealias_filter`
    (the dynamics module filters every nonlinear right-hand side through it).
    """

    dim: int = 1
    n: int = 256
    length: float = 2.0 * np.pi
    dealias: bool = True
    _k: tuple = field(init=False, repr=False, compare=False)
    _k_odd: tuple = field(init=False, repr=False, compare=False)
    _k2: np.ndarray = field(init=False, repr=False, compare=False)
    _mask: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if int(self.n) != self.n or self.n < 8 or self.n % 2:
            raise ValueError(f"points per axis must be an even integer >= 8, got {self.n}")
        if not (np.isfinite(self.length) and self.length > 0):
            raise ValueError(f"period must be positive, got {self.length}")
        n, d = self.n, self.dim
        full = np.fft.fftfreq(n, d=1.0 / n)  # integer wave indices, Nyquist at -n/2
        half = np.arange(n // 2 + 1, dtype=float)
        scale = 2.0 * np.pi / self.length
        ks, ks_odd, idx = [], [], []
        for axis in range(d):
            j = half if axis == d - 1 else full
            shape = [1] * d
            shape[axis] = j.size
            kj = (scale * j).reshape(shape)
            kj_odd = kj.copy()
            kj_odd[np.abs(j.reshape(shape)) == n // 2] = 0.0
            ks.append(kj)
            ks_odd.append(kj_odd)
            idx.append(np.abs(j).reshape(shape))
        k2 = sum(kj**2 for kj in ks)
        keep = (n - 1) // 3
        mask = np.ones(k2.shape, dtype=bool)
        for j in idx:
            mask = mask & (j <= keep)
        object.__setattr__(self, "_k", tuple(ks))
        object.__setattr__(self, "_k_odd", tuple(ks_odd))
        object.__setattr__(self, "_k2", np.broadcast_to(k2, self.spectral_shape).copy())
        object.__setattr__(self, "_mask", np.broadcast_to(mask, self.spectral_shape).copy())

    # -- geometry -----------------------------------------------------------
    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def spectral_shape(self) -> tuple:
        return (self.n,) * (self.dim - 1) + (self.n // 2 + 1,)

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def cell_volume(self) -> float:
        return self.dx**self.dim

    @property
    def volume(self) -> float:
        return self.length**self.dim

    @property
    def wavenumbers(self) -> tuple:
        """Broadcastable wavenumber arrays ``2*pi*j/L`` in rfft layout."""
        return self._k

    @property
    def k_squared(self) -> np.ndarray:
        return self._k2

    @property
    def dealias_mask(self) -> np.ndarray:
        return self._mask

    def coordinates(self) -> tuple:
        """Grid coordinates, one array per axis, each of shape ``self.shape``."""
        x = np.arange(self.n) * self.dx
        if self.dim == 1:
            return (x,)
        return tuple(np.meshgrid(*([x] * self.dim), indexing="ij"))

    # -- transforms ---------------------------------------------------------
    @property
    def _axes(self) -> tuple:
        return tuple(range(-self.dim, 0))

    def fft(self, f: np.ndarray) -> np.ndarray:
        return np.fft.rfftn(f, axes=self._axes)

    def ifft(self, fh: np.ndarray) -> np.ndarray:
        return np.fft.irfftn(fh, s=self.shape, axes=self._axes)

    # -- shape checks -------------------------------------------------------
    def scalar(self, f) -> np.ndarray:
        """Validate a scalar field (or broadcast a constant) and return it as float array."""
        f = np.asarray(f, dtype=float)
        if f.ndim == 0:
            return np.full(self.shape, float(f))
        if f.shape != self.shape:
            raise ValueError(f"scalar field of shape {f.shape} does not match grid {self.shape}")
        return f

    def vector(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,) + self.shape:
            raise ValueError(
                f"vector field of shape {v.shape} does not match grid {(self.dim,) + self.shape}"
            )
        return v

    def tensor(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if t.shape != (self.dim, self.dim) + self.shape:
            raise ValueError(
                f"tensor field of shape {t.shape} does not match grid "
                f"{(self.dim, self.dim) + self.shape}"
            )
        return t

    def zeros_vector(self) -> np.ndarray:
        return np.zeros((self.dim,) + self.shape)

    def identity(self, f: np.ndarray) -> np.ndarray:
        """Tensor field ``f * I``."""
        out = np.zeros((self.dim, self.dim) + self.shape)
        for i in range(self.dim):
            out[i, i] = f
        return out

    # -- differential operators --------------------------------------------
    def gradient(self, f) -> np.ndarray:
        fh = self.fft(_finite(self.scalar(f)))
        return np.stack([self.ifft(1j * k * fh) for k in self._k_odd])

    def divergence(self, v) -> np.ndarray:
        v = _finite(self.vector(v))
        acc = sum(1j * k * self.fft(vi) for k, vi in zip(self._k_odd, v))
        return self.ifft(acc)

    def laplacian(self, f) -> np.ndarray:
        return self.ifft(-self._k2 * self.fft(_finite(self.scalar(f))))

    def grad_div(self, v) -> np.ndarray:
        v = _finite(self.vector(v))
        dh = sum(1j * k * self.fft(vi) for k, vi in zip(self._k_odd, v))
        return np.stack([self.ifft(1j * k * dh) for k in self._k_odd])

    def grad_laplacian(self, f) -> np.ndarray:
        lh = -self._k2 * self.fft(_finite(self.scalar(f)))
        return np.stack([self.ifft(1j * k * lh) for k in self._k_odd])

    def jacobian(self, v) -> np.ndarray:
        """Tensor ``J[i, j] = d v_i / d x_j``."""
        v = _finite(self.vector(v))
        out = np.empty((self.dim, self.dim) + self.shape)
        for i in range(self.dim):
            vh = self.fft(v[i])
            for j, k in enumerate(self._k_odd):
                out[i, j] = self.ifft(1j * k * vh)
        return out

    def tensor_divergence(self, t) -> np.ndarray:
        """Row divergence ``(div T)_i = sum_j d T_ij / d x_j``."""
        t = _finite(self.tensor(t))
        out = np.empty((self.dim,) + self.shape)
        for i in range(self.dim):
            acc = sum(1j * k * self.fft(t[i, j]) for j, k in enumerate(self._k_odd))
            out[i] = self.ifft(acc)
        return out

    def dealias_filter(self, f: np.ndarray) -> np.ndarray:
        """Zero the top third of the spectrum of every component (no-op if dealias is off)."""
        if not self.dealias:
            return f
        lead = f.shape[: f.ndim - self.dim]
        if not lead:
            return self.ifft(self._mask * self.fft(f))
        flat = f.reshape((-1,) + self.shape)
        out = np.stack([self.ifft(self._mask * self.fft(c)) for c in flat])
        return out.reshape(f.shape)

    # -- elliptic inverses --------------------------------------------------
    def helmholtz_inverse(self, f, alpha: float) -> np.ndarray:
        """Periodic solution ``c`` of ``c - (1/alpha) lap c = f``."""
        if not alpha > 0:
            raise ValueError(f"alpha must be positive, got {alpha}")
        return self.ifft(self.fft(_finite(self.scalar(f))) / (1.0 + self._k2 / alpha))

    def screened_poisson_mean_free(self, rho, beta: float) -> np.ndarray:
        """Solve ``-lap c + beta c = rho - mean(rho)``; the solution has zero mean."""
        if not beta >= 0:
            raise ValueError(f"beta must be nonnegative, got {beta}")
        rh = self.fft(_finite(self.scalar(rho)))
        denom = self._k2 + beta
        denom.flat[0] = 1.0
        ch = rh / denom
        ch.flat[0] = 0.0
        return self.ifft(ch)

    # -- quadrature ---------------------------------------------------------
    def integrate(self, f) -> float:
        return float(np.sum(f) * self.cell_volume)

    def mean(self, f) -> float:
        return float(np.mean(f))

    def inner(self, f, g) -> float:
        return float(np.sum(np.asarray(f) * np.asarray(g)) * self.cell_volume)

    def l2_norm(self, f) -> float:
        return float(np.sqrt(self.inner(f, f)))

    def h1_seminorm(self, f) -> float:
        return self.l2_norm(self.gradient(f))

    def h2_seminorm(self, f) -> float:
        """``||lap f||``, equal to the L2 norm of the full Hessian on the torus."""
        return self.l2_norm(self.laplacian(f))

    def linf_norm(self, f) -> float:
        return float(np.max(np.abs(f)))


def _finite(f: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(f)):
        raise NonFiniteError("field contains non-finite values")
    return f


def dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pointwise dot product of two vector fields."""
    return np.sum(a * b, axis=0)


def outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pointwise outer product ``(a x b)_ij = a_i b_j``."""
    return a[:, None] * b[None, :]


def contract(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pointwise double contraction ``A : B = sum_ij A_ij B_ij``."""
    return np.sum(a * b, axis=(0, 1))


def random_band_limited(grid: TorusGrid, rng: np.random.Generator, kmax: int = 6,
                        amplitude: float = 1.0, decay: float = 1.0) -> np.ndarray:
    """Smooth random zero-mean field with Fourier content in ``1 <= |j| <= kmax``.

    Coefficients decay like ``|j|^-decay`` so the field is comfortably resolved.
    """
    fh = np.zeros(grid.spectral_shape, dtype=complex)
    idx = [np.rint(k * grid.length / (2.0 * np.pi)) for k in grid.wavenumbers]
    jmax = np.maximum.reduce([np.abs(np.broadcast_to(j, grid.spectral_shape)) for j in idx])
    active = (jmax >= 1) & (jmax <= kmax)
    noise = rng.standard_normal(fh.shape) + 1j * rng.standard_normal(fh.shape)
    weight = np.where(active, 1.0 / np.maximum(jmax, 1.0) ** decay, 0.0)
    fh = noise * weight
    f = grid.ifft(fh)
    return amplitude * f / np.max(np.abs(f))


# -- snapshot I/O -------------------------------------------------------------
def save_snapshot(directory, grid: TorusGrid, fields: dict, name: str = "snapshot",
                  extra: dict | None = None) -> Path:
    """Write a JSON header plus one little-endian float64 raw file per scalar field.

    Vector fields are split into components named ``<field>_<i>``.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for key, value in fields.items():
        value = np.asarray(value, dtype=float)
        if value.shape == grid.shape:
            parts = {key: value}
        elif value.shape == (grid.dim,) + grid.shape:
            parts = {f"{key}_{i}": value[i] for i in range(grid.dim)}
        else:
            raise ValueError(f"field {key!r} has shape {value.shape}, incompatible with grid")
        for part, data in parts.items():
            np.ascontiguousarray(data, dtype="<f8").tofile(directory / f"{name}.{part}.bin")
            names.append(part)
    header = {"dim": grid.dim, "N": grid.n, "L": grid.length, "fields": names}
    if extra:
        header.update(extra)
    path = directory / f"{name}.json"
    path.write_text(json.dumps(header, indent=2, sort_keys=True))
    return path


def load_snapshot(header_path) -> tuple:
    """Read a snapshot written by :func:`save_snapshot`; returns ``(grid, fields, header)``."""
    header_path = Path(header_path)
    header = json.loads(header_path.read_text())
    grid = TorusGrid(dim=int(header["dim"]), n=int(header["N"]), length=float(header["L"]))
    stem = header_path.name[: -len(".json")]
    fields = {}
    for part in header["fields"]:
        raw = np.fromfile(header_path.parent / f"{stem}.{part}.bin", dtype="<f8")
        if raw.size != grid.n**grid.dim:
            raise ValueError(f"snapshot field {part!r} has {raw.size} values, expected {grid.n**grid.dim}")
        fields[part] = raw.reshape(grid.shape)
    return grid, fields, header
