"""Periodic grids, complex fields, unitary FFTs and the linear semigroup.

The box [-L, L)^d stands in for R^d. Transforms use the unitary ("ortho")
normalization so that every integral is a plain sum times the cell volume
h^d, in physical and in spectral space alike.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

__all__ = [
    "Grid",
    "Space",
    "ComplexField",
    "ZParameter",
    "dft",
    "idft",
    "apply_semigroup",
    "semigroup_multiplier",
    "laplacian",
    "grad_norm_sq",
    "lebesgue_norm",
    "lebesgue_integral",
    "boundary_mass_fraction",
]


class Space(enum.Enum):
    PHYSICAL = "physical"
    SPECTRAL = "spectral"


@dataclass(frozen=True)
class Grid:
    """Uniform grid on the periodic box [-L, L)^d.

    Points sit at x_j = -L + j*h, so the origin is the sample j = n/2 on every
    axis. Wavenumbers follow the FFT ordering k = pi*m/L with
    m = 0, 1, ..., n/2 - 1, -n/2, ..., -1; the Nyquist mode carries k = -pi*n/(2L).
    """

    d: int
    n_per_axis: int
    half_length: float

    def __post_init__(self):
        if self.d not in (3, 4):
            raise ValueError(f"dimension must be 3 or 4, got {self.d}")
        if self.n_per_axis < 8 or self.n_per_axis % 2:
            raise ValueError(f"n_per_axis must be even and >= 8, got {self.n_per_axis}")
        if not self.half_length > 0:
            raise ValueError(f"half_length must be positive, got {self.half_length}")
        object.__setattr__(self, "half_length", float(self.half_length))

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_length / self.n_per_axis

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_per_axis,) * self.d

    @property
    def size(self) -> int:
        return self.n_per_axis**self.d

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.d

    @property
    def volume(self) -> float:
        return (2.0 * self.half_length) ** self.d

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.half_length + self.spacing * np.arange(self.n_per_axis)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        m = np.fft.fftfreq(self.n_per_axis, d=1.0 / self.n_per_axis)
        return math.pi * m / self.half_length

    def coords(self) -> list[np.ndarray]:
        """Broadcastable coordinate arrays, one per axis."""
        return _open_mesh(self.axis, self.d)

    def wave_coords(self) -> list[np.ndarray]:
        return _open_mesh(self.wavenumbers, self.d)

    @cached_property
    def radius_sq(self) -> np.ndarray:
        out = np.zeros(self.shape)
        for x in self.coords():
            out = out + x * x
        return out

    @cached_property
    def k_sq(self) -> np.ndarray:
        out = np.zeros(self.shape)
        for k in self.wave_coords():
            out = out + k * k
        return out

    def zeros(self) -> "ComplexField":
        return ComplexField(self, np.zeros(self.shape, dtype=complex))

    def sample(self, func) -> "ComplexField":
        """Evaluate ``func(*coords)`` on the grid and wrap it as a physical field."""
        values = np.broadcast_to(np.asarray(func(*self.coords()), dtype=complex), self.shape)
        return ComplexField(self, np.array(values))

    def scaled(self, lam: float) -> "Grid":
        return Grid(self.d, self.n_per_axis, self.half_length * lam)


def _open_mesh(axis: np.ndarray, d: int) -> list[np.ndarray]:
    out = []
    for j in range(d):
        shape = [1] * d
        shape[j] = axis.size
        out.append(axis.reshape(shape))
    return out


@dataclass(frozen=True)
class ComplexField:
    """Complex samples on a grid, tagged with the space they live in."""

    grid: Grid
    values: np.ndarray
    space: Space = Space.PHYSICAL

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.size != self.grid.size:
            raise ValueError(
                f"field has {values.size} samples, grid expects {self.grid.size}"
            )
        object.__setattr__(self, "values", values.reshape(self.grid.shape))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def physical(self) -> "ComplexField":
        return self if self.space is Space.PHYSICAL else idft(self)

    def spectral(self) -> "ComplexField":
        return self if self.space is Space.SPECTRAL else dft(self)

    def with_values(self, values: np.ndarray) -> "ComplexField":
        return ComplexField(self.grid, values, self.space)

    def __mul__(self, c):
        return self.with_values(self.values * c)

    __rmul__ = __mul__

    def __add__(self, other: "ComplexField") -> "ComplexField":
        _check_compatible(self, other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "ComplexField") -> "ComplexField":
        _check_compatible(self, other)
        return self.with_values(self.values - other.values)


def _check_compatible(a: ComplexField, b: ComplexField):
    if a.grid != b.grid or a.space is not b.space:
        raise ValueError("fields live on different grids or in different spaces")


@dataclass(frozen=True)
class ZParameter:
    """z = exp(i*theta) with theta in (0, pi/2].

    Stored as the angle so |z| = 1 holds by construction. At theta = pi/2 the
    real part is exactly zero (the NLS limit), not cos(pi/2) ~ 6e-17.
    """

    theta: float
    _re: float = field(init=False, repr=False, compare=False)
    _im: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        theta = float(self.theta)
        if not (0.0 < theta <= math.pi / 2):
            raise ValueError(f"theta must lie in (0, pi/2], got {theta}")
        object.__setattr__(self, "theta", theta)
        if theta == math.pi / 2:
            re, im = 0.0, 1.0
        else:
            re, im = math.cos(theta), math.sin(theta)
        object.__setattr__(self, "_re", re)
        object.__setattr__(self, "_im", im)

    @classmethod
    def nls(cls) -> "ZParameter":
        return cls(math.pi / 2)

    @property
    def re(self) -> float:
        return self._re

    @property
    def im(self) -> float:
        return self._im

    @property
    def value(self) -> complex:
        return complex(self._re, self._im)

    @property
    def is_nls(self) -> bool:
        return self._re == 0.0


def dft(f: ComplexField, workers: int | None = None) -> ComplexField:
    if f.space is not Space.PHYSICAL:
        raise ValueError("dft expects a physical-space field")
    return ComplexField(f.grid, sfft.fftn(f.values, norm="ortho", workers=workers), Space.SPECTRAL)


def idft(f: ComplexField, workers: int | None = None) -> ComplexField:
    if f.space is not Space.SPECTRAL:
        raise ValueError("idft expects a spectral-space field")
    return ComplexField(f.grid, sfft.ifftn(f.values, norm="ortho", workers=workers), Space.PHYSICAL)


def semigroup_multiplier(grid: Grid, z: ZParameter, t: float) -> np.ndarray:
    """Fourier symbol exp(-t z |k|^2) of the linear flow."""
    if t < 0:
        raise ValueError(f"semigroup time must be non-negative, got {t}")
    ksq = grid.k_sq
    phase = np.exp(-1j * (t * z.im) * ksq)
    if z.re == 0.0:
        return phase
    return np.exp(-(t * z.re) * ksq) * phase


def apply_semigroup(f: ComplexField, z: ZParameter, t: float) -> ComplexField:
    """Exact linear evolution e^{t z Delta} f; the result keeps f's space."""
    mult = semigroup_multiplier(f.grid, z, t)
    if t == 0:
        return f
    spec = f.spectral()
    out = spec.with_values(spec.values * mult)
    return out if f.space is Space.SPECTRAL else idft(out)


def laplacian(f: ComplexField) -> ComplexField:
    spec = f.spectral()
    out = spec.with_values(-f.grid.k_sq * spec.values)
    return out if f.space is Space.SPECTRAL else idft(out)


def grad_norm_sq(f: ComplexField) -> float:
    """||grad f||^2 in L^2 over the box."""
    spec = f.spectral().values
    return float(np.sum(f.grid.k_sq * (spec.real**2 + spec.imag**2)) * f.grid.cell_volume)


def lebesgue_integral(f: ComplexField, p: float) -> float:
    """sum |f|^p h^d, i.e. ||f||_p^p."""
    amp = np.abs(f.physical().values)
    return float(np.sum(amp**p) * f.grid.cell_volume)


def lebesgue_norm(f: ComplexField, p: float) -> float:
    if p < 1:
        raise ValueError(f"exponent must be >= 1, got {p}")
    return lebesgue_integral(f, p) ** (1.0 / p)


def boundary_mass_fraction(f: ComplexField, shell: float = 0.1) -> float:
    """Share of ||f||^2 carried by points with max_i |x_i| > (1 - shell) L."""
    grid = f.grid
    dens = np.abs(f.physical().values) ** 2
    total = dens.sum()
    if total == 0:
        return 0.0
    inner = np.abs(grid.axis) <= (1.0 - shell) * grid.half_length
    mask = np.ones(grid.shape, dtype=bool)
    for j in range(grid.d):
        shape = [1] * grid.d
        shape[j] = grid.n_per_axis
        mask &= inner.reshape(shape)
    return float(dens[~mask].sum() / total)
