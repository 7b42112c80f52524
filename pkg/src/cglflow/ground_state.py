"""The stationary solution W and the thresholds it sets.

W(x) = (1 + |x|^2 / (d(d-2)))^{-(d-2)/2} solves -Delta W = |W|^{4/(d-2)} W.
Its kinetic energy ||grad W||^2 and energy E(W) are obtained by radial
Gauss-Legendre quadrature on the compactified variable r = s / (1 - s).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .spectral import ComplexField, Grid

__all__ = [
    "GroundStateRefs",
    "QuadratureError",
    "eval_W",
    "eval_W_radial",
    "W_radial_derivative",
    "sphere_area",
    "critical_exponent",
    "compute_thresholds",
    "smoothstep_taper",
    "truncated_W",
    "radial_integral",
]


class QuadratureError(RuntimeError):
    """Raised when refining the radial quadrature changes the result too much."""


def critical_exponent(d: int) -> float:
    """2d/(d-2), the Sobolev exponent of the potential energy."""
    return 2.0 * d / (d - 2)


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def eval_W_radial(r, d: int):
    r = np.asarray(r, dtype=float)
    return (1.0 + r * r / (d * (d - 2))) ** (-(d - 2) / 2)


def W_radial_derivative(r, d: int):
    r = np.asarray(r, dtype=float)
    return -(r / d) * (1.0 + r * r / (d * (d - 2))) ** (-d / 2)


def eval_W(x, d: int) -> float:
    """W at a point x of R^d (x given as a length-d sequence)."""
    if d not in (3, 4):
        raise ValueError(f"dimension must be 3 or 4, got {d}")
    x = np.asarray(x, dtype=float)
    if x.shape != (d,):
        raise ValueError(f"expected a point of R^{d}, got shape {x.shape}")
    return float(eval_W_radial(math.sqrt(float(x @ x)), d))


def radial_integral(integrand, d: int, nodes: int, r_max: float | None = None) -> float:
    """|S^{d-1}| * int_0^{r_max} integrand(r) r^{d-1} dr by Gauss-Legendre.

    With ``r_max=None`` the half line is mapped to [0, 1) through r = s/(1-s).
    """
    x, w = leggauss(nodes)
    if r_max is None:
        s = 0.5 * (x + 1.0)
        r = s / (1.0 - s)
        jac = 0.5 / (1.0 - s) ** 2
    else:
        r = 0.5 * r_max * (x + 1.0)
        jac = 0.5 * r_max
    return sphere_area(d) * float(np.sum(w * jac * integrand(r) * r ** (d - 1)))


@dataclass(frozen=True)
class GroundStateRefs:
    d: int
    grad_norm_sq_W: float
    energy_W: float
    quadrature_resolution: dict = field(default_factory=dict, compare=False)

    @property
    def grad_norm_W(self) -> float:
        return math.sqrt(self.grad_norm_sq_W)


def compute_thresholds(d: int, nodes: int = 400, rtol: float = 1e-8) -> GroundStateRefs:
    """||grad W||^2 and E(W) by radial quadrature, checked under refinement.

    The quadrature is run with ``nodes`` and ``2*nodes`` points; if the two
    disagree by more than ``rtol`` (relative) a QuadratureError is raised.
    """
    if d not in (3, 4):
        raise ValueError(f"dimension must be 3 or 4, got {d}")
    p = critical_exponent(d)

    def kinetic(m):
        return radial_integral(lambda r: W_radial_derivative(r, d) ** 2, d, m)

    def potential(m):
        return radial_integral(lambda r: eval_W_radial(r, d) ** p, d, m)

    kin, kin_fine = kinetic(nodes), kinetic(2 * nodes)
    pot, pot_fine = potential(nodes), potential(2 * nodes)
    change = max(abs(kin_fine - kin) / abs(kin_fine), abs(pot_fine - pot) / abs(pot_fine))
    if not change <= rtol:
        raise QuadratureError(
            f"radial quadrature not converged: refinement {nodes}->{2 * nodes} "
            f"changed the result by {change:.3e} (tolerance {rtol:.1e})"
        )
    energy = 0.5 * kin_fine - pot_fine / p
    return GroundStateRefs(
        d=d,
        grad_norm_sq_W=kin_fine,
        energy_W=energy,
        quadrature_resolution={
            "rule": "gauss-legendre on r = s/(1-s)",
            "nodes": 2 * nodes,
            "refinement_change": change,
            "potential": pot_fine,
        },
    )


def smoothstep_taper(r, cutoff: float, width: float):
    """1 for r <= cutoff, 0 for r >= cutoff + width, C^1 smoothstep in between."""
    s = np.clip((np.asarray(r, dtype=float) - cutoff) / width, 0.0, 1.0)
    return 1.0 - s * s * (3.0 - 2.0 * s)


def truncated_W(
    grid: Grid,
    cutoff_radius: float,
    taper_width: float,
    center=None,
    scale: float = 1.0,
) -> ComplexField:
    """Sampled W_{x0,lam}(x) = lam^{-(d-2)/2} W((x - x0)/lam), tapered to zero.

    The taper acts on |x - x0| (periodically wrapped), so the support never
    reaches the box edge as long as cutoff + width < L.
    """
    d = grid.d
    if taper_width <= 0:
        raise ValueError("taper width must be positive")
    if cutoff_radius + taper_width >= grid.half_length:
        raise ValueError(
            f"cutoff + taper width ({cutoff_radius + taper_width}) must stay below "
            f"the half box length {grid.half_length}"
        )
    if scale <= 0:
        raise ValueError("scale must be positive")
    center = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    box = 2.0 * grid.half_length
    r2 = 0.0
    for x, c in zip(grid.coords(), center):
        dx = (x - c + grid.half_length) % box - grid.half_length
        r2 = r2 + dx * dx
    r = np.sqrt(r2)
    values = scale ** (-(d - 2) / 2) * eval_W_radial(r / scale, d) * smoothstep_taper(
        r, cutoff_radius, taper_width
    )
    return ComplexField(grid, np.broadcast_to(values, grid.shape).astype(complex))
