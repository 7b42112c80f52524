"""Functionals and identities evaluated along trajectories.

All integrals use the grid quadrature of :mod:`cglflow.spectral`:
kinetic terms are summed in Fourier space, everything else pointwise.
"""

from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.fft as sfft

from .ground_state import GroundStateRefs, critical_exponent, truncated_W
from .spectral import ComplexField, Grid, Space, ZParameter, dft, laplacian

__all__ = [
    "DiagnosticsRecord",
    "TrappingReport",
    "VirialSeries",
    "BubbleFit",
    "PreconditionError",
    "record",
    "record_from_arrays",
    "s_exponent",
    "time_derivative_sq",
    "dissipation_residual",
    "mass_identity_residual",
    "virial_series",
    "bubble_fit",
    "trapping_report",
]


class PreconditionError(ValueError):
    """A run does not satisfy the hypotheses of the check applied to it."""


def s_exponent(d: int) -> float:
    """2(d+2)/(d-2), the space-time exponent of the scattering norm."""
    return 2.0 * (d + 2) / (d - 2)


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    mass: float
    kinetic: float
    potential: float
    energy: float
    k_functional: float
    s_accumulator: float
    sup_abs: float
    boundary_mass_fraction: float
    s_integrand: float = 0.0
    bubble_lambda: float | None = None
    bubble_center: tuple | None = None
    bubble_correlation: float | None = None

    @property
    def h1_seminorm(self) -> float:
        return math.sqrt(max(self.kinetic, 0.0))


@lru_cache(maxsize=8)
def _shell_mask(grid: Grid, shell: float = 0.1) -> np.ndarray:
    inner = np.abs(grid.axis) <= (1.0 - shell) * grid.half_length
    mask = np.ones(grid.shape, dtype=bool)
    for j in range(grid.d):
        shape = [1] * grid.d
        shape[j] = grid.n_per_axis
        mask &= inner.reshape(shape)
    return ~mask


def record_from_arrays(
    grid: Grid,
    phys: np.ndarray,
    spec: np.ndarray,
    t: float,
    prev: DiagnosticsRecord | None = None,
) -> DiagnosticsRecord:
    """Build a record from matching physical and (unitary) spectral samples."""
    dv = grid.cell_volume
    d = grid.d
    dens = phys.real**2 + phys.imag**2
    mass = float(dens.sum() * dv)
    kinetic = float(np.sum(grid.k_sq * (spec.real**2 + spec.imag**2)) * dv)
    potential = float(np.sum(dens ** (critical_exponent(d) / 2)) * dv)
    s_int = float(np.sum(dens ** (s_exponent(d) / 2)) * dv)
    p = critical_exponent(d)
    if prev is None:
        s_acc = 0.0
    else:
        s_acc = prev.s_accumulator + 0.5 * (t - prev.t) * (prev.s_integrand + s_int)
    total = dens.sum()
    bfrac = float(dens[_shell_mask(grid)].sum() / total) if total > 0 else 0.0
    return DiagnosticsRecord(
        t=float(t),
        mass=mass,
        kinetic=kinetic,
        potential=potential,
        energy=0.5 * kinetic - potential / p,
        k_functional=kinetic - potential,
        s_accumulator=s_acc,
        sup_abs=float(np.sqrt(dens.max())),
        boundary_mass_fraction=bfrac,
        s_integrand=s_int,
    )


def record(
    u: ComplexField,
    t: float,
    prev: DiagnosticsRecord | None = None,
    fit_bubble: bool = False,
) -> DiagnosticsRecord:
    if u.space is not Space.PHYSICAL:
        raise ValueError("record expects a physical-space field")
    rec = record_from_arrays(u.grid, u.values, dft(u).values, t, prev)
    if fit_bubble:
        fit = bubble_fit(u)
        if fit is not None:
            rec = _with_bubble(rec, fit)
    return rec


def _with_bubble(rec: DiagnosticsRecord, fit: "BubbleFit") -> DiagnosticsRecord:
    return replace(
        rec,
        bubble_lambda=fit.scale,
        bubble_center=tuple(fit.center),
        bubble_correlation=fit.correlation,
    )


def time_derivative_sq(u: ComplexField, z: ZParameter, nonlinearity: float = 1.0) -> float:
    """||u_t||^2 with u_t = z (Delta u + |u|^q u), evaluated from the equation."""
    grid = u.grid
    q = 4.0 / (grid.d - 2)
    phys = u.physical().values
    rhs = laplacian(u.physical()).values + nonlinearity * np.abs(phys) ** q * phys
    return float(np.sum(np.abs(rhs) ** 2) * grid.cell_volume)


def _times(records) -> np.ndarray:
    return np.array([r.t for r in records], dtype=float)


def _trapezoid_cumulative(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y, dtype=float)
    out[1:] = np.cumsum(0.5 * np.diff(t) * (y[1:] + y[:-1]))
    return out


def dissipation_residual(records, ut_sq, z: ZParameter) -> np.ndarray:
    """(E(t0) - E(t) - Re z int_{t0}^t ||u_tau||^2) / |E(t0)| for every record."""
    ut_sq = np.asarray(ut_sq, dtype=float)
    if len(records) != ut_sq.size:
        raise ValueError(
            f"got {len(records)} records but {ut_sq.size} time-derivative samples"
        )
    t = _times(records)
    energy = np.array([r.energy for r in records])
    dissipated = z.re * _trapezoid_cumulative(ut_sq, t)
    scale = abs(energy[0]) if energy[0] != 0 else 1.0
    return (energy[0] - energy - dissipated) / scale


def mass_identity_residual(records, z: ZParameter) -> tuple[np.ndarray, np.ndarray]:
    """d/dt mass (three-point centered difference) + 2 Re z K at interior records.

    Returns (times, residual) for records[1:-1].
    """
    if len(records) < 3:
        raise ValueError("mass identity needs at least 3 records")
    t = _times(records)
    m = np.array([r.mass for r in records])
    k = np.array([r.k_functional for r in records])
    h0 = t[1:-1] - t[:-2]
    h1 = t[2:] - t[1:-1]
    # second-order derivative on a possibly non-uniform stencil
    dm = (
        -h1 / (h0 * (h0 + h1)) * m[:-2]
        + (h1 - h0) / (h0 * h1) * m[1:-1]
        + h0 / (h1 * (h0 + h1)) * m[2:]
    )
    return t[1:-1], dm + 2.0 * z.re * k[1:-1]


@dataclass(frozen=True)
class VirialSeries:
    t: np.ndarray
    I: np.ndarray
    dI: np.ndarray
    d2I: np.ndarray
    concavity_ratio: np.ndarray
    concavity_bound: float


def virial_series(records, z: ZParameter, d: int = 3) -> VirialSeries:
    """I(t) = 1/2 int_0^t mass, I' = mass/2, I'' = -Re z K.

    ``concavity_ratio`` is I I'' / (I' - I'(0))^2 (NaN where the denominator
    vanishes); the blow-up argument needs it to exceed d/(d-2) eventually.
    """
    t = _times(records)
    mass = np.array([r.mass for r in records])
    k = np.array([r.k_functional for r in records])
    d_I = 0.5 * mass
    I = _trapezoid_cumulative(d_I, t)
    d2I = -z.re * k
    denom = (d_I - d_I[0]) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(denom > 0, I * d2I / np.where(denom > 0, denom, 1.0), np.nan)
    return VirialSeries(t, I, d_I, d2I, ratio, d / (d - 2))


@dataclass(frozen=True)
class BubbleFit:
    scale: float
    center: np.ndarray
    correlation: float


def _bubble_template_hat(grid: Grid, lam: float) -> np.ndarray:
    L = grid.half_length
    tmpl = truncated_W(grid, 0.45 * L, 0.45 * L, scale=lam)
    return sfft.fftn(tmpl.values, norm="ortho")


def _shift_correlation(grid: Grid, weighted_u: np.ndarray, lam: float):
    """Normalized H^1 correlation of u with W_lam translated to every grid point."""
    t_hat = _bubble_template_hat(grid, lam)
    norm_t = math.sqrt(float(np.sum(grid.k_sq * np.abs(t_hat) ** 2)))
    # sum_k |k|^2 u_hat conj(T_hat) e^{i k x0} on the grid of shifts x0
    corr = sfft.ifftn(weighted_u * np.conj(t_hat), norm="forward")
    return np.abs(corr) / norm_t


def bubble_fit(
    u: ComplexField,
    n_scales: int = 24,
    scale_range: tuple[float, float] | None = None,
    refine_iters: int = 24,
) -> BubbleFit | None:
    """Best-fitting rescaled, translated W in the homogeneous H^1 inner product.

    Scales are searched on a log lattice over [h, L/4] and refined by
    golden-section search; centres come from an FFT cross-correlation over all
    grid translates plus a per-axis parabolic refinement.
    """
    grid = u.grid
    u_hat = u.spectral().values
    norm_u = math.sqrt(float(np.sum(grid.k_sq * np.abs(u_hat) ** 2)))
    if norm_u <= 1e-12 * max(1.0, float(np.abs(u_hat).max())):
        return None
    weighted = grid.k_sq * u_hat / norm_u
    lo, hi = scale_range or (grid.spacing, grid.half_length / 4)
    log_lams = np.linspace(math.log(lo), math.log(hi), n_scales)

    cache: dict[float, tuple[float, np.ndarray]] = {}

    def score(log_lam):
        if log_lam not in cache:
            c = _shift_correlation(grid, weighted, math.exp(log_lam))
            cache[log_lam] = (float(c.max()), c)
        return cache[log_lam][0]

    scores = [score(v) for v in log_lams]
    i = int(np.argmax(scores))
    a = log_lams[max(i - 1, 0)]
    b = log_lams[min(i + 1, n_scales - 1)]
    best = log_lams[i]
    invphi = (math.sqrt(5) - 1) / 2
    c1, c2 = b - invphi * (b - a), a + invphi * (b - a)
    for _ in range(refine_iters):
        if score(c1) >= score(c2):
            b, c2 = c2, c1
            c1 = b - invphi * (b - a)
        else:
            a, c1 = c1, c2
            c2 = a + invphi * (b - a)
    for cand in (c1, c2):
        if score(cand) > score(best):
            best = cand
    corr_max, corr = cache[best]
    idx = np.unravel_index(int(np.argmax(corr)), corr.shape)
    center = np.empty(grid.d)
    n = grid.n_per_axis
    for ax in range(grid.d):
        left = list(idx)
        right = list(idx)
        left[ax] = (idx[ax] - 1) % n
        right[ax] = (idx[ax] + 1) % n
        fm, f0, fp = corr[tuple(left)], corr[idx], corr[tuple(right)]
        denom = fm - 2 * f0 + fp
        offset = 0.5 * (fm - fp) / denom if denom < 0 else 0.0
        shift = idx[ax] if idx[ax] < n // 2 else idx[ax] - n
        center[ax] = (shift + float(np.clip(offset, -0.5, 0.5))) * grid.spacing
    return BubbleFit(scale=math.exp(best), center=center, correlation=min(corr_max, 1.0))


@dataclass(frozen=True)
class TrappingReport:
    side: str
    min_margin_kinetic: float
    min_margin_K: float
    energy_nonneg: bool
    measured_delta_bar: float
    measured_delta3: float | None = None
    violations: list = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return not self.violations


def trapping_report(records, refs: GroundStateRefs) -> TrappingReport:
    """Check energy trapping (sub-threshold side) or K < 0 (super-threshold side).

    The side is read off the first record, which must have E < E(W) and a
    kinetic energy strictly on one side of ||grad W||^2.
    """
    if not records:
        raise PreconditionError("no records")
    first = records[0]
    if not first.energy < refs.energy_W:
        raise PreconditionError(
            f"E(u0) = {first.energy:.6g} is not below E(W) = {refs.energy_W:.6g}"
        )
    kin_w = refs.grad_norm_sq_W
    if first.kinetic < kin_w:
        side = "subcritical"
    elif first.kinetic > kin_w:
        side = "supercritical"
    else:
        raise PreconditionError("||grad u0||^2 equals ||grad W||^2")

    kin = np.array([r.kinetic for r in records])
    k = np.array([r.k_functional for r in records])
    e = np.array([r.energy for r in records])
    t = _times(records)
    margin_kin = 1.0 - kin / kin_w
    with np.errstate(divide="ignore", invalid="ignore"):
        margin_k = np.where(kin > 0, k / np.where(kin > 0, kin, 1.0), np.nan)
    min_kin = float(np.min(margin_kin))
    min_k = float(np.nanmin(margin_k)) if np.any(kin > 0) else float("nan")
    violations = []
    delta3 = None
    if side == "subcritical":
        for j in np.flatnonzero(kin >= kin_w):
            violations.append(f"t={t[j]:.6g}: kinetic {kin[j]:.6g} >= ||grad W||^2")
        for j in np.flatnonzero((k <= 0) & (kin > 0)):
            violations.append(f"t={t[j]:.6g}: K = {k[j]:.6g} <= 0")
        for j in np.flatnonzero(e < 0):
            violations.append(f"t={t[j]:.6g}: E = {e[j]:.6g} < 0")
    else:
        for j in np.flatnonzero(kin <= kin_w):
            violations.append(f"t={t[j]:.6g}: kinetic {kin[j]:.6g} <= ||grad W||^2")
        for j in np.flatnonzero(k >= 0):
            violations.append(f"t={t[j]:.6g}: K = {k[j]:.6g} >= 0")
        delta3 = float(np.min(-k))
    return TrappingReport(
        side=side,
        min_margin_kinetic=min_kin,
        min_margin_K=min_k,
        energy_nonneg=bool(np.all(e >= 0)),
        measured_delta_bar=min(min_kin, min_k),
        measured_delta3=delta3,
        violations=violations,
    )
