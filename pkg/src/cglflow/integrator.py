"""Strang-split time stepping for u_t = z (Delta u + mu |u|^q u), q = 4/(d-2).

Both substeps are exact: the linear flow is a Fourier multiplier and the
pointwise ODE u' = z mu |u|^q u has a closed-form solution. The only
discretization error is the splitting commutator.
"""

from __future__ import annotations

import enum
import logging
import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable

import numpy as np
import scipy.fft as sfft

from .diagnostics import DiagnosticsRecord, record_from_arrays
from .ground_state import GroundStateRefs, compute_thresholds, critical_exponent
from .spectral import ComplexField, Grid, ZParameter, semigroup_multiplier

__all__ = [
    "Status",
    "StepperConfig",
    "RunState",
    "BlowUpInSubstep",
    "InsufficientDataError",
    "BlowupEstimate",
    "SplitStepper",
    "nonlinear_substep",
    "strang_step",
    "integrate",
    "continue_run",
    "detect_blowup_time",
    "save_checkpoint",
    "load_checkpoint",
]

log = logging.getLogger(__name__)


class Status(enum.Enum):
    RUNNING = 0
    DECAYED = 1
    BLOWN_UP = 2
    MAX_TIME = 3
    STEP_FAILURE = 4

    @property
    def label(self) -> str:
        return {
            Status.RUNNING: "Running",
            Status.DECAYED: "Decayed",
            Status.BLOWN_UP: "BlownUp",
            Status.MAX_TIME: "MaxTimeReached",
            Status.STEP_FAILURE: "StepFailure",
        }[self]


class BlowUpInSubstep(ArithmeticError):
    """The pointwise ODE would blow up before the end of the substep."""

    def __init__(self, t_star: float):
        super().__init__(f"pointwise blow-up after {t_star:.6g} < substep length")
        self.t_star = t_star


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class StepperConfig:
    dt: float = 1e-3
    dt_min: float = 1e-9
    blowup_sup_threshold: float = 1e6
    blowup_kinetic_factor: float = 25.0
    decay_h1_threshold: float = 1e-6
    max_time: float = 20.0
    adaptive: bool = True
    energy_rtol: float = 1e-8
    nonlinearity: float = 1.0
    # adaptive runs keep q |mu| max|u|^q dt below this
    nonlinear_cfl: float = 0.2

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise ValueError("; ".join(problems))

    def violations(self) -> list[str]:
        out = []
        if not self.dt_min > 0:
            out.append(f"dt_min must be positive (got {self.dt_min})")
        if not self.dt > self.dt_min:
            out.append(f"dt must exceed dt_min (dt={self.dt}, dt_min={self.dt_min})")
        for name in ("blowup_sup_threshold", "blowup_kinetic_factor", "decay_h1_threshold",
                     "max_time", "energy_rtol", "nonlinear_cfl"):
            if not getattr(self, name) > 0:
                out.append(f"{name} must be positive (got {getattr(self, name)})")
        return out


@dataclass(frozen=True)
class RunState:
    t: float
    u: ComplexField
    step_index: int = 0
    status: Status = Status.RUNNING
    t_event: float | None = None
    dt: float | None = None
    message: str = ""

    @property
    def running(self) -> bool:
        return self.status is Status.RUNNING


def _nonlinear_values(values: np.ndarray, q: float, z: ZParameter, mu: float, dt: float):
    """Exact flow of u' = z mu |u|^q u over dt, sample by sample."""
    if mu == 0.0 or dt == 0.0:
        return values
    rq = np.abs(values) ** q
    rate = q * mu * z.re
    if rate > 0:
        peak = float(rq.max())
        if peak > 0 and rate * peak * dt >= 1.0:
            raise BlowUpInSubstep(1.0 / (rate * peak))
    if rate == 0.0:
        return values * np.exp(1j * (mu * z.im * dt) * rq)
    s = rate * dt * rq
    # -log(1 - s)/s -> 1 as s -> 0 carries the phase smoothly into the NLS limit
    g = np.ones_like(s)
    np.divide(-np.log1p(-s), s, out=g, where=s != 0)
    return values * (1.0 - s) ** (-1.0 / q) * np.exp(1j * (mu * z.im * dt) * rq * g)


def nonlinear_substep(u: ComplexField, z: ZParameter, dt: float, nonlinearity: float = 1.0) -> ComplexField:
    q = 4.0 / (u.grid.d - 2)
    return u.with_values(_nonlinear_values(u.physical().values, q, z, nonlinearity, dt))


class SplitStepper:
    """Array-level Strang step semigroup(dt/2) o nonlinear(dt) o semigroup(dt/2).

    Half-step multipliers are cached per step length; one instance belongs to
    one run and is not shared across threads.
    """

    def __init__(self, grid: Grid, z: ZParameter, nonlinearity: float = 1.0):
        self.grid = grid
        self.z = z
        self.mu = nonlinearity
        self.q = 4.0 / (grid.d - 2)
        self._mult: dict[float, np.ndarray] = {}

    def half_multiplier(self, dt: float) -> np.ndarray:
        m = self._mult.get(dt)
        if m is None:
            if len(self._mult) > 32:
                self._mult.clear()
            m = self._mult[dt] = semigroup_multiplier(self.grid, self.z, 0.5 * dt)
        return m

    def step(self, values: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
        """Return (physical, spectral) samples after one step of length dt."""
        half = self.half_multiplier(dt)
        v = sfft.ifftn(sfft.fftn(values, norm="ortho") * half, norm="ortho")
        v = _nonlinear_values(v, self.q, self.z, self.mu, dt)
        v_hat = sfft.fftn(v, norm="ortho") * half
        return sfft.ifftn(v_hat, norm="ortho"), v_hat


def strang_step(
    state: RunState,
    z: ZParameter,
    dt: float,
    dt_min: float | None = None,
    nonlinearity: float = 1.0,
) -> RunState:
    """One Strang step. On pointwise blow-up the step is retried at dt/2 until
    dt_min; below that the state is marked BlownUp at the current time."""
    if not state.running:
        raise ValueError(f"cannot step a run with status {state.status.label}")
    stepper = SplitStepper(state.u.grid, z, nonlinearity)
    floor = dt if dt_min is None else dt_min
    h = dt
    while True:
        try:
            phys, _ = stepper.step(state.u.physical().values, h)
        except BlowUpInSubstep as exc:
            if h / 2 < floor:
                if dt_min is None:
                    raise
                return replace(state, status=Status.BLOWN_UP, t_event=state.t, dt=h,
                               message=str(exc))
            h /= 2
            continue
        return RunState(
            t=state.t + h,
            u=ComplexField(state.u.grid, phys),
            step_index=state.step_index + 1,
            dt=h,
        )


Observer = Callable[[RunState, DiagnosticsRecord], None]


def integrate(
    u0: ComplexField,
    z: ZParameter,
    cfg: StepperConfig,
    observers: Iterable[Observer] = (),
    record_interval: float | None = None,
    refs: GroundStateRefs | None = None,
) -> tuple[RunState, list[DiagnosticsRecord]]:
    """Run from u0 until decay, blow-up, step failure or cfg.max_time.

    ``record_interval=None`` records after every accepted step; otherwise
    steps are shortened to land exactly on multiples of the interval.
    """
    state = RunState(t=0.0, u=u0.physical(), dt=cfg.dt)
    return continue_run(state, z, cfg, observers, record_interval, refs)


def continue_run(
    state: RunState,
    z: ZParameter,
    cfg: StepperConfig,
    observers: Iterable[Observer] = (),
    record_interval: float | None = None,
    refs: GroundStateRefs | None = None,
    first_record: DiagnosticsRecord | None = None,
) -> tuple[RunState, list[DiagnosticsRecord]]:
    observers = list(observers)
    grid = state.u.grid
    refs = refs or compute_thresholds(grid.d)
    kinetic_limit = cfg.blowup_kinetic_factor * refs.grad_norm_sq_W
    stepper = SplitStepper(grid, z, cfg.nonlinearity)
    p = critical_exponent(grid.d)
    dv = grid.cell_volume

    values = state.u.physical().values
    spec = sfft.fftn(values, norm="ortho")
    rec = record_from_arrays(grid, values, spec, state.t, first_record)
    records = [rec]
    for obs in observers:
        obs(state, rec)
    if not state.running:
        return state, records
    if not np.all(np.isfinite(values)):
        state = replace(state, status=Status.STEP_FAILURE, t_event=state.t,
                        message=f"non-finite initial data at step {state.step_index}")
        return state, records

    t = state.t
    step = state.step_index
    base = cfg.dt
    dt = min(state.dt or base, base)
    energy = rec.energy
    scale = rec.kinetic + rec.potential
    q = 4.0 / (grid.d - 2)
    peak_rate = q * abs(cfg.nonlinearity) * rec.sup_abs**q
    clean = 0
    check_energy = cfg.adaptive and not z.is_nls and cfg.nonlinearity >= 0
    next_record = _next_multiple(t, record_interval) if record_interval else None
    status, t_event, message = Status.RUNNING, None, ""

    while status is Status.RUNNING:
        stop = cfg.max_time if next_record is None else min(next_record, cfg.max_time)
        h = dt
        if cfg.adaptive and peak_rate > 0:
            h = min(h, max(cfg.nonlinear_cfl / peak_rate, cfg.dt_min))
        landing = False
        if t + h >= stop - 1e-9 * h:
            h = stop - t
            landing = True
        try:
            new_values, new_spec = stepper.step(values, h)
        except BlowUpInSubstep as exc:
            if not cfg.adaptive or h / 2 < cfg.dt_min:
                status, t_event, message = Status.BLOWN_UP, t, f"substep blow-up at dt={h:.3g}: {exc}"
                break
            dt = h / 2
            clean = 0
            continue

        dens = new_values.real**2 + new_values.imag**2
        kinetic = float(np.sum(grid.k_sq * (new_spec.real**2 + new_spec.imag**2)) * dv)
        potential = float(np.sum(dens ** (p / 2)) * dv)
        new_energy = 0.5 * kinetic - potential / p
        if not (math.isfinite(kinetic) and math.isfinite(potential)) or not np.all(np.isfinite(new_values)):
            status, t_event = Status.STEP_FAILURE, t
            message = f"non-finite field at step {step + 1}"
            break
        if check_energy:
            allowed = cfg.energy_rtol * abs(energy) + 1e-13 * scale
            if new_energy - energy > allowed:
                if h / 2 < cfg.dt_min:
                    status, t_event = Status.BLOWN_UP, t
                    message = f"energy increase unresolved at dt={h:.3g}"
                    break
                dt = h / 2
                clean = 0
                continue

        values = new_values
        step += 1
        t = stop if landing else t + h
        energy, scale = new_energy, kinetic + potential
        clean += 1
        if clean >= 50 and dt < base:
            dt = min(2 * dt, base)
            clean = 0

        sup = math.sqrt(float(dens.max()))
        peak_rate = q * abs(cfg.nonlinearity) * sup**q
        if kinetic > kinetic_limit or sup > cfg.blowup_sup_threshold:
            status, t_event = Status.BLOWN_UP, t
            message = f"threshold crossed: kinetic={kinetic:.4g}, sup={sup:.4g}"
        elif math.sqrt(max(kinetic, 0.0)) < cfg.decay_h1_threshold:
            status, t_event = Status.DECAYED, t
        elif t >= cfg.max_time:
            status, t_event = Status.MAX_TIME, t

        due = next_record is None or t >= next_record
        if due or status is not Status.RUNNING:
            rec = record_from_arrays(grid, values, new_spec, t, records[-1])
            records.append(rec)
            snap = RunState(t, ComplexField(grid, values), step, status, t_event, dt, message)
            for obs in observers:
                obs(snap, rec)
            if next_record is not None and t >= next_record:
                next_record = _next_multiple(t, record_interval)

    final = RunState(t, ComplexField(grid, values), step, status, t_event, dt, message)
    if records[-1].t != t:
        rec = record_from_arrays(grid, values, sfft.fftn(values, norm="ortho"), t, records[-1])
        records.append(rec)
        for obs in observers:
            obs(final, rec)
    log.debug("run finished: %s at t=%.6g after %d steps", status.label, t, step)
    return final, records


def _next_multiple(t: float, interval: float) -> float:
    k = math.floor(t / interval + 1e-9) + 1
    return k * interval


@dataclass(frozen=True)
class BlowupEstimate:
    detected: bool
    t_estimate: float | None
    t_event: float | None
    exponent: float | None
    min_d2I: float
    fit_points: int = 0


def detect_blowup_time(
    times,
    mass,
    t_event: float | None = None,
    k_functional=None,
    re_z: float | None = None,
    tail_fraction: float = 0.5,
) -> BlowupEstimate:
    """Extrapolate the blow-up time from the growth of I'(t) = mass/2.

    For I' ~ c (t* - t)^{-gamma} the ratio I'/I'' = (t* - t)/gamma is linear
    in t, so a least-squares line through its tail hits zero at t*; the slope
    gives gamma, and I'^{-1/gamma} is the quantity whose concavity-driven
    extrapolation reaches zero at t*. I'' comes from -Re z K when K is given,
    otherwise from finite differences of the mass.
    """
    t = np.asarray(times, dtype=float)
    m = np.asarray(mass, dtype=float)
    if t.size < 10:
        raise InsufficientDataError(f"need at least 10 samples, got {t.size}")
    if k_functional is not None and re_z is not None:
        d2I = -re_z * np.asarray(k_functional, dtype=float)
    else:
        d2I = 0.5 * np.gradient(m, t, edge_order=2)
    dI = 0.5 * m
    min_d2I = float(np.min(d2I))
    span = t[-1] - t[0]
    if not np.any(d2I * span > 1e-8 * np.abs(dI)):
        return BlowupEstimate(False, None, t_event, None, min_d2I)
    start = int(t.size * (1.0 - tail_fraction))
    sel = np.arange(start, t.size)
    sel = sel[d2I[sel] > 0]
    if sel.size < 3:
        return BlowupEstimate(False, None, t_event, None, min_d2I)
    g = dI[sel] / d2I[sel]
    slope, intercept = np.polyfit(t[sel], g, 1)
    if slope >= 0:
        return BlowupEstimate(False, None, t_event, None, min_d2I, int(sel.size))
    return BlowupEstimate(
        detected=True,
        t_estimate=float(-intercept / slope),
        t_event=t_event,
        exponent=float(-1.0 / slope),
        min_d2I=min_d2I,
        fit_points=int(sel.size),
    )


# checkpoint header, little-endian:
#   magic[8] version:u32 d:u32 n:u32 status:u32
#   L:f64 theta:f64 t:f64 t_event:f64 dt:f64 step_index:u64 s_accum:f64
# followed by n^d little-endian complex64 samples in C order. t_event and dt
# are NaN when absent.
_HEADER = struct.Struct("<8s4I5dQd")
_MAGIC = b"CGLCKPT\x00"
_VERSION = 2


def save_checkpoint(path, state: RunState, z: ZParameter, s_accum: float = 0.0) -> None:
    """Write the physical field and run metadata; s_accum lets a resumed run
    continue the space-time accumulator."""
    grid = state.u.grid
    header = _HEADER.pack(
        _MAGIC,
        _VERSION,
        grid.d,
        grid.n_per_axis,
        state.status.value,
        grid.half_length,
        z.theta,
        state.t,
        math.nan if state.t_event is None else state.t_event,
        math.nan if state.dt is None else state.dt,
        state.step_index,
        float(s_accum),
    )
    data = np.ascontiguousarray(state.u.physical().values, dtype="<c8")
    Path(path).write_bytes(header + data.tobytes(order="C"))


def load_checkpoint(path) -> tuple[RunState, ZParameter, float]:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated checkpoint header")
    magic, version, d, n, status, L, theta, t, t_event, dt, step, s_accum = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    grid = Grid(d, n, L)
    expected = _HEADER.size + 8 * grid.size
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    values = np.frombuffer(raw, dtype="<c8", offset=_HEADER.size).astype(complex)
    state = RunState(
        t=t,
        u=ComplexField(grid, values.reshape(grid.shape)),
        step_index=step,
        status=Status(status),
        t_event=None if math.isnan(t_event) else t_event,
        dt=None if math.isnan(dt) else dt,
    )
    return state, ZParameter(theta), s_accum
