"""Acceptance criteria 1-11, each at its stated tolerance.

Every test prints one PASS/FAIL line; the lines are repeated in the pytest
terminal summary. Running this file directly executes all criteria in order.
"""

import math
import time
from functools import lru_cache

import mpmath as mp
import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from cglflow.diagnostics import bubble_fit, dissipation_residual, mass_identity_residual, time_derivative_sq
from cglflow.experiments import (
    ExperimentSpec,
    FamilySpec,
    gronwall_linear_response,
    initial_datum,
    run_decay_study,
    run_dichotomy_sweep,
    run_inviscid_limit,
    run_weak_strong_gronwall,
    scaling_covariance,
    self_convergence,
)
from cglflow.ground_state import compute_thresholds, truncated_W
from cglflow.integrator import Status, StepperConfig, integrate
from cglflow.spectral import ComplexField, Grid, ZParameter, apply_semigroup

SMOOTH_GRID = Grid(3, 32, 4.0)


def smooth_datum():
    """Small smooth complex datum shared by the order, identity and NLS criteria."""
    return SMOOTH_GRID.sample(
        lambda x, y, z: np.exp(-(x * x + y * y + z * z) / (2 * 0.6**2)) * (1 + 0.3j * np.sin(x))
    )


def fixed_run(u0, z, dt, T, observers=()):
    cfg = StepperConfig(dt=dt, dt_min=dt * 1e-6, max_time=T, adaptive=False,
                        blowup_kinetic_factor=1e6, decay_h1_threshold=1e-300)
    state, recs = integrate(u0, z, cfg, observers=observers)
    assert state.status is Status.MAX_TIME, state
    return state, recs


def report(n, ok, detail, seconds):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}  [{seconds:.1f} s]"
    ACCEPTANCE_LINES[n] = line
    print(line)
    return ok


# ---------------------------------------------------------------- 1


def criterion_1():
    t0 = time.perf_counter()
    g = Grid(3, 96, 16.0)
    s, t = 1.0, 0.1
    r2 = g.radius_sq
    f = ComplexField(g, np.exp(-r2 / (4 * s)).astype(complex))
    worst = 0.0
    for theta in (math.pi / 6, math.pi / 4, math.pi / 2):
        zt = complex(math.cos(theta), math.sin(theta)) * t
        oracle = (s / (s + zt)) ** 1.5 * np.exp(-r2 / (4 * (s + zt)))
        got = apply_semigroup(f, ZParameter(theta), t).values
        worst = max(worst, float(np.max(np.abs(got - oracle))))
    dt = time.perf_counter() - t0
    return report(1, worst <= 1e-8 and dt < 10, f"max pointwise error {worst:.2e} (tol 1e-8)", dt)


# ---------------------------------------------------------------- 2


def criterion_2():
    t0 = time.perf_counter()
    refs = compute_thresholds(3)
    dt = time.perf_counter() - t0
    mp.mp.dps = 30
    area = 4 * mp.pi
    kin = float(area * mp.quad(lambda r: (r / 3) ** 2 * (1 + r * r / 3) ** -3 * r * r, [0, 1, 10, mp.inf]))
    pot = float(area * mp.quad(lambda r: (1 + r * r / 3) ** -3 * r * r, [0, 1, 10, mp.inf]))
    e_oracle = kin / 2 - pot / 6
    rel_k = abs(refs.grad_norm_sq_W - kin) / kin
    rel_e = abs(refs.energy_W - e_oracle) / e_oracle
    poh = abs(refs.energy_W - refs.grad_norm_sq_W / 3) / refs.energy_W
    ok = rel_k <= 1e-8 and rel_e <= 1e-8 and poh <= 1e-8 and dt < 1
    return report(2, ok, f"||grad W||^2={refs.grad_norm_sq_W:.12g} (rel {rel_k:.1e}), "
                         f"E(W)={refs.energy_W:.12g} (rel {rel_e:.1e}), Pohozaev rel {poh:.1e}", dt)


# ---------------------------------------------------------------- 3


@lru_cache(maxsize=1)
def splitting_convergence():
    return self_convergence(smooth_datum(), ZParameter.nls(), dts=(4e-3, 2e-3, 1e-3),
                            reference_dt=1.25e-4, horizon=1.0)


def criterion_3():
    t0 = time.perf_counter()
    rep = splitting_convergence()
    dt = time.perf_counter() - t0
    ok = all(1.8 <= p <= 2.2 for p in rep.orders) and dt < 300
    errs = ", ".join(f"{e:.3e}" for e in rep.errors)
    return report(3, ok, f"errors [{errs}], orders {[round(p, 3) for p in rep.orders]}", dt)


# ---------------------------------------------------------------- 4


def criterion_4():
    t0 = time.perf_counter()
    z = ZParameter(math.pi / 4)
    u0 = smooth_datum()
    diss, mass, worst_inc = [], [], -np.inf
    for dt in (4e-3, 2e-3, 1e-3):
        ut = []
        _, recs = fixed_run(u0, z, dt, 0.5, observers=[lambda s, r: ut.append(time_derivative_sq(s.u, z))])
        diss.append(float(np.max(np.abs(dissipation_residual(recs, ut, z)))))
        mass.append(float(np.max(np.abs(mass_identity_residual(recs, z)[1]))))
        e = np.array([r.energy for r in recs])
        worst_inc = max(worst_inc, float(np.max(np.diff(e) / np.abs(e[:-1]))))
    dt = time.perf_counter() - t0
    rd = [diss[i] / diss[i + 1] for i in range(2)]
    rm = [mass[i] / mass[i + 1] for i in range(2)]
    ok = min(rd) >= 3.5 and min(rm) >= 3.5 and worst_inc <= 1e-8 and dt < 600
    return report(4, ok, f"dissipation residual ratios {[round(r, 2) for r in rd]}, mass-identity ratios "
                         f"{[round(r, 2) for r in rm]}, worst relative energy increase {worst_inc:.1e}", dt)


# ---------------------------------------------------------------- 5


def criterion_5():
    t0 = time.perf_counter()
    z = ZParameter.nls()
    u0 = smooth_datum()
    worst_mass, consts = 0.0, []
    for dt in (4e-3, 2e-3, 1e-3):
        _, recs = fixed_run(u0, z, dt, 1.0)
        m = np.array([r.mass for r in recs])
        e = np.array([r.energy for r in recs])
        worst_mass = max(worst_mass, float(np.max(np.abs(np.diff(m)))))
        consts.append(float(np.max(np.abs(e - e[0]))) / dt**2)
    dt = time.perf_counter() - t0
    # energy drift <= C dt^2: the measured C must not grow as dt shrinks
    spread = max(consts) / min(consts)
    ok = worst_mass <= 1e-10 and consts[-1] <= 1.25 * consts[0] and dt < 300
    return report(5, ok, f"max mass change per step {worst_mass:.1e}, energy drift / dt^2 = "
                         f"{[round(c, 4) for c in consts]} (spread {spread:.2f})", dt)


# ---------------------------------------------------------------- 6 and 7


SWEEP_SPEC = ExperimentSpec(
    kind="DichotomySweep",
    family=FamilySpec("gaussian", sigma=0.25),
    amplitudes=(0.5, 1.2, 2.0, 4.2, 4.6, 5.0),
    thetas=(math.pi / 6, math.pi / 4),
    grid=Grid(3, 64, 3.0),
    stepper=StepperConfig(dt=0.01, max_time=20.0),
    record_interval=None,
)


@lru_cache(maxsize=1)
def sweep():
    t0 = time.perf_counter()
    result = run_dichotomy_sweep(SWEEP_SPEC, jobs=1, check=False)
    return result, time.perf_counter() - t0


def criterion_6():
    result, dt = sweep()
    refs = result.refs
    cells = result.cells
    classified = all(c.expected is not None and c.energy0_quadrature < refs.energy_W for c in cells)
    trusted = [c for c in cells if c.trusted]
    wrong = [c.index for c in result.misclassified]
    sub = [c for c in cells if c.expected == "Decayed"]
    sup = [c for c in cells if c.expected == "BlownUp"]
    virial_ok = all(c.delta3 is not None and c.delta3 > 0
                    and c.min_d2I >= math.cos(c.theta) * c.delta3 * (1 - 1e-12) for c in sup)
    ok = (classified and len(trusted) == len(cells) and not wrong and len(sub) == 6 and len(sup) == 6
          and virial_ok and dt < 1800)
    d3 = min(c.delta3 for c in sup) if sup else float("nan")
    return report(6, ok, f"{len(cells)} cells, {len(trusted)} trusted, {len(sub)} subcritical / {len(sup)} "
                         f"supercritical, misclassified {wrong}, min delta3 {d3:.3g}", dt)


def criterion_7():
    result, _ = sweep()
    t0 = time.perf_counter()
    sub = [c for c in result.cells if c.expected == "Decayed"]
    bad = [(c.index, c.trapping.violations[:1]) for c in sub if not c.trapping.holds]
    margin = min(c.trapping.measured_delta_bar for c in sub)
    ok = bool(sub) and not bad
    return report(7, ok, f"{len(sub)} subcritical cells, violations {bad}, min measured delta_bar {margin:.3g}",
                  time.perf_counter() - t0)


# ---------------------------------------------------------------- 8


def criterion_8():
    t0 = time.perf_counter()
    spec = ExperimentSpec(kind="DecayStudy", family=FamilySpec("truncated_w", cutoff_radius=1.5, taper_width=1.0),
                          amplitudes=(0.3,), thetas=(math.pi / 4,), grid=Grid(3, 32, 3.0),
                          stepper=StepperConfig(dt=0.01, max_time=20.0), record_interval=0.25)
    rep = run_decay_study(spec)
    dt = time.perf_counter() - t0
    ok = rep.conclusive and rep.h1[-1] < 1e-6 and rep.final_quarter_increment < 0.01 and dt < 600
    return report(8, ok, f"{rep.status} at t={rep.t_event}, final H1 {rep.h1[-1]:.2e}, final-quarter S "
                         f"increment {rep.final_quarter_increment:.2e} of total", dt)


# ---------------------------------------------------------------- 9


def criterion_9():
    floor = splitting_convergence().errors[-1]
    t0 = time.perf_counter()
    spec = ExperimentSpec(kind="InviscidLimit", family=FamilySpec("gaussian", sigma=0.6), amplitudes=(1.0,),
                          grid=SMOOTH_GRID, stepper=StepperConfig(dt=1e-3), horizon=0.5,
                          thetas=tuple(math.pi / 2 - 2.0**-m for m in range(2, 7)))
    res = run_inviscid_limit(spec, floor=floor)
    dt = time.perf_counter() - t0
    monotone = all(b < a for a, b in zip(res.err_l2, res.err_l2[1:]))
    ok = monotone and bool(res.below_floor) and dt < 1200
    errs = ", ".join(f"{e:.3e}" for e in res.err_l2)
    return report(9, ok, f"err [{errs}], monotone {monotone}, err(theta_6) {res.err_l2[-1]:.2e} vs "
                         f"10 x floor {10 * floor:.2e}, slope in cos(theta) {res.slope:.3f}", dt)


# ---------------------------------------------------------------- 10


def criterion_10():
    t0 = time.perf_counter()
    spec = ExperimentSpec(kind="WeakStrongGronwall", family=FamilySpec("gaussian", sigma=0.6), amplitudes=(1.0,),
                          grid=SMOOTH_GRID, stepper=StepperConfig(dt=2e-3), horizon=1.0, epsilon=1e-6, seed=1)
    zero = run_weak_strong_gronwall(spec, epsilon=0.0)
    ratio, one, two = gronwall_linear_response(spec)
    dt = time.perf_counter() - t0
    ok = (float(np.max(zero.w_h1)) <= 1e-12 and one.within_bound and two.within_bound
          and abs(ratio - 2.0) <= 0.2 and dt < 600)
    return report(10, ok, f"eps=0: max ||w|| {np.max(zero.w_h1):.1e}; eps=1e-6: Gronwall C "
                          f"{one.gronwall_constant:.2e}, within bound {one.within_bound}; doubling ratio {ratio:.6f}",
                  dt)


# ---------------------------------------------------------------- 11


def criterion_11():
    t0 = time.perf_counter()
    u0 = initial_datum(FamilySpec("gaussian", sigma=0.6), SMOOTH_GRID, 1.0)
    mismatch = scaling_covariance(u0, ZParameter(math.pi / 4), 2.0, 2e-3, 0.2)
    g = Grid(3, 64, 8.0)
    x0, lam = np.array([0.3, -0.7, 1.1]), 0.8
    R = 0.45 * g.half_length
    fit = bubble_fit(truncated_W(g, R, R, center=x0, scale=lam))
    dx = float(np.max(np.abs(fit.center - x0)))
    dl = abs(fit.scale - lam)
    dt = time.perf_counter() - t0
    ok = mismatch <= 1e-6 and dx <= g.spacing and dl <= g.spacing and fit.correlation > 0.99 and dt < 300
    return report(11, ok, f"scaling mismatch {mismatch:.1e}; bubble scale error {dl:.3f}, centre error "
                          f"{dx:.3f} (h={g.spacing}), correlation {fit.correlation:.4f}", dt)


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7,
            criterion_8, criterion_9, criterion_10, criterion_11]


@pytest.mark.parametrize("crit", CRITERIA, ids=[f"criterion_{i}" for i in range(1, 12)])
def test_criterion(crit):
    assert crit()


if __name__ == "__main__":
    results = [crit() for crit in CRITERIA]
    print(f"{sum(results)}/{len(results)} criteria pass")
