"""Pseudospectral simulation of the energy-critical focusing complex
Ginzburg-Landau equation u_t = z Delta u + z |u|^{4/(d-2)} u and its NLS limit."""

from .diagnostics import DiagnosticsRecord, bubble_fit, record, trapping_report, virial_series
from .ground_state import GroundStateRefs, compute_thresholds, eval_W, truncated_W
from .integrator import RunState, Status, StepperConfig, integrate, strang_step
from .spectral import ComplexField, Grid, ZParameter, apply_semigroup, dft, idft

__version__ = "0.1.0"

__all__ = [
    "ComplexField", "Grid", "ZParameter", "apply_semigroup", "dft", "idft",
    "GroundStateRefs", "compute_thresholds", "eval_W", "truncated_W",
    "RunState", "Status", "StepperConfig", "integrate", "strang_step",
    "DiagnosticsRecord", "bubble_fit", "record", "trapping_report", "virial_series",
]
