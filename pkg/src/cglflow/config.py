"""Run configuration: a strict TOML document with documented defaults.

Every table and key is optional; unknown keys are rejected. Validation
collects every problem before raising, so one run of the parser reports the
whole list.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import tomli
import tomli_w

from .experiments import EXPERIMENT_KINDS, ExperimentSpec, FamilySpec
from .integrator import StepperConfig
from .spectral import Grid, ZParameter

__all__ = ["ConfigError", "OutputConfig", "RunConfig", "parse_config", "config_from_dict", "dump_config"]


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    # 0 means record after every accepted step
    record_cadence: float = 0.0
    # 0 disables periodic checkpoints; a final checkpoint is always written
    checkpoint_cadence: float = 0.0


@dataclass(frozen=True)
class RunConfig:
    grid: Grid = field(default_factory=lambda: Grid(3, 64, 3.0))
    z: ZParameter = field(default_factory=lambda: ZParameter(math.pi / 4))
    stepper: StepperConfig = field(default_factory=lambda: StepperConfig(dt=0.01))
    experiment: ExperimentSpec = field(default_factory=ExperimentSpec)
    output: OutputConfig = field(default_factory=OutputConfig)

    def __post_init__(self):
        # the experiment always runs on the run-level grid, stepper and cadence
        folded = ExperimentSpec(**{**_spec_kwargs(self.experiment), "grid": self.grid,
                                   "stepper": self.stepper,
                                   "record_interval": self.output.record_cadence or None})
        object.__setattr__(self, "experiment", folded)

    def to_dict(self) -> dict:
        exp = _spec_kwargs(self.experiment)
        exp["family"] = asdict(self.experiment.family)
        exp["amplitudes"] = list(self.experiment.amplitudes)
        exp["thetas"] = list(self.experiment.thetas)
        for key in ("grid", "stepper", "record_interval"):
            exp.pop(key)
        return {
            "grid": {"d": self.grid.d, "n_per_axis": self.grid.n_per_axis,
                     "half_length": self.grid.half_length},
            "z": {"theta": self.z.theta},
            "stepper": asdict(self.stepper),
            "experiment": exp,
            "output": asdict(self.output),
        }


def _spec_kwargs(spec: ExperimentSpec) -> dict:
    return {f.name: getattr(spec, f.name) for f in fields(spec)}


_GRID_KEYS = {"d": int, "n_per_axis": int, "half_length": float}
_Z_KEYS = {"theta": float}
_STEPPER_KEYS = {f.name: f.type for f in fields(StepperConfig)}
_FAMILY_KEYS = {f.name: f.type for f in fields(FamilySpec)}
_EXPERIMENT_KEYS = {"kind", "family", "amplitudes", "thetas", "seed", "horizon", "epsilon",
                    "boundary_tolerance", "tail_tolerance"}
_OUTPUT_KEYS = {f.name for f in fields(OutputConfig)}
_TABLES = {"grid", "z", "stepper", "experiment", "output"}


def _number(value, name, problems, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        problems.append(f"{name} must be a number (got {value!r})")
        return None
    if integer:
        if isinstance(value, float) and not value.is_integer():
            problems.append(f"{name} must be an integer (got {value!r})")
            return None
        return int(value)
    return float(value)


def _table(doc: dict, name: str, allowed, problems) -> dict:
    tbl = doc.get(name, {})
    if not isinstance(tbl, dict):
        problems.append(f"[{name}] must be a table")
        return {}
    for key in tbl:
        if key not in allowed:
            problems.append(f"unknown key {name}.{key}")
    return tbl


def config_from_dict(doc: dict) -> RunConfig:
    """Validate a parsed document and build a RunConfig, or raise ConfigError."""
    problems: list[str] = []
    for key in doc:
        if key not in _TABLES:
            problems.append(f"unknown table or key {key!r}")
    defaults = RunConfig()

    g = _table(doc, "grid", _GRID_KEYS, problems)
    d = _number(g.get("d", defaults.grid.d), "grid.d", problems, integer=True)
    n = _number(g.get("n_per_axis", defaults.grid.n_per_axis), "grid.n_per_axis", problems, integer=True)
    L = _number(g.get("half_length", defaults.grid.half_length), "grid.half_length", problems)
    if d is not None and d not in (3, 4):
        problems.append(f"grid.d must be 3 or 4 (got {d})")
    if n is not None and (n < 8 or n % 2):
        problems.append(f"grid.n_per_axis must be even and >= 8 (got {n})")
    if L is not None and not L > 0:
        problems.append(f"grid.half_length must be positive (got {L})")

    zt = _table(doc, "z", _Z_KEYS, problems)
    theta = _number(zt.get("theta", defaults.z.theta), "z.theta", problems)
    if theta is not None and not (0 < theta <= math.pi / 2):
        problems.append(f"z.theta must lie in (0, pi/2] (got {theta})")

    st = _table(doc, "stepper", _STEPPER_KEYS, problems)
    stepper_kw = asdict(defaults.stepper)
    for key, value in st.items():
        if key not in _STEPPER_KEYS:
            continue
        if key == "adaptive":
            if not isinstance(value, bool):
                problems.append(f"stepper.adaptive must be a boolean (got {value!r})")
            else:
                stepper_kw[key] = value
        else:
            num = _number(value, f"stepper.{key}", problems)
            if num is not None:
                stepper_kw[key] = num
    stepper = None
    try:
        stepper = StepperConfig(**stepper_kw)
    except ValueError as exc:
        problems.extend(f"stepper: {p}" for p in str(exc).split("; "))

    ex = _table(doc, "experiment", _EXPERIMENT_KEYS, problems)
    dspec = defaults.experiment
    kind = ex.get("kind", dspec.kind)
    if kind not in EXPERIMENT_KINDS:
        problems.append(f"experiment.kind must be one of {', '.join(EXPERIMENT_KINDS)} (got {kind!r})")
    fam_doc = ex.get("family", {})
    fam_kw = asdict(dspec.family)
    if not isinstance(fam_doc, dict):
        problems.append("experiment.family must be a table")
        fam_doc = {}
    for key, value in fam_doc.items():
        if key not in _FAMILY_KEYS:
            problems.append(f"unknown key experiment.family.{key}")
        elif key == "kind":
            fam_kw[key] = value
        else:
            num = _number(value, f"experiment.family.{key}", problems)
            if num is not None:
                fam_kw[key] = num
    family = FamilySpec(**fam_kw)
    problems.extend(f"experiment.family: {p}" for p in family.violations())

    def number_list(key, default):
        raw = ex.get(key, list(default))
        if not isinstance(raw, list):
            problems.append(f"experiment.{key} must be a list")
            return tuple(default)
        out = [_number(v, f"experiment.{key}[{i}]", problems) for i, v in enumerate(raw)]
        if not out:
            problems.append(f"experiment.{key} must be non-empty")
        return tuple(v for v in out if v is not None)

    amplitudes = number_list("amplitudes", dspec.amplitudes)
    thetas = number_list("thetas", dspec.thetas)
    for th in thetas:
        if not (0 < th <= math.pi / 2):
            problems.append(f"experiment.thetas entry {th} must lie in (0, pi/2]")
    seed = _number(ex.get("seed", dspec.seed), "experiment.seed", problems, integer=True)
    horizon = _number(ex.get("horizon", dspec.horizon), "experiment.horizon", problems)
    epsilon = _number(ex.get("epsilon", dspec.epsilon), "experiment.epsilon", problems)
    btol = _number(ex.get("boundary_tolerance", dspec.boundary_tolerance),
                   "experiment.boundary_tolerance", problems)
    ttol = _number(ex.get("tail_tolerance", dspec.tail_tolerance), "experiment.tail_tolerance", problems)
    if horizon is not None and not horizon > 0:
        problems.append(f"experiment.horizon must be positive (got {horizon})")
    if epsilon is not None and epsilon < 0:
        problems.append(f"experiment.epsilon must be non-negative (got {epsilon})")

    out = _table(doc, "output", _OUTPUT_KEYS, problems)
    directory = out.get("directory", defaults.output.directory)
    if not isinstance(directory, str) or not directory:
        problems.append("output.directory must be a non-empty string")
    rc = _number(out.get("record_cadence", defaults.output.record_cadence), "output.record_cadence", problems)
    cc = _number(out.get("checkpoint_cadence", defaults.output.checkpoint_cadence),
                 "output.checkpoint_cadence", problems)
    for name, value in (("record_cadence", rc), ("checkpoint_cadence", cc)):
        if value is not None and value < 0:
            problems.append(f"output.{name} must be >= 0 (got {value})")

    if problems:
        raise ConfigError(problems)
    experiment = ExperimentSpec(
        kind=kind, family=family, amplitudes=amplitudes, thetas=thetas, seed=seed,
        horizon=horizon, epsilon=epsilon, boundary_tolerance=btol, tail_tolerance=ttol,
    )
    return RunConfig(Grid(d, n, L), ZParameter(theta), stepper, experiment,
                     OutputConfig(directory, rc, cc))


def parse_config(path) -> RunConfig:
    """Read and validate a TOML configuration file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from exc
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError([f"{path}: {exc}"]) from exc
    return config_from_dict(doc)


def dump_config(cfg: RunConfig) -> str:
    return tomli_w.dumps(cfg.to_dict())
