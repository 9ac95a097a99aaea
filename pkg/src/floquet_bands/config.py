"""Run configuration: JSON files with frequencies in MHz and times in microseconds.

Everything is converted to SI (rad/s, s) exactly once, in :func:`resolve`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .hamiltonians import (
    AmpModTLS,
    BreakingTerm,
    DriveSpec,
    PhaseModTLS,
    RATIO_PARAMETERS,
    ThreeLevelFirstFrame,
    ThreeLevelRotating,
    system_dim,
)
from .operators import NAMED_PROBES, NAMED_STATES, ProbeOperator, named_state
from .symmetry import NAMED_SYMMETRIES, SymmetryDescriptor, named_symmetry

MHZ = 2 * np.pi * 1e6
US = 1e-6


class ConfigError(ValueError):
    """Invalid or unresolvable run configuration."""


# complex numbers are written as plain reals or [re, im] pairs
ComplexEntry = Union[float, tuple[float, float]]


def _to_complex(x) -> complex:
    if isinstance(x, (tuple, list)):
        return complex(x[0], x[1])
    return complex(x)


def _matrix(rows) -> np.ndarray:
    return np.array([[_to_complex(x) for x in row] for row in rows], dtype=complex)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class BreakingConfig(_Section):
    harmonic: int = Field(ge=1)
    amplitude: float
    axis: Literal["x", "y", "z"] = "z"
    # relative: amplitude is a multiple of eps_m, otherwise MHz
    relative: bool = False


class PhaseModConfig(_Section):
    type: Literal["phase_mod_tls"]
    omega_rabi_mhz: float = Field(gt=0)
    epsilon_m_mhz: float = Field(default=0.0, ge=0)
    omega_m_mhz: float = Field(gt=0)
    phi: float = 0.0
    delta_mhz: float = 0.0
    breaking_terms: list[BreakingConfig] = []


class AmpModConfig(_Section):
    type: Literal["amp_mod_tls"]
    omega_rabi_mhz: float = Field(gt=0)
    epsilon_m_mhz: float = Field(default=0.0, ge=0)
    omega_m_mhz: float = Field(gt=0)
    phi: float = 0.0
    delta_mhz: float = 0.0


class ThreeLevelRotatingConfig(_Section):
    type: Literal["three_level_rotating"]
    coupling_mhz: float = Field(default=0.0, ge=0)
    omega_m_mhz: float = Field(gt=0)


class ThreeLevelFirstFrameConfig(_Section):
    type: Literal["three_level_first_frame"]
    delta_mhz: float = Field(gt=0)
    coupling_mhz: float = Field(default=0.0, ge=0)
    omega_m_mhz: float = Field(gt=0)


SystemConfig = Annotated[
    Union[PhaseModConfig, AmpModConfig, ThreeLevelRotatingConfig, ThreeLevelFirstFrameConfig],
    Field(discriminator="type"),
]


class TraceConfig(_Section):
    t_end_us: float = Field(gt=0)
    samples: int = Field(ge=2)


class SweepConfig(_Section):
    parameter: str
    start: float
    stop: float
    count: int = Field(ge=1)


class FloquetConfig(_Section):
    truncation: int = Field(default=100, ge=1)
    convergence_check: bool = True
    tail_tol: float = Field(default=1e-10, gt=0)


class TrotterConfig(_Section):
    dt_us: float = Field(gt=0)


class EnsembleConfig(_Section):
    sigma_mhz: float = Field(ge=0)
    count: int = Field(default=51, ge=1)
    span: float = Field(default=2.0, gt=0)


class SymmetryConfig(_Section):
    operator: list[list[ComplexEntry]]
    alpha: Literal[1, -1] = 1
    beta: Literal[1, -1] = 1
    t_shift: float = 0.0
    conjugating: bool = False
    name: str = "custom"


class ProbeConfig(_Section):
    name: str
    matrix: list[list[ComplexEntry]]


class OracleConfig(_Section):
    values: Optional[list[float]] = None
    tolerance: float = Field(default=1e-6, gt=0)


class PredictConfig(_Section):
    n_max: int = Field(default=6, ge=0)


class OutputConfig(_Section):
    directory: str = "out"


class RunConfig(_Section):
    name: str = "run"
    system: SystemConfig
    initial_state: Union[str, list[ComplexEntry]] = "0"
    probes: list[Union[str, ProbeConfig]] = ["sigma_z"]
    trace: TraceConfig
    sweep: Optional[SweepConfig] = None
    method: Literal["floquet", "trotter"] = "floquet"
    floquet: FloquetConfig = FloquetConfig()
    trotter: Optional[TrotterConfig] = None
    ensemble: Optional[EnsembleConfig] = None
    symmetries: list[Union[str, SymmetryConfig]] = []
    oracle: OracleConfig = OracleConfig()
    predict: PredictConfig = PredictConfig()
    output: OutputConfig = OutputConfig()

    @model_validator(mode="after")
    def _cross_checks(self):
        if self.method == "trotter" and self.trotter is None:
            raise ValueError("method 'trotter' needs a trotter section with dt_us")
        if self.ensemble is not None and self.system.type not in ("phase_mod_tls", "amp_mod_tls"):
            raise ValueError("ensembles are only defined for two-level drives")
        return self


# --- resolved run --------------------------------------------------------------


@dataclass(frozen=True)
class Run:
    """A configuration with every quantity in SI units and every name resolved."""

    config: RunConfig
    spec: DriveSpec
    psi0: np.ndarray
    probes: dict[str, ProbeOperator]
    times: np.ndarray
    sweep_parameter: str | None
    sweep_labels: np.ndarray  # values as written in the config
    sweep_values: np.ndarray  # values passed to set_parameter
    truncation: int
    tail_tol: float | None
    dt: float | None
    ensemble: tuple[float, int, float] | None
    symmetries: list[SymmetryDescriptor]
    oracle_labels: np.ndarray
    oracle_values: np.ndarray

    @property
    def dim(self) -> int:
        return system_dim(self.spec)


_FREQUENCY_FIELDS = {
    "omega_rabi": "omega_rabi_mhz",
    "epsilon_m": "epsilon_m_mhz",
    "omega_m": "omega_m_mhz",
    "delta": "delta_mhz",
    "coupling": "coupling_mhz",
}


def _spec(sys) -> DriveSpec:
    if sys.type == "phase_mod_tls":
        terms = tuple(
            BreakingTerm(b.harmonic, b.amplitude if b.relative else b.amplitude * MHZ, b.axis, b.relative)
            for b in sys.breaking_terms
        )
        return PhaseModTLS(
            sys.omega_rabi_mhz * MHZ,
            sys.epsilon_m_mhz * MHZ,
            sys.omega_m_mhz * MHZ,
            sys.phi,
            sys.delta_mhz * MHZ,
            terms,
        )
    if sys.type == "amp_mod_tls":
        return AmpModTLS(
            sys.omega_rabi_mhz * MHZ, sys.epsilon_m_mhz * MHZ, sys.omega_m_mhz * MHZ, sys.phi, sys.delta_mhz * MHZ
        )
    if sys.type == "three_level_rotating":
        return ThreeLevelRotating(sys.coupling_mhz * MHZ, sys.omega_m_mhz * MHZ)
    return ThreeLevelFirstFrame(sys.delta_mhz * MHZ, sys.coupling_mhz * MHZ, sys.omega_m_mhz * MHZ)


def _sweep_scale(parameter: str, spec: DriveSpec) -> float:
    """Factor from config units to the units set_parameter expects."""
    if parameter in RATIO_PARAMETERS:
        if not hasattr(spec, RATIO_PARAMETERS[parameter][0]):
            raise ConfigError(f"sweep parameter {parameter!r} does not apply to this system")
        return 1.0
    if parameter == "phi" and hasattr(spec, "phi"):
        return 1.0
    base = parameter[:-4] if parameter.endswith("_mhz") else None
    if base in _FREQUENCY_FIELDS and hasattr(spec, base):
        return MHZ
    raise ConfigError(
        f"unknown sweep parameter {parameter!r}; use modulation_index, coupling_index, phi "
        "or a frequency field such as delta_mhz"
    )


def _internal_name(parameter: str) -> str:
    return parameter[:-4] if parameter.endswith("_mhz") else parameter


def _psi0(entry, dim: int) -> np.ndarray:
    if isinstance(entry, str):
        if entry not in NAMED_STATES:
            raise ConfigError(f"unknown initial state {entry!r}; known: {sorted(NAMED_STATES)}")
        psi = named_state(entry)
    else:
        psi = np.array([_to_complex(x) for x in entry], dtype=complex)
        nrm = np.linalg.norm(psi)
        if nrm == 0:
            raise ConfigError("initial state must be non-zero")
        psi = psi / nrm
    if psi.shape != (dim,):
        raise ConfigError(f"initial state has dimension {psi.shape[0]}, system has {dim}")
    return psi


def _probes(entries, dim: int) -> dict[str, ProbeOperator]:
    out: dict[str, ProbeOperator] = {}
    for e in entries:
        if isinstance(e, str):
            if e not in NAMED_PROBES:
                raise ConfigError(f"unknown probe {e!r}; known: {sorted(NAMED_PROBES)}")
            name, op = e, ProbeOperator.named(e)
        else:
            name, op = e.name, ProbeOperator(_matrix(e.matrix))
        if op.dim != dim:
            raise ConfigError(f"probe {name!r} has dimension {op.dim}, system has {dim}")
        if name in out:
            raise ConfigError(f"probe {name!r} listed twice")
        out[name] = op
    if not out:
        raise ConfigError("at least one probe is required")
    return out


def _symmetries(entries, dim: int) -> list[SymmetryDescriptor]:
    out = []
    for e in entries:
        if isinstance(e, str):
            if e not in NAMED_SYMMETRIES:
                raise ConfigError(f"unknown symmetry {e!r}; known: {sorted(NAMED_SYMMETRIES)}")
            s = named_symmetry(e)
        else:
            s = SymmetryDescriptor(_matrix(e.operator), e.alpha, e.beta, e.t_shift, e.conjugating, e.name)
        if s.dim != dim:
            raise ConfigError(f"symmetry {s.name!r} acts on dimension {s.dim}, system has {dim}")
        out.append(s)
    return out


def resolve(cfg: RunConfig) -> Run:
    try:
        spec = _spec(cfg.system)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    dim = system_dim(spec)
    t_end = cfg.trace.t_end_us * US
    times = np.linspace(0.0, t_end, cfg.trace.samples)

    if cfg.sweep is not None:
        param = cfg.sweep.parameter
        scale = _sweep_scale(param, spec)
        labels = np.linspace(cfg.sweep.start, cfg.sweep.stop, cfg.sweep.count)
        internal = _internal_name(param)
    else:
        param, scale, internal = None, 1.0, None
        labels = np.array([np.nan])
    values = labels * scale

    if cfg.oracle.values is not None:
        if param is None:
            raise ConfigError("oracle values need a sweep parameter")
        o_labels = np.asarray(cfg.oracle.values, dtype=float)
    else:
        o_labels = labels
    o_values = o_labels * scale

    ens = None
    if cfg.ensemble is not None:
        if cfg.ensemble.count % 2 == 0:
            raise ConfigError("ensemble count must be odd")
        ens = (cfg.ensemble.sigma_mhz * MHZ, cfg.ensemble.count, cfg.ensemble.span)

    return Run(
        config=cfg,
        spec=spec,
        psi0=_psi0(cfg.initial_state, dim),
        probes=_probes(cfg.probes, dim),
        times=times,
        sweep_parameter=internal,
        sweep_labels=labels,
        sweep_values=values,
        truncation=cfg.floquet.truncation,
        tail_tol=cfg.floquet.tail_tol if cfg.floquet.convergence_check else None,
        dt=cfg.trotter.dt_us * US if cfg.trotter else None,
        ensemble=ens,
        symmetries=_symmetries(cfg.symmetries, dim),
        oracle_labels=o_labels,
        oracle_values=o_values,
    )


# --- loading ---------------------------------------------------------------------


def preset_names() -> list[str]:
    root = resources.files("floquet_bands") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def _read_source(source: str | Path) -> str:
    path = Path(source)
    if path.is_file():
        return path.read_text()
    name = str(source)
    if name in preset_names():
        return (resources.files("floquet_bands") / "presets" / f"{name}.json").read_text()
    raise ConfigError(f"config {source!r} is neither a file nor a preset ({', '.join(preset_names())})")


def parse_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(source: str | Path) -> RunConfig:
    """Read a JSON config from a path or a preset name."""
    text = _read_source(source)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(data)


def dump_resolved(cfg: RunConfig) -> str:
    """Config with every default filled in; stable key order for byte-identical output."""
    return json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"
