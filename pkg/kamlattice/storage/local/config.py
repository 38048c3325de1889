import hashlib
import json
import logging
import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from kamlattice.tasks.exceptions import ConfigurationError
from kamlattice.tasks.homology.types import Strategy
from kamlattice.tasks.model.types import Equation

logger = logging.getLogger(__name__)

# tau = 1 is resonant for BBM: lambda_1 + lambda_3 = 2 lambda_2
DEFAULT_TAU = 1.0 + 1.0 / math.e


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelSection(Section):
    """
    Which lattice, its truncation and the excited sites.

    ``perturbation`` picks ``R⁰``: the reduced normal form remainder, that remainder plus an angle forcing of size
    ``forcing`` (``ε₀`` by default), or nothing.
    """
    equation: Equation = Equation.BBM
    radius: int = Field(16, ge=2)
    tau: list[float] = Field(default_factory=lambda: [DEFAULT_TAU], min_length=1)
    tangent_sites: list[list[int]] = Field(default_factory=lambda: [[1], [2]], min_length=1)
    tangent_threshold: float | None = Field(None, gt=0)
    max_z_degree: int = Field(4, ge=4)
    perturbation: Literal["normal_form", "forced", "none"] = "normal_form"
    forcing: float | None = Field(None, gt=0)
    zeta: list[float] | None = None

    @field_validator("tau")
    @classmethod
    def positive_tau(cls, value: list[float]) -> list[float]:
        if any(t <= 0 for t in value):
            raise ValueError(f"tau components must be positive, got {value}")
        return value

    @model_validator(mode="after")
    def consistent_dimensions(self) -> "ModelSection":
        d = len(self.tau)
        if self.equation is Equation.BBM and (d != 1 or any(len(s) != 1 for s in self.tangent_sites)):
            raise ValueError("The BBM lattice is one-dimensional: one tau and scalar tangent sites")
        if any(len(s) != d for s in self.tangent_sites):
            raise ValueError(f"Tangent sites must have {d} components: {self.tangent_sites}")
        if self.zeta is not None:
            if len(self.zeta) != len(self.tangent_sites):
                raise ValueError(f"{len(self.zeta)} amplitudes for {len(self.tangent_sites)} tangent sites")
            if any(z <= 0 for z in self.zeta):
                raise ValueError(f"Amplitudes must be positive, got {self.zeta}")
        return self

    @property
    def N(self) -> int:
        return len(self.tangent_sites)


class NormSection(Section):
    p: float = Field(1.0, ge=0)
    samples: int = Field(16, ge=1)


class ScheduleSection(Section):
    epsilon0: float = Field(1e-4, gt=0, lt=1)
    rho0: float = Field(0.5, gt=0)
    s0: float = Field(1.0, gt=0)
    r0: float = Field(1.0, gt=0)
    steps: int = Field(3, ge=0)
    target: float | None = Field(None, gt=0)


class SolverSection(Section):
    strategy: Strategy = Strategy.STRUCTURED
    floor: float = Field(1e-10, gt=0)
    tol: float = Field(1e-12, gt=0)
    extended_precision: bool = False
    profile_scale: float = Field(1.0, gt=0)
    lie_order: int = Field(6, ge=2)
    max_y_degree: int = Field(2, ge=1)
    max_z_degree: int = Field(5, ge=2)
    fourier_cap: int | None = Field(16, ge=1)
    excise: bool = True


class SamplingSection(Section):
    parameters: int = Field(1000, ge=1)
    box_width: float = Field(1e-3, gt=0)
    tracked: int = Field(3, ge=1)
    grid: int = Field(16, ge=2)
    audit_samples: int = Field(8, ge=1)


class AcceptanceSection(Section):
    """Checks enabled for the exit status, and their tolerances."""
    verify: bool = True
    checks: list[Literal["residual", "stability", "reality", "symplectic", "convergence"]] = Field(
        default_factory=lambda: ["residual", "stability", "reality", "symplectic"]
    )
    residual_factor: float = Field(10.0, gt=0)
    residual_floor: float = Field(1e-12, gt=0)
    drift_tol: float = Field(1e-9, gt=0)
    symplectic_tol: float = Field(1e-8, gt=0)
    reality_tol: float = Field(1e-12, gt=0)
    ledger_ratio: float = Field(1.3, gt=1)
    ledger_floor: float = Field(1e-13, gt=0)
    horizon: float = Field(1e3, gt=0)
    dt: float = Field(1e-2, gt=0)


class ExperimentConfig(Section):
    """One experiment, from model selection to the acceptance checks; serialized into every artifact."""
    model: ModelSection = Field(default_factory=ModelSection)
    norm: NormSection = Field(default_factory=NormSection)
    schedule: ScheduleSection = Field(default_factory=ScheduleSection)
    solver: SolverSection = Field(default_factory=SolverSection)
    sampling: SamplingSection = Field(default_factory=SamplingSection)
    acceptance: AcceptanceSection = Field(default_factory=AcceptanceSection)
    output_dir: str = "runs/default"
    seed: int = 0

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


def config_hash(config: ExperimentConfig) -> str:
    """SHA-256 of the canonical (sorted-key) JSON dump."""
    return hashlib.sha256(config.canonical_json().encode("utf-8")).hexdigest()


def read_config_data(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"Configuration file {path} does not exist")
    match path.suffix.lower():
        case ".toml":
            with open(path, "rb") as f:
                return tomllib.load(f)
        case ".json":
            return json.loads(path.read_text())
        case _:
            raise ConfigurationError(f"Unsupported configuration format: {path.suffix}")


def _merge(base: dict, overrides: dict) -> dict:
    out = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """
    Load and validate an experiment configuration.

    Args:
        path: JSON or TOML file; ``None`` starts from the defaults.
        overrides: Nested keys replacing the file's values (``None`` values are ignored).

    Raises:
        pydantic.ValidationError: if the merged configuration is invalid.
        ConfigurationError: if the file is missing or has an unknown format.
    """
    data = read_config_data(path) if path is not None else {}
    overrides = {section: {k: v for k, v in values.items() if v is not None} if isinstance(values, dict) else values
                 for section, values in (overrides or {}).items() if values is not None}
    data = _merge(data, overrides)
    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        logger.error(f"Invalid configuration{f' in {path}' if path else ''}: {e.error_count()} errors")
        raise
    logger.debug(f"Configuration {config_hash(config)[:12]} loaded from {path or 'defaults'}")
    return config
