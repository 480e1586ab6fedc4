"""Run configuration.

A run is described by one JSON document validated into ``RunConfig``. The
resolved document is written next to every artifact, so a run can always be
repeated from its own output directory.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeFloat,
    PositiveFloat,
    PositiveInt,
    ValidationError,
    field_validator,
    model_validator,
)

from src.errors import ConfigError
from src.operators import DEFAULT_MAX_QUBITS, NormKind, NormType


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelConfig(_Section):
    """Either an explicit coupling file or a random model of ``n_qubits``."""

    couplings_file: Path | None = None
    n_qubits: PositiveInt | None = None
    seed: int = 0

    @model_validator(mode="after")
    def _one_source(self):
        if (self.couplings_file is None) == (self.n_qubits is None):
            raise ValueError("set exactly one of 'couplings_file' or 'n_qubits'")
        return self


class CostConfig(_Section):
    zeta: NonNegativeFloat = 0.0
    norm: Literal["spectral", "frobenius"] = "spectral"
    phase_reduced: bool = False

    def norm_kind(self) -> NormKind:
        return NormKind(NormType(self.norm), self.phase_reduced)


class OptimizerOptions(_Section):
    max_iters: PositiveInt = 5000
    tol: PositiveFloat = 1e-6
    armijo: PositiveFloat = 1e-4
    shrink: float = Field(default=0.5, gt=0.0, lt=1.0)
    max_backtracks: PositiveInt = 50
    restarts: int = Field(default=5, ge=0)
    seed: int = 0
    n_jobs: int = 1


class EnsembleConfig(_Section):
    n_signals: PositiveInt = 20
    n_sections: PositiveInt = 20
    seed: int | None = None


class SweepConfig(_Section):
    n_models: PositiveInt = 250
    n_qubits: PositiveInt = 6
    max_iters: PositiveInt = 1500
    restarts: int = Field(default=3, ge=0)


def _default_eps_levels() -> list[float]:
    return [float(x) for x in np.linspace(0.0, 0.2, 21)]


def _default_approaches() -> dict[str, CostConfig]:
    return {
        "nominal": CostConfig(zeta=0.0, norm="spectral"),
        "spectral": CostConfig(zeta=0.1, norm="spectral"),
        "frobenius": CostConfig(zeta=0.1, norm="frobenius"),
    }


class RunConfig(_Section):
    model: ModelConfig
    horizon: PositiveFloat
    n_steps: PositiveInt = 200
    cost: CostConfig = CostConfig()
    optimizer: OptimizerOptions = OptimizerOptions()
    qaoa_bangs: int = Field(default=8, ge=2)
    ensemble: EnsembleConfig = EnsembleConfig()
    eps_levels: list[NonNegativeFloat] = Field(default_factory=_default_eps_levels)
    approaches: dict[str, CostConfig] = Field(default_factory=_default_approaches)
    normalize_objective: bool = True
    refinement_check: bool = True
    sweep: SweepConfig = SweepConfig()
    seed: int = 0
    max_qubits: PositiveInt = DEFAULT_MAX_QUBITS
    out_dir: Path = Path("runs")

    @field_validator("eps_levels")
    @classmethod
    def _levels_sorted(cls, levels: list[float]) -> list[float]:
        if not levels:
            raise ValueError("eps_levels must not be empty")
        if any(b < a for a, b in zip(levels, levels[1:])):
            raise ValueError("eps_levels must be non-decreasing")
        return levels

    @field_validator("approaches")
    @classmethod
    def _no_reserved_names(cls, approaches: dict[str, CostConfig]) -> dict[str, CostConfig]:
        if "qaoa" in approaches:
            raise ValueError("'qaoa' is reserved for the bang-bang baseline")
        return approaches

    @model_validator(mode="after")
    def _fits_budget(self):
        for n in (self.model.n_qubits, self.sweep.n_qubits):
            if n is not None and n > self.max_qubits:
                raise ValueError(f"{n} qubits exceed max_qubits={self.max_qubits}")
        return self

    @property
    def ensemble_seed(self) -> int:
        return self.seed if self.ensemble.seed is None else self.ensemble.seed

    def with_overrides(
        self, seed: int | None = None, out_dir: Path | None = None, jobs: int | None = None
    ) -> "RunConfig":
        update = {}
        optimizer = {}
        if seed is not None:
            update["seed"] = seed
            optimizer["seed"] = seed
        if jobs is not None:
            optimizer["n_jobs"] = jobs
        if optimizer:
            update["optimizer"] = self.optimizer.model_copy(update=optimizer)
        if out_dir is not None:
            update["out_dir"] = Path(out_dir)
        return self.model_copy(update=update) if update else self


def _format_validation_error(err: ValidationError, source: str) -> str:
    lines = [f"invalid configuration in {source}:"]
    for item in err.errors():
        where = ".".join(str(p) for p in item.get("loc", ())) or "<root>"
        lines.append(f"  {where}: {item.get('msg')}")
    return "\n".join(lines)


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        return RunConfig.model_validate_json(text)
    except ValidationError as e:
        raise ConfigError(_format_validation_error(e, str(path))) from e


def dump_config(config: RunConfig) -> str:
    return json.dumps(json.loads(config.model_dump_json()), indent=2, sort_keys=True)
