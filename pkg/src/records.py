"""Serialized run artifacts: record schemas and the CSV writer/reader."""

from __future__ import annotations

import json
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, field_validator, model_validator

from src import __version__
from src.config import RunConfig, dump_config
from src.errors import DomainError, OutputError

FLOAT_FORMAT = "%.17g"

PROTOCOL_COLUMNS = ["step", "t", "u", "mu", "control_hamiltonian", "case_label"]
SCHEDULE_COLUMNS = ["segment", "start", "duration", "u"]


class CostBreakdown(BaseModel):
    terminal: float
    regularizer: float
    zeta: float
    total: float


class ProtocolRecord(BaseModel):
    """One optimized protocol together with its per-step maximum-principle diagnostics."""

    horizon: float
    n_steps: int
    u: List[float]
    mu: List[float]
    control_hamiltonian: List[float]
    case_labels: List[str]
    cost: CostBreakdown

    @field_validator("u", "mu", "control_hamiltonian")
    @classmethod
    def _finite(cls, values: List[float]) -> List[float]:
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite")
        return values

    @model_validator(mode="after")
    def _lengths_match(self):
        for name in ("u", "mu", "control_hamiltonian", "case_labels"):
            if len(getattr(self, name)) != self.n_steps:
                raise ValueError(f"'{name}' needs {self.n_steps} entries")
        return self

    def to_frame(self) -> pd.DataFrame:
        dt = self.horizon / self.n_steps
        return pd.DataFrame(
            {
                "step": np.arange(self.n_steps),
                "t": np.arange(self.n_steps) * dt,
                "u": self.u,
                "mu": self.mu,
                "control_hamiltonian": self.control_hamiltonian,
                "case_label": self.case_labels,
            },
            columns=PROTOCOL_COLUMNS,
        )


class ModelRecord(BaseModel):
    """One line of the sweep journal."""

    index: int
    fingerprint: str
    worst_fidelity: Optional[dict[str, List[float]]] = None
    normalized_objective: Optional[dict[str, List[float]]] = None
    error: Optional[str] = None


class RunReport(BaseModel):
    version: str = __version__
    seed: int
    horizon: float
    n_steps: int
    approach: str
    cost: CostBreakdown
    iterations: int
    converged: bool
    gradient_norm: float
    failed_starts: int
    m_lb: float
    m_ub: float
    zeta_threshold: Optional[float] = None
    singular_fraction: float
    created_at: str
    extra: dict[str, float] = Field(default_factory=dict)


def metadata_lines(config: RunConfig) -> list[str]:
    # run location and worker count are not part of a result
    described = config.model_dump(mode="json", exclude={"out_dir": True, "optimizer": {"n_jobs"}})
    compact = json.dumps(described, sort_keys=True, separators=(",", ":"))
    return [
        f"robust-anneal {__version__}",
        f"seed={config.seed}",
        f"grid horizon={config.horizon!r} n_steps={config.n_steps}",
        f"config={compact}",
    ]


def write_csv(frame: pd.DataFrame, path: Path, config: RunConfig) -> Path:
    """Write ``frame`` behind ``# ``-prefixed metadata lines, floats at 17 significant digits."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as handle:
            for line in metadata_lines(config):
                handle.write(f"# {line}\n")
            frame.to_csv(handle, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e}") from e
    return path


def read_csv(path: Path) -> pd.DataFrame:
    try:
        return pd.read_csv(path, comment="#", float_precision="round_trip")
    except FileNotFoundError as e:
        raise OutputError(f"no such file: {path}") from e
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DomainError(f"malformed table {path}: {e}") from e


def write_json(payload: BaseModel | dict, path: Path) -> Path:
    path = Path(path)
    if isinstance(payload, BaseModel):
        payload = json.loads(payload.model_dump_json())
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e}") from e
    return path


def read_control_values(path: Path) -> np.ndarray:
    """u values from a protocol.csv, or from a raw vector (one value per line or whitespace-separated)."""
    path = Path(path)
    if not path.exists():
        raise OutputError(f"no such file: {path}")
    if path.suffix.lower() == ".csv":
        frame = read_csv(path)
        if "u" not in frame.columns:
            raise DomainError(f"{path} has no 'u' column")
        values = frame["u"].to_numpy(dtype=float)
    else:
        try:
            values = np.loadtxt(path, dtype=float, ndmin=1).ravel()
        except ValueError as e:
            raise DomainError(f"malformed control vector {path}: {e}") from e
    if values.size == 0 or not np.all(np.isfinite(values)):
        raise DomainError(f"{path} holds no finite control values")
    return values


def write_resolved_config(config: RunConfig, out_dir: Path) -> Path:
    path = Path(out_dir) / "config.resolved.json"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dump_config(config) + "\n", encoding="utf-8")
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e}") from e
    return path


def schedule_frame(durations: np.ndarray, values: np.ndarray) -> pd.DataFrame:
    durations = np.asarray(durations, dtype=float)
    starts = np.concatenate(([0.0], np.cumsum(durations)[:-1]))
    return pd.DataFrame(
        {
            "segment": np.arange(durations.size),
            "start": starts,
            "duration": durations,
            "u": np.asarray(values, dtype=float),
        },
        columns=SCHEDULE_COLUMNS,
    )
