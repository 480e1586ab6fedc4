from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from src.config import RunConfig
from src.dynamics import Protocol, TimeGrid
from src.operators import is_strictly_convex
from src.pmp import PmpDiagnostics, diagnose
from src.records import read_control_values
from src.services import cost_spec, resolve_model

logger = logging.getLogger(__name__)

HAMILTONIAN_RTOL = 1e-3


@dataclass(frozen=True)
class PmpCheckOutcome:
    diagnostics: PmpDiagnostics
    zeta: float
    strictly_convex: bool
    hamiltonian_tolerance: float

    @property
    def hamiltonian_constant(self) -> bool:
        return self.diagnostics.hamiltonian_spread <= self.hamiltonian_tolerance

    @property
    def passed(self) -> bool:
        return self.diagnostics.violated_steps == 0 and self.hamiltonian_constant


def cmd_pmp_check(config: RunConfig, protocol_file: Path) -> PmpCheckOutcome:
    """Recompute trajectory, co-state, μ and 𝕳 for a stored protocol and classify every step."""
    values = read_control_values(Path(protocol_file))
    if values.size != config.n_steps:
        logger.info("protocol has %d steps (config says %d); using its own grid", values.size, config.n_steps)
    _, ham = resolve_model(config)
    spec = cost_spec(config.cost)

    diagnostics = diagnose(ham, Protocol(TimeGrid(config.horizon, values.size), values), spec)
    mean = float(np.mean(diagnostics.control_hamiltonian))
    return PmpCheckOutcome(
        diagnostics=diagnostics,
        zeta=spec.zeta,
        strictly_convex=is_strictly_convex(ham, spec.norm),
        hamiltonian_tolerance=HAMILTONIAN_RTOL * (1.0 + abs(mean)),
    )
