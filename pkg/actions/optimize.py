from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

from src.config import RunConfig
from src.control import REFINEMENT_TOL, OptimizeReport, QaoaSchedule, refinement_change
from src.db import ProtocolStore
from src.dynamics import lipschitz_bound
from src.operators import ground_energy
from src.pmp import SingularBand, singular_band
from src.records import (
    CostBreakdown,
    RunReport,
    schedule_frame,
    write_csv,
    write_json,
    write_resolved_config,
)
from src.services import (
    QAOA,
    cost_spec,
    optimize_approach,
    protocol_document,
    protocol_key,
    protocol_record,
    resolve_model,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizeOutcome:
    report: RunReport
    band: SingularBand
    files: tuple[Path, ...]


def _approach_label(config: RunConfig, qaoa: bool) -> str:
    """Configured approach name for this cost, if any."""
    if qaoa:
        return QAOA
    for name, cost in config.approaches.items():
        if cost == config.cost:
            return name
    return f"zeta={config.cost.zeta:g} {config.cost.norm_kind().label}"


def _run_report(
    config: RunConfig, label: str, result: OptimizeReport, band: SingularBand, singular_fraction: float, extra: dict
) -> RunReport:
    return RunReport(
        seed=config.seed,
        horizon=config.horizon,
        n_steps=config.n_steps,
        approach=label,
        cost=CostBreakdown(
            terminal=result.cost_terminal,
            regularizer=result.cost_regularizer,
            zeta=result.zeta,
            total=result.cost_total,
        ),
        iterations=result.iterations,
        converged=result.converged,
        gradient_norm=result.gradient_norm_final,
        failed_starts=result.failed_starts,
        m_lb=band.m_lb,
        m_ub=band.m_ub,
        zeta_threshold=band.zeta_threshold if math.isfinite(band.zeta_threshold) else None,
        singular_fraction=singular_fraction,
        created_at=datetime.now().isoformat(timespec="seconds"),
        extra=extra,
    )


def cmd_optimize(config: RunConfig, qaoa: bool = False) -> OptimizeOutcome:
    """Optimize one protocol and write protocol.csv (or schedule.csv), report.json and the resolved config."""
    out_dir = Path(config.out_dir)
    model, ham = resolve_model(config)
    spec = cost_spec(config.cost)
    band = singular_band(ham, spec.norm, spec.zeta)
    label = _approach_label(config, qaoa)

    cost = None if qaoa else config.cost
    result = optimize_approach(ham, config, label, cost)

    store = ProtocolStore(out_dir)
    try:
        store.put(label, protocol_key(model, config, cost), protocol_document(result))
    finally:
        store.close()

    extra = {
        "ground_energy": ground_energy(ham),
        "lipschitz_L": lipschitz_bound(ham, result.protocol, spec.norm),
    }
    if isinstance(result.protocol, QaoaSchedule):
        table = write_csv(
            schedule_frame(result.protocol.durations, result.protocol.values),
            out_dir / "schedule.csv",
            config,
        )
        singular_fraction = 0.0
    else:
        record, diagnostics = protocol_record(ham, result.protocol, spec, result, band=band)
        table = write_csv(record.to_frame(), out_dir / "protocol.csv", config)
        singular_fraction = diagnostics.singular_fraction
        extra["hamiltonian_spread"] = diagnostics.hamiltonian_spread
        extra["violated_steps"] = float(diagnostics.violated_steps)
        if config.refinement_check:
            change = refinement_change(ham, spec, result, config.optimizer)
            if change > REFINEMENT_TOL:
                logger.warning(
                    "doubling the grid lowers the cost by %.3e; n_steps=%d may be too coarse", change, config.n_steps
                )
            extra["refinement_cost_change"] = change

    report = _run_report(config, label, result, band, singular_fraction, extra)
    files = (
        table,
        write_json(report, out_dir / "report.json"),
        write_resolved_config(config, out_dir),
    )
    return OptimizeOutcome(report, band, files)
