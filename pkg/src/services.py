from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any

import numpy as np

from src.config import CostConfig, RunConfig
from src.control import (
    CostSpec,
    OptimizeReport,
    QaoaSchedule,
    optimize_protocol,
    optimize_qaoa,
    total_cost,
)
from src.db import ProtocolStore, fingerprint
from src.dynamics import PiecewiseControl, Protocol, TimeGrid
from src.errors import ConfigError, DomainError, OutputError
from src.operators import HamiltonianPair, IsingModel, build_ising
from src.pmp import PmpDiagnostics, SingularBand, diagnose
from src.records import CostBreakdown, ProtocolRecord

logger = logging.getLogger(__name__)

QAOA = "qaoa"


def load_couplings(path: Path) -> np.ndarray:
    """J from JSON (``{"couplings": [[...]]}`` or a bare nested list) or a loadtxt-readable table."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise OutputError(f"cannot read couplings file {path}: {e}") from e

    if path.suffix.lower() == ".json":
        try:
            data = json.loads(text)
        except ValueError as e:
            raise ConfigError(f"couplings file {path} is not valid JSON: {e}") from e
        if isinstance(data, dict):
            data = data.get("couplings")
        try:
            couplings = np.array(data, dtype=float)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"couplings in {path} are not a numeric matrix") from e
    else:
        delimiter = "," if path.suffix.lower() == ".csv" else None
        try:
            couplings = np.loadtxt(path, dtype=float, delimiter=delimiter, ndmin=2)
        except ValueError as e:
            raise ConfigError(f"couplings file {path} is malformed: {e}") from e

    if couplings.ndim != 2 or couplings.shape[0] != couplings.shape[1]:
        raise ConfigError(f"couplings in {path} must form a square matrix, got shape {couplings.shape}")
    return couplings


def resolve_model(config: RunConfig) -> tuple[IsingModel, HamiltonianPair]:
    source = config.model
    if source.couplings_file is not None:
        couplings = load_couplings(source.couplings_file)
        model = IsingModel(couplings.shape[0], couplings, max_qubits=config.max_qubits)
    else:
        rng = np.random.default_rng(source.seed)
        model = IsingModel.random(source.n_qubits, rng, max_qubits=config.max_qubits)
    logger.info("model: %d qubits (dimension %d)", model.n_qubits, model.dim)
    return model, build_ising(model)


def time_grid(config: RunConfig) -> TimeGrid:
    return TimeGrid(config.horizon, config.n_steps)


def cost_spec(cost: CostConfig) -> CostSpec:
    return CostSpec(zeta=cost.zeta, norm=cost.norm_kind())


def protocol_key(model: IsingModel, config: RunConfig, cost: CostConfig | None) -> str:
    payload: dict[str, Any] = {
        "couplings": model.couplings.tolist(),
        "horizon": config.horizon,
        "n_steps": config.n_steps,
        "optimizer": config.optimizer.model_dump(exclude={"n_jobs"}),
    }
    if cost is None:
        payload["qaoa_bangs"] = config.qaoa_bangs
    else:
        payload["cost"] = cost.model_dump()
    return fingerprint(payload)


def protocol_document(report: OptimizeReport) -> dict[str, Any]:
    control = report.protocol
    document: dict[str, Any] = {
        "cost_terminal": report.cost_terminal,
        "cost_regularizer": report.cost_regularizer,
        "zeta": report.zeta,
        "iterations": report.iterations,
        "converged": report.converged,
    }
    if isinstance(control, QaoaSchedule):
        document.update(
            kind=QAOA,
            durations=control.durations.tolist(),
            leading_value=control.leading_value,
            horizon=control.horizon,
        )
    else:
        document.update(kind="protocol", values=control.values.tolist(), horizon=control.horizon)
    return document


def control_from_document(document: dict[str, Any], grid: TimeGrid) -> PiecewiseControl:
    try:
        if document["kind"] == QAOA:
            return QaoaSchedule(
                np.array(document["durations"]), int(document["leading_value"]), float(document["horizon"])
            )
        return Protocol(grid, np.array(document["values"]))
    except (KeyError, TypeError) as e:
        raise DomainError(f"stored protocol document is incomplete: {e}") from e


def optimize_approach(
    ham: HamiltonianPair, config: RunConfig, name: str, cost: CostConfig | None
) -> OptimizeReport:
    grid = time_grid(config)
    if cost is None:
        logger.info("optimizing %s baseline with %d bangs", name, config.qaoa_bangs)
        return optimize_qaoa(ham, grid, config.qaoa_bangs, options=config.optimizer)
    logger.info("optimizing '%s' (zeta=%g, %s)", name, cost.zeta, cost.norm_kind().label)
    return optimize_protocol(ham, cost_spec(cost), grid, options=config.optimizer)


def load_or_optimize(
    store: ProtocolStore,
    model: IsingModel,
    ham: HamiltonianPair,
    config: RunConfig,
    include_qaoa: bool = True,
) -> dict[str, PiecewiseControl]:
    """Protocols for every configured approach (plus the QAOA baseline), reusing stored ones."""
    grid = time_grid(config)
    approaches: dict[str, CostConfig | None] = dict(config.approaches)
    if include_qaoa:
        approaches[QAOA] = None

    controls: dict[str, PiecewiseControl] = {}
    for name, cost in approaches.items():
        key = protocol_key(model, config, cost)
        cached = store.get(key)
        if cached is not None:
            logger.info("reusing stored protocol for '%s'", name)
            controls[name] = control_from_document(cached, grid)
            continue
        report = optimize_approach(ham, config, name, cost)
        store.put(name, key, protocol_document(report))
        controls[name] = report.protocol
    return controls


def protocol_record(
    ham: HamiltonianPair,
    protocol: Protocol,
    spec: CostSpec,
    report: OptimizeReport | None = None,
    band: SingularBand | None = None,
) -> tuple[ProtocolRecord, PmpDiagnostics]:
    diagnostics = diagnose(ham, protocol, spec, band=band)
    if report is not None:
        terminal, regularizer = report.cost_terminal, report.cost_regularizer
    else:
        terminal, regularizer = total_cost(ham, protocol, spec)
    record = ProtocolRecord(
        horizon=protocol.grid.horizon,
        n_steps=protocol.grid.n_steps,
        u=protocol.values.tolist(),
        mu=diagnostics.mu_step.tolist(),
        control_hamiltonian=diagnostics.control_hamiltonian[:-1].tolist(),
        case_labels=[label.value for label in diagnostics.case_labels],
        cost=CostBreakdown(
            terminal=terminal,
            regularizer=regularizer,
            zeta=spec.zeta,
            total=terminal + spec.zeta * regularizer,
        ),
    )
    return record, diagnostics
