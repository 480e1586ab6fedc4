from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

from tqdm import tqdm

from src.config import RunConfig
from src.db import SweepJournal, fingerprint
from src.records import ModelRecord, write_csv, write_resolved_config
from src.robustness import EnsembleSweepResult, ModelOutcome, generate_ensemble, random_ising_sweep
from src.services import cost_spec, time_grid

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SweepOutcome:
    result: EnsembleSweepResult
    resumed: int
    files: tuple[Path, ...]


def sweep_key(config: RunConfig) -> str:
    return fingerprint(config.model_dump(mode="json", exclude={"out_dir": True, "optimizer": {"n_jobs"}}))


def _to_outcome(record: ModelRecord) -> ModelOutcome:
    return ModelOutcome(record.index, record.worst_fidelity, record.normalized_objective, record.error)


def _to_record(outcome: ModelOutcome, key: str) -> ModelRecord:
    return ModelRecord(
        index=outcome.index,
        fingerprint=key,
        worst_fidelity=outcome.worst_fidelity,
        normalized_objective=outcome.normalized_objective,
        error=outcome.error,
    )


def cmd_sweep(config: RunConfig, resume: bool = False, restart: bool = False) -> SweepOutcome:
    """Averaged robustness over random Ising models; finished models are journaled for --resume."""
    out_dir = Path(config.out_dir)
    key = sweep_key(config)
    journal = SweepJournal(out_dir, key)

    if restart or (not resume and journal.exists()):
        journal.restart()
    completed = [_to_outcome(r) for r in journal.load()] if resume else []

    sweep = config.sweep
    options = config.optimizer.model_copy(
        update={"max_iters": sweep.max_iters, "restarts": sweep.restarts}
    )
    specs = {name: cost_spec(cost) for name, cost in config.approaches.items()}
    ensemble = generate_ensemble(
        config.ensemble.n_signals, config.ensemble.n_sections, config.ensemble_seed
    )

    with tqdm(total=sweep.n_models, initial=len(completed), desc="models", disable=None) as bar:

        def record(outcome: ModelOutcome) -> None:
            journal.append(_to_record(outcome, key))
            bar.update(1)

        result = random_ising_sweep(
            n_models=sweep.n_models,
            n_qubits=sweep.n_qubits,
            specs=specs,
            ensemble=ensemble,
            eps_levels=config.eps_levels,
            seed=config.seed,
            grid=time_grid(config),
            options=options,
            n_jobs=config.optimizer.n_jobs,
            completed=completed,
            on_outcome=record,
            normalize=config.normalize_objective,
        )

    files = (
        write_csv(result.table, out_dir / "aggregate.csv", config),
        write_resolved_config(config, out_dir),
    )
    return SweepOutcome(result, len(completed), files)
