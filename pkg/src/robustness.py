"""Ensemble robustness experiments under coherent control errors."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from src.config import OptimizerOptions
from src.control import CostSpec, optimize_protocol
from src.dynamics import (
    ErrorSignal,
    PiecewiseControl,
    TimeGrid,
    fidelity_lower_bound,
    lipschitz_bound,
    propagate,
    spectra,
)
from src.errors import AnnealError, DomainError, NumericalError
from src.operators import (
    HamiltonianPair,
    IsingModel,
    NormKind,
    build_ising,
    ground_energy,
    ground_state_of_B,
)

logger = logging.getLogger(__name__)

BOUND_SLACK = 1e-12

CURVE_COLUMNS = ["eps_hat", "approach", "worst_fidelity", "mean_objective"]
BOUND_COLUMNS = ["eps_hat", "approach", "lipschitz_L", "fidelity_lower_bound"]


@dataclass(frozen=True)
class ErrorEnsemble:
    """Unit-scaled error signals (amplitudes in [-1, 1]); rescaled per noise level."""

    signals: tuple[ErrorSignal, ...]
    seed: int

    def __len__(self) -> int:
        return len(self.signals)

    def scaled(self, eps_hat: float) -> list[ErrorSignal]:
        return [signal.scaled(eps_hat) for signal in self.signals]


def generate_ensemble(n_signals: int = 20, n_sections: int = 20, seed: int = 0) -> ErrorEnsemble:
    if n_signals < 1 or n_sections < 1:
        raise DomainError("an ensemble needs at least one signal with one section")
    rng = np.random.default_rng(seed)
    amplitudes = rng.uniform(-1.0, 1.0, size=(n_signals, n_sections))
    return ErrorEnsemble(tuple(ErrorSignal(row, 1.0) for row in amplitudes), seed)


@dataclass(frozen=True)
class EnsembleEvaluation:
    """Per-signal fidelity to the noiseless final state and noisy terminal objective."""

    eps_hat: float
    fidelities: np.ndarray
    objectives: np.ndarray


def evaluate_ensemble(
    ham: HamiltonianPair,
    protocol: PiecewiseControl,
    ensemble: ErrorEnsemble,
    eps_hat: float,
    initial: np.ndarray | None = None,
) -> EnsembleEvaluation:
    initial = ground_state_of_B(ham) if initial is None else initial
    _, values, _ = protocol.segments(None)
    cache = spectra(ham, values)
    nominal = propagate(ham, protocol, initial, cache=cache).final_state
    fidelities = np.empty(len(ensemble))
    objectives = np.empty(len(ensemble))
    for i, signal in enumerate(ensemble.scaled(eps_hat)):
        noisy = propagate(ham, protocol, initial, error=signal, cache=cache)
        fidelities[i] = min(1.0, abs(np.vdot(noisy.final_state, nominal)))
        objectives[i] = noisy.final_cost
    return EnsembleEvaluation(eps_hat, fidelities, objectives)


def worst_fidelity(
    ham: HamiltonianPair,
    protocol: PiecewiseControl,
    ensemble: ErrorEnsemble,
    eps_hat: float,
) -> float:
    return float(np.min(evaluate_ensemble(ham, protocol, ensemble, eps_hat).fidelities))


def mean_objective(
    ham: HamiltonianPair,
    protocol: PiecewiseControl,
    ensemble: ErrorEnsemble,
    eps_hat: float,
) -> float:
    return float(np.mean(evaluate_ensemble(ham, protocol, ensemble, eps_hat).objectives))


@dataclass(frozen=True)
class RobustnessCurve:
    eps_levels: np.ndarray
    table: pd.DataFrame = field(repr=False)

    @property
    def approaches(self) -> list[str]:
        return list(dict.fromkeys(self.table["approach"]))

    def curves_frame(self) -> pd.DataFrame:
        return self.table[CURVE_COLUMNS].reset_index(drop=True)

    def bounds_frame(self) -> pd.DataFrame:
        return self.table[BOUND_COLUMNS].reset_index(drop=True)

    def worst_fidelity(self, approach: str) -> np.ndarray:
        return self.table.loc[self.table["approach"] == approach, "worst_fidelity"].to_numpy()

    def mean_objective(self, approach: str) -> np.ndarray:
        return self.table.loc[self.table["approach"] == approach, "mean_objective"].to_numpy()

    def nonmonotone_approaches(self) -> list[str]:
        return [
            name for name in self.approaches
            if np.any(np.diff(self.worst_fidelity(name)) > 1e-12)
        ]


def bound_violations(fidelities: np.ndarray, lipschitz: float, eps_hat: float) -> int:
    """Runs whose fidelity falls below 1 - L²ε̂²/2."""
    return int(np.sum(fidelities < fidelity_lower_bound(lipschitz, eps_hat) - BOUND_SLACK))


def _curve_rows(ham, name, protocol, ensemble, eps_levels, kind):
    lipschitz = lipschitz_bound(ham, protocol, kind)
    rows = []
    violations = 0
    for eps_hat in eps_levels:
        evaluation = evaluate_ensemble(ham, protocol, ensemble, float(eps_hat))
        lower = fidelity_lower_bound(lipschitz, float(eps_hat))
        violations += bound_violations(evaluation.fidelities, lipschitz, float(eps_hat))
        rows.append(
            {
                "eps_hat": float(eps_hat),
                "approach": name,
                "worst_fidelity": float(np.min(evaluation.fidelities)),
                "mean_objective": float(np.mean(evaluation.objectives)),
                "lipschitz_L": lipschitz,
                "fidelity_lower_bound": lower,
            }
        )
    return rows, violations


def robustness_curve(
    ham: HamiltonianPair,
    protocols: Mapping[str, PiecewiseControl],
    ensemble: ErrorEnsemble,
    eps_levels: Iterable[float],
    kind: NormKind = NormKind(),
    n_jobs: int = 1,
) -> RobustnessCurve:
    """Worst fidelity and mean objective per approach and noise level, same ensemble for all."""
    eps_levels = np.asarray(list(eps_levels), dtype=float)
    results = Parallel(n_jobs=n_jobs)(
        delayed(_curve_rows)(ham, name, protocol, ensemble, eps_levels, kind)
        for name, protocol in protocols.items()
    )
    rows = [row for chunk, _ in results for row in chunk]
    violations = sum(v for _, v in results)
    if violations:
        raise NumericalError(f"{violations} ensemble runs fall below the Lipschitz fidelity bound")
    curve = RobustnessCurve(eps_levels, pd.DataFrame(rows))
    for name in curve.nonmonotone_approaches():
        logger.warning("worst fidelity of '%s' is not monotone in eps_hat on this ensemble", name)
    return curve


@dataclass(frozen=True)
class ModelOutcome:
    """One sweep model: per-approach worst fidelity and normalized mean objective per level."""

    index: int
    worst_fidelity: dict[str, list[float]] | None = None
    normalized_objective: dict[str, list[float]] | None = None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass(frozen=True)
class EnsembleSweepResult:
    n_models: int
    n_failed: int
    eps_levels: np.ndarray
    table: pd.DataFrame = field(repr=False)

    def averaged(self, approach: str, column: str) -> np.ndarray:
        return self.table.loc[self.table["approach"] == approach, column].to_numpy()


def model_seed(seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, index])


def run_sweep_model(
    index: int,
    n_qubits: int,
    specs: Mapping[str, CostSpec],
    ensemble: ErrorEnsemble,
    eps_levels: np.ndarray,
    seed: int,
    grid: TimeGrid,
    options: OptimizerOptions,
    normalize: bool = True,
) -> ModelOutcome:
    """Optimize and evaluate a single random model; failures are captured, not raised."""
    sequence = model_seed(seed, index)
    model_rng, optimizer_rng = (np.random.default_rng(s) for s in sequence.spawn(2))
    try:
        ham = build_ising(IsingModel.random(n_qubits, model_rng))
        scale = abs(ground_energy(ham)) if normalize else 1.0
        if scale == 0.0:
            raise DomainError("ground energy is zero; cannot normalize the objective")
        opts = options.model_copy(update={"seed": int(optimizer_rng.integers(2**63)), "n_jobs": 1})
        fidelity_table: dict[str, list[float]] = {}
        objective_table: dict[str, list[float]] = {}
        for name, spec in specs.items():
            report = optimize_protocol(ham, spec, grid, options=opts)
            lipschitz = lipschitz_bound(ham, report.protocol, NormKind())
            fidelity_table[name] = []
            objective_table[name] = []
            for eps_hat in eps_levels:
                evaluation = evaluate_ensemble(ham, report.protocol, ensemble, float(eps_hat))
                if bound_violations(evaluation.fidelities, lipschitz, float(eps_hat)):
                    raise NumericalError(f"'{name}' falls below the fidelity bound at eps_hat={eps_hat:g}")
                fidelity_table[name].append(float(np.min(evaluation.fidelities)))
                objective_table[name].append(float(np.mean(evaluation.objectives)) / scale)
    except AnnealError as e:
        return ModelOutcome(index, error=f"{type(e).__name__}: {e}")
    return ModelOutcome(index, fidelity_table, objective_table)


def aggregate_outcomes(
    outcomes: Iterable[ModelOutcome], eps_levels: np.ndarray
) -> EnsembleSweepResult:
    """Average completed models per approach and level; independent of outcome order."""
    ordered = sorted(outcomes, key=lambda o: o.index)
    done = [o for o in ordered if not o.failed]
    failed = len(ordered) - len(done)
    rows = []
    if done:
        for name in done[0].worst_fidelity:
            fid = np.array([o.worst_fidelity[name] for o in done])
            obj = np.array([o.normalized_objective[name] for o in done])
            for j, eps_hat in enumerate(eps_levels):
                rows.append(
                    {
                        "eps_hat": float(eps_hat),
                        "approach": name,
                        "mean_worst_fidelity": float(np.mean(fid[:, j])),
                        "mean_normalized_objective": float(np.mean(obj[:, j])),
                        "n_models": len(done),
                        "n_failed": failed,
                    }
                )
    return EnsembleSweepResult(len(done), failed, np.asarray(eps_levels, dtype=float), pd.DataFrame(rows))


def random_ising_sweep(
    n_models: int,
    n_qubits: int,
    specs: Mapping[str, CostSpec],
    ensemble: ErrorEnsemble,
    eps_levels: Iterable[float],
    seed: int,
    grid: TimeGrid,
    options: OptimizerOptions | None = None,
    n_jobs: int = 1,
    completed: Iterable[ModelOutcome] = (),
    on_outcome: Callable[[ModelOutcome], None] | None = None,
    normalize: bool = True,
) -> EnsembleSweepResult:
    """Sweep random models; ``completed`` outcomes are reused and only missing indices run."""
    options = options or OptimizerOptions()
    eps_levels = np.asarray(list(eps_levels), dtype=float)
    outcomes = {o.index: o for o in completed if o.index < n_models}
    pending = [i for i in range(n_models) if i not in outcomes]
    if outcomes:
        logger.info("resuming sweep: %d of %d models already done", len(outcomes), n_models)

    runs = Parallel(n_jobs=n_jobs, return_as="generator")(
        delayed(run_sweep_model)(i, n_qubits, specs, ensemble, eps_levels, seed, grid, options, normalize)
        for i in pending
    )
    for outcome in runs:
        if outcome.failed:
            logger.warning("sweep model %d failed: %s", outcome.index, outcome.error)
        outcomes[outcome.index] = outcome
        if on_outcome is not None:
            on_outcome(outcome)

    result = aggregate_outcomes(outcomes.values(), eps_levels)
    logger.info("sweep finished: %d models averaged, %d failed", result.n_models, result.n_failed)
    return result
