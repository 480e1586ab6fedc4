"""Nominal, robust and QAOA optimal-control problems.

Protocols are optimized by projected gradient descent with exact adjoint
gradients. The co-state follows the Schrödinger equation backwards from
``λ(T) = -C x(T)``; with that sign the terminal-cost sensitivity of a step is
``-2 Re <λ_{k+1}| ∂U_k |x_k>`` and its continuous-time limit is ``-μ(τ)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from joblib import Parallel, delayed

from src.config import OptimizerOptions
from src.dynamics import (
    ErrorSignal,
    PiecewiseControl,
    Protocol,
    Spectra,
    TimeGrid,
    Trajectory,
    lipschitz_bound,
    propagate,
    propagate_backward,
    spectra,
    split_at_sections,
)
from src.errors import DomainError, NumericalError, OptimizationError, ZeroHamiltonianError
from src.operators import (
    HamiltonianPair,
    NormKind,
    ground_state_of_B,
    hamiltonian_at,
    q_subgradient,
    q_value,
)

logger = logging.getLogger(__name__)

REFINEMENT_TOL = 1e-6


@dataclass(frozen=True)
class CostSpec:
    zeta: float = 0.0
    norm: NormKind = NormKind()

    def __post_init__(self):
        if not self.zeta >= 0.0:
            raise DomainError(f"zeta must be non-negative, got {self.zeta}")


@dataclass(frozen=True)
class AdjointTrajectory:
    costates: np.ndarray


@dataclass(frozen=True)
class QaoaSchedule:
    """Alternating bang-bang schedule; segment p applies u = leading_value XOR (p odd)."""

    durations: np.ndarray
    leading_value: int
    horizon: float

    def __post_init__(self):
        durations = np.array(self.durations, dtype=float, copy=True)
        if durations.ndim != 1 or durations.size == 0:
            raise DomainError("a schedule needs at least one segment")
        if self.leading_value not in (0, 1):
            raise DomainError(f"leading_value must be 0 or 1, got {self.leading_value}")
        if np.any(durations < 0.0) or not np.all(np.isfinite(durations)):
            raise DomainError("segment durations must be finite and non-negative")
        if abs(durations.sum() - self.horizon) > 1e-12 * max(1.0, self.horizon):
            raise DomainError(
                f"durations sum to {durations.sum():.15g}, expected horizon {self.horizon}"
            )
        durations.setflags(write=False)
        object.__setattr__(self, "durations", durations)

    @classmethod
    def uniform(cls, horizon: float, n_bangs: int, leading_value: int = 1) -> "QaoaSchedule":
        return cls(np.full(n_bangs, horizon / n_bangs), leading_value, horizon)

    @property
    def n_bangs(self) -> int:
        return self.durations.size

    @property
    def values(self) -> np.ndarray:
        parity = np.arange(self.n_bangs) % 2
        return np.where(parity == 0, self.leading_value, 1 - self.leading_value).astype(float)

    @property
    def switch_times(self) -> np.ndarray:
        return np.cumsum(self.durations)[:-1]

    def segments(self, error: ErrorSignal | None = None):
        return split_at_sections(self.durations, self.values, error, self.horizon)

    def to_protocol(self, grid: TimeGrid) -> Protocol:
        """Rasterize onto ``grid``; every switching time must fall on a grid node."""
        if abs(grid.horizon - self.horizon) > 1e-12 * max(1.0, self.horizon):
            raise DomainError("schedule and grid horizons differ")
        counts = self.durations / grid.dt
        rounded = np.rint(counts)
        if np.any(np.abs(counts - rounded) > 1e-9):
            raise DomainError("switching times are not aligned with the grid")
        return Protocol(grid, np.repeat(self.values, rounded.astype(int)))


@dataclass(frozen=True)
class OptimizeReport:
    protocol: PiecewiseControl
    cost_terminal: float
    cost_regularizer: float
    zeta: float
    iterations: int
    gradient_norm_final: float
    converged: bool
    history: tuple[float, ...] = field(default=(), repr=False)
    start_index: int = 0
    failed_starts: int = 0

    @property
    def cost_total(self) -> float:
        return self.cost_terminal + self.zeta * self.cost_regularizer


def _initial_state(ham: HamiltonianPair, initial: np.ndarray | None) -> np.ndarray:
    return ground_state_of_B(ham) if initial is None else initial


def _regularizer_slopes(ham: HamiltonianPair, values: np.ndarray, kind: NormKind) -> np.ndarray:
    """Midpoint of ∂q(u_k) for every step (0 where the Frobenius subdifferential is a ball)."""
    slopes = {}
    for u in np.unique(values):
        try:
            slopes[u] = q_subgradient(ham, float(u), kind).midpoint
        except ZeroHamiltonianError:
            slopes[u] = 0.0
    return np.array([slopes[u] for u in values])


def total_cost(
    ham: HamiltonianPair,
    protocol: PiecewiseControl,
    spec: CostSpec,
    initial: np.ndarray | None = None,
) -> tuple[float, float]:
    trajectory = propagate(ham, protocol, _initial_state(ham, initial))
    return trajectory.final_cost, lipschitz_bound(ham, protocol, spec.norm)


def backward_costate(
    ham: HamiltonianPair,
    protocol: PiecewiseControl,
    trajectory: Trajectory,
    cache: Spectra | None = None,
) -> AdjointTrajectory:
    terminal = -(ham.c @ trajectory.final_state)
    return AdjointTrajectory(propagate_backward(ham, protocol, terminal, cache=cache))


def _divided_differences(a: np.ndarray) -> np.ndarray:
    """Loewner matrix G_ij = (e^{a_i} - e^{a_j}) / (a_i - a_j), e^{a_i} on the diagonal."""
    delta = a[:, None] - a[None, :]
    small = np.abs(delta) < 1e-10
    safe = np.where(small, 1.0, delta)
    phi = np.where(small, 1.0 + 0.5 * delta, np.expm1(safe) / safe)
    return np.exp(a)[None, :] * phi


def terminal_gradient(
    ham: HamiltonianPair,
    protocol: Protocol,
    trajectory: Trajectory,
    adjoint: AdjointTrajectory,
    cache: Spectra,
) -> np.ndarray:
    dt = protocol.grid.dt
    index = cache.lookup(protocol.values)
    compressed: dict[int, np.ndarray] = {}
    loewner: dict[int, np.ndarray] = {}
    grad = np.empty(protocol.grid.n_steps)
    for k, i in enumerate(index):
        v = cache.eigvecs[i]
        if i not in compressed:
            # exact Fréchet derivative of exp(-i dt H) in the direction -i dt F
            compressed[i] = (-1j * dt) * (v.conj().T @ ham.f @ v)
            loewner[i] = _divided_differences(-1j * dt * cache.eigvals[i])
        x = v.conj().T @ trajectory.states[k]
        lam = v.conj().T @ adjoint.costates[k + 1]
        grad[k] = -2.0 * np.real(np.vdot(lam, (loewner[i] * compressed[i]) @ x))
    return grad


def gradient(
    ham: HamiltonianPair,
    protocol: Protocol,
    spec: CostSpec,
    initial: np.ndarray | None = None,
) -> np.ndarray:
    _, _, state = _protocol_objective(ham, protocol, spec, _initial_state(ham, initial))
    return _protocol_gradient(ham, protocol, spec, state)


def _protocol_objective(ham, protocol, spec, initial):
    cache = spectra(ham, protocol.values)
    trajectory = propagate(ham, protocol, initial, cache=cache)
    regularizer = lipschitz_bound(ham, protocol, spec.norm)
    total = trajectory.final_cost + spec.zeta * regularizer
    return total, regularizer, (trajectory, cache)


def _protocol_gradient(ham, protocol, spec, state):
    trajectory, cache = state
    adjoint = backward_costate(ham, protocol, trajectory, cache=cache)
    grad = terminal_gradient(ham, protocol, trajectory, adjoint, cache)
    if spec.zeta > 0.0:
        grad = grad + spec.zeta * protocol.grid.dt * _regularizer_slopes(
            ham, protocol.values, spec.norm
        )
    return grad


@dataclass
class _DescentResult:
    x: np.ndarray
    cost: float
    aux: object
    iterations: int
    gradient_norm: float
    converged: bool
    history: list[float]


def _projected_descent(
    objective: Callable[[np.ndarray], tuple[float, object]],
    grad_fn: Callable[[np.ndarray, object], np.ndarray],
    project: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    options: OptimizerOptions,
) -> _DescentResult:
    """Projected gradient descent with Armijo backtracking on the projection arc."""
    x = project(np.asarray(x0, dtype=float))
    cost, aux = objective(x)
    if not np.isfinite(cost):
        raise NumericalError("non-finite cost at the starting point")
    g = grad_fn(x, aux)
    history = [cost]
    alpha = None
    converged = False
    iterations = 0
    pg_norm = float(np.linalg.norm(x - project(x - g)))

    while iterations < options.max_iters:
        if pg_norm < options.tol:
            converged = True
            break
        scale = float(np.max(np.abs(g)))
        if scale == 0.0:
            converged = True
            break
        alpha = 0.5 / scale if alpha is None else 2.0 * alpha

        accepted = False
        for _ in range(options.max_backtracks):
            trial = project(x - alpha * g)
            trial_cost, trial_aux = objective(trial)
            if not np.isfinite(trial_cost):
                raise NumericalError("line search produced a non-finite cost")
            if trial_cost <= cost + options.armijo * float(g @ (trial - x)):
                accepted = True
                break
            alpha *= options.shrink
        if not accepted or (trial_cost >= cost and np.array_equal(trial, x)):
            break

        x, cost, aux = trial, trial_cost, trial_aux
        g = grad_fn(x, aux)
        pg_norm = float(np.linalg.norm(x - project(x - g)))
        history.append(cost)
        iterations += 1
    else:
        converged = pg_norm < options.tol

    return _DescentResult(x, cost, aux, iterations, pg_norm, converged, history)


def _clip_unit(x: np.ndarray) -> np.ndarray:
    return np.clip(x, 0.0, 1.0)


def _descend_protocol(ham, spec, grid, start, options, initial, index):
    def objective(x):
        protocol = Protocol(grid, x)
        total, regularizer, state = _protocol_objective(ham, protocol, spec, initial)
        return total, (protocol, regularizer, state)

    def grad_fn(x, aux):
        protocol, _, state = aux
        return _protocol_gradient(ham, protocol, spec, state)

    try:
        result = _projected_descent(objective, grad_fn, _clip_unit, start, options)
    except NumericalError as e:
        return index, None, str(e)
    protocol, regularizer, (trajectory, _) = result.aux
    report = OptimizeReport(
        protocol=protocol,
        cost_terminal=trajectory.final_cost,
        cost_regularizer=regularizer,
        zeta=spec.zeta,
        iterations=result.iterations,
        gradient_norm_final=result.gradient_norm,
        converged=result.converged,
        history=tuple(result.history),
        start_index=index,
    )
    return index, report, None


def _pick_best(outcomes, label: str) -> OptimizeReport:
    reports = []
    failures = 0
    for index, report, error in outcomes:
        if report is None:
            failures += 1
            logger.warning("%s start %d discarded: %s", label, index, error)
        else:
            logger.debug(
                "%s start %d: cost %.10g after %d iterations (converged=%s)",
                label, index, report.cost_total, report.iterations, report.converged,
            )
            reports.append(report)
    if not reports:
        raise OptimizationError(f"all {failures} {label} starts failed")
    best = min(reports, key=lambda r: (r.cost_total, r.start_index))
    logger.info(
        "%s: best start %d of %d, total cost %.10g",
        label, best.start_index, len(reports) + failures, best.cost_total,
    )
    return replace(best, failed_starts=failures)


def _random_streams(seed: int, count: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def optimize_protocol(
    ham: HamiltonianPair,
    spec: CostSpec,
    grid: TimeGrid,
    init: Protocol | None = None,
    options: OptimizerOptions | None = None,
    initial: np.ndarray | None = None,
) -> OptimizeReport:
    """Multi-start projected gradient descent: ``init`` (if any), the linear ramp, random starts."""
    options = options or OptimizerOptions()
    initial = _initial_state(ham, initial)
    starts = []
    if init is not None:
        if init.grid != grid:
            raise DomainError("initial protocol lives on a different grid")
        starts.append(np.array(init.values))
    starts.append(Protocol.linear_ramp(grid).values.copy())
    starts.extend(rng.uniform(0.0, 1.0, grid.n_steps) for rng in _random_streams(options.seed, options.restarts))

    outcomes = Parallel(n_jobs=options.n_jobs)(
        delayed(_descend_protocol)(ham, spec, grid, start, options, initial, i)
        for i, start in enumerate(starts)
    )
    return _pick_best(outcomes, f"protocol(zeta={spec.zeta}, {spec.norm.label})")


def refinement_change(
    ham: HamiltonianPair,
    spec: CostSpec,
    report: OptimizeReport,
    options: OptimizerOptions | None = None,
    factor: int = 2,
    initial: np.ndarray | None = None,
) -> float:
    """
    Total-cost gain from re-optimizing on a grid ``factor`` times finer.

    The fine run starts from the coarse optimum repeated on the fine grid,
    which has exactly the coarse cost, so the result is non-negative up to
    rounding.
    """
    if not isinstance(report.protocol, Protocol):
        raise DomainError("grid refinement applies to step protocols, not bang-bang schedules")
    options = (options or OptimizerOptions()).model_copy(update={"restarts": 0})
    coarse = report.protocol
    fine = optimize_protocol(
        ham, spec, coarse.grid.refine(factor), init=coarse.refined(factor), options=options, initial=initial
    )
    change = report.cost_total - fine.cost_total
    logger.info("refining the grid to %d steps changes the total cost by %.3e", fine.protocol.grid.n_steps, change)
    return float(max(change, 0.0))


def project_simplex(v: np.ndarray, total: float) -> np.ndarray:
    """Euclidean projection onto {d >= 0, sum d = total}."""
    v = np.asarray(v, dtype=float)
    mu = np.sort(v)[::-1]
    excess = np.cumsum(mu) - total
    ranks = np.arange(1, v.size + 1)
    rho = np.nonzero(mu - excess / ranks > 0)[0][-1]
    theta = excess[rho] / (rho + 1)
    w = np.maximum(v - theta, 0.0)
    return w * (total / w.sum())


def _qaoa_objective(ham, schedule, spec, initial, measures):
    trajectory = propagate(ham, schedule, initial)
    regularizer = float(schedule.durations @ np.array([measures[v] for v in schedule.values]))
    return trajectory.final_cost + spec.zeta * regularizer, regularizer, trajectory


def qaoa_gradient(
    ham: HamiltonianPair,
    schedule: QaoaSchedule,
    spec: CostSpec | None = None,
    initial: np.ndarray | None = None,
) -> np.ndarray:
    """Sensitivity of the total cost to each segment duration."""
    spec = spec or CostSpec()
    initial = _initial_state(ham, initial)
    measures = {0.0: q_value(ham, 0.0, spec.norm), 1.0: q_value(ham, 1.0, spec.norm)}
    _, _, trajectory = _qaoa_objective(ham, schedule, spec, initial, measures)
    return _qaoa_gradient(ham, schedule, spec, trajectory, measures)


def _qaoa_gradient(ham, schedule, spec, trajectory, measures):
    costates = backward_costate(ham, schedule, trajectory).costates
    generators = {v: hamiltonian_at(ham, v) for v in (0.0, 1.0)}
    grad = np.empty(schedule.n_bangs)
    for p, v in enumerate(schedule.values):
        x_end = trajectory.states[p + 1]
        grad[p] = -2.0 * np.real(np.vdot(costates[p + 1], -1j * (generators[v] @ x_end)))
        grad[p] += spec.zeta * measures[v]
    return grad


def _descend_qaoa(ham, spec, horizon, leading, start, options, initial, index, measures):
    def objective(x):
        schedule = QaoaSchedule(x, leading, horizon)
        total, regularizer, trajectory = _qaoa_objective(ham, schedule, spec, initial, measures)
        return total, (schedule, regularizer, trajectory)

    def grad_fn(x, aux):
        schedule, _, trajectory = aux
        return _qaoa_gradient(ham, schedule, spec, trajectory, measures)

    def project(x):
        return project_simplex(x, horizon)

    try:
        result = _projected_descent(objective, grad_fn, project, start, options)
    except NumericalError as e:
        return index, None, str(e)
    schedule, regularizer, trajectory = result.aux
    report = OptimizeReport(
        protocol=schedule,
        cost_terminal=trajectory.final_cost,
        cost_regularizer=regularizer,
        zeta=spec.zeta,
        iterations=result.iterations,
        gradient_norm_final=result.gradient_norm,
        converged=result.converged,
        history=tuple(result.history),
        start_index=index,
    )
    return index, report, None


def optimize_qaoa(
    ham: HamiltonianPair,
    grid: TimeGrid,
    n_bangs: int,
    init: QaoaSchedule | None = None,
    options: OptimizerOptions | None = None,
    spec: CostSpec | None = None,
    initial: np.ndarray | None = None,
) -> OptimizeReport:
    """Optimize segment durations for both leading values (uniform plus random starts each)."""
    if n_bangs < 2:
        raise DomainError(f"QAOA needs at least 2 bangs, got {n_bangs}")
    options = options or OptimizerOptions()
    spec = spec or CostSpec()
    initial = _initial_state(ham, initial)
    horizon = grid.horizon
    measures = {0.0: q_value(ham, 0.0, spec.norm), 1.0: q_value(ham, 1.0, spec.norm)}

    starts: list[tuple[int, np.ndarray]] = []
    if init is not None:
        if init.n_bangs != n_bangs:
            raise DomainError(f"initial schedule has {init.n_bangs} bangs, expected {n_bangs}")
        starts.append((init.leading_value, np.array(init.durations)))
    streams = _random_streams(options.seed, 2 * options.restarts)
    for leading in (1, 0):
        starts.append((leading, np.full(n_bangs, horizon / n_bangs)))
        for rng in streams[leading :: 2]:
            starts.append((leading, rng.dirichlet(np.ones(n_bangs)) * horizon))

    outcomes = Parallel(n_jobs=options.n_jobs)(
        delayed(_descend_qaoa)(ham, spec, horizon, leading, start, options, initial, i, measures)
        for i, (leading, start) in enumerate(starts)
    )
    return _pick_best(outcomes, f"qaoa(P={n_bangs})")
