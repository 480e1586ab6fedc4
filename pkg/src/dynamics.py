"""Exact propagation of piecewise-constant protocols.

Each segment applies ``exp(-i (1 + ε) d H(u))``, computed from the Hermitian
eigendecomposition of ``H(u)``. Decompositions are shared between segments
with identical control values, so bang sections cost one ``eigh`` call in
total.
"""

from __future__ import annotations

import logging
import typing
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from src.errors import DomainError, NumericalError
from src.operators import HamiltonianPair, NormKind, hamiltonian_at, q_value

logger = logging.getLogger(__name__)

NORM_TOL = 1e-10


def _frozen(array, dtype=float) -> np.ndarray:
    array = np.array(array, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    n_steps: int

    def __post_init__(self):
        if not (np.isfinite(self.horizon) and self.horizon > 0.0):
            raise DomainError(f"horizon must be positive, got {self.horizon}")
        if self.n_steps < 1:
            raise DomainError(f"n_steps must be >= 1, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def times(self) -> np.ndarray:
        """Node times τ_0 = 0, ..., τ_K = T."""
        return np.arange(self.n_steps + 1) * self.dt

    def refine(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.horizon, self.n_steps * factor)


@dataclass(frozen=True)
class ErrorSignal:
    """Piecewise-constant coherent control error on S uniform sections of [0, T]."""

    amplitudes: np.ndarray
    bound: float

    def __post_init__(self):
        amplitudes = _frozen(self.amplitudes)
        if amplitudes.ndim != 1 or amplitudes.size == 0:
            raise DomainError("an error signal needs at least one section")
        if self.bound < 0.0:
            raise DomainError(f"error bound must be non-negative, got {self.bound}")
        if np.any(np.abs(amplitudes) > self.bound * (1.0 + 1e-12)):
            raise DomainError(f"error amplitudes exceed the bound {self.bound}")
        object.__setattr__(self, "amplitudes", amplitudes)

    @property
    def n_sections(self) -> int:
        return self.amplitudes.size

    def scaled(self, eps_hat: float) -> "ErrorSignal":
        """Rescale a unit signal (bound 1) to the noise level ε̂."""
        if eps_hat < 0.0:
            raise DomainError(f"eps_hat must be non-negative, got {eps_hat}")
        factor = eps_hat / self.bound if self.bound > 0.0 else 0.0
        return ErrorSignal(self.amplitudes * factor, eps_hat)

    def on_grid(self, grid: TimeGrid) -> np.ndarray:
        """Value per step: the section containing the step's left endpoint."""
        k = np.arange(grid.n_steps)
        return self.amplitudes[(k * self.n_sections) // grid.n_steps]

    def section_edges(self, horizon: float) -> np.ndarray:
        return np.arange(self.n_sections + 1) * (horizon / self.n_sections)


class PiecewiseControl(typing.Protocol):
    """Anything that can be laid out as constant-control segments over [0, T]."""

    @property
    def horizon(self) -> float: ...

    def segments(self, error: ErrorSignal | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (durations, control values, error values) per segment."""
        ...


@dataclass(frozen=True)
class Protocol:
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values)
        if values.shape != (self.grid.n_steps,):
            raise DomainError(
                f"protocol needs {self.grid.n_steps} values, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)) or np.any(values < 0.0) or np.any(values > 1.0):
            raise DomainError("protocol values must lie in [0, 1]")
        object.__setattr__(self, "values", values)

    @property
    def horizon(self) -> float:
        return self.grid.horizon

    @classmethod
    def constant(cls, grid: TimeGrid, value: float) -> "Protocol":
        return cls(grid, np.full(grid.n_steps, float(value)))

    @classmethod
    def linear_ramp(cls, grid: TimeGrid) -> "Protocol":
        """u_k = 1 - τ_k / T: start on the mixer, end on the problem Hamiltonian."""
        return cls(grid, 1.0 - grid.times[:-1] / grid.horizon)

    def refined(self, factor: int = 2) -> "Protocol":
        return Protocol(self.grid.refine(factor), np.repeat(self.values, factor))

    def segments(self, error: ErrorSignal | None = None):
        durations = np.full(self.grid.n_steps, self.grid.dt)
        eps = error.on_grid(self.grid) if error is not None else np.zeros(self.grid.n_steps)
        return durations, self.values, eps


def split_at_sections(
    durations: np.ndarray, values: np.ndarray, error: ErrorSignal | None, horizon: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Refine arbitrary segments at the error-section boundaries (exact coverage)."""
    durations = np.asarray(durations, dtype=float)
    values = np.asarray(values, dtype=float)
    if error is None:
        return durations, values, np.zeros_like(durations)

    seg_edges = np.concatenate(([0.0], np.cumsum(durations)))
    seg_edges[-1] = horizon
    cuts = np.union1d(seg_edges, error.section_edges(horizon))
    cuts = cuts[(cuts >= 0.0) & (cuts <= horizon)]
    pieces = np.diff(cuts)
    keep = pieces > 0.0
    starts = cuts[:-1][keep]
    pieces = pieces[keep]
    mids = starts + 0.5 * pieces
    seg_index = np.clip(np.searchsorted(seg_edges, mids, side="right") - 1, 0, len(values) - 1)
    sec_index = np.clip(
        (mids * error.n_sections / horizon).astype(int), 0, error.n_sections - 1
    )
    return pieces, values[seg_index], error.amplitudes[sec_index]


@dataclass(frozen=True)
class Spectra:
    """Eigendecompositions of H(u) for every distinct control value of a protocol."""

    values: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray

    def lookup(self, u: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.values, u)


def spectra(ham: HamiltonianPair, values) -> Spectra:
    unique = np.unique(np.asarray(values, dtype=float))
    eigvals = np.empty((unique.size, ham.dim))
    eigvecs = np.empty((unique.size, ham.dim, ham.dim), dtype=complex)
    for i, u in enumerate(unique):
        eigvals[i], eigvecs[i] = linalg.eigh(hamiltonian_at(ham, float(u)))
    return Spectra(unique, eigvals, eigvecs)


@dataclass(frozen=True)
class Trajectory:
    """States at segment boundaries; ``states[0]`` is the initial state."""

    states: np.ndarray
    final_cost: float

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


def _check_normalized(state: np.ndarray, name: str = "initial state") -> np.ndarray:
    state = np.asarray(state, dtype=complex)
    if state.ndim != 1:
        raise DomainError(f"{name} must be a vector")
    norm = np.linalg.norm(state)
    if abs(norm - 1.0) > NORM_TOL:
        raise DomainError(f"{name} is not normalized (norm {norm:.12f})")
    return state


def _evolve(
    spec: Spectra,
    durations: np.ndarray,
    values: np.ndarray,
    scales: np.ndarray,
    shifts: np.ndarray,
    initial: np.ndarray,
    backward: bool = False,
) -> np.ndarray:
    n = durations.size
    states = np.empty((n + 1, initial.size), dtype=complex)
    index = spec.lookup(values)
    order = range(n - 1, -1, -1) if backward else range(n)
    sign = 1.0 if backward else -1.0
    pos = n if backward else 0
    states[pos] = initial
    x = initial
    for k in order:
        w = spec.eigvals[index[k]]
        v = spec.eigvecs[index[k]]
        phases = np.exp(sign * 1j * durations[k] * (scales[k] * w + shifts[k]))
        x = v @ (phases * (v.conj().T @ x))
        pos = k if backward else k + 1
        states[pos] = x
    return states


def _final_cost(ham: HamiltonianPair, state: np.ndarray) -> float:
    return float(np.real(np.vdot(state, ham.c @ state)))


def propagate(
    ham: HamiltonianPair,
    protocol: PiecewiseControl,
    initial: np.ndarray,
    error: ErrorSignal | None = None,
    cache: Spectra | None = None,
) -> Trajectory:
    initial = _check_normalized(initial)
    durations, values, eps = protocol.segments(error)
    spec = cache if cache is not None else spectra(ham, values)
    states = _evolve(spec, durations, values, 1.0 + eps, np.zeros_like(durations), initial)
    drift = abs(np.linalg.norm(states[-1]) - 1.0)
    if not np.isfinite(drift) or drift > 1e-8:
        raise NumericalError(f"state norm drifted by {drift:.3e} during propagation")
    return Trajectory(states, _final_cost(ham, states[-1]))


def propagate_backward(
    ham: HamiltonianPair,
    protocol: PiecewiseControl,
    final: np.ndarray,
    cache: Spectra | None = None,
) -> np.ndarray:
    """Apply the adjoint segment unitaries in reverse; row k holds U_k^† ... U_{K-1}^† final."""
    final = np.asarray(final, dtype=complex)
    durations, values, _ = protocol.segments(None)
    spec = cache if cache is not None else spectra(ham, values)
    ones = np.ones_like(durations)
    return _evolve(spec, durations, values, ones, np.zeros_like(durations), final, backward=True)


def phase_shifted_propagate(
    ham: HamiltonianPair,
    protocol: PiecewiseControl,
    initial: np.ndarray,
    phase: np.ndarray,
) -> Trajectory:
    """Propagate under H(u_k) + φ_k I."""
    initial = _check_normalized(initial)
    durations, values, _ = protocol.segments(None)
    phase = np.asarray(phase, dtype=float)
    if phase.shape != durations.shape:
        raise DomainError(f"phase needs {durations.size} entries, got shape {phase.shape}")
    states = _evolve(spectra(ham, values), durations, values, np.ones_like(durations), phase, initial)
    return Trajectory(states, _final_cost(ham, states[-1]))


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    a = _check_normalized(a, "first state")
    b = _check_normalized(b, "second state")
    return float(min(1.0, abs(np.vdot(a, b))))


def lipschitz_bound(
    ham: HamiltonianPair, protocol: PiecewiseControl, kind: NormKind = NormKind()
) -> float:
    """L = ∫ q(u(τ)) dτ, exact for piecewise-constant controls."""
    durations, values, _ = protocol.segments(None)
    measure = {u: q_value(ham, float(u), kind) for u in np.unique(values)}
    return float(sum(d * measure[u] for d, u in zip(durations, values)))


def fidelity_lower_bound(L: float, eps_hat: float) -> float:
    if L < 0.0 or eps_hat < 0.0:
        raise DomainError("Lipschitz bound and noise level must be non-negative")
    return 1.0 - 0.5 * (L * eps_hat) ** 2
