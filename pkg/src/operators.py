"""Ising Hamiltonians and the norm-based robustness measure q(u).

The interpolated Hamiltonian is ``H(u) = u B + (1 - u) C = C + u F`` with
``F = B - C``. All matrices are dense complex arrays of dimension
``d = 2**N`` with qubit 0 as the most significant bit of the basis index.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import reduce

import numpy as np
from scipy import linalg

from src.errors import DomainError, OutOfBandError, ZeroHamiltonianError

logger = logging.getLogger(__name__)

DEFAULT_MAX_QUBITS = 12
HERMITIAN_ATOL = 1e-12
CLUSTER_RTOL = 1e-9
INVERSE_UTOL = 1e-10

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)


class NormType(str, Enum):
    SPECTRAL = "spectral"
    FROBENIUS = "frobenius"


@dataclass(frozen=True)
class NormKind:
    """Matrix norm behind q(u); ``phase_reduced`` selects min_φ ‖H + φI‖."""

    norm: NormType = NormType.SPECTRAL
    phase_reduced: bool = False

    @property
    def label(self) -> str:
        suffix = "-phase" if self.phase_reduced else ""
        return f"{self.norm.value}{suffix}"


@dataclass(frozen=True)
class SubgradientInterval:
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise DomainError(f"empty subgradient interval [{self.lo}, {self.hi}]")

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def __contains__(self, value: float) -> bool:
        return self.lo <= value <= self.hi


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class IsingModel:
    """Ising couplings J; the diagonal is ignored (it only shifts the cost)."""

    n_qubits: int
    couplings: np.ndarray
    max_qubits: int = DEFAULT_MAX_QUBITS

    def __post_init__(self):
        if self.n_qubits < 1:
            raise DomainError(f"n_qubits must be >= 1, got {self.n_qubits}")
        if self.n_qubits > self.max_qubits:
            raise DomainError(
                f"{self.n_qubits} qubits exceed the memory budget of {self.max_qubits} "
                f"(Hilbert dimension {2 ** self.n_qubits})"
            )
        couplings = np.asarray(self.couplings, dtype=float)
        if couplings.shape != (self.n_qubits, self.n_qubits):
            raise DomainError(
                f"couplings must be {self.n_qubits}x{self.n_qubits}, got {couplings.shape}"
            )
        if not np.all(np.isfinite(couplings)):
            raise DomainError("couplings contain non-finite entries")
        if not np.allclose(couplings, couplings.T, rtol=0.0, atol=HERMITIAN_ATOL):
            raise DomainError("couplings must be symmetric")
        object.__setattr__(self, "couplings", _frozen(couplings))

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    @classmethod
    def random(
        cls,
        n_qubits: int,
        rng: np.random.Generator,
        max_qubits: int = DEFAULT_MAX_QUBITS,
    ) -> "IsingModel":
        """Off-diagonal entries i.i.d. uniform on [-1, 1], symmetrized, zero diagonal."""
        upper = np.triu(rng.uniform(-1.0, 1.0, size=(n_qubits, n_qubits)), k=1)
        return cls(n_qubits=n_qubits, couplings=upper + upper.T, max_qubits=max_qubits)


@dataclass(frozen=True)
class HamiltonianPair:
    """Mixer B, problem C and their difference F = B - C."""

    b: np.ndarray
    c: np.ndarray
    f: np.ndarray = field(init=False)

    def __post_init__(self):
        b = np.asarray(self.b, dtype=complex)
        c = np.asarray(self.c, dtype=complex)
        if b.ndim != 2 or b.shape[0] != b.shape[1] or b.shape != c.shape:
            raise DomainError(f"B and C must be square and equal-shaped, got {b.shape}, {c.shape}")
        for name, matrix in (("B", b), ("C", c)):
            if not np.allclose(matrix, matrix.conj().T, rtol=0.0, atol=HERMITIAN_ATOL):
                raise DomainError(f"{name} is not Hermitian")
        object.__setattr__(self, "b", _frozen(b))
        object.__setattr__(self, "c", _frozen(c))
        object.__setattr__(self, "f", _frozen(b - c))

    @property
    def dim(self) -> int:
        return self.b.shape[0]

    @property
    def n_qubits(self) -> int:
        return int(round(np.log2(self.dim)))


def single_site(op: np.ndarray, site: int, n_qubits: int) -> np.ndarray:
    """Embed a single-qubit operator at ``site`` via Kronecker products."""
    factors = [op if i == site else IDENTITY_2 for i in range(n_qubits)]
    return reduce(np.kron, factors)


def build_ising(model: IsingModel) -> HamiltonianPair:
    n = model.n_qubits
    b = -sum(single_site(SIGMA_X, i, n) for i in range(n))

    # C is diagonal: s_i(z) = +1/-1 for bit i of basis index z.
    index = np.arange(model.dim)
    spins = np.array([1 - 2 * ((index >> (n - 1 - i)) & 1) for i in range(n)], dtype=float)
    diagonal = np.zeros(model.dim)
    for i in range(n):
        for j in range(i + 1, n):
            if model.couplings[i, j] != 0.0:
                diagonal += 2.0 * model.couplings[i, j] * spins[i] * spins[j]
    return HamiltonianPair(b=b, c=np.diag(diagonal).astype(complex))


def ground_state_of_B(ham: HamiltonianPair) -> np.ndarray:
    d = ham.dim
    state = np.full(d, 1.0 / np.sqrt(d), dtype=complex)
    residual = np.linalg.norm(ham.b @ state + ham.n_qubits * state)
    if residual >= 1e-10:
        raise DomainError(
            f"uniform superposition is not the ground state of B (residual {residual:.3e})"
        )
    return state


def ground_energy(ham: HamiltonianPair) -> float:
    """Smallest eigenvalue of C."""
    return float(linalg.eigvalsh(ham.c)[0])


def hamiltonian_at(ham: HamiltonianPair, u: float) -> np.ndarray:
    if not 0.0 <= u <= 1.0:
        raise DomainError(f"control value must lie in [0, 1], got {u}")
    return u * ham.b + (1.0 - u) * ham.c


def matrix_measure(h: np.ndarray, kind: NormKind) -> float:
    """q of an explicit Hermitian matrix."""
    if kind.norm is NormType.SPECTRAL:
        w = linalg.eigvalsh(h)
        if kind.phase_reduced:
            return float(0.5 * (w[-1] - w[0]))
        return float(max(w[-1], -w[0]))
    if kind.phase_reduced:
        h = h - (np.trace(h) / h.shape[0]) * np.eye(h.shape[0])
    return float(np.linalg.norm(h, "fro"))


def q_value(ham: HamiltonianPair, u: float, kind: NormKind) -> float:
    return matrix_measure(hamiltonian_at(ham, u), kind)


def _extreme_subspaces(h: np.ndarray):
    w, v = linalg.eigh(h)
    scale = max(abs(w[0]), abs(w[-1]))
    tol = CLUSTER_RTOL * scale
    top = v[:, w >= w[-1] - tol]
    bottom = v[:, w <= w[0] + tol]
    return w, top, bottom, tol


def _rayleigh_range(basis: np.ndarray, f: np.ndarray) -> tuple[float, float]:
    """Range of <v|F|v> over unit v in span(basis): eigenvalues of V^† F V."""
    compressed = basis.conj().T @ f @ basis
    compressed = 0.5 * (compressed + compressed.conj().T)
    w = linalg.eigvalsh(compressed)
    return float(w[0]), float(w[-1])


def q_subgradient(ham: HamiltonianPair, u: float, kind: NormKind) -> SubgradientInterval:
    h = hamiltonian_at(ham, u)
    f = ham.f

    if kind.norm is NormType.FROBENIUS:
        if kind.phase_reduced:
            eye = np.eye(ham.dim)
            h = h - (np.trace(h) / ham.dim) * eye
            f = f - (np.trace(f) / ham.dim) * eye
        norm = np.linalg.norm(h, "fro")
        if norm == 0.0:
            raise ZeroHamiltonianError(f"H({u}) vanishes; the Frobenius subdifferential is a ball")
        slope = float(np.real(np.vdot(h, f)) / norm)
        return SubgradientInterval(slope, slope)

    w, top, bottom, tol = _extreme_subspaces(h)
    top_lo, top_hi = _rayleigh_range(top, f)
    bottom_lo, bottom_hi = _rayleigh_range(bottom, f)

    if kind.phase_reduced:
        # (λ_max - λ_min) / 2: Minkowski sum of both one-sided subdifferentials
        return SubgradientInterval(0.5 * (top_lo - bottom_hi), 0.5 * (top_hi - bottom_lo))

    upper_active = w[-1] >= -w[0] - tol
    lower_active = -w[0] >= w[-1] - tol
    candidates = []
    if upper_active:
        candidates.append((top_lo, top_hi))
    if lower_active:
        candidates.append((-bottom_hi, -bottom_lo))
    return SubgradientInterval(
        min(lo for lo, _ in candidates), max(hi for _, hi in candidates)
    )


def q_subgradient_preimage(
    ham: HamiltonianPair, target: float, kind: NormKind
) -> tuple[float, float]:
    """Interval of u in [0, 1] with target ∈ ∂q(u), located by bisection."""
    lower = q_subgradient(ham, 0.0, kind).hi
    upper = q_subgradient(ham, 1.0, kind).lo
    band_tol = 1e-12 * (1.0 + abs(lower) + abs(upper))
    if not lower - band_tol <= target <= upper + band_tol:
        raise OutOfBandError(target, lower, upper)

    # left end: smallest u with max ∂q(u) >= target
    if lower >= target:
        left = 0.0
    else:
        a, b = 0.0, 1.0
        while b - a > INVERSE_UTOL:
            m = 0.5 * (a + b)
            if q_subgradient(ham, m, kind).hi < target:
                a = m
            else:
                b = m
        left = b

    # right end: largest u with min ∂q(u) <= target
    if upper <= target:
        right = 1.0
    else:
        a, b = 0.0, 1.0
        while b - a > INVERSE_UTOL:
            m = 0.5 * (a + b)
            if q_subgradient(ham, m, kind).lo > target:
                b = m
            else:
                a = m
        right = a

    return min(left, right), max(left, right)


def q_subgradient_inverse(ham: HamiltonianPair, target: float, kind: NormKind) -> float:
    left, right = q_subgradient_preimage(ham, target, kind)
    if right - left > 10 * INVERSE_UTOL:
        logger.debug("non-unique inverse subgradient for %.6g: width %.3e", target, right - left)
    return 0.5 * (left + right)


def is_strictly_convex(ham: HamiltonianPair, kind: NormKind, n_grid: int = 201) -> bool:
    """Positive second differences of q on a uniform grid over [0, 1]."""
    grid = np.linspace(0.0, 1.0, n_grid)
    values = np.array([q_value(ham, u, kind) for u in grid])
    second = values[:-2] - 2.0 * values[1:-1] + values[2:]
    scale = 1e-12 * (1.0 + np.max(np.abs(values)))
    return bool(np.all(second > scale))
