"""A-posteriori checks of the maximum principle on optimized protocols."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from src.control import CostSpec, terminal_gradient, backward_costate
from src.dynamics import Protocol, propagate, spectra
from src.errors import DomainError
from src.operators import (
    HamiltonianPair,
    NormKind,
    ground_state_of_B,
    hamiltonian_at,
    q_subgradient,
    q_subgradient_inverse,
    q_value,
)

logger = logging.getLogger(__name__)

BAND_RTOL = 1e-3
U_TOL = 1e-2


class CaseLabel(str, Enum):
    SINGULAR = "Singular"
    BANG_ZERO = "BangZero"
    BANG_ONE = "BangOne"
    VIOLATED = "Violated"


@dataclass(frozen=True)
class SingularBand:
    m_lb: float
    m_ub: float
    zeta_threshold: float

    @property
    def all_singular_possible(self) -> bool:
        return math.isfinite(self.zeta_threshold)


@dataclass(frozen=True)
class PmpDiagnostics:
    mu: np.ndarray
    mu_step: np.ndarray
    control_hamiltonian: np.ndarray
    case_labels: tuple[CaseLabel, ...]
    singular_fraction: float
    band: SingularBand
    tolerance: float
    u_analytic: np.ndarray

    @property
    def hamiltonian_spread(self) -> float:
        return float(np.max(self.control_hamiltonian) - np.min(self.control_hamiltonian))

    @property
    def violated_steps(self) -> int:
        return sum(label is CaseLabel.VIOLATED for label in self.case_labels)


def switching_mu(x: np.ndarray, lam: np.ndarray, f: np.ndarray) -> float:
    """μ = -i<λ|F|x> + i<x|F|λ> = 2 Im <λ|F|x>."""
    overlap = np.vdot(lam, f @ x)
    value = -1j * overlap + 1j * np.conj(overlap)
    if abs(value.imag) >= 1e-12 * (1.0 + abs(value.real)):
        logger.warning("switching function has imaginary residue %.3e", value.imag)
    return float(value.real)


def control_hamiltonian(
    x: np.ndarray,
    lam: np.ndarray,
    u: float,
    ham: HamiltonianPair,
    spec: CostSpec,
) -> float:
    h = hamiltonian_at(ham, u)
    value = 1j * np.vdot(x, h @ lam) - 1j * np.vdot(lam, h @ x)
    return float(value.real) - spec.zeta * q_value(ham, u, spec.norm)


def singular_band(ham: HamiltonianPair, kind: NormKind, zeta: float = 0.0) -> SingularBand:
    m_lb = q_subgradient(ham, 0.0, kind).hi
    m_ub = q_subgradient(ham, 1.0, kind).lo
    if m_lb < 0.0 < m_ub:
        sigma_f = np.linalg.norm(ham.f, 2)
        sigma_c = np.linalg.norm(ham.c, 2)
        threshold = 2.0 * sigma_f * sigma_c / min(abs(m_lb), abs(m_ub))
    else:
        threshold = math.inf
        logger.warning(
            "M_lb=%.6g and M_ub=%.6g share a sign: there is always a bang section; the optimal "
            "solution may be zero or one at the start or at the end, but not necessarily at both",
            m_lb, m_ub,
        )
    if zeta > threshold:
        logger.info("zeta=%.6g exceeds the all-singular threshold %.6g", zeta, threshold)
    return SingularBand(float(m_lb), float(m_ub), float(threshold))


def band_tolerance(band: SingularBand, zeta: float, mu_scale: float = 0.0) -> float:
    """Scaled by the band for ζ > 0 and by the magnitude of μ at ζ = 0, where the band is {0}."""
    if zeta > 0.0:
        return BAND_RTOL * zeta * (1.0 + max(abs(band.m_lb), abs(band.m_ub)))
    return BAND_RTOL * mu_scale


def classify_step(
    mu_k: float,
    band: SingularBand,
    zeta: float,
    u_k: float,
    tol: float | None = None,
    u_tol: float = U_TOL,
) -> CaseLabel:
    if tol is None:
        tol = band_tolerance(band, zeta)
    lower = zeta * band.m_lb
    upper = zeta * band.m_ub
    if lower - tol <= mu_k <= upper + tol:
        return CaseLabel.SINGULAR
    if mu_k <= lower + tol and u_k <= u_tol:
        return CaseLabel.BANG_ZERO
    if mu_k >= upper - tol and u_k >= 1.0 - u_tol:
        return CaseLabel.BANG_ONE
    return CaseLabel.VIOLATED


def analytic_singular_u(
    x: np.ndarray,
    lam: np.ndarray,
    ham: HamiltonianPair,
    kind: NormKind,
    zeta: float,
) -> float:
    """u* = (∂q)^{-1}(μ / ζ) on a singular arc."""
    if zeta <= 0.0:
        raise DomainError("the analytic singular control needs zeta > 0")
    return q_subgradient_inverse(ham, switching_mu(x, lam, ham.f) / zeta, kind)


def diagnose(
    ham: HamiltonianPair,
    protocol: Protocol,
    spec: CostSpec,
    initial: np.ndarray | None = None,
    u_tol: float = U_TOL,
    band: SingularBand | None = None,
) -> PmpDiagnostics:
    initial = ground_state_of_B(ham) if initial is None else initial
    cache = spectra(ham, protocol.values)
    trajectory = propagate(ham, protocol, initial, cache=cache)
    adjoint = backward_costate(ham, protocol, trajectory, cache=cache)
    states, costates = trajectory.states, adjoint.costates
    n = protocol.grid.n_steps

    node_u = np.append(protocol.values, protocol.values[-1])
    mu = np.array([switching_mu(states[k], costates[k], ham.f) for k in range(n + 1)])
    hamiltonian = np.array(
        [control_hamiltonian(states[k], costates[k], float(node_u[k]), ham, spec) for k in range(n + 1)]
    )
    terminal = terminal_gradient(ham, protocol, trajectory, adjoint, cache)
    mu_step = -terminal / protocol.grid.dt

    if band is None:
        band = singular_band(ham, spec.norm, spec.zeta)
    mu_scale = 1.0 + np.linalg.norm(costates[-1]) * np.linalg.norm(ham.f, 2)
    tol = band_tolerance(band, spec.zeta, mu_scale)
    labels = tuple(
        classify_step(float(m), band, spec.zeta, float(u), tol, u_tol)
        for m, u in zip(mu_step, protocol.values)
    )
    singular = sum(label is CaseLabel.SINGULAR for label in labels)

    u_analytic = np.full(n, np.nan)
    if spec.zeta > 0.0:
        lower, upper = band.m_lb, band.m_ub
        for k, label in enumerate(labels):
            if label is CaseLabel.SINGULAR:
                target = min(max(mu_step[k] / spec.zeta, lower), upper)
                u_analytic[k] = q_subgradient_inverse(ham, target, spec.norm)

    return PmpDiagnostics(
        mu=mu,
        mu_step=mu_step,
        control_hamiltonian=hamiltonian,
        case_labels=labels,
        singular_fraction=singular / n,
        band=band,
        tolerance=tol,
        u_analytic=u_analytic,
    )
