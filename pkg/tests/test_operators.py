import logging
import math

import numpy as np
import pytest

from src.errors import DomainError, OutOfBandError, ZeroHamiltonianError
from src.operators import (
    SIGMA_X,
    SIGMA_Z,
    HamiltonianPair,
    IsingModel,
    NormKind,
    NormType,
    build_ising,
    ground_energy,
    ground_state_of_B,
    hamiltonian_at,
    is_strictly_convex,
    matrix_measure,
    q_subgradient,
    q_subgradient_inverse,
    q_subgradient_preimage,
    q_value,
    single_site,
)

SPECTRAL = NormKind()
FROBENIUS = NormKind(NormType.FROBENIUS)
SPECTRAL_PHASE = NormKind(NormType.SPECTRAL, phase_reduced=True)
FROBENIUS_PHASE = NormKind(NormType.FROBENIUS, phase_reduced=True)


def test_ising_problem_hamiltonian_is_diagonal_with_pair_energies():
    ham = build_ising(IsingModel(2, np.array([[0.0, 0.5], [0.5, 0.0]])))
    np.testing.assert_allclose(np.diag(ham.c).real, [1.0, -1.0, -1.0, 1.0])
    assert np.count_nonzero(ham.c - np.diag(np.diag(ham.c))) == 0


def test_mixer_ground_state_is_uniform_superposition(ising3):
    x0 = ground_state_of_B(ising3)
    np.testing.assert_allclose(ising3.b @ x0, -3.0 * x0, atol=1e-12)
    assert np.linalg.norm(x0) == pytest.approx(1.0)


def test_random_model_is_symmetric_bounded_with_zero_diagonal(rng):
    model = IsingModel.random(5, rng)
    np.testing.assert_array_equal(model.couplings, model.couplings.T)
    np.testing.assert_array_equal(np.diag(model.couplings), np.zeros(5))
    assert np.all(np.abs(model.couplings) <= 1.0)


def test_model_rejects_asymmetric_couplings():
    with pytest.raises(DomainError):
        IsingModel(2, np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_model_respects_qubit_budget():
    with pytest.raises(DomainError, match="memory budget"):
        IsingModel(13, np.zeros((13, 13)))


def test_hamiltonian_rejects_controls_outside_unit_interval(two_level):
    with pytest.raises(DomainError):
        hamiltonian_at(two_level, 1.5)
    with pytest.raises(DomainError):
        hamiltonian_at(two_level, -1e-3)


def test_pair_rejects_non_hermitian():
    with pytest.raises(DomainError):
        HamiltonianPair(np.array([[0.0, 1.0], [0.0, 0.0]]), SIGMA_Z)


def test_ground_energy(ising2):
    assert ground_energy(ising2) == pytest.approx(-2.0)


def test_matrix_measures_on_diagonal_example():
    h = np.diag([3.0, -5.0]).astype(complex)
    assert matrix_measure(h, SPECTRAL) == pytest.approx(5.0)
    assert matrix_measure(h, SPECTRAL_PHASE) == pytest.approx(4.0)
    assert matrix_measure(h, FROBENIUS) == pytest.approx(math.sqrt(34.0))
    assert matrix_measure(h, FROBENIUS_PHASE) == pytest.approx(math.sqrt(32.0))


@pytest.mark.parametrize("u", [0.0, 0.2, 0.5, 0.9, 1.0])
def test_q_on_two_level_fixture(two_level, u):
    radius = math.hypot(u, 1.0 - u)
    assert q_value(two_level, u, SPECTRAL) == pytest.approx(radius)
    assert q_value(two_level, u, SPECTRAL_PHASE) == pytest.approx(radius)
    assert q_value(two_level, u, FROBENIUS) == pytest.approx(math.sqrt(2.0) * radius)


def test_spectral_subgradient_at_the_ends_of_the_two_level_fixture(two_level):
    at_zero = q_subgradient(two_level, 0.0, SPECTRAL)
    at_one = q_subgradient(two_level, 1.0, SPECTRAL)
    assert at_zero.lo == pytest.approx(-1.0) and at_zero.hi == pytest.approx(-1.0)
    assert at_one.lo == pytest.approx(1.0) and at_one.hi == pytest.approx(1.0)


def test_frobenius_subgradient_matches_derivative(ising3):
    u, h = 0.37, 1e-6
    slope = q_subgradient(ising3, u, FROBENIUS)
    fd = (q_value(ising3, u + h, FROBENIUS) - q_value(ising3, u - h, FROBENIUS)) / (2 * h)
    assert slope.width == 0.0
    assert slope.lo == pytest.approx(fd, rel=1e-6)


def test_spectral_subgradient_is_an_interval_at_a_kink():
    # H(1/2) = 0: every eigenvalue is extreme, both signs active
    ham = HamiltonianPair(SIGMA_Z, -SIGMA_Z)
    interval = q_subgradient(ham, 0.5, SPECTRAL)
    assert interval.lo == pytest.approx(-2.0)
    assert interval.hi == pytest.approx(2.0)
    assert 0.0 in interval


def test_frobenius_subgradient_at_zero_hamiltonian_raises():
    ham = HamiltonianPair(SIGMA_Z, -SIGMA_Z)
    with pytest.raises(ZeroHamiltonianError):
        q_subgradient(ham, 0.5, FROBENIUS)


def test_phase_reduced_subgradient_ignores_identity_shifts():
    eye = np.eye(2, dtype=complex)
    plain = HamiltonianPair(-SIGMA_X, SIGMA_Z)
    shifted = HamiltonianPair(-SIGMA_X + 3.0 * eye, SIGMA_Z - eye)
    for u in (0.1, 0.6):
        a = q_subgradient(plain, u, SPECTRAL_PHASE)
        b = q_subgradient(shifted, u, SPECTRAL_PHASE)
        assert a.lo == pytest.approx(b.lo) and a.hi == pytest.approx(b.hi)


def test_inverse_subgradient_finds_the_minimizer(two_level):
    assert q_subgradient_inverse(two_level, 0.0, SPECTRAL) == pytest.approx(0.5, abs=1e-8)
    assert q_subgradient_inverse(two_level, 0.0, FROBENIUS) == pytest.approx(0.5, abs=1e-8)


def test_inverse_subgradient_on_two_qubit_frobenius(ising2):
    # ‖B‖_F² = 8, ‖C‖_F² = 16, tr(BC) = 0: q² is minimal at u = 16 / 24
    assert q_subgradient_inverse(ising2, 0.0, FROBENIUS) == pytest.approx(2.0 / 3.0, abs=1e-8)


def test_inverse_subgradient_round_trip(ising3):
    for u in (0.2, 0.45, 0.8):
        target = q_subgradient(ising3, u, FROBENIUS).lo
        assert q_subgradient_inverse(ising3, target, FROBENIUS) == pytest.approx(u, abs=1e-7)


def test_inverse_subgradient_rejects_targets_outside_the_band(two_level):
    with pytest.raises(OutOfBandError):
        q_subgradient_inverse(two_level, 1.5, SPECTRAL)


def test_preimage_of_a_flat_subgradient_spans_the_interval(caplog):
    # q = 3 - 2u has ∂q = -2 on all of [0, 1]
    ham = HamiltonianPair(SIGMA_Z, 3.0 * SIGMA_Z)
    left, right = q_subgradient_preimage(ham, -2.0, SPECTRAL)
    assert left == pytest.approx(0.0, abs=1e-9)
    assert right == pytest.approx(1.0, abs=1e-9)
    with caplog.at_level(logging.DEBUG, logger="src.operators"):
        assert q_subgradient_inverse(ham, -2.0, SPECTRAL) == pytest.approx(0.5, abs=1e-9)
    assert "non-unique" in caplog.text


def test_strict_convexity_check(two_level):
    assert is_strictly_convex(two_level, SPECTRAL)
    assert is_strictly_convex(two_level, FROBENIUS)
    linear = HamiltonianPair(SIGMA_Z, 3.0 * SIGMA_Z)
    assert not is_strictly_convex(linear, SPECTRAL)


def random_pairs(seed, count=6):
    rng = np.random.default_rng(seed)
    return [build_ising(IsingModel.random(2 + k % 3, rng)) for k in range(count)]


@pytest.mark.parametrize("kind", [SPECTRAL, FROBENIUS, SPECTRAL_PHASE, FROBENIUS_PHASE], ids=lambda k: k.label)
def test_q_is_convex_on_random_models(kind):
    rng = np.random.default_rng(31)
    for ham in random_pairs(3):
        for _ in range(25):
            a, b = rng.uniform(0.0, 1.0, 2)
            t = rng.uniform()
            mixed = q_value(ham, t * a + (1 - t) * b, kind)
            chord = t * q_value(ham, a, kind) + (1 - t) * q_value(ham, b, kind)
            assert mixed <= chord + 1e-12 * (1.0 + chord)


@pytest.mark.parametrize("kind", [SPECTRAL, FROBENIUS, SPECTRAL_PHASE, FROBENIUS_PHASE], ids=lambda k: k.label)
def test_subgradient_is_monotone_on_random_models(kind):
    grid = np.linspace(0.0, 1.0, 11)
    for ham in random_pairs(4):
        intervals = [q_subgradient(ham, float(u), kind) for u in grid]
        for left, right in zip(intervals, intervals[1:]):
            assert left.hi <= right.lo + 1e-9


def test_phase_reduced_measure_never_exceeds_the_plain_one():
    for ham in random_pairs(5):
        for u in np.linspace(0.0, 1.0, 9):
            assert q_value(ham, u, SPECTRAL_PHASE) <= q_value(ham, u, SPECTRAL) + 1e-12
            assert q_value(ham, u, FROBENIUS_PHASE) <= q_value(ham, u, FROBENIUS) + 1e-12


def test_problem_hamiltonian_commutes_with_every_site_z():
    for ham in random_pairs(6):
        n = ham.n_qubits
        for site in range(n):
            z = single_site(SIGMA_Z, site, n)
            np.testing.assert_allclose(ham.c @ z - z @ ham.c, 0.0, atol=1e-12)
