import logging
import math
from fractions import Fraction

import numpy as np
import pytest
import scipy.linalg as la

from src.dynamics.graphham import Hamiltonian, spectrum
from src.dynamics.hilbert import Ket, WeightedSpace, make_space
from src.dynamics.propagator import (
    M_STEP_BOUND_FORMULA,
    IndexOutOfRange,
    NegativeSteps,
    OrderOutOfRange,
    StepOutOfRange,
    Trajectory,
    ZeroHamiltonian,
    build_propagator,
    build_propagator_for_step,
    error_bound_multi,
    error_bound_single,
    evolve,
    evolve_reverse,
    exact_evolve,
    exact_propagator,
    pade_coefficient,
    pade_polynomials,
    pade_scalar,
    pade_taylor_coefficients,
    spectral_approximant,
)
from src.dynamics.verification import (
    ROUNDING_SLACK,
    random_hamiltonian,
    random_metric,
    random_unit_ket,
)

STEP_PARAMETERS = (0.1, 0.5, 0.9)


class TestPadeCoefficients:
    def test_first_orders(self):
        """(1, 1/2) for p = 1 and (1, 1/2, 1/12) for p = 2."""
        assert pade_polynomials(1)[0] == (1, Fraction(1, 2))
        assert pade_polynomials(2)[0] == (1, Fraction(1, 2), Fraction(1, 12))
        assert pade_polynomials(2)[1] == (1, Fraction(-1, 2), Fraction(1, 12))

    @pytest.mark.parametrize("p", range(1, 7))
    def test_constant_term(self, p):
        """j = 0 coefficient is always 1."""
        assert pade_coefficient(p, p, 0) == 1

    def test_index_out_of_range(self):
        """j must lie in 0..p."""
        with pytest.raises(IndexOutOfRange):
            pade_coefficient(1, 1, 2)
        with pytest.raises(IndexOutOfRange):
            pade_coefficient(2, 2, -1)

    def test_taylor_series(self):
        """(1 + x/2)/(1 - x/2) = 1 + x + x^2/2 + x^3/4 + ..."""
        assert pade_taylor_coefficients(1, 3) == (1, 1, Fraction(1, 2), Fraction(1, 4))

    @pytest.mark.parametrize("p", range(1, 7))
    def test_series_matches_exponential_to_order_2p(self, p):
        """Diagonal approximant agrees with exp through x^(2p)."""
        series = pade_taylor_coefficients(p, 2 * p + 1)
        for k in range(2 * p + 1):
            assert series[k] == Fraction(1, math.factorial(k))
        leading = abs(Fraction(1, math.factorial(2 * p + 1)) - series[2 * p + 1])
        assert leading == Fraction(math.factorial(p) ** 2, math.factorial(2 * p) * math.factorial(2 * p + 1))

    def test_scalar_unimodular(self):
        """R_pp(iy) has modulus one."""
        for p in range(1, 7):
            assert abs(pade_scalar(p, 0.7j)) == pytest.approx(1.0, abs=1e-15)


class TestErrorBounds:
    def test_single_step(self):
        """|1/6 - 1/4| h^3 for p = 1."""
        assert error_bound_single(1, 0.5) == pytest.approx(0.125 / 12, rel=1e-15)
        c25 = float(pade_taylor_coefficients(2, 5)[5])
        assert error_bound_single(2, 0.5) == pytest.approx(abs(1 / 120 - c25) * 0.5 ** 5, rel=1e-14)
        assert error_bound_single(3, 1e-6) < 1e-40

    def test_multi_step(self):
        """m^3/6 h^3 for p = 1."""
        assert error_bound_multi(1, 1, 0.1) == pytest.approx(1e-3 / 6, rel=1e-12)
        assert error_bound_multi(1, 10, 0.1) == pytest.approx(1000 / 6 * 1e-3, rel=1e-12)
        assert error_bound_multi(1, 0, 0.1) == 0.0

    def test_certificate(self, double_slit):
        """Certificate serializes the bound data."""
        prop = build_propagator(double_slit, 0.1, 1)
        data = prop.certificate.to_dict(10)
        assert data['p'] == 1
        assert data['h_t'] == 0.1
        assert data['tau'] == pytest.approx(0.1 / math.sqrt(6), rel=1e-12)
        assert data['c_p_2p1'] == 0.25
        assert data['single_step_bound'] == pytest.approx(1e-3 / 12)
        assert data['m_step_bound'] == pytest.approx(1000 / 6 * 1e-3)
        assert data['m_step_bound_formula'] == M_STEP_BOUND_FORMULA
        assert data['trivial'] is False


class TestBuildPropagator:
    @pytest.mark.parametrize("tau", [0.05, 0.1, 0.2])
    def test_cayley_entries(self, double_slit, tau):
        """Order one approximant of the double slit matches the closed form entries."""
        u = build_propagator_for_step(double_slit, tau, 1).approximant
        denominator = 3 * tau ** 2 + 2
        assert u[0, 0] == pytest.approx((tau ** 2 + 2) / denominator, abs=1e-12)
        assert u[0, 1] == pytest.approx(-2j * tau / denominator, abs=1e-12)
        assert u[0, 3] == pytest.approx(-2 * tau ** 2 / denominator, abs=1e-12)

    def test_step_from_norm(self, double_slit):
        """tau ||H|| = h_t."""
        prop = build_propagator(double_slit, 0.3, 2)
        assert prop.tau * double_slit.norm == pytest.approx(0.3, rel=1e-12)

    def test_denominator_is_adjoint_of_numerator(self, double_slit):
        """D = S* for the identity metric, so S* U = S."""
        prop = build_propagator(double_slit, 0.5, 3)
        s = prop.numerator_s
        np.testing.assert_allclose(s.conj().T @ prop.approximant, s, atol=1e-12)

    def test_scalar_case(self):
        """1 x 1 Hamiltonian gives the scalar Cayley factor."""
        h = Hamiltonian(WeightedSpace.identity(1), np.array([[1.0]]))
        prop = build_propagator(h, 0.5, 1)
        expected = (1 - 0.25j) / (1 + 0.25j)
        assert prop.approximant[0, 0] == pytest.approx(expected, abs=1e-15)
        assert abs(prop.approximant[0, 0]) == pytest.approx(1.0, abs=1e-15)

    def test_zero_hamiltonian(self):
        """Zero H needs an explicit step and gives the identity."""
        h = Hamiltonian(WeightedSpace.identity(3), np.zeros((3, 3)))
        with pytest.raises(ZeroHamiltonian):
            build_propagator(h, 0.1, 1)
        prop = build_propagator(h, 0.1, 1, zero_tau=0.1)
        np.testing.assert_array_equal(prop.weighted, np.eye(3))
        assert prop.certificate.trivial
        assert prop.certificate.m_step_bound(100) == 0.0

    def test_out_of_range(self, double_slit):
        """h_t outside (0, 1) and p outside 1..6."""
        for h_t in (0.0, 1.0, 1.5, -0.1):
            with pytest.raises(StepOutOfRange, match=r"step parameter must lie in \(0,1\)"):
                build_propagator(double_slit, h_t, 1)
        with pytest.raises(OrderOutOfRange):
            build_propagator(double_slit, 0.1, 7)
        with pytest.raises(StepOutOfRange):
            build_propagator_for_step(double_slit, 1.0, 1)

    def test_unitarity(self, rng):
        """||U*U - I|| <= 1e-12 N."""
        for _ in range(50):
            n = int(rng.integers(1, 17))
            h = random_hamiltonian(rng, WeightedSpace.identity(n))
            p, h_t = int(rng.integers(1, 7)), float(rng.choice(STEP_PARAMETERS))
            u = build_propagator(h, h_t, p).approximant
            assert np.linalg.norm(u.conj().T @ u - np.eye(n), 2) <= 1e-12 * n

    def test_weighted_isometry(self, rng):
        """Weighted adjoint inverts the weighted propagator for random metrics."""
        for _ in range(20):
            n = int(rng.integers(2, 9))
            space = make_space(random_metric(rng, n))
            prop = build_propagator(random_hamiltonian(rng, space), float(rng.choice(STEP_PARAMETERS)), 2)
            np.testing.assert_allclose(prop.weighted_adjoint @ prop.weighted, np.eye(n), atol=1e-11)

    def test_spectral_form(self, rng):
        """V R(-i tau D) V^-1 equals the solved approximant."""
        space = make_space(random_metric(rng, 6))
        h = random_hamiltonian(rng, space)
        for p in (1, 2, 4):
            prop = build_propagator(h, 0.7, p)
            spectral = spectral_approximant(h, prop.tau, p)
            assert space.op_norm(spectral - prop.weighted) <= 1e-10


class TestEvolve:
    def test_zero_steps(self, double_slit):
        """m = 0 keeps only the initial state."""
        prop = build_propagator(double_slit, 0.1, 1)
        psi0 = WeightedSpace.identity(5).ket(np.eye(5)[0])
        trajectory = evolve(prop, psi0, 0)
        assert trajectory.steps == 0
        assert trajectory.last is psi0
        assert evolve_reverse(prop, psi0, 0).steps == 0

    def test_negative_steps(self, double_slit):
        """Negative step counts raise a propagator error in both directions."""
        prop = build_propagator(double_slit, 0.1, 1)
        psi0 = WeightedSpace.identity(5).ket(np.eye(5)[0])
        with pytest.raises(NegativeSteps):
            evolve(prop, psi0, -1)
        with pytest.raises(NegativeSteps):
            evolve_reverse(prop, psi0, -3)

    def test_double_slit_against_exact(self, double_slit):
        """Ten steps from e_1 stay within the m-step bound of the exact solution."""
        prop = build_propagator(double_slit, 0.1, 1)
        psi0 = WeightedSpace.identity(5).ket(np.eye(5)[0])
        trajectory = evolve(prop, psi0, 10)
        exact = exact_evolve(double_slit, 10 * prop.tau, psi0)
        error = np.linalg.norm(trajectory.last.coords - exact.coords)
        assert error <= error_bound_multi(1, 10, 0.1) * (1 + 1e-9) + ROUNDING_SLACK * 5 * 10
        assert trajectory.time(10) == pytest.approx(10 * prop.tau)

    def test_eigenvector_phase(self, double_slit):
        """An eigenvector picks up R(-i tau lambda) per step."""
        eigenvalues, vectors = spectrum(double_slit)
        space = double_slit.space
        prop = build_propagator(double_slit, 0.4, 2)
        psi0 = space.ket(vectors[:, 0])
        phase = pade_scalar(2, -1j * prop.tau * eigenvalues[0])
        trajectory = evolve(prop, psi0, 6)
        for k, state in enumerate(trajectory.states):
            np.testing.assert_allclose(state.coords, phase ** k * psi0.coords, atol=1e-12)
        back = evolve_reverse(prop, psi0, 1).last
        np.testing.assert_allclose(back.coords, np.conj(phase) * psi0.coords, atol=1e-12)

    def test_time_reversal(self, rng):
        """Forward then backward 25 steps returns the start."""
        for _ in range(10):
            space = make_space(random_metric(rng, int(rng.integers(2, 9))))
            prop = build_propagator(random_hamiltonian(rng, space), 0.9, 3)
            psi0 = random_unit_ket(rng, space)
            back = evolve_reverse(prop, evolve(prop, psi0, 25).last, 25)
            assert space.norm(Ket(space, back.last.coords - psi0.coords)) <= 1e-10
            assert back.time(25) == pytest.approx(-25 * prop.tau)

    def test_norm_drift_long_run(self, rng):
        """1000 steps with random metrics keep the weighted norm per step."""
        for _ in range(3):
            n = int(rng.integers(2, 9))
            space = make_space(random_metric(rng, n))
            prop = build_propagator(random_hamiltonian(rng, space), float(rng.choice(STEP_PARAMETERS)), 1)
            norms = evolve(prop, random_unit_ket(rng, space), 1000).norms()
            assert np.max(np.abs(np.diff(norms))) <= 1e-12
            assert np.max(np.abs(norms - 1.0)) <= 1e-10

    def test_drift_warning(self, caplog):
        """Growing norms warn only when norm checks are on."""
        space = WeightedSpace.identity(2)
        states = [space.ket([1.0, 0.0]), space.ket([2.0, 0.0])]
        with caplog.at_level(logging.WARNING):
            assert Trajectory(states, 0.1, space).check_drift() == pytest.approx(1.0)
        assert "Norm drift" in caplog.text
        caplog.clear()
        with caplog.at_level(logging.WARNING):
            assert Trajectory(states, 0.1, space, check_norms=False).check_drift() == 0.0
        assert "Norm drift" not in caplog.text


class TestExactEvolution:
    def test_semigroup(self, rng):
        """S_0 = 1 and S_t S_s = S_(t+s)."""
        space = make_space(random_metric(rng, 5))
        h = random_hamiltonian(rng, space)
        np.testing.assert_allclose(exact_propagator(h, 0.0), np.eye(5), atol=1e-12)
        np.testing.assert_allclose(
            exact_propagator(h, 0.3) @ exact_propagator(h, 0.45), exact_propagator(h, 0.75), atol=1e-11
        )

    def test_matches_expm(self, double_slit):
        """Spectral exponential agrees with scipy's expm."""
        np.testing.assert_allclose(
            exact_propagator(double_slit, 1.3), la.expm(-1.3j * double_slit.matrix), atol=1e-12
        )

    def test_zero_time_copies(self, double_slit):
        """t = 0 returns the initial state."""
        psi0 = WeightedSpace.identity(5).ket(np.eye(5)[2])
        np.testing.assert_array_equal(exact_evolve(double_slit, 0.0, psi0).coords, psi0.coords)


class TestErrorBoundPopulations:
    def test_single_step_bound(self, rng):
        """200 random Hamiltonians, N <= 16: single step error within the bound."""
        for _ in range(200):
            n = int(rng.integers(1, 17))
            h = random_hamiltonian(rng, WeightedSpace.identity(n))
            p, h_t = int(rng.integers(1, 4)), float(rng.choice(STEP_PARAMETERS))
            prop = build_propagator(h, h_t, p)
            error = np.linalg.norm(exact_propagator(h, prop.tau) - prop.approximant, 2)
            assert error <= error_bound_single(p, h_t) * (1 + 1e-9) + ROUNDING_SLACK * n

    def test_multi_step_bound(self, rng):
        """m <= 100 steps: error within m^(2p+1)/(2p+1)! h^(2p+1)."""
        for _ in range(60):
            n = int(rng.integers(1, 17))
            h = random_hamiltonian(rng, WeightedSpace.identity(n))
            p, h_t = int(rng.integers(1, 4)), float(rng.choice(STEP_PARAMETERS))
            m = int(rng.integers(1, 101))
            prop = build_propagator(h, h_t, p)
            error = np.linalg.norm(exact_propagator(h, m * prop.tau) - np.linalg.matrix_power(prop.weighted, m), 2)
            assert error <= error_bound_multi(p, m, h_t) * (1 + 1e-9) + ROUNDING_SLACK * n * m

    @pytest.mark.parametrize("p", [1, 2, 3])
    def test_convergence_order(self, rng, p):
        """Halving h divides the single step error by about 2^(2p+1)."""
        h = random_hamiltonian(rng, WeightedSpace.identity(6))
        errors = []
        for h_t in (0.4, 0.2):
            prop = build_propagator(h, h_t, p)
            errors.append(np.linalg.norm(exact_propagator(h, prop.tau) - prop.approximant, 2))
        assert math.log2(errors[0] / errors[1]) >= 2 * p + 1 - 0.2
