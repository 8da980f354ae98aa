import logging

import numpy as np
import pytest

from src.dynamics.propagator import pade_polynomials
from src.dynamics.verification import PropertySuite, faulty_coefficients

DEFAULT_SEED = 20240607


class TestPropertySuite:
    @pytest.fixture
    def report(self):
        """Small suite run with the default seed."""
        return PropertySuite(dims=5, trials=3, seed=DEFAULT_SEED).run()

    def test_all_properties_pass(self, report):
        """Every property holds on the default seed."""
        assert report.passed, report.lines()
        assert all(line.startswith("PASS") for line in report.lines())
        names = {result.name for result in report.results}
        assert {'unitarity', 'weighted_isometry', 'ladder_identity', 'particular_round_trip',
                'single_step_bound', 'multi_step_bound', 'kron_bound', 'time_reversal'} <= names

    def test_deterministic(self, report):
        """Same seed, same outcome, regardless of worker count."""
        again = PropertySuite(dims=5, trials=3, seed=DEFAULT_SEED, workers=1).run()
        assert report.lines() == again.lines()

    def test_injected_fault_breaks_unitarity(self):
        """Flipped Pade coefficient is caught and the failing seed reported."""
        report = PropertySuite(dims=4, trials=2, seed=11, inject_fault=True).run()
        assert not report.passed
        unitarity = next(r for r in report.results if r.name == 'unitarity')
        assert not unitarity.passed
        assert unitarity.failing_seed == 11
        assert any(line.startswith("FAIL unitarity (seed=11)") for line in report.lines())

    def test_zero_trials_is_vacuous(self, caplog):
        """No trials passes with a warning."""
        with caplog.at_level(logging.WARNING):
            report = PropertySuite(trials=0).run()
        assert report.passed
        assert "vacuously" in caplog.text

    def test_faulty_coefficients(self):
        """Only the linear numerator term changes."""
        numerator, denominator = faulty_coefficients(2)
        exact_numerator, exact_denominator = pade_polynomials(2)
        assert numerator[1] == -3 * float(exact_numerator[1])
        assert numerator[2] == float(exact_numerator[2])
        np.testing.assert_array_equal(denominator, [float(c) for c in exact_denominator])
