import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .graphham import Hamiltonian
from .hilbert import Ket, QuantumDynamicsError, WeightedSpace, make_space
from .kronstruct import (
    KronHamiltonian,
    apply_kron,
    build_kron_propagator,
)
from .ladder import AnalysisBasis, decompose, make_ladder, reconstruct
from .observables import expected_number, expected_number_via_lower
from .propagator import (
    build_propagator,
    error_bound_multi,
    error_bound_single,
    evolve,
    evolve_reverse,
    exact_propagator,
    pade_polynomials,
)

logger = logging.getLogger(__name__)

STEP_PARAMETERS = (0.1, 0.5, 0.9)
ROUNDING_SLACK = 64 * np.finfo(float).eps

CheckOutcome = Tuple[bool, str]


def random_hermitian(rng: np.random.Generator, n: int) -> np.ndarray:
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return (a + a.conj().T) / 2


def random_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(a)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_metric(rng: np.random.Generator, n: int) -> np.ndarray:
    """Well conditioned Hermitian positive definite matrix."""
    a = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2 * n)
    return a.conj().T @ a + np.eye(n)


def random_unit_ket(rng: np.random.Generator, space) -> Ket:
    coords = rng.standard_normal(space.dim) + 1j * rng.standard_normal(space.dim)
    ket = Ket(space, coords)
    return Ket(space, coords / space.norm(ket))


def random_hamiltonian(rng: np.random.Generator, space: WeightedSpace) -> Hamiltonian:
    """Self-adjoint in the weighted space: W^-1 H_c W with H_c Hermitian."""
    hermitian = random_hermitian(rng, space.dim)
    return Hamiltonian(space, space.root_inverse @ hermitian @ space.root)


def faulty_coefficients(p: int) -> Tuple[List[float], List[float]]:
    """Pade coefficients with the linear numerator term flipped and tripled."""
    numerator, denominator = pade_polynomials(p)
    numerator = [float(c) for c in numerator]
    numerator[1] = -3 * numerator[1]
    return numerator, [float(c) for c in denominator]


@dataclass
class PropertyResult:
    name: str
    passed: bool
    trials: int
    failing_seed: Optional[int] = None
    detail: str = ''


@dataclass
class VerificationReport:
    results: List[PropertyResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(result.passed for result in self.results)

    def lines(self) -> List[str]:
        lines = []
        for result in self.results:
            if result.passed:
                lines.append(f"PASS {result.name} ({result.trials} trials)")
            else:
                lines.append(f"FAIL {result.name} (seed={result.failing_seed}): {result.detail}")
        return lines


class PropertySuite:
    """Randomized checks of the unitarity, norm, ladder, round-trip and error-bound properties."""

    def __init__(self, dims: int = 6, trials: int = 20, seed: int = 0,
                 inject_fault: bool = False, workers: Optional[int] = None):
        self.dims = max(2, dims)
        self.trials = trials
        self.seed = seed
        self.inject_fault = inject_fault
        self.workers = workers
        self.checks: List[Tuple[str, Callable[[np.random.Generator], CheckOutcome]]] = [
            ('unitarity', self._check_unitarity),
            ('weighted_isometry', self._check_weighted_isometry),
            ('time_reversal', self._check_time_reversal),
            ('ladder_identity', self._check_ladder_identity),
            ('particular_round_trip', self._check_particular_round_trip),
            ('number_identity', self._check_number_identity),
            ('single_step_bound', self._check_single_step_bound),
            ('multi_step_bound', self._check_multi_step_bound),
            ('kron_apply_oracle', self._check_kron_apply),
            ('kron_bound', self._check_kron_bound),
        ]

    def run(self) -> VerificationReport:
        if self.trials == 0:
            logger.warning("Zero trials requested; every property passes vacuously")
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            results = list(pool.map(self._run_property, range(len(self.checks))))
        return VerificationReport(results)

    def _run_property(self, index: int) -> PropertyResult:
        name, check = self.checks[index]
        for trial in range(self.trials):
            instance_seed = self.seed + trial
            rng = np.random.default_rng([instance_seed, index])
            try:
                passed, detail = check(rng)
            except QuantumDynamicsError as e:
                passed, detail = False, f"{type(e).__name__}: {e}"
            if not passed:
                logger.error(f"Property {name} failed for instance seed {instance_seed}: {detail}")
                return PropertyResult(name, False, trial + 1, instance_seed, detail)
        return PropertyResult(name, True, self.trials)

    def _dimension(self, rng: np.random.Generator, cap: Optional[int] = None) -> int:
        upper = self.dims if cap is None else min(self.dims, cap)
        return int(rng.integers(2, upper + 1))

    def _propagator(self, h: Hamiltonian, h_t: float, p: int):
        coefficients = faulty_coefficients(p) if self.inject_fault else None
        return build_propagator(h, h_t, p, coefficients=coefficients)

    def _check_unitarity(self, rng) -> CheckOutcome:
        n = self._dimension(rng)
        h = random_hamiltonian(rng, WeightedSpace.identity(n))
        p, h_t = int(rng.integers(1, 4)), float(rng.choice(STEP_PARAMETERS))
        u = self._propagator(h, h_t, p).approximant
        defect = np.linalg.norm(u.conj().T @ u - np.eye(n), 2)
        return defect <= 1e-12 * n, f"||U*U - I|| = {defect:.3e} (N={n}, p={p}, h_t={h_t})"

    def _check_weighted_isometry(self, rng) -> CheckOutcome:
        space = make_space(random_metric(rng, self._dimension(rng)))
        prop = self._propagator(random_hamiltonian(rng, space), float(rng.choice(STEP_PARAMETERS)), 1)
        u = random_unit_ket(rng, space)
        drift = abs(space.norm(prop.apply(u)) - 1.0)
        return drift <= 1e-12, f"weighted norm drift {drift:.3e}"

    def _check_time_reversal(self, rng) -> CheckOutcome:
        space = make_space(random_metric(rng, self._dimension(rng)))
        prop = self._propagator(random_hamiltonian(rng, space), float(rng.choice(STEP_PARAMETERS)), 2)
        psi0 = random_unit_ket(rng, space)
        back = evolve_reverse(prop, evolve(prop, psi0, 25).last, 25).last
        error = space.norm(Ket(space, back.coords - psi0.coords))
        return error <= 1e-10, f"round trip error {error:.3e}"

    def _check_ladder_identity(self, rng) -> CheckOutcome:
        ladder = make_ladder(self._dimension(rng, cap=12))
        defect = np.max(np.abs(ladder.raising @ ladder.lowering - ladder.number))
        return defect <= 1e-14 * ladder.dim, f"||a^dagger a - N|| = {defect:.3e}"

    def _check_particular_round_trip(self, rng) -> CheckOutcome:
        space = make_space(random_metric(rng, self._dimension(rng, cap=8)))
        h = random_hamiltonian(rng, space)
        basis = AnalysisBasis(space, space.root_inverse @ random_unitary(rng, space.dim))
        ladder = make_ladder(space.dim)
        rebuilt = reconstruct(decompose(h, ladder, basis), ladder, basis)
        error = space.op_norm(rebuilt - h.matrix)
        return error <= 1e-10 * max(1.0, space.op_norm(h.matrix)), f"round trip error {error:.3e}"

    def _check_number_identity(self, rng) -> CheckOutcome:
        n = self._dimension(rng)
        space = WeightedSpace.identity(n)
        ladder = make_ladder(n)
        psi = random_unit_ket(rng, space)
        direct = expected_number(ladder, space, psi)
        via_lower = expected_number_via_lower(ladder, space, psi)
        in_range = 1.0 - 1e-12 <= direct <= n + 1e-12
        agree = abs(direct - via_lower) <= 1e-10 * direct
        return in_range and agree, f"<N> = {direct!r}, ||a psi||^2 = {via_lower!r}, N = {n}"

    def _check_single_step_bound(self, rng) -> CheckOutcome:
        n = self._dimension(rng)
        h = random_hamiltonian(rng, WeightedSpace.identity(n))
        p, h_t = int(rng.integers(1, 4)), float(rng.choice(STEP_PARAMETERS))
        prop = self._propagator(h, h_t, p)
        error = np.linalg.norm(exact_propagator(h, prop.tau) - prop.approximant, 2)
        bound = error_bound_single(p, h_t) * (1 + 1e-9) + ROUNDING_SLACK * n
        return error <= bound, f"error {error:.3e} > bound {bound:.3e} (p={p}, h_t={h_t})"

    def _check_multi_step_bound(self, rng) -> CheckOutcome:
        n = self._dimension(rng)
        space = WeightedSpace.identity(n)
        h = random_hamiltonian(rng, space)
        p, h_t = int(rng.integers(1, 4)), float(rng.choice(STEP_PARAMETERS))
        m = int(rng.integers(1, 101))
        prop = self._propagator(h, h_t, p)
        error = space.op_norm(exact_propagator(h, m * prop.tau) - np.linalg.matrix_power(prop.weighted, m))
        bound = error_bound_multi(p, m, h_t) * (1 + 1e-9) + ROUNDING_SLACK * n * m
        return error <= bound, f"error {error:.3e} > bound {bound:.3e} (p={p}, m={m}, h_t={h_t})"

    def _kron_instance(self, rng, shift: complex = 0j) -> KronHamiltonian:
        count = int(rng.integers(2, 4))
        factors = []
        for _ in range(count):
            n = self._dimension(rng, cap=4)
            factors.append(random_hamiltonian(rng, WeightedSpace.identity(n)))
        return KronHamiltonian(tuple(factors), shift)

    def _check_kron_apply(self, rng) -> CheckOutcome:
        kh = self._kron_instance(rng, shift=float(rng.standard_normal()))
        prop = build_kron_propagator(kh, float(rng.choice(STEP_PARAMETERS)), 1)
        psi = random_unit_ket(rng, kh.space)
        error = np.linalg.norm(apply_kron(prop, psi).coords - prop.dense() @ psi.coords)
        return error <= 1e-12, f"matrix-free vs dense difference {error:.3e}"

    def _check_kron_bound(self, rng) -> CheckOutcome:
        kh = self._kron_instance(rng, shift=float(rng.choice((0.0, 1.0, 8.0, 27.0))))
        p, h_t = int(rng.integers(1, 3)), float(rng.choice(STEP_PARAMETERS))
        m = int(rng.integers(1, 31))
        prop = build_kron_propagator(kh, h_t, p)
        dense_h = Hamiltonian(WeightedSpace.identity(kh.total_dim), kh.dense())
        exact = exact_propagator(dense_h, m * prop.tau)
        error = np.linalg.norm(exact - np.linalg.matrix_power(prop.dense(), m), 2)
        bound = prop.certificate.m_step_bound(m) * (1 + 1e-9) + ROUNDING_SLACK * kh.total_dim * m
        return error <= bound, f"error {error:.3e} > bound {bound:.3e} (M={len(kh.factors)}, c={kh.shift.real:g}, p={p}, m={m})"
