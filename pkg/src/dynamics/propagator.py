import logging
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as la

from .graphham import Hamiltonian
from .hilbert import (
    DimensionMismatch,
    Ket,
    QuantumDynamicsError,
    StateSpace,
    WeightedSpace,
)

logger = logging.getLogger(__name__)

MAX_PADE_ORDER = 6
NORM_DRIFT_TOLERANCE = 1e-10
M_STEP_BOUND_FORMULA = "m^(2p+1)/(2p+1)! * h^(2p+1)"


class PropagatorError(QuantumDynamicsError):
    """Base exception for propagator construction errors."""
    pass

class IndexOutOfRange(PropagatorError):
    """Exception raised when a Pade coefficient index is outside 0..p."""
    pass

class OrderOutOfRange(PropagatorError):
    """Exception raised when the Pade order is outside 1..6."""
    pass

class StepOutOfRange(PropagatorError):
    """Exception raised when the step parameter h_t is outside (0, 1)."""
    pass

class SingularDenominator(PropagatorError):
    """Exception raised when the Pade denominator cannot be solved against."""
    pass

class ZeroHamiltonian(PropagatorError):
    """Exception raised when tau = h_t / ||H|| is undefined because H = 0."""
    pass

class NegativeSteps(PropagatorError):
    """Exception raised when a trajectory is asked for a negative number of steps."""
    pass


def pade_coefficient(p: int, q: int, j: int) -> Fraction:
    """
    Coefficient (p+q-j)! p! / ((p+q)! j! (p-j)!) of X^j in the numerator N_pq(X).

    The denominator coefficients of D_pq are pade_coefficient(q, p, j).
    """
    if p < 0 or q < 0 or not 0 <= j <= p:
        raise IndexOutOfRange(f"Pade coefficient index j={j} outside 0..{p}")
    f = math.factorial
    return Fraction(f(p + q - j) * f(p), f(p + q) * f(j) * f(p - j))


def pade_polynomials(p: int) -> Tuple[Tuple[Fraction, ...], Tuple[Fraction, ...]]:
    """Numerator and denominator coefficients of the diagonal approximant, D_pp(X) = N_pp(-X)."""
    numerator = tuple(pade_coefficient(p, p, j) for j in range(p + 1))
    denominator = tuple((-1) ** j * c for j, c in enumerate(numerator))
    return numerator, denominator


@lru_cache(maxsize=None)
def pade_taylor_coefficients(p: int, order: int) -> Tuple[Fraction, ...]:
    """Taylor coefficients c_{p,0..order} of N_pp(x)/D_pp(x) about 0 by exact series division."""
    numerator, denominator = pade_polynomials(p)
    series = []
    for k in range(order + 1):
        value = numerator[k] if k <= p else Fraction(0)
        for i in range(1, min(k, p) + 1):
            value -= denominator[i] * series[k - i]
        series.append(value)
    return tuple(series)


def pade_scalar(p: int, x: complex) -> complex:
    """Scalar diagonal approximant R_pp(x)."""
    numerator, denominator = pade_polynomials(p)
    num = sum(float(c) * x ** j for j, c in enumerate(numerator))
    den = sum(float(c) * x ** j for j, c in enumerate(denominator))
    return complex(num / den)


def _leading_error_constant(p: int) -> float:
    order = 2 * p + 1
    c = pade_taylor_coefficients(p, order)[order]
    return float(abs(Fraction(1, math.factorial(order)) - c))


def error_bound_single(p: int, h_t: float) -> float:
    """Single step bound |1/(2p+1)! - c_{p,2p+1}| h^(2p+1)."""
    return _leading_error_constant(p) * h_t ** (2 * p + 1)


def error_bound_multi(p: int, m: int, h_t: float) -> float:
    """m-step bound m^(2p+1)/(2p+1)! h^(2p+1)."""
    order = 2 * p + 1
    return (m * h_t) ** order / math.factorial(order)


@dataclass(frozen=True)
class ErrorCertificate:
    p: int
    h_t: float
    tau: float
    single_step_bound: float
    coefficient_c: float
    trivial: bool = False
    unitary: bool = True

    def m_step_bound(self, m: int) -> float:
        return 0.0 if self.trivial else error_bound_multi(self.p, m, self.h_t)

    def to_dict(self, m: Optional[int] = None) -> Dict[str, object]:
        data: Dict[str, object] = {
            'p': self.p,
            'h_t': self.h_t,
            'tau': self.tau,
            'single_step_bound': self.single_step_bound,
            'c_p_2p1': self.coefficient_c,
            'm_step_bound_formula': M_STEP_BOUND_FORMULA,
            'trivial': self.trivial,
            'unitary': self.unitary,
        }
        if m is not None:
            data['steps'] = m
            data['m_step_bound'] = self.m_step_bound(m)
        return data


def make_certificate(p: int, h_t: float, tau: float, trivial: bool = False) -> ErrorCertificate:
    order = 2 * p + 1
    return ErrorCertificate(
        p=p,
        h_t=h_t,
        tau=tau,
        single_step_bound=0.0 if trivial else error_bound_single(p, h_t),
        coefficient_c=float(pade_taylor_coefficients(p, order)[order]),
        trivial=trivial,
    )


@dataclass(frozen=True, eq=False)
class PadePropagator:
    """
    One step of the diagonal Pade approximant of exp(-i tau H).

    numerator_s and approximant live in the Euclidean picture W H W^-1, where
    the approximant is unitary; weighted = W^-1 U W acts on kets of the space.
    """
    space: WeightedSpace
    order_p: int
    tau: float
    h_t: float
    numerator_s: np.ndarray
    approximant: np.ndarray
    weighted: np.ndarray
    certificate: ErrorCertificate

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def weighted_adjoint(self) -> np.ndarray:
        return self.space.adjoint(self.weighted)

    def apply(self, psi: Ket) -> Ket:
        if len(psi) != self.dim:
            raise DimensionMismatch(f"State of length {len(psi)} for a propagator of dimension {self.dim}")
        return Ket(psi.space, self.weighted @ psi.coords)


def _check_order(p: int) -> None:
    if not 1 <= p <= MAX_PADE_ORDER:
        raise OrderOutOfRange(f"Pade order must lie in 1..{MAX_PADE_ORDER}, got {p}")


def _matrix_polynomial(coefficients: Sequence[float], x: np.ndarray) -> np.ndarray:
    eye = np.eye(x.shape[0], dtype=complex)
    result = coefficients[-1] * eye
    for c in reversed(coefficients[:-1]):
        result = result @ x + c * eye
    return result


def _assemble(
    h: Hamiltonian,
    tau: float,
    h_t: float,
    p: int,
    coefficients: Optional[Tuple[Sequence[float], Sequence[float]]] = None,
) -> PadePropagator:
    space = h.space
    conjugated = space.conjugate(h.matrix)
    conjugated = (conjugated + conjugated.conj().T) / 2
    x = -1j * tau * conjugated

    if coefficients is None:
        numerator, denominator = pade_polynomials(p)
        coefficients = ([float(c) for c in numerator], [float(c) for c in denominator])
    s = _matrix_polynomial(coefficients[0], x)
    d = _matrix_polynomial(coefficients[1], x)

    try:
        with warnings.catch_warnings():
            warnings.simplefilter('error', la.LinAlgWarning)
            u = la.lu_solve(la.lu_factor(d), s)
    except (la.LinAlgError, la.LinAlgWarning, ValueError) as e:
        raise SingularDenominator(f"Pade denominator could not be factored: {e}") from e
    if not np.all(np.isfinite(u)):
        raise SingularDenominator("Pade denominator solve produced non-finite entries")

    weighted = space.root_inverse @ u @ space.root
    trivial = h_t == 0.0
    logger.debug(f"Pade propagator p={p}, tau={tau:.6g}, h_t={h_t:.6g}, dim={space.dim}")
    return PadePropagator(
        space=space,
        order_p=p,
        tau=tau,
        h_t=h_t,
        numerator_s=s,
        approximant=u,
        weighted=weighted,
        certificate=make_certificate(p, h_t, tau, trivial=trivial),
    )


def build_propagator(
    h: Hamiltonian,
    h_t: float,
    p: int,
    *,
    zero_tau: Optional[float] = None,
    coefficients: Optional[Tuple[Sequence[float], Sequence[float]]] = None,
) -> PadePropagator:
    """
    Build U = D_pp(-i tau H)^-1 N_pp(-i tau H) with tau = h_t / ||H||.

    Args:
        h: self-adjoint Hamiltonian
        h_t: step parameter in (0, 1)
        p: Pade order in 1..6
        zero_tau: step to use when H = 0; without it a zero Hamiltonian is an error
        coefficients: numerator/denominator coefficients overriding the Pade ones

    Returns:
        PadePropagator with its error certificate
    """
    _check_order(p)
    if not 0.0 < h_t < 1.0:
        raise StepOutOfRange(f"step parameter must lie in (0,1), got {h_t}")
    norm = h.norm
    if norm == 0.0:
        if zero_tau is None:
            raise ZeroHamiltonian("Hamiltonian is zero; tau = h_t/||H|| is undefined")
        logger.warning(f"Zero Hamiltonian, using identity propagator with tau={zero_tau}")
        return _assemble(h, zero_tau, 0.0, p, coefficients)
    return _assemble(h, h_t / norm, h_t, p, coefficients)


def build_propagator_for_step(
    h: Hamiltonian,
    tau: float,
    p: int,
    *,
    coefficients: Optional[Tuple[Sequence[float], Sequence[float]]] = None,
) -> PadePropagator:
    """Propagator for a prescribed tau; h_t = tau ||H|| must stay below 1."""
    _check_order(p)
    if tau <= 0.0:
        raise StepOutOfRange(f"time step must be positive, got {tau}")
    h_t = tau * h.norm
    if h_t >= 1.0:
        raise StepOutOfRange(f"step parameter must lie in (0,1), got {h_t} for tau={tau}")
    return _assemble(h, tau, h_t, p, coefficients)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States psi_0 .. psi_m spaced by tau; direction -1 marks a time-reversed run."""
    states: Tuple[Ket, ...]
    tau: float
    space: StateSpace
    direction: int = 1
    check_norms: bool = True

    def __post_init__(self):
        object.__setattr__(self, 'states', tuple(self.states))
        if not self.states:
            raise DimensionMismatch("Trajectory needs at least the initial state")
        for k, state in enumerate(self.states):
            if len(state) != self.space.dim:
                raise DimensionMismatch(
                    f"State {k} has length {len(state)}, trajectory space has dimension {self.space.dim}"
                )

    def __len__(self) -> int:
        return len(self.states)

    @property
    def steps(self) -> int:
        return len(self.states) - 1

    @property
    def last(self) -> Ket:
        return self.states[-1]

    def time(self, k: int) -> float:
        return self.direction * k * self.tau

    def norms(self) -> np.ndarray:
        return np.array([self.space.norm(state) for state in self.states])

    def max_norm_drift(self) -> float:
        norms = self.norms()
        return float(np.max(np.abs(norms - norms[0])) / norms[0]) if norms[0] > 0 else 0.0

    def as_array(self) -> np.ndarray:
        return np.array([state.coords for state in self.states])

    def check_drift(self) -> float:
        """Relative norm drift, logged as a warning above NORM_DRIFT_TOLERANCE."""
        if not self.check_norms or self.steps == 0:
            return 0.0
        drift = self.max_norm_drift()
        if drift > NORM_DRIFT_TOLERANCE:
            logger.warning(f"Norm drift {drift:.3e} over {self.steps} steps exceeds {NORM_DRIFT_TOLERANCE}")
        return drift


def _run(operator: np.ndarray, psi0: Ket, m: int, space: StateSpace, tau: float, direction: int) -> Trajectory:
    if m < 0:
        raise NegativeSteps(f"Number of steps must be nonnegative, got {m}")
    if len(psi0) != space.dim:
        raise DimensionMismatch(f"State of length {len(psi0)} for a propagator of dimension {space.dim}")
    states = [psi0]
    v = psi0.coords
    for _ in range(m):
        v = operator @ v
        states.append(Ket(psi0.space, v))
    trajectory = Trajectory(tuple(states), tau, space, direction=direction)
    trajectory.check_drift()
    return trajectory


def evolve(prop: PadePropagator, psi0: Ket, m: int) -> Trajectory:
    """psi_k = U_hat^k psi_0 by repeated matrix-vector products."""
    return _run(prop.weighted, psi0, m, prop.space, prop.tau, 1)


def evolve_reverse(prop: PadePropagator, psi_m: Ket, m: int) -> Trajectory:
    """psi_{-k} = (U_hat^dagger)^k psi_m, the discrete time reversal."""
    return _run(prop.weighted_adjoint, psi_m, m, prop.space, prop.tau, -1)


def _spectral_function(h: Hamiltonian, values: np.ndarray) -> np.ndarray:
    eigenvalues, vectors = h.eigensystem
    inverse = vectors.conj().T @ h.space.metric
    return vectors @ (values[:, None] * inverse)


def exact_propagator(h: Hamiltonian, t: float) -> np.ndarray:
    """exp(-i t H) = V exp(-i t D) V^-1."""
    return _spectral_function(h, np.exp(-1j * t * h.eigensystem.eigenvalues))


def spectral_approximant(h: Hamiltonian, tau: float, p: int) -> np.ndarray:
    """V R_pp(-i tau D) V^-1, the eigenbasis form of the weighted approximant."""
    _check_order(p)
    values = np.array([pade_scalar(p, -1j * tau * lam) for lam in h.eigensystem.eigenvalues])
    return _spectral_function(h, values)


def exact_evolve(h: Hamiltonian, t: float, psi0: Ket) -> Ket:
    """Reference solution psi(t) = exp(-i t H) psi_0."""
    if len(psi0) != h.dim:
        raise DimensionMismatch(f"State of length {len(psi0)} for a Hamiltonian of dimension {h.dim}")
    if t == 0:
        return Ket(psi0.space, psi0.coords.copy())
    return Ket(psi0.space, exact_propagator(h, t) @ psi0.coords)
