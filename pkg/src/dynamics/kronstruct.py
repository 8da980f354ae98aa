"""
Kronecker-structured non-interacting Hamiltonians.

The sum written with a circled plus over the particles is the Kronecker sum
H_1 (+) H_2 = H_1 x 1 + 1 x H_2, not a block-diagonal direct sum. Product
states are flattened row-major: the first factor is the slowest index.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import reduce
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from .graphham import Hamiltonian
from .hilbert import (
    DimensionMismatch,
    Ket,
    QuantumDynamicsError,
    WeightedSpace,
)
from .propagator import (
    M_STEP_BOUND_FORMULA,
    NegativeSteps,
    PadePropagator,
    StepOutOfRange,
    Trajectory,
    ZeroHamiltonian,
    build_propagator_for_step,
    error_bound_multi,
    pade_scalar,
    pade_taylor_coefficients,
)

logger = logging.getLogger(__name__)

MAX_DENSE_DIM = 4096

class NegativeExponent(QuantumDynamicsError):
    """Exception raised when a Kronecker power multi-index has a negative entry."""
    pass

class TooLargeForDense(QuantumDynamicsError):
    """Exception raised when a dense oracle would exceed the size guard."""
    pass


MatrixLike = Union[np.ndarray, Hamiltonian]


def _as_matrix(factor: MatrixLike) -> np.ndarray:
    if isinstance(factor, Hamiltonian):
        return factor.matrix
    matrix = np.asarray(factor, dtype=complex)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionMismatch(f"Kronecker factor must be square, got shape {matrix.shape}")
    return matrix


def _guard_dense(total_dim: int) -> None:
    if total_dim > MAX_DENSE_DIM:
        raise TooLargeForDense(f"Dense product of dimension {total_dim} exceeds {MAX_DENSE_DIM}")


def kron_power(mats: Sequence[MatrixLike], r: Sequence[int]) -> np.ndarray:
    """{B_alpha}^(r) = B_1^r_1 x ... x B_M^r_M, a zero power giving the factor identity."""
    if len(mats) != len(r):
        raise DimensionMismatch(f"{len(mats)} factors but a multi-index of length {len(r)}")
    if any(power < 0 for power in r):
        raise NegativeExponent(f"Multi-index {tuple(r)} has a negative entry")
    matrices = [_as_matrix(m) for m in mats]
    _guard_dense(int(np.prod([m.shape[0] for m in matrices])))
    powers = [np.linalg.matrix_power(m, power) for m, power in zip(matrices, r)]
    return reduce(np.kron, powers)


def kron_sum(factors: Sequence[MatrixLike]) -> np.ndarray:
    """Dense sum over alpha of 1 x ... x H_alpha x ... x 1 (oracle use only)."""
    if not factors:
        raise DimensionMismatch("Kronecker sum needs at least one factor")
    matrices = [_as_matrix(f) for f in factors]
    _guard_dense(int(np.prod([m.shape[0] for m in matrices])))
    count = len(matrices)
    return sum(kron_power(matrices, [int(a == b) for b in range(count)]) for a in range(count))


def mode_apply(mats: Sequence[np.ndarray], vec: np.ndarray, dims: Sequence[int]) -> np.ndarray:
    """Apply (x_alpha mats[alpha]) to a flattened tensor one mode at a time."""
    tensor = np.asarray(vec, dtype=complex).reshape(tuple(dims))
    for axis, mat in enumerate(mats):
        tensor = np.moveaxis(np.tensordot(mat, tensor, axes=([1], [axis])), 0, axis)
    return tensor.reshape(-1)


def multi_index_to_flat(index: Sequence[int], dims: Sequence[int]) -> int:
    """0-based flat position of the 1-based multi-index (i_1, ..., i_M)."""
    return int(np.ravel_multi_index(tuple(i - 1 for i in index), tuple(dims)))


def flat_to_multi_index(position: int, dims: Sequence[int]) -> Tuple[int, ...]:
    return tuple(int(i) + 1 for i in np.unravel_index(position, tuple(dims)))


@dataclass(frozen=True, eq=False)
class ProductSpace:
    """Tensor product of weighted spaces with metric M_1 x ... x M_M, never materialized."""
    factors: Tuple[WeightedSpace, ...]

    def __post_init__(self):
        object.__setattr__(self, 'factors', tuple(self.factors))
        if not self.factors:
            raise DimensionMismatch("Product space needs at least one factor")

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(space.dim for space in self.factors)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def ket(self, coords) -> Ket:
        return Ket(self, coords)

    def weighted_coords(self, u: Ket) -> np.ndarray:
        if len(u) != self.dim:
            raise DimensionMismatch(f"Ket of length {len(u)} in a product space of dimension {self.dim}")
        return mode_apply([space.root for space in self.factors], u.coords, self.dims)

    def inner(self, u: Ket, v: Ket) -> complex:
        return complex(np.vdot(self.weighted_coords(u), self.weighted_coords(v)))

    def norm(self, u: Ket) -> float:
        return float(np.linalg.norm(self.weighted_coords(u)))


def product_state(kets: Sequence[Ket]) -> Ket:
    """|psi_1> x ... x |psi_M> on the product of the kets' spaces."""
    space = ProductSpace(tuple(k.space for k in kets))
    return Ket(space, reduce(np.kron, [k.coords for k in kets]))


@dataclass(frozen=True, eq=False)
class KronHamiltonian:
    """Non-interacting Hamiltonian H_1 (+) ... (+) H_M + c 1."""
    factors: Tuple[Hamiltonian, ...]
    shift: complex = 0j

    def __post_init__(self):
        object.__setattr__(self, 'factors', tuple(self.factors))
        object.__setattr__(self, 'shift', complex(self.shift))
        if not self.factors:
            raise DimensionMismatch("Kronecker Hamiltonian needs at least one factor")

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(f.dim for f in self.factors)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def space(self) -> ProductSpace:
        return ProductSpace(tuple(f.space for f in self.factors))

    def dense(self) -> np.ndarray:
        return kron_sum(self.factors) + self.shift * np.eye(self.total_dim, dtype=complex)


def error_bound_kron(p: int, m: int, n_factors: int, h: float) -> float:
    """Tensor bound (2^M - 1) m^(2p+1)/(2p+1)! h^(2p+1)."""
    return (2 ** n_factors - 1) * error_bound_multi(p, m, h)


@dataclass(frozen=True)
class KronCertificate:
    """
    Tensor error certificate.

    A nonzero real shift c is bounded as one more factor, the 1 x 1 Hamiltonian
    c with step size shift_h = tau |c|. A complex shift is not unitary and gets
    no bound.
    """
    p: int
    n_factors: int
    h: float
    tau: float
    factor_h: Tuple[float, ...]
    shift_h: float = 0.0
    unitary: bool = True

    @property
    def bounded_factors(self) -> int:
        return self.n_factors + (1 if self.shift_h > 0.0 else 0)

    @property
    def coefficient_c(self) -> float:
        order = 2 * self.p + 1
        return float(pade_taylor_coefficients(self.p, order)[order])

    @property
    def single_step_bound(self) -> Optional[float]:
        return self.m_step_bound(1)

    def m_step_bound(self, m: int) -> Optional[float]:
        if not self.unitary:
            return None
        return error_bound_kron(self.p, m, self.bounded_factors, self.h)

    def to_dict(self, m: Optional[int] = None) -> Dict[str, object]:
        data: Dict[str, object] = {
            'p': self.p,
            'h_t': self.h,
            'tau': self.tau,
            'single_step_bound': self.single_step_bound,
            'c_p_2p1': self.coefficient_c,
            'm_step_bound_formula': f"(2^M-1) * {M_STEP_BOUND_FORMULA}",
            'trivial': self.h == 0.0,
            'unitary': self.unitary,
            'factors': self.n_factors,
            'bounded_factors': self.bounded_factors,
            'h': self.h,
            'factor_h': list(self.factor_h),
            'shift_h': self.shift_h,
        }
        if m is not None:
            data['steps'] = m
            data['m_step_bound'] = self.m_step_bound(m)
        return data


@dataclass(frozen=True, eq=False)
class KronPropagator:
    factor_props: Tuple[PadePropagator, ...]
    shift: complex
    shift_phase: complex
    h: float
    tau: float
    order_p: int
    space: ProductSpace
    certificate: KronCertificate

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(fp.dim for fp in self.factor_props)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))

    def dense(self) -> np.ndarray:
        _guard_dense(self.total_dim)
        return self.shift_phase * reduce(np.kron, [fp.weighted for fp in self.factor_props])


def shift_propagator(c: complex, tau: float, p: int) -> complex:
    """Scalar approximant R_pp(-i tau c) of exp(-i tau c)."""
    if c == 0:
        return 1.0 + 0j
    return pade_scalar(p, -1j * tau * complex(c))


def build_kron_propagator(
    kh: KronHamiltonian,
    h_t: float,
    p: int,
    *,
    zero_tau: Optional[float] = None,
    workers: Optional[int] = None,
) -> KronPropagator:
    """
    Factor propagators with one common step tau = h_t / max(||H_alpha||, |c|).

    The shift c enters the maximum, so tau |c| <= h_t as for every factor.

    Args:
        kh: Kronecker Hamiltonian
        h_t: step parameter in (0, 1); it equals h = sup(h_alpha, tau |c|)
        p: Pade order
        zero_tau: step to use when every factor and the shift are zero
        workers: thread count for building the factor propagators

    Returns:
        KronPropagator with the tensor error certificate
    """
    if not 0.0 < h_t < 1.0:
        raise StepOutOfRange(f"step parameter must lie in (0,1), got {h_t}")
    largest = max(f.norm for f in kh.factors)
    scale = max(largest, abs(kh.shift))
    if scale == 0.0:
        if zero_tau is None:
            raise ZeroHamiltonian("All factor Hamiltonians are zero; tau is undefined")
        logger.warning(f"All factors are zero, using tau={zero_tau}")
        tau = zero_tau
    else:
        tau = h_t / scale
    if abs(kh.shift) > largest:
        logger.info(f"Shift |c|={abs(kh.shift):.6g} exceeds every factor norm and sets tau={tau:.6g}")

    with ThreadPoolExecutor(max_workers=workers) as pool:
        factor_props = tuple(pool.map(lambda f: build_propagator_for_step(f, tau, p), kh.factors))

    factor_h = tuple(fp.h_t for fp in factor_props)
    shift_h = tau * abs(kh.shift)
    unitary = kh.shift.imag == 0.0
    if not unitary:
        logger.warning(f"Complex shift {kh.shift}; the product propagator is not unitary")
    certificate = KronCertificate(
        p=p,
        n_factors=len(factor_props),
        h=max(factor_h + (shift_h,)),
        tau=tau,
        factor_h=factor_h,
        shift_h=shift_h,
        unitary=unitary,
    )
    logger.debug(f"Kronecker propagator over dims {kh.dims}, tau={tau:.6g}, h={certificate.h:.6g}")
    return KronPropagator(
        factor_props=factor_props,
        shift=kh.shift,
        shift_phase=shift_propagator(kh.shift, tau, p),
        h=certificate.h,
        tau=tau,
        order_p=p,
        space=kh.space,
        certificate=certificate,
    )


def apply_kron(prop: KronPropagator, psi: Ket) -> Ket:
    """(x_alpha U_hat_alpha) psi times the shift phase, without forming the product."""
    if len(psi) != prop.total_dim:
        raise DimensionMismatch(f"State of length {len(psi)} for a product space of dimension {prop.total_dim}")
    coords = mode_apply([fp.weighted for fp in prop.factor_props], psi.coords, prop.dims)
    return Ket(psi.space, prop.shift_phase * coords)


def evolve_kron(prop: KronPropagator, psi0: Ket, m: int) -> Trajectory:
    """Repeated apply_kron; product inputs stay product states."""
    if m < 0:
        raise NegativeSteps(f"Number of steps must be nonnegative, got {m}")
    if len(psi0) != prop.total_dim:
        raise DimensionMismatch(f"State of length {len(psi0)} for a product space of dimension {prop.total_dim}")
    states = [psi0]
    for _ in range(m):
        states.append(apply_kron(prop, states[-1]))
    trajectory = Trajectory(tuple(states), prop.tau, prop.space, check_norms=prop.certificate.unitary)
    trajectory.check_drift()
    return trajectory
