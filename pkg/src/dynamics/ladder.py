import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .graphham import Hamiltonian
from .hilbert import (
    DimensionMismatch,
    NotSelfAdjoint,
    QuantumDynamicsError,
    WeightedSpace,
)

logger = logging.getLogger(__name__)

ORTHONORMAL_TOLERANCE = 1e-10
MAX_FACTORIAL_DIM = 34

class DimensionTooSmall(QuantumDynamicsError):
    """Exception raised when ladder operators are requested for N < 2."""
    pass

class NotOrthonormal(QuantumDynamicsError):
    """Exception raised when an analysis basis is not orthonormal in the weighted space."""
    pass

class FactorialOverflow(QuantumDynamicsError):
    """Exception raised when k! l! would lose precision in double arithmetic."""
    pass


def wrap_index(p: int, q: int) -> int:
    """Cyclic index [p|q] = 1 + ((p - 1) mod q), in 1..q."""
    return 1 + ((p - 1) % q)


@dataclass(frozen=True, eq=False)
class AnalysisBasis:
    """Orthonormal system {|k>} of a weighted space, stored as the columns of B."""
    space: WeightedSpace
    vectors: np.ndarray

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=complex)
        n = self.space.dim
        if vectors.shape != (n, n):
            raise DimensionMismatch(f"Basis of shape {vectors.shape} in a space of dimension {n}")
        gram = vectors.conj().T @ self.space.metric @ vectors
        defect = np.max(np.abs(gram - np.eye(n)))
        if defect > ORTHONORMAL_TOLERANCE:
            raise NotOrthonormal(f"Basis Gram matrix deviates from the identity by {defect:.3e}")
        object.__setattr__(self, 'vectors', vectors)

    @classmethod
    def canonical(cls, space: WeightedSpace) -> "AnalysisBasis":
        """Canonical vectors e_k; orthonormal only for the identity metric."""
        return cls(space, np.eye(space.dim, dtype=complex))

    @classmethod
    def from_root(cls, space: WeightedSpace) -> "AnalysisBasis":
        """Columns of W^-1, orthonormal for any metric."""
        return cls(space, space.root_inverse)

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def inverse(self) -> np.ndarray:
        # B* M B = 1, so B^-1 = B* M
        return self.vectors.conj().T @ self.space.metric


@dataclass(frozen=True, eq=False)
class LadderSet:
    """
    Cyclic ladder operators and the number operator of dimension N.

    raising is a^dagger, lowering is a and number is N = a^dagger a = diag(1..N)
    in the analysis basis (the canonical basis unless basis is given).
    """
    dim: int
    raising: np.ndarray
    lowering: np.ndarray
    number: np.ndarray
    basis: Optional[AnalysisBasis] = None

    def in_basis(self, basis: AnalysisBasis) -> "LadderSet":
        """Express the ladder in coordinates where |k> is the k-th column of B."""
        if basis.dim != self.dim:
            raise DimensionMismatch(f"Basis of dimension {basis.dim} for a ladder of dimension {self.dim}")
        canonical = self.canonical()
        b, b_inv = basis.vectors, basis.inverse
        return LadderSet(
            dim=self.dim,
            raising=b @ canonical.raising @ b_inv,
            lowering=b @ canonical.lowering @ b_inv,
            number=b @ canonical.number @ b_inv,
            basis=basis,
        )

    def canonical(self) -> "LadderSet":
        return self if self.basis is None else make_ladder(self.dim)


def make_ladder(n: int) -> LadderSet:
    """
    Build a^dagger|n> = sqrt([n+1|N]) |[n+1|N]> and a|n> = sqrt([n|N]) |[n-1|N]>.

    Args:
        n: dimension N >= 2

    Returns:
        LadderSet in the canonical basis
    """
    if n < 2:
        raise DimensionTooSmall(f"Ladder operators need dimension at least 2, got {n}")
    raising = np.zeros((n, n), dtype=complex)
    lowering = np.zeros((n, n), dtype=complex)
    for k in range(1, n + 1):
        up = wrap_index(k + 1, n)
        raising[up - 1, k - 1] = math.sqrt(up)
        lowering[wrap_index(k - 1, n) - 1, k - 1] = math.sqrt(wrap_index(k, n))
    number = np.diag(np.arange(1, n + 1)).astype(complex)
    return LadderSet(dim=n, raising=raising, lowering=lowering, number=number)


def basis_ket(ladder: LadderSet, k: int) -> np.ndarray:
    """|k> = (k!)^{-1/2} (a^dagger)^{k-1} |1>, canonical coordinates."""
    if not 1 <= k <= ladder.dim:
        raise DimensionMismatch(f"Basis index {k} outside 1..{ladder.dim}")
    raising = ladder.canonical().raising
    v = np.zeros(ladder.dim, dtype=complex)
    v[0] = 1.0
    for _ in range(k - 1):
        v = raising @ v
    return v / math.sqrt(math.factorial(k))


@dataclass(frozen=True, eq=False)
class ParticularRep:
    """Coefficients <k|H0|l> of a Hamiltonian in an analysis basis."""
    dim: int
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=complex)
        if coeffs.shape != (self.dim, self.dim):
            raise DimensionMismatch(f"Coefficients of shape {coeffs.shape} for dimension {self.dim}")
        scale = max(1.0, float(np.max(np.abs(coeffs))) if coeffs.size else 0.0)
        if np.max(np.abs(coeffs - coeffs.conj().T)) > ORTHONORMAL_TOLERANCE * scale:
            raise NotSelfAdjoint("Particular representation coefficients are not Hermitian")
        object.__setattr__(self, 'coeffs', coeffs)


def _resolve_basis(space: WeightedSpace, basis: Optional[AnalysisBasis]) -> AnalysisBasis:
    if basis is None:
        return AnalysisBasis.canonical(space)
    if basis.dim != space.dim:
        raise DimensionMismatch(f"Basis of dimension {basis.dim} in a space of dimension {space.dim}")
    return basis


def decompose(h0: Hamiltonian, ladder: LadderSet, basis: Optional[AnalysisBasis] = None) -> ParticularRep:
    """
    Particular representation coefficients <k|H0|l> = inner(b_k, H0 b_l).

    Args:
        h0: self-adjoint Hamiltonian
        ladder: ladder set of the same dimension
        basis: orthonormal analysis basis, canonical by default

    Returns:
        ParticularRep with the Hermitian coefficient matrix
    """
    if ladder.dim != h0.dim:
        raise DimensionMismatch(f"Ladder of dimension {ladder.dim} for a Hamiltonian of dimension {h0.dim}")
    basis = _resolve_basis(h0.space, basis)
    coeffs = basis.inverse @ h0.matrix @ basis.vectors
    return ParticularRep(dim=h0.dim, coeffs=coeffs)


def reconstruct(rep: ParticularRep, ladder: LadderSet, basis: Optional[AnalysisBasis] = None) -> np.ndarray:
    """
    Rebuild H0 = sum_kl <k|H0|l> (k! l!)^{-1/2} (a^dagger)^{k-1} E_1 a^{l-1} in the basis.

    Returns:
        complex N x N matrix in the coordinates of the weighted space
    """
    n = rep.dim
    if n > MAX_FACTORIAL_DIM:
        raise FactorialOverflow(f"Dimension {n} exceeds {MAX_FACTORIAL_DIM}; factorials lose precision")
    if ladder.dim != n:
        raise DimensionMismatch(f"Ladder of dimension {ladder.dim} for a representation of dimension {n}")
    canonical = ladder.canonical()
    if basis is None:
        basis = AnalysisBasis.canonical(WeightedSpace.identity(n))
    elif basis.dim != n:
        raise DimensionMismatch(f"Basis of dimension {basis.dim} for a representation of dimension {n}")

    # column k-1: (a^dagger)^{k-1} E_1 restricted to |1>; row l-1: <1| a^{l-1}
    left = np.zeros((n, n), dtype=complex)
    right = np.zeros((n, n), dtype=complex)
    column = np.zeros(n, dtype=complex)
    column[0] = 1.0
    row = column.copy()
    for k in range(1, n + 1):
        scale = math.sqrt(math.factorial(k))
        left[:, k - 1] = column / scale
        right[k - 1, :] = row / scale
        column = canonical.raising @ column
        row = row @ canonical.lowering

    rebuilt = left @ rep.coeffs @ right
    return basis.vectors @ rebuilt @ basis.inverse
