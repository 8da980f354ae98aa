import logging
from dataclasses import dataclass
from typing import Protocol

import numpy as np
import scipy.linalg as la

logger = logging.getLogger(__name__)

HERMITIAN_TOLERANCE = 1e-10


class QuantumDynamicsError(Exception):
    """Base exception for all simulator errors."""
    pass

class DimensionMismatch(QuantumDynamicsError):
    """Exception raised when a vector or matrix does not fit the space."""
    pass

class NotHermitian(QuantumDynamicsError):
    """Exception raised when an inner product matrix is not Hermitian."""
    pass

class NotPositiveDefinite(QuantumDynamicsError):
    """Exception raised when an inner product matrix has a non-positive pivot."""
    pass

class NotSelfAdjoint(QuantumDynamicsError):
    """Exception raised when an operator is not self-adjoint in the weighted space."""
    pass


class StateSpace(Protocol):
    """Anything kets can live in: a weighted space or a product of them."""

    @property
    def dim(self) -> int: ...

    def inner(self, u: "Ket", v: "Ket") -> complex: ...

    def norm(self, u: "Ket") -> float: ...


@dataclass(frozen=True, eq=False)
class Ket:
    space: StateSpace
    coords: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=complex)
        if coords.ndim != 1 or coords.shape[0] != self.space.dim:
            raise DimensionMismatch(
                f"Ket of shape {coords.shape} does not fit a space of dimension {self.space.dim}"
            )
        object.__setattr__(self, 'coords', coords)

    def __len__(self) -> int:
        return self.coords.shape[0]


@dataclass(frozen=True, eq=False)
class WeightedSpace:
    """
    Finite dimensional Hilbert space whose inner product is <u|v> = u* M v.

    The metric M is factored as M = W* W with W the upper triangular Cholesky
    factor; every norm, operator norm and adjoint is computed through W.
    """
    dim: int
    metric: np.ndarray
    root: np.ndarray
    root_inverse: np.ndarray

    @classmethod
    def identity(cls, n: int) -> "WeightedSpace":
        """Euclidean space C^n."""
        eye = np.eye(n, dtype=complex)
        return cls(dim=n, metric=eye, root=eye.copy(), root_inverse=eye.copy())

    @property
    def is_euclidean(self) -> bool:
        return bool(np.array_equal(self.metric, np.eye(self.dim)))

    def ket(self, coords) -> Ket:
        return Ket(self, coords)

    def _check_ket(self, u: Ket) -> np.ndarray:
        if len(u) != self.dim:
            raise DimensionMismatch(f"Ket of length {len(u)} in a space of dimension {self.dim}")
        return u.coords

    def _check_matrix(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=complex)
        if a.shape != (self.dim, self.dim):
            raise DimensionMismatch(f"Matrix of shape {a.shape} in a space of dimension {self.dim}")
        return a

    def bra(self, u: Ket) -> np.ndarray:
        """Row vector u* M representing <u|."""
        return self._check_ket(u).conj() @ self.metric

    def inner(self, u: Ket, v: Ket) -> complex:
        return complex(self.bra(u) @ self._check_ket(v))

    def norm(self, u: Ket) -> float:
        return float(np.linalg.norm(self.root @ self._check_ket(u)))

    def conjugate(self, a) -> np.ndarray:
        """W A W^-1, the Euclidean picture of an operator."""
        return self.root @ self._check_matrix(a) @ self.root_inverse

    def op_norm(self, a) -> float:
        """Induced operator norm: largest singular value of W A W^-1."""
        return float(la.svdvals(self.conjugate(a))[0])

    def adjoint(self, a) -> np.ndarray:
        """Weighted adjoint M^-1 A* M, with M^-1 applied as W^-1 W^-*."""
        a = self._check_matrix(a)
        return self.root_inverse @ (self.root_inverse.conj().T @ (a.conj().T @ self.metric))

    def is_self_adjoint(self, a, tol: float = HERMITIAN_TOLERANCE) -> bool:
        a = self._check_matrix(a)
        defect = self.op_norm(a - self.adjoint(a))
        return defect <= tol * max(1.0, self.op_norm(a))


def make_space(metric) -> WeightedSpace:
    """
    Build a weighted space from a Hermitian positive definite inner product matrix.

    Args:
        metric: complex N x N matrix M

    Returns:
        WeightedSpace with the Cholesky root W (M = W* W) and its triangular inverse
    """
    metric = np.atleast_2d(np.asarray(metric, dtype=complex))
    if metric.ndim != 2 or metric.shape[0] != metric.shape[1]:
        raise DimensionMismatch(f"Inner product matrix must be square, got shape {metric.shape}")
    n = metric.shape[0]
    if n < 1:
        raise DimensionMismatch("Inner product matrix must have positive dimension")

    scale = max(np.linalg.norm(metric), np.finfo(float).tiny)
    asymmetry = np.linalg.norm(metric - metric.conj().T)
    if asymmetry > HERMITIAN_TOLERANCE * scale:
        raise NotHermitian(f"Inner product matrix is not Hermitian (relative asymmetry {asymmetry / scale:.3e})")
    metric = (metric + metric.conj().T) / 2

    try:
        root = la.cholesky(metric, lower=False)
    except la.LinAlgError as e:
        raise NotPositiveDefinite(f"Inner product matrix is not positive definite: {e}") from e
    root_inverse = la.solve_triangular(root, np.eye(n, dtype=complex), lower=False)

    logger.debug(f"Weighted space of dimension {n} built, cond(W) = {np.linalg.cond(root):.3e}")
    return WeightedSpace(dim=n, metric=metric, root=root, root_inverse=root_inverse)
