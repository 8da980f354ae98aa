import logging
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
import scipy.linalg as la

from .graphham import RepGraph
from .hilbert import (
    DimensionMismatch,
    Ket,
    NotSelfAdjoint,
    QuantumDynamicsError,
    WeightedSpace,
)
from .kronstruct import ProductSpace
from .ladder import LadderSet
from .propagator import Trajectory

logger = logging.getLogger(__name__)

NORMALIZATION_TOLERANCE = 1e-8
PRODUCT_TOLERANCE = 1e-8

class NotNormalized(QuantumDynamicsError):
    """Exception raised when an expectation is requested for a non-unit state."""
    pass

class EmptyGraph(QuantumDynamicsError):
    """Exception raised when rounding against a graph without vertices."""
    pass

class NotProductState(QuantumDynamicsError):
    """Exception raised when a product-space state does not factor."""
    pass


@dataclass(frozen=True)
class ExpectedState:
    step: int
    time: float
    raw: float
    rounded: int


@dataclass(frozen=True)
class ProductExpectation:
    step: int
    time: float
    raw: Tuple[float, ...]
    rounded: Tuple[int, ...]
    product: int


def _check_state(ladder: LadderSet, space: WeightedSpace, psi: Ket) -> None:
    if ladder.dim != space.dim or len(psi) != space.dim:
        raise DimensionMismatch(
            f"Ladder dimension {ladder.dim}, space dimension {space.dim}, state length {len(psi)}"
        )
    norm = space.norm(psi)
    if abs(norm - 1.0) > NORMALIZATION_TOLERANCE:
        raise NotNormalized(f"Expectation needs a unit state, got norm {norm:.12g}")


def expected_number(ladder: LadderSet, space: WeightedSpace, psi: Ket) -> float:
    """<N> = <psi|N|psi> for a unit state, a value in [1, N]."""
    _check_state(ladder, space, psi)
    if not space.is_self_adjoint(ladder.number):
        raise NotSelfAdjoint("Number operator is not self-adjoint; use a metric-orthonormal analysis basis")
    return float(space.inner(psi, Ket(psi.space, ladder.number @ psi.coords)).real)


def expected_number_via_lower(ladder: LadderSet, space: WeightedSpace, psi: Ket) -> float:
    """<psi|a^dagger a|psi> = ||a psi||^2."""
    _check_state(ladder, space, psi)
    return space.norm(Ket(psi.space, ladder.lowering @ psi.coords)) ** 2


def round_to_vertex(q: float, g: RepGraph) -> int:
    """Nearest vertex label to q, ties going to the smaller label."""
    if g.n_vertices < 1:
        raise EmptyGraph("Graph has no vertices")
    if not math.isfinite(q):
        raise ValueError(f"Cannot round non-finite value {q}")
    return min(max(math.ceil(q - 0.5), 1), g.n_vertices)


def expected_trajectory(ladder: LadderSet, traj: Trajectory, g: RepGraph) -> List[ExpectedState]:
    results = []
    for k, state in enumerate(traj.states):
        raw = expected_number(ladder, traj.space, state)
        results.append(ExpectedState(step=k, time=traj.time(k), raw=raw, rounded=round_to_vertex(raw, g)))
    return results


def marginal_states(psi: Ket, space: ProductSpace) -> List[Ket]:
    """
    Unit factor states of a product state, found from the rank-one unfoldings.

    Args:
        psi: state on the product space
        space: product space the state lives in

    Returns:
        One weighted-unit Ket per factor (global phases are not recovered)
    """
    dims = space.dims
    tensor = space.weighted_coords(psi).reshape(dims)
    marginals = []
    for axis, factor in enumerate(space.factors):
        unfolding = np.moveaxis(tensor, axis, 0).reshape(dims[axis], -1)
        u, s, _ = la.svd(unfolding, full_matrices=False)
        if s[0] == 0.0:
            raise NotProductState("Zero state has no marginals")
        if s.size > 1 and s[1] > PRODUCT_TOLERANCE * s[0]:
            raise NotProductState(f"Factor {axis + 1} unfolding has rank above one (s2/s1 = {s[1] / s[0]:.3e})")
        marginals.append(Ket(factor, factor.root_inverse @ u[:, 0]))
    return marginals


def expected_product(
    ladders: Sequence[LadderSet],
    traj: Trajectory,
    graphs: Sequence[RepGraph],
) -> List[ProductExpectation]:
    """Per-step rounded factor expectations and their product."""
    space = traj.space if isinstance(traj.space, ProductSpace) else ProductSpace((traj.space,))
    if not (len(ladders) == len(graphs) == len(space.factors)):
        raise DimensionMismatch(
            f"{len(ladders)} ladders and {len(graphs)} graphs for {len(space.factors)} factors"
        )
    results = []
    for k, state in enumerate(traj.states):
        raw, rounded = [], []
        for ladder, graph, factor, marginal in zip(ladders, graphs, space.factors, marginal_states(state, space)):
            value = expected_number(ladder, factor, marginal)
            raw.append(value)
            rounded.append(round_to_vertex(value, graph))
        results.append(ProductExpectation(
            step=k,
            time=traj.time(k),
            raw=tuple(raw),
            rounded=tuple(rounded),
            product=math.prod(rounded),
        ))
    return results
