import logging
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import List, NamedTuple, Optional, Tuple

import networkx as nx
import numpy as np
import scipy.linalg as la

from .hilbert import (
    DimensionMismatch,
    NotSelfAdjoint,
    QuantumDynamicsError,
    WeightedSpace,
)

logger = logging.getLogger(__name__)

class GraphError(QuantumDynamicsError):
    """Base exception for representative graph and file format errors."""
    pass

class ParseError(GraphError):
    """Exception raised when a graph, matrix or vector file is malformed."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)

class InvalidVertex(GraphError):
    """Exception raised when an edge references a vertex outside 1..N."""
    pass

class DuplicateEdge(GraphError):
    """Exception raised when an unordered vertex pair appears twice."""
    pass

class SelfLoop(GraphError):
    """Exception raised when an edge joins a vertex to itself."""
    pass


@dataclass(frozen=True)
class RepGraph:
    """Representative graph with vertex set {1..N} and weighted undirected edges."""
    n_vertices: int
    edges: Tuple[Tuple[int, int, float], ...] = ()

    def __post_init__(self):
        seen = set()
        for i, j, w in self.edges:
            if not (1 <= i <= self.n_vertices and 1 <= j <= self.n_vertices):
                raise InvalidVertex(f"Edge ({i}, {j}) outside vertex set 1..{self.n_vertices}")
            if i == j:
                raise SelfLoop(f"Self-loop at vertex {i}")
            if not math.isfinite(w):
                raise GraphError(f"Edge ({i}, {j}) has non-finite weight {w}")
            pair = frozenset((i, j))
            if pair in seen:
                raise DuplicateEdge(f"Edge ({i}, {j}) appears more than once")
            seen.add(pair)

    @property
    def vertices(self) -> range:
        return range(1, self.n_vertices + 1)

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(self.vertices)
        graph.add_weighted_edges_from(self.edges)
        return graph


class Spectrum(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


@dataclass(frozen=True, eq=False)
class Hamiltonian:
    """Self-adjoint operator on a weighted space."""
    space: WeightedSpace
    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=complex)
        if matrix.shape != (self.space.dim, self.space.dim):
            raise DimensionMismatch(
                f"Hamiltonian of shape {matrix.shape} in a space of dimension {self.space.dim}"
            )
        if not self.space.is_self_adjoint(matrix):
            raise NotSelfAdjoint("Hamiltonian is not self-adjoint with respect to the inner product matrix")
        object.__setattr__(self, 'matrix', matrix)

    @property
    def dim(self) -> int:
        return self.space.dim

    @cached_property
    def eigensystem(self) -> Spectrum:
        # Hermitian picture W H W^-1; eigenvectors are pulled back through W^-1
        conjugated = self.space.conjugate(self.matrix)
        conjugated = (conjugated + conjugated.conj().T) / 2
        eigenvalues, vectors = la.eigh(conjugated)
        order = np.argsort(-eigenvalues, kind='stable')
        return Spectrum(eigenvalues[order], self.space.root_inverse @ vectors[:, order])

    @property
    def norm(self) -> float:
        """Weighted operator norm, max |eigenvalue| for a self-adjoint operator."""
        eigenvalues = self.eigensystem.eigenvalues
        return float(np.max(np.abs(eigenvalues))) if eigenvalues.size else 0.0


def spectrum(h: Hamiltonian) -> Spectrum:
    """
    Eigendecomposition H = V D V^-1 with V orthonormal in the weighted space.

    Returns:
        Spectrum with eigenvalues sorted descending and eigenvectors as columns
    """
    return h.eigensystem


def _data_lines(text: str):
    for number, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        yield number, line


def _parse_dimension(token: str, number: int) -> int:
    try:
        n = int(token)
    except ValueError:
        raise ParseError(f"expected a dimension, got {token!r}", number)
    if n < 1:
        raise ParseError(f"dimension must be positive, got {n}", number)
    return n


def parse_graph(text: str) -> RepGraph:
    """
    Parse the graph file format: a vertex count, then one "i j w" line per edge.

    Args:
        text: graph file contents

    Returns:
        RepGraph with edges in file order
    """
    lines = _data_lines(text)
    try:
        number, header = next(lines)
    except StopIteration:
        raise ParseError("empty graph file")
    tokens = header.split()
    if len(tokens) != 1:
        raise ParseError(f"expected a single vertex count, got {header!r}", number)
    n = _parse_dimension(tokens[0], number)

    edges: List[Tuple[int, int, float]] = []
    for number, line in lines:
        tokens = line.split()
        if len(tokens) != 3:
            raise ParseError(f"expected 'i j w', got {line!r}", number)
        try:
            i, j = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise ParseError(f"vertex indices must be integers, got {tokens[0]!r} {tokens[1]!r}", number)
        try:
            w = float(tokens[2])
        except ValueError:
            raise ParseError(f"bad weight {tokens[2]!r}", number)
        if not math.isfinite(w):
            raise ParseError(f"weight must be finite, got {tokens[2]!r}", number)
        edges.append((i, j, w))

    graph = RepGraph(n_vertices=n, edges=tuple(edges))
    logger.debug(f"Parsed graph with {n} vertices and {len(edges)} edges")
    return graph


def read_text_file(path) -> str:
    """UTF-8 contents of a data file; undecodable bytes are a ParseError."""
    try:
        return Path(path).read_text(encoding='utf-8')
    except UnicodeDecodeError as e:
        raise ParseError(f"{path} is not UTF-8 text (byte {e.start})") from e


def load_graph(path) -> RepGraph:
    return parse_graph(read_text_file(path))


def adjacency_hamiltonian(g: RepGraph, space: Optional[WeightedSpace] = None) -> Hamiltonian:
    """Hamiltonian H := A(G), weight w at (i, j) and (j, i) for every edge."""
    space = space if space is not None else WeightedSpace.identity(g.n_vertices)
    if space.dim != g.n_vertices:
        raise DimensionMismatch(f"Graph has {g.n_vertices} vertices but the space has dimension {space.dim}")
    matrix = nx.to_numpy_array(g.to_networkx(), nodelist=list(g.vertices), weight='weight', dtype=complex)
    return Hamiltonian(space, matrix)


def parse_entry(token: str, number: Optional[int] = None) -> complex:
    """Complex value from "re", "re+imi" or "re-imi"."""
    text = token[:-1] + 'j' if token.endswith('i') else token
    try:
        value = complex(text)
    except ValueError:
        raise ParseError(f"bad matrix entry {token!r}", number)
    if not (math.isfinite(value.real) and math.isfinite(value.imag)):
        raise ParseError(f"matrix entry must be finite, got {token!r}", number)
    return value


def format_entry(z: complex) -> str:
    z = complex(z)
    if z.imag == 0:
        return f"{z.real:.17g}"
    return f"{z.real:.17g}{z.imag:+.17g}i"


def parse_matrix(text: str) -> np.ndarray:
    """Parse the matrix file format: "N", then N rows of N entries "re" or "re+imi"."""
    lines = _data_lines(text)
    try:
        number, header = next(lines)
    except StopIteration:
        raise ParseError("empty matrix file")
    n = _parse_dimension(header, number)
    rows = []
    for number, line in lines:
        tokens = line.split()
        if len(tokens) != n:
            raise ParseError(f"expected {n} entries, got {len(tokens)}", number)
        rows.append([parse_entry(token, number) for token in tokens])
    if len(rows) != n:
        raise ParseError(f"expected {n} rows, got {len(rows)}")
    return np.array(rows, dtype=complex)


def format_matrix(a) -> str:
    a = np.asarray(a, dtype=complex)
    lines = [str(a.shape[0])]
    lines.extend(' '.join(format_entry(z) for z in row) for row in a)
    return '\n'.join(lines) + '\n'


def parse_vector(text: str) -> np.ndarray:
    """Parse a state vector file: "N", then N entries (one or more per line)."""
    lines = _data_lines(text)
    try:
        number, header = next(lines)
    except StopIteration:
        raise ParseError("empty vector file")
    n = _parse_dimension(header, number)
    entries = [parse_entry(token, number) for number, line in lines for token in line.split()]
    if len(entries) != n:
        raise ParseError(f"expected {n} entries, got {len(entries)}")
    return np.array(entries, dtype=complex)


def format_vector(v) -> str:
    v = np.asarray(v, dtype=complex)
    return '\n'.join([str(v.shape[0])] + [format_entry(z) for z in v]) + '\n'
