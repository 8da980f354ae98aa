from pathlib import Path

import numpy as np
import pytest

from src.dynamics.graphham import adjacency_hamiltonian, load_graph

FIXTURES = Path(__file__).resolve().parent.parent / 'fixtures'


@pytest.fixture
def fixtures_dir():
    """Directory holding the bundled double slit data files."""
    return FIXTURES


@pytest.fixture
def double_slit_graph():
    """Five vertex double slit graph: source, two slits, two screen points."""
    return load_graph(FIXTURES / 'double_slit.graph')


@pytest.fixture
def double_slit(double_slit_graph):
    """Adjacency Hamiltonian of the double slit graph with the identity metric."""
    return adjacency_hamiltonian(double_slit_graph)


@pytest.fixture
def rng():
    """Seeded generator so random populations are reproducible."""
    return np.random.default_rng(20240607)
