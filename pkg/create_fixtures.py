import os
from functools import reduce

import numpy as np

from src.dynamics.graphham import format_matrix, format_vector

DOUBLE_SLIT_EDGES = [(1, 2), (1, 3), (2, 4), (2, 5), (3, 4), (3, 5)]

def create_double_slit_graph():
    lines = [
        "# Double slit: source 1, slits 2 and 3, screen 4 and 5",
        "5",
    ]
    lines.extend(f"{i} {j} 1" for i, j in DOUBLE_SLIT_EDGES)
    return '\n'.join(lines) + '\n'

def create_double_slit_matrix():
    a = np.zeros((5, 5))
    for i, j in DOUBLE_SLIT_EDGES:
        a[i - 1, j - 1] = a[j - 1, i - 1] = 1.0
    return format_matrix(a)

def create_scaled_metric():
    # commutes with every Hamiltonian, so the adjacency matrix stays self-adjoint
    return format_matrix(2.0 * np.eye(5))

def create_superposition_state():
    return format_vector(np.array([1, 0, 0, 1j, 0]) / np.sqrt(2))

def create_three_particle_state():
    # e1 x e2 x e5 on three double slits, row-major
    e = np.eye(5)
    return format_vector(reduce(np.kron, [e[0], e[1], e[4]]))

def main(directory="fixtures"):
    # Create fixtures directory if it doesn't exist
    os.makedirs(directory, exist_ok=True)

    files = {
        "double_slit.graph": create_double_slit_graph(),
        "double_slit.matrix": create_double_slit_matrix(),
        "scaled_metric.matrix": create_scaled_metric(),
        "superposition.vec": create_superposition_state(),
        "three_particles.vec": create_three_particle_state(),
    }
    for name, text in files.items():
        with open(os.path.join(directory, name), 'w', encoding='utf-8') as f:
            f.write(text)

if __name__ == "__main__":
    main()
    print("Fixtures created successfully!")
