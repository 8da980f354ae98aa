"""
Unitary group simulator: finite-dimensional Schrodinger dynamics with certified propagators.
"""
