"""redsimp: maximal simplification of polyhedral reductions.

Given a reduction's domain, write/read affine maps, and operator, the engine
lowers the asymptotic complexity by min(a, r) polynomial degrees through
single-step simplification, reduction decomposition, simplex-preserving
splits, and recursive fractal simplification of triangles, then verifies the
result against a brute-force oracle.
"""

__version__ = "0.1.0"
