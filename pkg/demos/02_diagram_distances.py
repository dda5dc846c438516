"""Wasserstein and bottleneck distances between persistence diagrams.

Shows the exact solvers against the enumerative oracle on small diagrams,
the 2^(1/p) diagonal-cost convention, and the invisibility of diagonal
points.
"""

import numpy as np

from toporobust import (
    INF,
    bottleneck,
    brute_force_wasserstein,
    diagonal_distance,
    optimal_matching,
    wasserstein,
)

d1 = np.array([[0.0, 2.0], [1.0, 3.0]])
d2 = np.array([[0.1, 2.2], [1.0, 1.4]])

for p in (1.0, 2.0, INF):
    exact = bottleneck(d1, d2) if p == INF else wasserstein(d1, d2, p)
    oracle = brute_force_wasserstein(d1, d2, p)
    print(f"p={p}: solver {exact:.6f}  oracle {oracle:.6f}")

print("\ndiagonal distance of (0,2):")
print("  p=inf ->", diagonal_distance((0, 2), INF), "(half the persistence)")
print("  p=2   ->", diagonal_distance((0, 2), 2), "(carries the 2^(1/p) factor)")

m = optimal_matching(d1, d2, INF)
print("\noptimal bottleneck matching:", m.pairs,
      "unmatched:", m.unmatched_left, m.unmatched_right)

# points on the diagonal cost nothing and change no distance
d1_aug = np.vstack([d1, [[5.0, 5.0]]])
print("\nadding (5,5) changes W_2 by",
      abs(wasserstein(d1_aug, d2, 2) - wasserstein(d1, d2, 2)))
