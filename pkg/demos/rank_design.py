"""
Designing the second surface for a rank-deficient first hop
===========================================================

When the surface-1 reference channel has low rank, the aggregate channel
seen in the last phase depends on the second surface's scattering matrix.
Random unitaries usually already hit the maximum; the closed-form design
gets there deterministically.
"""

import numpy as np

from doublebdris.numkit import haar_unitary, numerical_rank
from doublebdris.schedule import design_phi2_max_rank, rank_f_bounds

rng = np.random.default_rng(3)


def cgauss(*shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


L, M1, M2 = 6, 5, 4
Q1 = cgauss(L, 2) @ cgauss(2, M1)      # rank 2
Q2 = cgauss(L, M2)
B = cgauss(M2, 1) @ cgauss(1, M1)      # rank 1

des = design_phi2_max_rank(Q1, Q2, B)
print("designed rank", numerical_rank(Q1 + Q2 @ des.Phi2 @ B), "phase", round(des.phi, 3))
print("bounds", rank_f_bounds(2, numerical_rank(Q2), 1, L, M1))

ranks = [numerical_rank(Q1 + Q2 @ haar_unitary(M2, rng) @ B) for _ in range(200)]
print("random unitaries:", {r: ranks.count(r) for r in sorted(set(ranks))})

# with B's row space inside Q1's, no scattering matrix adds rank
B_inside = cgauss(M2, L) @ Q1
print("row space inside Q1:", design_phi2_max_rank(Q1, Q2, B_inside).f, "(no gain over rank(Q1))")
