"""
Pilot overhead versus number of users
=====================================

Pilot counts for the five-phase protocol next to an unstructured
least-squares fit and three single-surface or diagonal-surface schemes.
"""

from doublebdris.schedule import nominal_ranks, overhead, overhead_baselines

L, M1, M2 = 8, 4, 4
q2, f = nominal_ranks(L, M1, M2)
q1 = min(L, M1)

print(f"{'K':>3} {'proposed':>9} {'naive':>7} {'dbl-diag':>9} {'1-bdris':>8} {'1-diag':>7}")
for K in (1, 2, 4, 8, 16, 32):
    b = overhead_baselines(K, L, M1, M2, q1, q2)
    print(f"{K:>3} {overhead(K, L, M1, M2, q2, f):>9} {b['naive']:>7} {b['double_diag']:>9} "
          f"{b['single_bdris']:>8} {b['single_diag']:>7}")

# the unstructured count grows with K * M1^2 * M2^2, the proposed one with K * (M1 + M2)
