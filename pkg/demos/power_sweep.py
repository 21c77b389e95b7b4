"""
Estimation error versus transmit power
======================================

A reduced Monte-Carlo run of the power sweep; the full version takes a
couple of minutes with 200 trials::

    doublebdris --trials 200 sweep --out power.csv
"""

from doublebdris.bench import SweepSpec, monte_carlo, rows_to_csv
from doublebdris.scenario import SystemConfig

spec = SweepSpec(base=SystemConfig(K=8, L=8, M1=4, M2=4), axis="p_dbm",
                 values=(10, 20, 30, 40, 50), trials=30, T=64)
rows = monte_carlo(spec)
print(rows_to_csv(rows))

# the unstructured benchmark stays near 1 because 64 frames cannot pin down
# 2304 coefficients per antenna
