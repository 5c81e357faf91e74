"""
How many bits does a session cost?
==================================

The message is the zone label of the first accepted record.  Bob already
knows ``u`` for every record, so the label only costs its conditional
entropy given ``u``.
"""

import numpy as np

from lhvtele import cost
from lhvtele.protocol import Zone

# zone probabilities as a function of u
for u in np.linspace(0, np.sqrt(3), 7):
    p = cost.zone_table().probs(u)
    print(f"u = {u:.3f}  " + "  ".join(f"{z.name}={x:.4f}" for z, x in zip(Zone, p)))

# averaged entropies and the totals they imply
r = cost.entropy_report()
for name, q in cost.q_values().items():
    print(f"q_{name} = {q:.5f} bits")
print(f"H = {r.H:.5f}, one session costs {r.total_vn:.5f} bits with the sign bit")
print(f"a POVM session costs {r.total_povm:.5f} bits on average")
print(f"fidelity reachable with 2 bits: {cost.fidelity_budget(2.0):.5f}")
