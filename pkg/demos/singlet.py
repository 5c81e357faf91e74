"""
Singlet correlations without the sign bit
=========================================

Alice outputs minus the sign she would have sent; Bob measures the
accepted vector as is.  Their product averages to -a.b.
"""

import numpy as np

from lhvtele import lhv, protocol
from lhvtele.geometry import normalize

seeds = lhv.session_seeds(11, 0, 10**6)
for b in ([0, 0, 1], [1, 0, 1], [1, 0, 0], [0, 0, -1]):
    a, b = np.array([0.0, 0.0, 1.0]), normalize(b)
    alpha, beta, _ = protocol.simulate_singlet(a, b, seeds)
    print(f"a.b = {a @ b:+.3f}  E(alpha beta) = {np.mean(alpha * beta):+.4f}")
