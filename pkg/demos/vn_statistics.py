"""
Measurement statistics from hidden variables and a few bits
===========================================================

Alice knows the Bloch vector ``a``; Bob only knows his measurement
direction ``b``.  After one message Bob outputs +1 with probability
(1 + a.b) / 2, as a projective measurement on the state would.
"""

import numpy as np

from lhvtele import lhv, protocol
from lhvtele.geometry import normalize

# a single session, step by step
seed = lhv.derive_seed(2024, 0)
a = normalize([0.3, 0.4, 0.866])
b = normalize([1.0, 0.0, 1.0])
msg, v, transcript = protocol.alice_select(a, lhv.LhvStream(seed))
print("message:", msg, "after", transcript.records_consumed, "records")
print("Bob outputs", protocol.bob_vn_outcome(b, msg, lhv.LhvStream(seed)))

# many sessions at once
seeds = lhv.session_seeds(2024, 0, 10**6)
outcomes, messages = protocol.simulate_vn(a, b, seeds)
print(f"freq(+1) = {np.mean(outcomes == 1):.4f}, target {(1 + a @ b) / 2:.4f}")
print(f"mean records scanned = {messages.k.mean():.4f}, 2/sqrt(3) = {2 / np.sqrt(3):.4f}")
