"""
A three-outcome POVM with two-way communication
===============================================

Bob proposes an element with probability |b_j| / 2 and keeps it when the
shared vector agrees with it; otherwise he asks Alice for a fresh message.
"""

import numpy as np

from lhvtele import lhv, protocol
from lhvtele.protocol import Povm

trine = Povm.trine([0, 0, 1])
print("elements:\n", np.round(trine.vectors, 4))

a = np.array([0.0, 0.0, 1.0])
j, transcript = protocol.run_povm_session(a, trine, lhv.derive_seed(3, 0))
print(f"outcome {j} after {transcript.iterations} rounds, replies {transcript.replies}")

batch = protocol.simulate_povm(a, trine, lhv.session_seeds(3, 0, 10**6))
print("frequencies:", np.round(np.bincount(batch.outcome) / 10**6, 4))
print("expected:   ", np.round(trine.probabilities(a), 4))
print(f"mean rounds {batch.iterations.mean():.4f}")
