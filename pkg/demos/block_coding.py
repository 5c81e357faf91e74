"""
Reaching the entropy with an arithmetic coder
=============================================

Both ends compute the zone probabilities from their own copy of the
shared ``u`` values, so no model is sent.
"""

from lhvtele import coding, cost, lhv, protocol
from lhvtele.geometry import normalize

n = 10**5
seeds = lhv.session_seeds(7, 0, n)
batch = protocol.alice_select_batch(normalize([1, -1, 2]), seeds)
messages = [batch.message(i) for i in range(n)]

block = coding.encode_block(messages, seeds)
data = block.to_bytes()
print(f"{len(data)} bytes for {n} sessions")
print(f"coded  {block.bits_per_session:.4f} bits/session (+1 sign bit)")
print(f"ideal  {cost.codelength_batch(batch, seeds).mean():.4f} bits/session")
print(f"naive  {coding.naive_bits_per_session(messages):.4f} bits/session")

decoded = coding.decode_block(coding.CodedBlock.from_bytes(data), seeds)
print("lossless:", decoded == messages)

# the wrong seeds are caught by the check word
try:
    coding.decode_block(block, lhv.session_seeds(8, 0, n))
except coding.IntegrityError as exc:
    print("wrong seeds:", exc)
