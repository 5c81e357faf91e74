"""Naive (uncompressed) wire format for Alice's messages and Bob's replies.

One message is, in order:

* ``k`` as an unsigned LEB128 varint: 7-bit groups, least significant group
  first, each byte's high bit set when another byte follows;
* ``l`` as 2 bits: ``00`` lambda, ``01`` mu, ``10`` nu;
* the sign as 1 bit: ``0`` for +1, ``1`` for -1.

Bits are written most significant first.  A block of messages is the plain
concatenation, zero-padded to a whole byte.  A POVM reply is a single bit
(``0`` accept, ``1`` retry).
"""

from __future__ import annotations

import numpy as np

from .protocol import AliceMessage


def varint(k: int) -> bytes:
    if k < 0:
        raise ValueError("varint encodes unsigned integers only")
    out = bytearray()
    while True:
        group = k & 0x7F
        k >>= 7
        if k:
            out.append(group | 0x80)
        else:
            out.append(group)
            return bytes(out)


def message_bits(msg: AliceMessage) -> list[int]:
    bits = []
    for byte in varint(msg.k):
        bits.extend((byte >> i) & 1 for i in range(7, -1, -1))
    bits += [(msg.l >> 1) & 1, msg.l & 1, 0 if msg.sign > 0 else 1]
    return bits


def message_length(k) -> np.ndarray:
    """Bit length of the naive encoding for acceptance index ``k``."""
    k = np.asarray(k, dtype=np.int64)
    nbytes = np.maximum(1, (np.floor(np.log2(np.maximum(k, 1))).astype(np.int64) + 7) // 7)
    return 8 * nbytes + 3


def encode_messages(messages) -> tuple[bytes, int]:
    bits = [b for m in messages for b in message_bits(m)]
    return np.packbits(np.array(bits, dtype=np.uint8)).tobytes(), len(bits)


def decode_messages(data: bytes, nbits: int, count: int) -> list[AliceMessage]:
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))[:nbits].tolist()
    pos = 0
    out = []

    def take(n):
        nonlocal pos
        if pos + n > len(bits):
            raise ValueError("truncated message stream")
        chunk = bits[pos:pos + n]
        pos += n
        return chunk

    for _ in range(count):
        k, shift = 0, 0
        while True:
            byte = int("".join(map(str, take(8))), 2)
            k |= (byte & 0x7F) << shift
            shift += 7
            if not byte & 0x80:
                break
        hi, lo, s = take(3)
        out.append(AliceMessage(k=k, l=2 * hi + lo, sign=-1 if s else 1))
    return out
