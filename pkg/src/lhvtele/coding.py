"""Block coding of Alice's messages with Bob's ``u`` values as side information.

Each session contributes the zone symbols of the records it scanned, ``R``
for every rejection and then the accepted zone.  Symbol ``k`` of a session
is coded with the probabilities ``p_z(u_k)``, which encoder and decoder both
compute from their own copy of the shared stream, so no model is
transmitted.  The payload ends with a 32-bit check word (two uniform 16-bit
symbols) holding a BLAKE2b digest of the seeds and messages; an arithmetic
code is otherwise complete, so this is what lets the decoder notice a wrong
seed.  Sign bits go uncoded after the payload.

File layout (all integers little-endian)::

    offset  size  field
    0       4     magic b"LHVT"
    4       1     format version (1)
    5       8     n_sessions, uint64
    13      8     payload length in bits, uint64
    21      P     payload, ceil(bits / 8) bytes, last byte zero-padded
    21+P    S     sign bits, ceil(n_sessions / 8) bytes, 1 = negative,
                  most significant bit first

The arithmetic coder is the classic 32-bit low/high integer coder with
underflow (E3) handling, as in Witten, Neal and Cleary (1987).
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from . import lhv
from .cost import zone_table
from .protocol import AliceMessage, Zone
from .wire import message_length

MAGIC = b"LHVT"
VERSION = 1
HEADER = struct.Struct("<4sBQQ")

PROB_BITS = 16
PROB_TOTAL = 1 << PROB_BITS

STATE_BITS = 32
_FULL = 1 << STATE_BITS
_MASK = _FULL - 1
_HALF = _FULL >> 1
_QUARTER = _HALF >> 1

MAX_DECODED_RECORDS = 10_000


class IntegrityError(ValueError):
    """The data does not match the shared stream (bad message or wrong seed)."""


class DecodeError(ValueError):
    """Malformed or truncated coded block."""


def quantize(probs) -> np.ndarray:
    """Integer frequencies summing to ``2**16`` with at least 1 per symbol.

    Counts are ``max(1, round(p * 2**16))``; the rounding surplus or deficit
    is then charged to the most probable symbol.  Input shape ``(..., 4)``.
    """
    probs = np.asarray(probs, dtype=float)
    counts = np.maximum(1, np.rint(probs * PROB_TOTAL)).astype(np.int64)
    top = np.argmax(counts, axis=-1)[..., None]
    fix = PROB_TOTAL - counts.sum(axis=-1, keepdims=True)
    np.put_along_axis(counts, top, np.take_along_axis(counts, top, axis=-1) + fix, axis=-1)
    return counts


def symbol_model(u) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative frequency tables and the exact probabilities at ``u``.

    Returns ``(cum, probs)`` with ``cum`` of shape ``(..., 5)`` in symbol
    order lambda, mu, nu, R.
    """
    probs = zone_table().probs(u)
    counts = quantize(probs)
    cum = np.concatenate([np.zeros(counts.shape[:-1] + (1,), dtype=np.int64), np.cumsum(counts, axis=-1)], axis=-1)
    return cum, probs


class _Encoder:
    def __init__(self):
        self.low = 0
        self.high = _MASK
        self.pending = 0
        self.bits: list[int] = []

    def _emit(self, bit: int) -> None:
        self.bits.append(bit)
        if self.pending:
            self.bits.extend([bit ^ 1] * self.pending)
            self.pending = 0

    def encode(self, lo: int, hi: int, total: int) -> None:
        span = self.high - self.low + 1
        self.high = self.low + hi * span // total - 1
        self.low = self.low + lo * span // total
        while True:
            if (self.low ^ self.high) & _HALF == 0:
                self._emit(self.low >> (STATE_BITS - 1))
                self.low = (self.low << 1) & _MASK
                self.high = ((self.high << 1) & _MASK) | 1
            elif self.low & ~self.high & _QUARTER:
                self.pending += 1
                self.low = (self.low << 1) ^ _HALF
                self.high = ((self.high ^ _HALF) << 1) | _HALF | 1
            else:
                break

    def finish(self) -> list[int]:
        self.bits.append(1)
        return self.bits


class _Decoder:
    def __init__(self, bits: list[int]):
        self.bits = bits
        self.pos = 0
        self.low = 0
        self.high = _MASK
        self.code = 0
        for _ in range(STATE_BITS):
            self.code = (self.code << 1) | self._next()

    def _next(self) -> int:
        bit = self.bits[self.pos] if self.pos < len(self.bits) else 0
        self.pos += 1
        return bit

    def decode(self, cum) -> int:
        total = int(cum[-1])
        span = self.high - self.low + 1
        value = ((self.code - self.low + 1) * total - 1) // span
        sym = int(np.searchsorted(cum, value, side="right")) - 1
        if not 0 <= sym < len(cum) - 1:
            raise IntegrityError("code value outside the model range")
        lo, hi = int(cum[sym]), int(cum[sym + 1])
        self.high = self.low + hi * span // total - 1
        self.low = self.low + lo * span // total
        while True:
            if (self.low ^ self.high) & _HALF == 0:
                self.low = (self.low << 1) & _MASK
                self.high = ((self.high << 1) & _MASK) | 1
                self.code = ((self.code << 1) & _MASK) | self._next()
            elif self.low & ~self.high & _QUARTER:
                self.low = (self.low << 1) ^ _HALF
                self.high = ((self.high ^ _HALF) << 1) | _HALF | 1
                self.code = (self.code & _HALF) | ((self.code << 1) & (_MASK >> 1)) | self._next()
            else:
                break
        return sym


@dataclass
class CodedBlock:
    payload: bytes
    payload_bits: int
    n_sessions: int
    sign_bits: bytes

    @property
    def bits_per_session(self) -> float:
        return self.payload_bits / self.n_sessions if self.n_sessions else 0.0

    @property
    def total_bits(self) -> int:
        """Payload plus one raw sign bit per session (headers excluded)."""
        return self.payload_bits + self.n_sessions

    def to_bytes(self) -> bytes:
        return HEADER.pack(MAGIC, VERSION, self.n_sessions, self.payload_bits) + self.payload + self.sign_bits

    @classmethod
    def from_bytes(cls, data: bytes) -> "CodedBlock":
        if len(data) < HEADER.size:
            raise DecodeError("truncated header")
        magic, version, n, nbits = HEADER.unpack_from(data)
        if magic != MAGIC:
            raise DecodeError(f"bad magic {magic!r}")
        if version != VERSION:
            raise DecodeError(f"unsupported format version {version}")
        p_len = (nbits + 7) // 8
        s_len = (n + 7) // 8
        body = data[HEADER.size:]
        if len(body) != p_len + s_len:
            raise DecodeError(f"expected {p_len + s_len} body bytes, found {len(body)}")
        return cls(body[:p_len], nbits, n, body[p_len:])


def _session_records(seeds, ks) -> tuple[np.ndarray, np.ndarray]:
    """Flat ``u`` values for records ``1..k`` of every session, and offsets."""
    ks = np.asarray(ks, dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(ks)])
    owner = np.repeat(np.arange(len(ks)), ks)
    index = np.arange(offsets[-1]) - offsets[owner] + 1
    u = lhv.u_arrays(np.asarray(seeds, dtype=np.uint64)[owner], index.astype(np.uint64))
    return u, offsets


def _symbols(messages) -> tuple[np.ndarray, np.ndarray]:
    ks = np.array([m.k for m in messages], dtype=np.int64)
    syms = np.full(int(ks.sum()), int(Zone.R), dtype=np.int64)
    ends = np.cumsum(ks) - 1
    syms[ends] = [m.l for m in messages]
    return syms, ks


def check_word(seeds, messages) -> int:
    h = hashlib.blake2b(digest_size=4)
    h.update(np.asarray(seeds, dtype="<u8").tobytes())
    h.update(np.array([(m.k, m.l, m.sign) for m in messages], dtype="<i8").tobytes())
    return int.from_bytes(h.digest(), "little")


_UNIFORM16 = np.arange(PROB_TOTAL + 1, dtype=np.int64)


def encode_block(messages: list[AliceMessage], seeds) -> CodedBlock:
    """Arithmetic-code the messages of ``len(messages)`` sessions.

    ``seeds[i]`` is the shared-stream seed of session ``i``.
    """
    n = len(messages)
    if len(seeds) != n:
        raise ValueError("one seed per message required")
    signs = np.packbits(np.array([m.sign < 0 for m in messages], dtype=np.uint8)).tobytes()
    if n == 0:
        return CodedBlock(b"", 0, 0, b"")
    syms, ks = _symbols(messages)
    u, _ = _session_records(seeds, ks)
    cum, probs = symbol_model(u)
    if np.any(probs[np.arange(len(syms)), syms] <= 0):
        bad = int(np.argmax(probs[np.arange(len(syms)), syms] <= 0))
        raise IntegrityError(f"symbol {bad} has zero probability under the shared stream")
    enc = _Encoder()
    for sym, c in zip(syms.tolist(), cum.tolist()):
        enc.encode(c[sym], c[sym + 1], c[-1])
    check = check_word(seeds, messages)
    for half in (check >> 16, check & 0xFFFF):
        enc.encode(half, half + 1, PROB_TOTAL)
    bits = enc.finish()
    payload = np.packbits(np.array(bits, dtype=np.uint8)).tobytes()
    return CodedBlock(payload, len(bits), n, signs)


def decode_block(block: CodedBlock, seeds) -> list[AliceMessage]:
    """Invert :func:`encode_block` using the decoder's own copy of the streams.

    Raises ``IntegrityError`` when the result is inconsistent with the
    streams (typically a wrong seed): a decoded symbol that the stream makes
    impossible, or a check word that does not match.
    """
    n = block.n_sessions
    if len(seeds) != n:
        raise ValueError("one seed per session required")
    if n == 0:
        return []
    if len(block.payload) * 8 < block.payload_bits or len(block.sign_bits) * 8 < n:
        raise DecodeError("truncated block")
    bits = np.unpackbits(np.frombuffer(block.payload, dtype=np.uint8))[:block.payload_bits].tolist()
    sign_bits = np.unpackbits(np.frombuffer(block.sign_bits, dtype=np.uint8))[:n]
    seeds = np.asarray(seeds, dtype=np.uint64)

    # models for the first few records of every session; later ones on demand
    ahead = 8
    u = lhv.u_arrays(seeds[:, None], np.arange(1, ahead + 1, dtype=np.uint64)[None, :])
    cum_ahead, probs_ahead = symbol_model(u)

    dec = _Decoder(bits)
    messages = []
    for i in range(n):
        k = 0
        while True:
            k += 1
            if k > MAX_DECODED_RECORDS:
                raise IntegrityError(f"session {i}: no acceptance decoded")
            if k <= ahead:
                cum, probs = cum_ahead[i, k - 1], probs_ahead[i, k - 1]
            else:
                cum, probs = symbol_model(lhv.u_arrays(seeds[i], np.uint64(k)))
            sym = dec.decode(cum)
            if probs[sym] <= 0:
                raise IntegrityError(f"session {i}: decoded an impossible zone at record {k}")
            if sym != int(Zone.R):
                break
        messages.append(AliceMessage(k=k, l=sym, sign=-1 if sign_bits[i] else 1))
        if dec.pos > block.payload_bits + 2 * STATE_BITS:
            raise DecodeError("payload exhausted")
    check = (dec.decode(_UNIFORM16) << 16) | dec.decode(_UNIFORM16)
    if check != check_word(seeds, messages):
        raise IntegrityError("check word mismatch; wrong seeds or corrupted payload")
    return messages


def naive_bits_per_session(messages) -> float:
    return float(np.mean(message_length([m.k for m in messages]))) if messages else 0.0
