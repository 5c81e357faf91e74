"""Shared local hidden variables, replayable from a seed.

Record ``k`` of a stream is a pure function of ``(seed, k)``: both parties can
regenerate any record by index without consuming the stream in lockstep.
Randomness comes from the Philox4x32-10 counter-based generator (Salmon et
al., SC'11), evaluated here directly on ``numpy`` arrays so that millions of
independent sessions can be advanced at once.

Counter layout for one 128-bit Philox block::

    key     = (seed & 0xffffffff, seed >> 32)
    counter = (index & 0xffffffff, index >> 32, 0, tag)

``tag`` separates independent uses of the same key (hidden-variable records,
Bob's private coins, seed derivation).  A hidden-variable record uses one
block: three words drive a uniform rotation, the fourth gives ``u``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import frame_from_uniforms

SQRT3 = float(np.sqrt(3.0))
GENERATOR = "philox4x32-10"

TAG_RECORD = 0x4C485652  # "LHVR"
TAG_BOB = 0x424F4250  # "BOBP"
TAG_DERIVE = 0x53454544  # "SEED"

_MASK32 = np.uint64(0xFFFFFFFF)
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_SHIFT32 = np.uint64(32)


def philox4x32(counter, key, rounds: int = 10) -> np.ndarray:
    """Philox4x32 block function.

    Parameters
    ----------
    counter : array_like, shape (4, ...)
        Four 32-bit counter words.
    key : array_like, shape (2, ...)
        Two 32-bit key words.

    Returns
    -------
    numpy.ndarray of uint64, shape (4, ...)
        The four 32-bit output words (stored in 64-bit lanes).
    """
    c0, c1, c2, c3 = (np.asarray(w, dtype=np.uint64) & _MASK32 for w in counter)
    k0, k1 = (np.asarray(w, dtype=np.uint64) & _MASK32 for w in key)
    for r in range(rounds):
        if r:
            k0 = (k0 + _W0) & _MASK32
            k1 = (k1 + _W1) & _MASK32
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> _SHIFT32) ^ c1 ^ k0,
            p1 & _MASK32,
            (p0 >> _SHIFT32) ^ c3 ^ k1,
            p0 & _MASK32,
        )
    return np.stack(np.broadcast_arrays(c0, c1, c2, c3))


def _split64(x) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.uint64)
    return x & _MASK32, x >> _SHIFT32


def _as_seed_array(seeds) -> np.ndarray:
    if isinstance(seeds, (int, np.integer)):
        return np.asarray(int(seeds) & 0xFFFFFFFFFFFFFFFF, dtype=np.uint64)
    arr = np.asarray(seeds)
    if arr.dtype == object:
        arr = np.array([int(s) & 0xFFFFFFFFFFFFFFFF for s in arr.ravel()], dtype=np.uint64).reshape(arr.shape)
    return arr.astype(np.uint64)


def random_words(seeds, index, tag: int) -> np.ndarray:
    """Philox block for ``(seed, index, tag)``, broadcast over seeds and index."""
    key = _split64(_as_seed_array(seeds))
    ctr = _split64(np.asarray(index, dtype=np.uint64))
    return philox4x32((ctr[0], ctr[1], np.uint64(0), np.uint64(tag)), key)


def to_unit_interval(words) -> np.ndarray:
    """32-bit words to doubles strictly inside (0, 1)."""
    return (np.asarray(words, dtype=np.float64) + 0.5) * 2.0**-32


def derive_seed(master, index):
    """Seed of session ``index`` under ``master``.

    The derived seed is the first two Philox words of
    ``(key=master, counter=(index, 0, TAG_DERIVE))`` joined little-endian.
    Session seeds do not depend on how many sessions are run or in which order.
    """
    w = random_words(master, index, TAG_DERIVE)
    out = w[0] | (w[1] << _SHIFT32)
    return int(out) if out.ndim == 0 else out


def session_seeds(master: int, start: int, count: int) -> np.ndarray:
    return derive_seed(master, np.arange(start, start + count, dtype=np.uint64))


def record_arrays(seeds, ks) -> tuple[np.ndarray, np.ndarray]:
    """Frames (shape ``(n, 3, 3)``) and ``u`` values for records ``ks``."""
    w = to_unit_interval(random_words(seeds, ks, TAG_RECORD))
    return frame_from_uniforms(w[0], w[1], w[2]), SQRT3 * w[3]


def u_arrays(seeds, ks) -> np.ndarray:
    """Only the ``u`` component of records ``ks`` (skips the rotation)."""
    return SQRT3 * to_unit_interval(random_words(seeds, ks, TAG_RECORD)[3])


def bob_uniforms(seeds, iteration) -> np.ndarray:
    """Bob's private coin for a POVM iteration, independent of the records."""
    return to_unit_interval(random_words(seeds, iteration, TAG_BOB)[0])


@dataclass(frozen=True)
class LhvRecord:
    triplet: np.ndarray
    u: float

    @property
    def lam(self) -> np.ndarray:
        return self.triplet[0]

    @property
    def mu(self) -> np.ndarray:
        return self.triplet[1]

    @property
    def nu(self) -> np.ndarray:
        return self.triplet[2]


@dataclass
class LhvStream:
    """Lazily generated list of shared records, indexed from ``k = 1``.

    ``record(k)`` is random access and does not move the cursor;
    ``next_record()`` returns the record at the cursor and advances it.
    """

    seed: int
    cursor: int = field(default=1)

    def __post_init__(self):
        self.seed = int(self.seed) & 0xFFFFFFFFFFFFFFFF
        if self.cursor < 1:
            raise ValueError("record indices start at 1")

    def record(self, k: int) -> LhvRecord:
        if k < 1:
            raise ValueError("record indices start at 1")
        frames, u = record_arrays(self.seed, np.uint64(k))
        return LhvRecord(triplet=frames, u=float(u))

    def next_record(self) -> LhvRecord:
        rec = self.record(self.cursor)
        self.cursor += 1
        return rec

    def fork(self) -> "LhvStream":
        """An independent reader of the same list, starting at ``k = 1``."""
        return LhvStream(self.seed)


def stream_new(seed: int) -> LhvStream:
    return LhvStream(seed)
