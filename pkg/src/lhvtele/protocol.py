"""Alice and Bob: zone classification, acceptance loop and measurement rules.

Two layers are provided.  The scalar functions (``alice_select``,
``bob_vn_outcome``, ``run_*_session``) follow the protocol one record at a
time and are meant to be read.  The ``*_batch`` / ``simulate_*`` functions run
many independent sessions at once on ``numpy`` arrays; for equal session seeds
they produce exactly the same messages and outcomes as the scalar layer.

Bob's functions never receive Alice's state vector: their inputs are the
measurement, the message(s) and the shared seed(s).
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import lhv
from .geometry import as_unit, dot, normalize
from .lhv import LhvRecord, LhvStream

MAX_ITERATIONS = 10**6
POVM_ATOL = 1e-9


class Zone(enum.IntEnum):
    A_LAMBDA = 0
    A_MU = 1
    A_NU = 2
    R = 3


LABELS = ("lambda", "mu", "nu")


class NonTermination(RuntimeError):
    """Raised when a loop exceeds its iteration cap (an implementation bug)."""


class PovmError(ValueError):
    pass


def sign(x) -> int:
    return 1 if x >= 0 else -1


@dataclass(frozen=True)
class AliceMessage:
    k: int
    l: int  # index into LABELS
    sign: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.l not in (0, 1, 2):
            raise ValueError("l must name lambda, mu or nu")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    @property
    def label(self) -> str:
        return LABELS[self.l]


@dataclass
class SessionTranscript:
    messages: list[AliceMessage] = field(default_factory=list)
    replies: list[int] = field(default_factory=list)
    records_consumed: int = 0
    iterations: int = 1
    ideal_bits: float | None = None


def thresholds(a, triplet) -> np.ndarray:
    """Cumulative zone boundaries |a.l|, |a.l|+|a.m|, |a.l|+|a.m|+|a.n|."""
    return np.cumsum(np.abs(np.asarray(triplet) @ np.asarray(a, dtype=float)), axis=-1)


def zone_of(a, record: LhvRecord) -> Zone:
    """Zone of ``record.u`` for state ``a`` (half-open intervals)."""
    return Zone(int(np.sum(thresholds(a, record.triplet) <= record.u)))


def classify(a, frames, u) -> np.ndarray:
    """Vectorized ``zone_of``; returns zone indices 0..3."""
    frames = np.asarray(frames)
    a = np.asarray(a, dtype=float)
    proj = np.einsum("...ij,...j->...i", frames, np.broadcast_to(a, frames.shape[:-1]))
    cum = np.cumsum(np.abs(proj), axis=-1)
    return np.sum(cum <= np.asarray(u)[..., None], axis=-1)


# -- scalar protocol ----------------------------------------------------------


def alice_select(a, stream: LhvStream, max_iterations: int = MAX_ITERATIONS):
    """Steps A1-A4: scan records from the stream cursor until one is accepted.

    Returns the message, the accepted vector and a transcript.  The stream
    cursor is left just past the accepted record.
    """
    a = as_unit(a)
    start = stream.cursor
    for _ in range(max_iterations):
        k = stream.cursor
        rec = stream.next_record()
        zone = zone_of(a, rec)
        if zone is not Zone.R:
            v = rec.triplet[int(zone)]
            msg = AliceMessage(k=k, l=int(zone), sign=sign(dot(a, v)))
            transcript = SessionTranscript(messages=[msg], records_consumed=k - start + 1)
            return msg, v, transcript
    raise NonTermination(f"no acceptance within {max_iterations} records")


def bob_vector(msg: AliceMessage, stream: LhvStream) -> np.ndarray:
    """Step B1: the accepted vector, flipped so that it lies on Alice's side."""
    return msg.sign * stream.record(msg.k).triplet[msg.l]


def bob_vn_outcome(b, msg: AliceMessage, stream: LhvStream) -> int:
    """Step B2: outcome is the sign of b . lambda' (sign(0) = +1)."""
    return sign(dot(as_unit(b), bob_vector(msg, stream)))


def run_vn_session(a, b, session_seed: int):
    """One von Neumann session; returns ``(outcome, transcript)``."""
    msg, _, transcript = alice_select(a, LhvStream(session_seed))
    return bob_vn_outcome(b, msg, LhvStream(session_seed)), transcript


def bob_singlet_outcome(b, msg: AliceMessage, stream: LhvStream) -> int:
    """Sign of b . v on the unflipped accepted vector; ``msg.sign`` is unused."""
    return sign(dot(as_unit(b), stream.record(msg.k).triplet[msg.l]))


def run_singlet_session(a, b, session_seed: int):
    """Singlet correlations from the same acceptance step.

    Only ``(k, l)`` is meant to travel.  Alice outputs minus the sign she
    would otherwise have sent; Bob measures the unflipped accepted vector.
    """
    msg, v, transcript = alice_select(a, LhvStream(session_seed))
    alpha = -sign(dot(as_unit(a), v))
    beta = bob_singlet_outcome(b, msg, LhvStream(session_seed))
    return alpha, beta, transcript


# -- POVM ----------------------------------------------------------------------


@dataclass(frozen=True)
class Povm:
    """Rank-one POVM given by Bloch vectors ``b_j`` with weights ``|b_j|``."""

    vectors: np.ndarray

    def __post_init__(self):
        v = np.array(self.vectors, dtype=float)
        if v.ndim != 2 or v.shape[1] != 3:
            raise PovmError(f"POVM vectors must have shape (m, 3), got {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)

    @property
    def weights(self) -> np.ndarray:
        return np.linalg.norm(self.vectors, axis=1)

    def __len__(self) -> int:
        return len(self.vectors)

    def probabilities(self, a) -> np.ndarray:
        """Quantum outcome law (|b_j| + a.b_j) / 2."""
        return 0.5 * (self.weights + self.vectors @ as_unit(a))

    @classmethod
    def projective(cls, b) -> "Povm":
        b = as_unit(b)
        return cls(np.stack([b, -b]))

    @classmethod
    def trine(cls, first, normal=None) -> "Povm":
        """Three coplanar elements of weight 2/3 at mutual angles of 120 degrees."""
        first = as_unit(first)
        if normal is None:
            trial = np.eye(3)[np.argmin(np.abs(first))]
            normal = np.cross(first, trial)
        normal = normalize(normal - dot(normal, first) * first)
        second = np.cross(normal, first)
        angles = 2 * np.pi * np.arange(3) / 3
        dirs = np.cos(angles)[:, None] * first + np.sin(angles)[:, None] * second
        return cls(2.0 / 3.0 * dirs)


def validate_povm(p: Povm, atol: float = POVM_ATOL) -> None:
    """Raise ``PovmError`` unless ``p`` satisfies the completeness conditions."""
    if len(p) < 2:
        raise PovmError("a POVM needs at least 2 elements")
    w = p.weights
    if np.any(w <= atol):
        raise PovmError("element weight must be positive")
    if abs(w.sum() - 2.0) > atol:
        raise PovmError(f"weights sum to {w.sum():.12g}, not 2")
    total = p.vectors.sum(axis=0)
    if np.any(np.abs(total) > atol):
        raise PovmError(f"vector sum nonzero: {total}")


def load_povm(path) -> Povm:
    """Read a JSON array of 3-vectors and validate it."""
    try:
        data = json.loads(Path(path).read_text())
        povm = Povm(np.asarray(data, dtype=float))
    except (OSError, ValueError, TypeError) as exc:
        raise PovmError(f"cannot read POVM from {path}: {exc}") from exc
    validate_povm(povm)
    return povm


def _choose_element(weights: np.ndarray, coin) -> np.ndarray:
    cum = np.cumsum(weights) / weights.sum()
    return np.minimum(np.searchsorted(cum, coin, side="right"), len(weights) - 1)


def bob_povm_step(p: Povm, msg: AliceMessage, stream: LhvStream, iteration: int) -> tuple[int, int]:
    """Steps B1'-B4' for one round: returns ``(candidate j, reply bit)``.

    The candidate is drawn with probability ``|b_j|/2`` from Bob's private
    coins (keyed by the session seed under a separate tag) and kept when
    ``lambda' . b_j >= 0`` (reply 0); otherwise Bob replies 1.
    """
    lam = bob_vector(msg, stream)
    j = int(_choose_element(p.weights, lhv.bob_uniforms(stream.seed, np.uint64(iteration))))
    return j, 0 if dot(lam, p.vectors[j]) >= 0 else 1


def run_povm_session(a, p: Povm, session_seed: int, max_iterations: int = MAX_ITERATIONS):
    """Two-way POVM session; returns ``(j, transcript)``.

    Each round Alice scans on from where the previous round stopped and sends
    a fresh message carrying the absolute record index.
    """
    validate_povm(p)
    a = as_unit(a)
    alice_stream = LhvStream(session_seed)
    bob_stream = LhvStream(session_seed)
    transcript = SessionTranscript(iterations=0)
    for t in range(max_iterations):
        msg, _, part = alice_select(a, alice_stream)
        transcript.messages.append(msg)
        transcript.records_consumed += part.records_consumed
        transcript.iterations += 1

        j, reply = bob_povm_step(p, msg, bob_stream, t)
        transcript.replies.append(reply)
        if reply == 0:
            return j, transcript
    raise NonTermination(f"POVM session did not terminate within {max_iterations} rounds")


# -- batch protocol --------------------------------------------------------------


@dataclass
class MessageBatch:
    """Messages of many sessions.

    ``index`` maps rows to positions in the caller's seed array and ``start``
    is the first record scanned for that message.
    """

    index: np.ndarray
    k: np.ndarray
    l: np.ndarray
    sign: np.ndarray
    start: np.ndarray

    def __len__(self) -> int:
        return len(self.k)

    def message(self, i: int) -> AliceMessage:
        return AliceMessage(int(self.k[i]), int(self.l[i]), int(self.sign[i]))

    @property
    def records_consumed(self) -> np.ndarray:
        return self.k - self.start + 1


def _rows(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.broadcast_to(x, (n, 3)) if x.ndim == 1 else x


def alice_select_batch(a, seeds, start=None, max_iterations: int = MAX_ITERATIONS) -> MessageBatch:
    """``alice_select`` for every seed; ``a`` is one state or one per seed."""
    seeds = np.asarray(seeds, dtype=np.uint64)
    n = len(seeds)
    a = as_unit(_rows(a, n))
    start = np.ones(n, dtype=np.int64) if start is None else np.asarray(start, dtype=np.int64)
    k = np.zeros(n, dtype=np.int64)
    l = np.zeros(n, dtype=np.int8)
    sgn = np.zeros(n, dtype=np.int8)
    active = np.arange(n)
    cur = start.copy()
    for _ in range(max_iterations):
        if active.size == 0:
            break
        frames, u = lhv.record_arrays(seeds[active], cur[active].astype(np.uint64))
        zone = classify(a[active], frames, u)
        hit = zone < 3
        idx = active[hit]
        v = frames[hit, zone[hit]]
        k[idx] = cur[idx]
        l[idx] = zone[hit]
        sgn[idx] = np.where(np.einsum("ij,ij->i", v, a[idx]) >= 0, 1, -1)
        active = active[~hit]
        cur[active] += 1
    else:
        if active.size:
            raise NonTermination(f"no acceptance within {max_iterations} records")
    return MessageBatch(np.arange(n), k, l, sgn, start)


def accepted_vectors(messages: MessageBatch, seeds) -> np.ndarray:
    """Unflipped accepted vectors, rebuilt from the shared records."""
    seeds = np.asarray(seeds, dtype=np.uint64)
    frames, _ = lhv.record_arrays(seeds[messages.index], messages.k.astype(np.uint64))
    return frames[np.arange(len(messages)), messages.l]


def bob_vn_outcome_batch(b, messages: MessageBatch, seeds) -> np.ndarray:
    lam = messages.sign[:, None] * accepted_vectors(messages, seeds)
    b = as_unit(_rows(b, len(messages)))
    return np.where(np.einsum("ij,ij->i", lam, b) >= 0, 1, -1).astype(np.int8)


def simulate_vn(a, b, seeds):
    """Run von Neumann sessions; returns ``(outcomes, messages)``."""
    messages = alice_select_batch(a, seeds)
    return bob_vn_outcome_batch(b, messages, seeds), messages


def simulate_singlet(a, b, seeds):
    """Singlet variant; returns ``(alpha, beta, messages)``."""
    messages = alice_select_batch(a, seeds)
    alpha = -messages.sign
    return alpha.astype(np.int8), bob_singlet_outcome_batch(b, messages, seeds), messages


def bob_singlet_outcome_batch(b, messages: MessageBatch, seeds) -> np.ndarray:
    """Bob ignores the sign and measures the unflipped accepted vector."""
    v = accepted_vectors(messages, seeds)
    b = as_unit(_rows(b, len(messages)))
    return np.where(np.einsum("ij,ij->i", v, b) >= 0, 1, -1).astype(np.int8)


def bob_povm_batch(p: Povm, messages: MessageBatch, seeds, iteration: int):
    """Vectorized ``bob_povm_step``; returns ``(candidates, replies)``."""
    seeds = np.asarray(seeds, dtype=np.uint64)
    lam = messages.sign[:, None] * accepted_vectors(messages, seeds)
    j = _choose_element(p.weights, lhv.bob_uniforms(seeds[messages.index], np.uint64(iteration)))
    reply = np.where(np.einsum("ij,ij->i", lam, p.vectors[j]) >= 0, 0, 1).astype(np.int8)
    return j, reply


@dataclass
class PovmBatch:
    outcome: np.ndarray
    iterations: np.ndarray
    records_consumed: np.ndarray
    rounds: list[MessageBatch]


def simulate_povm(a, p: Povm, seeds, max_iterations: int = MAX_ITERATIONS) -> PovmBatch:
    """Vectorized ``run_povm_session``; ``rounds[t]`` holds round-t messages."""
    validate_povm(p)
    seeds = np.asarray(seeds, dtype=np.uint64)
    n = len(seeds)
    a = as_unit(_rows(a, n))
    weights = p.weights
    outcome = np.full(n, -1, dtype=np.int64)
    iterations = np.zeros(n, dtype=np.int64)
    consumed = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    start = np.ones(n, dtype=np.int64)
    rounds = []
    for t in range(max_iterations):
        if active.size == 0:
            break
        msgs = alice_select_batch(a[active], seeds[active], start[active])
        msgs.index = active
        rounds.append(msgs)
        iterations[active] += 1
        consumed[active] += msgs.records_consumed

        j, reply = bob_povm_batch(p, msgs, seeds, t)
        ok = reply == 0
        outcome[active[ok]] = j[ok]
        start[active] = msgs.k + 1
        active = active[~ok]
    else:
        if active.size:
            raise NonTermination(f"POVM sessions did not terminate within {max_iterations} rounds")
    return PovmBatch(outcome, iterations, consumed, rounds)
