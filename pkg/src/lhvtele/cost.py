"""Communication cost: zone probabilities given ``u``, entropies, codelengths.

For a Haar-random frame the coordinates of Alice's vector in that frame,
``c = (a.lambda, a.mu, a.nu)``, form a uniform point on the sphere, so every
zone probability depends on ``u`` only.  Writing ``t = |c1|`` (uniform on
[0, 1] by Archimedes' hat-box theorem) and ``phi`` for the azimuth in the
positive octant, ``|c2| = r cos(phi)`` and ``|c3| = r sin(phi)`` with
``r = sqrt(1 - t^2)``.  The azimuthal integral is elementary, which leaves a
one-dimensional integral over ``t`` for each of

    P(|c1| + |c2| > u)          (u in [0, sqrt 2])
    P(|c1| + |c2| + |c3| > u)   (u in [1, sqrt 3])

Zone probabilities are differences of these tails, so they sum to one
exactly.
"""

from __future__ import annotations

import functools
import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator

from . import lhv
from .lhv import SQRT3, LhvStream
from .protocol import SessionTranscript, Zone

SQRT2 = float(np.sqrt(2.0))
QUAD_TOL = 1e-11
TABLE_NODES = 400  # per smooth segment; interpolation error ~2e-7


def _pair_tail_integrand(t: float, u: float) -> float:
    r = np.sqrt(max(1.0 - t * t, 0.0))
    d = u - t
    if d <= 0:
        return 1.0
    if d >= r:
        return 0.0
    return 2.0 / np.pi * np.arccos(d / r)


def _triple_tail_integrand(t: float, u: float) -> float:
    r = np.sqrt(max(1.0 - t * t, 0.0))
    d = u - t
    # cos(phi) + sin(phi) = sqrt(2) cos(phi - pi/4) spans [1, sqrt 2] on the octant
    if d <= r:
        return 1.0
    if d >= SQRT2 * r:
        return 0.0
    return 4.0 / np.pi * np.arccos(d / (SQRT2 * r))


def _kinks(u: float) -> list[float]:
    pts = [u]
    for disc, c, div in ((2.0 - u * u, u, 2.0), (2.0 * (3.0 - u * u), u, 3.0)):
        if disc >= 0:
            s = np.sqrt(disc)
            pts += [(c - s) / div, (c + s) / div]
    return sorted({p for p in pts if 0.0 < p < 1.0})


def pair_tail(u: float) -> float:
    """P(|c1| + |c2| > u) for a uniform unit vector ``c``."""
    if u <= 0:
        return 1.0
    if u >= SQRT2:
        return 0.0
    return quad(_pair_tail_integrand, 0.0, 1.0, args=(u,), points=_kinks(u),
                epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200)[0]


def triple_tail(u: float) -> float:
    """P(|c1| + |c2| + |c3| > u) for a uniform unit vector ``c``."""
    if u <= 1.0:
        return 1.0
    if u >= SQRT3:
        return 0.0
    return quad(_triple_tail_integrand, 0.0, 1.0, args=(u,), points=_kinks(u),
                epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200)[0]


def _check_u(u) -> None:
    u_arr = np.asarray(u, dtype=float)
    if not np.all((u_arr >= 0) & (u_arr <= SQRT3)):
        raise ValueError(f"u must lie in [0, sqrt(3)], got {u}")


def zone_prob_given_u(zone, u: float) -> float:
    """Probability, over a random frame, that ``u`` falls in ``zone``.

    Computed directly by adaptive quadrature; use :func:`zone_table` for
    vectorized evaluation.
    """
    _check_u(u)
    zone = Zone(zone)
    single = max(0.0, 1.0 - u)
    if zone is Zone.A_LAMBDA:
        return single
    if zone is Zone.A_MU:
        return max(pair_tail(u) - single, 0.0)
    if zone is Zone.A_NU:
        return max(triple_tail(u) - pair_tail(u), 0.0)
    return 1.0 - triple_tail(u)


def _segment_interpolant(f, segments) -> PchipInterpolator:
    xs = np.unique(np.concatenate([np.linspace(lo, hi, TABLE_NODES) for lo, hi in segments]))
    return PchipInterpolator(xs, [f(x) for x in xs])


@dataclass(frozen=True)
class ZoneProbTable:
    """Vectorized zone probabilities ``p_z(u)`` built from tabulated tails.

    Piecewise-cubic monotone interpolation of the two tail functions on a grid
    with breakpoints at 1 and sqrt(2).
    """

    pair: PchipInterpolator
    triple: PchipInterpolator
    nodes: int = TABLE_NODES
    quad_tol: float = QUAD_TOL

    @classmethod
    def build(cls) -> "ZoneProbTable":
        pair = _segment_interpolant(pair_tail, [(0.0, 1.0), (1.0, SQRT2)])
        triple = _segment_interpolant(triple_tail, [(1.0, SQRT2), (SQRT2, SQRT3)])
        return cls(pair, triple)

    def tails(self, u):
        u = np.asarray(u, dtype=float)
        single = np.clip(1.0 - u, 0.0, 1.0)
        pair = np.where(u >= SQRT2, 0.0, self.pair(np.clip(u, 0.0, SQRT2)))
        triple = np.where(u <= 1.0, 1.0, np.where(u >= SQRT3, 0.0, self.triple(np.clip(u, 1.0, SQRT3))))
        pair = np.clip(pair, single, 1.0)
        triple = np.clip(triple, pair, 1.0)
        return single, pair, triple

    def probs(self, u) -> np.ndarray:
        """Array of shape ``(..., 4)``: p_lambda, p_mu, p_nu, p_R at ``u``."""
        single, pair, triple = self.tails(u)
        return np.stack([single, pair - single, triple - pair, 1.0 - triple], axis=-1)

    def __call__(self, zone, u):
        return self.probs(u)[..., int(zone)]


@functools.lru_cache(maxsize=1)
def zone_table() -> ZoneProbTable:
    return ZoneProbTable.build()


def _average(f) -> float:
    """(1/sqrt 3) times the integral of vectorized ``f`` over [0, sqrt 3].

    Composite 8-point Gauss-Legendre on the table knots (and 0 .. 1 for the
    closed-form part), so each cubic piece is integrated exactly.
    """
    table = zone_table()
    knots = np.unique(np.concatenate([np.linspace(0.0, 1.0, TABLE_NODES), table.pair.x, table.triple.x]))
    x, w = np.polynomial.legendre.leggauss(8)
    lo, hi = knots[:-1, None], knots[1:, None]
    u = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    return float(np.sum(0.5 * (hi - lo) * w * f(u)) / SQRT3)


def _neg_plogp(p):
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(p > 0, -p * np.log2(np.where(p > 0, p, 1.0)), 0.0)


@functools.lru_cache(maxsize=None)
def zone_prob_avg(zone) -> float:
    """u-average of ``p_z(u)``, i.e. the per-record probability of the zone."""
    table = zone_table()
    z = int(Zone(zone))
    return _average(lambda u: table(z, u))


@functools.lru_cache(maxsize=1)
def _q_values() -> tuple[float, float, float, float]:
    table = zone_table()
    return tuple(_average(lambda u, z=z: _neg_plogp(table(z, u))) for z in range(4))


def q_values() -> dict[str, float]:
    """u-averaged ``-p_z log2 p_z`` in bits, keyed by zone name."""
    q = _q_values()
    return {"A_lambda": q[0], "A_mu": q[1], "A_nu": q[2], "R": q[3]}


def geometric_entropy_sum(p_a, q_a, p_r: float, q_r: float, kmax: int = 200) -> float:
    """The double sum over acceptance round k and zone l, truncated at ``kmax``.

    Term ``(k, l)`` is ``(k - 1) p_R^(k-2) p_l q_R + p_R^(k-1) q_l``.
    """
    total = 0.0
    for k in range(1, kmax + 1):
        for pl, ql in zip(p_a, q_a):
            rej = (k - 1) * p_r ** (k - 2) * pl * q_r if k > 1 else 0.0
            total += rej + p_r ** (k - 1) * ql
    return total


@dataclass
class EntropyReport:
    p_A: float
    p_R: float
    p_A_lambda: float
    p_A_mu: float
    p_A_nu: float
    q_A_lambda: float
    q_A_mu: float
    q_A_nu: float
    q_R: float
    H: float
    total_vn: float
    total_povm: float
    singlet_bits: float
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


@functools.lru_cache(maxsize=1)
def _entropy_report() -> EntropyReport:
    p = [zone_prob_avg(z) for z in Zone]
    q = _q_values()
    p_a = sum(p[:3])
    h = (sum(q[:3]) + q[3]) / p_a
    total_vn = h + 1.0
    return EntropyReport(
        p_A=p_a,
        p_R=1.0 - p_a,
        p_A_lambda=p[0],
        p_A_mu=p[1],
        p_A_nu=p[2],
        q_A_lambda=q[0],
        q_A_mu=q[1],
        q_A_nu=q[2],
        q_R=q[3],
        H=h,
        total_vn=total_vn,
        total_povm=2.0 * (total_vn + 1.0),
        singlet_bits=h,
        metadata={
            "quad_tol": QUAD_TOL,
            "table_nodes_per_segment": TABLE_NODES,
            "generator": lhv.GENERATOR,
        },
    )


def entropy_report() -> EntropyReport:
    """Conditional entropy of the acceptance position and derived totals."""
    r = _entropy_report()
    return EntropyReport(**{**r.to_dict(), "metadata": dict(r.metadata)})


def ideal_codelength(transcript: SessionTranscript, stream: LhvStream) -> float:
    """Bits needed for the messages given the shared ``u`` values.

    ``-log2`` of the product of ``p_R(u_i)`` over rejected records and
    ``p_l(u_k)`` at each acceptance.  Records are scanned from ``k = 1`` up
    to the last message, so POVM transcripts with several rounds are handled
    too.  The sign bits are not included.
    """
    table = zone_table()
    accepted = {m.k: m.l for m in transcript.messages}
    last = max(accepted)
    bits = 0.0
    for k in range(1, last + 1):
        z = accepted.get(k, int(Zone.R))
        bits -= np.log2(float(table(z, stream.record(k).u)))
    transcript.ideal_bits = bits
    return bits


def codelength_batch(messages, seeds) -> np.ndarray:
    """``ideal_codelength`` of each message in a ``MessageBatch``.

    Covers the records ``start..k`` of each message, so summing over POVM
    rounds gives the whole session.
    """
    seeds = np.asarray(seeds, dtype=np.uint64)
    table = zone_table()
    bits = np.zeros(len(messages))
    offset = 0
    rows = np.arange(len(messages))
    while rows.size:
        kk = messages.start[rows] + offset
        u = lhv.u_arrays(seeds[messages.index[rows]], kk.astype(np.uint64))
        final = kk == messages.k[rows]
        zone = np.where(final, messages.l[rows], int(Zone.R))
        p = np.take_along_axis(table.probs(u), zone[:, None].astype(np.intp), axis=1)[:, 0]
        with np.errstate(divide="ignore"):
            bits[rows] -= np.log2(p)
        rows = rows[~final]
        offset += 1
    return bits


def fidelity_budget(avg_bits: float, total_bits: float | None = None) -> float:
    """Fidelity reachable by time-sharing the protocol with LHVs alone.

    A fraction ``avg_bits / total_bits`` of sessions runs the full protocol
    (fidelity 1); the rest output from the hidden variables only (fidelity
    1/2).  ``total_bits`` defaults to the computed per-session cost.
    """
    if total_bits is None:
        total_bits = entropy_report().total_vn
    if avg_bits < 0:
        raise ValueError("bit budget must be non-negative")
    if avg_bits > total_bits:
        warnings.warn(f"budget {avg_bits} exceeds the protocol cost {total_bits:.4f}; clamping")
        return 1.0
    return (avg_bits + 0.5 * (total_bits - avg_bits)) / total_bits
