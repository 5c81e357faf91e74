import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

import oracles
from conftest import X, Y, Z, ScriptedStream, rec
from lhvtele import lhv, protocol
from lhvtele.geometry import normalize, sample_triplet, sample_unit_vector
from lhvtele.protocol import (
    AliceMessage,
    NonTermination,
    Povm,
    PovmError,
    Zone,
    alice_select,
    bob_vn_outcome,
    run_povm_session,
    run_singlet_session,
    run_vn_session,
    validate_povm,
    zone_of,
)

DIAG = np.ones(3) / np.sqrt(3)
SQRT3 = np.sqrt(3)


# -- zones ----------------------------------------------------------------


@pytest.mark.parametrize(
    "a, triplet, u, zone",
    [
        (Z, (Z, X, Y), 0.5, Zone.A_LAMBDA),
        (Z, (Z, X, Y), 1.0, Zone.R),
        (DIAG, (X, Y, Z), 1.0, Zone.A_MU),
        (Z, (X, Y, Z), 0.5, Zone.A_NU),
        (DIAG, (X, Y, Z), 0.0, Zone.A_LAMBDA),
        (DIAG, (X, Y, Z), 1 / np.sqrt(3), Zone.A_MU),  # left end of a zone is closed
    ],
)
def test_zone_of(a, triplet, u, zone):
    assert zone_of(a, rec(triplet, u)) is zone


def test_zone_exhaustiveness(rng):
    n = 10**6
    a = sample_unit_vector(rng, n)
    frames = sample_triplet(rng, n)
    u = rng.uniform(0, SQRT3, n)
    cum = np.cumsum(np.abs(np.einsum("nij,nj->ni", frames, a)), axis=1)
    assert np.all(np.diff(cum, axis=1) >= 0)
    assert cum[:, -1].min() >= 1 - 1e-12 and cum[:, -1].max() <= SQRT3 + 1e-12
    zones = protocol.classify(a, frames, u)
    assert set(np.unique(zones)) == {0, 1, 2, 3}
    # exactly one of the four half-open intervals holds
    lower = np.concatenate([np.zeros((n, 1)), cum], axis=1)
    upper = np.concatenate([cum, np.full((n, 1), np.inf)], axis=1)
    member = (lower <= u[:, None]) & (u[:, None] < upper)
    assert np.all(member.sum(axis=1) == 1)
    assert np.array_equal(np.argmax(member, axis=1), zones)


def test_classify_matches_zone_of(rng):
    a = normalize([0.2, -0.4, 0.9])
    frames = sample_triplet(rng, 200)
    u = rng.uniform(0, SQRT3, 200)
    batch = protocol.classify(a, frames, u)
    assert [int(zone_of(a, rec(f, x))) for f, x in zip(frames, u)] == batch.tolist()


@pytest.mark.parametrize("a", [Z, X, DIAG, normalize([1, -2, 0.5]), normalize([-0.1, 0.2, -1])])
def test_acceptance_rate_independent_of_state(a):
    frames, u = lhv.record_arrays(lhv.session_seeds(31, 0, 10**6), np.uint64(1))
    rate = np.mean(protocol.classify(a, frames, u) < 3)
    assert abs(rate - SQRT3 / 2) < 0.002
    # same records for every a, so pairwise differences are also bounded
    test_acceptance_rate_independent_of_state.rates = getattr(
        test_acceptance_rate_independent_of_state, "rates", []) + [rate]
    rates = test_acceptance_rate_independent_of_state.rates
    assert max(rates) - min(rates) < 0.004


# -- Alice ------------------------------------------------------------------


def test_alice_accepts_first_record():
    stream = ScriptedStream([rec((Z, X, Y), 0.5)])
    msg, v, tr = alice_select(-Z, stream)
    assert msg == AliceMessage(k=1, l=0, sign=-1)
    assert np.array_equal(v, Z)
    assert tr.records_consumed == 1 and stream.cursor == 2


def test_alice_skips_rejections():
    stream = ScriptedStream([rec((Z, X, Y), 1.2), rec((Z, X, Y), 1.5), rec((X, -Y, -Z), 0.5)])
    msg, v, tr = alice_select(Z, stream)
    assert (msg.k, msg.label, msg.sign) == (3, "nu", -1)
    assert np.array_equal(v, -Z)
    assert tr.records_consumed == 3


def test_alice_iteration_cap():
    stream = ScriptedStream([rec((Z, X, Y), 1.5)] * 10)
    with pytest.raises(NonTermination):
        alice_select(Z, stream, max_iterations=5)


def test_mean_acceptance_index():
    msgs = protocol.alice_select_batch(normalize([1, 2, 3]), lhv.session_seeds(8, 0, 10**6))
    assert abs(msgs.k.mean() - 2 / SQRT3) < 0.002
    assert np.all(msgs.k >= 1)


def test_message_validation():
    with pytest.raises(ValueError):
        AliceMessage(k=0, l=0, sign=1)
    with pytest.raises(ValueError):
        AliceMessage(k=1, l=3, sign=1)
    with pytest.raises(ValueError):
        AliceMessage(k=1, l=0, sign=0)


# -- Bob, von Neumann ---------------------------------------------------------


def test_bob_outcome_rules():
    stream = ScriptedStream([rec((Z, X, Y), 0.5)])
    assert bob_vn_outcome(Z, AliceMessage(1, 0, 1), stream) == 1
    assert bob_vn_outcome(-Z, AliceMessage(1, 0, 1), stream) == -1
    # flip applied before the sign test
    assert bob_vn_outcome(Z, AliceMessage(1, 0, -1), stream) == -1
    # sign(0) = +1
    assert bob_vn_outcome(X, AliceMessage(1, 0, 1), stream) == 1


def test_aligned_measurement_is_deterministic():
    seeds = lhv.session_seeds(4, 0, 10**4)
    a = normalize([0.3, 0.1, -0.7])
    outcomes, _ = protocol.simulate_vn(a, a, seeds)
    assert np.all(outcomes == 1)
    assert all(run_vn_session(a, a, int(s))[0] == 1 for s in seeds[:50])


@pytest.mark.parametrize("b, p, tol", [(X, 0.5, 0.002), (normalize([0.8, 0, 0.6]), 0.8, 0.0016)])
def test_vn_frequencies(b, p, tol):
    outcomes, _ = protocol.simulate_vn(Z, b, lhv.session_seeds(17, 0, 10**6))
    assert abs(np.mean(outcomes == 1) - p) < tol


def test_vn_random_pairs(rng):
    n, good = 10**5, 0
    for i in range(20):
        a, b = sample_unit_vector(rng, 2)
        p = (1 + a @ b) / 2
        outcomes, _ = protocol.simulate_vn(a, b, lhv.session_seeds(100 + i, 0, n))
        se = np.sqrt(p * (1 - p) / n)
        good += abs(np.mean(outcomes == 1) - p) < 4 * se
    assert good >= 19


def test_posterior_density():
    # a.lambda' has density 2t on [0, 1]
    a = normalize([0.5, -0.5, 0.7])
    seeds = lhv.session_seeds(23, 0, 10**6)
    msgs = protocol.alice_select_batch(a, seeds)
    lam = msgs.sign[:, None] * protocol.accepted_vectors(msgs, seeds)
    t = lam @ a
    assert t.min() > 0
    assert stats.kstest(t, lambda x: np.clip(x, 0, 1) ** 2).statistic < 0.002


def test_batch_matches_scalar(rng):
    a, b = sample_unit_vector(rng, 2)
    seeds = lhv.session_seeds(5, 0, 300)
    outcomes, msgs = protocol.simulate_vn(a, b, seeds)
    for i, s in enumerate(seeds):
        out, tr = run_vn_session(a, b, int(s))
        assert tr.messages == [msgs.message(i)]
        assert out == outcomes[i]
        assert tr.records_consumed == msgs.records_consumed[i] and tr.iterations == 1 and not tr.replies


def test_per_session_states():
    seeds = lhv.session_seeds(6, 0, 1000)
    a = sample_unit_vector(np.random.default_rng(1), 1000)
    outcomes, _ = protocol.simulate_vn(a, a, seeds)
    assert np.all(outcomes == 1)


# -- singlet -------------------------------------------------------------------


def test_singlet_aligned_anticorrelation():
    seeds = lhv.session_seeds(7, 0, 10**5)
    alpha, beta, _ = protocol.simulate_singlet(DIAG, DIAG, seeds)
    assert np.all(alpha * beta == -1)
    a, b, _ = run_singlet_session(Z, Z, 3)
    assert a * b == -1


def test_singlet_marginal():
    alpha, beta, _ = protocol.simulate_singlet(Z, X, lhv.session_seeds(8, 0, 10**6))
    assert abs(np.mean(alpha == 1) - 0.5) < 0.002
    assert abs(np.mean(beta == 1) - 0.5) < 0.002


# frozen from oracles.singlet_correlator (sphere quadrature of the posterior)
SINGLET_CASES = [
    (Z, np.array([0.8, 0.0, 0.6]), -0.600008),
    (np.array([0.01868144, 0.74290675, 0.66913418]), np.array([-0.64429156, -0.37620337, -0.66585239]), 0.737063),
]


def test_singlet_oracle_is_the_singlet_correlator():
    grid = oracles.sphere_grid()
    for a, b, frozen in SINGLET_CASES:
        a, b = normalize(a), normalize(b)
        assert oracles.singlet_correlator(a, b, grid) == pytest.approx(frozen, abs=1e-5)
        assert frozen == pytest.approx(-a @ b, abs=1e-4)


@pytest.mark.parametrize("a, b, frozen", SINGLET_CASES)
def test_singlet_correlator(a, b, frozen):
    alpha, beta, _ = protocol.simulate_singlet(normalize(a), normalize(b), lhv.session_seeds(9, 0, 10**6))
    assert abs(np.mean(alpha * beta) - frozen) < 0.004


def test_singlet_scalar_matches_batch(rng):
    a, b = sample_unit_vector(rng, 2)
    seeds = lhv.session_seeds(12, 0, 200)
    alpha, beta, msgs = protocol.simulate_singlet(a, b, seeds)
    for i, s in enumerate(seeds):
        x, y, tr = run_singlet_session(a, b, int(s))
        assert (x, y) == (alpha[i], beta[i])
        assert (tr.messages[0].k, tr.messages[0].l) == (msgs.k[i], msgs.l[i])


def test_vn_is_singlet_with_flip(rng):
    a, b = sample_unit_vector(rng, 2)
    seeds = lhv.session_seeds(13, 0, 10**5)
    vn, _ = protocol.simulate_vn(a, b, seeds)
    alpha, beta, _ = protocol.simulate_singlet(a, b, seeds)
    assert np.array_equal(vn, np.where(alpha == 1, -beta, beta))


# -- POVM ----------------------------------------------------------------------


def test_validate_povm_examples():
    validate_povm(Povm.trine(Z))
    validate_povm(Povm(np.array([Z, -Z])))
    with pytest.raises(PovmError, match="vector sum nonzero"):
        validate_povm(Povm(np.array([Z, X])))
    with pytest.raises(PovmError, match="sum to"):
        validate_povm(Povm(np.array([Z, -Z]) * 0.9))
    with pytest.raises(PovmError, match="at least 2"):
        validate_povm(Povm(np.array([2 * Z])))
    with pytest.raises(PovmError, match="positive"):
        validate_povm(Povm(np.array([Z, -Z, 0 * Z])))


def test_trine_geometry():
    t = Povm.trine(Z, normal=Y)
    np.testing.assert_allclose(t.weights, [2 / 3] * 3)
    np.testing.assert_allclose(t.vectors[0], 2 / 3 * Z)
    np.testing.assert_allclose(t.vectors @ Y, 0, atol=1e-15)


def test_load_povm(tmp_path):
    path = tmp_path / "trine.json"
    path.write_text(json.dumps(Povm.trine(Z).vectors.tolist()))
    assert len(protocol.load_povm(path)) == 3
    path.write_text("[[1, 0, 0], [0, 0, 1]]")
    with pytest.raises(PovmError):
        protocol.load_povm(path)
    with pytest.raises(PovmError):
        protocol.load_povm(tmp_path / "missing.json")
    path.write_text("not json")
    with pytest.raises(PovmError):
        protocol.load_povm(path)


def random_povm(rng, m):
    v = rng.standard_normal((m, 3))
    v -= v.mean(axis=0)
    return Povm(2 * v / np.linalg.norm(v, axis=1).sum())


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_povm_law_normalized(m, seed):
    rng = np.random.default_rng(seed)
    p = random_povm(rng, m)
    validate_povm(p)
    probs = p.probabilities(sample_unit_vector(rng))
    assert abs(probs.sum() - 1) < 1e-9
    assert probs.min() >= -1e-12


def test_projective_povm_aligned():
    batch = protocol.simulate_povm(Z, Povm.projective(Z), lhv.session_seeds(14, 0, 10**4))
    assert np.all(batch.outcome == 0)


# frozen from oracles.povm_law for the trine with a along element 0
TRINE_LAW = (0.666668, 0.166666, 0.166666)


def test_trine_oracle():
    raw, law = oracles.povm_law(Z, Povm.trine(Z, normal=Y).vectors)
    np.testing.assert_allclose(law, TRINE_LAW, atol=1e-5)
    assert raw.sum() == pytest.approx(0.5, abs=1e-5)


def test_trine_statistics():
    batch = protocol.simulate_povm(Z, Povm.trine(Z, normal=Y), lhv.session_seeds(15, 0, 10**6))
    freqs = np.bincount(batch.outcome, minlength=3) / 10**6
    np.testing.assert_allclose(freqs, TRINE_LAW, atol=0.002)
    assert abs(batch.iterations.mean() - 2.0) < 0.01
    assert np.all(batch.records_consumed >= batch.iterations)


def test_povm_scalar_matches_batch(rng):
    a = sample_unit_vector(rng)
    p = random_povm(rng, 4)
    seeds = lhv.session_seeds(16, 0, 300)
    batch = protocol.simulate_povm(a, p, seeds)
    for i, s in enumerate(seeds):
        j, tr = run_povm_session(a, p, int(s))
        assert j == batch.outcome[i]
        assert tr.iterations == batch.iterations[i] == len(tr.messages) == len(tr.replies)
        assert tr.replies[-1] == 0 and all(r == 1 for r in tr.replies[:-1])
        assert tr.records_consumed == batch.records_consumed[i]
        # every round resumes just past the previous acceptance
        ks = [m.k for m in tr.messages]
        assert ks == sorted(set(ks))
