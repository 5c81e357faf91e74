import numpy as np
import pytest

from conftest import X, Y, Z, ScriptedStream, rec
from lhvtele import cost, lhv, protocol
from lhvtele.cost import (
    entropy_report,
    fidelity_budget,
    geometric_entropy_sum,
    ideal_codelength,
    q_values,
    zone_prob_avg,
    zone_prob_given_u,
    zone_table,
)
from lhvtele.geometry import normalize, sample_unit_vector
from lhvtele.protocol import Zone

SQRT3 = np.sqrt(3)


@pytest.mark.parametrize(
    "zone, u, p",
    [(Zone.A_LAMBDA, 0.0, 1.0), (Zone.A_LAMBDA, 0.5, 0.5), (Zone.R, SQRT3, 1.0), (Zone.R, 0.0, 0.0),
     (Zone.A_MU, 0.0, 0.0), (Zone.A_NU, 0.0, 0.0)],
)
def test_zone_prob_examples(zone, u, p):
    assert zone_prob_given_u(zone, u) == pytest.approx(p, abs=1e-9)


@pytest.mark.parametrize("u", [-0.01, 1.8, np.nan])
def test_zone_prob_range(u):
    with pytest.raises(ValueError):
        zone_prob_given_u(Zone.R, u)


def test_partition_of_unity():
    u = np.linspace(0, SQRT3, 10**4)
    p = zone_table().probs(u)
    assert np.all(p >= 0)
    assert np.max(np.abs(p.sum(axis=1) - 1)) < 1e-6
    assert np.all(np.diff(p[:, 0]) <= 1e-12)
    assert np.all(np.diff(p[:, 3]) >= -1e-9)


def test_table_matches_direct_quadrature():
    table = zone_table()
    for u in np.linspace(0, SQRT3, 37):
        for z in Zone:
            assert abs(table(z, u) - zone_prob_given_u(z, u)) < 1e-6


def test_quadrature_matches_monte_carlo():
    # |c| for a uniform point on the sphere is exactly the frame-coordinate law
    rng = np.random.default_rng(7)
    n = 10**7
    us = np.linspace(0.05, SQRT3 - 0.05, 20)
    counts = np.zeros((len(us), 4))
    for _ in range(5):
        c = np.abs(sample_unit_vector(rng, n // 5))
        cum = np.cumsum(c, axis=1)
        for i, u in enumerate(us):
            zone = (cum <= u).sum(axis=1)
            counts[i] += np.bincount(zone, minlength=4)
    freq = counts / n
    quad = zone_table().probs(us)
    se = np.sqrt(np.maximum(quad * (1 - quad), 1e-12) / n)
    assert np.all(np.abs(freq - quad) < 4 * se + 1e-9)


def test_averages():
    assert zone_prob_avg(Zone.A_LAMBDA) == pytest.approx(1 / (2 * SQRT3), abs=1e-5)
    p_a = sum(zone_prob_avg(z) for z in (Zone.A_LAMBDA, Zone.A_MU, Zone.A_NU))
    assert p_a == pytest.approx(SQRT3 / 2, abs=3e-5)
    assert zone_prob_avg(Zone.R) == pytest.approx((2 - SQRT3) / 2, abs=3e-5)


def test_q_lambda_closed_form():
    # with p = 1 - u on [0, 1] the average of -p log2 p is 1 / (4 sqrt(3) ln 2)
    assert q_values()["A_lambda"] == pytest.approx(1 / (4 * SQRT3 * np.log(2)), abs=1e-7)


def test_report_identities():
    r = entropy_report()
    q = q_values()
    assert r.p_A + r.p_R == pytest.approx(1, abs=1e-9)
    assert r.H == pytest.approx(sum(q.values()) / r.p_A, abs=1e-9)
    assert r.total_vn == r.H + 1 and r.singlet_bits == r.H
    assert r.total_povm == 2 * (r.total_vn + 1)
    d = r.to_dict()
    assert {"quad_tol", "generator"} <= set(d["metadata"])


def test_geometric_series():
    r = entropy_report()
    p_a = [r.p_A_lambda, r.p_A_mu, r.p_A_nu]
    q_a = [r.q_A_lambda, r.q_A_mu, r.q_A_nu]
    assert geometric_entropy_sum(p_a, q_a, r.p_R, r.q_R) == pytest.approx(r.H, abs=1e-9)


def test_ideal_codelength_single_record():
    stream = ScriptedStream([rec((Z, X, Y), 0.2)])
    _, _, tr = protocol.alice_select(Z, stream)
    assert ideal_codelength(tr, stream) == pytest.approx(-np.log2(0.8), abs=1e-9)
    assert tr.ideal_bits == pytest.approx(0.3219, abs=1e-4)


def test_ideal_codelength_additive():
    stream = ScriptedStream([rec((Z, X, Y), 1.5), rec((Z, X, Y), 0.2)])
    _, _, tr = protocol.alice_select(Z, stream)
    r = zone_prob_given_u(Zone.R, 1.5)
    assert ideal_codelength(tr, stream) == pytest.approx(-np.log2(r) - np.log2(0.8), abs=1e-6)


def test_codelength_batch_matches_scalar(rng):
    a = sample_unit_vector(rng)
    seeds = lhv.session_seeds(3, 0, 200)
    msgs = protocol.alice_select_batch(a, seeds)
    bits = cost.codelength_batch(msgs, seeds)
    for i, s in enumerate(seeds):
        stream = lhv.LhvStream(int(s))
        _, _, tr = protocol.alice_select(a, stream)
        assert ideal_codelength(tr, stream) == pytest.approx(bits[i], abs=1e-9)


def _mean_bits(a, master, n=10**6):
    seeds = lhv.session_seeds(master, 0, n)
    bits = cost.codelength_batch(protocol.alice_select_batch(a, seeds), seeds)
    return bits.mean(), bits.std() / np.sqrt(n)


def test_mean_codelength_is_entropy():
    mean, _ = _mean_bits(normalize([0.3, -0.2, 0.9]), 41)
    assert abs(mean - entropy_report().H) < 0.01


def test_codelength_state_independent():
    results = [_mean_bits(a, 42, 3 * 10**5) for a in (Z, normalize([1, 1, 1]), normalize([-0.7, 0.1, 0.2]))]
    for m1, s1 in results:
        for m2, s2 in results:
            assert abs(m1 - m2) < 4 * np.hypot(s1, s2)


def test_fidelity_budget():
    total = entropy_report().total_vn
    assert fidelity_budget(0) == 0.5
    assert fidelity_budget(total) == pytest.approx(1.0)
    assert fidelity_budget(1, total_bits=2) == 0.75
    with pytest.warns(UserWarning):
        assert fidelity_budget(total + 1) == 1.0
    with pytest.raises(ValueError):
        fidelity_budget(-1)
