import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_state
from ncmcast.model import Packet, UncodedQueue
from ncmcast.rates import expected_rates
from ncmcast.schedulers import (SchedulerConfig, decide_arq, decide_lps, decide_lys,
                                decide_lys_beta, dv_full, dv_reduced, schedule_table,
                                score_schedules)
from ncmcast.schedules import enumerate_schedules

S = enumerate_schedules(3)
EPS = [0.2, 0.2, 0.2]


def brute_dv(schedule, Q, eps, lam, full):
    # straight from the rate vector: external arrivals charged to every schedule
    rv = expected_rates(schedule, [q > 0 for q in Q], eps, lam)
    if full:
        return float(np.dot(Q, rv.a) - sum(Q[i] * rv.d[i] for i in schedule.parts))
    return Q[0] * lam - sum(Q[i] * rv.d[i] for i in schedule.parts)


def test_zero_backlog_zero_dv():
    for s in S:
        assert dv_reduced(s, [0] * 7, EPS, 0.7) == 0
        assert dv_full(s, [0] * 7, EPS, 0.7) == 0


def test_q0_only():
    Q = [10, 0, 0, 0, 0, 0, 0]
    assert dv_reduced(S[0], Q, EPS, 0.7) == pytest.approx(-2.92)
    dv = [dv_reduced(s, Q, EPS, 0.7) for s in S]
    # the external-arrival charge Q_0 * lam is common to every schedule
    assert dv[1:] == pytest.approx([7.0] * 4)
    assert decide_lys(make_state(Q), EPS, 0.7).schedule.id == 0


def test_singletons_win():
    Q = [0, 0, 0, 0, 5, 5, 5]
    dv = [dv_reduced(s, Q, EPS, 0.7) for s in S]
    assert dv[1] == pytest.approx(-12.0)
    assert dv[2] == dv[3] == dv[4] == pytest.approx(-4.0)
    assert decide_lys(make_state(Q), EPS, 0.7).schedule.id == 1


def test_full_minus_reduced():
    Q = [10, 100, 0, 0, 0, 0, 0]
    diff = dv_full(S[0], Q, EPS, 0.7) - dv_reduced(S[0], Q, EPS, 0.7)
    assert diff == pytest.approx(100 * 0.2 * 0.2 * 0.8)


def test_singleton_schedule_modes_agree():
    Q = [3, 4, 5, 6, 7, 8, 9]
    assert dv_full(S[1], Q, EPS, 0.4) == pytest.approx(dv_reduced(S[1], Q, EPS, 0.4))


def test_empty_system_idle():
    d = decide_lys(make_state([0] * 7), EPS, 0.7)
    assert d.idle
    assert decide_lys_beta(make_state([0] * 7), EPS, 0.7, 5).idle


def test_tie_breaks_to_lower_id():
    d = decide_lys(make_state([0, 4, 4, 0, 0, 0, 0]), EPS, 0.5)
    assert d.schedule.id == 2


def test_age_priority_picks_older():
    # q_4 and q_6 equal in backlog; q_6's head is older
    ages = [0, 0, 0, 0, 1, 0, 6]
    st_ = make_state([0, 0, 0, 0, 1, 0, 1], ages=ages, slot=10)
    cfg = SchedulerConfig("lys-beta", beta=0.5)
    d = decide_lys_beta(st_, EPS, 0.7, 10, cfg)
    # S_2 = {q_1, q_6} and S_3 = {q_2, q_4} differ only by the age term
    dv = d.dv_values
    assert dv[2] < dv[3]
    assert d.schedule.id == 1  # S_1 serves both and includes the oldest head
    plain = decide_lys(st_, EPS, 0.7)
    assert plain.dv_values[2] == plain.dv_values[3]
    st2 = make_state([0, 0, 0, 0, 1, 0, 0], ages=[0, 0, 0, 0, 0, 0, 0], slot=10)
    st2.enqueue(Packet(99, 4), 2)
    d2 = decide_lys_beta(st2, EPS, 0.7, 10, cfg)
    plain2 = decide_lys(st2, EPS, 0.7)
    assert d2.schedule.id == 3
    assert d2.dv_values[3] == pytest.approx(plain2.dv_values[3] - 0.5 * 6)


def test_literal_sign_penalizes_age():
    st_ = make_state([0, 0, 0, 0, 0, 0, 2], ages=[0] * 6 + [4], slot=4)
    pr = decide_lys_beta(st_, EPS, 0.7, 4, SchedulerConfig("lys-beta", beta=1.0))
    li = decide_lys_beta(st_, EPS, 0.7, 4,
                         SchedulerConfig("lys-beta", beta=1.0, age_sign="literal"))
    assert li.dv_values[1] - pr.dv_values[1] == pytest.approx(8.0)


def test_zero_ages_any_beta_same_as_lys():
    st_ = make_state([3, 1, 0, 2, 0, 5, 1])
    a = decide_lys(st_, EPS, 0.6)
    b = decide_lys_beta(st_, EPS, 0.6, 0, SchedulerConfig("lys-beta", beta=7.0))
    assert a.schedule == b.schedule


def test_config_validation():
    with pytest.raises(ValueError):
        SchedulerConfig("lys", beta=0.5)
    with pytest.raises(ValueError):
        SchedulerConfig("nope")
    assert SchedulerConfig("lys-beta").effective_beta == 0.5


q_vectors = st.lists(st.integers(0, 30), min_size=7, max_size=7)
eps_vectors = st.lists(st.floats(0, 0.95), min_size=3, max_size=3)


@settings(max_examples=300, deadline=None)
@given(q_vectors, eps_vectors, st.floats(0, 1), st.sampled_from(["reduced", "full"]))
def test_fast_scorer_matches_rate_vectors(Q, eps, lam, mode):
    table = schedule_table(3)
    full = mode == "full"
    dv = score_schedules(table, Q, table.service_probs(eps), lam, full=full,
                         trans=table.transitions(eps))
    ref = [brute_dv(s, Q, eps, lam, full) for s in S]
    np.testing.assert_allclose(dv, ref, rtol=1e-12, atol=1e-9)
    pub = [(dv_full if full else dv_reduced)(s, Q, eps, lam) for s in S]
    np.testing.assert_allclose(dv, pub, rtol=1e-12, atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(q_vectors, eps_vectors, st.floats(0, 1))
def test_argmin_consistency(Q, eps, lam):
    d = decide_lys(make_state(Q), eps, lam)
    if d.schedule is not None:
        assert d.dv_values[d.schedule.id] == d.dv_values.min()
        assert d.schedule.id == int(np.argmin(d.dv_values))


def test_vectorized_path_matches_loop():
    rng = np.random.default_rng(1)
    table = schedule_table(5)
    assert table.vectorized
    for _ in range(50):
        Q = rng.integers(0, 4, size=31).tolist()
        ages = rng.integers(0, 9, size=31).tolist()
        eps = rng.random(5) * 0.9
        d = table.service_probs(eps)
        vec = score_schedules(table, Q, d, 0.5, ages=ages, beta=0.3, sigma=-1.0)
        table.vectorized = False
        loop = score_schedules(table, Q, d, 0.5, ages=ages, beta=0.3, sigma=-1.0)
        table.vectorized = True
        np.testing.assert_allclose(vec, loop, atol=1e-9)


def test_lps_deterministic_p():
    rng = np.random.default_rng(0)
    st_ = make_state([1, 1, 1, 1, 1, 1, 1])
    for _ in range(20):
        assert decide_lps(st_, [1, 0, 0, 0, 0], rng).schedule.id == 0


def test_lps_idle_when_sampled_empty():
    st_ = make_state([5, 0, 0, 0, 0, 0, 0])
    assert decide_lps(st_, [0, 1, 0, 0, 0], np.random.default_rng(0)).idle


def test_lps_rejects_bad_p():
    with pytest.raises(ValueError):
        decide_lps(make_state([1] * 7), [0.5, 0.2, 0, 0, 0], np.random.default_rng(0))


def test_lps_frequencies():
    p = np.array([0.4, 0.3, 0.15, 0.1, 0.05])
    rng = np.random.default_rng(77)
    st_ = make_state([1] * 7)
    n = 100_000
    counts = np.zeros(5)
    for _ in range(n):
        counts[decide_lps(st_, p, rng).schedule.id] += 1
    sigma = np.sqrt(n * p * (1 - p))
    assert (np.abs(counts - n * p) <= 3 * sigma).all()


def test_arq_head_and_idle():
    q = UncodedQueue(3)
    assert decide_arq(q) is None
    q.enqueue(Packet(1, 0))
    q.enqueue(Packet(2, 0))
    assert decide_arq(q).id == 1
    assert q.transmit(0b011) == 0
    assert q.transmit(0b100) == 1
    assert decide_arq(q).id == 2


def _random_states(n_states, seed):
    rng = np.random.default_rng(seed)
    for _ in range(n_states):
        Q = rng.integers(0, 6, size=7) * (rng.random(7) < 0.6)
        ages = rng.integers(0, 15, size=7).tolist()
        eps = (rng.random(3) * 0.9).tolist()
        lam = float(rng.random())
        yield Q.tolist(), ages, eps, lam


def test_beta_zero_equals_lys_on_many_states():
    cfg = SchedulerConfig("lys-beta", beta=0.0)
    for Q, ages, eps, lam in _random_states(10_000, 5):
        st_ = make_state(Q, ages=ages, slot=20)
        assert decide_lys_beta(st_, eps, lam, 20, cfg).schedule == decide_lys(st_, eps, lam).schedule


def test_scaling_invariance_on_many_states():
    rng = np.random.default_rng(8)
    for Q, _, eps, lam in _random_states(1000, 6):
        c = int(rng.integers(2, 6))
        a = decide_lys(make_state(Q), eps, lam).schedule
        b = decide_lys(make_state([c * x for x in Q]), eps, lam).schedule
        assert a == b
