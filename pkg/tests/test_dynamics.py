"""Step maps, coupling contraction, forced-result maps, Lyapunov drift."""
import math

import numpy as np
import pytest

from elodyn.dynamics import (CouplingState, LyapunovSpec, MatchEvent,
                             chain_step, coupled_step, e_minus, e_minus_inv,
                             e_plus, e_plus_inv, elo_step, exact_drift,
                             lyapunov_value, run_chain, run_coupled)
from elodyn.model import LinkFunction, RatingVector, TrueSkillVector, make_params
from elodyn.verify import monte_carlo_drift

# mpmath oracle values (30 digits)
STEP_FROM_1 = 1.095362337617694     # 1 + 0.4*(1 - tanh(1))
E_PLUS_04 = 0.64802041509791005     # 0.4 + 0.4*(1 - tanh(0.4))
TWO_COSH_01 = 2.0100083361116072
DRIFT_AT_ZERO = 0.00040001333351111238  # 2*(cosh(0.4*0.05) - 1)


@pytest.fixture
def p2():
    return make_params(2, 0.4)


def test_match_event_validation():
    with pytest.raises(ValueError):
        MatchEvent(1, 1, 1.0)
    with pytest.raises(ValueError):
        MatchEvent(0, 1, 1.5)


def test_elo_step_from_origin(p2):
    x = RatingVector.zeros(2)
    y = elo_step(x, MatchEvent(0, 1, 1.0), p2)
    assert y.entries[0] == 0.4 and y.entries[1] == -0.4


def test_elo_step_value(p2):
    x = RatingVector(np.array([1.0, -1.0]))
    y = elo_step(x, MatchEvent(0, 1, 1.0), p2)
    assert y.entries[0] == pytest.approx(STEP_FROM_1, abs=1e-12)
    assert y.entries[1] == pytest.approx(-STEP_FROM_1, abs=1e-12)


def test_elo_step_fixed_point_when_score_matches_prediction(p2):
    x = RatingVector(np.array([1.0, -1.0]))
    s = p2.link.eval_scalar(2.0)  # score equal to the predicted score
    y = elo_step(x, MatchEvent(0, 1, s), p2)
    assert np.array_equal(y.entries, x.entries)


def test_elo_step_other_coordinates_untouched():
    p = make_params(4, 0.4)
    x = RatingVector(np.array([1.0, -1.0, 2.0, -2.0]))
    y = elo_step(x, MatchEvent(0, 2, 0.5), p)
    assert y.entries[1] == x.entries[1]
    assert y.entries[3] == x.entries[3]


def test_elo_step_index_out_of_range(p2):
    with pytest.raises(IndexError):
        elo_step(RatingVector.zeros(2), MatchEvent(0, 5, 1.0), p2)


def test_chain_step_two_players_always_same_pair(p2):
    rng = np.random.default_rng(0)
    x = RatingVector.zeros(2)
    for _ in range(50):
        x, ev = chain_step(x, p2, rng)
        assert {ev.i, ev.j} == {0, 1}


def test_chain_step_deterministic(p2):
    x = RatingVector.zeros(2)
    a = chain_step(x, p2, np.random.default_rng(42))
    b = chain_step(x, p2, np.random.default_rng(42))
    assert np.array_equal(a[0].entries, b[0].entries)
    assert a[1] == b[1]


def test_pair_frequencies_uniform():
    p = make_params(4, 0.4)
    counts = np.zeros((4, 4))
    rng = np.random.default_rng(3)
    steps = 200_000
    run_chain(RatingVector.zeros(4), p, steps, rng, pair_counts=counts)
    assert counts.sum() == steps
    prob = 1.0 / 12.0
    sigma = math.sqrt(prob * (1 - prob) * steps)
    for i in range(4):
        for j in range(4):
            if i == j:
                assert counts[i, j] == 0
            else:
                assert abs(counts[i, j] - steps * prob) <= 4.0 * sigma


def test_run_chain_zero_sum_preserved():
    p = make_params(4, 0.4)
    x0 = RatingVector.centred(np.random.default_rng(9).uniform(-2, 2, 4))
    x = run_chain(x0, p, 100_000, np.random.default_rng(10))
    assert abs(float(x.entries.sum()) - float(x0.entries.sum())) <= 1e-9


def test_run_chain_three_point_runs():
    p = make_params(3, 0.2, skills=[0.3, 0.0, -0.3], score_kind="three_point",
                    p_tie=0.3)
    x = run_chain(RatingVector.zeros(3), p, 5_000, np.random.default_rng(1))
    assert abs(float(x.entries.sum())) <= 1e-9


# -- coupling -------------------------------------------------------------------

def test_coupling_identical_states_stay_identical(p2):
    st = CouplingState(RatingVector.zeros(2), RatingVector.zeros(2))
    rng = np.random.default_rng(4)
    for _ in range(200):
        coupled_step(st, p2, rng)
    assert st.distance == 0.0
    assert all(d == 0.0 for d in st.distance_history)


def test_coupled_step_never_expands(p2):
    st = CouplingState(RatingVector(np.array([1.0, -1.0])), RatingVector.zeros(2))
    rng = np.random.default_rng(8)
    d0 = st.distance
    coupled_step(st, p2, rng)
    assert st.distance <= d0
    assert len(st.distance_history) == 2


def test_run_coupled_contracts_to_zero(p2):
    st = CouplingState(RatingVector(np.array([5.0, -5.0])), RatingVector.zeros(2))
    run_coupled(st, p2, 10_000, np.random.default_rng(6))
    assert st.distance < 0.01 * st.distance_history[0]
    hist = np.asarray(st.distance_history)
    assert np.all(np.diff(hist) <= 1e-12)


def test_run_coupled_dimension_mismatch(p2):
    with pytest.raises(ValueError):
        CouplingState(RatingVector.zeros(2), RatingVector.zeros(3))


# -- forced-result maps ------------------------------------------------------------

def test_e_plus_values(p2):
    assert e_plus(0.0, p2) == 0.4
    assert e_plus(0.4, p2) == pytest.approx(E_PLUS_04, abs=1e-12)


def test_e_maps_strictly_move(p2):
    rng = np.random.default_rng(2)
    for u in rng.uniform(-10, 10, 200):
        assert e_plus(float(u), p2) > u
        assert e_minus(float(u), p2) < u


def test_forced_wins_diverge(p2):
    # growth is logarithmic (the link saturates), but unbounded: each step
    # adds K*(1 - tanh(u)) >= K*exp(-2u), and Euler steps on a decreasing
    # rate dominate the ODE solution u(t) = ln(2Kt + 1)/2
    u, checkpoints = 0.0, {}
    for t in range(1, 10_001):
        nxt = e_plus(u, p2)
        assert nxt > u
        u = nxt
        if t in (100, 1_000, 10_000):
            checkpoints[t] = u
    for t, value in checkpoints.items():
        assert value > 0.5 * math.log(2 * 0.4 * t + 1.0)
    assert checkpoints[10_000] > checkpoints[1_000] > checkpoints[100]


def test_inverse_round_trip(p2):
    rng = np.random.default_rng(12)
    for u in rng.uniform(-20, 20, 1000):
        u = float(u)
        assert abs(e_plus(e_plus_inv(u, p2), p2) - u) <= 1e-10
        assert abs(e_minus(e_minus_inv(u, p2), p2) - u) <= 1e-10


def test_inverse_of_first_example(p2):
    assert abs(e_plus_inv(0.4, p2)) <= 1e-10


def test_inverse_requires_2kl_below_one():
    p = make_params(2, 1.2, link=LinkFunction.logistic(0.5))  # KL = 0.6, 2KL = 1.2
    with pytest.raises(ValueError):
        e_plus_inv(0.0, p)


def test_inverse_maps_expand(p2):
    # on any interval the inverse maps stretch distances by 1 + eta, eta > 0
    grid = np.linspace(-1.0, 1.0, 41)
    for inv in (e_plus_inv, e_minus_inv):
        vals = np.array([inv(float(u), p2) for u in grid])
        ratios = np.diff(vals) / np.diff(grid)
        assert ratios.min() > 1.0 + 1e-6


# -- Lyapunov functional and exact drift ----------------------------------------------

def test_lyapunov_at_center_equals_n():
    spec = LyapunovSpec(a=0.1, skills=TrueSkillVector(np.array([0.5, -0.5])))
    x = RatingVector(np.array([0.5, -0.5]))
    assert lyapunov_value(x, spec) == 2.0


def test_lyapunov_value_example():
    spec = LyapunovSpec(a=0.1, skills=TrueSkillVector.zeros(2))
    x = RatingVector(np.array([1.0, -1.0]))
    assert lyapunov_value(x, spec) == pytest.approx(TWO_COSH_01, abs=1e-12)


def test_lyapunov_lower_bound():
    spec = LyapunovSpec(a=0.05, skills=TrueSkillVector.zeros(3))
    rng = np.random.default_rng(3)
    for _ in range(100):
        x = RatingVector.centred(rng.uniform(-40, 40, 3))
        assert lyapunov_value(x, spec) >= 3.0


def test_lyapunov_overflow_guard():
    spec = LyapunovSpec(a=0.05, skills=TrueSkillVector.zeros(2))
    x = RatingVector(np.array([14_100.0, -14_100.0]))
    value = lyapunov_value(x, spec)       # a*|x| = 705 > 700: log-space path
    # oracle: log(2*cosh(705)) = 705 + log1p(exp(-1410)) = 705 exactly in doubles
    assert math.isfinite(value)
    assert math.log(value) == pytest.approx(705.0, abs=1e-9)
    huge = RatingVector(np.array([20_000.0, -20_000.0]))
    assert lyapunov_value(huge, spec) == math.inf  # beyond float range, no raise


def test_exact_drift_closed_form_at_origin(p2):
    spec = LyapunovSpec(a=0.05, skills=TrueSkillVector.zeros(2))
    drift = exact_drift(RatingVector.zeros(2), spec, p2)
    assert drift == pytest.approx(DRIFT_AT_ZERO, rel=1e-12)
    assert drift > 0.0  # inside the ball the drift may be positive


def test_exact_drift_negative_far_out(p2):
    spec = LyapunovSpec(a=0.05, skills=TrueSkillVector.zeros(2))
    assert exact_drift(RatingVector(np.array([50.0, -50.0])), spec, p2) < 0.0


def test_exact_drift_symmetric_under_negation(p2):
    spec = LyapunovSpec(a=0.05, skills=TrueSkillVector.zeros(2))
    rng = np.random.default_rng(5)
    for _ in range(20):
        x = RatingVector.centred(rng.uniform(-30, 30, 2))
        minus = RatingVector(-x.entries)
        assert exact_drift(x, spec, p2) == pytest.approx(
            exact_drift(minus, spec, p2), rel=1e-12, abs=1e-15)


def test_exact_drift_rejects_continuous_scores():
    link = LinkFunction.logistic(0.5)
    skills = TrueSkillVector.zeros(2)

    def sampler(mu, rng, size):
        half = 1.0 - abs(mu)
        return mu + rng.uniform(-half, half, size=size)

    p = make_params(2, 0.4, link=link, skills=skills,
                    score_kind="continuous_custom", sampler=sampler)
    spec = LyapunovSpec(a=0.05, skills=skills)
    with pytest.raises(ValueError):
        exact_drift(RatingVector.zeros(2), spec, p)


def test_exact_drift_matches_monte_carlo(p2):
    spec = LyapunovSpec(a=0.05, skills=TrueSkillVector.zeros(2))
    rng = np.random.default_rng(17)
    for entries in ([2.0, -2.0], [10.0, -10.0]):
        x = RatingVector(np.array(entries))
        exact = exact_drift(x, spec, p2)
        est, se = monte_carlo_drift(x, spec, p2, 100_000, rng)
        assert abs(est - exact) <= 5.0 * se


def test_exact_drift_three_point():
    p = make_params(2, 0.3, score_kind="three_point", p_tie=0.4)
    spec = LyapunovSpec(a=0.05, skills=p.skills)
    rng = np.random.default_rng(21)
    x = RatingVector(np.array([3.0, -3.0]))
    exact = exact_drift(x, spec, p)
    est, se = monte_carlo_drift(x, spec, p, 100_000, rng)
    assert abs(est - exact) <= 5.0 * se


# -- zero-sum norm identities -----------------------------------------------------

def test_norm_identities_random_vectors():
    rng = np.random.default_rng(100)
    for n in range(2, 11):
        for _ in range(120):
            x = rng.uniform(-5, 5, n)
            x -= x.mean()
            gaps = x[:, None] - x[None, :]
            lhs = float(np.sum(x * x))
            rhs = float(np.sum(gaps * gaps)) / (2 * n)
            assert abs(lhs - rhs) <= 1e-9 * max(1.0, abs(lhs))
            assert np.abs(x).sum() <= np.abs(gaps).sum() / n + 1e-12
