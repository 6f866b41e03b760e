"""Reachability: path construction, replay soundness, serialization."""
import numpy as np
import pytest

from elodyn.dynamics import (MatchEvent, PathPlan, e_plus, find_path_1d,
                             find_path_nd)
from elodyn.model import LinkFunction, RatingVector, make_params


@pytest.fixture
def p2():
    return make_params(2, 0.4)


@pytest.fixture
def p3():
    return make_params(3, 0.4)


def _replay_1d(u, scores, params):
    for s in scores:
        u = u + params.k_factor * (s - params.link.eval_scalar(2.0 * u))
    return u


def test_empty_path_when_inside(p2):
    assert find_path_1d(0.5, 0.0, 1.0, p2) == []


def test_monotone_walk_to_distant_interval(p2):
    # oracle: iterating the forced-win map must land in a 2K-wide interval
    scores = find_path_1d(0.0, 4.0, 4.8, p2)
    assert scores and all(s == 1.0 for s in scores)
    u = _replay_1d(0.0, scores, p2)
    assert 4.0 < u < 4.8
    # forward-iteration oracle: same walk, step by step
    v, steps = 0.0, 0
    while v <= 4.0:
        v = e_plus(v, p2)
        steps += 1
    assert steps == len(scores)


def test_narrow_interval_path(p2):
    scores = find_path_1d(0.0, 0.377, 0.383, p2)  # width below 2K
    u = _replay_1d(0.0, scores, p2)
    assert 0.377 < u < 0.383


def test_narrow_interval_from_above(p2):
    scores = find_path_1d(3.0, -1.203, -1.195, p2)
    u = _replay_1d(3.0, scores, p2)
    assert -1.203 < u < -1.195


def test_path_rejects_bad_interval(p2):
    with pytest.raises(ValueError):
        find_path_1d(0.0, 1.0, 1.0, p2)


def test_path_requires_2kl_below_one():
    p = make_params(2, 1.2, link=LinkFunction.logistic(0.5))
    with pytest.raises(ValueError):
        find_path_1d(0.0, 1.0, 1.1, p)


def test_nd_reduces_to_1d_for_two_players(p2):
    start = RatingVector(np.array([1.0, -1.0]))
    plan = find_path_nd(start, [(-0.55, -0.45)], p2)
    # the pair sum is zero, so the symmetric coordinate is x0 itself
    assert [ev.s for ev in plan.events] == find_path_1d(1.0, -0.55, -0.45, p2)
    assert all((ev.i, ev.j) == (0, 1) for ev in plan.events)
    terminal = plan.replay(p2)
    assert -0.55 < terminal.entries[0] < -0.45


def test_nd_three_players_example(p3):
    plan = find_path_nd(RatingVector.zeros(3), [(1.0, 1.1), (-0.5, -0.4)], p3)
    terminal = plan.replay(p3)
    assert 1.0 < terminal.entries[0] < 1.1
    assert -0.5 < terminal.entries[1] < -0.4
    # the last coordinate is pinned by the zero sum
    assert terminal.entries[2] == pytest.approx(
        -terminal.entries[0] - terminal.entries[1], abs=1e-9)


def test_nd_wrong_box_count(p3):
    with pytest.raises(ValueError):
        find_path_nd(RatingVector.zeros(3), [(0.0, 1.0)], p3)


def test_random_boxes_replay_exactly(p2, p3):
    rng = np.random.default_rng(77)
    for params, width, trials in ((p2, 0.01, 50), (p3, 0.05, 25)):
        n = params.n_players
        for _ in range(trials):
            centres = rng.uniform(-3, 3, size=n - 1)
            boxes = [(c - width / 2, c + width / 2) for c in centres]
            start = RatingVector.centred(rng.uniform(-3, 3, size=n))
            plan = find_path_nd(start, boxes, params)
            assert plan.in_target(plan.replay(params))


def test_log_probability_finite_and_negative(p2):
    plan = find_path_nd(RatingVector.zeros(2), [(1.0, 1.1)], p2)
    logp = plan.log_probability(p2)
    assert np.isfinite(logp) and logp < 0.0


def test_box_containing_start_gives_empty_plan(p2):
    plan = find_path_nd(RatingVector.zeros(2), [(-0.1, 0.1)], p2)
    assert plan.events == ()
    assert plan.log_probability(p2) == 0.0


def test_log_probability_rejects_non_atoms(p2):
    plan = PathPlan(start=RatingVector.zeros(2), boxes=((-1.0, 1.0),),
                    events=(MatchEvent(0, 1, 0.5),))
    with pytest.raises(ValueError):
        plan.log_probability(p2)


def test_plan_text_round_trip(p2):
    plan = find_path_nd(RatingVector(np.array([0.25, -0.25])), [(1.0, 1.01)], p2)
    text = plan.to_text()
    back = PathPlan.from_text(text)
    assert back.events == plan.events
    assert np.array_equal(back.start.entries, plan.start.entries)
    assert back.boxes == plan.boxes
    header = text.splitlines()[0]
    assert header.startswith("# start=") and "targets=" in header
    for line in text.splitlines()[1:]:
        i, j, s = line.split()
        assert s in ("+1", "-1")


def test_from_text_requires_header():
    with pytest.raises(ValueError):
        PathPlan.from_text("0 1 +1\n")
