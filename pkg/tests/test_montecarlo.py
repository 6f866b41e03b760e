"""Ensemble engine: determinism, snapshots, histograms, W1, diagnostics."""
import itertools
import math

import numpy as np
import pytest

from elodyn.model import RatingVector, make_params
from elodyn.montecarlo import (EnsembleConfig, InitialCondition, default_t_star,
                               convergence_diagnostic, empirical_w1,
                               ensemble_snapshots, exp_moment, format_header,
                               make_histogram, parse_header, run_ensemble,
                               write_histogram_csv, write_samples_csv)
from elodyn.verify import two_player_config

TANH_05 = 0.46211715726000976


def test_default_t_star():
    assert default_t_star(0.4) == 200
    assert default_t_star(0.01) == 1000
    assert default_t_star(1e-3) == 10_000


def test_point_initial_no_steps():
    x0 = RatingVector(np.array([1.5, -1.5]))
    cfg = EnsembleConfig(params=make_params(2, 0.4), m=1, t_star=0,
                         master_seed=0, initial=InitialCondition.point(x0))
    result = run_ensemble(cfg)
    assert np.array_equal(result.samples, [[1.5, -1.5]])


def test_determinism_and_thread_independence(monkeypatch):
    cfg = two_player_config(0.4, 0.5, 5000, t_star=50, seed=21)
    base = run_ensemble(cfg).samples
    again = run_ensemble(cfg).samples
    assert np.array_equal(base, again)
    monkeypatch.setenv("ELO_DYN_THREADS", "3")
    threaded = run_ensemble(cfg).samples
    assert np.array_equal(base, threaded)


def test_snapshots_do_not_perturb_terminal_samples():
    cfg = two_player_config(0.4, 0.5, 3000, t_star=60, seed=5)
    plain = run_ensemble(cfg).samples
    snaps = ensemble_snapshots(cfg, [0, 10, 30, 60])
    assert np.array_equal(snaps[60], plain)
    assert set(snaps) == {0, 10, 30, 60}
    assert np.array_equal(snaps[0], np.zeros((3000, 2)))


def test_snapshot_times_validated():
    cfg = two_player_config(0.4, 0.0, 10, t_star=5, seed=0)
    with pytest.raises(ValueError):
        ensemble_snapshots(cfg, [6])


def test_uniform_initial_is_recentred():
    cfg = EnsembleConfig(params=make_params(3, 0.4), m=500, t_star=0,
                         master_seed=3, initial=InitialCondition.uniform(-2, 2))
    samples = run_ensemble(cfg).samples
    assert np.max(np.abs(samples.sum(axis=1))) < 1e-12
    assert samples.std() > 0.1


def test_symmetric_league_has_zero_mean():
    cfg = two_player_config(0.4, 0.0, 20_000, t_star=200, seed=11)
    result = run_ensemble(cfg)
    x1 = result.samples[:, 0]
    assert abs(x1.mean()) <= 4.0 * x1.std() / math.sqrt(cfg.m)


def test_predicted_score_unbiased_quick():
    cfg = two_player_config(0.4, 0.5, 20_000, t_star=300, seed=13)
    result = run_ensemble(cfg)
    mean_b = float(np.tanh(result.samples[:, 0]).mean())  # b(2*x) at c=0.5
    assert abs(mean_b - TANH_05) < 0.02


def test_continuous_custom_ensemble_runs():
    def sampler(mu, rng, size):
        half = 1.0 - abs(mu)
        return mu + rng.uniform(-half, half, size=size)

    params = make_params(2, 0.4, skills=[0.2, -0.2],
                         score_kind="continuous_custom", sampler=sampler)
    cfg = EnsembleConfig(params=params, m=300, t_star=150, master_seed=9,
                         initial=InitialCondition.zero())
    first = run_ensemble(cfg).samples
    second = run_ensemble(cfg).samples
    assert np.array_equal(first, second)
    assert np.max(np.abs(first.sum(axis=1))) < 1e-9


def test_summary_fields():
    cfg = two_player_config(0.4, 0.5, 2000, t_star=100, seed=1)
    result = run_ensemble(cfg)
    s = result.summary
    assert s.mean.shape == (2,)
    assert np.all(s.mean_abs_dev >= 0)
    assert s.exp_moment == pytest.approx(exp_moment(result.samples))
    assert result.metadata["m"] == 2000 and result.metadata["seed"] == 1


# -- histograms ---------------------------------------------------------------

def test_histogram_degenerate_samples():
    hist = make_histogram([0.0, 0.0, 0.0], bins=1)
    assert hist.counts.tolist() == [3]
    widths = np.diff(hist.bin_edges)
    assert float(hist.normalized_density @ widths) == pytest.approx(1.0)


def test_histogram_counts_and_density():
    rng = np.random.default_rng(2)
    samples = rng.normal(size=10_000)
    hist = make_histogram(samples, bins=137)
    assert hist.counts.sum() == 10_000
    widths = np.diff(hist.bin_edges)
    assert float(hist.normalized_density @ widths) == pytest.approx(1.0, abs=1e-9)


def test_histogram_validation():
    with pytest.raises(ValueError):
        make_histogram([], bins=3)
    with pytest.raises(ValueError):
        make_histogram([1.0], bins=0)


# -- empirical W1 ----------------------------------------------------------------

def test_w1_identical_is_zero():
    a = np.array([0.0, 1.0, 2.5])
    assert empirical_w1(a, a) == 0.0


def test_w1_translation():
    rng = np.random.default_rng(3)
    a = rng.normal(size=500)
    assert empirical_w1(a, a + 0.75) == pytest.approx(0.75, abs=1e-12)


def test_w1_sorted_matching_is_optimal():
    # brute-force oracle over all matchings for small point sets
    a = np.array([0.0, 1.0])
    b = np.array([0.0, 3.0])
    brute = min(np.mean(np.abs(a - np.array(perm)))
                for perm in itertools.permutations(b))
    assert brute == 1.0
    assert empirical_w1(a, b) == pytest.approx(brute)
    rng = np.random.default_rng(4)
    for _ in range(25):
        a = rng.normal(size=5)
        b = rng.normal(size=5)
        brute = min(np.mean(np.abs(a - np.array(perm)))
                    for perm in itertools.permutations(b))
        assert empirical_w1(a, b) == pytest.approx(brute, abs=1e-12)


def test_w1_triangle_inequality():
    rng = np.random.default_rng(5)
    for _ in range(50):
        a, b, c = (rng.normal(size=64) for _ in range(3))
        assert empirical_w1(a, c) <= empirical_w1(a, b) + empirical_w1(b, c) + 1e-12


def test_w1_unequal_sizes_need_rng():
    a = np.arange(10.0)
    b = np.arange(6.0)
    with pytest.raises(ValueError):
        empirical_w1(a, b)
    value = empirical_w1(a, b, rng=np.random.default_rng(0))
    assert value >= 0.0


def test_w1_empty_rejected():
    with pytest.raises(ValueError):
        empirical_w1([], [1.0])


# -- convergence diagnostic --------------------------------------------------------

def test_convergence_diagnostic_decreases():
    cfg = two_player_config(
        0.4, 0.5, 20_000, t_star=200, seed=31,
        initial=InitialCondition.point(RatingVector(np.array([5.0, -5.0]))))
    diag = convergence_diagnostic(cfg, [0, 10, 50, 200])
    values = [w for _, w in diag]
    assert values[0] > 1.0            # point mass far from equilibrium
    assert all(a > b for a, b in zip(values, values[1:]))
    assert values[-1] == 0.0          # checkpoint at t_star is the final snapshot


def test_convergence_diagnostic_validates_order():
    cfg = two_player_config(0.4, 0.0, 100, t_star=50, seed=0)
    with pytest.raises(ValueError):
        convergence_diagnostic(cfg, [50, 10])


# -- CSV helpers --------------------------------------------------------------------

def test_header_round_trip():
    fields = {"command": "density-rho", "seed": 7, "k": 0.4, "rho1": 0.25}
    parsed = parse_header(format_header(fields))
    assert parsed["command"] == "density-rho"
    assert int(parsed["seed"]) == 7
    assert float(parsed["k"]) == 0.4


def test_histogram_csv_round_trip(tmp_path):
    hist = make_histogram(np.random.default_rng(1).normal(size=1000), bins=20)
    path = tmp_path / "hist.csv"
    write_histogram_csv(hist, path, {"seed": 3, "m": 1000})
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# seed=3")
    assert lines[1] == "bin_left,bin_right,count,density"
    assert len(lines) == 2 + 20
    total = sum(int(line.split(",")[2]) for line in lines[2:])
    assert total == 1000


def test_samples_csv(tmp_path):
    samples = np.array([[0.5, -0.5], [1.0, -1.0]])
    path = tmp_path / "samples.csv"
    write_samples_csv(samples, path, {"seed": 1, "t_star": 10, "m": 2})
    lines = path.read_text().splitlines()
    assert lines[0] == "# seed=1 t_star=10 m=2"
    assert lines[1] == "x0,x1"
    assert lines[2] == "0.5,-0.5"
