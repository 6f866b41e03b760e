"""Quantitative checks: each theorem-level claim becomes a pass/fail report.

Every check runs a deterministic experiment (seeded sub-streams derived from
a master seed), compares an observed statistic against a closed-form bound
or target with an explicit statistical allowance, and returns a
:class:`CheckReport` whose pass flag is recomputable from its recorded
``observed`` / ``bound_or_target`` / ``tolerance`` / relation fields.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dynamics import (CouplingState, LyapunovSpec, PathConstructionError,
                       _pair_tables, exact_drift, find_path_nd, run_coupled)
from .model import EloParams, LinkFunction, RatingVector, make_params
from .montecarlo import (EnsembleConfig, InitialCondition, default_t_star,
                         derive_seed, run_ensemble)

__all__ = [
    "CheckReport",
    "check_unbiased_prediction",
    "check_sandwich",
    "check_sqrtk_bound",
    "check_sqrtk_scaling",
    "check_support_reachability",
    "check_coupling_convergence",
    "check_bias_sign",
    "check_drift_negative",
    "monte_carlo_drift",
    "two_player_config",
    "run_default_checks",
    "report_csv",
    "DEFAULT_CHECKS",
]

_RELATIONS = {
    "le": lambda obs, bound, tol: obs <= bound + tol,
    "ge": lambda obs, bound, tol: obs >= bound - tol,
    "lt": lambda obs, bound, tol: obs < bound + tol,
    "abs_diff_le": lambda obs, bound, tol: abs(obs - bound) <= tol,
}


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one named check."""

    name: str
    inputs: dict
    observed: float
    bound_or_target: float
    tolerance: float
    relation: str
    passed: bool
    samples_used: int

    def recheck(self) -> bool:
        """Recompute the pass flag from the recorded fields."""
        return _RELATIONS[self.relation](self.observed, self.bound_or_target,
                                         self.tolerance)

    def param_echo(self) -> str:
        parts = [f"relation={self.relation}"]
        for key in sorted(self.inputs):
            value = self.inputs[key]
            if isinstance(value, float):
                value = f"{value:.10g}"
            parts.append(f"{key}={value}")
        return ";".join(parts)

    def csv_row(self) -> str:
        return ",".join([
            self.name,
            self.param_echo(),
            repr(float(self.observed)),
            repr(float(self.bound_or_target)),
            repr(float(self.tolerance)),
            "true" if self.passed else "false",
            str(self.samples_used),
        ])


def _report(name: str, inputs: dict, observed: float, bound: float,
            tolerance: float, relation: str, samples: int) -> CheckReport:
    passed = _RELATIONS[relation](observed, bound, tolerance)
    return CheckReport(name=name, inputs=inputs, observed=float(observed),
                       bound_or_target=float(bound), tolerance=float(tolerance),
                       relation=relation, passed=bool(passed),
                       samples_used=int(samples))


def two_player_config(k_factor: float, rho1: float, m: int, *,
                      t_star: int | None = None, seed: int = 0,
                      c: float = 0.5, score_kind: str = "binary",
                      p_tie: float = 0.0,
                      initial: InitialCondition | None = None) -> EnsembleConfig:
    """Convenience builder for the two-player experiments."""
    params = make_params(2, k_factor, link=LinkFunction.logistic(c),
                         skills=[rho1, -rho1], score_kind=score_kind, p_tie=p_tie)
    return EnsembleConfig(params=params, m=m,
                          t_star=default_t_star(k_factor) if t_star is None else t_star,
                          master_seed=seed,
                          initial=initial or InitialCondition.zero())


def _with_k(params: EloParams, k_factor: float) -> EloParams:
    return EloParams(n_players=params.n_players, k_factor=k_factor,
                     link=params.link, scores=params.scores, skills=params.skills)


# -- stationary-law checks -------------------------------------------------------


def check_unbiased_prediction(cfg: EnsembleConfig) -> CheckReport:
    """Per player, the mean total predicted score matches its skill-based value.

    Gate: 4 standard errors per player; the reported statistic is the worst
    player's |deviation| / gate, which must stay at or below 1.
    """
    result = run_ensemble(cfg)
    params = cfg.params
    samples = result.samples
    rho = params.skills.entries
    worst = 0.0
    worst_dev = 0.0
    for i in range(params.n_players):
        per_chain = np.zeros(cfg.m)
        target = 0.0
        for j in range(params.n_players):
            if j == i:
                continue
            per_chain += params.link.eval_array(samples[:, i] - samples[:, j])
            target += params.link.eval_scalar(float(rho[i] - rho[j]))
        dev = abs(float(per_chain.mean()) - target)
        gate = 4.0 * float(per_chain.std()) / math.sqrt(cfg.m)
        ratio = dev / max(gate, 1e-300)
        if ratio > worst:
            worst, worst_dev = ratio, dev
    inputs = {"n": params.n_players, "k": params.k_factor, "m": cfg.m,
              "t_star": cfg.t_star, "seed": cfg.master_seed,
              "worst_abs_dev": worst_dev}
    return _report("unbiased_prediction", inputs, worst, 1.0, 0.0, "le", cfg.m)


def _pairwise_gap_stat(samples: np.ndarray, params: EloParams) -> np.ndarray:
    """Per chain, the ordered-pair average of |gap| * |link gap| vs the skills."""
    rho = params.skills.entries
    link = params.link.eval_array
    n = params.n_players
    acc = np.zeros(samples.shape[0])
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            d = samples[:, i] - samples[:, j]
            delta = float(rho[i] - rho[j])
            acc += np.abs(d - delta) * np.abs(link(d) - params.link.eval_scalar(delta))
    return acc / (n * (n - 1))


def check_sandwich(cfg: EnsembleConfig) -> CheckReport:
    """The skill-gap discrepancy statistic is of order exactly K.

    Closed-form bounds: K times the pair-average score variance from below,
    2K from above, each widened by 3 standard errors of the estimate.
    """
    result = run_ensemble(cfg)
    params = cfg.params
    stat = _pairwise_gap_stat(result.samples, params)
    est = float(stat.mean())
    se = float(stat.std()) / math.sqrt(cfg.m)
    k = params.k_factor
    var_avg = float(np.mean([params.scores.variance(i, j)
                             for i in range(params.n_players)
                             for j in range(params.n_players) if i != j]))
    lower = k * var_avg
    upper = 2.0 * k
    mid = 0.5 * (lower + upper)
    tol = 0.5 * (upper - lower) + 3.0 * se
    inputs = {"k": k, "m": cfg.m, "t_star": cfg.t_star, "seed": cfg.master_seed,
              "lower": lower, "upper": upper, "stderr": se}
    return _report("sandwich", inputs, est, mid, tol, "abs_diff_le", cfg.m)


def check_sqrtk_bound(cfg: EnsembleConfig) -> CheckReport:
    """Mean per-player deviation from the skills obeys the sqrt(K) bound.

    Requires K <= ell_eta / 2 with eta = 1 + 2 max|rho|; the bound is
    ((n-1)/n) * sqrt(8K / ell_eta) plus 3 standard errors.
    """
    params = cfg.params
    eta = 1.0 + 2.0 * float(np.max(np.abs(params.skills.entries)))
    ell = params.link.ell(eta)
    if params.k_factor > ell / 2.0:
        raise ValueError(
            f"bound only claimed for K <= ell_eta/2 = {ell / 2.0:.6g} "
            f"(got K = {params.k_factor:g})")
    result = run_ensemble(cfg)
    stat = np.abs(result.samples - params.skills.entries).sum(axis=1) / params.n_players
    est = float(stat.mean())
    se = float(stat.std()) / math.sqrt(cfg.m)
    n = params.n_players
    bound = (n - 1) / n * math.sqrt(8.0 * params.k_factor / ell)
    inputs = {"k": params.k_factor, "m": cfg.m, "t_star": cfg.t_star,
              "seed": cfg.master_seed, "eta": eta, "ell_eta": ell, "stderr": se}
    return _report("sqrtk_bound", inputs, est, bound, 3.0 * se, "le", cfg.m)


def check_sqrtk_scaling(cfg: EnsembleConfig,
                        k_values: Sequence[float] | None = None) -> CheckReport:
    """Log-log slope of E|X0 - rho0| against K sits near 1/2.

    Each grid point reruns the ensemble at its own K with burn-in scaled as
    max(200, 10/K) and a derived sub-seed; passes when the least-squares
    slope lies in [0.4, 0.6].
    """
    if k_values is None:
        k_values = np.geomspace(1e-3, 1e-2, 5)
    ks = [float(k) for k in k_values]
    if len(set(ks)) < 2:
        raise ValueError("degenerate K grid: need at least two distinct values")
    ests = []
    for idx, k in enumerate(ks):
        sub = EnsembleConfig(params=_with_k(cfg.params, k), m=cfg.m,
                             t_star=default_t_star(k),
                             master_seed=derive_seed(cfg.master_seed, idx),
                             initial=cfg.initial)
        result = run_ensemble(sub)
        ests.append(float(np.abs(result.samples[:, 0]
                                 - cfg.params.skills.entries[0]).mean()))
    slope = float(np.polyfit(np.log(ks), np.log(ests), 1)[0])
    inputs = {"m": cfg.m, "seed": cfg.master_seed,
              "k_grid": ":".join(f"{k:g}" for k in ks),
              "estimates": ":".join(f"{e:.6g}" for e in ests)}
    return _report("sqrtk_scaling", inputs, slope, 0.5, 0.1, "abs_diff_le",
                   cfg.m * len(ks))


# -- pathwise checks --------------------------------------------------------------


def check_support_reachability(params: EloParams, trials: int, box_width: float,
                               master_seed: int = 0) -> CheckReport:
    """Forced-score paths reach random target boxes from random starts.

    Samples box centres uniformly in [-3, 3] per free coordinate, constructs
    a path plan, replays it, and demands exact open-box membership for every
    trial with a finite positive-probability path.
    """
    rng = np.random.default_rng(derive_seed(master_seed, 0x7EAC))
    n = params.n_players
    landed = 0
    min_logp = math.inf
    max_len = 0
    for _ in range(trials):
        centres = rng.uniform(-3.0, 3.0, size=n - 1)
        boxes = [(c - box_width / 2.0, c + box_width / 2.0) for c in centres]
        start = RatingVector.centred(rng.uniform(-3.0, 3.0, size=n))
        try:
            plan = find_path_nd(start, boxes, params)
        except PathConstructionError:
            continue
        if plan.in_target(plan.replay(params)):
            landed += 1
            logp = plan.log_probability(params)
            min_logp = min(min_logp, logp)
            max_len = max(max_len, len(plan.events))
    inputs = {"n": n, "k": params.k_factor, "trials": trials,
              "box_width": box_width, "seed": master_seed,
              "min_log_prob": min_logp, "max_path_len": max_len}
    if not math.isfinite(min_logp):
        return _report("support_reachability", inputs, 0.0, 1.0, 0.0, "ge", trials)
    return _report("support_reachability", inputs, landed / trials, 1.0, 0.0,
                   "ge", trials)


def check_coupling_convergence(params: EloParams, pairs: int, t_max: int,
                               master_seed: int = 0,
                               initial_distance: float = 10.0) -> CheckReport:
    """Coupled chains contract: distance never increases and collapses by t_max.

    Monotonicity is asserted at every step (hard failure on violation); the
    reported statistic is the worst final/initial distance ratio, which must
    stay below 1e-3.
    """
    worst = 0.0
    for p in range(pairs):
        rng = np.random.default_rng(derive_seed(master_seed, 0xC0, p))
        x0 = RatingVector.centred(rng.uniform(-3.0, 3.0, size=params.n_players))
        direction = rng.standard_normal(params.n_players)
        direction -= direction.mean()
        direction /= np.linalg.norm(direction)
        y0 = RatingVector(x0.entries + initial_distance * direction)
        state = CouplingState(x=x0, y=y0)
        d0 = state.distance
        run_coupled(state, params, t_max, rng)
        hist = np.asarray(state.distance_history)
        if np.any(np.diff(hist) > 1e-12):
            raise AssertionError("coupling distance increased along the history")
        ratio = 0.0 if d0 == 0.0 else state.distance / d0
        worst = max(worst, ratio)
    inputs = {"n": params.n_players, "k": params.k_factor, "pairs": pairs,
              "t_max": t_max, "initial_distance": initial_distance,
              "seed": master_seed}
    return _report("coupling_convergence", inputs, worst, 1e-3, 0.0, "lt",
                   pairs * t_max)


def check_bias_sign(cfg: EnsembleConfig,
                    rho1_values: Sequence[float] = (0.25, 0.5, 0.75)) -> CheckReport:
    """Equilibrium ratings overestimate positive skills (two players).

    For each positive rho1 the bias E[X0] - rho1 must exceed 3 standard
    errors; at rho1 = 0 it must vanish within 3.  The reported statistic is
    the worst margin (in standard-error units), required to be nonnegative.
    """
    params = cfg.params
    margins = []
    echo = {}
    for idx, rho1 in enumerate((0.0, *rho1_values)):
        sub_params = make_params(2, params.k_factor, link=params.link,
                                 skills=[rho1, -rho1],
                                 score_kind=params.scores.kind,
                                 p_tie=params.scores.p_tie)
        sub = EnsembleConfig(params=sub_params, m=cfg.m, t_star=cfg.t_star,
                             master_seed=derive_seed(cfg.master_seed, 0xB1A5, idx),
                             initial=cfg.initial)
        result = run_ensemble(sub)
        bias = float(result.samples[:, 0].mean()) - rho1
        se = float(result.samples[:, 0].std()) / math.sqrt(cfg.m)
        if rho1 == 0.0:
            margins.append(3.0 - abs(bias) / se)
        else:
            margins.append(bias / se - 3.0)
        echo[f"bias_rho1_{rho1:g}"] = bias
    inputs = {"k": params.k_factor, "m": cfg.m, "t_star": cfg.t_star,
              "seed": cfg.master_seed, **echo}
    return _report("bias_sign", inputs, min(margins), 0.0, 0.0, "ge",
                   cfg.m * (1 + len(rho1_values)))


def check_drift_negative(params: EloParams, spec: LyapunovSpec,
                         radius_grid: Sequence[float],
                         threshold_radius: float = 40.0,
                         master_seed: int = 0,
                         random_directions: int = 3) -> CheckReport:
    """The exact one-step energy drift is negative outside a ball.

    Evaluates the enumerated drift along max-spread and random zero-sum
    directions at each radius; passes when it is strictly negative at every
    grid state with norm at or beyond the threshold radius.
    """
    rng = np.random.default_rng(derive_seed(master_seed, 0xD21F))
    n = params.n_players
    directions = []
    spread = np.zeros(n)
    spread[0], spread[1] = 1.0, -1.0
    directions.append(spread / np.linalg.norm(spread))
    for _ in range(random_directions):
        d = rng.standard_normal(n)
        d -= d.mean()
        directions.append(d / np.linalg.norm(d))

    worst = -math.inf
    states = 0
    for r in radius_grid:
        if r < threshold_radius:
            continue
        for d in directions:
            x = RatingVector(r * d)
            worst = max(worst, exact_drift(x, spec, params))
            states += 1
    if states == 0:
        raise ValueError("radius grid has no states at or beyond the threshold")
    inputs = {"n": n, "k": params.k_factor, "a": spec.a,
              "threshold_radius": threshold_radius, "states": states,
              "radius_grid": ":".join(f"{r:g}" for r in radius_grid),
              "seed": master_seed}
    return _report("drift_negative", inputs, worst, 0.0, 0.0, "lt", states)


def monte_carlo_drift(x: RatingVector, spec: LyapunovSpec, params: EloParams,
                      samples: int, rng: np.random.Generator) -> tuple[float, float]:
    """Sampled one-step drift estimate and its standard error (oracle for exact_drift)."""
    pair_i, pair_j = _pair_tables(params.n_players)
    codes = rng.integers(0, params.n_ordered_pairs, size=samples)
    i = pair_i[codes]
    j = pair_j[codes]
    mu = params.scores.mean_table()[i, j]
    s = params.scores.sample_from_uniform(mu, rng.random(samples))
    xs = x.entries
    delta = params.k_factor * (s - params.link.eval_array(xs[i] - xs[j]))
    rho = spec.skills.entries
    a = spec.a
    dv = (np.cosh(a * (xs[i] + delta - rho[i])) - np.cosh(a * (xs[i] - rho[i]))
          + np.cosh(a * (xs[j] - delta - rho[j])) - np.cosh(a * (xs[j] - rho[j])))
    return float(dv.mean()), float(dv.std()) / math.sqrt(samples)


# -- registry and reporting --------------------------------------------------------


def _default_unbiased(seed: int) -> CheckReport:
    return check_unbiased_prediction(
        two_player_config(0.4, 0.5, 30_000, t_star=500, seed=derive_seed(seed, 1)))


def _default_sandwich(seed: int) -> CheckReport:
    return check_sandwich(
        two_player_config(0.1, 0.5, 100_000, seed=derive_seed(seed, 2)))


def _default_sqrtk_bound(seed: int) -> CheckReport:
    return check_sqrtk_bound(
        two_player_config(0.01, 0.5, 30_000, seed=derive_seed(seed, 3)))


def _default_sqrtk_scaling(seed: int) -> CheckReport:
    return check_sqrtk_scaling(
        two_player_config(1e-3, 0.5, 10_000, seed=derive_seed(seed, 4)))


def _default_reach(seed: int) -> CheckReport:
    params = make_params(2, 0.4)
    return check_support_reachability(params, trials=50, box_width=0.01,
                                      master_seed=derive_seed(seed, 5))


def _default_coupling(seed: int) -> CheckReport:
    params = make_params(2, 0.4)
    return check_coupling_convergence(params, pairs=5, t_max=30_000,
                                      master_seed=derive_seed(seed, 6))


def _default_bias_sign(seed: int) -> CheckReport:
    return check_bias_sign(
        two_player_config(1.0, 0.0, 50_000, seed=derive_seed(seed, 7)))


def _default_drift(seed: int) -> CheckReport:
    params = make_params(3, 0.4)
    spec = LyapunovSpec(a=0.05, skills=params.skills)
    return check_drift_negative(params, spec, radius_grid=(40.0, 80.0, 160.0),
                                master_seed=derive_seed(seed, 8))


DEFAULT_CHECKS: dict[str, Callable[[int], CheckReport]] = {
    "unbiased_prediction": _default_unbiased,
    "sandwich": _default_sandwich,
    "sqrtk_bound": _default_sqrtk_bound,
    "sqrtk_scaling": _default_sqrtk_scaling,
    "support_reachability": _default_reach,
    "coupling_convergence": _default_coupling,
    "bias_sign": _default_bias_sign,
    "drift_negative": _default_drift,
}


def run_default_checks(master_seed: int,
                       only: Sequence[str] | None = None) -> list[CheckReport]:
    """Run the registered checks at desk scale; per-check errors become failed rows."""
    names = list(DEFAULT_CHECKS) if not only else list(only)
    reports = []
    for name in names:
        if name not in DEFAULT_CHECKS:
            raise KeyError(f"unknown check {name!r}; known: {sorted(DEFAULT_CHECKS)}")
        try:
            reports.append(DEFAULT_CHECKS[name](master_seed))
        except Exception as exc:  # surface the error, keep the other rows
            reports.append(CheckReport(
                name=name, inputs={"error": type(exc).__name__,
                                   "message": str(exc).replace(",", ";")},
                observed=math.nan, bound_or_target=math.nan, tolerance=0.0,
                relation="le", passed=False, samples_used=0))
    return reports


def report_csv(reports: Sequence[CheckReport], master_seed: int) -> str:
    lines = [f"# seed={master_seed}",
             "check,param_echo,observed,bound,tolerance,passed,samples"]
    lines.extend(r.csv_row() for r in reports)
    return "\n".join(lines) + "\n"
