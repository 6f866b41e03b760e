"""Chain dynamics: single steps, coupled steps, and constructive reachability.

The chain lives on the zero-sum subspace.  One match between players ``i``
and ``j`` with realized score ``s`` moves the state by
``K * (s - link(x[i] - x[j]))`` applied with opposite signs to the two
players, so the coordinate sum is conserved by construction.

Besides the random steppers this module provides:

* the *natural coupling* -- two chains driven by identical pair picks and
  score draws, whose Euclidean distance can never increase (checked
  deterministically at every step);
* the one-dimensional forced-win / forced-loss maps for a two-player
  reduction, their bisection inverses, and the path-construction algorithms
  that steer the chain into arbitrary open boxes with forced +-1 scores;
* the cosh-based Lyapunov functional and its exact one-step drift by
  enumeration over pairs and score atoms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import EloParams, RatingVector, TrueSkillVector

__all__ = [
    "MatchEvent",
    "CouplingState",
    "LyapunovSpec",
    "PathPlan",
    "elo_step",
    "chain_step",
    "run_chain",
    "coupled_step",
    "run_coupled",
    "e_plus",
    "e_minus",
    "e_plus_inv",
    "e_minus_inv",
    "find_path_1d",
    "find_path_nd",
    "lyapunov_value",
    "exact_drift",
    "CouplingContractError",
    "PathConstructionError",
]

#: Per-step tolerance for the deterministic coupling contraction inequality.
COUPLING_TOL = 1e-9

#: Absolute tolerance of the bisection inverses of the forced-result maps.
INV_TOL = 1e-12
_INV_MAX_ITER = 200

_EXPANSION_CAP = 10**6
_WALK_CAP = 10**8


class CouplingContractError(AssertionError):
    """The per-step contraction inequality failed beyond tolerance (a bug)."""


class PathConstructionError(RuntimeError):
    """Path construction hit an iteration cap or lost its invariant."""


@dataclass(frozen=True)
class MatchEvent:
    """One realized match: ordered players ``(i, j)`` and the score of ``i``."""

    i: int
    j: int
    s: float

    def __post_init__(self) -> None:
        if self.i == self.j:
            raise ValueError("a match needs two distinct players")
        if not -1.0 <= self.s <= 1.0:
            raise ValueError("scores live in [-1, 1]")


# -- pair codes ---------------------------------------------------------------
# Ordered distinct pairs are ranked 0 .. n(n-1)-1 via code = i*(n-1) + j'
# with j' = j if j < i else j-1; sampling a code uniformly samples a pair.

def _pair_tables(n: int) -> tuple[np.ndarray, np.ndarray]:
    codes = np.arange(n * (n - 1))
    i = codes // (n - 1)
    j = codes % (n - 1)
    j = np.where(j >= i, j + 1, j)
    return i, j


def _unrank_pair(code: int, n: int) -> tuple[int, int]:
    i, j = divmod(code, n - 1)
    if j >= i:
        j += 1
    return i, j


# -- single steps -------------------------------------------------------------

def elo_step(x: RatingVector, ev: MatchEvent, params: EloParams) -> RatingVector:
    """Apply one match deterministically and return the new state.

    Only coordinates ``ev.i`` and ``ev.j`` change; the update is computed once
    and applied with opposite signs, so the coordinate sum is preserved.
    """
    arr = x.entries.copy()
    if not (0 <= ev.i < arr.size and 0 <= ev.j < arr.size):
        raise IndexError("player index out of range")
    delta = params.k_factor * (ev.s - params.link.eval_scalar(arr[ev.i] - arr[ev.j]))
    arr[ev.i] += delta
    arr[ev.j] -= delta
    return RatingVector(arr)


def chain_step(x: RatingVector, params: EloParams,
               rng: np.random.Generator) -> tuple[RatingVector, MatchEvent]:
    """One random step: uniform ordered pair, score draw, deterministic update."""
    code = int(rng.integers(0, params.n_ordered_pairs))
    i, j = _unrank_pair(code, params.n_players)
    s = params.scores.sample(i, j, rng)
    ev = MatchEvent(i, j, s)
    return elo_step(x, ev, params), ev


def run_chain(x: RatingVector, params: EloParams, steps: int,
              rng: np.random.Generator, *,
              pair_counts: np.ndarray | None = None) -> RatingVector:
    """Advance one chain ``steps`` matches (randomness drawn in blocks).

    Equivalent in law to iterating :func:`chain_step`, but draws pair codes
    and score uniforms in blocks of 4096 and keeps the state in plain Python
    floats; an optional (n, n) ``pair_counts`` array accumulates how often
    each ordered pair played.
    """
    n = params.n_players
    k = params.k_factor
    link = params.link.eval_scalar
    scores = params.scores
    finite = scores.finite_support
    state = [float(v) for v in x.entries]

    mu = scores.mean_table()
    if scores.kind == "binary":
        thr_plus = ((1.0 + mu) / 2.0).tolist()
        thr_tie = None
    elif scores.kind == "three_point":
        thr_plus = ((1.0 - scores.p_tie + mu) / 2.0).tolist()
        thr_tie = ((1.0 - scores.p_tie + mu) / 2.0 + scores.p_tie).tolist()
    mu_list = mu.tolist()

    block = 4096
    done = 0
    while done < steps:
        nb = min(block, steps - done)
        codes = rng.integers(0, n * (n - 1), size=nb).tolist()
        us = rng.random(nb).tolist() if finite else None
        for t in range(nb):
            i, jq = divmod(codes[t], n - 1)
            j = jq + 1 if jq >= i else jq
            if finite:
                u = us[t]
                if u < thr_plus[i][j]:
                    s = 1.0
                elif thr_tie is not None and u < thr_tie[i][j]:
                    s = 0.0
                else:
                    s = -1.0
            else:
                s = float(scores.sampler(mu_list[i][j], rng, None))
            delta = k * (s - link(state[i] - state[j]))
            state[i] += delta
            state[j] -= delta
            if pair_counts is not None:
                pair_counts[i, j] += 1
        done += nb
    return RatingVector(np.array(state))


# -- the natural coupling -----------------------------------------------------

@dataclass
class CouplingState:
    """Two chains driven by shared randomness, plus their distance trace.

    ``distance_history[t]`` is the Euclidean distance after ``t`` coupled
    steps (entry 0 is the initial distance); it is non-increasing by the
    contraction inequality, which is asserted at every step.
    """

    x: RatingVector
    y: RatingVector
    distance_history: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.x.n != self.y.n:
            raise ValueError("coupled states need equal dimension")
        if not self.distance_history:
            self.distance_history.append(self.distance)

    @property
    def distance(self) -> float:
        return float(np.linalg.norm(self.x.entries - self.y.entries))


def _check_contraction(d2_old: float, d2_new: float, du: float, db: float,
                       params: EloParams) -> None:
    k, lip = params.k_factor, params.link.lipschitz
    bound = -2.0 * k * (1.0 - k * lip) * abs(du) * abs(db)
    if d2_new - d2_old > bound + COUPLING_TOL:
        raise CouplingContractError(
            f"coupled step expanded the distance: d2 diff {d2_new - d2_old!r} "
            f"exceeds bound {bound!r}")


def coupled_step(state: CouplingState, params: EloParams,
                 rng: np.random.Generator) -> CouplingState:
    """Advance both chains with one shared (pair, score) draw.

    Mutates ``state`` in place (and returns it), appending the new distance.
    Raises :class:`CouplingContractError` if the deterministic per-step
    contraction inequality fails beyond ``COUPLING_TOL``.
    """
    code = int(rng.integers(0, params.n_ordered_pairs))
    i, j = _unrank_pair(code, params.n_players)
    s = params.scores.sample(i, j, rng)

    xa = state.x.entries.copy()
    ya = state.y.entries.copy()
    k = params.k_factor
    link = params.link.eval_scalar
    bx = link(xa[i] - xa[j])
    by = link(ya[i] - ya[j])
    du = (xa[i] - xa[j]) - (ya[i] - ya[j])

    d2_old = float(np.sum((xa - ya) ** 2))
    dx = k * (s - bx)
    dy = k * (s - by)
    xa[i] += dx
    xa[j] -= dx
    ya[i] += dy
    ya[j] -= dy
    d2_new = float(np.sum((xa - ya) ** 2))
    _check_contraction(d2_old, d2_new, du, bx - by, params)

    state.x = RatingVector(xa)
    state.y = RatingVector(ya)
    state.distance_history.append(math.sqrt(d2_new))
    return state


def run_coupled(state: CouplingState, params: EloParams, steps: int,
                rng: np.random.Generator) -> CouplingState:
    """Advance the coupling ``steps`` times with blocked randomness.

    Same per-step semantics and contraction assertions as
    :func:`coupled_step`, in a tight loop over plain floats.
    """
    n = params.n_players
    k = params.k_factor
    lip = params.link.lipschitz
    link = params.link.eval_scalar
    scores = params.scores
    finite = scores.finite_support
    xs = [float(v) for v in state.x.entries]
    ys = [float(v) for v in state.y.entries]
    hist = state.distance_history

    mu = scores.mean_table()
    thr_plus = ((1.0 + mu) / 2.0).tolist() if scores.kind == "binary" else None
    if scores.kind == "three_point":
        base = ((1.0 - scores.p_tie + mu) / 2.0)
        thr_plus = base.tolist()
        thr_tie = (base + scores.p_tie).tolist()
    else:
        thr_tie = None
    mu_list = mu.tolist()
    coef = 2.0 * k * (1.0 - k * lip)

    block = 4096
    done = 0
    while done < steps:
        nb = min(block, steps - done)
        codes = rng.integers(0, n * (n - 1), size=nb).tolist()
        us = rng.random(nb).tolist() if finite else None
        for t in range(nb):
            i, jq = divmod(codes[t], n - 1)
            j = jq + 1 if jq >= i else jq
            if finite:
                u = us[t]
                if u < thr_plus[i][j]:
                    s = 1.0
                elif thr_tie is not None and u < thr_tie[i][j]:
                    s = 0.0
                else:
                    s = -1.0
            else:
                s = float(scores.sampler(mu_list[i][j], rng, None))
            xi, xj, yi, yj = xs[i], xs[j], ys[i], ys[j]
            bx = link(xi - xj)
            by = link(yi - yj)
            dx = k * (s - bx)
            dy = k * (s - by)
            # distances are recomputed from the states each step: incremental
            # bookkeeping leaves a stale error floor once they shrink to ~ulp
            d2_old = 0.0
            for c in range(n):
                e = xs[c] - ys[c]
                d2_old += e * e
            xs[i], xs[j], ys[i], ys[j] = xi + dx, xj - dx, yi + dy, yj - dy
            d2_new = 0.0
            for c in range(n):
                e = xs[c] - ys[c]
                d2_new += e * e
            du = (xi - xj) - (yi - yj)
            db = bx - by
            if d2_new - d2_old > -coef * abs(du) * abs(db) + COUPLING_TOL:
                raise CouplingContractError(
                    f"coupled step expanded the distance at step {done + t}")
            hist.append(math.sqrt(d2_new))
        done += nb

    state.x = RatingVector(np.array(xs))
    state.y = RatingVector(np.array(ys))
    return state


# -- two-player forced-result maps and their inverses --------------------------

def _require_invertible(params: EloParams) -> None:
    if 2.0 * params.k_factor * params.link.lipschitz >= 1.0:
        raise ValueError(
            "forced-result maps are only invertible for 2*K*L < 1 "
            f"(got 2KL = {2.0 * params.k_factor * params.link.lipschitz:g})")


def e_plus(u: float, params: EloParams) -> float:
    """Symmetric coordinate after a forced win: u + K*(1 - link(2u))."""
    return u + params.k_factor * (1.0 - params.link.eval_scalar(2.0 * u))


def e_minus(u: float, params: EloParams) -> float:
    """Symmetric coordinate after a forced loss: u + K*(-1 - link(2u))."""
    return u + params.k_factor * (-1.0 - params.link.eval_scalar(2.0 * u))


def _bisect_inverse(target: float, params: EloParams, sign: float) -> float:
    # The jump size of either map is below 2K, so [target-2K-1, target+2K+1]
    # brackets the preimage; each map is strictly increasing for 2KL < 1.
    k = params.k_factor
    link = params.link.eval_scalar
    lo = target - 2.0 * k - 1.0
    hi = target + 2.0 * k + 1.0
    f = lambda v: v + k * (sign - link(2.0 * v)) - target
    flo, fhi = f(lo), f(hi)
    if flo > 0.0 or fhi < 0.0:
        raise PathConstructionError("bisection bracket failed to contain the preimage")
    for _ in range(_INV_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if hi - lo <= INV_TOL:
            return mid
        if f(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def e_plus_inv(u: float, params: EloParams) -> float:
    """The unique v with e_plus(v) = u, by bisection to ``INV_TOL``."""
    _require_invertible(params)
    return _bisect_inverse(u, params, 1.0)


def e_minus_inv(u: float, params: EloParams) -> float:
    """The unique v with e_minus(v) = u, by bisection to ``INV_TOL``."""
    _require_invertible(params)
    return _bisect_inverse(u, params, -1.0)


# -- path construction ---------------------------------------------------------

def find_path_1d(u: float, a: float, b: float, params: EloParams) -> list[float]:
    """Forced scores (+-1) steering the symmetric coordinate from ``u`` into (a, b).

    A monotone walk lands inside an interval whenever the entry jump cannot
    overshoot it, which holds in particular once the interval is 2K wide.
    Narrower targets are first grown by preimages of the forced-result maps
    (each preimage expands lengths), greedily preferring the forced-win
    preimage whenever it keeps the interval inside [a - 4K, b + 4K]; the
    growth stops as soon as the walk from ``u``'s side cannot overshoot
    (E+(lo) < hi walking up, E-(hi) > lo walking down).  The walk then
    enters the grown interval and the recorded map choices are replayed in
    reverse.

    The 4K margins make a stall impossible: preimage jumps stay below 2K,
    so while the interval is under 2K wide at least one preimage remains
    inside the working interval, and at 2K wide the walk cannot overshoot.
    """
    if not a < b:
        raise ValueError("need a < b")
    _require_invertible(params)
    k = params.k_factor
    eps = 1e-9

    if a < u < b:
        return []

    choices: list[float] = []
    lo, hi = a, b
    big_lo, big_hi = a - 4.0 * k, b + 4.0 * k
    for _ in range(_EXPANSION_CAP):
        if lo < u < hi:
            break
        if u <= lo and e_plus(lo, params) < hi:
            break
        if u >= hi and e_minus(hi, params) > lo:
            break
        cand_lo = _bisect_inverse(lo, params, 1.0)
        cand_hi = _bisect_inverse(hi, params, 1.0)
        if cand_lo >= big_lo - eps and cand_hi <= big_hi + eps:
            sign = 1.0
        else:
            cand_lo = _bisect_inverse(lo, params, -1.0)
            cand_hi = _bisect_inverse(hi, params, -1.0)
            sign = -1.0
            if cand_lo < big_lo - eps or cand_hi > big_hi + eps:
                raise PathConstructionError(
                    "neither preimage stayed inside the working interval")
        choices.append(sign)
        lo, hi = cand_lo, cand_hi
    else:
        raise PathConstructionError("preimage expansion cap exceeded")

    scores: list[float] = []
    v = u
    if not lo < v < hi:
        sign = 1.0 if v <= lo else -1.0
        for _ in range(_WALK_CAP):
            v = v + k * (sign - params.link.eval_scalar(2.0 * v))
            scores.append(sign)
            if lo < v < hi:
                break
            if (sign > 0 and v >= hi) or (sign < 0 and v <= lo):
                raise PathConstructionError("monotone walk overshot the interval")
        else:
            raise PathConstructionError("monotone walk cap exceeded")

    # replay the recorded choices outermost-first, tracking v for a sanity check
    for sign in reversed(choices):
        v = v + k * (sign - params.link.eval_scalar(2.0 * v))
        scores.append(sign)
    if not a < v < b:
        raise PathConstructionError(
            f"constructed path missed its target: {v!r} not in ({a!r}, {b!r})")
    return scores


@dataclass(frozen=True)
class PathPlan:
    """A forced-score match sequence landing chosen coordinates in open boxes.

    ``boxes[i]`` targets coordinate ``i`` for i = 0..n-2; the last coordinate
    is pinned by the zero sum.  Replaying ``events`` from ``start`` with
    :func:`elo_step` lands every targeted coordinate in its interval.
    """

    start: RatingVector
    boxes: tuple[tuple[float, float], ...]
    events: tuple[MatchEvent, ...]

    def replay(self, params: EloParams) -> RatingVector:
        x = self.start
        for ev in self.events:
            x = elo_step(x, ev, params)
        return x

    def in_target(self, x: RatingVector) -> bool:
        return all(a < x.entries[i] < b for i, (a, b) in enumerate(self.boxes))

    def log_probability(self, params: EloParams) -> float:
        """Log-probability that the chain realizes exactly this event sequence.

        Sums the log pair probability 1/(n(n-1)) and the log score-atom
        probability per event (score laws are state-independent).
        """
        logp = -len(self.events) * math.log(params.n_ordered_pairs)
        for ev in self.events:
            values, probs = params.scores.atoms(ev.i, ev.j)
            idx = int(np.argmin(np.abs(values - ev.s)))
            if abs(values[idx] - ev.s) > 1e-12:
                raise ValueError(f"score {ev.s!r} is not an atom of the model")
            logp += math.log(float(probs[idx]))
        return logp

    # line-oriented text format: one "i j s" triple per line after a header
    def to_text(self) -> str:
        start = ",".join(repr(float(v)) for v in self.start.entries)
        boxes = ";".join(f"{float(a)!r}:{float(b)!r}" for a, b in self.boxes)
        lines = [f"# start={start} targets={boxes}"]
        for ev in self.events:
            s = f"{int(ev.s):+d}" if float(ev.s).is_integer() else repr(ev.s)
            lines.append(f"{ev.i} {ev.j} {s}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PathPlan":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("# start="):
            raise ValueError("missing path plan header")
        header = lines[0][2:]
        fields = dict(tok.split("=", 1) for tok in header.split())
        start = RatingVector(np.array([float(v) for v in fields["start"].split(",")]))
        boxes = tuple(tuple(float(v) for v in tok.split(":"))
                      for tok in fields["targets"].split(";") if tok)
        events = []
        for ln in lines[1:]:
            i, j, s = ln.split()
            events.append(MatchEvent(int(i), int(j), float(s)))
        return cls(start=start, boxes=boxes, events=tuple(events))


def find_path_nd(x: RatingVector, boxes: Sequence[tuple[float, float]],
                 params: EloParams) -> PathPlan:
    """Steer coordinates 0..n-2 into open boxes using the last player as pivot.

    Coordinate ``i`` is driven by matches between ``i`` and ``n-1`` only: the
    pair's sum is conserved by those matches, so the reduction to the
    symmetric coordinate turns each stage into a one-dimensional problem.
    Later stages never touch earlier coordinates.
    """
    n = params.n_players
    if len(boxes) != n - 1:
        raise ValueError(f"need {n - 1} target boxes for {n} players")
    _require_invertible(params)

    cur = x.entries.copy()
    k = params.k_factor
    link = params.link.eval_scalar
    events: list[MatchEvent] = []
    last = n - 1
    for i, (a, b) in enumerate(boxes):
        mid = 0.5 * (cur[i] + cur[last])
        u = cur[i] - mid
        for sign in find_path_1d(u, a - mid, b - mid, params):
            delta = k * (sign - link(cur[i] - cur[last]))
            cur[i] += delta
            cur[last] -= delta
            events.append(MatchEvent(i, last, sign))
        if not a < cur[i] < b:
            raise PathConstructionError(
                f"stage {i} landed at {cur[i]!r}, outside ({a!r}, {b!r})")

    plan = PathPlan(start=x, boxes=tuple((float(a), float(b)) for a, b in boxes),
                    events=tuple(events))
    if not plan.in_target(plan.replay(params)):
        raise PathConstructionError("replay check failed after construction")
    return plan


# -- Lyapunov functional and exact drift ---------------------------------------

@dataclass(frozen=True)
class LyapunovSpec:
    """cosh-based energy: V(x) = sum_i cosh(a * (x[i] - skills[i]))."""

    a: float
    skills: TrueSkillVector

    def __post_init__(self) -> None:
        if self.a <= 0:
            raise ValueError("the exponential scale a must be positive")


def _log_cosh(z: np.ndarray) -> np.ndarray:
    z = np.abs(z)
    return z + np.log1p(np.exp(-2.0 * z)) - math.log(2.0)


def lyapunov_value(x: RatingVector, spec: LyapunovSpec) -> float:
    """Evaluate the energy; falls back to log-space when cosh would overflow."""
    if x.n != spec.skills.n:
        raise ValueError("dimension mismatch")
    z = spec.a * (x.entries - spec.skills.entries)
    if float(np.max(np.abs(z))) > 700.0:
        logs = _log_cosh(z)
        peak = float(np.max(logs))
        log_value = peak + math.log(np.sum(np.exp(logs - peak)))
        return math.exp(log_value) if log_value < 709.0 else math.inf
    return float(np.cosh(z).sum())


def _cosh_safe(z: float) -> float:
    z = abs(z)
    if z > 709.0:
        return math.inf
    return math.cosh(z)


def exact_drift(x: RatingVector, spec: LyapunovSpec, params: EloParams) -> float:
    """E[V(X_1) | X_0 = x] - V(x) by full enumeration (finite score kinds only).

    Sums over all n(n-1) ordered pairs and every score atom with its exact
    probability; no sampling.  Only the two matched coordinates contribute,
    so each term is a difference of four cosh evaluations.
    """
    if not params.scores.finite_support:
        raise ValueError("exact drift needs a finite-support score model")
    if x.n != params.n_players or spec.skills.n != x.n:
        raise ValueError("dimension mismatch")
    a = spec.a
    k = params.k_factor
    link = params.link.eval_scalar
    xs = x.entries
    rho = spec.skills.entries
    base = [_cosh_safe(a * (xs[i] - rho[i])) for i in range(x.n)]

    pair_prob = 1.0 / params.n_ordered_pairs
    total = 0.0
    for i in range(x.n):
        for j in range(x.n):
            if i == j:
                continue
            bij = link(xs[i] - xs[j])
            values, probs = params.scores.atoms(i, j)
            for s, p in zip(values, probs):
                if p == 0.0:
                    continue
                delta = k * (s - bij)
                dv = (_cosh_safe(a * (xs[i] + delta - rho[i])) - base[i]
                      + _cosh_safe(a * (xs[j] - delta - rho[j])) - base[j])
                total += pair_prob * p * dv
    return total
