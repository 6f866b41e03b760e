"""Ensemble simulation: many independent chains advanced to equilibrium.

Each chain owns a counter-based random stream keyed by
``(master_seed, chain_index)``, so results are bit-identical for a given
configuration regardless of how chains are batched or how many worker
threads run them.  Randomness is drawn per chain in fixed time chunks
(pair codes first, then score uniforms), which also makes the terminal
samples independent of whether intermediate snapshots were requested.

Statistics helpers: histograms, the exact one-dimensional W1 distance
between empirical samples (sorted matching), and a snapshot-based
convergence diagnostic.
"""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .dynamics import _pair_tables
from .model import EloParams, RatingVector

__all__ = [
    "InitialCondition",
    "EnsembleConfig",
    "EnsembleSummary",
    "EnsembleResult",
    "Histogram",
    "default_t_star",
    "derive_seed",
    "run_ensemble",
    "ensemble_snapshots",
    "exp_moment",
    "make_histogram",
    "empirical_w1",
    "convergence_diagnostic",
    "write_histogram_csv",
    "write_samples_csv",
    "format_header",
    "parse_header",
]

#: Scale of the exponential-moment summary statistic sum_i exp(a*|x_i|).
EXP_MOMENT_SCALE = 0.05

_MASK64 = (1 << 64) - 1
_BATCH = 4096          # chains per task; fixed so batching never affects results
_TIME_CHUNK = 1024     # steps per randomness block; fixed for the same reason

THREADS_ENV = "ELO_DYN_THREADS"


def default_t_star(k_factor: float) -> int:
    """Burn-in heuristic: 200 steps, stretched to 10/K for small K."""
    return max(200, math.ceil(10.0 / k_factor))


def derive_seed(master_seed: int, *path: int) -> int:
    """Deterministically derive a sub-seed (splitmix64 over the path)."""
    z = master_seed & _MASK64
    for word in path:
        z = (z + 0x9E3779B97F4A7C15 + (word & _MASK64)) & _MASK64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        z = z ^ (z >> 31)
    return z


def chain_rng(master_seed: int, chain_index: int) -> np.random.Generator:
    """The independent stream of one chain: Philox keyed by (seed, index)."""
    return np.random.Generator(
        np.random.Philox(key=[master_seed & _MASK64, chain_index & _MASK64]))


@dataclass(frozen=True)
class InitialCondition:
    """How each chain starts: all-zero, uniform per coordinate (re-centred), or a point."""

    kind: str
    lo: float = 0.0
    hi: float = 0.0
    at: RatingVector | None = None

    @classmethod
    def zero(cls) -> "InitialCondition":
        return cls(kind="zero")

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "InitialCondition":
        if not lo < hi:
            raise ValueError("need lo < hi")
        return cls(kind="uniform", lo=lo, hi=hi)

    @classmethod
    def point(cls, x: RatingVector) -> "InitialCondition":
        return cls(kind="point", at=x)

    def describe(self) -> str:
        if self.kind == "uniform":
            return f"uniform({self.lo:g},{self.hi:g})"
        if self.kind == "point":
            return "point(" + ",".join(f"{v:g}" for v in self.at.entries) + ")"
        return "zero"


@dataclass(frozen=True)
class EnsembleConfig:
    params: EloParams
    m: int
    t_star: int
    master_seed: int
    initial: InitialCondition

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValueError("need at least one chain")
        if self.t_star < 0:
            raise ValueError("burn-in cannot be negative")
        if self.initial.kind == "point" and self.initial.at.n != self.params.n_players:
            raise ValueError("initial point has the wrong dimension")


@dataclass(frozen=True)
class EnsembleSummary:
    mean: np.ndarray            # per-coordinate mean rating
    mean_abs_dev: np.ndarray    # per-coordinate mean |x_i - rho_i|
    exp_moment: float           # mean over chains of sum_i exp(a*|x_i|)
    exp_moment_scale: float


@dataclass(frozen=True)
class EnsembleResult:
    samples: np.ndarray         # (m, n) terminal states, row per chain
    summary: EnsembleSummary
    metadata: dict


def _workers() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return 1


def _initial_states(cfg: EnsembleConfig, lo_chain: int, hi_chain: int,
                    gens: list[np.random.Generator]) -> np.ndarray:
    n = cfg.params.n_players
    count = hi_chain - lo_chain
    init = cfg.initial
    if init.kind == "zero":
        return np.zeros((count, n))
    if init.kind == "point":
        return np.tile(init.at.entries, (count, 1))
    # uniform draws come first in each chain's stream, then re-centre
    states = np.empty((count, n))
    for c, g in enumerate(gens):
        row = init.lo + (init.hi - init.lo) * g.random(n)
        states[c] = row - row.mean()
    return states


def _advance_batch_finite(cfg: EnsembleConfig, lo: int, hi: int,
                          snap_times: Sequence[int],
                          out: dict[int, np.ndarray]) -> None:
    params = cfg.params
    n = params.n_players
    k = params.k_factor
    n_pairs = params.n_ordered_pairs
    link_arr = params.link.eval_array
    scores = params.scores
    pair_i, pair_j = _pair_tables(n)
    mu_pairs = scores.mean_table()[pair_i, pair_j]

    gens = [chain_rng(cfg.master_seed, c) for c in range(lo, hi)]
    states = _initial_states(cfg, lo, hi, gens)
    rows = np.arange(hi - lo)
    snap_set = set(snap_times)
    if 0 in snap_set:
        out[0][lo:hi] = states

    t = 0
    while t < cfg.t_star:
        span = min(_TIME_CHUNK, cfg.t_star - t)
        codes = np.empty((span, hi - lo), dtype=np.int64)
        us = np.empty((span, hi - lo))
        for c, g in enumerate(gens):
            codes[:, c] = g.integers(0, n_pairs, size=span)
            us[:, c] = g.random(span)
        for dt in range(span):
            ci = codes[dt]
            i = pair_i[ci]
            j = pair_j[ci]
            diff = states[rows, i] - states[rows, j]
            s = scores.sample_from_uniform(mu_pairs[ci], us[dt])
            delta = k * (s - link_arr(diff))
            states[rows, i] += delta
            states[rows, j] -= delta
            if (t + dt + 1) in snap_set:
                out[t + dt + 1][lo:hi] = states
        t += span


def _advance_batch_custom(cfg: EnsembleConfig, lo: int, hi: int,
                          snap_times: Sequence[int],
                          out: dict[int, np.ndarray]) -> None:
    # scalar fallback for user-supplied continuous samplers; same fixed
    # chunk grid, so snapshots never perturb the draws
    params = cfg.params
    n = params.n_players
    k = params.k_factor
    link = params.link.eval_scalar
    sampler = params.scores.sampler
    mu_list = params.scores.mean_table().tolist()
    snap_set = set(snap_times)

    gens = [chain_rng(cfg.master_seed, c) for c in range(lo, hi)]
    states = _initial_states(cfg, lo, hi, gens)
    for c, g in enumerate(gens):
        row = states[c].tolist()
        if 0 in snap_set:
            out[0][lo + c] = row
        t = 0
        while t < cfg.t_star:
            span = min(_TIME_CHUNK, cfg.t_star - t)
            codes = g.integers(0, n * (n - 1), size=span).tolist()
            for dt in range(span):
                i, jq = divmod(codes[dt], n - 1)
                j = jq + 1 if jq >= i else jq
                s = float(sampler(mu_list[i][j], g, None))
                delta = k * (s - link(row[i] - row[j]))
                row[i] += delta
                row[j] -= delta
                if (t + dt + 1) in snap_set:
                    out[t + dt + 1][lo + c] = row
            t += span


def ensemble_snapshots(cfg: EnsembleConfig,
                       times: Iterable[int]) -> dict[int, np.ndarray]:
    """States of every chain at each requested time (0 = initial condition).

    Returns ``{time: (m, n) array}``.  The terminal samples of
    :func:`run_ensemble` equal the snapshot at ``cfg.t_star`` exactly.
    """
    snap_times = sorted(set(int(t) for t in times))
    if snap_times and (snap_times[0] < 0 or snap_times[-1] > cfg.t_star):
        raise ValueError("snapshot times must lie in [0, t_star]")
    n = cfg.params.n_players
    out = {t: np.empty((cfg.m, n)) for t in snap_times}
    advance = (_advance_batch_finite if cfg.params.scores.finite_support
               else _advance_batch_custom)

    bounds = [(lo, min(lo + _BATCH, cfg.m)) for lo in range(0, cfg.m, _BATCH)]
    workers = _workers()
    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(advance, cfg, lo, hi, snap_times, out)
                       for lo, hi in bounds]
            for fut in futures:
                fut.result()
    else:
        for lo, hi in bounds:
            advance(cfg, lo, hi, snap_times, out)
    return out


def exp_moment(samples: np.ndarray, a: float = EXP_MOMENT_SCALE) -> float:
    """Mean over chains of sum_i exp(a * |x_i|)."""
    return float(np.exp(a * np.abs(samples)).sum(axis=1).mean())


def run_ensemble(cfg: EnsembleConfig) -> EnsembleResult:
    """Advance ``cfg.m`` independent chains ``cfg.t_star`` steps each."""
    started = time.perf_counter()
    samples = ensemble_snapshots(cfg, [cfg.t_star])[cfg.t_star]
    rho = cfg.params.skills.entries
    summary = EnsembleSummary(
        mean=samples.mean(axis=0),
        mean_abs_dev=np.abs(samples - rho).mean(axis=0),
        exp_moment=exp_moment(samples),
        exp_moment_scale=EXP_MOMENT_SCALE,
    )
    metadata = {
        "m": cfg.m,
        "t_star": cfg.t_star,
        "seed": cfg.master_seed,
        "n_players": cfg.params.n_players,
        "k_factor": cfg.params.k_factor,
        "initial": cfg.initial.describe(),
        "elapsed_s": time.perf_counter() - started,
    }
    return EnsembleResult(samples=samples, summary=summary, metadata=metadata)


# -- histograms ----------------------------------------------------------------

@dataclass(frozen=True)
class Histogram:
    """Equal-width histogram normalized to unit integral."""

    bin_edges: np.ndarray
    counts: np.ndarray
    normalized_density: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])


def make_histogram(samples: Sequence[float] | np.ndarray, bins: int) -> Histogram:
    """Equal-width bins spanning the sample range, density integrating to 1.

    All-equal samples fall back to numpy's unit-width window around the value,
    so the single bin still carries density with unit integral.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("cannot build a histogram from no samples")
    if bins < 1:
        raise ValueError("need at least one bin")
    counts, edges = np.histogram(samples, bins=bins)
    widths = np.diff(edges)
    density = counts / (samples.size * widths)
    return Histogram(bin_edges=edges, counts=counts, normalized_density=density)


# -- one-dimensional W1 and convergence diagnostics ------------------------------

def empirical_w1(samples_a: Sequence[float] | np.ndarray,
                 samples_b: Sequence[float] | np.ndarray,
                 rng: np.random.Generator | None = None) -> float:
    """Exact W1 between two empirical measures on R (sorted matching).

    Unequal sample counts are handled by uniformly subsampling the larger set
    without replacement, which requires the caller's ``rng``.
    """
    a = np.asarray(samples_a, dtype=float)
    b = np.asarray(samples_b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("empirical W1 needs nonempty samples")
    if a.size != b.size:
        if rng is None:
            raise ValueError("unequal sample counts need an rng to subsample")
        if a.size > b.size:
            a = a[rng.choice(a.size, size=b.size, replace=False)]
        else:
            b = b[rng.choice(b.size, size=a.size, replace=False)]
    return float(np.mean(np.abs(np.sort(a) - np.sort(b))))


def convergence_diagnostic(cfg: EnsembleConfig,
                           checkpoints: Sequence[int]) -> list[tuple[int, float]]:
    """W1 between the first-coordinate snapshot at each checkpoint and at t_star.

    Checkpoints must be sorted ascending and lie within [0, t_star]; the
    distances shrink as the ensemble relaxes (a checkpoint at t_star itself
    compares the snapshot with itself and reads 0).
    """
    times = [int(t) for t in checkpoints]
    if times != sorted(times):
        raise ValueError("checkpoints must be sorted ascending")
    snaps = ensemble_snapshots(cfg, set(times) | {cfg.t_star})
    final = snaps[cfg.t_star][:, 0]
    return [(t, empirical_w1(snaps[t][:, 0], final)) for t in times]


# -- CSV serialization -----------------------------------------------------------

def format_header(fields: dict) -> str:
    """One ``# key=value ...`` comment line (values must not contain spaces)."""
    parts = []
    for key, value in fields.items():
        if isinstance(value, float):
            value = repr(value)
        parts.append(f"{key}={value}")
    return "# " + " ".join(parts)


def parse_header(line: str) -> dict[str, str]:
    if not line.startswith("#"):
        raise ValueError("not a header comment")
    return dict(tok.split("=", 1) for tok in line[1:].split())


def write_histogram_csv(hist: Histogram, path, header: dict) -> None:
    lines = [format_header(header), "bin_left,bin_right,count,density"]
    for left, right, cnt, dens in zip(hist.bin_edges[:-1], hist.bin_edges[1:],
                                      hist.counts, hist.normalized_density):
        lines.append(f"{float(left)!r},{float(right)!r},{int(cnt)},{float(dens)!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_samples_csv(samples: np.ndarray, path, header: dict) -> None:
    """One rating vector per line, comma-separated coordinates."""
    lines = [format_header(header)]
    lines.append(",".join(f"x{i}" for i in range(samples.shape[1])))
    for row in samples:
        lines.append(",".join(repr(float(v)) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
