"""Core domain types for the Elo chain.

A league of ``n`` players carries a zero-sum rating vector that is updated
match by match.  The pieces defined here are shared by every other module:

* :class:`RatingVector` / :class:`TrueSkillVector` -- points on the zero-sum
  subspace (ratings move, skills are fixed).
* :class:`LinkFunction` -- the odd, strictly increasing, Lipschitz map from a
  rating difference to an expected score in (-1, 1).
* :class:`ScoreModel` -- the per-pair law of match scores on [-1, 1], whose
  mean is pinned to the link of the skill difference.
* :class:`EloParams` -- the full parameter bundle (n, K, link, scores, skills).

All of these are immutable after construction and safe to share across
threads.  Player indices are 0-based throughout the package.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "RatingVector",
    "TrueSkillVector",
    "LinkFunction",
    "ScoreModel",
    "EloParams",
    "make_params",
    "parse_config",
    "load_config",
    "ConfigError",
]

#: Construction-time tolerance on the zero-sum invariant of rating vectors.
ZERO_SUM_TOL = 1e-9

#: Skill vectors are re-centred (and flagged) when they miss zero by more than this.
SKILL_RECENTRE_TOL = 1e-12


class ConfigError(ValueError):
    """Raised for malformed or unknown keys in a parameter file."""


def _freeze(entries: Sequence[float] | np.ndarray) -> np.ndarray:
    arr = np.array(entries, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {arr.shape}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class RatingVector:
    """A point on the zero-sum subspace: the state of the chain.

    Entries are dimensionless Elo ratings; their sum must vanish up to
    ``ZERO_SUM_TOL`` (floating-point drift from long runs is tolerated).
    """

    entries: np.ndarray

    def __post_init__(self) -> None:
        arr = _freeze(self.entries)
        if arr.size < 2:
            raise ValueError("a rating vector needs at least 2 players")
        total = float(arr.sum())
        if abs(total) > ZERO_SUM_TOL:
            raise ValueError(f"ratings must sum to 0 (got {total!r})")
        object.__setattr__(self, "entries", arr)

    @property
    def n(self) -> int:
        return self.entries.size

    @classmethod
    def zeros(cls, n: int) -> "RatingVector":
        return cls(np.zeros(n))

    @classmethod
    def centred(cls, entries: Sequence[float] | np.ndarray) -> "RatingVector":
        """Build a rating vector from arbitrary entries by subtracting the mean."""
        arr = np.array(entries, dtype=float)
        return cls(arr - arr.mean())

    def __repr__(self) -> str:  # compact, round-trippable
        return f"RatingVector({self.entries.tolist()!r})"


@dataclass(frozen=True, eq=False)
class TrueSkillVector:
    """Fixed latent strengths of the players.

    Inputs whose sum misses zero by more than ``SKILL_RECENTRE_TOL`` are
    re-centred by subtracting the mean, and ``recentred`` records that this
    happened (user-facing inputs rarely sum to zero exactly).
    """

    entries: np.ndarray
    recentred: bool = False

    def __post_init__(self) -> None:
        arr = np.array(self.entries, dtype=float)
        if arr.ndim != 1 or arr.size < 2:
            raise ValueError("a skill vector needs at least 2 players")
        moved = False
        if abs(float(arr.sum())) > SKILL_RECENTRE_TOL:
            arr = arr - arr.mean()
            moved = True
        arr.flags.writeable = False
        object.__setattr__(self, "entries", arr)
        object.__setattr__(self, "recentred", moved)

    @property
    def n(self) -> int:
        return self.entries.size

    @classmethod
    def zeros(cls, n: int) -> "TrueSkillVector":
        return cls(np.zeros(n))

    @classmethod
    def two_player(cls, rho1: float) -> "TrueSkillVector":
        """The (rho1, -rho1) league used throughout the two-player experiments."""
        return cls(np.array([rho1, -rho1]))

    def __repr__(self) -> str:
        return f"TrueSkillVector({self.entries.tolist()!r}, recentred={self.recentred})"


# -- link functions ----------------------------------------------------------

# probe grid for spot-checking user-supplied links (odd / increasing / Lipschitz)
_PROBE = np.concatenate([np.linspace(1e-6, 30.0, 500), np.geomspace(1e-9, 1e-2, 50)])


@dataclass(frozen=True, eq=False)
class LinkFunction:
    """Map from rating difference to expected score.

    Must be odd, strictly increasing, bounded by 1 in absolute value and
    ``lipschitz``-Lipschitz.  The built-in ``logistic`` kind is a tanh curve
    with scale ``c`` (its Lipschitz constant is exactly ``c``); ``custom``
    wraps a user-supplied vectorized callable with a declared constant, which
    is spot-checked on a probe grid rather than proven.
    """

    kind: str
    lipschitz: float
    scale: float | None = None
    eval_array: Callable[[np.ndarray], np.ndarray] | None = None
    eval_scalar: Callable[[float], float] | None = None
    deriv_scalar: Callable[[float], float] | None = None

    def __call__(self, u):
        """Evaluate the link at ``u`` (scalar or array)."""
        if isinstance(u, np.ndarray):
            return self.eval_array(u)
        return self.eval_scalar(float(u))

    @classmethod
    def logistic(cls, c: float) -> "LinkFunction":
        if c <= 0:
            raise ValueError("logistic scale c must be positive")

        def _arr(u: np.ndarray) -> np.ndarray:
            return np.tanh(c * u)

        def _sca(u: float) -> float:
            return math.tanh(c * u)

        def _der(u: float) -> float:
            t = math.tanh(c * u)
            return c * (1.0 - t * t)

        return cls(kind="logistic", lipschitz=c, scale=c,
                   eval_array=_arr, eval_scalar=_sca, deriv_scalar=_der)

    @classmethod
    def custom(cls, fn: Callable, lipschitz: float,
               deriv: Callable[[float], float] | None = None) -> "LinkFunction":
        """Wrap ``fn`` (vectorized on numpy arrays) with a declared Lipschitz constant."""
        if lipschitz <= 0:
            raise ValueError("declared Lipschitz constant must be positive")
        link = cls(kind="custom", lipschitz=lipschitz, scale=None,
                   eval_array=fn, eval_scalar=lambda u: float(fn(u)),
                   deriv_scalar=deriv)
        link._spot_check()
        return link

    def _spot_check(self) -> None:
        u = _PROBE
        fu = np.asarray(self.eval_array(u), dtype=float)
        fnu = np.asarray(self.eval_array(-u), dtype=float)
        if abs(float(self.eval_scalar(0.0))) > 1e-15:
            raise ValueError("link must vanish at 0")
        if np.max(np.abs(fu + fnu)) > 1e-12:
            raise ValueError("link must be odd")
        if np.max(np.abs(fu)) >= 1.0:
            raise ValueError("link values must stay inside (-1, 1)")
        both_u = np.unique(np.concatenate([u, -u]))
        both_f = np.asarray(self.eval_array(both_u), dtype=float)
        df = np.diff(both_f)
        if np.any(df <= 0):
            raise ValueError("link must be strictly increasing")
        quot = df / np.diff(both_u)
        if np.max(quot) > self.lipschitz + 1e-9:
            raise ValueError("link exceeds its declared Lipschitz constant")

    def ell(self, m: float) -> float:
        """Worst-case slope of the link over [-m, m] (inverse-Lipschitz modulus).

        For the logistic kind (odd, concave on [0, inf)) this is exactly the
        derivative at ``m``; for custom links it is approximated by the
        infimum of adjacent difference quotients on a fine grid.
        """
        if m <= 0:
            raise ValueError("ell is defined for positive half-width m only")
        if self.kind == "logistic":
            return self.deriv_scalar(m)
        grid = np.linspace(-m, m, 16385)
        # worst slopes usually sit at the edges; refine there with tiny steps
        h = max(1e-6, 1e-9 * m)
        edges = np.concatenate([m - h * np.arange(33), -m + h * np.arange(33)])
        grid = np.unique(np.concatenate([grid, edges]))
        vals = np.asarray(self.eval_array(grid), dtype=float)
        return float(np.min(np.diff(vals) / np.diff(grid)))


# -- score models ------------------------------------------------------------

_FINITE_KINDS = ("binary", "three_point")


@dataclass(frozen=True, eq=False)
class ScoreModel:
    """Per-pair law of the match score on [-1, 1].

    The mean of the score of ``i`` against ``j`` equals
    ``link(skills[i] - skills[j])``, and swapping the players negates the law.
    Built-in kinds:

    * ``binary`` -- win/lose, scores in {-1, +1}, P(+1) = (1 + mean)/2;
    * ``three_point`` -- win/tie/lose with a fixed tie probability ``p_tie``
      and P(+-1) = ((1 - p_tie) +- mean)/2;
    * ``continuous_custom`` -- a user sampler ``sampler(mean, rng, size)``
      drawing from a law on [-1, 1] with the given mean, validated
      empirically at construction.
    """

    kind: str
    skills: TrueSkillVector
    link: LinkFunction
    p_tie: float = 0.0
    sampler: Callable | None = None

    def __post_init__(self) -> None:
        if self.kind not in (*_FINITE_KINDS, "continuous_custom"):
            raise ValueError(f"unknown score kind {self.kind!r}")
        if self.kind == "three_point":
            if not 0.0 <= self.p_tie < 1.0:
                raise ValueError("p_tie must lie in [0, 1)")
            worst = max(abs(self.mean(i, j))
                        for i in range(self.skills.n)
                        for j in range(self.skills.n) if i != j)
            if worst > 1.0 - self.p_tie:
                raise ValueError(
                    f"three_point mean constraint infeasible: |mean|={worst:.6g} "
                    f"exceeds 1 - p_tie = {1.0 - self.p_tie:.6g}")
        if self.kind == "continuous_custom":
            if self.sampler is None:
                raise ValueError("continuous_custom requires a sampler")
            self._validate_sampler()

    def _validate_sampler(self, draws: int = 100_000) -> None:
        # 5-sigma gate on the declared mean, one batch per distinct skill gap
        rng = np.random.default_rng(np.random.SeedSequence((0xE10, 0)))
        deltas = {round(float(self.skills.entries[i] - self.skills.entries[j]), 12)
                  for i in range(self.skills.n)
                  for j in range(self.skills.n) if i != j}
        for delta in sorted(deltas):
            target = self.link(delta)
            s = np.asarray(self.sampler(target, rng, draws), dtype=float)
            if s.shape != (draws,):
                raise ValueError("sampler must return `size` draws")
            if s.min() < -1.0 or s.max() > 1.0:
                raise ValueError("sampler produced scores outside [-1, 1]")
            gate = 5.0 * s.std() / math.sqrt(draws)
            if abs(s.mean() - target) > max(gate, 1e-12):
                raise ValueError(
                    f"sampler mean {s.mean():.6g} misses declared mean "
                    f"{target:.6g} at skill gap {delta:g} (5-sigma gate {gate:.2g})")

    # mean / sampling / moments -------------------------------------------------

    def mean(self, i: int, j: int) -> float:
        """Expected score of player ``i`` against ``j``."""
        if i == j:
            raise ValueError("players must be distinct")
        return self.link(float(self.skills.entries[i] - self.skills.entries[j]))

    def mean_table(self) -> np.ndarray:
        """(n, n) matrix of expected scores (diagonal zero)."""
        rho = self.skills.entries
        return np.asarray(self.link(rho[:, None] - rho[None, :]), dtype=float)

    def sample(self, i: int, j: int, rng: np.random.Generator) -> float:
        """One draw of the score of ``i`` against ``j``."""
        mu = self.mean(i, j)
        if self.kind == "continuous_custom":
            return float(self.sampler(mu, rng, None))
        return float(self.sample_from_uniform(mu, rng.random()))

    def sample_from_uniform(self, mu, u):
        """Inverse-CDF transform for the finite kinds (vectorized).

        ``mu`` is the per-draw mean, ``u`` uniform on [0, 1).  Not available
        for continuous_custom, whose randomness lives in its own sampler.
        """
        if self.kind == "binary":
            return np.where(u < (1.0 + mu) / 2.0, 1.0, -1.0)
        if self.kind == "three_point":
            p_plus = (1.0 - self.p_tie + mu) / 2.0
            return np.where(u < p_plus, 1.0, np.where(u < p_plus + self.p_tie, 0.0, -1.0))
        raise ValueError("sample_from_uniform requires a finite score kind")

    def variance(self, i: int, j: int) -> float:
        """Exact variance of the score of ``i`` against ``j``."""
        mu = self.mean(i, j)
        if self.kind == "binary":
            return 1.0 - mu * mu
        if self.kind == "three_point":
            return (1.0 - self.p_tie) - mu * mu
        raise ValueError("variance has no closed form for continuous_custom")

    def atoms(self, i: int, j: int) -> tuple[np.ndarray, np.ndarray]:
        """Support points and probabilities (finite kinds only)."""
        mu = self.mean(i, j)
        if self.kind == "binary":
            return (np.array([-1.0, 1.0]),
                    np.array([(1.0 - mu) / 2.0, (1.0 + mu) / 2.0]))
        if self.kind == "three_point":
            q = 1.0 - self.p_tie
            return (np.array([-1.0, 0.0, 1.0]),
                    np.array([(q - mu) / 2.0, self.p_tie, (q + mu) / 2.0]))
        raise ValueError("continuous_custom has no finite atom list")

    @property
    def finite_support(self) -> bool:
        return self.kind in _FINITE_KINDS


# -- parameter bundle --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EloParams:
    """Everything a chain needs: league size, K-factor, link, scores, skills."""

    n_players: int
    k_factor: float
    link: LinkFunction
    scores: ScoreModel
    skills: TrueSkillVector

    def __post_init__(self) -> None:
        if self.n_players < 2:
            raise ValueError("need at least 2 players")
        if self.k_factor <= 0:
            raise ValueError("K-factor must be positive")
        if self.k_factor * self.link.lipschitz >= 1.0:
            raise ValueError(
                f"K*L must be < 1 (got K={self.k_factor:g}, L={self.link.lipschitz:g})")
        if self.skills.n != self.n_players:
            raise ValueError("skill vector length does not match n_players")
        if self.scores.skills is not self.skills or self.scores.link is not self.link:
            raise ValueError("score model must be built on the same skills and link")

    @property
    def n_ordered_pairs(self) -> int:
        return self.n_players * (self.n_players - 1)


def make_params(n_players: int, k_factor: float, *,
                link: LinkFunction | None = None,
                skills: TrueSkillVector | Sequence[float] | None = None,
                score_kind: str = "binary",
                p_tie: float = 0.0,
                sampler: Callable | None = None) -> EloParams:
    """Assemble a consistent :class:`EloParams` (logistic c=0.5 and zero skills by default)."""
    if link is None:
        link = LinkFunction.logistic(0.5)
    if skills is None:
        skills = TrueSkillVector.zeros(n_players)
    elif not isinstance(skills, TrueSkillVector):
        skills = TrueSkillVector(np.asarray(skills, dtype=float))
    scores = ScoreModel(kind=score_kind, skills=skills, link=link,
                        p_tie=p_tie, sampler=sampler)
    return EloParams(n_players=n_players, k_factor=k_factor, link=link,
                     scores=scores, skills=skills)


# -- flat key=value configuration files --------------------------------------

_CONFIG_KEYS = {"n_players", "k_factor", "link.kind", "link.c",
                "score.kind", "score.p_tie", "skills"}


def parse_config(text: str) -> EloParams:
    """Parse a flat ``key = value`` parameter file (UTF-8) into :class:`EloParams`.

    Recognized keys: n_players, k_factor, link.kind, link.c, score.kind,
    score.p_tie, skills (comma-separated reals).  Unknown keys are an error;
    blank lines and ``#`` comments are ignored.
    """
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value.strip()

    try:
        k_factor = float(raw["k_factor"])
    except KeyError:
        raise ConfigError("missing required key 'k_factor'") from None

    skills = None
    if "skills" in raw:
        skills = [float(tok) for tok in raw["skills"].split(",") if tok.strip()]
    if "n_players" in raw:
        n_players = int(raw["n_players"])
        if skills is not None and len(skills) != n_players:
            raise ConfigError("skills length disagrees with n_players")
    elif skills is not None:
        n_players = len(skills)
    else:
        raise ConfigError("need 'n_players' or 'skills'")

    link_kind = raw.get("link.kind", "logistic")
    if link_kind != "logistic":
        raise ConfigError(f"link.kind {link_kind!r} is not loadable from a config file")
    link = LinkFunction.logistic(float(raw.get("link.c", "0.5")))

    score_kind = raw.get("score.kind", "binary")
    if score_kind not in _FINITE_KINDS:
        raise ConfigError(f"score.kind {score_kind!r} is not loadable from a config file")
    p_tie = float(raw.get("score.p_tie", "0.0"))
    if score_kind == "binary" and "score.p_tie" in raw:
        raise ConfigError("score.p_tie only applies to the three_point kind")

    return make_params(n_players, k_factor, link=link, skills=skills,
                       score_kind=score_kind, p_tie=p_tie)


def load_config(path) -> EloParams:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
