"""Random chain MDPs, Dirichlet task distributions and transition batches.

Every random draw goes through an :class:`RngStream`, a (seed, stream, path)
triple mapped onto numpy's PCG64 via ``SeedSequence`` spawn keys. Children
of a stream are independent of each other and of their parent, so the
draws for (run, task, s, a) never depend on the order in which anything
else was sampled.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .mdp import RewardTable, TransitionModel

SIGMA_CONVENTIONS = ("variance", "stddev")
DEFAULT_SIGMA_CONVENTION = "stddev"

# Named task-similarity regimes (strong, medium, loose structure).
SIGMA_REGIMES = {"strong": 0.01, "medium": 0.025, "loose": 0.047}

_UINT64 = 2**64


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream: int = 0
    path: tuple[int, ...] = ()

    def __post_init__(self):
        for value in (self.seed, self.stream, *self.path):
            if not 0 <= int(value) < _UINT64:
                raise InvalidInputError("seed, stream and path entries must be 64-bit unsigned integers")

    def child(self, *keys: int) -> "RngStream":
        return RngStream(self.seed, self.stream, self.path + tuple(int(k) for k in keys))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream, *self.path))
        return np.random.Generator(np.random.PCG64(seq))


@dataclass(frozen=True)
class SampleBatch:
    """``counts[s, a, s']`` from ``m`` simulator calls per state-action pair."""

    counts: np.ndarray
    m: int

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        if self.m < 1:
            raise InvalidInputError("a batch needs m >= 1 samples per state-action pair")
        if counts.ndim != 3 or counts.min() < 0 or np.any(counts.sum(axis=2) != self.m):
            raise InvalidInputError("counts must be nonnegative and sum to m for every (s, a)")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)


def random_chain_mdp(n_states: int, n_actions: int, k: int, rng: RngStream) -> TransitionModel:
    """Random transition model with ``k`` structural zeros per row.

    For each (s, a), ``k`` next states chosen uniformly without replacement
    get probability 0; the others get uniform (0, 1] weights, normalized.
    """
    if n_states < 1 or n_actions < 1:
        raise InvalidInputError("need at least one state and one action")
    if not 0 <= k < n_states:
        raise InvalidInputError(f"k must satisfy 0 <= k < S, got k={k}, S={n_states}")
    probs = np.zeros((n_states, n_actions, n_states))
    for s in range(n_states):
        for a in range(n_actions):
            gen = rng.child(s, a).generator()
            zeroed = gen.choice(n_states, size=k, replace=False)
            weights = 1.0 - gen.random(n_states)  # uniform on (0, 1]
            weights[zeroed] = 0.0
            probs[s, a] = weights / weights.sum()
    return TransitionModel(probs)


def random_rewards(n_states: int, n_actions: int, rng: RngStream, rmax: float = 1.0) -> RewardTable:
    """Rewards drawn uniformly on ``[0, rmax]`` for every state-action pair."""
    return RewardTable(rmax * rng.generator().random((n_states, n_actions)), rmax=rmax)


def sigma_of_dirichlet(mean_row, a0: float) -> np.ndarray:
    """Per-coordinate variance ``p_i (1 - p_i) / (a0 + 1)`` of ``Dir(a0 * p)``."""
    p = np.asarray(mean_row, dtype=float)
    a0 = np.asarray(a0, dtype=float)
    if np.any(a0 <= 0):
        raise InvalidInputError("Dirichlet mass a0 must be positive")
    return p * (1.0 - p) / (a0 + 1.0)


def _apply_convention(variance: np.ndarray, convention: str) -> np.ndarray:
    if convention == "variance":
        return variance
    if convention == "stddev":
        return np.sqrt(variance)
    raise InvalidInputError(f"sigma_convention must be one of {SIGMA_CONVENTIONS}, got {convention!r}")


def concentration_for_sigma(mean: TransitionModel, sigma_target: float, convention: str = DEFAULT_SIGMA_CONVENTION) -> float:
    """Dirichlet mass ``a0`` whose largest per-coordinate sigma equals ``sigma_target``."""
    if sigma_target <= 0:
        raise InvalidInputError("target sigma must be positive")
    spread = float((mean.probs * (1.0 - mean.probs)).max())
    if convention not in SIGMA_CONVENTIONS:
        raise InvalidInputError(f"sigma_convention must be one of {SIGMA_CONVENTIONS}, got {convention!r}")
    target_var = sigma_target if convention == "variance" else sigma_target**2
    a0 = spread / target_var - 1.0
    if a0 <= 0:
        raise InvalidInputError(
            f"sigma {sigma_target} is unreachable for this mean model "
            f"(largest attainable {convention} is below it)"
        )
    return a0


@dataclass(frozen=True)
class MetaDistribution:
    """Dirichlet distribution over task models centred on ``mean``.

    Row (s, a) of a task is drawn from ``Dir(concentration[s, a] * mean[s, a])``.
    ``sigma_matrix[s, a]`` is the largest coordinate sigma of that row under
    ``sigma_convention``.
    """

    mean: TransitionModel
    concentration: np.ndarray
    sigma_convention: str = DEFAULT_SIGMA_CONVENTION
    sigma_matrix: np.ndarray = field(init=False)

    def __post_init__(self):
        shape = self.mean.probs.shape[:2]
        conc = np.broadcast_to(np.asarray(self.concentration, dtype=float), shape).copy()
        if np.any(conc <= 0) or not np.all(np.isfinite(conc)):
            raise InvalidInputError("Dirichlet concentration must be positive and finite")
        conc.setflags(write=False)
        variance = sigma_of_dirichlet(self.mean.probs, conc[..., None])
        sigma = _apply_convention(variance, self.sigma_convention).max(axis=2)
        sigma.setflags(write=False)
        object.__setattr__(self, "concentration", conc)
        object.__setattr__(self, "sigma_matrix", sigma)

    @classmethod
    def from_sigma(cls, mean: TransitionModel, sigma_target: float, convention: str = DEFAULT_SIGMA_CONVENTION):
        return cls(mean, concentration_for_sigma(mean, sigma_target, convention), convention)

    @property
    def sigma(self) -> float:
        return float(self.sigma_matrix.max())

    @property
    def n_states(self) -> int:
        return self.mean.n_states

    @property
    def n_actions(self) -> int:
        return self.mean.n_actions


def _dirichlet_row(alpha: np.ndarray, gen: np.random.Generator) -> np.ndarray:
    # Gamma(a) = Gamma(a + 1) * U**(1/a), in log space so tiny a cannot underflow.
    log_g = np.log(gen.standard_gamma(alpha + 1.0)) + np.log1p(-gen.random(alpha.size)) / alpha
    w = np.exp(log_g - log_g.max())
    return w / w.sum()


def sample_task(dist: MetaDistribution, rng: RngStream) -> TransitionModel:
    """Draw one task's transition model; zero-mass coordinates stay zero."""
    probs = np.zeros_like(dist.mean.probs)
    for s in range(dist.n_states):
        for a in range(dist.n_actions):
            row = dist.mean.probs[s, a]
            support = row > 0
            alpha = dist.concentration[s, a] * row[support]
            probs[s, a, support] = _dirichlet_row(alpha, rng.child(s, a).generator())
    return TransitionModel(probs)


def sample_batch(model: TransitionModel, m: int, rng: RngStream) -> SampleBatch:
    """``m`` i.i.d. next-state samples per (s, a), returned as counts."""
    if m < 1:
        raise InvalidInputError("m must be at least 1")
    counts = np.zeros(model.probs.shape, dtype=np.int64)
    for s in range(model.n_states):
        for a in range(model.n_actions):
            gen = rng.child(s, a).generator()
            row = model.probs[s, a]
            counts[s, a] = gen.multinomial(m, row / row.sum())
    return SampleBatch(counts, m)
