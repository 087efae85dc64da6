"""Arm models and environments.

Three families of arms: bivariate Gaussians truncated to the unit square
(sampled by rejection), analytic arms with closed-form mixed moments for
oracle cross-checks, and replay of recorded (reward, cost) traces.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    ActionPair,
    ConfigError,
    DomainError,
    Feedback,
    InstanceSpec,
    SamplingError,
)

# rejection sampling budget: attempts allowed per requested draw
MAX_ATTEMPTS_PER_DRAW = 10**6
_BATCH_CAP = 1 << 21


def make_cov(x: float, sigma: float) -> np.ndarray:
    """Covariance sigma * [[1, r], [r, 1]] with r = 2x * sqrt(1 - x^2).

    x in [0, 1] steers the reward/cost correlation; the matrix becomes
    singular when r reaches 1 (at x = 1/sqrt(2)), which is rejected.
    """
    if not 0.0 <= x <= 1.0:
        raise DomainError("x must lie in [0, 1]")
    if not sigma > 0.0:
        raise DomainError("sigma must be positive")
    r = 2.0 * x * np.sqrt(1.0 - x * x)
    if r >= 1.0 - 1e-12:
        raise DomainError(f"correlation parameter x={x} makes the covariance singular")
    return sigma * np.array([[1.0, r], [r, 1.0]])


@dataclass(frozen=True)
class GaussianArm:
    """Bivariate Gaussian (reward, cost) truncated to [0, 1]^2.

    mean is the pre-truncation mean vector; ground-truth moments on the
    truncated law come from the oracle, not from these parameters.
    """

    mean: tuple[float, float]
    x: float
    sigma: float

    def __post_init__(self) -> None:
        if len(self.mean) != 2:
            raise ConfigError("mean must have exactly two components")
        make_cov(self.x, self.sigma)  # validates

    def cov(self) -> np.ndarray:
        return make_cov(self.x, self.sigma)

    def sample(self, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
        return _truncated_batch(np.asarray(self.mean, dtype=float), self.cov(), rng, size)


def _truncated_batch(mean, cov, rng, size, cap_per_draw=MAX_ATTEMPTS_PER_DRAW):
    chol = np.linalg.cholesky(cov)
    rewards = np.empty(size)
    costs = np.empty(size)
    filled = 0
    budget = cap_per_draw * size
    while filled < size:
        need = size - filled
        batch = min(max(2 * need, 256), _BATCH_CAP, budget)
        if batch <= 0:
            raise SamplingError(
                f"rejection sampling exceeded {cap_per_draw} attempts per draw"
            )
        z = rng.standard_normal((batch, 2)) @ chol.T + mean
        ok = (z[:, 0] >= 0.0) & (z[:, 0] <= 1.0) & (z[:, 1] >= 0.0) & (z[:, 1] <= 1.0)
        acc = z[ok]
        take = min(acc.shape[0], need)
        rewards[filled : filled + take] = acc[:take, 0]
        costs[filled : filled + take] = acc[:take, 1]
        filled += take
        budget -= batch
    return rewards, costs


def truncated_gauss_sample(spec: GaussianArm, rng: np.random.Generator, size: int | None = None):
    """Draw from the truncated law; a single (reward, cost) pair, or arrays."""
    if size is None:
        r, c = spec.sample(rng, 1)
        return float(r[0]), float(c[0])
    return spec.sample(rng, size)


@dataclass(frozen=True)
class DegenerateArm:
    """Point mass at (r0, c0); handy because every moment is exact."""

    r0: float
    c0: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.r0 <= 1.0:
            raise ConfigError("r0 must lie in [0, 1]")
        if self.c0 < 0.0:
            raise ConfigError("c0 must be non-negative")

    def sample(self, rng, size):
        return np.full(size, self.r0), np.full(size, self.c0)

    def mixed_moment(self, tau_prime: float) -> float:
        return self.r0 if self.c0 <= tau_prime else 0.0


@dataclass(frozen=True)
class UniformCostArm:
    """Constant reward with cost ~ Uniform[0, 1], independent of the reward."""

    reward_mean: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.reward_mean <= 1.0:
            raise ConfigError("reward_mean must lie in [0, 1]")

    def sample(self, rng, size):
        return np.full(size, self.reward_mean), rng.random(size)

    def mixed_moment(self, tau_prime: float) -> float:
        return self.reward_mean * min(tau_prime, 1.0)


REPLAY_MODES = ("sample", "cyclic")


@dataclass(frozen=True)
class TraceArm:
    """Replays recorded (reward, cost) rows.

    "sample" draws rows with replacement (keeps rounds i.i.d.); "cyclic"
    replays rows in order within one sampling batch, for deterministic tests.
    """

    rewards: tuple[float, ...]
    costs: tuple[float, ...]
    replay: str = "sample"
    # Where the rows came from, for config serialization; not part of identity.
    source: str | None = field(default=None, compare=False)
    source_arm: int | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if len(self.rewards) == 0:
            raise ConfigError("trace arm needs at least one row")
        if len(self.rewards) != len(self.costs):
            raise ConfigError("rewards and costs must have equal length")
        if any(not 0.0 <= r <= 1.0 for r in self.rewards):
            raise ConfigError("trace rewards must lie in [0, 1]")
        if any(c < 0.0 for c in self.costs):
            raise ConfigError("trace costs must be non-negative")
        if self.replay not in REPLAY_MODES:
            raise ConfigError(f"unknown replay mode {self.replay!r}")

    def sample(self, rng, size):
        if self.replay == "cyclic":
            idx = np.arange(size) % len(self.rewards)
        else:
            idx = rng.integers(0, len(self.rewards), size=size)
        return np.asarray(self.rewards)[idx], np.asarray(self.costs)[idx]

    def mixed_moment(self, tau_prime: float) -> float:
        r = np.asarray(self.rewards)
        c = np.asarray(self.costs)
        return float(np.mean(r * (c <= tau_prime)))


@dataclass(frozen=True, eq=False)
class RoundOutcome:
    """The latent (reward, cost) of every arm for one round."""

    rewards: np.ndarray
    costs: np.ndarray

    @property
    def n(self) -> int:
        return len(self.rewards)


def sample_round(instance: InstanceSpec, rng: np.random.Generator) -> RoundOutcome:
    """One independent draw per arm; arms are mutually independent."""
    n = instance.n
    rewards = np.empty(n)
    costs = np.empty(n)
    for i, arm in enumerate(instance.arms):
        r, c = arm.sample(rng, 1)
        rewards[i] = r[0]
        costs[i] = c[0]
    return RoundOutcome(rewards, costs)


def sample_episode(instance: InstanceSpec, rng: np.random.Generator,
                   horizon: int) -> tuple[np.ndarray, np.ndarray]:
    """Pre-draw a whole episode: (horizon, n) reward and cost matrices.

    Arms are drawn one after the other (arm-major), so the stream is
    reproducible regardless of how rounds are consumed later.
    """
    rewards = np.empty((horizon, instance.n))
    costs = np.empty((horizon, instance.n))
    for i, arm in enumerate(instance.arms):
        r, c = arm.sample(rng, horizon)
        rewards[:, i] = r
        costs[:, i] = c
    return rewards, costs


def observe(outcome: RoundOutcome, action: ActionPair) -> Feedback:
    """Censor the chosen arm's outcome against the chosen limit (C <= tau' passes)."""
    if not 1 <= action.arm <= outcome.n:
        raise DomainError(f"arm {action.arm} outside 1..{outcome.n}")
    cost = float(outcome.costs[action.arm - 1])
    if cost <= action.tau_prime:
        return Feedback(censored=False, cost=cost, reward=float(outcome.rewards[action.arm - 1]))
    return Feedback(censored=True)


def trace_env_load(path, n_arms: int | None = None, replay: str = "sample") -> tuple[TraceArm, ...]:
    """Load per-arm traces from a CSV with header ``arm,reward,cost``.

    Arm indices are 1-based. When n_arms is given, every arm 1..n_arms must
    have at least one row. Malformed rows raise ConfigError naming the line.
    """
    path = Path(path)
    rows: dict[int, list[tuple[float, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["arm", "reward", "cost"]:
            raise ConfigError(f"{path}: expected header arm,reward,cost")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise ConfigError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            try:
                arm = int(row[0])
                reward = float(row[1])
                cost = float(row[2])
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from None
            if arm < 1:
                raise ConfigError(f"{path}:{lineno}: arm index must be >= 1")
            if not 0.0 <= reward <= 1.0:
                raise ConfigError(f"{path}:{lineno}: reward {reward} outside [0, 1]")
            if cost < 0.0:
                raise ConfigError(f"{path}:{lineno}: cost {cost} is negative")
            rows.setdefault(arm, []).append((reward, cost))
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    count = n_arms if n_arms is not None else max(rows)
    arms = []
    for i in range(1, count + 1):
        if i not in rows:
            raise ConfigError(f"{path}: no rows for arm {i}")
        rewards, costs = zip(*rows[i])
        arms.append(TraceArm(rewards=rewards, costs=costs, replay=replay,
                             source=str(path), source_arm=i))
    if n_arms is not None and max(rows) > n_arms:
        raise ConfigError(f"{path}: arm index {max(rows)} exceeds instance size {n_arms}")
    return tuple(arms)
