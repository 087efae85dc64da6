"""Shared domain types: discounts, resource grids, actions, feedback, instances.

Everything here is an immutable value object, safe to share across worker
processes without synchronization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Protocol, Union

import numpy as np


class DomainError(ValueError):
    """An argument violates a documented mathematical precondition."""


class ConfigError(ValueError):
    """A configuration value is structurally or semantically invalid."""


class SamplingError(RuntimeError):
    """A sampler could not produce a draw within its attempt budget."""


class UsageError(RuntimeError):
    """An API protocol was violated, e.g. update without a preceding select."""


_MASK64 = (1 << 64) - 1


def mix64(*parts: int) -> int:
    """Mix integer words into one 64-bit seed (splitmix64 finalizer chain).

    Used everywhere a reproducible stream must be derived from a base seed
    plus structural indices (policy index, repetition index, ...), so that
    streams are disjoint and independent of scheduling order.
    """
    h = 0x9E3779B97F4A7C15
    for p in parts:
        h = (h ^ (int(p) & _MASK64)) & _MASK64
        h = ((h ^ (h >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        h = ((h ^ (h >> 27)) * 0x94D049BB133111EB) & _MASK64
        h = h ^ (h >> 31)
    return h


DISCOUNT_KINDS = ("linear", "polynomial", "sublinear", "geometric", "exponential")


@dataclass(frozen=True)
class DiscountSpec:
    """A monotone non-increasing reward discount gamma over [0, tau_max].

    Closed forms (t denotes the evaluated resource amount):

    - linear:      (tau_max - t) / tau_max
    - polynomial:  ((tau_max - t) / tau_max) ** k      with k > 1
    - sublinear:   ((tau_max - t) / tau_max) ** k      with 0 < k < 1
    - geometric:   (1 + rho) ** (-t / tau_max)         with 0 < rho < 1
    - exponential: exp(-1 / (tau_max - t)**k) / exp(-1 / tau_max**k), k > 0;
      the value at t == tau_max is 0, the continuous limit of the formula.
    """

    kind: str
    tau_max: float = 1.0
    k: float | None = None
    rho: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in DISCOUNT_KINDS:
            raise ConfigError(f"unknown discount kind {self.kind!r}")
        if not self.tau_max > 0:
            raise ConfigError("discount tau_max must be positive")
        if self.kind == "polynomial":
            if self.k is None or not self.k > 1:
                raise ConfigError("polynomial discount needs k > 1")
        elif self.kind == "sublinear":
            if self.k is None or not 0 < self.k < 1:
                raise ConfigError("sublinear discount needs k in (0, 1)")
        elif self.kind == "geometric":
            if self.rho is None or not 0 < self.rho < 1:
                raise ConfigError("geometric discount needs rho in (0, 1)")
        elif self.kind == "exponential":
            if self.k is None or not self.k > 0:
                raise ConfigError("exponential discount needs k > 0")


def discount_eval(spec: DiscountSpec, tau_tilde):
    """Evaluate gamma(tau_tilde) for a scalar or array of resource amounts.

    Raises DomainError if any value lies outside [0, spec.tau_max].
    """
    t = np.asarray(tau_tilde, dtype=float)
    if np.any(t < 0.0) or np.any(t > spec.tau_max):
        raise DomainError(f"tau_tilde must lie in [0, {spec.tau_max}]")
    tau = spec.tau_max
    if spec.kind == "linear":
        out = (tau - t) / tau
    elif spec.kind in ("polynomial", "sublinear"):
        out = ((tau - t) / tau) ** spec.k
    elif spec.kind == "geometric":
        out = (1.0 + spec.rho) ** (-t / tau)
    else:
        # exponential: at t == tau the second term is inf and exp gives 0
        with np.errstate(divide="ignore"):
            out = np.exp(tau ** (-spec.k) - (tau - t) ** (-spec.k))
    if isinstance(tau_tilde, np.ndarray):
        return out
    return float(out)


@dataclass(frozen=True)
class ResourceGrid:
    """Finite set of playable resource limits, strictly increasing in (0, tau_max]."""

    points: tuple[float, ...]
    tau_max: float

    def __post_init__(self) -> None:
        if len(self.points) == 0:
            raise ConfigError("grid needs at least one point")
        if self.points[0] <= 0.0:
            raise ConfigError("grid points must be positive")
        if any(b <= a for a, b in zip(self.points, self.points[1:])):
            raise ConfigError("grid points must be strictly increasing")
        if self.points[-1] > self.tau_max:
            raise ConfigError("grid points must not exceed tau_max")

    @property
    def m(self) -> int:
        return len(self.points)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float)

    def index_of(self, tau: float) -> int:
        """Index of the grid point equal to tau (tolerance 1e-9 * tau_max)."""
        arr = self.as_array()
        i = int(np.argmin(np.abs(arr - tau)))
        if abs(arr[i] - tau) > 1e-9 * self.tau_max:
            raise DomainError(f"{tau!r} is not a grid point")
        return i


def build_grid(m: int, tau_max: float) -> ResourceGrid:
    """Equidistant grid {j * tau_max / m : j = 1..m}; includes tau_max, excludes 0."""
    if m < 1:
        raise DomainError("grid size m must be >= 1")
    if not tau_max > 0:
        raise DomainError("tau_max must be positive")
    points = tuple((j / m) * tau_max for j in range(1, m + 1))
    return ResourceGrid(points=points, tau_max=float(tau_max))


@dataclass(frozen=True)
class ActionPair:
    """One decision: an arm index (1-based) and a resource limit from the grid."""

    arm: int
    tau_prime: float


@dataclass(frozen=True)
class Feedback:
    """Observation of one round: (cost, reward) if uncensored, nothing otherwise."""

    censored: bool
    cost: float | None = None
    reward: float | None = None

    def __post_init__(self) -> None:
        if self.censored:
            if self.cost is not None or self.reward is not None:
                raise DomainError("censored feedback carries no cost or reward")
        else:
            if self.cost is None or self.reward is None:
                raise DomainError("uncensored feedback needs both cost and reward")
            if not 0.0 <= self.reward <= 1.0:
                raise DomainError("reward must lie in [0, 1]")
            if self.cost < 0.0:
                raise DomainError("cost must be non-negative")


@dataclass(frozen=True)
class MultiplicativeDiscount:
    """Objective nu = gamma(tau') * mu."""


@dataclass(frozen=True)
class AdditiveCost:
    """Objective nu = mu - c(tau') with c(t) = scale * (t / tau_max) ** power.

    scale in [0, 1] keeps c mapping [0, tau_max] into [0, 1]; power > 0 keeps
    it monotone non-decreasing.
    """

    scale: float = 1.0
    power: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.scale <= 1.0:
            raise ConfigError("additive cost scale must lie in [0, 1]")
        if not self.power > 0:
            raise ConfigError("additive cost power must be positive")


Objective = Union[MultiplicativeDiscount, AdditiveCost]


def cost_eval(objective: AdditiveCost, tau_max: float, tau_tilde):
    """Evaluate the additive resource cost c(tau_tilde)."""
    t = np.asarray(tau_tilde, dtype=float)
    if np.any(t < 0.0) or np.any(t > tau_max):
        raise DomainError(f"tau_tilde must lie in [0, {tau_max}]")
    out = objective.scale * (t / tau_max) ** objective.power
    if isinstance(tau_tilde, np.ndarray):
        return out
    return float(out)


def objective_value(objective: Objective, discount: DiscountSpec, mu: float,
                    tau_prime: float) -> float:
    """The objective nu for one (mu, tau') cell under the given objective."""
    if not 0.0 <= mu <= 1.0:
        raise DomainError("mu must lie in [0, 1]")
    if isinstance(objective, MultiplicativeDiscount):
        return discount_eval(discount, tau_prime) * mu
    return mu - cost_eval(objective, discount.tau_max, tau_prime)


def objective_vectors(objective: Objective, discount: DiscountSpec,
                      grid: ResourceGrid) -> tuple[np.ndarray, np.ndarray]:
    """Per-grid-point (scale, offset) such that nu = scale * mu + offset.

    Multiplicative discounting gives (gamma(tau'), 0); additive cost gives
    (1, -c(tau')). Confidence radii on the mu scale map to the nu scale by
    the same `scale` factor.
    """
    taus = grid.as_array()
    if isinstance(objective, MultiplicativeDiscount):
        return discount_eval(discount, taus), np.zeros(grid.m)
    return np.ones(grid.m), -cost_eval(objective, discount.tau_max, taus)


class ArmModel(Protocol):
    """Anything that can draw i.i.d. (reward, cost) pairs."""

    def sample(self, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
        ...


@dataclass(frozen=True)
class InstanceSpec:
    """A full bandit instance: arms, grid, discount and objective."""

    arms: tuple[Any, ...]
    grid: ResourceGrid
    discount: DiscountSpec
    objective: Objective = MultiplicativeDiscount()

    def __post_init__(self) -> None:
        if len(self.arms) == 0:
            raise ConfigError("instance needs at least one arm")
        if self.grid.tau_max != self.discount.tau_max:
            raise ConfigError("grid and discount disagree on tau_max")

    @property
    def n(self) -> int:
        return len(self.arms)
