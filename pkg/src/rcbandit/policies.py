"""Action-selection policies over (arm, resource limit) pairs.

The optimism-based policies keep an index matrix of shape (n_arms, m) and
pick its argmax; ties break to the smallest resource limit, then the
smallest arm index, which keeps runs reproducible.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import (
    ActionPair,
    ConfigError,
    DomainError,
    Feedback,
    InstanceSpec,
    UsageError,
    objective_vectors,
)
from .estimators import (
    TS_INDICATORS,
    BetaPosterior,
    CensoredMomentEstimator,
    NaiveEstimator,
)

POLICY_KINDS = ("rcucb", "klrcucb", "ucb", "ts", "uniform_random", "fixed_oracle")


@dataclass(frozen=True)
class PolicySpec:
    """Declarative policy choice used by experiment configs.

    alpha drives the confidence radii of rcucb/ucb, c the exploration budget
    of klrcucb, prior and ts_indicator the Thompson sampling posterior.
    """

    kind: str
    label: str | None = None
    alpha: float = 2.0
    c: float = 3.0
    prior: tuple[float, float] = (1.0, 1.0)
    ts_indicator: str = "per_pair"

    def __post_init__(self) -> None:
        if self.kind not in POLICY_KINDS:
            raise ConfigError(f"unknown policy kind {self.kind!r}")
        if self.label is None:
            object.__setattr__(self, "label", self.kind)
        if self.kind in ("rcucb", "ucb"):
            if not self.alpha > 0:
                raise ConfigError("alpha must be positive")
            if self.alpha <= 1:
                warnings.warn(
                    f"{self.kind}: alpha={self.alpha} is outside the regime alpha > 1 "
                    "assumed by the regret and concentration guarantees",
                    UserWarning,
                    stacklevel=2,
                )
        if self.kind == "klrcucb" and self.c < 0:
            raise ConfigError("c must be non-negative")
        if self.kind == "ts":
            if not (self.prior[0] > 0 and self.prior[1] > 0):
                raise ConfigError("Beta prior parameters must be positive")
            if self.ts_indicator not in TS_INDICATORS:
                raise ConfigError(f"unknown TS indicator {self.ts_indicator!r}")


def init_length(kind: str, instance: InstanceSpec) -> int:
    """Number of prescribed initialization rounds before the index takes over."""
    if kind in ("rcucb", "klrcucb"):
        return instance.n
    if kind in ("ucb", "ts"):
        return instance.n * instance.grid.m
    return 0


def argmax_pair(index: np.ndarray) -> tuple[int, int]:
    """(arm0, tau_idx) of the largest entry of an (n, m) index matrix.

    Scanning the transpose row-major makes ties resolve to the smallest
    resource limit first and the smallest arm second.
    """
    flat = int(np.argmax(index.T))
    n = index.shape[0]
    return flat % n, flat // n


def kl_bernoulli(p: float, q: float) -> float:
    """KL divergence between Bernoulli(p) and Bernoulli(q), with 0*log 0 := 0.

    Endpoint q in {0, 1} gives +inf unless p sits on the same endpoint.
    """
    if not 0.0 <= p <= 1.0 or not 0.0 <= q <= 1.0:
        raise DomainError("p and q must lie in [0, 1]")
    return float(_kl_bernoulli_arr(np.asarray(p, dtype=float), np.asarray(q, dtype=float)))


def _kl_bernoulli_arr(p, q):
    with np.errstate(divide="ignore", invalid="ignore"):
        left = np.where(p > 0.0, p * np.log(p / q), 0.0)
        right = np.where(p < 1.0, (1.0 - p) * np.log((1.0 - p) / (1.0 - q)), 0.0)
    return left + right


def _exploration_budget(t: int, c: float) -> float:
    # ln ln t is negative for t < e; the budget is clamped at zero so the
    # index degenerates to mu_eff instead of going undefined
    return max(0.0, math.log(t) + c * math.log(math.log(t)))


def klucb_index(mu_eff: float, n: int, t: int, c: float) -> float:
    """Largest q in [mu_eff, 1] with n * d(mu_eff, q) <= ln t + c ln ln t.

    Bisection to absolute tolerance 1e-9.
    """
    if not 0.0 <= mu_eff <= 1.0:
        raise DomainError("mu_eff must lie in [0, 1]")
    if n < 1:
        raise DomainError("n must be >= 1")
    if t < 2:
        raise DomainError("t must be >= 2")
    if c < 0:
        raise DomainError("c must be non-negative")
    target = _exploration_budget(t, c) / n
    lo, hi = mu_eff, 1.0
    while hi - lo > 1e-9:
        mid = 0.5 * (lo + hi)
        if kl_bernoulli(mu_eff, mid) > target:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _klucb_index_matrix(mu_eff: np.ndarray, counts: np.ndarray, t: int, c: float) -> np.ndarray:
    """Vectorized bisection of klucb_index over all pairs (40 halvings < 1e-9)."""
    target = _exploration_budget(t, c) / np.maximum(counts, 1.0)
    lo = mu_eff.copy()
    hi = np.ones_like(mu_eff)
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        too_far = _kl_bernoulli_arr(mu_eff, mid) > target
        hi = np.where(too_far, mid, hi)
        lo = np.where(too_far, lo, mid)
    out = 0.5 * (lo + hi)
    return np.where(counts > 0, out, np.inf)


class Policy:
    """Base class: strict select/update alternation and round counting."""

    kind = "base"

    def __init__(self, instance: InstanceSpec):
        self.instance = instance
        self.grid = instance.grid
        self.t = 0
        self._pending: ActionPair | None = None
        self._pending_j = -1
        scale, offset = objective_vectors(instance.objective, instance.discount,
                                          instance.grid)
        self.scale = scale
        self.offset = offset

    def select(self) -> ActionPair:
        if self._pending is not None:
            raise UsageError("select called twice without an update in between")
        arm0, j = self._choose()
        action = ActionPair(arm=arm0 + 1, tau_prime=self.grid.points[j])
        self._pending = action
        self._pending_j = j
        return action

    @property
    def pending_index(self) -> tuple[int, int] | None:
        """(arm0, grid index) of the selection awaiting its update, if any."""
        if self._pending is None:
            return None
        return self._pending.arm - 1, self._pending_j

    def update(self, action: ActionPair, feedback: Feedback) -> None:
        if self._pending is None:
            raise UsageError("update called before select")
        if action != self._pending:
            raise UsageError("update does not match the pending selection")
        self._absorb(action.arm - 1, self._pending_j, feedback)
        self._pending = None
        self.t += 1

    def _choose(self) -> tuple[int, int]:
        raise NotImplementedError

    def _absorb(self, arm0: int, j: int, feedback: Feedback) -> None:
        pass

    def snapshot(self) -> list[dict]:
        """JSON-ready estimator state; empty for estimator-free policies."""
        return []


class RCUCBPolicy(Policy):
    """Optimistic index over all pairs, fed by the censored moment estimator.

    Index: scale * (mu_hat + sqrt(2 alpha ln t / N)) + offset, which under
    multiplicative discounting is gamma(tau') * mu_hat plus the equally
    discounted confidence radius. Rounds 1..n play (arm t, largest grid
    point), after which every cell has N >= 1. Cells with N = 0 get an
    infinite index.
    """

    kind = "rcucb"

    def __init__(self, instance: InstanceSpec, alpha: float = 2.0):
        super().__init__(instance)
        self.alpha = alpha
        self.estimator = CensoredMomentEstimator(instance.n, instance.grid)

    def index_matrix(self) -> np.ndarray:
        t = self.t + 1
        counts = self.estimator.counts
        mu = self.estimator.mean_matrix()
        with np.errstate(divide="ignore", invalid="ignore"):
            radius = np.sqrt(2.0 * self.alpha * math.log(t) / counts)
            vals = self.scale * (mu + radius) + self.offset
        return np.where(counts > 0, vals, np.inf)

    def _choose(self) -> tuple[int, int]:
        t = self.t + 1
        if t <= self.instance.n:
            return t - 1, self.grid.m - 1
        return argmax_pair(self.index_matrix())

    def _absorb(self, arm0, j, feedback):
        self.estimator.update_by_index(arm0, j + 1, feedback)

    def snapshot(self):
        return self.estimator.snapshot()


class KLRCUCBPolicy(Policy):
    """Divergence-based variant of the censored-estimator policy.

    Each pair's index is the largest q with N * d(mu_eff, q) below the
    exploration budget ln t + c ln ln t, where mu_eff is the pair's objective
    value of mu_hat clipped to [0, 1] (for multiplicative discounting this is
    exactly gamma(tau') * mu_hat). Same initialization as the plain policy.
    """

    kind = "klrcucb"

    def __init__(self, instance: InstanceSpec, c: float = 3.0):
        super().__init__(instance)
        self.c = c
        self.estimator = CensoredMomentEstimator(instance.n, instance.grid)

    def index_matrix(self) -> np.ndarray:
        t = self.t + 1
        mu_eff = np.clip(self.scale * self.estimator.mean_matrix() + self.offset, 0.0, 1.0)
        return _klucb_index_matrix(mu_eff, self.estimator.counts, t, self.c)

    def _choose(self) -> tuple[int, int]:
        t = self.t + 1
        if t <= self.instance.n:
            return t - 1, self.grid.m - 1
        return argmax_pair(self.index_matrix())

    def _absorb(self, arm0, j, feedback):
        self.estimator.update_by_index(arm0, j + 1, feedback)

    def snapshot(self):
        return self.estimator.snapshot()


class ModifiedUCBPolicy(Policy):
    """Pairwise UCB on the naive estimator.

    The first n*m rounds sweep every pair once (arm-major, ascending tau');
    afterwards the index is scale * (mu_tilde + sqrt(alpha ln t / (2 T)))
    + offset, with infinite index for unplayed pairs.
    """

    kind = "ucb"

    def __init__(self, instance: InstanceSpec, alpha: float = 2.0):
        super().__init__(instance)
        self.alpha = alpha
        self.estimator = NaiveEstimator(instance.n, instance.grid)

    def index_matrix(self) -> np.ndarray:
        t = self.t + 1
        counts = self.estimator.counts
        mu = self.estimator.mean_matrix()
        with np.errstate(divide="ignore", invalid="ignore"):
            radius = np.sqrt(self.alpha * math.log(t) / (2.0 * counts))
            vals = self.scale * (mu + radius) + self.offset
        return np.where(counts > 0, vals, np.inf)

    def _choose(self) -> tuple[int, int]:
        cursor = self.t
        m = self.grid.m
        if cursor < self.instance.n * m:
            return cursor // m, cursor % m
        return argmax_pair(self.index_matrix())

    def _absorb(self, arm0, j, feedback):
        self.estimator.update_by_index(arm0, j, feedback)

    def snapshot(self):
        return self.estimator.snapshot()


class ModifiedTSPolicy(Policy):
    """Thompson sampling over pairs with the shared-information posterior.

    After the same full sweep as the UCB baseline, each round draws
    theta ~ Beta(a0 + S, b0 + F) for every pair (arm-major order from the
    policy RNG) and plays the argmax of scale * theta + offset.
    """

    kind = "ts"

    def __init__(self, instance: InstanceSpec, rng: np.random.Generator,
                 prior: tuple[float, float] = (1.0, 1.0), indicator: str = "per_pair"):
        super().__init__(instance)
        self.rng = rng
        self.estimator = BetaPosterior(instance.n, instance.grid, prior=prior,
                                       indicator=indicator)

    def _choose(self) -> tuple[int, int]:
        cursor = self.t
        m = self.grid.m
        if cursor < self.instance.n * m:
            return cursor // m, cursor % m
        a, b = self.estimator.posterior_params()
        theta = self.rng.beta(a, b)
        return argmax_pair(self.scale * theta + self.offset)

    def _absorb(self, arm0, j, feedback):
        self.estimator.update_by_index(arm0, j + 1, feedback, self.rng)

    def snapshot(self):
        return self.estimator.snapshot()


class UniformRandomPolicy(Policy):
    """Plays a uniformly random pair every round; a regret-curve anchor."""

    kind = "uniform_random"

    def __init__(self, instance: InstanceSpec, rng: np.random.Generator):
        super().__init__(instance)
        self.rng = rng

    def _choose(self) -> tuple[int, int]:
        flat = int(self.rng.integers(self.instance.n * self.grid.m))
        return flat // self.grid.m, flat % self.grid.m


class FixedOraclePolicy(Policy):
    """Always plays one fixed pair (normally the oracle optimum)."""

    kind = "fixed_oracle"

    def __init__(self, instance: InstanceSpec, arm: int, tau_prime: float):
        super().__init__(instance)
        self._arm0 = arm - 1
        self._j = instance.grid.index_of(tau_prime)
        if not 1 <= arm <= instance.n:
            raise ConfigError(f"arm {arm} outside 1..{instance.n}")

    def _choose(self) -> tuple[int, int]:
        return self._arm0, self._j


def make_policy(spec: PolicySpec, instance: InstanceSpec,
                rng: np.random.Generator | None = None,
                optimal_pair: tuple[int, float] | None = None) -> Policy:
    """Instantiate the policy described by spec.

    rng is required by the stochastic policies (ts, uniform_random);
    optimal_pair = (arm, tau') is required by fixed_oracle.
    """
    if spec.kind == "rcucb":
        return RCUCBPolicy(instance, alpha=spec.alpha)
    if spec.kind == "klrcucb":
        return KLRCUCBPolicy(instance, c=spec.c)
    if spec.kind == "ucb":
        return ModifiedUCBPolicy(instance, alpha=spec.alpha)
    if spec.kind == "ts":
        if rng is None:
            raise ConfigError("ts policy needs an RNG")
        return ModifiedTSPolicy(instance, rng, prior=spec.prior,
                                indicator=spec.ts_indicator)
    if spec.kind == "uniform_random":
        if rng is None:
            raise ConfigError("uniform_random policy needs an RNG")
        return UniformRandomPolicy(instance, rng)
    if spec.kind == "fixed_oracle":
        if optimal_pair is None:
            raise ConfigError("fixed_oracle policy needs the oracle's optimal pair")
        return FixedOraclePolicy(instance, arm=optimal_pair[0], tau_prime=optimal_pair[1])
    raise ConfigError(f"unknown policy kind {spec.kind!r}")
