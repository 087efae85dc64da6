"""Episode runner, regret accounting, aggregation, and empirical tail audits.

Episodes are independent: each gets an environment stream and a policy
stream derived from its seed, so repetitions can run in worker processes
and still aggregate exactly as in serial execution. The fold over
repetitions always happens in repetition-index order.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ConfigError, DomainError, Feedback, InstanceSpec, mix64
from .envs import sample_episode
from .oracle import NuTable, concentration_bound, nu_table, true_mixed_moment
from .policies import PolicySpec, init_length, make_policy


@dataclass(frozen=True, eq=False)
class RunTrace:
    """One episode: per-round choices and regret, per-run tallies."""

    arms: np.ndarray
    taus: np.ndarray
    censored: np.ndarray
    rewards: np.ndarray
    inst_regret: np.ndarray
    cum_regret: np.ndarray
    play_counts: np.ndarray
    censored_share: float
    realized_total: float
    final_state: list | None = None

    @property
    def horizon(self) -> int:
        return self.arms.shape[0]


@dataclass(frozen=True, eq=False)
class Aggregate:
    """Per-policy mean regret curves with standard errors over repetitions."""

    labels: tuple[str, ...]
    horizon: int
    repetitions: int
    mean_cum_regret: np.ndarray
    stderr_cum_regret: np.ndarray
    censored_share: np.ndarray
    mean_realized_total: np.ndarray
    max_residual: np.ndarray
    table: NuTable
    final_states: dict | None = None

    def final_regret(self, label: str) -> tuple[float, float]:
        p = self.labels.index(label)
        return (
            float(self.mean_cum_regret[p, -1]),
            float(self.stderr_cum_regret[p, -1]),
        )


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything run_experiment needs; the CLI builds this from JSON."""

    instance: InstanceSpec
    policies: tuple[PolicySpec, ...]
    horizon: int
    repetitions: int = 20
    base_seed: int = 0
    oracle_method: str = "quadrature"
    oracle_nodes: int = 200
    oracle_samples: int = 1_000_000
    workers: int = 1
    output_dir: Path | None = None
    dump_state: bool = False

    def __post_init__(self):
        if not self.policies:
            raise ConfigError("at least one policy is required")
        if self.horizon < 1:
            raise ConfigError("horizon must be at least 1")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        labels = [spec.label for spec in self.policies]
        if len(set(labels)) != len(labels):
            raise ConfigError("policy labels must be unique; set label explicitly")
        need = max(init_length(s.kind, self.instance) for s in self.policies)
        if self.horizon < need:
            raise ConfigError(
                f"horizon {self.horizon} shorter than the {need}-round "
                "initialization of the configured policies"
            )


def run_episode(instance: InstanceSpec, spec: PolicySpec, horizon: int,
                table: NuTable, seed: int, keep_state: bool = False) -> RunTrace:
    """Play one policy for `horizon` rounds; fully deterministic given seed.

    The environment stream and the policy stream are split off the seed, so
    two policies on the same seed face identical outcome matrices.
    """
    n, m = instance.n, instance.grid.m
    if table.mu.shape != (n, m) or not np.allclose(table.taus,
                                                   instance.grid.as_array()):
        raise ConfigError("nu table does not match the instance")
    need = init_length(spec.kind, instance)
    if horizon < need:
        raise ConfigError(
            f"horizon {horizon} shorter than the {need}-round initialization "
            f"of {spec.kind}"
        )
    env_rng = np.random.default_rng(mix64(seed, 0))
    policy_rng = np.random.default_rng(mix64(seed, 1))
    rewards, costs = sample_episode(instance, env_rng, horizon)
    policy = make_policy(spec, instance, rng=policy_rng,
                         optimal_pair=(table.optimal_arm, table.optimal_tau))

    arms0 = np.empty(horizon, dtype=np.int64)
    tau_idx = np.empty(horizon, dtype=np.int64)
    censored = np.empty(horizon, dtype=bool)
    observed = np.empty(horizon, dtype=float)
    for t in range(horizon):
        action = policy.select()
        arm0, j = policy.pending_index
        r = rewards[t, arm0]
        c = costs[t, arm0]
        if c <= action.tau_prime:
            feedback = Feedback(censored=False, cost=float(c), reward=float(r))
            censored[t] = False
            observed[t] = r
        else:
            feedback = Feedback(censored=True)
            censored[t] = True
            observed[t] = 0.0
        policy.update(action, feedback)
        arms0[t] = arm0
        tau_idx[t] = j

    counts = np.zeros((n, m), dtype=np.int64)
    np.add.at(counts, (arms0, tau_idx), 1)
    inst_regret = table.gap[arms0, tau_idx]
    grid = instance.grid.as_array()
    return RunTrace(
        arms=arms0 + 1,
        taus=grid[tau_idx],
        censored=censored,
        rewards=observed,
        inst_regret=inst_regret,
        cum_regret=np.cumsum(inst_regret),
        play_counts=counts,
        censored_share=float(censored.mean()) if horizon else 0.0,
        realized_total=float(observed.sum()),
        final_state=policy.snapshot() if keep_state else None,
    )


def decomposition_check(trace: RunTrace, table: NuTable) -> float:
    """|R_T - sum over pairs of gap * play count|; exact up to accumulation."""
    total = float(trace.cum_regret[-1]) if trace.horizon else 0.0
    played = float(np.sum(trace.play_counts * table.gap))
    return abs(total - played)


def _episode_task(payload):
    instance, spec, horizon, table, seed, keep_state = payload
    return run_episode(instance, spec, horizon, table, seed, keep_state)


def _trace_rows(rep: int, trace: RunTrace):
    cum = trace.cum_regret
    for t in range(trace.horizon):
        yield (
            rep,
            t + 1,
            int(trace.arms[t]),
            float(trace.taus[t]),
            int(trace.censored[t]),
            float(trace.rewards[t]),
            float(trace.inst_regret[t]),
            float(cum[t]),
        )


def _resolve_table(config: ExperimentConfig) -> NuTable:
    out = config.output_dir
    if out is not None:
        path = Path(out) / "nu_table.json"
        if path.exists():
            table = NuTable.load(path)
            n, m = config.instance.n, config.instance.grid.m
            if table.mu.shape != (n, m) or not np.allclose(
                table.taus, config.instance.grid.as_array()
            ):
                raise ConfigError(f"existing {path} does not match the instance")
            return table
    table = nu_table(
        config.instance, config.oracle_method,
        nodes=config.oracle_nodes, samples=config.oracle_samples,
        seed=config.base_seed,
    )
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        table.save(Path(out) / "nu_table.json")
    return table


def run_experiment(config: ExperimentConfig, table: NuTable | None = None) -> Aggregate:
    """Run reps x policies episodes and fold them into mean/SE curves.

    Episode seeds are mix64(base_seed, policy index, repetition index).
    With workers > 1 the episodes run in a process pool; results are folded
    in submission order, so the aggregate matches serial execution exactly.
    A failed repetition aborts the experiment with its seed in the message.
    """
    if table is None:
        table = _resolve_table(config)
    out = Path(config.output_dir) if config.output_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    horizon, reps = config.horizon, config.repetitions
    n_pol = len(config.policies)
    payloads = []
    seeds = []
    for p, spec in enumerate(config.policies):
        for rep in range(reps):
            seed = mix64(config.base_seed, p, rep)
            keep = config.dump_state and rep == 0
            payloads.append((config.instance, spec, horizon, table, seed, keep))
            seeds.append((spec.label, rep, seed))

    sums = np.zeros((n_pol, horizon))
    sumsq = np.zeros((n_pol, horizon))
    censor = np.zeros(n_pol)
    realized = np.zeros(n_pol)
    residual = np.zeros(n_pol)
    states: dict = {}

    executor = ProcessPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    writer = None
    handle = None
    try:
        results = executor.map(_episode_task, payloads) if executor else map(_episode_task, payloads)
        it = iter(results)
        for idx in range(len(payloads)):
            label, rep, seed = seeds[idx]
            try:
                trace = next(it)
            except Exception as exc:
                raise RuntimeError(
                    f"repetition {rep} of policy {label!r} failed (seed {seed})"
                ) from exc
            p = idx // reps
            sums[p] += trace.cum_regret
            sumsq[p] += trace.cum_regret**2
            censor[p] += trace.censored_share
            realized[p] += trace.realized_total
            residual[p] = max(residual[p], decomposition_check(trace, table))
            if trace.final_state is not None:
                states[label] = trace.final_state
            if out is not None:
                if rep == 0:
                    if handle is not None:
                        handle.close()
                    handle = open(out / f"trace_{label}.csv", "w",
                                  encoding="utf-8", newline="")
                    writer = csv.writer(handle, lineterminator="\n")
                    writer.writerow(
                        ["rep", "round", "arm", "tau", "censored",
                         "reward", "inst_regret", "cum_regret"]
                    )
                writer.writerows(_trace_rows(rep, trace))
    finally:
        if handle is not None:
            handle.close()
        if executor is not None:
            executor.shutdown()

    mean = sums / reps
    if reps > 1:
        var = np.maximum(sumsq - reps * mean**2, 0.0) / (reps - 1)
        stderr = np.sqrt(var / reps)
    else:
        stderr = np.zeros_like(mean)
    agg = Aggregate(
        labels=tuple(s.label for s in config.policies),
        horizon=horizon,
        repetitions=reps,
        mean_cum_regret=mean,
        stderr_cum_regret=stderr,
        censored_share=censor / reps,
        mean_realized_total=realized / reps,
        max_residual=residual,
        table=table,
        final_states=states if config.dump_state else None,
    )
    if out is not None:
        _write_aggregate(out / "aggregate.csv", agg)
        _write_summary(out / "summary.json", config, agg)
        if config.dump_state:
            for label, state in states.items():
                (out / f"state_{label}.json").write_text(
                    json.dumps(state, indent=1), encoding="utf-8"
                )
    return agg


def _write_aggregate(path: Path, agg: Aggregate) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["round", "policy", "mean_cum_regret", "stderr"])
        for p, label in enumerate(agg.labels):
            mean = agg.mean_cum_regret[p]
            se = agg.stderr_cum_regret[p]
            writer.writerows(
                (t + 1, label, float(mean[t]), float(se[t]))
                for t in range(agg.horizon)
            )


def _write_summary(path: Path, config: ExperimentConfig, agg: Aggregate) -> None:
    doc = {
        "horizon": agg.horizon,
        "repetitions": agg.repetitions,
        "base_seed": config.base_seed,
        "optimal": {
            "arm": agg.table.optimal_arm,
            "tau": agg.table.optimal_tau,
            "nu_star": agg.table.nu_star,
        },
        "policies": [
            {
                "label": label,
                "final_regret_mean": float(agg.mean_cum_regret[p, -1]),
                "final_regret_stderr": float(agg.stderr_cum_regret[p, -1]),
                "mean_censored_share": float(agg.censored_share[p]),
                "mean_realized_total": float(agg.mean_realized_total[p]),
                "max_decomposition_residual": float(agg.max_residual[p]),
            }
            for p, label in enumerate(agg.labels)
        ],
    }
    path.write_text(json.dumps(doc, indent=1), encoding="utf-8")


def concentration_audit(arm_spec, tau_prime: float, alpha: float = 2.0,
                        t_check: int = 1000, runs: int = 10_000,
                        base_seed: int = 0) -> tuple[float, float, float]:
    """Empirical tail rates of the confidence radius against its bound.

    Each run forces t_check plays of the pair, forms the estimate, and flags
    deviations beyond sqrt(2 alpha ln t / t) in either direction. Under any
    positive discount weight the weight cancels from both sides, so the
    check runs on the mixed-moment scale. Returns (upper rate, lower rate,
    bound at (t_check, alpha)).
    """
    if not alpha > 1:
        raise DomainError("alpha must exceed 1")
    if t_check < 2:
        raise DomainError("t_check must be at least 2")
    if runs < 1:
        raise DomainError("runs must be at least 1")
    mu, _ = true_mixed_moment(arm_spec, tau_prime)
    radius = math.sqrt(2.0 * alpha * math.log(t_check) / t_check)
    upper = 0
    lower = 0
    for r in range(runs):
        rng = np.random.default_rng(mix64(base_seed, r))
        rew, cost = arm_spec.sample(rng, t_check)
        dev = float(np.mean(rew * (cost <= tau_prime))) - mu
        if dev > radius:
            upper += 1
        elif dev < -radius:
            lower += 1
    return upper / runs, lower / runs, concentration_bound(t_check, alpha)
