"""Episode runner, experiment aggregation, and tail-audit behavior."""

import json

import numpy as np
import pytest

from rcbandit.core import (
    ConfigError,
    DiscountSpec,
    DomainError,
    InstanceSpec,
    build_grid,
    mix64,
)
from rcbandit.envs import DegenerateArm, GaussianArm, UniformCostArm
from rcbandit.oracle import concentration_bound, nu_table
from rcbandit.policies import PolicySpec
from rcbandit.sim import (
    Aggregate,
    ExperimentConfig,
    RunTrace,
    concentration_audit,
    decomposition_check,
    run_episode,
    run_experiment,
)

from conftest import analytic_instance, two_degenerate_instance

UNIFORM_MEAN_GAP = 0.50625
UNIFORM_TOL = 0.00736  # 3 * std(gap) / sqrt(10^4)


def _traces_equal(a: RunTrace, b: RunTrace) -> bool:
    return (
        np.array_equal(a.arms, b.arms)
        and np.array_equal(a.taus, b.taus)
        and np.array_equal(a.censored, b.censored)
        and np.array_equal(a.rewards, b.rewards)
        and np.array_equal(a.cum_regret, b.cum_regret)
    )


def test_identical_seeds_identical_traces():
    inst = analytic_instance()
    tab = nu_table(inst)
    spec = PolicySpec("rcucb")
    a = run_episode(inst, spec, 500, tab, seed=42)
    b = run_episode(inst, spec, 500, tab, seed=42)
    c = run_episode(inst, spec, 500, tab, seed=43)
    assert _traces_equal(a, b)
    assert not _traces_equal(a, c)


def test_single_pair_instance_has_zero_regret():
    inst = InstanceSpec(
        arms=(DegenerateArm(r0=0.7, c0=0.1),),
        grid=build_grid(1, 1.0),
        discount=DiscountSpec("linear"),
    )
    tab = nu_table(inst)
    trace = run_episode(inst, PolicySpec("rcucb"), 200, tab, seed=1)
    assert np.all(trace.cum_regret == 0.0)
    assert np.all(trace.inst_regret == 0.0)


def test_fixed_oracle_has_zero_regret():
    inst = analytic_instance()
    tab = nu_table(inst)
    trace = run_episode(inst, PolicySpec("fixed_oracle"), 300, tab, seed=9)
    assert np.all(trace.cum_regret == 0.0)
    assert np.all(trace.arms == tab.optimal_arm)
    assert np.all(trace.taus == tab.optimal_tau)


def test_uniform_random_mean_regret_matches_gap_average():
    inst = two_degenerate_instance()
    tab = nu_table(inst)
    trace = run_episode(inst, PolicySpec("uniform_random"), 10_000, tab, seed=12)
    per_round = trace.cum_regret[-1] / trace.horizon
    assert abs(per_round - UNIFORM_MEAN_GAP) <= UNIFORM_TOL


def test_trace_invariants():
    inst = analytic_instance()
    tab = nu_table(inst)
    for kind in ("rcucb", "klrcucb", "ucb", "ts", "uniform_random"):
        trace = run_episode(inst, PolicySpec(kind), 400, tab, seed=77)
        assert trace.horizon == 400
        assert np.all(np.diff(trace.cum_regret) >= 0)
        assert np.all(trace.inst_regret >= 0)
        assert trace.play_counts.sum() == 400
        assert 0.0 <= trace.censored_share <= 1.0
        assert trace.realized_total == pytest.approx(trace.rewards.sum())
        assert decomposition_check(trace, tab) <= 400 * 1e-9


def test_decomposition_empty_and_all_optimal():
    inst = two_degenerate_instance()
    tab = nu_table(inst)
    empty = run_episode(inst, PolicySpec("uniform_random"), 0, tab, seed=3)
    assert empty.horizon == 0
    assert decomposition_check(empty, tab) == 0.0
    optimal = run_episode(inst, PolicySpec("fixed_oracle"), 250, tab, seed=3)
    assert decomposition_check(optimal, tab) == 0.0
    assert optimal.cum_regret[-1] == 0.0


def test_run_episode_horizon_validation():
    inst = analytic_instance()
    tab = nu_table(inst)
    with pytest.raises(ConfigError, match="initialization"):
        run_episode(inst, PolicySpec("ucb"), 5, tab, seed=0)


def test_run_episode_table_mismatch():
    inst = analytic_instance()
    other = nu_table(two_degenerate_instance())
    with pytest.raises(ConfigError, match="does not match"):
        run_episode(inst, PolicySpec("rcucb"), 100, other, seed=0)


def _small_config(**overrides):
    inst = analytic_instance()
    base = dict(
        instance=inst,
        policies=(PolicySpec("rcucb"), PolicySpec("ucb"), PolicySpec("ts")),
        horizon=150,
        repetitions=3,
        base_seed=5,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def test_config_validation():
    inst = analytic_instance()
    with pytest.raises(ConfigError, match="unique"):
        ExperimentConfig(
            instance=inst,
            policies=(PolicySpec("rcucb"), PolicySpec("rcucb")),
            horizon=100,
        )
    with pytest.raises(ConfigError, match="initialization"):
        _small_config(horizon=4)
    with pytest.raises(ConfigError, match="repetitions"):
        _small_config(repetitions=0)
    with pytest.raises(ConfigError, match="policy"):
        _small_config(policies=())


def test_single_repetition_aggregate():
    cfg = _small_config(repetitions=1, policies=(PolicySpec("rcucb"),))
    agg = run_experiment(cfg)
    trace = run_episode(cfg.instance, cfg.policies[0], cfg.horizon, agg.table,
                        seed=mix64(5, 0, 0))
    assert np.array_equal(agg.mean_cum_regret[0], trace.cum_regret)
    assert np.all(agg.stderr_cum_regret == 0.0)


def test_parallel_matches_serial():
    serial = run_experiment(_small_config(workers=1))
    parallel = run_experiment(_small_config(workers=2))
    assert np.array_equal(serial.mean_cum_regret, parallel.mean_cum_regret)
    assert np.array_equal(serial.stderr_cum_regret, parallel.stderr_cum_regret)
    assert np.array_equal(serial.censored_share, parallel.censored_share)
    assert serial.labels == parallel.labels


def test_aggregate_shapes_and_accessor():
    agg = run_experiment(_small_config())
    assert agg.labels == ("rcucb", "ucb", "ts")
    assert agg.mean_cum_regret.shape == (3, 150)
    assert np.all(agg.stderr_cum_regret >= 0)
    assert np.all(agg.max_residual <= 150 * 1e-9)
    mean, se = agg.final_regret("rcucb")
    assert mean == pytest.approx(float(agg.mean_cum_regret[0, -1]))
    assert se >= 0


def test_failed_repetition_names_its_seed():
    from rcbandit.core import mix64

    bad = InstanceSpec(
        arms=(GaussianArm(mean=(50.0, 50.0), x=0.0, sigma=1e-6),),
        grid=build_grid(2, 1.0),
        discount=DiscountSpec("linear"),
    )
    tab = nu_table(InstanceSpec(
        arms=(DegenerateArm(r0=0.5, c0=0.5),),
        grid=build_grid(2, 1.0),
        discount=DiscountSpec("linear"),
    ))
    cfg = ExperimentConfig(instance=bad, policies=(PolicySpec("uniform_random"),),
                           horizon=10, repetitions=1, base_seed=99)
    seed = mix64(99, 0, 0)
    with pytest.raises(RuntimeError, match=str(seed)):
        run_experiment(cfg, table=tab)


def test_persistence_round_trip(tmp_path):
    out = tmp_path / "exp"
    cfg = _small_config(output_dir=out, dump_state=True,
                        policies=(PolicySpec("rcucb"), PolicySpec("ucb")))
    agg = run_experiment(cfg)

    table_doc = json.loads((out / "nu_table.json").read_text())
    assert len(table_doc["pairs"]) == 12

    for label in agg.labels:
        lines = (out / f"trace_{label}.csv").read_text().splitlines()
        assert lines[0] == "rep,round,arm,tau,censored,reward,inst_regret,cum_regret"
        assert len(lines) == 1 + cfg.repetitions * cfg.horizon
        state = json.loads((out / f"state_{label}.json").read_text())
        assert len(state) == 12

    agg_lines = (out / "aggregate.csv").read_text().splitlines()
    assert agg_lines[0] == "round,policy,mean_cum_regret,stderr"
    assert len(agg_lines) == 1 + 2 * cfg.horizon

    summary = json.loads((out / "summary.json").read_text())
    assert summary["horizon"] == 150
    assert {p["label"] for p in summary["policies"]} == {"rcucb", "ucb"}
    assert all(p["max_decomposition_residual"] <= 150 * 1e-9
               for p in summary["policies"])

    before = {f.name: f.read_bytes() for f in out.iterdir()}
    run_experiment(cfg)
    after = {f.name: f.read_bytes() for f in out.iterdir()}
    assert before == after


def test_stale_table_file_rejected(tmp_path):
    out = tmp_path / "exp"
    out.mkdir()
    nu_table(two_degenerate_instance()).save(out / "nu_table.json")
    cfg = _small_config(output_dir=out)
    with pytest.raises(ConfigError, match="does not match"):
        run_experiment(cfg)


def test_audit_degenerate_arm_is_exact():
    upper, lower, bound = concentration_audit(
        DegenerateArm(r0=0.6, c0=0.3), 0.5, alpha=2.0, t_check=50, runs=40
    )
    assert upper == 0.0
    assert lower == 0.0
    assert bound == concentration_bound(50, 2.0)


def test_audit_gaussian_small_run_passes():
    arm = GaussianArm(mean=(0.6, 0.45), x=0.2, sigma=0.1)
    runs = 300
    upper, lower, bound = concentration_audit(arm, 0.5, alpha=2.0,
                                              t_check=200, runs=runs)
    slack = 3.0 * np.sqrt(bound * (1.0 - bound) / runs)
    assert upper <= bound + slack
    assert lower <= bound + slack


def test_audit_doubling_alpha_weakly_decreases_rates():
    # Values are 0.95 * Bernoulli(0.1): two hits in two draws beat the
    # alpha=1.01 radius (0.837) but not the doubled one (1.18).
    arm = UniformCostArm(reward_mean=0.95)
    u1, l1, _ = concentration_audit(arm, 0.1, alpha=1.01, t_check=2,
                                    runs=2000, base_seed=7)
    u2, l2, _ = concentration_audit(arm, 0.1, alpha=2.02, t_check=2,
                                    runs=2000, base_seed=7)
    assert u1 > 0
    assert u2 <= u1
    assert l2 <= l1


def test_audit_validation():
    arm = DegenerateArm(r0=0.5, c0=0.5)
    with pytest.raises(DomainError):
        concentration_audit(arm, 0.5, alpha=1.0)
    with pytest.raises(DomainError):
        concentration_audit(arm, 0.5, t_check=1)
    with pytest.raises(DomainError):
        concentration_audit(arm, 0.5, runs=0)
