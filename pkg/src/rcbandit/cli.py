"""Command line: config ingestion, runs, oracle tables, audits, SVG plots.

Configs are JSON. Bundled instance files (``paper_synthetic_m10.json``,
``paper_synthetic_m50.json``, ``paper_synthetic_m100.json``) resolve by
name when no file of that name exists on disk.

Exit codes: 0 success, 1 runtime failure (including audit FAIL), 2 invalid
input.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .core import (
    AdditiveCost,
    ConfigError,
    DISCOUNT_KINDS,
    DiscountSpec,
    DomainError,
    InstanceSpec,
    MultiplicativeDiscount,
    ResourceGrid,
    build_grid,
)
from .envs import (
    DegenerateArm,
    GaussianArm,
    REPLAY_MODES,
    TraceArm,
    UniformCostArm,
    trace_env_load,
)
from .oracle import nu_table
from .policies import POLICY_KINDS, PolicySpec
from .sim import ExperimentConfig, concentration_audit, run_experiment

ARM_KINDS = ("gaussian", "degenerate", "uniform_cost", "trace")
OBJECTIVE_KINDS = ("multiplicative", "additive_cost")


def _need(obj: dict, key: str, where: str):
    if key not in obj:
        raise ConfigError(f"{where}.{key}: required field is missing")
    return obj[key]


def _parse_arm(obj: dict, where: str, base_dir: Path):
    kind = _need(obj, "kind", where)
    if kind == "gaussian":
        mean = _need(obj, "mean", where)
        if not (isinstance(mean, list) and len(mean) == 2):
            raise ConfigError(f"{where}.mean: expected [reward_mean, cost_mean]")
        return GaussianArm(mean=(float(mean[0]), float(mean[1])),
                           x=float(_need(obj, "x", where)),
                           sigma=float(_need(obj, "sigma", where)))
    if kind == "degenerate":
        return DegenerateArm(r0=float(_need(obj, "reward", where)),
                             c0=float(_need(obj, "cost", where)))
    if kind == "uniform_cost":
        return UniformCostArm(reward_mean=float(_need(obj, "reward_mean", where)))
    if kind == "trace":
        replay = obj.get("replay", "sample")
        if replay not in REPLAY_MODES:
            raise ConfigError(f"{where}.replay: must be one of {REPLAY_MODES}")
        path = Path(_need(obj, "path", where))
        if not path.is_absolute():
            path = base_dir / path
        arms = trace_env_load(path, replay=replay)
        idx = int(obj.get("arm", 1))
        if not 1 <= idx <= len(arms):
            raise ConfigError(
                f"{where}.arm: trace file holds arms 1..{len(arms)}, got {idx}"
            )
        return arms[idx - 1]
    raise ConfigError(f"{where}.kind: unknown arm kind {kind!r}")


def _parse_instance(obj: dict, base_dir: Path) -> InstanceSpec:
    tau_max = float(obj.get("tau_max", 1.0))
    if "grid_m" in obj and "grid_points" in obj:
        raise ConfigError("instance: give grid_m or grid_points, not both")
    if "grid_m" in obj:
        grid = build_grid(int(obj["grid_m"]), tau_max)
    elif "grid_points" in obj:
        grid = ResourceGrid(tuple(float(p) for p in obj["grid_points"]), tau_max)
    else:
        raise ConfigError("instance.grid_m: required field is missing")

    disc_obj = _need(obj, "discount", "instance")
    kind = _need(disc_obj, "kind", "instance.discount")
    if kind not in DISCOUNT_KINDS:
        raise ConfigError(f"instance.discount.kind: unknown kind {kind!r}")
    discount = DiscountSpec(
        kind, tau_max=tau_max,
        k=float(disc_obj["k"]) if "k" in disc_obj else None,
        rho=float(disc_obj["rho"]) if "rho" in disc_obj else None,
    )

    objv = obj.get("objective", {"kind": "multiplicative"})
    okind = _need(objv, "kind", "instance.objective")
    if okind == "multiplicative":
        objective = MultiplicativeDiscount()
    elif okind == "additive_cost":
        objective = AdditiveCost(scale=float(objv.get("scale", 1.0)),
                                 power=float(objv.get("power", 1.0)))
    else:
        raise ConfigError(f"instance.objective.kind: unknown kind {okind!r}")

    arms_obj = _need(obj, "arms", "instance")
    if not isinstance(arms_obj, list) or not arms_obj:
        raise ConfigError("instance.arms: expected a non-empty list")
    arms = tuple(
        _parse_arm(a, f"instance.arms[{i}]", base_dir)
        for i, a in enumerate(arms_obj)
    )
    return InstanceSpec(arms=arms, grid=grid, discount=discount,
                        objective=objective)


def _parse_policy(obj: dict, where: str) -> PolicySpec:
    kind = _need(obj, "kind", where)
    if kind not in POLICY_KINDS:
        raise ConfigError(f"{where}.kind: unknown policy kind {kind!r}")
    kwargs = {}
    if "label" in obj:
        kwargs["label"] = str(obj["label"])
    if "alpha" in obj:
        kwargs["alpha"] = float(obj["alpha"])
    if "c" in obj:
        kwargs["c"] = float(obj["c"])
    if "prior" in obj:
        prior = obj["prior"]
        if not (isinstance(prior, list) and len(prior) == 2):
            raise ConfigError(f"{where}.prior: expected [a, b]")
        kwargs["prior"] = (float(prior[0]), float(prior[1]))
    if "indicator" in obj:
        kwargs["ts_indicator"] = str(obj["indicator"])
    return PolicySpec(kind, **kwargs)


def config_from_dict(doc: dict, base_dir: Path | None = None) -> ExperimentConfig:
    """Build a validated ExperimentConfig from a decoded JSON document."""
    if base_dir is None:
        base_dir = Path.cwd()
    instance = _parse_instance(_need(doc, "instance", "config"), base_dir)
    pol_obj = _need(doc, "policies", "config")
    if not isinstance(pol_obj, list) or not pol_obj:
        raise ConfigError("policies: expected a non-empty list")
    policies = tuple(
        _parse_policy(p, f"policies[{i}]") for i, p in enumerate(pol_obj)
    )
    oracle = doc.get("oracle", {})
    method = oracle.get("method", "quadrature")
    if method not in ("quadrature", "monte_carlo"):
        raise ConfigError(f"oracle.method: unknown method {method!r}")
    out = doc.get("output_dir")
    return ExperimentConfig(
        instance=instance,
        policies=policies,
        horizon=int(_need(doc, "horizon", "config")),
        repetitions=int(doc.get("repetitions", 20)),
        base_seed=int(doc.get("base_seed", 0)),
        oracle_method=method,
        oracle_nodes=int(oracle.get("nodes", 200)),
        oracle_samples=int(oracle.get("samples", 1_000_000)),
        workers=int(doc.get("workers", 1)),
        output_dir=Path(out) if out is not None else None,
        dump_state=bool(doc.get("dump_state", False)),
    )


def _arm_to_dict(arm) -> dict:
    if isinstance(arm, GaussianArm):
        return {"kind": "gaussian", "mean": [arm.mean[0], arm.mean[1]],
                "x": arm.x, "sigma": arm.sigma}
    if isinstance(arm, DegenerateArm):
        return {"kind": "degenerate", "reward": arm.r0, "cost": arm.c0}
    if isinstance(arm, UniformCostArm):
        return {"kind": "uniform_cost", "reward_mean": arm.reward_mean}
    if isinstance(arm, TraceArm):
        if arm.source is None:
            raise ConfigError("trace arm has no source path to serialize")
        return {"kind": "trace", "path": arm.source, "replay": arm.replay,
                "arm": arm.source_arm}
    raise ConfigError(f"cannot serialize arm of type {type(arm).__name__}")


def config_to_dict(config: ExperimentConfig) -> dict:
    """Inverse of config_from_dict: parse(serialize(cfg)) == cfg."""
    inst = config.instance
    disc = {"kind": inst.discount.kind}
    if inst.discount.k is not None:
        disc["k"] = inst.discount.k
    if inst.discount.rho is not None:
        disc["rho"] = inst.discount.rho
    if isinstance(inst.objective, AdditiveCost):
        objective = {"kind": "additive_cost", "scale": inst.objective.scale,
                     "power": inst.objective.power}
    else:
        objective = {"kind": "multiplicative"}
    policies = []
    for spec in config.policies:
        entry = {"kind": spec.kind, "label": spec.label, "alpha": spec.alpha,
                 "c": spec.c, "prior": list(spec.prior),
                 "indicator": spec.ts_indicator}
        policies.append(entry)
    doc = {
        "instance": {
            "tau_max": inst.grid.tau_max,
            "grid_points": list(inst.grid.points),
            "discount": disc,
            "objective": objective,
            "arms": [_arm_to_dict(a) for a in inst.arms],
        },
        "policies": policies,
        "horizon": config.horizon,
        "repetitions": config.repetitions,
        "base_seed": config.base_seed,
        "oracle": {"method": config.oracle_method, "nodes": config.oracle_nodes,
                   "samples": config.oracle_samples},
        "workers": config.workers,
        "dump_state": config.dump_state,
    }
    if config.output_dir is not None:
        doc["output_dir"] = str(config.output_dir)
    return doc


def _locate_config(name: str) -> tuple[str, Path]:
    """Return (json text, base dir). Falls back to packaged configs."""
    path = Path(name)
    if path.is_file():
        return path.read_text(encoding="utf-8"), path.parent
    packaged = resources.files("rcbandit").joinpath("configs")
    for candidate in (name, f"{name}.json"):
        entry = packaged.joinpath(candidate)
        if entry.is_file():
            return entry.read_text(encoding="utf-8"), Path.cwd()
    raise ConfigError(f"config not found: {name}")


def load_config(name: str) -> ExperimentConfig:
    text, base_dir = _locate_config(name)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{name}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{name}: top-level JSON value must be an object")
    return config_from_dict(doc, base_dir)


def _apply_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    changes = {}
    if getattr(args, "reps", None) is not None:
        changes["repetitions"] = args.reps
    if getattr(args, "seed", None) is not None:
        changes["base_seed"] = args.seed
    if getattr(args, "out_dir", None) is not None:
        changes["output_dir"] = Path(args.out_dir)
    if getattr(args, "dump_state", False):
        changes["dump_state"] = True
    if changes:
        config = dataclasses.replace(config, **changes)
    return config


def _require_output_dir(config: ExperimentConfig) -> ExperimentConfig:
    if config.output_dir is None:
        raise ConfigError(
            "no output directory: set output_dir in the config or pass --out-dir"
        )
    return config


def cmd_run(args) -> int:
    config = _require_output_dir(_apply_overrides(load_config(args.config), args))
    agg = run_experiment(config)
    for p, label in enumerate(agg.labels):
        mean, se = agg.final_regret(label)
        print(
            f"{label}: final regret {mean:.4f} +/- {se:.4f}, "
            f"censored share {agg.censored_share[p]:.4f}"
        )
    print(f"wrote {config.output_dir}")
    return 0


def cmd_oracle(args) -> int:
    config = _require_output_dir(_apply_overrides(load_config(args.config), args))
    table = nu_table(
        config.instance, config.oracle_method,
        nodes=config.oracle_nodes, samples=config.oracle_samples,
        seed=config.base_seed,
    )
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    table.save(out / "nu_table.json")
    print(f"optimal pair: arm {table.optimal_arm}, tau {table.optimal_tau:g}")
    print(f"nu_star: {table.nu_star:.10g}")
    print(f"min positive gap: {table.min_positive_gap():.10g}")
    print(f"wrote {out / 'nu_table.json'}")
    return 0


def cmd_audit(args) -> int:
    if args.alpha <= 1.0:
        raise ConfigError("--alpha must exceed 1")
    if args.t < 2:
        raise ConfigError("--t must be at least 2")
    if args.runs < 1:
        raise ConfigError("--runs must be at least 1")
    config = _apply_overrides(load_config(args.config), args)
    arm = config.instance.arms[0]
    all_pass = True
    for tau in config.instance.grid.points:
        upper, lower, bound = concentration_audit(
            arm, tau, alpha=args.alpha, t_check=args.t, runs=args.runs,
            base_seed=config.base_seed,
        )
        if bound >= 1.0:
            ok = True
        else:
            slack = 3.0 * math.sqrt(bound * (1.0 - bound) / args.runs)
            ok = upper <= bound + slack and lower <= bound + slack
        all_pass = all_pass and ok
        print(
            f"tau={tau:g} upper={upper:.6g} lower={lower:.6g} "
            f"bound={bound:.6g} {'PASS' if ok else 'FAIL'}"
        )
    return 0 if all_pass else 1


PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

_W, _H = 800, 500
_ML, _MR, _MT, _MB = 70, 160, 20, 50


def _read_aggregate(path: str) -> dict[str, tuple[list, list, list]]:
    """aggregate.csv -> {policy: (rounds, means, stderrs)} in file order."""
    curves: dict[str, tuple[list, list, list]] = {}
    try:
        with open(path, newline="", encoding="utf-8") as handle:
            reader = csv.reader(handle)
            header = next(reader, None)
            if header != ["round", "policy", "mean_cum_regret", "stderr"]:
                raise ConfigError(f"{path}: unexpected header {header}")
            for lineno, row in enumerate(reader, start=2):
                if len(row) != 4:
                    raise ConfigError(f"{path}:{lineno}: expected 4 columns")
                try:
                    t = int(row[0])
                    mean = float(row[2])
                    se = float(row[3])
                except ValueError as exc:
                    raise ConfigError(f"{path}:{lineno}: {exc}") from exc
                rounds, means, ses = curves.setdefault(row[1], ([], [], []))
                rounds.append(t)
                means.append(mean)
                ses.append(se)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if not curves:
        raise ConfigError(f"{path}: no data rows")
    return curves


def _downsample(xs: np.ndarray, ys: np.ndarray, limit: int = 1000):
    if xs.size <= limit:
        return xs, ys
    idx = np.unique(np.linspace(0, xs.size - 1, limit).round().astype(int))
    return xs[idx], ys[idx]


def _polyline(xs, ys, color: str, dashed: bool) -> str:
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    dash = ' stroke-dasharray="5 4"' if dashed else ""
    width = "1" if dashed else "2"
    return (
        f'<polyline fill="none" stroke="{color}" stroke-width="{width}"'
        f'{dash} points="{pts}"/>'
    )


def _ticks(lo: float, hi: float, count: int = 5):
    if hi <= lo:
        return [lo]
    return list(np.linspace(lo, hi, count))


def render_svg(curves: dict[str, tuple[list, list, list]]) -> str:
    """Mean curves (solid) with mean +/- SE bands (dashed), axes, legend."""
    x_lo = min(min(r) for r, _, _ in curves.values())
    x_hi = max(max(r) for r, _, _ in curves.values())
    y_lo = min(
        min(m - s for m, s in zip(means, ses))
        for _, means, ses in curves.values()
    )
    y_hi = max(
        max(m + s for m, s in zip(means, ses))
        for _, means, ses in curves.values()
    )
    pad = 0.05 * (y_hi - y_lo) if y_hi > y_lo else 1.0
    y_lo -= pad
    y_hi += pad
    x_span = max(x_hi - x_lo, 1e-12)
    y_span = max(y_hi - y_lo, 1e-12)
    plot_w = _W - _ML - _MR
    plot_h = _H - _MT - _MB

    def sx(x):
        return _ML + (np.asarray(x, dtype=float) - x_lo) / x_span * plot_w

    def sy(y):
        return _MT + (y_hi - np.asarray(y, dtype=float)) / y_span * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
        f'<line x1="{_ML}" y1="{_MT + plot_h}" x2="{_ML + plot_w}" '
        f'y2="{_MT + plot_h}" stroke="black"/>',
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_MT + plot_h}" '
        f'stroke="black"/>',
    ]
    for tx in _ticks(x_lo, x_hi):
        px = float(sx(tx))
        parts.append(
            f'<line x1="{px:.2f}" y1="{_MT + plot_h}" x2="{px:.2f}" '
            f'y2="{_MT + plot_h + 5}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{px:.2f}" y="{_MT + plot_h + 20}" font-size="12" '
            f'text-anchor="middle">{tx:g}</text>'
        )
    for ty in _ticks(y_lo, y_hi):
        py = float(sy(ty))
        parts.append(
            f'<line x1="{_ML - 5}" y1="{py:.2f}" x2="{_ML}" y2="{py:.2f}" '
            f'stroke="black"/>'
        )
        parts.append(
            f'<text x="{_ML - 8}" y="{py + 4:.2f}" font-size="12" '
            f'text-anchor="end">{ty:.4g}</text>'
        )
    parts.append(
        f'<text x="{_ML + plot_w / 2:.2f}" y="{_H - 10}" font-size="14" '
        f'text-anchor="middle">round</text>'
    )
    parts.append(
        f'<text x="18" y="{_MT + plot_h / 2:.2f}" font-size="14" '
        f'text-anchor="middle" transform="rotate(-90 18 {_MT + plot_h / 2:.2f})">'
        "mean cumulative regret</text>"
    )

    for i, (label, (rounds, means, ses)) in enumerate(curves.items()):
        color = PALETTE[i % len(PALETTE)]
        r = np.asarray(rounds, dtype=float)
        mean = np.asarray(means, dtype=float)
        se = np.asarray(ses, dtype=float)
        for ys, dashed in ((mean, False), (mean + se, True), (mean - se, True)):
            dx, dy = _downsample(r, ys)
            parts.append(_polyline(sx(dx), sy(dy), color, dashed))
        ly = _MT + 20 + 22 * i
        lx = _ML + plot_w + 12
        parts.append(
            f'<line x1="{lx}" y1="{ly}" x2="{lx + 26}" y2="{ly}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{lx + 32}" y="{ly + 4}" font-size="13">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def cmd_plot(args) -> int:
    curves = _read_aggregate(args.aggregate)
    svg = render_svg(curves)
    Path(args.out).write_text(svg, encoding="utf-8")
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rcbandit",
        description="Bandit simulations with censored resource consumption.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config")
    run.add_argument("--reps", type=int, help="override repetitions")
    run.add_argument("--seed", type=int, help="override base seed")
    run.add_argument("--out-dir", help="override output directory")
    run.add_argument("--dump-state", action="store_true",
                     help="write final estimator state of repetition 0")
    run.set_defaults(func=cmd_run)

    oracle = sub.add_parser("oracle", help="compute the ground-truth table")
    oracle.add_argument("config")
    oracle.add_argument("--seed", type=int, help="override base seed")
    oracle.add_argument("--out-dir", help="override output directory")
    oracle.set_defaults(func=cmd_oracle)

    audit = sub.add_parser("audit", help="empirical concentration audit")
    audit.add_argument("config")
    audit.add_argument("--alpha", type=float, default=2.0)
    audit.add_argument("--t", type=int, default=1000)
    audit.add_argument("--runs", type=int, default=10_000)
    audit.add_argument("--seed", type=int, help="override base seed")
    audit.set_defaults(func=cmd_audit)

    plot = sub.add_parser("plot", help="render an aggregate CSV to SVG")
    plot.add_argument("aggregate")
    plot.add_argument("out")
    plot.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
