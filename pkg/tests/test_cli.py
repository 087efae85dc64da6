"""Config round-trips, CLI exit codes, emitted files, and SVG structure."""

import json
import re

import numpy as np
import pytest

from rcbandit.cli import (
    config_from_dict,
    config_to_dict,
    load_config,
    main,
    render_svg,
)
from rcbandit.core import ConfigError
from rcbandit.envs import GaussianArm

SMALL_CONFIG = {
    "instance": {
        "tau_max": 1.0,
        "grid_m": 4,
        "discount": {"kind": "linear"},
        "objective": {"kind": "multiplicative"},
        "arms": [
            {"kind": "degenerate", "reward": 0.9, "cost": 0.2},
            {"kind": "degenerate", "reward": 0.7, "cost": 0.45},
            {"kind": "uniform_cost", "reward_mean": 0.8},
        ],
    },
    "policies": [
        {"kind": "rcucb", "alpha": 2.0},
        {"kind": "ucb", "alpha": 2.0},
        {"kind": "ts", "prior": [1.0, 1.0], "indicator": "chosen_limit"},
    ],
    "horizon": 60,
    "repetitions": 2,
    "base_seed": 11,
    "oracle": {"method": "quadrature", "nodes": 200},
    "workers": 1,
}


def _write_config(tmp_path, doc, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def test_config_round_trip_all_arm_kinds(tmp_path):
    trace = tmp_path / "rows.csv"
    trace.write_text(
        "arm,reward,cost\n1,0.5,0.2\n1,0.9,0.8\n2,0.1,0.1\n", encoding="utf-8"
    )
    doc = {
        "instance": {
            "tau_max": 2.0,
            "grid_points": [0.5, 1.0, 2.0],
            "discount": {"kind": "geometric", "rho": 0.5},
            "objective": {"kind": "additive_cost", "scale": 0.5, "power": 2.0},
            "arms": [
                {"kind": "gaussian", "mean": [0.6, 0.45], "x": 0.2, "sigma": 0.1},
                {"kind": "degenerate", "reward": 0.9, "cost": 0.2},
                {"kind": "uniform_cost", "reward_mean": 0.8},
                {"kind": "trace", "path": str(trace), "replay": "cyclic", "arm": 2},
            ],
        },
        "policies": [
            {"kind": "rcucb", "alpha": 2.5},
            {"kind": "klrcucb", "c": 4.0},
            {"kind": "ts", "prior": [2.0, 3.0], "indicator": "per_pair"},
            {"kind": "uniform_random"},
        ],
        "horizon": 100,
        "repetitions": 5,
        "base_seed": 123,
        "oracle": {"method": "monte_carlo", "samples": 50000},
        "workers": 2,
        "output_dir": str(tmp_path / "out"),
    }
    cfg = config_from_dict(doc, tmp_path)
    again = config_from_dict(config_to_dict(cfg), tmp_path)
    assert again == cfg


def test_config_field_errors(tmp_path):
    with pytest.raises(ConfigError, match="horizon"):
        config_from_dict({"instance": SMALL_CONFIG["instance"],
                          "policies": SMALL_CONFIG["policies"]})
    with pytest.raises(ConfigError, match="grid_m"):
        config_from_dict({"instance": {"discount": {"kind": "linear"},
                                       "arms": []},
                          "policies": [{"kind": "rcucb"}], "horizon": 10})
    bad = json.loads(json.dumps(SMALL_CONFIG))
    bad["policies"][0]["kind"] = "epsilon_greedy"
    with pytest.raises(ConfigError, match="policies\\[0\\]"):
        config_from_dict(bad)
    bad = json.loads(json.dumps(SMALL_CONFIG))
    bad["instance"]["grid_points"] = [0.5, 1.0]
    with pytest.raises(ConfigError, match="not both"):
        config_from_dict(bad)
    bad = json.loads(json.dumps(SMALL_CONFIG))
    bad["oracle"] = {"method": "midpoint"}
    with pytest.raises(ConfigError, match="oracle.method"):
        config_from_dict(bad)


def test_trace_arm_selection_errors(tmp_path):
    trace = tmp_path / "rows.csv"
    trace.write_text("arm,reward,cost\n1,0.5,0.2\n", encoding="utf-8")
    doc = json.loads(json.dumps(SMALL_CONFIG))
    doc["instance"]["arms"] = [{"kind": "trace", "path": "rows.csv", "arm": 3}]
    with pytest.raises(ConfigError, match="arms 1..1"):
        config_from_dict(doc, tmp_path)


def test_missing_config_exits_2(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.json")]) == 2
    assert "config not found" in capsys.readouterr().err


def test_invalid_json_exits_2(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    assert main(["run", str(path)]) == 2
    assert "invalid JSON" in capsys.readouterr().err


def test_short_horizon_exits_2(tmp_path, capsys):
    doc = json.loads(json.dumps(SMALL_CONFIG))
    doc["horizon"] = 5
    doc["output_dir"] = str(tmp_path / "out")
    path = _write_config(tmp_path, doc)
    assert main(["run", str(path)]) == 2
    assert "initialization" in capsys.readouterr().err


def test_run_requires_output_dir(tmp_path, capsys):
    path = _write_config(tmp_path, SMALL_CONFIG)
    assert main(["run", str(path)]) == 2
    assert "output directory" in capsys.readouterr().err


def _run_small(tmp_path, out_name="out", extra=()):
    path = _write_config(tmp_path, SMALL_CONFIG)
    out = tmp_path / out_name
    code = main(["run", str(path), "--out-dir", str(out), *extra])
    return code, out


def test_run_emits_expected_files(tmp_path, capsys):
    code, out = _run_small(tmp_path)
    assert code == 0
    stdout = capsys.readouterr().out
    assert "rcucb" in stdout and str(out) in stdout

    agg_lines = (out / "aggregate.csv").read_text().splitlines()
    assert agg_lines[0] == "round,policy,mean_cum_regret,stderr"
    assert len(agg_lines) == 1 + 3 * SMALL_CONFIG["horizon"]
    for label in ("rcucb", "ucb", "ts"):
        lines = (out / f"trace_{label}.csv").read_text().splitlines()
        assert len(lines) == 1 + 2 * SMALL_CONFIG["horizon"]
    assert (out / "nu_table.json").is_file()
    assert (out / "summary.json").is_file()


def test_rerun_is_byte_identical(tmp_path):
    _, out1 = _run_small(tmp_path, "out1")
    _, out2 = _run_small(tmp_path, "out2")
    files1 = sorted(f.name for f in out1.iterdir())
    files2 = sorted(f.name for f in out2.iterdir())
    assert files1 == files2
    for name in files1:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_run_overrides(tmp_path):
    code, out = _run_small(tmp_path, "out", ("--reps", "3", "--dump-state"))
    assert code == 0
    lines = (out / "trace_rcucb.csv").read_text().splitlines()
    assert len(lines) == 1 + 3 * SMALL_CONFIG["horizon"]
    state = json.loads((out / "state_rcucb.json").read_text())
    assert len(state) == 3 * 4
    assert {"arm", "tau", "n", "sum"} == set(state[0])


def test_seed_override_changes_traces(tmp_path):
    _, out1 = _run_small(tmp_path, "out1", ("--seed", "1"))
    _, out2 = _run_small(tmp_path, "out2", ("--seed", "2"))
    assert (out1 / "trace_rcucb.csv").read_bytes() != (out2 / "trace_rcucb.csv").read_bytes()


def test_oracle_command(tmp_path, capsys):
    doc = json.loads(json.dumps(SMALL_CONFIG))
    doc["instance"]["arms"] = [
        {"kind": "degenerate", "reward": 0.9, "cost": 0.2},
        {"kind": "degenerate", "reward": 1.0, "cost": 0.9},
    ]
    path = _write_config(tmp_path, doc)
    out = tmp_path / "oracle_out"
    assert main(["oracle", str(path), "--out-dir", str(out)]) == 0
    stdout = capsys.readouterr().out
    assert "arm 1" in stdout and "0.25" in stdout
    assert "0.675" in stdout
    table = json.loads((out / "nu_table.json").read_text())
    assert table["optimal"] == {"arm": 1, "tau": 0.25, "nu_star": 0.675}
    assert len(table["pairs"]) == 8


def test_audit_command_passes_on_degenerate(tmp_path, capsys):
    path = _write_config(tmp_path, SMALL_CONFIG)
    code = main(["audit", str(path), "--alpha", "2.0", "--t", "50",
                 "--runs", "20", "--seed", "4"])
    assert code == 0
    stdout = capsys.readouterr().out
    assert stdout.count("PASS") == 4
    assert "FAIL" not in stdout


def test_audit_rejects_alpha_at_most_one(tmp_path, capsys):
    path = _write_config(tmp_path, SMALL_CONFIG)
    assert main(["audit", str(path), "--alpha", "1.0"]) == 2
    assert "alpha" in capsys.readouterr().err


def test_audit_gaussian_small(tmp_path, capsys):
    doc = json.loads(json.dumps(SMALL_CONFIG))
    doc["instance"]["arms"] = [
        {"kind": "gaussian", "mean": [0.6, 0.45], "x": 0.2, "sigma": 0.1}
    ]
    path = _write_config(tmp_path, doc)
    code = main(["audit", str(path), "--t", "100", "--runs", "50"])
    assert code == 0
    assert "FAIL" not in capsys.readouterr().out


def _solid_polyline_ys(svg: str):
    out = []
    for match in re.finditer(r'<polyline[^>]*stroke-width="2"[^>]*points="([^"]+)"', svg):
        pts = match.group(1).split()
        out.append([float(p.split(",")[1]) for p in pts])
    return out


def test_plot_structure_and_monotonicity(tmp_path, capsys):
    _, out = _run_small(tmp_path)
    svg_path = tmp_path / "fig.svg"
    assert main(["plot", str(out / "aggregate.csv"), str(svg_path)]) == 0
    svg = svg_path.read_text()
    assert svg.count("<polyline") == 9
    assert svg.count('stroke-dasharray') == 6
    assert "mean cumulative regret" in svg and ">round<" in svg
    for label in ("rcucb", "ucb", "ts"):
        assert f">{label}</text>" in svg
    solids = _solid_polyline_ys(svg)
    assert len(solids) == 3
    for ys in solids:
        # Regret means are nondecreasing, so flipped pixel y never rises
        # beyond the 2-decimal rounding of the coordinates.
        assert all(b - a <= 0.011 for a, b in zip(ys, ys[1:]))


def test_plot_downsamples_long_curves(tmp_path):
    rows = ["round,policy,mean_cum_regret,stderr"]
    for t in range(1, 5001):
        rows.append(f"{t},only,{0.1 * t},{0.01}")
    agg = tmp_path / "aggregate.csv"
    agg.write_text("\n".join(rows) + "\n", encoding="utf-8")
    svg_path = tmp_path / "fig.svg"
    assert main(["plot", str(agg), str(svg_path)]) == 0
    svg = svg_path.read_text()
    assert svg.count("<polyline") == 3
    longest = max(len(m.group(1).split())
                  for m in re.finditer(r'points="([^"]+)"', svg))
    assert longest <= 1000


def test_plot_single_round(tmp_path):
    agg = tmp_path / "aggregate.csv"
    agg.write_text(
        "round,policy,mean_cum_regret,stderr\n1,solo,0.5,0.1\n", encoding="utf-8"
    )
    svg_path = tmp_path / "one.svg"
    assert main(["plot", str(agg), str(svg_path)]) == 0
    svg = svg_path.read_text()
    assert svg.count("<polyline") == 3
    assert svg.startswith("<svg") and svg.endswith("</svg>")


def test_plot_malformed_csv(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("wrong,header\n1,2\n", encoding="utf-8")
    assert main(["plot", str(bad), str(tmp_path / "x.svg")]) == 2
    bad.write_text(
        "round,policy,mean_cum_regret,stderr\n1,only,abc,0\n", encoding="utf-8"
    )
    assert main(["plot", str(bad), str(tmp_path / "x.svg")]) == 2
    bad.write_text(
        "round,policy,mean_cum_regret,stderr\n1,only,0.5\n", encoding="utf-8"
    )
    assert main(["plot", str(bad), str(tmp_path / "x.svg")]) == 2
    assert main(["plot", str(tmp_path / "missing.csv"),
                 str(tmp_path / "x.svg")]) == 2
    capsys.readouterr()


def test_render_svg_direct():
    curves = {"a": ([1, 2, 3], [0.0, 1.0, 2.0], [0.0, 0.1, 0.2])}
    svg = render_svg(curves)
    assert svg.count("<polyline") == 3


@pytest.mark.parametrize("m", [10, 50, 100])
def test_bundled_configs_encode_the_synthetic_setup(m):
    cfg = load_config(f"paper_synthetic_m{m}")
    inst = cfg.instance
    assert inst.n == 10
    assert inst.grid.m == m
    assert inst.grid.tau_max == 1.0
    assert inst.discount.kind == "linear"
    assert cfg.horizon == 50000
    assert cfg.repetitions == 20
    first = inst.arms[0]
    assert isinstance(first, GaussianArm)
    assert first.mean == (0.6, 0.45)
    assert first.sigma == 0.1
    xs = [arm.x for arm in inst.arms]
    assert xs == [0.2, 0.3, 0.4, 0.4] + [0.6] * 6
    for arm in inst.arms[1:]:
        assert arm.mean == (0.5, 0.5)
        assert arm.sigma == 0.1
    labels = [s.label for s in cfg.policies]
    assert labels == ["rcucb", "ucb", "ts"]
    assert cfg.policies[2].ts_indicator == "chosen_limit"


def test_bundled_config_with_suffix_also_resolves():
    cfg = load_config("paper_synthetic_m10.json")
    assert cfg.instance.grid.m == 10
