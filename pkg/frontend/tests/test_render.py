"""Rendering behavior, schema diagnostics, and the acceptance check for the
plotting frontend (it consumes only the experiment CSV interface)."""

import json
import shutil
import subprocess

import pytest
from matplotlib.collections import PolyCollection

from aope_plots import EXPECTED_HEADER, PlotSpec, SchemaError, build_figure, load_rows, render
from aope_plots.cli import main

HEADER = ",".join(EXPECTED_HEADER)


def write_two_policy_csv(path, cover_zero=True):
    """Synthetic CSV in the exact bias-study shape: 2 policies x 2 arms."""
    lines = [HEADER]
    for policy in ("anti_optimal", "optimal"):
        for arm, offset in (("adaptive", -0.05), ("shadow", 0.04)):
            for n in (10, 50, 200):
                mean = offset * (1.0 if policy == "optimal" else 2.0)
                half = 0.2 if cover_zero else 0.01
                lines.append(
                    f"{policy},{arm},{n},{mean!r},{0.5!r},{mean - half!r},{mean + half!r},500,5"
                )
    path.write_text("\n".join(lines) + "\n")
    return path


def test_load_rows_round_trip(tmp_path):
    path = write_two_policy_csv(tmp_path / "c.csv")
    rows = load_rows(path)
    assert len(rows) == 12
    assert {r.policy for r in rows} == {"anti_optimal", "optimal"}
    assert {r.arm for r in rows} == {"adaptive", "shadow"}


def test_missing_column_named(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("policy,arm,n,mean,ci_low,ci_high,M,seed\n")
    with pytest.raises(SchemaError, match="missing column\\(s\\): std"):
        load_rows(path)


def test_unexpected_column_named(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(HEADER + ",extra\n")
    with pytest.raises(SchemaError, match="unexpected column\\(s\\): extra"):
        load_rows(path)


def test_out_of_order_header_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    cols = list(EXPECTED_HEADER)
    cols[0], cols[1] = cols[1], cols[0]
    path.write_text(",".join(cols) + "\n")
    with pytest.raises(SchemaError, match="out of order"):
        load_rows(path)


def test_header_only_renders_empty_axes(tmp_path):
    csv_path = tmp_path / "empty.csv"
    csv_path.write_text(HEADER + "\n")
    out = tmp_path / "empty.png"
    rc = main(["--csv", str(csv_path), "--out", str(out)])
    assert rc == 0
    assert out.exists() and out.stat().st_size > 0


def test_two_arm_legend_exact(tmp_path):
    path = write_two_policy_csv(tmp_path / "c.csv")
    fig = build_figure(load_rows(path), PlotSpec([str(path)], ""))
    assert len(fig.axes) == 2
    for ax in fig.axes:
        labels = [t.get_text() for t in ax.get_legend().get_texts()]
        assert labels == ["adaptive", "shadow"]
        bands = [c for c in ax.collections if isinstance(c, PolyCollection)]
        assert len(bands) == 2


def test_schema_mismatch_cli_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("policy,arm,n,mean,ci_low,ci_high,M,seed\n")
    rc = main(["--csv", str(bad), "--out", str(tmp_path / "x.png")])
    assert rc == 1
    assert "std" in capsys.readouterr().err


def test_missing_input_exit_code(tmp_path):
    rc = main(["--csv", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "x.png")])
    assert rc == 2


def test_render_deterministic(tmp_path):
    path = write_two_policy_csv(tmp_path / "c.csv")
    out1, out2 = tmp_path / "a.png", tmp_path / "b.png"
    render(PlotSpec([str(path)], str(out1)))
    render(PlotSpec([str(path)], str(out2)))
    assert out1.read_bytes() == out2.read_bytes()


def test_multiple_csv_inputs(tmp_path):
    p1 = write_two_policy_csv(tmp_path / "c1.csv")
    p2 = tmp_path / "c2.csv"
    p2.write_text(HEADER + "\n" + f"third,adaptive,10,{0.1!r},{0.5!r},{0.0!r},{0.2!r},10,1\n")
    fig = build_figure(load_rows(p1) + load_rows(p2), PlotSpec([], ""))
    assert len(fig.axes) == 3


def test_acceptance_12_bias_csv_renders(tmp_path):
    """Render the bias-study CSV produced through the primary CLI: two panels
    with two CI bands each, and both bands cover zero at the largest n."""
    exe = shutil.which("aope-lab")
    if exe is None:
        pytest.skip("primary CLI not on PATH")
    cfg = {
        "mdp": "toy2x2",
        "logger": {"kind": "ucbvi", "c": 1.0, "delta_log": 0.1},
        "M": 60, "N": 80, "targets": ["optimal", "anti_optimal"],
        "grid": [10, 30, 80], "delta": 0.1, "seed": 5, "workers": 1,
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    out_dir = tmp_path / "results"
    subprocess.run(
        [exe, "experiment", "--config", str(cfg_path), "--out", str(out_dir)],
        check=True, capture_output=True,
    )
    csv_path = out_dir / "curves.csv"
    rows = load_rows(csv_path)
    out_png = tmp_path / "curves.png"
    rc = main(["--csv", str(csv_path), "--out", str(out_png)])
    assert rc == 0
    assert out_png.exists() and out_png.stat().st_size > 0

    fig = build_figure(rows, PlotSpec([str(csv_path)], ""))
    assert len(fig.axes) == 2
    for ax in fig.axes:
        bands = [c for c in ax.collections if isinstance(c, PolyCollection)]
        assert len(bands) == 2
        labels = [t.get_text() for t in ax.get_legend().get_texts()]
        assert labels == ["adaptive", "shadow"]
    n_max = max(r.n for r in rows)
    for r in rows:
        if r.n == n_max:
            assert r.ci_low <= 0.0 <= r.ci_high  # both arms' bands touch zero
    print("ACCEPTANCE 12 plot rendering: PASS (two panels, two bands each)")
