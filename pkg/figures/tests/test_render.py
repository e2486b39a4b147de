import subprocess
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from narfigs import FigureSpec, SchemaError, render

FIXTURES = Path(__file__).parent / "fixtures"
SCRIPTS = Path(__file__).resolve().parents[1] / "scripts"


def spec_for(kind, tmp_path, **kw):
    table = {
        "stepwise_scatter": {"coords": FIXTURES / "stepwise_coords.csv"},
        "trajectorywise_scatter": {"coords": FIXTURES / "trajwise_coords.csv"},
        "cluster_overlay": {
            "coords": FIXTURES / "cluster_coords.csv",
            "segments": FIXTURES / "overlay_segments.csv",
        },
        "accuracy_vs_steps": {"table": FIXTURES / "accuracy_vs_steps.csv"},
        "mispredict_bins": {"bins": FIXTURES / "mispredict_bins.csv"},
        "agreement_matrix": {"matrix": FIXTURES / "agreement.csv"},
        "correlation_scatter": {"pairs": FIXTURES / "distance_pairs.csv"},
        "graph_snapshot": {
            "edges": FIXTURES / "snapshot_edges.csv",
            "nodes": FIXTURES / "snapshot_nodes.csv",
        },
    }
    return FigureSpec(kind=kind, inputs=table[kind], output=tmp_path / f"{kind}.png", options=kw)


ALL_KINDS = [
    "stepwise_scatter",
    "trajectorywise_scatter",
    "cluster_overlay",
    "accuracy_vs_steps",
    "mispredict_bins",
    "agreement_matrix",
    "correlation_scatter",
    "graph_snapshot",
]


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_every_kind_renders_png(kind, tmp_path):
    path = render(spec_for(kind, tmp_path))
    assert path.exists()
    assert path.stat().st_size > 2000
    assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_rendering_is_deterministic(kind, tmp_path):
    a = render(spec_for(kind, tmp_path / "a"))
    b = render(spec_for(kind, tmp_path / "b"))
    assert a.read_bytes() == b.read_bytes()


def test_svg_output_supported(tmp_path):
    spec = FigureSpec(
        kind="accuracy_vs_steps",
        inputs={"table": FIXTURES / "accuracy_vs_steps.csv"},
        output=tmp_path / "fig.svg",
    )
    path = render(spec)
    assert path.read_text().startswith("<?xml")


def test_unknown_kind_rejected(tmp_path):
    with pytest.raises(SchemaError):
        FigureSpec(kind="pie_chart", inputs={}, output=tmp_path / "x.png")


def test_bad_extension_rejected(tmp_path):
    with pytest.raises(SchemaError):
        FigureSpec(kind="stepwise_scatter", inputs={}, output=tmp_path / "x.pdf")


def test_missing_column_is_schema_error(tmp_path):
    broken = tmp_path / "broken.csv"
    broken.write_text("sample,pc1\n0,0.5\n")
    spec = FigureSpec(
        kind="stepwise_scatter", inputs={"coords": broken}, output=tmp_path / "x.png"
    )
    with pytest.raises(SchemaError):
        render(spec)


def test_empty_csv_is_error_not_empty_image(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("sample,step,pc1,pc2\n")
    spec = FigureSpec(kind="stepwise_scatter", inputs={"coords": empty}, output=tmp_path / "x.png")
    with pytest.raises(SchemaError):
        render(spec)
    assert not (tmp_path / "x.png").exists()


def test_single_sample_draws_one_polyline(tmp_path):
    single = tmp_path / "single.csv"
    single.write_text("sample,step,pc1,pc2\n0,0,0.0,0.0\n0,1,0.5,0.2\n0,2,0.9,0.1\n")
    spec = FigureSpec(kind="stepwise_scatter", inputs={"coords": single}, output=tmp_path / "s.png")
    assert render(spec).exists()


def test_ever_correct_matrix_via_options(tmp_path):
    spec = FigureSpec(
        kind="agreement_matrix",
        inputs={"matrix": FIXTURES / "ever_correct.csv"},
        output=tmp_path / "quad.png",
        options={
            "row_col": "final_correct",
            "col_col": "ever_correct",
            "value_col": "fraction",
            "title": "Final vs ever correct",
        },
    )
    assert render(spec).exists()


def test_forced_steps_table_via_x_col(tmp_path):
    spec = FigureSpec(
        kind="accuracy_vs_steps",
        inputs={"table": FIXTURES / "forced_steps.csv"},
        output=tmp_path / "f.png",
        options={"x_col": "delta"},
    )
    assert render(spec).exists()


def test_graph_snapshot_missing_step(tmp_path):
    spec = spec_for("graph_snapshot", tmp_path, step=7)
    with pytest.raises(SchemaError):
        render(spec)


SCRIPT_CASES = [
    ("render_stepwise_scatter.py", ["--in", str(FIXTURES / "stepwise_coords.csv")]),
    ("render_trajectorywise_scatter.py", ["--in", str(FIXTURES / "trajwise_coords.csv")]),
    (
        "render_cluster_overlay.py",
        ["--in", str(FIXTURES / "cluster_coords.csv"), "--segments", str(FIXTURES / "overlay_segments.csv")],
    ),
    ("render_accuracy_vs_steps.py", ["--in", str(FIXTURES / "accuracy_vs_steps.csv")]),
    ("render_mispredict_bins.py", ["--in", str(FIXTURES / "mispredict_bins.csv")]),
    ("render_agreement_matrix.py", ["--in", str(FIXTURES / "agreement.csv")]),
    ("render_correlation_scatter.py", ["--in", str(FIXTURES / "distance_pairs.csv")]),
    (
        "render_graph_snapshot.py",
        ["--edges", str(FIXTURES / "snapshot_edges.csv"), "--nodes", str(FIXTURES / "snapshot_nodes.csv"), "--step", "1"],
    ),
]


@pytest.mark.parametrize("script,flags", SCRIPT_CASES)
def test_scripts_run_standalone(script, flags, tmp_path):
    out = tmp_path / "out.png"
    proc = subprocess.run(
        [sys.executable, str(SCRIPTS / script), *flags, "--out", str(out)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert out.exists()


def test_script_reports_schema_error(tmp_path):
    out = tmp_path / "out.png"
    proc = subprocess.run(
        [
            sys.executable,
            str(SCRIPTS / "render_stepwise_scatter.py"),
            "--in",
            str(FIXTURES / "agreement.csv"),
            "--out",
            str(out),
        ],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 3
    assert "schema error" in proc.stderr
    assert not out.exists()
