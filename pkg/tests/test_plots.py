"""Figure rendering: every kind renders from a toy-run CSV and plots exactly
the CSV's data series."""

import csv
import importlib.util
import sys
from pathlib import Path

import pytest

from sgheat.cli import main as cli_main

matplotlib = pytest.importorskip("matplotlib")

_RENDER_PATH = Path(__file__).resolve().parent.parent / "plots" / "render.py"
_spec = importlib.util.spec_from_file_location("sgheat_render", _RENDER_PATH)
render_mod = importlib.util.module_from_spec(_spec)
sys.modules["sgheat_render"] = render_mod
_spec.loader.exec_module(render_mod)

TOY_CONFIG = """\
M = 2
q = 2
level = 1
k = 1
r = 0
n_slabs = 2
"""


@pytest.fixture(scope="module")
def csv_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("csvs")
    cfg = out / "run.cfg"
    cfg.write_text(TOY_CONFIG)
    assert cli_main([
        "sg-refine", "--config", str(cfg), "--out", str(out), "--set", "p_max=2",
    ]) == 0
    assert cli_main([
        "mc-run", "--config", str(cfg), "--out", str(out),
        "--set", "milestones=2 4 8", "--set", "seed=5",
    ]) == 0
    assert cli_main([
        "compare", "--config", str(cfg), "--out", str(out),
        "--set", "p_max=1", "--set", "milestones=4", "--set", "seed=5",
    ]) == 0
    return out


def load_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


KIND_TO_CSV = {
    "sg-error": "sg_refine.csv",
    "rates": "sg_refine.csv",
    "work": "sg_refine.csv",
    "solver": "sg_refine.csv",
    "mc": "mc_run.csv",
    "work-accuracy": "compare.csv",
}

# per kind: (series label, x column, y column) used for the spot checks
SPOT_SERIES = {
    "sg-error": ("full L2", "p_xi", "E_full_L2"),
    "rates": ("degree rate", "p_xi", "r_p_full"),
    "work": ("W", "p_xi", "W"),
    "solver": ("avg FGMRES iters", "p_xi", "avg_fgmres"),
    "mc": ("sampling mean", "N_mc", "E_ex_mean_L2"),
    "work-accuracy": ("sg E_mean_L2", "wall_s", "E_mean_L2"),
}


@pytest.mark.parametrize("kind", sorted(KIND_TO_CSV))
def test_kind_renders_and_matches_csv(kind, csv_dir, tmp_path):
    csv_path = csv_dir / KIND_TO_CSV[kind]
    out = tmp_path / f"{kind}.png"
    series = render_mod.render(kind, str(csv_path), str(out))
    assert out.exists() and out.stat().st_size > 0

    label, xcol, ycol = SPOT_SERIES[kind]
    assert label in series
    x, y = series[label]
    rows = load_csv(csv_path)
    expected = [
        (float(r[xcol]), float(r[ycol]))
        for r in rows
        if r[ycol] != "" and (kind != "work-accuracy" or r["method"] == "sg")
    ]
    assert len(x) == len(expected)
    # spot-check three points (or all, if fewer)
    for i in range(min(3, len(expected))):
        assert (x[i], y[i]) == expected[i]


def test_rerender_identical_series(csv_dir, tmp_path):
    csv_path = csv_dir / "sg_refine.csv"
    s1 = render_mod.render("sg-error", str(csv_path), str(tmp_path / "a.png"))
    s2 = render_mod.render("sg-error", str(csv_path), str(tmp_path / "b.png"))
    assert s1 == s2


def test_missing_column_named(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("p_xi,E_full_L2\n0,1.0\n")
    code = render_mod.main(
        ["--kind", "work", "--csv", str(bad), "--out", str(tmp_path / "o.png")]
    )
    assert code != 0
    assert "missing column: W" in capsys.readouterr().err


def test_empty_csv(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("p_xi,W\n")
    code = render_mod.main(
        ["--kind", "work", "--csv", str(empty), "--out", str(tmp_path / "o.png")]
    )
    assert code != 0
    assert "no data rows" in capsys.readouterr().err


def test_cli_entry_success(csv_dir, tmp_path):
    code = render_mod.main([
        "--kind", "mc", "--csv", str(csv_dir / "mc_run.csv"),
        "--out", str(tmp_path / "mc.png"),
    ])
    assert code == 0
    assert (tmp_path / "mc.png").exists()
