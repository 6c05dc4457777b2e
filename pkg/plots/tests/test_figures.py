import hashlib
import os
import shutil

import numpy as np
import pytest

from tlsjitter_plots.cli import main
from tlsjitter_plots.figures import RENDERERS, render
from tlsjitter_plots.schemas import SchemaError, read_table

GOLDEN = os.path.join(os.path.dirname(__file__), "golden")


@pytest.mark.parametrize("kind", sorted(RENDERERS))
def test_every_kind_renders_from_golden(tmp_path, kind):
    written = render(kind, GOLDEN, str(tmp_path / kind))
    assert sorted(os.path.splitext(p)[1] for p in written) == [".png", ".svg"]
    for p in written:
        assert os.path.getsize(p) > 2000


def test_matrix_diagonal_exceeds_off_diagonal():
    table = read_table(os.path.join(GOLDEN, "summary.csv"), "rho_summary_v1")
    rho = dict(zip(table["pair"], table["rho0"]))
    assert min(rho["AA"], rho["BB"]) > max(abs(rho["AB"]), abs(rho["BA"]))


def test_rendering_is_idempotent_and_readonly(tmp_path):
    before = {}
    for name in os.listdir(GOLDEN):
        with open(os.path.join(GOLDEN, name), "rb") as f:
            before[name] = hashlib.sha256(f.read()).hexdigest()
    h = []
    for attempt in ("one", "two"):
        paths = render("matrix", GOLDEN, str(tmp_path / attempt))
        with open(paths[0], "rb") as f:
            h.append(hashlib.sha256(f.read()).hexdigest())
    assert h[0] == h[1]
    after = {}
    for name in os.listdir(GOLDEN):
        with open(os.path.join(GOLDEN, name), "rb") as f:
            after[name] = hashlib.sha256(f.read()).hexdigest()
    assert after == before


def test_missing_input_fails_without_partial_image(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    out = tmp_path / "fig"
    with pytest.raises(SchemaError):
        render("traces", str(empty), str(out))
    assert not list(tmp_path.glob("fig*"))


def test_schema_mismatch_names_offending_column(tmp_path):
    bad_dir = tmp_path / "bad"
    bad_dir.mkdir()
    (bad_dir / "summary.csv").write_text(
        "# schema=rho_summary_v1\npair,correlation\nAA,1.0\n")
    with pytest.raises(SchemaError, match="correlation"):
        render("matrix", str(bad_dir), str(tmp_path / "fig"))


def test_cli_renders_and_reports_errors(tmp_path, capsys):
    out = tmp_path / "sweep_fig"
    assert main(["sweep", "--in", GOLDEN, "--out", str(out)]) == 0
    printed = capsys.readouterr().out.splitlines()
    assert printed == [f"{out}.png", f"{out}.svg"]
    assert main(["matrix", "--in", str(tmp_path), "--out", str(out)]) == 2
    assert "input error" in capsys.readouterr().err


def test_traces_window_option(tmp_path):
    written = render("traces", GOLDEN, str(tmp_path / "w"), {"window_s": 100e-6})
    assert os.path.getsize(written[0]) > 2000


def test_read_table_rejects_non_numeric(tmp_path):
    p = tmp_path / "sweep.csv"
    p.write_text("# schema=sweep_v1\ntemperature_k,fwhm_hz\n0.2,abc\n")
    with pytest.raises(SchemaError, match="fwhm_hz"):
        read_table(str(p), "sweep_v1")
