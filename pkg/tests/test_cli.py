from pathlib import Path

import numpy as np
import pytest

from pneunet_topopt import RunConfig, ValidationError
from pneunet_topopt.artifacts import (design_csv, read_design, read_history, read_pgm, read_summary,
                                      quantize)
from pneunet_topopt.cli import main
from pneunet_topopt.config_file import REQUIRED, format_config, parse_config, parse_text
from pneunet_topopt.contour import (EmptyContourError, element_contours, marching_squares,
                                    signed_area)
from pneunet_topopt.model import MeshGrid
from pneunet_topopt.optimizer import IterationRecord
from pneunet_topopt.sensitivity import discreteness, volume_fraction

ROOT = Path(__file__).resolve().parents[1]
PAPER_CFG = ROOT / "configs" / "paper_fig3.cfg"

SMALL = """
domain.lx_m = 100 mm
domain.ly_m = 0.15
mesh.nex = 6
mesh.ney = 9
load.pressure = 1 bar
volume.target = 0.2
filter.radius_factor = 1.5
mma.max_iters = 4
output.dir = {out}
"""


# -- configuration ---------------------------------------------------------------

def test_paper_config_resolves_to_benchmark():
    cfg = parse_config(PAPER_CFG)
    assert cfg == RunConfig(output_dir=cfg.output_dir)
    assert (cfg.nex, cfg.ney, cfg.pressure, cfg.delta_eta) == (100, 150, 1e5, 0.15)
    assert (cfg.filter_radius_factor, cfg.chi, cfg.contrast, cfg.kss, cfg.e1, cfg.nu) == (6, 3, 1e-7, 1e4, 1e8, 0.4)
    assert (cfg.eta_k, cfg.beta_k, cfg.eta_d, cfg.beta_d) == (0.2, 10, 0.3, 10)


def test_empty_file_lists_every_required_key():
    with pytest.raises(ValidationError) as info:
        parse_text("")
    for key in REQUIRED:
        assert key in str(info.value)


def test_pressure_in_bar():
    cfg = parse_text(SMALL.format(out="x"))
    assert cfg.pressure == 1e5
    assert cfg.lx == pytest.approx(0.1)


@pytest.mark.parametrize("line, message", [
    ("bogus.key = 3", "unknown key"),
    ("spring.kss_n_per_m = 2 mm", "expected stiffness"),
    ("material.nu = 0.3 bar", "dimensionless"),
    ("mma.move_limit = ten", "cannot parse"),
    ("beta.period = 6.5", "integer"),
    ("material.e1_pa = 1 furlong", "unknown unit"),
    ("just some text", "key = value"),
])
def test_bad_lines_are_errors(line, message):
    with pytest.raises(ValidationError, match=message):
        parse_text(SMALL.format(out="x") + line + "\n")


def test_duplicate_key_is_an_error():
    with pytest.raises(ValidationError, match="duplicate"):
        parse_text(SMALL.format(out="x") + "\nmesh.ney = 9\n")


def test_resolved_config_round_trip():
    cfg = parse_config(PAPER_CFG)
    assert parse_text(format_config(cfg)) == cfg


def test_missing_config_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        parse_config(tmp_path / "nope.cfg")
    assert main(["optimize", str(tmp_path / "nope.cfg")]) == 3


# -- optimize -------------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("run")
    out = tmp / "out"
    cfg = tmp / "small.cfg"
    cfg.write_text(SMALL.format(out=out))
    assert main(["optimize", str(cfg)]) == 0
    return out


def test_artifacts_present(small_run):
    names = {p.name for p in small_run.iterdir()}
    expected = {"history.csv", "timing.csv", "checks.csv", "resolved_config.txt", "summary.txt",
                "pressure_intermediate.vtk", "displacement_intermediate.vtk"}
    expected |= {f"design_{n}.{ext}" for n in ("eroded", "intermediate", "dilated") for ext in ("csv", "pgm")}
    assert expected <= names
    assert not any(n.endswith(".tmp") for n in names)


def test_history_schema(small_run):
    header, data = read_history(small_run / "history.csv")
    assert header == [c for c in IterationRecord.columns() if c != "wall_ms"]
    assert data.shape == (4, len(header))
    assert np.all(np.isfinite(data))
    t_header, timing = read_history(small_run / "timing.csv")
    assert t_header == ["iteration", "wall_ms"] and timing.shape == (4, 2)


def test_design_round_trip(small_run):
    summary = read_summary(small_run / "summary.txt")
    for name in ("eroded", "intermediate", "dilated"):
        d = read_design(small_run / f"design_{name}.csv")
        assert (d["nex"], d["ney"]) == (6, 9)
        assert abs(volume_fraction(d["rho_bar"]) - summary[f"volume_fraction.{name}"]) <= 1e-12
        assert abs(discreteness(d["rho_bar"]) - summary[f"discreteness_percent.{name}"]) <= 1e-12


def test_pgm_matches_csv(small_run):
    for name in ("eroded", "intermediate", "dilated"):
        img = read_pgm(small_run / f"design_{name}.pgm")
        assert img.shape == (9, 6) and img.size == 54
        raw = (small_run / f"design_{name}.pgm").read_bytes()
        assert raw.startswith(b"P5\n6 9\n255\n")
        d = read_design(small_run / f"design_{name}.csv")
        np.testing.assert_array_equal(img, quantize(d["rho_bar"]).reshape(9, 6)[::-1])


def test_vtk_files(small_run):
    for fname, kind in (("pressure_intermediate.vtk", "SCALARS"), ("displacement_intermediate.vtk", "VECTORS")):
        lines = (small_run / fname).read_text().splitlines()
        assert lines[0] == "# vtk DataFile Version 2.0"
        assert lines[2:5] == ["ASCII", "DATASET STRUCTURED_GRID", "DIMENSIONS 7 10 1"]
        assert lines[5] == "POINTS 70 double"
        assert lines[76] == "POINT_DATA 70"
        assert lines[77].startswith(kind)
    p_lines = (small_run / "pressure_intermediate.vtk").read_text().splitlines()
    p = np.array([float(v) for v in p_lines[79:]])
    assert p.size == 70 and p.min() >= 0 and p.max() == 1e5


def test_summary_and_resolved_config(small_run):
    s = read_summary(small_run / "summary.txt")
    assert s["iterations"] == 4
    assert s["output_displacement_mm"] == s["output_displacement_mm.intermediate"]
    cfg = parse_config(small_run / "resolved_config.txt")
    assert (cfg.nex, cfg.ney, cfg.max_iters) == (6, 9, 4)


def test_all_passive_refused(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(SMALL.format(out=tmp_path / "o") + "void.width_factor = 3\nvoid.height_factor = 3\n"
                   "void.center_y_factor = 0.5\n")
    assert main(["optimize", str(cfg)]) == 1
    assert not (tmp_path / "o" / "history.csv").exists()


def test_unwritable_output_is_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("not a directory")
    cfg = tmp_path / "c.cfg"
    cfg.write_text(SMALL.format(out=blocker / "sub"))
    assert main(["optimize", str(cfg), "--skip-self-check"]) == 3


# -- check-gradients -------------------------------------------------------------------

def test_check_gradients_command(tmp_path, capsys):
    cfg = tmp_path / "g.cfg"
    cfg.write_text(SMALL.format(out=tmp_path / "g"))
    assert main(["check-gradients", str(cfg), "--seed", "42"]) == 0
    assert capsys.readouterr().out.startswith("PASS")
    table = (tmp_path / "g" / "gradient_check.csv").read_text().splitlines()
    assert table[0] == "design,element,realization,adjoint,finite_difference,relative_error"
    assert len(table) > 1


def test_check_gradients_refuses_flagship(capsys):
    assert main(["check-gradients", str(PAPER_CFG)]) == 1
    assert "mesh.nex" in capsys.readouterr().err


# -- contours ----------------------------------------------------------------------------

def _write_design(path, field, nex, ney):
    path.write_text(design_csv(MeshGrid(nex * 1e-3, ney * 1e-3, nex, ney, 1e-3), field, field, field))


def test_uniform_field_has_no_contour(tmp_path):
    with pytest.raises(EmptyContourError):
        marching_squares(np.full((4, 5), 0.8))
    _write_design(tmp_path / "d.csv", np.full(20, 0.8), 4, 5)
    assert main(["extract-contour", str(tmp_path / "d.csv")]) == 1


def test_square_block_one_ccw_loop(tmp_path):
    field = np.zeros((10, 10))
    field[3:7, 2:6] = 1.0
    loops = element_contours(field.ravel(), 10, 10, 0.01, 0.01)
    assert len(loops) == 1
    loop = loops[0]
    np.testing.assert_array_equal(loop[0], loop[-1])
    assert signed_area(loop) > 0
    # level 0.5 sits halfway between neighbouring centroids, i.e. on the element edges
    xs, ys = loop[:, 0], loop[:, 1]
    assert (xs.min(), xs.max()) == (pytest.approx(0.002), pytest.approx(0.006))
    assert (ys.min(), ys.max()) == (pytest.approx(0.003), pytest.approx(0.007))
    _write_design(tmp_path / "b.csv", field.ravel(), 10, 10)
    assert main(["extract-contour", str(tmp_path / "b.csv"), "--level", "0.5"]) == 0
    svg = (tmp_path / "b_contour.svg").read_text()
    assert 'width="10mm"' in svg and "<path" in svg
    rows = (tmp_path / "b_contour.csv").read_text().splitlines()
    assert rows[0] == "loop,vertex,x_mm,y_mm" and len(rows) == len(loop) + 1


def test_hole_is_clockwise():
    field = np.zeros((9, 9))
    field[1:8, 1:8] = 1.0
    field[4, 4] = 0.0
    areas = sorted(signed_area(l) for l in marching_squares(field))
    assert areas[0] < 0 < areas[1]


def test_checkerboard_saddle_average_rule():
    # average 0.5 is not above the level: the two solid corners stay separate
    loops = marching_squares(np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert len(loops) == 2
    again = marching_squares(np.array([[1.0, 0.0], [0.0, 1.0]]))
    for a, b in zip(loops, again):
        np.testing.assert_array_equal(a, b)
    # raising the average above the level joins them through the saddle cell
    joined = marching_squares(np.array([[1.0, 0.4], [0.4, 1.0]]), level=0.45)
    assert len(joined) == 1
