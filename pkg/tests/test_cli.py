import numpy as np
import pytest

import oracles
from hexoct import shapes
from hexoct.cli import EXIT_INPUT, EXIT_OK, EXIT_PLATEAU, EXIT_TOPOLOGY, main, read_config_file, ConfigFileError
from hexoct.io import write_obj

CENTER = np.array([10.0, -20.0, 30.0])
SIZE = 2.0


def read_vtk(path):
    """Independent parse of a legacy ASCII VTK unstructured grid."""
    tokens = open(path).read().split("\n")
    out = {"cell_data": {}}
    i = 0
    while i < len(tokens):
        words = tokens[i].split()
        if not words:
            i += 1
            continue
        if words[0] == "POINTS":
            n = int(words[1])
            out["points"] = np.array([list(map(float, tokens[i + 1 + k].split())) for k in range(n)])
            i += n + 1
        elif words[0] == "CELLS":
            n = int(words[1])
            out["cells"] = [list(map(int, tokens[i + 1 + k].split())) for k in range(n)]
            i += n + 1
        elif words[0] == "CELL_TYPES":
            n = int(words[1])
            out["types"] = [int(tokens[i + 1 + k]) for k in range(n)]
            i += n + 1
        elif words[0] == "SCALARS":
            n = len(out["cells"])
            out["cell_data"][words[1]] = np.array([float(tokens[i + 2 + k]) for k in range(n)])
            i += n + 2
        else:
            i += 1
    return out


def read_report(path):
    return [dict(kv.split("=", 1) for kv in line.split()) for line in open(path).read().splitlines()]


@pytest.fixture(scope="module")
def cube_obj(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "cube.obj"
    write_obj(path, *shapes.box(size=(SIZE,) * 3, n=8, center=tuple(CENTER)))
    return path


@pytest.fixture(scope="module")
def good_run(cube_obj, tmp_path_factory):
    """Desk-scale cube run configured through a file."""
    d = tmp_path_factory.mktemp("good")
    cfg = d / "run.cfg"
    cfg.write_text("# levels 3 to 4\nmax_level = 4\nbase_level = 3\nstop_at_target = true\n")
    out, rep = d / "out.vtk", d / "out.report"
    rc = main(["mesh", str(cube_obj), "-o", str(out), "--config", str(cfg), "--report", str(rep), "-q"])
    return rc, out, rep


def short_run(src, d, *extra):
    out, rep = d / "out.vtk", d / "out.report"
    argv = ["mesh", str(src), "-o", str(out), "--report", str(rep), "-q", "--max-level", "3", "--base-level", "3"]
    rc = main(argv + ["--max-iterations", "2000", *extra])
    return rc, out, rep


def test_success_exit_code(good_run):
    rc, out, rep = good_run
    assert rc == EXIT_OK
    assert out.exists() and rep.exists()


def test_output_is_all_hex_vtk_with_quality(good_run):
    _, out, _ = good_run
    vtk = read_vtk(out)
    assert set(vtk["types"]) == {12}
    assert all(c[0] == 8 and len(c) == 9 for c in vtk["cells"])
    sj = vtk["cell_data"]["min_sj"]
    assert len(sj) == len(vtk["cells"])
    hexes = np.array([c[1:] for c in vtk["cells"]])
    expect = np.array([oracles.hex_min_sj(vtk["points"][h]) for h in hexes])
    assert np.allclose(sj, expect, atol=1e-12)
    assert sj.min() >= 0.5
    _, counts = oracles.face_counts(hexes, oracles.HEX_FACE_LIST)
    assert set(counts) <= {1, 2}


def test_report_records(good_run):
    _, out, rep = good_run
    records = read_report(rep)
    assert records[0]["record"] == "config"
    assert records[0]["stop_at_target"] == "True" and records[0]["alpha"] == "0.0008"
    assert records[0]["max_level"] == "4" and records[0]["base_level"] == "3"
    stages = [r["stage"] for r in records if r["record"] == "stage"]
    assert stages == ["load", "octree", "balance", "transitions", "dual", "exterior", "clearance", "buffer", "optimize", "write"]
    summary = records[-1]
    hist = [int(x) for x in summary["histogram"].split(",")]
    n = len(read_vtk(out)["cells"])
    assert len(hist) == 20
    assert sum(hist) == int(summary["hexes"]) == n
    assert summary["boundary_euler"] == "2"
    assert summary["target_met"] == "True" and float(summary["min_sj"]) >= 0.5


def test_round_trip_coordinates(good_run):
    _, out, _ = good_run
    p = read_vtk(out)["points"]
    lo, hi = CENTER - SIZE / 2, CENTER + SIZE / 2
    # the surface layer is snapped onto the input cube, so the bounding boxes agree
    assert np.allclose(p.min(axis=0), lo, atol=1e-9)
    assert np.allclose(p.max(axis=0), hi, atol=1e-9)
    # a deep interior dual vertex is a level-3 cell center mapped back through
    # the normalization; interior hexes above the threshold never move
    scale = 0.9 / SIZE
    center_cells = (np.array([7, 7, 7]) / 16.0 - 0.5) / scale + CENTER
    d = np.linalg.norm(p - center_cells, axis=1)
    assert d.min() < 1e-9


def test_plateau_exit_code(cube_obj, tmp_path):
    rc, out, rep = short_run(cube_obj, tmp_path)
    assert rc == EXIT_PLATEAU
    # the mesh and report are still written
    assert out.exists()
    assert read_report(rep)[-1]["target_met"] == "False"


def test_output_is_deterministic(cube_obj, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    short_run(cube_obj, a)
    short_run(cube_obj, b)
    assert (a / "out.vtk").read_bytes() == (b / "out.vtk").read_bytes()
    strip = lambda r: [{k: v for k, v in x.items() if k not in ("seconds", "total_seconds", "output")} for x in r]
    assert strip(read_report(a / "out.report")) == strip(read_report(b / "out.report"))


def test_dump_stages(cube_obj, tmp_path):
    rc, _, _ = short_run(cube_obj, tmp_path, "--dump-stages", str(tmp_path / "dump"))
    assert rc == EXIT_PLATEAU
    names = sorted(p.name for p in (tmp_path / "dump").iterdir())
    assert names == ["buffer.vtk", "core.vtk", "dual.vtk", "exterior.vtk", "octree.vtk"]


def test_missing_input(tmp_path):
    assert main(["mesh", str(tmp_path / "nope.obj"), "-o", str(tmp_path / "o.vtk")]) == EXIT_INPUT


def test_open_surface_rejected(tmp_path, capsys):
    src = tmp_path / "tri.obj"
    src.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    assert main(["mesh", str(src), "-o", str(tmp_path / "o.vtk")]) == EXIT_INPUT
    assert "[load]" in capsys.readouterr().err


def test_level_out_of_range(cube_obj, tmp_path, capsys):
    assert main(["mesh", str(cube_obj), "-o", str(tmp_path / "o.vtk"), "--max-level", "13"]) == EXIT_INPUT
    assert "[config]" in capsys.readouterr().err


def test_alpha_out_of_range(cube_obj, tmp_path):
    assert main(["mesh", str(cube_obj), "-o", str(tmp_path / "o.vtk"), "--alpha", "1.5"]) == EXIT_INPUT


def test_unwritable_output_directory(cube_obj, tmp_path):
    assert main(["mesh", str(cube_obj), "-o", str(tmp_path / "missing" / "o.vtk")]) == EXIT_INPUT


def test_empty_core_is_topology_failure(tmp_path, capsys):
    src = tmp_path / "sheet.obj"
    write_obj(src, *shapes.box(size=(1.0, 1.0, 0.01), n=2))
    rc = main(["mesh", str(src), "-o", str(tmp_path / "o.vtk"), "--max-level", "2", "-q"])
    assert rc == EXIT_TOPOLOGY
    assert "[exterior]" in capsys.readouterr().err


def test_config_file_parsing(tmp_path):
    cfg = tmp_path / "a.cfg"
    cfg.write_text("max-level = 6  # comment\nalpha=0.001\nstop_at_target = yes\ncurvature_thresholds = 1, 2\n")
    assert read_config_file(cfg) == {
        "max_level": 6,
        "alpha": 0.001,
        "stop_at_target": True,
        "curvature_thresholds": (1.0, 2.0),
    }


@pytest.mark.parametrize("text", ["bogus = 1\n", "alpha\n", "max_level = six\n"])
def test_bad_config_file(tmp_path, cube_obj, text):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    with pytest.raises(ConfigFileError):
        read_config_file(cfg)
    assert main(["mesh", str(cube_obj), "-o", str(tmp_path / "o.vtk"), "--config", str(cfg)]) == EXIT_INPUT


def test_flags_override_config_file(cube_obj, tmp_path):
    from hexoct.cli import build_parser, config_from_args

    cfg = tmp_path / "a.cfg"
    cfg.write_text("max_level = 6\nalpha = 0.002\n")
    args = build_parser().parse_args(
        ["mesh", str(cube_obj), "-o", "o.vtk", "--config", str(cfg), "--max-level", "4", "--stop-at-target"]
    )
    pc = config_from_args(args)
    assert pc.max_level == 4
    assert pc.optimizer.alpha == 0.002
    assert pc.optimizer.stop_at_target
