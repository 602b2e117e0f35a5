import csv
import subprocess
import sys

import numpy as np
import pytest

from stretchhess.cli import EXIT_INPUT, EXIT_MAX_ITERS, EXIT_OK, main
from stretchhess.fixtures import cube_mesh, twisted_cube, unit_tet
from stretchhess.meshio import load_tetgen, save_bundle, save_ele, save_node, save_pins


@pytest.fixture
def unit_files(tmp_path):
    m = unit_tet()
    save_node(m, tmp_path / "u.node")
    save_ele(m, tmp_path / "u.ele")
    return tmp_path / "u.node", tmp_path / "u.ele"


@pytest.fixture
def twist_files(tmp_path):
    mesh, pins = twisted_cube()
    save_node(mesh, tmp_path / "c.node", positions=mesh.rest)
    save_ele(mesh, tmp_path / "c.ele")
    save_node(mesh, tmp_path / "c0.node")
    save_pins(pins, tmp_path / "c.pins")
    return tmp_path


def _trace(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_rest_mesh_converges_at_once(tmp_path, capsys):
    m = cube_mesh(1)
    save_node(m, tmp_path / "r.node")
    save_ele(m, tmp_path / "r.ele")
    code = main(["optimize", "--node", str(tmp_path / "r.node"), "--ele", str(tmp_path / "r.ele"),
                 "--trace", str(tmp_path / "t.csv"), "--out-node", str(tmp_path / "o.node")])
    assert code == EXIT_OK
    assert _trace(tmp_path / "t.csv") == []
    assert np.array_equal(load_tetgen(tmp_path / "o.node", tmp_path / "r.ele").rest, m.rest)


def test_missing_node_prints_usage(unit_files, capsys):
    code = main(["optimize", "--ele", str(unit_files[1])])
    assert code == EXIT_INPUT
    assert "usage" in capsys.readouterr().err


def test_unknown_flag_exits_one(capsys):
    with pytest.raises(SystemExit) as info:
        main(["optimize", "--bogus"])
    assert info.value.code == 1


def test_unreadable_mesh_exits_one(tmp_path, capsys):
    bad = tmp_path / "bad.node"
    bad.write_text("4 3 0 0\n0 0 0 0\n")
    code = main(["optimize", "--node", str(bad), "--ele", str(bad)])
    assert code == EXIT_INPUT
    assert "bad.node" in capsys.readouterr().err


@pytest.mark.parametrize("energy", ["arap", "symdirichlet", "neohookean"])
def test_twisted_cube_optimize(twist_files, energy, capsys):
    d = twist_files
    code = main(["optimize", "--node", str(d / "c.node"), "--ele", str(d / "c.ele"),
                 "--init-node", str(d / "c0.node"), "--pins", str(d / "c.pins"),
                 "--energy", energy, "--trace", str(d / "t.csv"), "--out-node", str(d / "o.node")])
    assert code == EXIT_OK
    rows = _trace(d / "t.csv")
    e = [float(r["energy"]) for r in rows]
    assert 0 < len(rows) <= 100
    assert all(b <= a for a, b in zip(e, e[1:]))
    assert float(rows[-1]["grad_inf"]) < 1e-6


def test_max_iters_exit_code(twist_files, capsys):
    d = twist_files
    code = main(["optimize", "--node", str(d / "c.node"), "--ele", str(d / "c.ele"),
                 "--init-node", str(d / "c0.node"), "--pins", str(d / "c.pins"), "--max-iters", "1"])
    assert code == EXIT_MAX_ITERS


def test_bundle_input(tmp_path, capsys):
    mesh, pins = twisted_cube()
    save_bundle(tmp_path / "b.json", mesh, pins, {"name": "symdirichlet"})
    code = main(["optimize", "--bundle", str(tmp_path / "b.json"), "--trace", str(tmp_path / "t.csv")])
    assert code == EXIT_OK
    assert float(_trace(tmp_path / "t.csv")[-1]["energy"]) == pytest.approx(6.521841217063377, abs=1e-9)
    # an explicit flag wins over the bundle
    main(["optimize", "--bundle", str(tmp_path / "b.json"), "--energy", "arap", "--trace", str(tmp_path / "t.csv")])
    assert float(_trace(tmp_path / "t.csv")[-1]["energy"]) == pytest.approx(0.12412704585288076, abs=1e-9)


def test_verify_arap(capsys):
    code = main(["verify", "--samples", "100", "--seed", "42", "--energy", "arap", "--perf-elements", "2000"])
    out = capsys.readouterr().out
    assert code == EXIT_OK
    assert "PASS" in out and "FAIL" not in out


def test_verify_neohookean(capsys):
    assert main(["verify", "--samples", "30", "--energy", "neohookean", "--perf-elements", "1000"]) == EXIT_OK


def test_verify_rejects_zero_samples(capsys):
    assert main(["verify", "--samples", "0"]) == EXIT_INPUT


def test_eig_rest_arap(unit_files, capsys):
    code = main(["eig", "--node", str(unit_files[0]), "--ele", str(unit_files[1])])
    out = capsys.readouterr().out
    assert code == EXIT_OK
    pairs = [ln.split() for ln in out.splitlines() if ln.startswith("pair")]
    assert len(pairs) == 3
    for p in pairs:
        assert float(p[p.index("twist") + 1]) == pytest.approx(2.0)
        assert float(p[p.index("flip") + 1]) == pytest.approx(0.0, abs=1e-12)
    assert "total clamps    3" in out


def test_eig_oracle_lists_analytic_values(unit_files, capsys):
    main(["eig", "--node", str(unit_files[0]), "--ele", str(unit_files[1]), "--oracle"])
    out = capsys.readouterr().out
    line = next(ln for ln in out.splitlines() if ln.startswith("jacobi 9x9"))
    vals = np.array([float(v) for v in line.split()[3:]])
    assert np.allclose(vals, [0, 0, 0, 2, 2, 2, 2, 2, 2], atol=1e-12)


def test_eig_element_out_of_range(unit_files, capsys):
    code = main(["eig", "--node", str(unit_files[0]), "--ele", str(unit_files[1]), "--element", "1"])
    assert code == EXIT_INPUT


def test_module_entry_point_help():
    out = subprocess.run([sys.executable, "-m", "stretchhess", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    assert "optimize" in out.stdout and "verify" in out.stdout and "eig" in out.stdout
