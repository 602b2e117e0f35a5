import json
import warnings

import numpy as np
import pytest

from stretchhess.assembly import ConstraintSet, precompute
from stretchhess.energy import Arap
from stretchhess.fixtures import cube_mesh, twisted_cube, unit_tet
from stretchhess.meshio import (
    TRACE_HEADER,
    MeshWarning,
    ParseError,
    load_bundle,
    load_pins,
    load_tetgen,
    node_index_base,
    save_bundle,
    save_ele,
    save_node,
    save_pins,
    save_trace_csv,
)
from stretchhess.solver import SolverConfig, minimize

UNIT_NODE = """4 3 0 0
# unit tetrahedron
{0} 0 0 0
{1} 1 0 0
{2} 0 1 0
{3} 0 0 1
"""


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def _unit_files(tmp_path, base=0):
    ids = [base + i for i in range(4)]
    node = _write(tmp_path, f"u{base}.node", UNIT_NODE.format(*ids))
    ele = _write(tmp_path, f"u{base}.ele", "1 4 0\n{} {} {} {} {}\n".format(base, *ids))
    return node, ele


def test_unit_tet_volume(tmp_path):
    mesh = load_tetgen(*_unit_files(tmp_path))
    assert precompute(mesh).volume[0] == pytest.approx(1 / 6)
    assert np.array_equal(mesh.x, mesh.rest)


def test_zero_and_one_based_agree(tmp_path):
    a = load_tetgen(*_unit_files(tmp_path, 0))
    b = load_tetgen(*_unit_files(tmp_path, 1))
    assert np.array_equal(a.rest, b.rest)
    assert np.array_equal(a.tets, b.tets)
    assert node_index_base(tmp_path / "u1.node") == 1


def test_truncated_node_file_reports_line(tmp_path):
    node = _write(tmp_path, "t.node", "4 3 0 0\n0 0 0 0\n1 1 0 0\n")
    ele = _write(tmp_path, "t.ele", "1 4 0\n0 0 1 2 3\n")
    with pytest.raises(ParseError) as info:
        load_tetgen(node, ele)
    assert info.value.line == 4
    assert "t.node:4" in str(info.value)


def test_truncated_ele_file_reports_line(tmp_path):
    node, _ = _unit_files(tmp_path)
    ele = _write(tmp_path, "t.ele", "2 4 0\n0 0 1 2 3\n")
    with pytest.raises(ParseError) as info:
        load_tetgen(node, ele)
    assert info.value.line == 3


@pytest.mark.parametrize("bad", ["nan", "inf", "-inf", "abc"])
def test_bad_coordinates_rejected(tmp_path, bad):
    node = _write(tmp_path, "b.node", f"4 3 0 0\n0 0 0 0\n1 1 0 0\n2 0 {bad} 0\n3 0 0 1\n")
    ele = _write(tmp_path, "b.ele", "1 4 0\n0 0 1 2 3\n")
    with pytest.raises(ParseError) as info:
        load_tetgen(node, ele)
    assert info.value.line == 4


def test_missing_vertex_id(tmp_path):
    node, _ = _unit_files(tmp_path)
    ele = _write(tmp_path, "m.ele", "1 4 0\n0 0 1 2 7\n")
    with pytest.raises(ParseError, match="does not exist") as info:
        load_tetgen(node, ele)
    assert info.value.line == 2


def test_extra_lines_rejected(tmp_path):
    node, _ = _unit_files(tmp_path)
    ele = _write(tmp_path, "x.ele", "1 4 0\n0 0 1 2 3\n1 0 1 2 3\n")
    with pytest.raises(ParseError):
        load_tetgen(node, ele)


def test_inverted_tet_reoriented_with_warning(tmp_path):
    node, _ = _unit_files(tmp_path)
    ele = _write(tmp_path, "i.ele", "1 4 0\n0 0 2 1 3\n")
    with pytest.warns(MeshWarning, match="1"):
        mesh = load_tetgen(node, ele)
    assert precompute(mesh).volume[0] == pytest.approx(1 / 6)


def test_well_oriented_mesh_is_silent(tmp_path):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        load_tetgen(*_unit_files(tmp_path))


def test_node_round_trip_is_bit_exact(tmp_path):
    mesh, _ = twisted_cube()
    rng = np.random.default_rng(0)
    mesh.x = mesh.x + rng.normal(size=mesh.x.shape) * 1e-3
    save_node(mesh, tmp_path / "o.node", base=1)
    save_ele(mesh, tmp_path / "o.ele", base=1)
    back = load_tetgen(tmp_path / "o.node", tmp_path / "o.ele")
    assert np.array_equal(back.rest, mesh.x)
    assert np.array_equal(back.tets, mesh.tets)


def test_pins_round_trip(tmp_path):
    _, pins = twisted_cube()
    save_pins(pins, tmp_path / "p.txt", base=1)
    back = load_pins(tmp_path / "p.txt", base=1, n_vertices=64)
    assert np.array_equal(back.indices, pins.indices)
    assert np.array_equal(back.targets, pins.targets)


def test_pins_validation(tmp_path):
    p = _write(tmp_path, "p.txt", "0 0 0 0\n9 1 1 1\n")
    with pytest.raises(ParseError) as info:
        load_pins(p, n_vertices=4)
    assert info.value.line == 2
    with pytest.raises(ParseError):
        load_pins(_write(tmp_path, "q.txt", "0 0 0\n"))


def test_empty_trace_is_header_only(tmp_path):
    mesh = cube_mesh(1)
    _, trace = minimize(mesh, Arap(), ConstraintSet.at_rest(mesh, [0]))
    save_trace_csv(trace, tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines() == [",".join(TRACE_HEADER)]


def test_trace_has_one_row_per_iteration(tmp_path):
    mesh, pins = twisted_cube()
    _, trace = minimize(mesh, Arap(), pins, SolverConfig(max_iters=3))
    save_trace_csv(trace, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert len(lines) == 4
    assert [int(r.split(",")[0]) for r in lines[1:]] == [1, 2, 3]
    assert float(lines[1].split(",")[1]) == trace.records[0].energy


def test_bundle_round_trip(tmp_path):
    mesh, pins = twisted_cube()
    energy = {"name": "neohookean", "mu": 1.0, "lambda": 3.0}
    save_bundle(tmp_path / "b.json", mesh, pins, energy, {"max_iters": 7})
    got = load_bundle(tmp_path / "b.json")
    assert np.array_equal(got["mesh"].x, mesh.x)
    assert np.array_equal(got["mesh"].rest, mesh.rest)
    assert np.array_equal(got["pins"].targets, pins.targets)
    assert got["energy"] == energy
    assert got["solver"] == {"max_iters": 7}


def test_bundle_errors(tmp_path):
    with pytest.raises(ParseError):
        load_bundle(_write(tmp_path, "a.json", "{not json"))
    with pytest.raises(ParseError):
        load_bundle(_write(tmp_path, "b.json", json.dumps({"rest": [[0, 0, 0]]})))
    m = unit_tet()
    data = {"rest": m.rest.tolist(), "tets": m.tets.tolist(), "x": [[float("nan")] * 3] * 4}
    with pytest.raises(ParseError):
        load_bundle(_write(tmp_path, "c.json", json.dumps(data)))
