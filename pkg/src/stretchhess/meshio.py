"""TetGen-style .node/.ele files, pin lists, JSON bundles and trace CSVs."""
from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from pathlib import Path

import numpy as np

from .assembly import ConstraintSet, TetMesh

__all__ = [
    "ParseError",
    "MeshWarning",
    "read_node",
    "read_ele",
    "node_index_base",
    "load_tetgen",
    "save_node",
    "save_ele",
    "load_pins",
    "save_pins",
    "save_trace_csv",
    "load_bundle",
    "save_bundle",
    "TRACE_HEADER",
]

log = logging.getLogger(__name__)

TRACE_HEADER = ("iter", "energy", "grad_inf", "step", "clamps", "cg_iters", "ms")


class ParseError(ValueError):
    def __init__(self, path, line: int | None, message: str):
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")
        self.path = str(path)
        self.line = line


class MeshWarning(UserWarning):
    pass


def _content_lines(path):
    """Yield ``(line_number, tokens)`` for non-blank, non-comment lines."""
    with open(path, encoding="utf-8") as fh:
        for no, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if text:
                yield no, text.split()


def _float(tok: str, path, no: int) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(path, no, f"expected a number, got '{tok}'") from None
    if not math.isfinite(v):
        raise ParseError(path, no, f"non-finite value '{tok}'")
    return v


def _int(tok: str, path, no: int) -> int:
    try:
        return int(tok)
    except ValueError:
        raise ParseError(path, no, f"expected an integer, got '{tok}'") from None


def read_node(path) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(ids, coords)`` from a .node file."""
    lines = _content_lines(path)
    try:
        no, head = next(lines)
    except StopIteration:
        raise ParseError(path, None, "empty node file") from None
    count = _int(head[0], path, no)
    dim = _int(head[1], path, no) if len(head) > 1 else 3
    if dim != 3:
        raise ParseError(path, no, f"only 3D node files are supported (dim={dim})")
    if count < 0:
        raise ParseError(path, no, "negative node count")
    ids = np.empty(count, dtype=np.int64)
    pts = np.empty((count, 3))
    last = no
    for k in range(count):
        try:
            no, tok = next(lines)
        except StopIteration:
            raise ParseError(path, last + 1, f"expected {count} nodes, found {k}") from None
        if len(tok) < 4:
            raise ParseError(path, no, "node line needs an id and three coordinates")
        ids[k] = _int(tok[0], path, no)
        pts[k] = [_float(t, path, no) for t in tok[1:4]]
        last = no
    for no, _ in lines:
        raise ParseError(path, no, f"more than {count} nodes")
    return ids, pts


def read_ele(path) -> tuple[list[int], np.ndarray]:
    """Return ``(line_numbers, vertex_ids)`` from a .ele file."""
    lines = _content_lines(path)
    try:
        no, head = next(lines)
    except StopIteration:
        raise ParseError(path, None, "empty element file") from None
    count = _int(head[0], path, no)
    per = _int(head[1], path, no) if len(head) > 1 else 4
    if per != 4:
        raise ParseError(path, no, f"only 4-node tetrahedra are supported (got {per})")
    tets = np.empty((count, 4), dtype=np.int64)
    where = []
    last = no
    for k in range(count):
        try:
            no, tok = next(lines)
        except StopIteration:
            raise ParseError(path, last + 1, f"expected {count} elements, found {k}") from None
        if len(tok) < 5:
            raise ParseError(path, no, "element line needs an id and four vertex ids")
        tets[k] = [_int(t, path, no) for t in tok[1:5]]
        where.append(no)
        last = no
    for no, _ in lines:
        raise ParseError(path, no, f"more than {count} elements")
    return where, tets


def node_index_base(node_path) -> int:
    ids, _ = read_node(node_path)
    return int(ids[0]) if len(ids) else 0


def load_tetgen(node_path, ele_path) -> TetMesh:
    """Load a mesh whose deformed pose starts at the rest pose.

    Node ids must be consecutive from 0 or 1. Negatively oriented tetrahedra
    are repaired by swapping their last two vertices, with a warning.
    """
    ids, pts = read_node(node_path)
    base = int(ids[0]) if len(ids) else 0
    if base not in (0, 1) or np.any(ids != np.arange(base, base + len(ids))):
        raise ParseError(node_path, None, "node ids must be consecutive starting at 0 or 1")
    where, tets = read_ele(ele_path)
    rows = tets - base
    bad = np.argwhere((rows < 0) | (rows >= len(pts)))
    if len(bad):
        k = bad[0][0]
        raise ParseError(ele_path, where[k], f"vertex id {tets[k, bad[0][1]]} does not exist")

    p = pts[rows]
    vol = np.einsum(
        "ij,ij->i", np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), p[:, 3] - p[:, 0]
    ) if len(rows) else np.zeros(0)
    flip = vol < 0
    if np.any(flip):
        rows[flip] = rows[flip][:, [0, 1, 3, 2]]
        warnings.warn(f"reoriented {int(flip.sum())} inverted tetrahedra", MeshWarning, stacklevel=2)
    return TetMesh.from_rest(pts, rows)


def save_node(mesh: TetMesh, path, *, positions=None, base: int = 0) -> None:
    """Write positions (deformed by default) with round-trip exact decimals."""
    pts = mesh.x if positions is None else np.asarray(positions, dtype=float)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(pts)} 3 0 0\n")
        for i, (a, b, c) in enumerate(pts):
            fh.write(f"{i + base} {float(a)!r} {float(b)!r} {float(c)!r}\n")


def save_ele(mesh: TetMesh, path, *, base: int = 0) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{mesh.n_elements} 4 0\n")
        for i, t in enumerate(mesh.tets):
            fh.write(f"{i + base} " + " ".join(str(int(v) + base) for v in t) + "\n")


def load_pins(path, base: int = 0, n_vertices: int | None = None) -> ConstraintSet:
    """Read ``vertex_id tx ty tz`` lines (ids in the node file's numbering)."""
    idx, tgt = [], []
    for no, tok in _content_lines(path):
        if len(tok) != 4:
            raise ParseError(path, no, "pin lines are 'vertex_id tx ty tz'")
        v = _int(tok[0], path, no) - base
        if v < 0 or (n_vertices is not None and v >= n_vertices):
            raise ParseError(path, no, f"pinned vertex {tok[0]} does not exist")
        idx.append(v)
        tgt.append([_float(t, path, no) for t in tok[1:]])
    return ConstraintSet(np.array(idx, dtype=np.int64), np.array(tgt, dtype=float).reshape(-1, 3))


def save_pins(pins: ConstraintSet, path, base: int = 0) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v, (a, b, c) in zip(pins.indices, pins.targets):
            fh.write(f"{int(v) + base} {float(a)!r} {float(b)!r} {float(c)!r}\n")


def save_trace_csv(trace, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in trace.records:
            w.writerow(
                [r.iter, repr(float(r.energy)), repr(float(r.grad_inf)), repr(float(r.step)),
                 r.clamps, r.cg_iters, f"{r.ms:.3f}"]
            )


def load_bundle(path) -> dict:
    """Read a single-file JSON bundle.

    Keys: ``rest`` (n x 3), ``tets`` (m x 4, 0-based), optional ``x``,
    ``pins`` (list of ``{"vertex": i, "target": [..]}``), ``energy``
    (``{"name": .., "mu": .., "lambda": ..}``) and ``solver`` (SolverConfig
    fields). Returns a dict with ``mesh``, ``pins``, ``energy``, ``solver``.
    """
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, exc.msg) from None
    if "rest" not in data or "tets" not in data:
        raise ParseError(path, None, "bundle needs 'rest' and 'tets'")
    rest = np.asarray(data["rest"], dtype=float)
    x = np.asarray(data.get("x", data["rest"]), dtype=float)
    if not (np.isfinite(rest).all() and np.isfinite(x).all()):
        raise ParseError(path, None, "non-finite coordinates")
    mesh = TetMesh(rest, x, np.asarray(data["tets"], dtype=np.int64))
    pin_list = data.get("pins", [])
    pins = ConstraintSet(
        np.array([p["vertex"] for p in pin_list], dtype=np.int64),
        np.array([p["target"] for p in pin_list], dtype=float).reshape(-1, 3),
    )
    return {
        "mesh": mesh,
        "pins": pins,
        "energy": dict(data.get("energy", {"name": "arap"})),
        "solver": dict(data.get("solver", {})),
    }


def save_bundle(path, mesh: TetMesh, pins: ConstraintSet | None = None, energy=None, solver=None) -> None:
    data = {
        "rest": mesh.rest.tolist(),
        "x": mesh.x.tolist(),
        "tets": mesh.tets.tolist(),
        "pins": [
            {"vertex": int(v), "target": [float(c) for c in t]}
            for v, t in zip(pins.indices, pins.targets)
        ] if pins is not None else [],
        "energy": energy or {"name": "arap"},
        "solver": solver or {},
    }
    Path(path).write_text(json.dumps(data, indent=1), encoding="utf-8")
