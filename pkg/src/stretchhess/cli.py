"""``stretchhess`` command line: optimize, verify, eig."""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import meshio
from .assembly import ConstraintSet, MeshError, precompute
from .checks import Tolerances, perf_ratio, three_way
from .eigsys import DEFAULT_EPS, element_hessian, factorize_element, project_spd
from .energy import MODEL_NAMES, PAIRS, DomainError, make_model
from .smallmat import jacobi_eig, signed_svd3, sym_eig3
from .solver import SolverConfig, Status, minimize

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_MAX_ITERS = 2
EXIT_STALLED = 3

log = logging.getLogger("stretchhess")


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with status 1; status 2 means 'hit max iterations'."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _model(args):
    return make_model(args.energy, mu=args.mu, **{"lambda": args.lam})


def _energy_flags(p, choices=MODEL_NAMES, default="arap", unset=False):
    # with unset=True the defaults stay None so a bundle can supply them
    p.add_argument("--energy", choices=choices, default=None if unset else default,
                   help=f"energy model (default: {default})")
    p.add_argument("--mu", type=float, default=None if unset else 1.0,
                   help="Neo-Hookean shear modulus (default: 1.0)")
    p.add_argument("--lambda", dest="lam", type=float, default=None if unset else 1.0,
                   help="Neo-Hookean bulk modulus (default: 1.0)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="stretchhess", description="Projected Newton for principal-stretch energies on tet meshes.")
    ap.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("optimize", help="minimize distortion energy with pinned vertices")
    p.add_argument("--node", help="TetGen .node file (rest pose)")
    p.add_argument("--ele", help="TetGen .ele file")
    p.add_argument("--bundle", help="JSON bundle instead of --node/--ele/--pins")
    p.add_argument("--init-node", help=".node file with the starting deformed pose (default: rest pose)")
    _energy_flags(p, unset=True)
    p.add_argument("--pins", help="pin file, one 'vertex_id tx ty tz' per line (default: no pins)")
    p.add_argument("--out-node", help="write the optimized pose here")
    p.add_argument("--trace", help="write the per-iteration trace CSV here")
    p.add_argument("--max-iters", type=int, help="iteration cap (default: 100)")
    p.add_argument("--tol", type=float, help="gradient infinity-norm tolerance (default: 1e-6 * mesh size)")
    p.add_argument("--eps", type=float, help=f"eigenvalue clamp floor (default: {DEFAULT_EPS})")
    p.set_defaults(func=cmd_optimize, usage=p.format_usage())

    p = sub.add_parser("verify", help="check analytic Hessians against oracles on random elements")
    p.add_argument("--samples", type=int, default=100, help="random elements per energy (default: %(default)s)")
    p.add_argument("--seed", type=int, default=42, help="RNG seed (default: %(default)s)")
    _energy_flags(p, choices=MODEL_NAMES + ("all",), default="all")
    p.add_argument("--perf-elements", type=int, default=10_000,
                   help="batch size for the timing comparison, 0 to skip (default: %(default)s)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("eig", help="print the analytic eigensystem of one element")
    p.add_argument("--node", required=True, help="TetGen .node file (rest pose)")
    p.add_argument("--ele", required=True, help="TetGen .ele file")
    p.add_argument("--init-node", help=".node file with the deformed pose (default: rest pose)")
    p.add_argument("--element", type=int, default=0, help="element index, 0-based (default: %(default)s)")
    _energy_flags(p)
    p.add_argument("--eps", type=float, default=DEFAULT_EPS, help="eigenvalue clamp floor (default: %(default)s)")
    p.add_argument("--oracle", action="store_true", help="also print Jacobi spectra of the element Hessian")
    p.set_defaults(func=cmd_eig)
    return ap


def _load_pose(mesh, path):
    _, pts = meshio.read_node(path)
    if pts.shape != mesh.rest.shape:
        raise MeshError(f"{path}: {len(pts)} nodes, mesh has {mesh.n_vertices}")
    mesh.x = pts


def _load_inputs(args):
    """Return mesh, pins, model and solver config; explicit flags beat bundle values."""
    energy, solver = {}, {}
    if args.bundle:
        b = meshio.load_bundle(args.bundle)
        mesh, pins, energy, solver = b["mesh"], b["pins"], b["energy"], b["solver"]
    else:
        mesh, pins = _load_files(args)
    model = make_model(
        args.energy or energy.get("name", "arap"),
        mu=args.mu if args.mu is not None else energy.get("mu", 1.0),
        **{"lambda": args.lam if args.lam is not None else energy.get("lambda", 1.0)},
    )
    flags = {"max_iters": args.max_iters, "grad_tol": args.tol, "eps": args.eps}
    solver.update({k: v for k, v in flags.items() if v is not None})
    return mesh, pins, model, SolverConfig(**solver)


def _load_files(args):
    mesh = meshio.load_tetgen(args.node, args.ele)
    if args.init_node:
        _load_pose(mesh, args.init_node)
    pins = ConstraintSet()
    if args.pins:
        base = meshio.node_index_base(args.node)
        pins = meshio.load_pins(args.pins, base, mesh.n_vertices)
    return mesh, pins


def cmd_optimize(args) -> int:
    if not args.bundle and not (args.node and args.ele):
        sys.stderr.write(args.usage)
        print("error: --node and --ele are required (or pass --bundle)", file=sys.stderr)
        return EXIT_INPUT
    try:
        mesh, pins, model, cfg = _load_inputs(args)
        out, trace = minimize(mesh, model, pins, cfg)
    except (OSError, ValueError, TypeError) as exc:  # parse, mesh, domain and config errors
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.out_node:
        meshio.save_node(out, args.out_node)
    if args.trace:
        meshio.save_trace_csv(trace, args.trace)
    print(
        f"{trace.status.value}: {trace.iterations} iterations, "
        f"energy {trace.initial_energy:.10g} -> {trace.energies[-1]:.10g}, "
        f"grad_inf {trace.final_grad_inf:.3e}"
    )
    return {Status.CONVERGED: EXIT_OK, Status.MAX_ITERS: EXIT_MAX_ITERS}.get(trace.status, EXIT_STALLED)


def cmd_verify(args) -> int:
    if args.samples < 1:
        print("error: --samples must be at least 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        names = MODEL_NAMES if args.energy == "all" else (args.energy,)
        models = [make_model(n, mu=args.mu, **{"lambda": args.lam}) for n in names]
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    tol = Tolerances()
    ok = True
    print(f"{'energy':<14}{'entrywise':>12}{'fd_hess':>12}{'gradient':>12}{'net_force':>12}{'null':>12}{'sec':>8}")
    for i, model in enumerate(models):
        rep = three_way(model, args.samples, args.seed + i)
        ok &= rep.ok(tol)
        print(
            f"{model.name:<14}{rep.entrywise:12.3e}{rep.fd_hessian:12.3e}{rep.gradient:12.3e}"
            f"{rep.net_force:12.3e}{rep.null_space:12.3e}{rep.seconds:8.2f}"
        )
    print(
        f"tolerances    {tol.entrywise:12.0e}{tol.fd_hessian:12.0e}{tol.gradient:12.0e}"
        f"{tol.net_force:12.0e}{tol.null_space:12.0e}"
    )
    if args.perf_elements > 0:
        t_an, t_jac, ratio = perf_ratio(models[0], args.perf_elements, args.seed)
        print(
            f"perf ({args.perf_elements} elements, {models[0].name}): analytic {t_an:.3f}s, "
            f"jacobi {t_jac:.3f}s, ratio {ratio:.1f}x"
        )
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_INPUT


def _fmt(v) -> str:
    return " ".join(f"{float(x): .10g}" for x in np.ravel(v))


def cmd_eig(args) -> int:
    try:
        model = _model(args)
        mesh = meshio.load_tetgen(args.node, args.ele)
        if args.init_node:
            _load_pose(mesh, args.init_node)
        if not 0 <= args.element < mesh.n_elements:
            raise MeshError(f"element {args.element} out of range (mesh has {mesh.n_elements})")
        refs = precompute(mesh)
        k = args.element
        t = mesh.tets[k]
        p = mesh.x[t]
        f = (p[1:] - p[0]).T @ refs.dm_inv[k]
        svd = signed_svd3(f)
        if not np.all(model.admissible(svd.sigma)):
            raise DomainError(f"element {k}: stretches {svd.sigma} outside {model.name} domain", element=k)
        fact = factorize_element(model, svd, refs.dfdx[k])
        proj = project_spd(fact, args.eps)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    lam = sym_eig3(fact.d_stretch).values
    floor = args.eps * max(1.0, float(max(lam.max(), fact.d_pairs.max())))
    print(f"element {k}  energy {model.name}  vertices {' '.join(map(str, t))}")
    print(f"sigma           {_fmt(svd.sigma)}")
    print(f"stretch block   {_fmt(lam)}")
    for (a, b), (tw, fl) in zip(PAIRS, fact.d_pairs):
        print(f"pair ({a},{b})       twist {tw: .10g}   flip {fl: .10g}")
    print(f"clamp floor     {floor:.3e}")
    print(f"clamped stretch {_fmt(np.maximum(lam, floor))}  ({int((lam < floor).sum())} raised)")
    dp = fact.d_pairs
    print(f"clamped pairs   {_fmt(np.maximum(dp, floor))}  ({int((dp < floor).sum())} raised)")
    print(f"total clamps    {int(proj.clamped)}")
    if args.oracle:
        h = element_hessian(fact)
        print(f"jacobi 12x12    {_fmt(jacobi_eig(h)[0])}")
        print(f"jacobi 9x9 v1-3 {_fmt(jacobi_eig(h[3:, 3:])[0])}")
        print(f"jacobi H+ 12x12 {_fmt(jacobi_eig(proj.matrix)[0])}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    logging.captureWarnings(True)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
