"""Command-line harness: generate, plan, factorize, solve, verify, bench."""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import engine, fileio, schedule as schedule_mod, tasks as tasks_mod, tree as tree_mod
from .errors import TracefrontError, ZeroPivotError
from .fem import RHS_FUNCTIONS, Mesh, assemble_system, generate_fronts

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_VERIFY = 3

DEFAULT_ORACLE_CAP = 2000
DEFAULT_MAX_DOF = 100_000


@dataclass
class RunConfig:
    command: str
    n_elements: int = 1
    degree: int = 1
    rhs_name: str = "one"
    workers: int = 1
    out: Path = Path(".")
    dot_graph: Optional[Path] = None
    dot_tree: Optional[Path] = None
    oracle_cap: int = DEFAULT_ORACLE_CAP
    sweep: tuple[int, ...] = ()
    degrees: tuple[int, ...] = ()
    workers_list: tuple[int, ...] = ()
    repeats: int = 1
    seed: Optional[int] = None
    tolerance: Optional[float] = None
    max_dof: int = DEFAULT_MAX_DOF


class _Parser(argparse.ArgumentParser):
    """argparse variant using exit code 1 for usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated int list: {text!r}")


def build_parser() -> _Parser:
    parser = _Parser(prog="tracefront", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, workers=True):
        p.add_argument("--elements", type=int, required=True, help="element count")
        p.add_argument("--degree", type=int, default=1, help="basis degree (1-3)")
        p.add_argument("--rhs", default="one", choices=sorted(RHS_FUNCTIONS))
        if workers:
            p.add_argument("--workers", type=int, default=1)
        p.add_argument("--out", type=Path, default=Path("."))

    common(sub.add_parser("generate", help="write matrix, rhs, and manifest"), workers=False)

    p_plan = sub.add_parser("plan", help="report tree/task/schedule statistics")
    common(p_plan, workers=False)
    p_plan.add_argument("--dot-graph", type=Path, help="write task-graph DOT here")
    p_plan.add_argument("--dot-tree", type=Path, help="write tree DOT here")

    common(sub.add_parser("factorize", help="factorize and export L/U factors"))
    common(sub.add_parser("solve", help="factorize and solve, export solution"))

    p_verify = sub.add_parser("verify", help="compare against the dense oracle")
    common(p_verify)
    p_verify.add_argument("--oracle-cap", type=int, default=DEFAULT_ORACLE_CAP)
    p_verify.add_argument("--tolerance", type=float, default=None)
    p_verify.add_argument("--seed", type=int, default=None,
                          help="also check shuffled linearizations with this seed")

    p_bench = sub.add_parser("bench", help="timing sweep, CSV output")
    p_bench.add_argument("--sweep", type=_int_list, required=True,
                         help="comma-separated element counts")
    p_bench.add_argument("--degree", type=_int_list, default=(1,))
    p_bench.add_argument("--workers", type=_int_list, default=(1,))
    p_bench.add_argument("--rhs", default="one", choices=sorted(RHS_FUNCTIONS))
    p_bench.add_argument("--repeats", type=int, default=1)
    p_bench.add_argument("--seed", type=int, default=None)
    p_bench.add_argument("--out", type=Path, default=Path("bench.csv"))
    p_bench.add_argument("--max-dof", type=int, default=DEFAULT_MAX_DOF,
                         help="refuse sweep cells above this size")
    return parser


def _config_from_args(args) -> RunConfig:
    cfg = RunConfig(command=args.command)
    if args.command == "bench":
        cfg.sweep = args.sweep
        cfg.degrees = args.degree
        cfg.workers_list = args.workers
        cfg.rhs_name = args.rhs
        cfg.repeats = args.repeats
        cfg.seed = args.seed
        cfg.out = args.out
        cfg.max_dof = args.max_dof
        return cfg
    cfg.n_elements = args.elements
    cfg.degree = args.degree
    cfg.rhs_name = getattr(args, "rhs", "one")
    cfg.workers = getattr(args, "workers", 1)
    cfg.out = args.out
    cfg.dot_graph = getattr(args, "dot_graph", None)
    cfg.dot_tree = getattr(args, "dot_tree", None)
    cfg.oracle_cap = getattr(args, "oracle_cap", DEFAULT_ORACLE_CAP)
    cfg.tolerance = getattr(args, "tolerance", None)
    cfg.seed = getattr(args, "seed", None)
    return cfg


def _validated_mesh(cfg: RunConfig, parser: _Parser) -> Mesh:
    if cfg.n_elements < 1:
        parser.error(f"--elements must be >= 1, got {cfg.n_elements}")
    if cfg.degree not in (1, 2, 3):
        parser.error(f"--degree must be 1, 2, or 3, got {cfg.degree}")
    if cfg.workers < 1:
        parser.error(f"--workers must be >= 1, got {cfg.workers}")
    return Mesh(n_elements=cfg.n_elements, degree=cfg.degree)


def _build_pipeline(mesh: Mesh, rhs_name: str):
    system = assemble_system(mesh, RHS_FUNCTIONS[rhs_name])
    elim_tree = tree_mod.build_elimination_tree(
        tree_mod.sort_fronts(generate_fronts(mesh))
    )
    plan = tasks_mod.symbolic_eliminate(elim_tree, system)
    graph = tasks_mod.build_dependency_edges(tasks_mod.enumerate_tasks(plan), plan)
    foata = schedule_mod.compute_fnf(graph)
    return system, elim_tree, graph, foata


def _timed_factorize(graph, foata, system, workers: int):
    state = engine.init_state(system, graph.plan)
    t0 = time.perf_counter()
    if workers == 1:
        factors = engine.run_sequential(graph, state)
    else:
        factors = engine.run_concurrent(foata, graph, state, workers)
    wall = time.perf_counter() - t0
    return factors, wall


def cmd_generate(cfg: RunConfig, parser: _Parser) -> int:
    mesh = _validated_mesh(cfg, parser)
    system = assemble_system(mesh, RHS_FUNCTIONS[cfg.rhs_name])
    cfg.out.mkdir(parents=True, exist_ok=True)
    fileio.write_matrix_market_symmetric(cfg.out / "matrix.mtx", system)
    fileio.write_vector(cfg.out / "rhs.txt", system.rhs)
    manifest = {
        "n_elements": mesh.n_elements,
        "degree": mesh.degree,
        "n_dof": mesh.n_dof,
        "domain": [mesh.domain_start, mesh.domain_end],
        "rhs": cfg.rhs_name,
    }
    (cfg.out / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    )
    print(f"wrote matrix.mtx rhs.txt manifest.json to {cfg.out} (n_dof={mesh.n_dof})")
    return EXIT_OK


def cmd_plan(cfg: RunConfig, parser: _Parser) -> int:
    mesh = _validated_mesh(cfg, parser)
    _, elim_tree, graph, foata = _build_pipeline(mesh, cfg.rhs_name)
    report = tasks_mod.validate_dag(graph)
    stats = schedule_mod.schedule_stats(foata)
    print(f"n_dof={mesh.n_dof}")
    print(f"tree_depth={elim_tree.n_levels}")
    for kind in tasks_mod.TaskKind:
        print(f"tasks_{kind.name.lower()}={report.kind_counts[kind]}")
    print(f"tasks_total={graph.n_tasks}")
    print(f"foata_classes={stats.n_classes}")
    print(f"max_class_width={stats.max_width}")
    if cfg.dot_graph is not None:
        cfg.dot_graph.write_text(tasks_mod.export_dot(graph))
    if cfg.dot_tree is not None:
        cfg.dot_tree.write_text(tree_mod.tree_to_dot(elim_tree))
    return EXIT_OK


def cmd_factorize_solve(cfg: RunConfig, parser: _Parser) -> int:
    mesh = _validated_mesh(cfg, parser)
    system, _, graph, foata = _build_pipeline(mesh, cfg.rhs_name)
    factors, wall = _timed_factorize(graph, foata, system, cfg.workers)
    mode = "sequential" if cfg.workers == 1 else "concurrent"
    cfg.out.mkdir(parents=True, exist_ok=True)
    if cfg.command == "factorize":
        lower = dict(factors.l_entries)
        for z in factors.pivot_order:
            lower[(z, z)] = 1.0
        upper = {}
        for (z, y), v in factors.u_entries.items():
            upper[(z, y)] = v if z == y else v * factors.u_entries[(z, z)]
        fileio.write_matrix_market_general(cfg.out / "L.mtx", mesh.n_dof, mesh.n_dof, lower)
        fileio.write_matrix_market_general(cfg.out / "U.mtx", mesh.n_dof, mesh.n_dof, upper)
        fileio.write_vector(cfg.out / "pivot_order.txt", factors.pivot_order)
    else:
        solution = engine.solve(factors, system.rhs)
        fileio.write_vector(cfg.out / "solution.txt", solution)
        residual = np.linalg.norm(system.matvec(solution) - system.rhs)
        scale = np.linalg.norm(system.rhs)
        rel = residual / scale if scale > 0 else residual
        print(f"residual={rel:.3e}")
    print(
        f"mode={mode} n_dof={mesh.n_dof} p={mesh.degree} "
        f"workers={cfg.workers} wall_seconds={wall:.6f}"
    )
    return EXIT_OK


def cmd_verify(cfg: RunConfig, parser: _Parser) -> int:
    mesh = _validated_mesh(cfg, parser)
    if mesh.n_dof > cfg.oracle_cap:
        parser.error(
            f"n_dof={mesh.n_dof} exceeds the oracle cap {cfg.oracle_cap}; "
            "raise --oracle-cap to verify larger systems"
        )
    residual_tol = 1e-10 if cfg.tolerance is None else cfg.tolerance
    factor_tol = 1e-12 if cfg.tolerance is None else cfg.tolerance

    system, elim_tree, graph, foata = _build_pipeline(mesh, cfg.rhs_name)
    factors, _ = _timed_factorize(graph, foata, system, cfg.workers)

    dense = system.to_dense()
    lower, upper = factors.permuted_dense_factors()
    perm = factors.permutation()
    permuted = dense[np.ix_(perm, perm)]
    factor_dev = np.linalg.norm(lower @ upper - permuted) / np.linalg.norm(dense)

    solution = engine.solve(factors, system.rhs)
    _, _, oracle_solution = engine.dense_lu_oracle(dense, system.rhs)
    scale = np.linalg.norm(oracle_solution)
    solution_dev = np.linalg.norm(solution - oracle_solution) / (scale if scale > 0 else 1.0)
    rhs_scale = np.linalg.norm(system.rhs)
    residual = np.linalg.norm(dense @ solution - system.rhs) / (
        rhs_scale if rhs_scale > 0 else 1.0
    )

    shuffle_ok = True
    if cfg.seed is not None:
        reference = engine.init_state(system, graph.plan)
        engine.run_sequential(graph, reference)
        for k in range(5):
            state = engine.init_state(system, graph.plan)
            engine.run_linearized(
                graph, state, np.random.default_rng(cfg.seed + k)
            )
            if state.values != reference.values:
                shuffle_ok = False
        print(f"linearization_shuffles={'ok' if shuffle_ok else 'MISMATCH'}")

    print(f"factor_deviation={factor_dev:.3e} (tolerance {factor_tol:.1e})")
    print(f"solution_deviation={solution_dev:.3e} (tolerance {residual_tol:.1e})")
    print(f"residual={residual:.3e} (tolerance {residual_tol:.1e})")
    ok = (
        factor_dev <= factor_tol
        and solution_dev <= residual_tol
        and residual <= residual_tol
        and shuffle_ok
    )
    print("verify: PASS" if ok else "verify: FAIL")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_bench(cfg: RunConfig, parser: _Parser) -> int:
    if not cfg.sweep:
        parser.error("--sweep must list at least one element count")
    if cfg.repeats < 1:
        parser.error(f"--repeats must be >= 1, got {cfg.repeats}")
    for p in cfg.degrees:
        if p not in (1, 2, 3):
            parser.error(f"degree {p} not supported")
    for w in cfg.workers_list:
        if w < 1:
            parser.error(f"workers {w} not valid")
    rows = []
    for n_elements in cfg.sweep:
        if n_elements < 1:
            parser.error(f"element count {n_elements} not valid")
        for p in cfg.degrees:
            mesh = Mesh(n_elements=n_elements, degree=p)
            if mesh.n_dof > cfg.max_dof:
                parser.error(
                    f"n_dof={mesh.n_dof} exceeds --max-dof={cfg.max_dof}"
                )
            system, _, graph, foata = _build_pipeline(mesh, cfg.rhs_name)
            for workers in cfg.workers_list:
                walls = []
                for _ in range(cfg.repeats):
                    _, wall = _timed_factorize(graph, foata, system, workers)
                    walls.append(wall)
                mode = "sequential" if workers == 1 else "concurrent"
                rows.append([
                    mesh.n_dof, p, workers, mode,
                    f"{sum(walls) / len(walls):.6f}",
                    graph.n_tasks, foata.n_classes,
                ])
                print(
                    f"bench n_dof={mesh.n_dof} p={p} workers={workers} "
                    f"mode={mode} wall_seconds={rows[-1][4]}"
                )
    fileio.write_csv_rows(
        cfg.out,
        ["n_dof", "p", "workers", "mode", "wall_seconds", "tasks_total", "foata_classes"],
        rows,
    )
    print(f"wrote {len(rows)} rows to {cfg.out}")
    return EXIT_OK


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = _config_from_args(args)
    commands = {
        "generate": cmd_generate,
        "plan": cmd_plan,
        "factorize": cmd_factorize_solve,
        "solve": cmd_factorize_solve,
        "verify": cmd_verify,
        "bench": cmd_bench,
    }
    try:
        return commands[cfg.command](cfg, parser)
    except ZeroPivotError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except TracefrontError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
