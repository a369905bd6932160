"""Task alphabet and dependency graph for the multifrontal factorization.

Factorization is decomposed into four atomic task kinds over global matrix
positions: a division produces the pivot-row quotient a(z,y)/a(z,z), a
multiplication scales it by a pivot-column entry a(x,z), a subtraction
applies the product to a(x,y), and an assertion marks a position as final
(all writes to it have landed).  Dependency edges connect each task to the
tasks producing its inputs; subtractions aimed at the same position are
serialized into a chain, and the position's assertion hangs off the last
chain link.  The resulting DAG is the dependency graph of the sequential
elimination trace; every topological order replays the same arithmetic.

Pivot eligibility follows the elimination tree: a DOF can be eliminated at
the first level where exactly one front contains it.  Eliminations at the
right edge of the mesh can therefore precede eliminations at smaller
global indices; "row" and "column" neighbours of a pivot are always the
positions still active (not yet eliminated) when its turn comes, which is
what makes the arithmetic a correct LU elimination of the permuted matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple, Optional

from .errors import CycleError, SymbolicSingularityError
from .fem import GlobalSystem
from .tree import EliminationTree


class TaskKind(IntEnum):
    DIVISION = 1
    MULTIPLICATION = 2
    SUBTRACTION = 3
    ASSERTION = 4


class Task(NamedTuple):
    """One atomic operation.  front and pivot are -1 for assertions."""

    kind: TaskKind
    front: int
    pivot: int
    row: int
    col: int


@dataclass(frozen=True)
class PivotStep:
    """One pivot elimination: where it happens and which positions are active.

    ``active`` lists the global indices with a symbolically nonzero
    coupling to the pivot that are not yet eliminated, ascending.
    """

    node_id: int
    pivot: int
    active: tuple[int, ...]


@dataclass(frozen=True)
class NodeReorder:
    """The per-node front layout: eliminable pivots first, then indices
    shared with other fronts at this level, then already-computed ones."""

    node_id: int
    eliminable: tuple[int, ...]
    shared: tuple[int, ...]
    computed: tuple[int, ...]


@dataclass(frozen=True)
class EliminationPlan:
    """Output of symbolic elimination over the whole tree."""

    steps: tuple[PivotStep, ...]  # global elimination sequence
    reorders: tuple[NodeReorder, ...]  # per node, in visit order
    cells: frozenset[tuple[int, int]]  # every position ever stored (incl. fill)
    fill_cells: frozenset[tuple[int, int]]  # subset of cells created by elimination
    n_dof: int

    @property
    def pivot_order(self) -> tuple[int, ...]:
        return tuple(s.pivot for s in self.steps)


def symbolic_eliminate(tree: EliminationTree, system: GlobalSystem) -> EliminationPlan:
    """Walk the tree level by level and plan every pivot elimination.

    Maintains the symmetric nonzero pattern as adjacency sets; eliminating
    a pivot adds a clique over its active neighbours (the fill-in), so
    later pivots see the correct pattern.  The root eliminates everything
    that remains.
    """
    adj: dict[int, set[int]] = {g: set() for g in range(1, system.n_dof + 1)}
    cells: set[tuple[int, int]] = set()
    for (i, j), _ in system.symmetric_items():
        cells.add((i, j))
        if i != j:
            adj[i].add(j)

    eliminated: set[int] = set()
    steps: list[PivotStep] = []
    reorders: list[NodeReorder] = []
    fill: set[tuple[int, int]] = set()
    last_level = tree.n_levels - 1

    for level in range(tree.n_levels):
        for node_id in tree.levels[level]:
            node = tree.nodes[node_id]
            front = node.front
            members = dict(zip(front.indices, front.membership))
            eliminable = sorted(
                g
                for g in front.indices
                if g not in eliminated and (members[g] == 1 or level == last_level)
            )
            shared = sorted(
                g for g in front.indices if g not in eliminated and g not in eliminable
            )
            done = sorted(g for g in front.indices if g in eliminated)
            reorders.append(
                NodeReorder(
                    node_id=node_id,
                    eliminable=tuple(eliminable),
                    shared=tuple(shared),
                    computed=tuple(done),
                )
            )
            index_set = front.index_set
            for z in eliminable:
                if (z, z) not in cells:
                    raise SymbolicSingularityError(z)
                active = sorted(h for h in adj[z] if h not in eliminated)
                stray = [h for h in active if h not in index_set]
                if stray:
                    raise AssertionError(
                        f"pivot {z} couples to {stray} outside front {node_id}"
                    )
                steps.append(PivotStep(node_id=node_id, pivot=z, active=tuple(active)))
                for a in active:
                    if (a, a) not in cells:
                        cells.add((a, a))
                        fill.add((a, a))
                    for b in active:
                        if b != a and b not in adj[a]:
                            adj[a].add(b)
                            cells.add((a, b))
                            fill.add((a, b))
                eliminated.add(z)

    return EliminationPlan(
        steps=tuple(steps),
        reorders=tuple(reorders),
        cells=frozenset(cells),
        fill_cells=frozenset(fill),
        n_dof=system.n_dof,
    )


def enumerate_tasks(plan: EliminationPlan) -> list[Task]:
    """The task alphabet, in canonical order.

    Assertions come first (one per stored position, sorted), then per
    pivot step: its divisions, its multiplications, its subtractions.
    Each task value occurs exactly once.
    """
    tasks: list[Task] = [
        Task(TaskKind.ASSERTION, -1, -1, x, y) for (x, y) in sorted(plan.cells)
    ]
    for step in plan.steps:
        f, z, active = step.node_id, step.pivot, step.active
        for y in active:
            tasks.append(Task(TaskKind.DIVISION, f, z, z, y))
        for x in active:
            for y in active:
                tasks.append(Task(TaskKind.MULTIPLICATION, f, z, x, y))
        for x in active:
            for y in active:
                tasks.append(Task(TaskKind.SUBTRACTION, f, z, x, y))
    return tasks


@dataclass
class DependencyGraph:
    """Dependency DAG over the task alphabet (adjacency in both directions)."""

    tasks: list[Task]
    preds: list[list[int]]
    succs: list[list[int]]
    plan: EliminationPlan

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)

    @property
    def n_edges(self) -> int:
        return sum(len(p) for p in self.preds)

    def add_edge(self, src: int, dst: int) -> None:
        self.succs[src].append(dst)
        self.preds[dst].append(src)


def build_dependency_edges(tasks: list[Task], plan: EliminationPlan) -> DependencyGraph:
    """Wire the four dependency families into one DAG.

    Into each division: the assertions of its row entry and of the pivot.
    Into each multiplication: its division and the assertion of the
    pivot-column entry.  Into each subtraction: its multiplication, plus
    the previous subtraction aimed at the same position (chain form, in
    elimination-sequence order).  Into each assertion: the last link of
    its position's subtraction chain, if any.
    """
    graph = DependencyGraph(
        tasks=tasks,
        preds=[[] for _ in tasks],
        succs=[[] for _ in tasks],
        plan=plan,
    )
    n_asserts = len(plan.cells)
    assert_id = {t[3:]: i for i, t in enumerate(tasks[:n_asserts])}
    last_sub: dict[tuple[int, int], int] = {}

    tid = n_asserts  # replay the enumeration layout of the non-assertion block
    for step in plan.steps:
        z, active = step.pivot, step.active
        n, div_base = len(active), tid
        col_rank = {y: k for k, y in enumerate(active)}
        for y in active:
            graph.add_edge(assert_id[(z, y)], tid)
            graph.add_edge(assert_id[(z, z)], tid)
            tid += 1
        mul_base = tid
        for x in active:
            for y in active:
                graph.add_edge(div_base + col_rank[y], tid)
                graph.add_edge(assert_id[(x, z)], tid)
                tid += 1
        for k, x in enumerate(active):
            for m, y in enumerate(active):
                graph.add_edge(mul_base + k * n + m, tid)
                prev = last_sub.get((x, y))
                if prev is not None:
                    graph.add_edge(prev, tid)
                last_sub[(x, y)] = tid
                tid += 1
    for cell, sub_tid in last_sub.items():
        graph.add_edge(sub_tid, assert_id[cell])
    return graph


@dataclass(frozen=True)
class DagReport:
    ok: bool
    kind_counts: dict[TaskKind, int]
    longest_path: int  # in nodes; 0 for an empty graph
    cycle: Optional[tuple[Task, ...]] = None


def _topological_order(graph: DependencyGraph) -> Optional[list[int]]:
    """Kahn's algorithm; None if a cycle prevents completion."""
    indeg = [len(p) for p in graph.preds]
    ready = [i for i, d in enumerate(indeg) if d == 0]
    order: list[int] = []
    while ready:
        nxt: list[int] = []
        for u in ready:
            order.append(u)
            for v in graph.succs[u]:
                indeg[v] -= 1
                if indeg[v] == 0:
                    nxt.append(v)
        ready = nxt
    if len(order) != graph.n_tasks:
        return None
    return order


def _find_cycle(graph: DependencyGraph) -> tuple[Task, ...]:
    """Return the tasks of one cycle (graph is known to contain one)."""
    WHITE, GRAY, BLACK = 0, 1, 2
    color = [WHITE] * graph.n_tasks
    for start in range(graph.n_tasks):
        if color[start] != WHITE:
            continue
        path = [start]
        iters = [iter(graph.succs[start])]
        color[start] = GRAY
        while path:
            try:
                v = next(iters[-1])
            except StopIteration:
                color[path.pop()] = BLACK
                iters.pop()
                continue
            if color[v] == GRAY:
                cycle = path[path.index(v):]
                return tuple(graph.tasks[i] for i in cycle)
            if color[v] == WHITE:
                color[v] = GRAY
                path.append(v)
                iters.append(iter(graph.succs[v]))
    raise AssertionError("no cycle found")


def validate_dag(graph: DependencyGraph) -> DagReport:
    """Topologically sort, count tasks per kind, measure the longest path."""
    counts = {kind: 0 for kind in TaskKind}
    for t in graph.tasks:
        counts[t.kind] += 1
    order = _topological_order(graph)
    if order is None:
        return DagReport(ok=False, kind_counts=counts, longest_path=0,
                         cycle=_find_cycle(graph))
    depth = [1] * graph.n_tasks
    for u in order:
        for v in graph.succs[u]:
            if depth[u] + 1 > depth[v]:
                depth[v] = depth[u] + 1
    longest = max(depth) if depth else 0
    return DagReport(ok=True, kind_counts=counts, longest_path=longest)


def _task_label(task: Task) -> str:
    if task.kind == TaskKind.ASSERTION:
        return f"T4;{task.row},{task.col}"
    return f"T{int(task.kind)};f={task.front};{task.pivot},{task.row},{task.col}"


def export_dot(graph: DependencyGraph) -> str:
    """Deterministic DOT rendering of the dependency graph."""
    order = sorted(range(graph.n_tasks), key=lambda i: graph.tasks[i])
    name = {tid: f"n{k}" for k, tid in enumerate(order)}
    lines = ["digraph task_dependencies {"]
    for tid in order:
        lines.append(f'  {name[tid]} [label="{_task_label(graph.tasks[tid])}"];')
    edges = sorted(
        (name[u], name[v]) for u in range(graph.n_tasks) for v in graph.succs[u]
    )
    for u, v in edges:
        lines.append(f"  {u} -> {v};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def task_stats_csv(graph: DependencyGraph) -> str:
    """Per-kind task counts as CSV text with a header row."""
    counts = {kind: 0 for kind in TaskKind}
    for t in graph.tasks:
        counts[t.kind] += 1
    lines = ["kind,count"]
    for kind in TaskKind:
        lines.append(f"{kind.name.lower()},{counts[kind]}")
    return "\n".join(lines) + "\n"


def build_task_graph(tree: EliminationTree, system: GlobalSystem) -> DependencyGraph:
    """Convenience pipeline: plan, enumerate, wire edges."""
    plan = symbolic_eliminate(tree, system)
    return build_dependency_edges(enumerate_tasks(plan), plan)
