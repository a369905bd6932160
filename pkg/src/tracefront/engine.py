"""Task execution over global matrix state, sequential and concurrent.

Two interchangeable execution paths produce bitwise-identical results:

* a dictionary-backed reference path (``execute_task`` / ``run_sequential``
  / ``run_linearized``) that follows the task semantics literally, and
* a compiled path (``run_concurrent``) that flattens the schedule into
  index arrays and executes Foata classes either inline (workers=1) or on
  a fork-based pool of worker processes sharing the numeric state, with a
  full barrier between consecutive classes and dynamic chunk claiming
  inside each class.

Identity of results holds because tasks within a class write pairwise
disjoint cells and every cell sees the same per-cell operation sequence in
any admissible order.  Factors come out in LDU form: the stored upper
off-diagonals are the division quotients; ``u_entries[(z, z)]`` holds the
final pivot value.
"""

from __future__ import annotations

import multiprocessing
from array import array
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ContractViolationError, ZeroPivotError
from .fem import GlobalSystem
from .schedule import FoataSchedule, compute_fnf
from .tasks import DependencyGraph, EliminationPlan, Task, TaskKind
from .tree import EliminationTree

ZERO_PIVOT_RELATIVE = 1e-14
_CLAIM_CHUNK = 512
_BARRIER_TIMEOUT = 120.0


def _as_double_buffer(raw) -> memoryview:
    """Writable, index-addressable float view of a shared ctypes array."""
    return memoryview(raw).cast("B").cast("d")


# ---------------------------------------------------------------------------
# dictionary-backed reference path


@dataclass
class ExecState:
    """Live global matrix values plus intermediate task results.

    ``values`` covers every stored position including zero-initialized
    fill.  ``quotients`` holds division results keyed (front, pivot, col);
    ``products`` holds multiplication results keyed (front, pivot, row,
    col) and each entry is consumed by exactly one subtraction.
    """

    values: dict[tuple[int, int], float]
    quotients: dict[tuple[int, int, int], float] = field(default_factory=dict)
    products: dict[tuple[int, int, int, int], float] = field(default_factory=dict)
    finalized: set[tuple[int, int]] = field(default_factory=set)
    zero_threshold: float = 0.0
    debug: bool = False


def init_state(system: GlobalSystem, plan: EliminationPlan, debug: bool = False) -> ExecState:
    """Seed execution state from the assembled system and the symbolic plan."""
    values: dict[tuple[int, int], float] = {}
    for cell, v in system.symmetric_items():
        values[cell] = v
    for cell in plan.cells:
        values.setdefault(cell, 0.0)
    peak = max((abs(v) for v in system.entries.values()), default=0.0)
    return ExecState(values=values, zero_threshold=ZERO_PIVOT_RELATIVE * peak, debug=debug)


def execute_task(task: Task, state: ExecState) -> None:
    """Apply one task's semantics to the state.

    The caller is responsible for ordering: all dependency predecessors
    must have executed already.  Debug mode verifies the read/write
    finalization contract on every access.
    """
    kind = task.kind
    if kind == TaskKind.DIVISION:
        z, y = task.pivot, task.col
        if state.debug and ((z, y) not in state.finalized or (z, z) not in state.finalized):
            raise ContractViolationError(f"division ({z},{y}) reads unfinalized input")
        pivot_value = state.values[(z, z)]
        if abs(pivot_value) <= state.zero_threshold:
            raise ZeroPivotError(task.front, z)
        state.quotients[(task.front, z, y)] = state.values[(z, y)] / pivot_value
    elif kind == TaskKind.MULTIPLICATION:
        z, x, y = task.pivot, task.row, task.col
        if state.debug and (x, z) not in state.finalized:
            raise ContractViolationError(f"multiplication reads unfinalized ({x},{z})")
        state.products[(task.front, z, x, y)] = (
            state.quotients[(task.front, z, y)] * state.values[(x, z)]
        )
    elif kind == TaskKind.SUBTRACTION:
        z, x, y = task.pivot, task.row, task.col
        if state.debug and (x, y) in state.finalized:
            raise ContractViolationError(f"subtraction writes finalized ({x},{y})")
        state.values[(x, y)] -= state.products.pop((task.front, z, x, y))
    else:
        state.finalized.add((task.row, task.col))


@dataclass(frozen=True)
class FactorResult:
    """LDU-style factors in global coordinates.

    ``u_entries[(z, z)]`` is the final pivot value; ``u_entries[(z, y)]``
    for y != z is the division quotient a(z,y)/a(z,z); ``l_entries[(x, z)]``
    is the column multiplier a(x,z)/a(z,z).  ``pivot_order`` is the global
    elimination sequence; row/column index pairs refer to the original
    (unpermuted) matrix.
    """

    u_entries: dict[tuple[int, int], float]
    l_entries: dict[tuple[int, int], float]
    pivot_order: tuple[int, ...]
    n_dof: int

    def permuted_dense_factors(self) -> tuple[np.ndarray, np.ndarray]:
        """Unit-lower L and standard U (off-diagonals rescaled by the pivot)
        in elimination-order coordinates, so that L @ U == P M P^T."""
        pos = {z: k for k, z in enumerate(self.pivot_order)}
        n = self.n_dof
        lower = np.eye(n)
        upper = np.zeros((n, n))
        for (x, z), v in self.l_entries.items():
            lower[pos[x], pos[z]] = v
        for (z, y), v in self.u_entries.items():
            if z == y:
                upper[pos[z], pos[z]] = v
            else:
                upper[pos[z], pos[y]] = v * self.u_entries[(z, z)]
        return lower, upper

    def permutation(self) -> np.ndarray:
        """0-based row permutation: original index of the k-th pivot."""
        return np.array([z - 1 for z in self.pivot_order])


def _extract_factors(
    plan: EliminationPlan,
    value_of: Callable[[tuple[int, int]], float],
    quotient_of: Callable[[tuple[int, int, int]], float],
    threshold: float,
) -> FactorResult:
    u: dict[tuple[int, int], float] = {}
    l: dict[tuple[int, int], float] = {}
    for step in plan.steps:
        z, f = step.pivot, step.node_id
        dz = value_of((z, z))
        if abs(dz) <= threshold:
            raise ZeroPivotError(f, z)
        u[(z, z)] = dz
        for y in step.active:
            u[(z, y)] = quotient_of((f, z, y))
        for x in step.active:
            l[(x, z)] = value_of((x, z)) / dz
    return FactorResult(
        u_entries=u, l_entries=l, pivot_order=plan.pivot_order, n_dof=plan.n_dof
    )


def _factors_from_state(graph: DependencyGraph, state: ExecState) -> FactorResult:
    return _extract_factors(
        graph.plan, state.values.__getitem__, state.quotients.__getitem__,
        state.zero_threshold,
    )


def run_sequential(graph: DependencyGraph, state: ExecState) -> FactorResult:
    """Execute the whole alphabet in Foata-class order, single-threaded."""
    schedule = compute_fnf(graph)
    tasks = graph.tasks
    for class_tids in schedule.classes:
        for tid in class_tids:
            execute_task(tasks[tid], state)
    return _factors_from_state(graph, state)


def run_linearized(
    graph: DependencyGraph, state: ExecState, rng: "np.random.Generator"
) -> FactorResult:
    """Execute one random topological linearization (for equivalence tests)."""
    indeg = [len(p) for p in graph.preds]
    ready = [i for i, d in enumerate(indeg) if d == 0]
    done = 0
    while ready:
        k = int(rng.integers(len(ready)))
        ready[k], ready[-1] = ready[-1], ready[k]
        tid = ready.pop()
        execute_task(graph.tasks[tid], state)
        done += 1
        for v in graph.succs[tid]:
            indeg[v] -= 1
            if indeg[v] == 0:
                ready.append(v)
    if done != graph.n_tasks:
        raise AssertionError("linearization stalled; graph is not a DAG")
    return _factors_from_state(graph, state)


# ---------------------------------------------------------------------------
# compiled concurrent path

_DIV, _MUL, _SUB, _ASSERT = 1, 2, 3, 4


@dataclass
class _CompiledPlan:
    cells: list[tuple[int, int]]  # slot -> cell
    initial: array  # 'd', per cell slot
    kind: array  # 'b', per task in schedule order
    arg_a: array  # 'i'
    arg_b: array  # 'i'
    dst: array  # 'i'
    task_front: array  # 'i'
    task_pivot: array  # 'i'
    class_bounds: array  # 'i', len n_classes + 1
    quotient_keys: list[tuple[int, int, int]]  # slot -> (front, pivot, col)
    n_products: int
    threshold: float


def _compile(graph: DependencyGraph, schedule: FoataSchedule, state: ExecState) -> _CompiledPlan:
    cells = sorted(state.values)
    slot = {c: k for k, c in enumerate(cells)}
    initial = array("d", (state.values[c] for c in cells))

    n = graph.n_tasks
    kind = array("b", bytes(n))
    arg_a = array("i", [-1]) * n
    arg_b = array("i", [-1]) * n
    dst = array("i", [-1]) * n
    task_front = array("i", [-1]) * n
    task_pivot = array("i", [-1]) * n
    bounds = array("i", [0])

    quotient_slot: dict[tuple[int, int], int] = {}
    quotient_keys: list[tuple[int, int, int]] = []
    product_slot: dict[tuple[int, int, int], int] = {}

    pos = 0
    tasks = graph.tasks
    for class_tids in schedule.classes:
        for tid in class_tids:
            t = tasks[tid]
            kind[pos] = int(t.kind)
            task_front[pos] = t.front
            task_pivot[pos] = t.pivot
            if t.kind == TaskKind.DIVISION:
                arg_a[pos] = slot[(t.pivot, t.col)]
                arg_b[pos] = slot[(t.pivot, t.pivot)]
                dst[pos] = len(quotient_keys)
                quotient_slot[(t.pivot, t.col)] = dst[pos]
                quotient_keys.append((t.front, t.pivot, t.col))
            elif t.kind == TaskKind.MULTIPLICATION:
                arg_a[pos] = quotient_slot[(t.pivot, t.col)]
                arg_b[pos] = slot[(t.row, t.pivot)]
                dst[pos] = len(product_slot)
                product_slot[(t.pivot, t.row, t.col)] = dst[pos]
            elif t.kind == TaskKind.SUBTRACTION:
                arg_a[pos] = product_slot[(t.pivot, t.row, t.col)]
                dst[pos] = slot[(t.row, t.col)]
            pos += 1
        bounds.append(pos)

    return _CompiledPlan(
        cells=cells,
        initial=initial,
        kind=kind,
        arg_a=arg_a,
        arg_b=arg_b,
        dst=dst,
        task_front=task_front,
        task_pivot=task_pivot,
        class_bounds=bounds,
        quotient_keys=quotient_keys,
        n_products=len(product_slot),
        threshold=state.zero_threshold,
    )


def _run_span(plan: _CompiledPlan, vals, quo, prod, lo: int, hi: int) -> int:
    """Execute tasks [lo, hi); return the index of a zero-pivot division,
    or -1 on success.  ``vals``/``quo``/``prod`` are any 'd'-indexable buffers."""
    kind, arg_a, arg_b, dst = plan.kind, plan.arg_a, plan.arg_b, plan.dst
    threshold = plan.threshold
    for i in range(lo, hi):
        k = kind[i]
        if k == _DIV:
            pv = vals[arg_b[i]]
            if abs(pv) <= threshold:
                return i
            quo[dst[i]] = vals[arg_a[i]] / pv
        elif k == _MUL:
            prod[dst[i]] = quo[arg_a[i]] * vals[arg_b[i]]
        elif k == _SUB:
            vals[dst[i]] -= prod[arg_a[i]]
    return -1


def _pool_worker(plan, vals_raw, quo_raw, prod_raw, counters, lock, barrier, err):
    vals = _as_double_buffer(vals_raw)
    quo = _as_double_buffer(quo_raw)
    prod = _as_double_buffer(prod_raw)
    bounds = plan.class_bounds
    for c in range(len(bounds) - 1):
        hi_c = bounds[c + 1]
        while not err[0]:
            with lock:
                i0 = counters[c]
                counters[c] = i0 + _CLAIM_CHUNK
            if i0 >= hi_c:
                break
            bad = _run_span(plan, vals, quo, prod, i0, min(i0 + _CLAIM_CHUNK, hi_c))
            if bad >= 0:
                with lock:
                    if not err[0]:  # first detected zero pivot wins
                        err[0] = 1
                        err[1] = plan.task_front[bad]
                        err[2] = plan.task_pivot[bad]
                break
        # A timeout here means a sibling died; breaking the barrier unsticks
        # every survivor and the parent reports the nonzero exit codes.
        barrier.wait(timeout=_BARRIER_TIMEOUT)


def compile_execution(
    graph: DependencyGraph, schedule: FoataSchedule, state: ExecState
) -> _CompiledPlan:
    """Flatten the schedule into executable index arrays ahead of time.

    Compilation is planning work; benchmarks pass the result to
    ``run_concurrent`` so that timed walls cover execution only.  The
    compiled plan is reusable across repeated runs on the same system.
    """
    return _compile(graph, schedule, state)


def _writeback(plan: _CompiledPlan, vals, quo, state: ExecState) -> None:
    state.values = dict(zip(plan.cells, vals))
    state.quotients = dict(zip(plan.quotient_keys, quo))
    state.products.clear()
    state.finalized = set(plan.cells)


def run_concurrent(
    schedule: FoataSchedule,
    graph: DependencyGraph,
    state: ExecState,
    workers: int,
    debug: bool = False,
    compiled: Optional[_CompiledPlan] = None,
) -> FactorResult:
    """Execute Foata classes in order with a full barrier between classes.

    Within a class, idle workers claim fixed-size task chunks from a
    shared counter and execute them on shared-memory numeric state; the
    class's writes are pairwise disjoint, so results are bitwise-identical
    for any worker count or claiming order.  ``workers=1`` runs inline.
    On a zero pivot, the first error wins; the failing class is drained
    and later classes are skipped.  ``compiled`` must come from
    ``compile_execution`` on the same graph, schedule, and initial state.
    """
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    if debug:
        check_schedule_respects_dependencies(graph, schedule)
        check_class_write_sets_disjoint(graph, schedule)
    plan = compiled if compiled is not None else _compile(graph, schedule, state)

    if workers == 1:
        vals = plan.initial[:]  # array copy
        quo = array("d", bytes(8 * len(plan.quotient_keys)))
        prod = array("d", bytes(8 * plan.n_products))
        bounds = plan.class_bounds
        for c in range(len(bounds) - 1):
            bad = _run_span(plan, vals, quo, prod, bounds[c], bounds[c + 1])
            if bad >= 0:
                raise ZeroPivotError(plan.task_front[bad], plan.task_pivot[bad])
        _writeback(plan, vals, quo, state)
        return _factors_from_state(graph, state)

    ctx = multiprocessing.get_context("fork")
    vals_raw = ctx.RawArray("d", len(plan.initial))
    _as_double_buffer(vals_raw)[:] = plan.initial
    quo_raw = ctx.RawArray("d", max(1, len(plan.quotient_keys)))
    prod_raw = ctx.RawArray("d", max(1, plan.n_products))
    n_classes = len(plan.class_bounds) - 1
    counters = ctx.RawArray("q", list(plan.class_bounds[:n_classes]))
    err = ctx.RawArray("q", 3)
    lock = ctx.Lock()
    barrier = ctx.Barrier(workers)
    procs = [
        ctx.Process(
            target=_pool_worker,
            args=(plan, vals_raw, quo_raw, prod_raw, counters, lock, barrier, err),
            daemon=True,
        )
        for _ in range(workers)
    ]
    for p in procs:
        p.start()
    for p in procs:
        p.join()
    crashed = [p.exitcode for p in procs if p.exitcode != 0]
    if crashed:
        raise RuntimeError(f"worker processes failed with exit codes {crashed}")
    if err[0]:
        raise ZeroPivotError(int(err[1]), int(err[2]))
    _writeback(plan, _as_double_buffer(vals_raw), _as_double_buffer(quo_raw), state)
    return _factors_from_state(graph, state)


# ---------------------------------------------------------------------------
# debug-mode structural checks


def check_schedule_respects_dependencies(
    graph: DependencyGraph, schedule: FoataSchedule
) -> None:
    """Every dependency edge must cross from an earlier class to a later one."""
    cls = schedule.class_of
    for u in range(graph.n_tasks):
        cu = cls[u]
        for v in graph.succs[u]:
            if cu >= cls[v]:
                raise ContractViolationError(
                    f"edge {graph.tasks[u]} -> {graph.tasks[v]} does not advance classes"
                )


def check_class_write_sets_disjoint(
    graph: DependencyGraph, schedule: FoataSchedule
) -> None:
    """No two tasks of one class may write the same state cell."""
    tasks = graph.tasks
    for c, class_tids in enumerate(schedule.classes):
        seen: set[tuple] = set()
        for tid in class_tids:
            t = tasks[tid]
            if t.kind == TaskKind.DIVISION:
                target = ("quotient", t.front, t.pivot, t.col)
            elif t.kind == TaskKind.MULTIPLICATION:
                target = ("product", t.front, t.pivot, t.row, t.col)
            elif t.kind == TaskKind.SUBTRACTION:
                target = ("value", t.row, t.col)
            else:
                target = ("final", t.row, t.col)
            if target in seen:
                raise ContractViolationError(
                    f"class {c + 1} writes {target} more than once"
                )
            seen.add(target)


# ---------------------------------------------------------------------------
# triangular solve


def solve(factors: FactorResult, rhs: np.ndarray) -> np.ndarray:
    """Forward substitution with unit L, pivot scaling, then back substitution."""
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (factors.n_dof,):
        raise ValueError(f"rhs must have length {factors.n_dof}, got {rhs.shape}")
    lower_cols: dict[int, list[tuple[int, float]]] = {}
    for (x, z), v in factors.l_entries.items():
        lower_cols.setdefault(z, []).append((x, v))
    upper_rows: dict[int, list[tuple[int, float]]] = {}
    for (z, y), v in factors.u_entries.items():
        if z != y:
            upper_rows.setdefault(z, []).append((y, v))

    b = rhs.copy()
    for z in factors.pivot_order:
        bz = b[z - 1]
        for x, v in lower_cols.get(z, ()):
            b[x - 1] -= v * bz
    for z in factors.pivot_order:
        b[z - 1] /= factors.u_entries[(z, z)]
    for z in reversed(factors.pivot_order):
        acc = b[z - 1]
        for y, q in upper_rows.get(z, ()):
            acc -= q * b[y - 1]
        b[z - 1] = acc
    return b


# ---------------------------------------------------------------------------
# nested-loop reference factorization (level/front/pivot loops, no task graph)


def factorize_nested_loops(
    tree: EliminationTree, system: GlobalSystem
) -> tuple[dict[tuple[int, int], float], FactorResult]:
    """Direct multifrontal elimination over the tree, bypassing the task
    machinery entirely.  Returns the final values map and the factors; used
    as the independent reference the task execution must match bitwise."""
    values: dict[tuple[int, int], float] = {}
    for cell, v in system.symmetric_items():
        values[cell] = v
    peak = max((abs(v) for v in system.entries.values()), default=0.0)
    threshold = ZERO_PIVOT_RELATIVE * peak

    eliminated: set[int] = set()
    u: dict[tuple[int, int], float] = {}
    l: dict[tuple[int, int], float] = {}
    pivot_order: list[int] = []
    last_level = tree.n_levels - 1

    for level in range(tree.n_levels):
        for node_id in tree.levels[level]:
            front = tree.nodes[node_id].front
            members = dict(zip(front.indices, front.membership))
            eligible = sorted(
                g
                for g in front.indices
                if g not in eliminated and (members[g] == 1 or level == last_level)
            )
            for z in eligible:
                pivot_value = values.get((z, z), 0.0)
                if abs(pivot_value) <= threshold:
                    raise ZeroPivotError(node_id, z)
                row = sorted(
                    y for (r, y) in values if r == z and y != z and y not in eliminated
                )
                col = sorted(
                    x for (x, c) in values if c == z and x != z and x not in eliminated
                )
                for y in row:
                    quotient = values[(z, y)] / pivot_value
                    u[(z, y)] = quotient
                    for x in col:
                        product = quotient * values[(x, z)]
                        values[(x, y)] = values.get((x, y), 0.0) - product
                u[(z, z)] = pivot_value
                for x in col:
                    l[(x, z)] = values[(x, z)] / pivot_value
                pivot_order.append(z)
                eliminated.add(z)

    factors = FactorResult(
        u_entries=u, l_entries=l, pivot_order=tuple(pivot_order), n_dof=system.n_dof
    )
    return values, factors


# ---------------------------------------------------------------------------
# dense kernels


@dataclass(frozen=True)
class SchurBlocks:
    """Blocks of [[C, D], [E, -F]] with C q-by-q and F r-by-r."""

    C: np.ndarray
    D: np.ndarray
    E: np.ndarray
    F: np.ndarray

    def __post_init__(self) -> None:
        q = self.C.shape[0]
        r = self.F.shape[0]
        if self.C.shape != (q, q) or self.F.shape != (r, r):
            raise ValueError("C and F must be square")
        if self.D.shape != (q, r) or self.E.shape != (r, q):
            raise ValueError(f"D must be {q}x{r} and E {r}x{q}")

    def assembled(self) -> np.ndarray:
        return np.block([[self.C, self.D], [self.E, -self.F]])


def _dense_lu_no_pivoting(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Textbook in-place Gaussian elimination; raises on a tiny pivot."""
    a = np.array(matrix, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    threshold = ZERO_PIVOT_RELATIVE * max(1.0, float(np.abs(a).max(initial=0.0)))
    lower = np.eye(n)
    for k in range(n):
        pivot_value = a[k, k]
        if abs(pivot_value) <= threshold:
            raise ZeroPivotError(-1, k + 1)
        if k + 1 < n:
            m = a[k + 1 :, k] / pivot_value
            lower[k + 1 :, k] = m
            a[k + 1 :, k:] -= np.outer(m, a[k, k:])
    return lower, np.triu(a)


def _forward_substitution(lower: np.ndarray, b: np.ndarray) -> np.ndarray:
    y = np.zeros_like(b, dtype=float)
    for i in range(len(b)):
        y[i] = (b[i] - lower[i, :i] @ y[:i]) / lower[i, i]
    return y


def _backward_substitution(upper: np.ndarray, y: np.ndarray) -> np.ndarray:
    n = len(y)
    x = np.zeros_like(y, dtype=float)
    for i in range(n - 1, -1, -1):
        x[i] = (y[i] - upper[i, i + 1 :] @ x[i + 1 :]) / upper[i, i]
    return x


def dense_lu_oracle(
    matrix: np.ndarray, rhs: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Independent correctness oracle: dense LU without pivoting plus solve."""
    lower, upper = _dense_lu_no_pivoting(matrix)
    rhs = np.asarray(rhs, dtype=float)
    x = _backward_substitution(upper, _forward_substitution(lower, rhs))
    return lower, upper, x


def schur_complement_dense(blocks: SchurBlocks) -> np.ndarray:
    """-(F + E C^-1 D), with C factored by non-pivoting elimination."""
    lower, upper = _dense_lu_no_pivoting(blocks.C)
    r = blocks.F.shape[0]
    x = np.empty((blocks.C.shape[0], r))
    for j in range(r):
        x[:, j] = _backward_substitution(
            upper, _forward_substitution(lower, blocks.D[:, j])
        )
    return -(blocks.F + blocks.E @ x)
