"""Foata Normal Form scheduling of the task DAG.

The canonical FNF assigns every task the class 1 + (max class over its
predecessors); each class is then an antichain of pairwise-independent
tasks, and running the classes in order with a barrier between them is a
valid execution.  Classes may mix task kinds when cross-front subtraction
chains stretch some paths; that is reported as a statistic, not an error.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import CycleError
from .tasks import DependencyGraph, Task, TaskKind, _topological_order


@dataclass(frozen=True)
class TaskGroup:
    """Tasks that always land in the same Foata class.

    Divisions and assertions form singleton groups; the multiplications
    (resp. subtractions) of one (front, pivot, col) share one group.
    """

    kind: TaskKind
    key: tuple[int, ...]  # (front, pivot, col) or (row, col) for assertions
    members: tuple[Task, ...]


def group_tasks(tasks: list[Task]) -> list[TaskGroup]:
    """Partition the alphabet into its scheduling groups."""
    buckets: dict[tuple, list[Task]] = {}
    for t in tasks:
        if t.kind == TaskKind.ASSERTION:
            key = (t.kind, t.row, t.col)
        else:
            key = (t.kind, t.front, t.pivot, t.col)
        buckets.setdefault(key, []).append(t)
    groups = []
    for key in sorted(buckets):
        members = tuple(sorted(buckets[key]))
        groups.append(TaskGroup(kind=TaskKind(key[0]), key=key[1:], members=members))
    return groups


@dataclass(frozen=True)
class FoataSchedule:
    """Ordered Foata classes; each class lists task ids (sorted by task key)."""

    classes: tuple[tuple[int, ...], ...]
    class_kinds: tuple[frozenset[TaskKind], ...]
    class_of: tuple[int, ...]  # task id -> 1-based class index

    @property
    def n_classes(self) -> int:
        return len(self.classes)


def compute_fnf(graph: DependencyGraph) -> FoataSchedule:
    """Canonical Foata Normal Form by longest-path layering."""
    order = _topological_order(graph)
    if order is None:
        from .tasks import _find_cycle

        raise CycleError(_find_cycle(graph))
    level = [1] * graph.n_tasks
    for u in order:
        for v in graph.succs[u]:
            if level[u] + 1 > level[v]:
                level[v] = level[u] + 1
    n_classes = max(level) if level else 0
    classes: list[list[int]] = [[] for _ in range(n_classes)]
    for tid, lvl in enumerate(level):
        classes[lvl - 1].append(tid)
    key = graph.tasks.__getitem__
    sorted_classes = tuple(tuple(sorted(c, key=key)) for c in classes)
    kinds = tuple(
        frozenset(graph.tasks[tid].kind for tid in c) for c in sorted_classes
    )
    return FoataSchedule(classes=sorted_classes, class_kinds=kinds,
                         class_of=tuple(level))


@dataclass(frozen=True)
class ScheduleStats:
    n_classes: int
    widths: tuple[int, ...]
    kinds: tuple[frozenset[TaskKind], ...]
    max_width: int
    mixed_classes: tuple[int, ...]  # 1-based indices of classes mixing div and sub


def schedule_stats(schedule: FoataSchedule) -> ScheduleStats:
    """Deterministic summary; flags classes mixing divisions with subtractions."""
    widths = tuple(len(c) for c in schedule.classes)
    mixed = tuple(
        i + 1
        for i, kinds in enumerate(schedule.class_kinds)
        if TaskKind.DIVISION in kinds and TaskKind.SUBTRACTION in kinds
    )
    return ScheduleStats(
        n_classes=schedule.n_classes,
        widths=widths,
        kinds=schedule.class_kinds,
        max_width=max(widths) if widths else 0,
        mixed_classes=mixed,
    )


def schedule_stats_csv(schedule: FoataSchedule) -> str:
    """Per-class CSV report: class_index, kind_set, size."""
    lines = ["class_index,kind_set,size"]
    for i, (tids, kinds) in enumerate(zip(schedule.classes, schedule.class_kinds)):
        kind_set = "|".join(sorted(k.name.lower() for k in kinds))
        lines.append(f"{i + 1},{kind_set},{len(tids)}")
    return "\n".join(lines) + "\n"


def schedule_dump(schedule: FoataSchedule, graph: DependencyGraph) -> str:
    """Line-oriented full dump: 'class k: task task ...'."""
    from .tasks import _task_label

    lines = []
    for i, tids in enumerate(schedule.classes):
        parts = " ".join(_task_label(graph.tasks[t]) for t in tids)
        lines.append(f"class {i + 1}: {parts}")
    return "\n".join(lines) + "\n"
