"""Balanced binary elimination tree built by pairwise joining of fronts.

Level 0 holds the elemental fronts in sorted order; each higher level
joins consecutive pairs, carrying an odd trailing front up through an
explicit one-child node, until a single root remains.  Merged fronts are
symbolic (no numeric values): elimination reads and writes the global
matrix state, not per-front copies.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EmptyInputError
from .fem import Front


@dataclass(frozen=True)
class TreeNode:
    node_id: int
    level: int
    front: Front
    children: tuple[int, ...]  # zero, one, or two child node ids


@dataclass(frozen=True)
class EliminationTree:
    nodes: tuple[TreeNode, ...]  # node_id == position
    root_id: int
    levels: tuple[tuple[int, ...], ...]  # node ids grouped by level, leaves first

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def n_leaves(self) -> int:
        return len(self.levels[0])


def sort_fronts(fronts: list[Front]) -> list[Front]:
    """Order fronts ascending by their minimum global index (stable)."""
    if not fronts:
        raise EmptyInputError("no fronts to sort")
    return sorted(fronts, key=lambda f: f.min_index)


def join_fronts(
    left: Front,
    right: Front,
    new_id: int = -1,
    with_values: Optional[bool] = None,
) -> Front:
    """Merge two same-level fronts over the union of their global indices.

    Overlapping numeric entries are summed; positions present in neither
    source stay zero.  ``with_values=None`` merges values exactly when both
    inputs carry them; the tree builder passes False so merged fronts stay
    symbolic.  Membership defaults to 1 everywhere and is recomputed by the
    caller once the whole level is known.
    """
    union = sorted(left.index_set | right.index_set)
    pos = {g: k for k, g in enumerate(union)}
    computed = [False] * len(union)
    for src in (left, right):
        for k, g in enumerate(src.indices):
            computed[pos[g]] = computed[pos[g]] or src.computed[k]
    values = None
    if with_values is None:
        with_values = left.values is not None and right.values is not None
    if with_values:
        values = np.zeros((len(union), len(union)))
        for src in (left, right):
            idx = [pos[g] for g in src.indices]
            values[np.ix_(idx, idx)] += src.values
    return Front(
        front_id=new_id,
        indices=tuple(union),
        membership=(1,) * len(union),
        computed=tuple(computed),
        values=values,
    )


def _with_membership(fronts: list[Front]) -> list[Front]:
    """Recompute membership counts across one level's fronts."""
    count: dict[int, int] = {}
    for f in fronts:
        for g in f.indices:
            count[g] = count.get(g, 0) + 1
    return [
        Front(
            front_id=f.front_id,
            indices=f.indices,
            membership=tuple(count[g] for g in f.indices),
            computed=f.computed,
            values=f.values,
        )
        for f in fronts
    ]


def build_elimination_tree(fronts: list[Front]) -> EliminationTree:
    """Pair consecutive fronts level by level until a single root remains.

    An odd trailing front is wrapped in a one-child node whose front is
    identical to its child's (the identity relation), so pairing stays
    uniform at every level.  Input fronts must already be sorted.
    """
    if not fronts:
        raise EmptyInputError("cannot build a tree from zero fronts")

    nodes: list[TreeNode] = []
    levels: list[tuple[int, ...]] = []

    current: list[int] = []
    for f in _with_membership(list(fronts)):
        node = TreeNode(node_id=len(nodes), level=0, front=f, children=())
        nodes.append(node)
        current.append(node.node_id)
    levels.append(tuple(current))

    level = 0
    while len(current) > 1:
        level += 1
        next_fronts: list[Front] = []
        next_children: list[tuple[int, ...]] = []
        for i in range(0, len(current) - 1, 2):
            a, b = nodes[current[i]], nodes[current[i + 1]]
            new_id = len(nodes) + len(next_fronts)
            next_fronts.append(
                join_fronts(a.front, b.front, new_id=new_id, with_values=False)
            )
            next_children.append((a.node_id, b.node_id))
        if len(current) % 2 == 1:
            child = nodes[current[-1]]
            new_id = len(nodes) + len(next_fronts)
            carried = Front(
                front_id=new_id,
                indices=child.front.indices,
                membership=child.front.membership,
                computed=child.front.computed,
                values=None,
            )
            next_fronts.append(carried)
            next_children.append((child.node_id,))
        next_fronts = _with_membership(next_fronts)
        current = []
        for f, children in zip(next_fronts, next_children):
            node = TreeNode(node_id=f.front_id, level=level, front=f, children=children)
            nodes.append(node)
            current.append(node.node_id)
        levels.append(tuple(current))

    return EliminationTree(
        nodes=tuple(nodes), root_id=current[0], levels=tuple(tuple(l) for l in levels)
    )


def tree_to_dot(tree: EliminationTree) -> str:
    """DOT rendering: one node per TreeNode, edges child -> parent."""
    lines = ["digraph elimination_tree {"]
    for node in tree.nodes:
        label = f"{node.level}/{node.node_id}/{node.front.size}"
        lines.append(f'  n{node.node_id} [label="{label}"];')
    for node in tree.nodes:
        for child in node.children:
            lines.append(f"  n{child} -> n{node.node_id};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def tree_level_listing(tree: EliminationTree) -> str:
    """Plain-text per-level listing, suitable for snapshot tests."""
    lines = []
    for level, ids in enumerate(tree.levels):
        parts = []
        for nid in ids:
            front = tree.nodes[nid].front
            span = f"{min(front.indices)}..{max(front.indices)}"
            parts.append(f"{nid}[{span}]")
        lines.append(f"level {level}: " + " ".join(parts))
    return "\n".join(lines) + "\n"
