"""Monte Carlo tree search baselines over proposal subsets.

Two tree shapes share one driver:

* ``mcts``: a node's children add one proposal each, and the proposals of
  sibling children are mutually incompatible, so every path is a valid set.
* ``mcts_binary``: a node decides keep/skip for the next undecided proposal.

Leaf values are V = -loss, backed up with max. The returned solution follows
the highest-V child from the root.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from boxfinder.search.trace import SearchResult, SearchTrace
from boxfinder.seeding import substream


@dataclass
class MctsParams:
    budget: int = 1000
    c: float = math.sqrt(2.0)
    seed: int = 0

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be >= 1")


class _Node:
    __slots__ = ("selected", "avail", "children", "pending", "V", "n", "best_set")

    def __init__(self, selected: tuple, avail: list):
        self.selected = selected
        # undecided proposals compatible with ``selected``, in tree order
        self.avail = avail
        self.children: list[_Node] = []
        self.pending = None
        self.V = -math.inf
        self.n = 0
        self.best_set: tuple = ()

    @property
    def terminal(self) -> bool:
        return not self.avail


def _area_order(objective) -> list[int]:
    areas = [c.area for c in objective.pool] if hasattr(objective, "pool") else [0.0] * len(objective)
    return sorted(range(len(areas)), key=lambda i: (-areas[i], i))


class _Tree:
    def __init__(self, objective, compat, binary: bool):
        self.bits = compat.bits
        self.binary = binary
        order = _area_order(objective)
        self.root = _Node((), order)

    def _keep(self, node: _Node, p: int) -> _Node:
        row = self.bits[p]
        return _Node(node.selected + (p,), [a for a in node.avail if a != p and row[a]])

    def pending_moves(self, node: _Node) -> list:
        if self.binary:
            # keep first, then skip
            return [("keep", node.avail[0]), ("skip", node.avail[0])]
        pack: list[int] = []
        for p in node.avail:
            row = self.bits[p]
            if all(not row[q] for q in pack):
                pack.append(p)
        return [("keep", p) for p in pack]

    def make_child(self, node: _Node, move) -> _Node:
        kind, p = move
        if kind == "keep":
            return self._keep(node, p)
        return _Node(node.selected, node.avail[1:])

    def rollout(self, node: _Node, rng) -> tuple:
        """Add uniformly random compatible proposals until none is left."""
        sel = list(node.selected)
        avail = np.array(node.avail, dtype=np.int64)
        while len(avail):
            p = int(avail[rng.integers(len(avail))])
            sel.append(p)
            avail = avail[self.bits[p, avail]]
        return tuple(sorted(sel))


def _ucb_child(node: _Node, c: float, vmin: float, vmax: float) -> _Node:
    span = vmax - vmin
    log_n = math.log(node.n)
    best, best_score = None, -math.inf
    for ch in node.children:
        v = (ch.V - vmin) / span if span > 0 else 1.0
        score = v + c * math.sqrt(log_n / ch.n)
        if score > best_score:
            best, best_score = ch, score
    return best


def _search(objective, compat, params: MctsParams, binary: bool, name: str) -> SearchResult:
    rng = substream(params.seed, "search", name)
    tree = _Tree(objective, compat, binary)
    root = tree.root
    trace = SearchTrace(name)
    best = math.inf
    vmin, vmax = math.inf, -math.inf
    for _ in range(params.budget):
        node = root
        path = [root]
        while True:
            if node.terminal:
                leaf = tuple(sorted(node.selected))
                break
            if node.pending is None:
                node.pending = tree.pending_moves(node)
            if node.pending:
                child = tree.make_child(node, node.pending.pop(0))
                node.children.append(child)
                path.append(child)
                leaf = tree.rollout(child, rng)
                break
            node = _ucb_child(node, params.c, vmin, vmax)
            path.append(node)
        loss = objective(leaf)
        v = -loss
        vmin, vmax = min(vmin, v), max(vmax, v)
        for nd in path:
            nd.n += 1
            if v > nd.V:
                nd.V = v
                nd.best_set = leaf
        best = min(best, loss)
        trace.add(loss, best, len(root.best_set))
    node = root
    while node.children:
        node = max(node.children, key=lambda ch: ch.V)
    return SearchResult(name, node.best_set, -node.V, params.budget, trace)


def mcts(objective, compat, params: MctsParams | None = None) -> SearchResult:
    return _search(objective, compat, params or MctsParams(), binary=False, name="mcts")


def mcts_binary(objective, compat, params: MctsParams | None = None) -> SearchResult:
    return _search(objective, compat, params or MctsParams(), binary=True, name="mcts-binary")
