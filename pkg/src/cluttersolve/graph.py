"""Support Graph: a DAG over object ids where edge ``i -> j`` means i supports j."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from graphlib import CycleError, TopologicalSorter
from typing import Dict, Iterable, List, Optional, Set, Tuple

import numpy as np


class MutualSupportError(RuntimeError):
    """Adding an edge would close a cycle."""

    def __init__(self, i: int, j: int):
        super().__init__(f"mutual support detected: edge {i}->{j} closes a cycle")
        self.edge = (i, j)


@dataclass
class SupportGraph:
    target: Optional[int] = None
    nodes: Set[int] = field(default_factory=set)
    edges: Set[Tuple[int, int]] = field(default_factory=set)
    direction_cache: Dict[int, Tuple[np.ndarray, float]] = field(default_factory=dict)
    query_count: int = 0
    # sum of |adjacency| over every broadcast issued; bounds query_count
    expanded_degree_sum: int = 0
    com_z: Dict[int, float] = field(default_factory=dict)

    @classmethod
    def rooted(cls, target: int) -> "SupportGraph":
        return cls(target=target, nodes={target})

    def copy(self) -> "SupportGraph":
        return SupportGraph(self.target, set(self.nodes), set(self.edges), dict(self.direction_cache),
                            self.query_count, self.expanded_degree_sum, dict(self.com_z))

    def add_node(self, n: int) -> bool:
        if n in self.nodes:
            return False
        self.nodes.add(n)
        return True

    def add_edge(self, i: int, j: int) -> bool:
        if i == j:
            raise MutualSupportError(i, j)
        if (i, j) in self.edges:
            return False
        if i in self.nodes and j in self.nodes and i in self.descendants(j):
            raise MutualSupportError(i, j)
        self.nodes.update((i, j))
        self.edges.add((i, j))
        return True

    def children(self, n: int) -> List[int]:
        return sorted(j for i, j in self.edges if i == n)

    def parents(self, n: int) -> List[int]:
        return sorted(i for i, j in self.edges if j == n)

    def outdegree(self, n: int) -> int:
        return sum(1 for i, _ in self.edges if i == n)

    def descendants(self, n: int) -> Set[int]:
        out: Set[int] = set()
        stack = [n]
        while stack:
            cur = stack.pop()
            for i, j in self.edges:
                if i == cur and j not in out:
                    out.add(j)
                    stack.append(j)
        return out

    def reachable_from(self, n: int) -> Set[int]:
        return self.descendants(n)

    def remove_node(self, n: int) -> None:
        self.nodes.discard(n)
        self.edges = {(i, j) for i, j in self.edges if i != n and j != n}
        self.direction_cache.pop(n, None)

    def zero_outdegree(self) -> List[int]:
        sources = {i for i, _ in self.edges}
        return sorted(n for n in self.nodes if n not in sources)

    def is_acyclic(self) -> bool:
        try:
            self.topological_order()
        except CycleError:
            return False
        return True

    def topological_order(self) -> List[int]:
        """Supporters before supported, ties by id."""
        ts = TopologicalSorter({n: set() for n in self.nodes})
        for i, j in sorted(self.edges):
            ts.add(j, i)
        ts.prepare()
        order: List[int] = []
        while ts.is_active():
            ready = sorted(ts.get_ready())
            order.extend(ready)
            ts.done(*ready)
        return order

    def digest(self) -> str:
        text = "nodes:" + ",".join(map(str, sorted(self.nodes)))
        text += ";edges:" + ",".join(f"{i}>{j}" for i, j in sorted(self.edges))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def to_dot(self, name: str = "support") -> str:
        lines = [f"digraph {name} {{"]
        for n in sorted(self.nodes):
            attr = ' [shape=doublecircle]' if n == self.target else ""
            lines.append(f"  {n}{attr};")
        for i, j in sorted(self.edges):
            lines.append(f"  {i} -> {j};")
        lines.append("}")
        return "\n".join(lines) + "\n"


def transitive_closure(edges: Iterable[Tuple[int, int]], start: int) -> Set[int]:
    adj: Dict[int, List[int]] = {}
    for i, j in edges:
        adj.setdefault(i, []).append(j)
    seen: Set[int] = set()
    stack = [start]
    while stack:
        for j in adj.get(stack.pop(), []):
            if j not in seen:
                seen.add(j)
                stack.append(j)
    seen.discard(start)
    return seen
