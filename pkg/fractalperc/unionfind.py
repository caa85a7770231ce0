"""Disjoint-set forest with union by rank and path compression."""
from collections import Counter
from typing import Hashable, Iterable


class UnionFind:
    """
    Keys are created on first use, so sparse key sets (cell coordinates,
    boundary labels) need no preallocation.

    >>> uf = UnionFind()
    >>> uf.union(1, 2)
    >>> uf.union(4, 5)
    >>> uf.find(2) == uf.find(1)
    True
    >>> uf.same(1, 4)
    False
    """

    def __init__(self, keys: Iterable[Hashable] = ()):
        self.parent: dict = {}
        self.rank: Counter = Counter()
        for k in keys:
            self.parent[k] = k

    def add(self, x: Hashable) -> None:
        if x not in self.parent:
            self.parent[x] = x

    def find(self, x: Hashable) -> Hashable:
        parent = self.parent
        if x not in parent:
            parent[x] = x
            return x
        root = x
        while parent[root] != root:
            root = parent[root]
        # path compression
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, x: Hashable, y: Hashable) -> None:
        px = self.find(x)
        py = self.find(y)
        if px == py:
            return
        if self.rank[px] == self.rank[py]:
            self.parent[py] = px
            self.rank[px] += 1
        elif self.rank[px] > self.rank[py]:
            self.parent[py] = px
        else:
            self.parent[px] = py

    def same(self, x: Hashable, y: Hashable) -> bool:
        return self.find(x) == self.find(y)

    def groups(self) -> dict:
        """Map root -> list of members, members in insertion order."""
        out: dict = {}
        for k in self.parent:
            out.setdefault(self.find(k), []).append(k)
        return out
