from typing import Iterable, List

import numpy as np


class UnionFind:
    """Disjoint sets over the integers 0..n-1, union by rank with path compression.

    Attributes
    ----------
    n_clusters : int
        Current number of disjoint sets.
    """

    def __init__(self, n: int):
        self._leader = list(range(n))
        self._rank = [0] * n
        self.n_clusters = n

    def __repr__(self):
        return f"UnionFind: contains {self.n_clusters} clusters."

    def __len__(self):
        return len(self._leader)

    def find(self, s: int) -> int:
        path = [s]
        parent = self._leader[s]
        while parent != self._leader[parent]:
            path.append(parent)
            parent = self._leader[parent]
        for node in path:
            self._leader[node] = parent
        return parent

    def union(self, a: int, b: int) -> None:
        s1, s2 = self.find(a), self.find(b)
        if s1 == s2:
            return
        if self._rank[s2] > self._rank[s1]:
            s1, s2 = s2, s1
        if self._rank[s1] == self._rank[s2]:
            self._rank[s1] += 1
        self._leader[s2] = s1
        self.n_clusters -= 1

    def labels(self) -> np.ndarray:
        """Canonical labels: each element mapped to the smallest member of its set."""
        n = len(self._leader)
        smallest = {}
        out = np.empty(n, dtype=np.int64)
        for i in range(n):
            root = self.find(i)
            out[i] = smallest.setdefault(root, i)
        return out

    def groups(self, members: Iterable[int] = None) -> List[List[int]]:
        """Sets as sorted lists ordered by their smallest member, restricted to `members`."""
        items = range(len(self._leader)) if members is None else sorted(set(members))
        grouped = {}
        for i in items:
            grouped.setdefault(self.find(i), []).append(i)
        return sorted(grouped.values(), key=lambda g: g[0])
