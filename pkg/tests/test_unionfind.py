from hypothesis import given, settings
from hypothesis import strategies as st

from linkmse.analysis.unionfind import UnionFind


class TestUnionFind:
    """Test disjoint-set clustering"""

    def test_singletons(self):
        """Test a fresh forest"""
        forest = UnionFind(4)
        assert forest.n_clusters == 4
        assert forest.labels().tolist() == [0, 1, 2, 3]

    def test_union_chain(self):
        """Test transitive merging and canonical labels"""
        forest = UnionFind(5)
        forest.union(3, 1)
        forest.union(1, 4)
        assert forest.n_clusters == 3
        assert forest.labels().tolist() == [0, 1, 2, 1, 1]
        assert forest.groups() == [[0], [1, 3, 4], [2]]

    def test_repeated_union(self):
        """Test unions within one set leave the count unchanged"""
        forest = UnionFind(3)
        forest.union(0, 1)
        forest.union(1, 0)
        assert forest.n_clusters == 2

    def test_groups_restricted(self):
        """Test groups over a subset of members"""
        forest = UnionFind(6)
        forest.union(2, 5)
        assert forest.groups([5, 2, 4]) == [[2, 5], [4]]

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9)), max_size=20))
    def test_matches_connected_components(self, edges):
        """Test labels agree with a naive label-propagation oracle"""
        forest = UnionFind(10)
        for a, b in edges:
            forest.union(a, b)
        labels = list(range(10))
        changed = True
        while changed:
            changed = False
            for a, b in edges:
                low = min(labels[a], labels[b])
                if labels[a] != low or labels[b] != low:
                    labels[a] = labels[b] = low
                    changed = True
        assert forest.labels().tolist() == labels
        assert forest.n_clusters == len(set(labels))
