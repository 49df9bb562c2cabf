import sys
import os

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../src')))

import numpy as np
import pytest

from linkmse.analysis.compare import CandidateSets
from linkmse.analysis.unionfind import UnionFind


def make_candidates(n_records, pairs, levels, n_levels=(2,), fixed=None):
    """CandidateSets built directly from pair and level lists (levels use -1 for missing)."""
    pairs = np.asarray(pairs, dtype=np.int32).reshape(-1, 2)
    levels = np.asarray(levels, dtype=np.int8).reshape(len(pairs), len(n_levels))
    tallies = fixed if fixed is not None else [np.zeros(n + 1, dtype=np.int64) for n in n_levels]
    forest = UnionFind(n_records)
    for i, j in pairs.tolist():
        forest.union(i, j)
    return CandidateSets(
        fields=[f"f{k}" for k in range(len(n_levels))],
        n_levels=list(n_levels),
        n_records=n_records,
        n_compared=len(pairs) + int(tallies[0].sum()),
        pairs=pairs,
        levels=levels,
        fixed_tallies=tallies,
        components=forest.groups(pairs.ravel().tolist()),
    )


@pytest.fixture
def flat_lam():
    return [np.zeros(2)]


@pytest.fixture
def triangle():
    """Three mutually-candidate records, one field with two disagreement levels."""
    return make_candidates(3, [(0, 1), (0, 2), (1, 2)], [[0], [0], [2]])


@pytest.fixture
def schema_file(tmp_path):
    path = tmp_path / "schema.ini"
    path.write_text(
        "[given_name]\nkind = name-string\nrequired = true\n\n"
        "[family_name]\nkind = name-string\n\n"
        "[year]\nkind = date-year\n\n"
        "[month]\nkind = date-month\n\n"
        "[day]\nkind = date-day\n\n"
        "[place]\nkind = categorical\n"
    )
    return path


@pytest.fixture
def list_files(tmp_path):
    first = tmp_path / "list1.csv"
    first.write_text(
        "given_name,family_name,year,month,day,place,record_label\n"
        "José Ángel,García López,1981,3,14,San Salvador,a1\n"
        "Maria,de la Cruz,1982,7,,La Paz,a2\n"
        "Juan,Perez,1983,1,2,Santa Ana,a3\n"
    )
    second = tmp_path / "list2.csv"
    second.write_text(
        "given_name,family_name,year,month,day,place\n"
        "Jose Angel,Lopez Garcia,1981,3,14,San Salvador\n"
        "Rosa,Flores,1985,11,30,La Union\n"
    )
    return [first, second]
