import itertools

import numpy as np
import pytest

from nsg.algebra import CayleyTable, PartialTable, canonical_form, is_associative, opposite, relabel, Permutation
from nsg.enumeration import (
    CompletionQuery,
    complete_partial,
    enumerate_classes,
    enumerate_tables,
    enumeration_report,
    orbit,
)

from conftest import LEFT_ZERO_2, NILPOTENT_5, NILPOTENT_5_ALT, RIGHT_ZERO_2, TABLE_3_PARTIAL, partial, table


def brute_force_tables(n: int) -> list[CayleyTable]:
    # oracle: filter every one of the n**(n*n) magmas
    out = []
    for cells in itertools.product(range(n), repeat=n * n):
        t = CayleyTable(np.array(cells, dtype=np.int8).reshape(n, n))
        if is_associative(t):
            out.append(t)
    return out


def test_single_element_universe():
    assert list(enumerate_tables(1)) == [CayleyTable([[0]])]


def test_n2_matches_brute_force():
    assert list(enumerate_tables(2)) == brute_force_tables(2)


def test_n3_matches_brute_force():
    expected = brute_force_tables(3)
    assert len(expected) == 113
    assert list(enumerate_tables(3)) == expected


def test_enumeration_is_lexicographic_and_associative():
    flats = [t.flat().tobytes() for t in enumerate_tables(4)]
    assert flats == sorted(flats)
    assert len(flats) == len(set(flats)) == 3492


def test_cardinality_bounds():
    with pytest.raises(ValueError):
        list(enumerate_tables(0))
    with pytest.raises(ValueError):
        list(enumerate_tables(7))
    with pytest.raises(ValueError):
        enumerate_classes(0)


def test_class_counts_small():
    assert len(enumerate_classes(2)) == 4
    assert len(enumerate_classes(3)) == 18


def test_classes_equal_dedup_of_canonical_forms():
    # alternative route: canonicalize every labeled table and dedupe
    for n in (2, 3):
        via_sweep = enumerate_classes(n)
        via_hash = sorted(
            {canonical_form(t) for t in enumerate_tables(n)},
            key=lambda t: t.cells.tobytes(),
        )
        assert via_sweep == via_hash
        assert all(canonical_form(t) == t for t in via_sweep)


def test_report_shape():
    rep = enumeration_report(3)
    d = rep.to_json_dict()
    assert d["n"] == 3 and d["labeled_count"] == 113 and d["class_count"] == 18
    assert d["elapsed_seconds"] >= 0


# --- completion -----------------------------------------------------------------


def test_completion_of_full_table_is_itself(nilpotent5):
    full = PartialTable(nilpotent5.cells)
    assert complete_partial(CompletionQuery(full)) == [nilpotent5]


def test_completion_of_fully_unknown_equals_enumeration():
    got = complete_partial(CompletionQuery(PartialTable.fully_unknown(2)))
    assert got == list(enumerate_tables(2))


def test_table3_partial_has_both_printed_completions():
    completions = complete_partial(CompletionQuery(partial(TABLE_3_PARTIAL)))
    assert len(completions) >= 2
    assert table(NILPOTENT_5) in completions
    assert table(NILPOTENT_5_ALT) in completions


def test_completion_respects_known_cells_and_limit():
    p = partial(TABLE_3_PARTIAL)
    all_comps = complete_partial(CompletionQuery(p))
    limited = complete_partial(CompletionQuery(p, limit=2))
    assert limited == all_comps[:2]
    known = p.known_mask()
    for t in all_comps:
        assert is_associative(t)
        assert np.array_equal(t.cells[known], p.cells[known])


def test_unsolvable_partial_gives_empty_list():
    # forcing the non-associative op (22, 11) leaves nothing to complete
    p = partial("22 11")
    assert complete_partial(CompletionQuery(p)) == []


def test_limit_validation():
    with pytest.raises(ValueError):
        CompletionQuery(PartialTable.fully_unknown(2), limit=0)


# --- orbits ----------------------------------------------------------------------


def test_left_zero_orbit_is_left_and_right_zero():
    # oracle: 2 permutations x {id, opposite}, deduplicated
    t = table(LEFT_ZERO_2)
    expected = set()
    for p in itertools.permutations(range(2)):
        perm = Permutation(np.array(p))
        expected.add(relabel(t, perm))
        expected.add(relabel(opposite(t), perm))
    assert expected == {table(LEFT_ZERO_2), table(RIGHT_ZERO_2)}
    assert orbit(t) == expected


def test_one_element_orbit():
    assert orbit(CayleyTable([[0]])) == {CayleyTable([[0]])}


@pytest.mark.parametrize("n,labeled", [(2, 8), (3, 113), (4, 3492)])
def test_orbits_partition_the_universe(n, labeled):
    reps = enumerate_classes(n)
    union: set = set()
    total = 0
    for rep in reps:
        orb = orbit(rep)
        assert not (union & orb)
        union |= orb
        total += len(orb)
    assert total == labeled
    assert union == set(enumerate_tables(n))
