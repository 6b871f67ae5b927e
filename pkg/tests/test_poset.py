import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from impmarkov import IntransitiveRelation, TooLarge
from impmarkov.corpus import (
    chain_relation,
    diamond_relation,
    random_two_state_family,
    shared_measure_pair,
    three_chain_family,
    two_state,
    two_state_measure,
)
from impmarkov.poset import (
    ABOVE,
    BELOW,
    EQUAL,
    INCOMPARABLE,
    ImpreciseFamily,
    OrderReport,
    analyze_relation,
    brute_force_width,
    compare,
    default_time_grid,
    directedness_check,
    exact_compare,
    export_hasse,
    hasse_dot,
    imsg_certify,
    lower_upper_prevision,
    order_report,
    relation_matrix,
    shared_measure_rigidity,
)

from oracles import two_state_action


def family_of(pairs, f=(1.0, 0.0), **kw):
    return ImpreciseFamily({name: (two_state(a, b), two_state_measure(a, b)) for name, (a, b) in pairs.items()},
                           list(f), **kw)


# compare

def test_compare_reflexive():
    fam = three_chain_family()
    assert compare(fam, "A", "A") == EQUAL


def test_compare_A_below_B():
    fam = family_of({"A": (1, 1), "B": (1, 3)})
    assert compare(fam, "A", "B") == BELOW
    assert compare(fam, "B", "A") == ABOVE
    assert exact_compare(fam, "A", "B") == BELOW


def test_compare_symmetric_rates_incomparable():
    fam = family_of({"r1": (1, 1), "r2": (2, 2)})
    assert compare(fam, "r1", "r2") == INCOMPARABLE
    assert exact_compare(fam, "r1", "r2") == INCOMPARABLE


def test_closed_form_differences():
    # state 0 and state 1 differences between A(1,1) and B(1,3) are 1/4 (1-u)^2 and -3/4 (u-1)(u+1/3)
    t = np.linspace(0, 5, 200)
    u = np.exp(-2 * t)
    dA = two_state_action(1, 1, np.array([1.0, 0.0]), t[:, None])
    dB = two_state_action(1, 3, np.array([1.0, 0.0]), t[:, None])
    assert np.allclose(dB[:, 0] - dA[:, 0], 0.25 * (1 - u) ** 2, atol=1e-14)
    assert np.allclose(dB[:, 1] - dA[:, 1], -0.75 * (u - 1) * (u + 1 / 3), atol=1e-14)


def test_exact_compare_not_applicable():
    from impmarkov.corpus import complete_graph, cycle
    fam = ImpreciseFamily({"K": complete_graph(3), "C": cycle(3)}, [1.0, 0.0, 0.0])
    assert exact_compare(fam, "K", "C") is None
    assert order_report(fam).exactness == "approximate"


def test_family_validation():
    with pytest.raises(ValueError):
        ImpreciseFamily({}, [1.0])
    with pytest.raises(ValueError):
        family_of({"A": (1, 1)}, time_grid=[1.0, 0.5])
    from impmarkov.corpus import complete_graph
    with pytest.raises(ValueError):
        ImpreciseFamily({"A": two_state(1, 1), "K": complete_graph(3)}, [1.0, 0.0])


def test_default_grid():
    g = default_time_grid()
    assert g.size == 64 and g[0] == pytest.approx(1e-3) and g[-1] == pytest.approx(50)


# order_report

def test_hasse_fixture_report():
    r = analyze_relation(*diamond_relation(4))
    assert r.width == 4
    assert r.least == "P1" and r.greatest == "P6"
    assert sorted(r.max_antichain) == ["P2", "P3", "P4", "P5"]
    assert len(r.hasse_edges) == 8


def test_three_chain_total_order():
    r = order_report(three_chain_family())
    assert r.width == 1 and r.least == "A" and r.greatest == "B"
    assert r.exactness == "exact"
    assert sorted(r.hasse_edges) == [("A", "C"), ("C", "B")]


def test_singleton_report():
    r = order_report(family_of({"A": (1, 2)}))
    assert r.width == 1 and r.least == r.greatest == "A"
    assert r.hasse_edges == []


def test_duplicates_form_one_class():
    fam = ImpreciseFamily({"A": two_state(1, 3), "A#2": two_state(1, 3), "A#3": two_state(1, 3)}, [1.0, 0.0])
    r = order_report(fam)
    assert r.classes == [["A", "A#2", "A#3"]]
    assert r.width == 1 and r.least == r.greatest == "A"


def test_intransitive_relation_rejected():
    names = ["a", "b", "c"]
    rel = [[EQUAL, BELOW, ABOVE], [ABOVE, EQUAL, BELOW], [BELOW, ABOVE, EQUAL]]
    with pytest.raises(IntransitiveRelation):
        analyze_relation(names, rel)


def test_report_roundtrip():
    r = order_report(three_chain_family())
    back = OrderReport.from_dict(r.to_dict())
    assert back.to_dict() == r.to_dict()


# brute_force_width

def test_brute_force_examples():
    assert brute_force_width(diamond_relation(4)[1]) == 4
    assert brute_force_width(chain_relation(3)[1]) == 1
    anti = [[EQUAL if i == j else INCOMPARABLE for j in range(4)] for i in range(4)]
    assert brute_force_width(anti) == 4


def test_brute_force_too_large():
    with pytest.raises(TooLarge):
        brute_force_width(chain_relation(16)[1])


# directedness

def test_directedness():
    names, rel = diamond_relation(4)
    assert directedness_check(rel, ["P2", "P3"], names) == {"up_directed": False, "down_directed": False}
    assert directedness_check(rel, names, names) == {"up_directed": True, "down_directed": True}
    cn, cr = chain_relation(4)
    assert directedness_check(cr, [0, 2, 3]) == {"up_directed": True, "down_directed": True}


# imsg_certify

def test_certify_three_chain():
    c = imsg_certify(three_chain_family())
    assert c["positive"] and c["width"] == 1 and c["least"] == "A" and c["greatest"] == "B"


def test_certify_symmetric_pair_negative():
    c = imsg_certify(family_of({"r1": (1, 1), "r2": (2, 2)}))
    assert not c["positive"]
    assert c["least"] is None and c["greatest"] is None
    assert sorted(c["witness"]["minimal"]) == ["r1", "r2"]


def test_certify_singleton():
    assert imsg_certify(family_of({"A": (1, 1)}))["positive"]


# lower_upper_prevision

def test_prevision_three_chain():
    lo, hi = lower_upper_prevision(three_chain_family(), 1.0)
    assert lo.values[0] == pytest.approx(0.5 + 0.5 * math.exp(-2), abs=1e-12)
    assert hi.values[0] == pytest.approx(0.75 + 0.25 * math.exp(-4), abs=1e-12)
    assert lo.values[0] == pytest.approx(0.5677, abs=1e-4)
    assert hi.values[0] == pytest.approx(0.7546, abs=1e-4)


def test_prevision_time_zero():
    lo, hi = lower_upper_prevision(three_chain_family(), 0.0)
    assert np.array_equal(lo.values, [1.0, 0.0]) and np.array_equal(hi.values, [1.0, 0.0])


def test_prevision_singleton():
    fam = family_of({"A": (2, 5)})
    lo, hi = lower_upper_prevision(fam, 0.4)
    assert np.array_equal(lo.values, fam.action("A", 0.4))
    assert np.array_equal(hi.values, lo.values)


# DOT export

@pytest.mark.parametrize("rel, edges", [(diamond_relation(4), 8), (chain_relation(3), 2), (chain_relation(1), 0)])
def test_export_edges(tmp_path, rel, edges):
    r = analyze_relation(*rel)
    path = tmp_path / "h.dot"
    assert export_hasse(r, path) == edges
    text = path.read_text()
    assert text.count("->") == edges
    assert text.startswith("digraph")


def test_dot_annotations():
    text = hasse_dot(analyze_relation(*diamond_relation(4)))
    assert "(least)" in text and "(greatest)" in text
    assert '"P6" -> "P2"' in text and '"P2" -> "P1"' in text


# invariants

@st.composite
def partial_orders(draw, max_size=10):
    """Random strict order: random DAG on a shuffled index order, then transitive closure."""
    m = draw(st.integers(1, max_size))
    p = draw(st.floats(0.0, 0.7))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    perm = rng.permutation(m)
    lt = np.zeros((m, m), dtype=bool)
    for a in range(m):
        for b in range(a + 1, m):
            lt[perm[a], perm[b]] = rng.random() < p
    for k in range(m):
        lt |= lt[:, [k]] & lt[[k], :]
    rel = [[EQUAL if i == j else BELOW if lt[i, j] else ABOVE if lt[j, i] else INCOMPARABLE
            for j in range(m)] for i in range(m)]
    return [f"Q{k}" for k in range(m)], rel, lt


@given(partial_orders())
def test_width_matches_brute_force(po):
    names, rel, _ = po
    r = analyze_relation(names, rel)
    assert r.width == brute_force_width(rel) == len(r.max_antichain)
    idx = [names.index(a) for a in r.max_antichain]
    assert all(rel[a][b] == INCOMPARABLE for a in idx for b in idx if a != b)


@given(partial_orders())
def test_hasse_closure_reconstructs_relation(po):
    names, rel, lt = po
    r = analyze_relation(names, rel)
    m = len(names)
    cl = np.zeros((m, m), dtype=bool)
    for a, b in r.hasse_edges:
        cl[names.index(a), names.index(b)] = True
    for k in range(m):
        cl |= cl[:, [k]] & cl[[k], :]
    assert np.array_equal(cl, lt)


@given(partial_orders())
def test_extremes_and_antisymmetry(po):
    names, rel, _ = po
    r = analyze_relation(names, rel)
    m = len(names)
    for i in range(m):
        for j in range(m):
            assert (rel[i][j] == BELOW) == (rel[j][i] == ABOVE)
    if r.least is not None:
        a = names.index(r.least)
        assert all(rel[a][b] in (BELOW, EQUAL) for b in range(m))
    if r.greatest is not None:
        a = names.index(r.greatest)
        assert all(rel[b][a] in (BELOW, EQUAL) for b in range(m))


@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_family_relation_consistent(m, seed):
    fam = random_two_state_family(m, seed)
    rel = relation_matrix(fam)
    lt = np.array([[rel[i][j] == BELOW for j in range(m)] for i in range(m)])
    for i in range(m):
        for j in range(m):
            assert (rel[i][j] == BELOW) == (rel[j][i] == ABOVE)
            if i != j:
                assert rel[i][j] == exact_compare(fam, i, j)
    # transitive on the strict part
    assert not np.any((lt.astype(int) @ lt.astype(int) > 0) & ~lt)
    r = order_report(fam)
    assert r.width == brute_force_width(rel)
    if r.least is not None:
        lo, _ = lower_upper_prevision(fam, 0.7, r)
        assert np.allclose(lo.values, fam.action(r.least, 0.7), atol=fam.eps_order)


@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_shared_measure_rigidity(n, seed):
    (L1, mu), (L2, _) = shared_measure_pair(n, seed)
    rng = np.random.default_rng(seed)
    fam = ImpreciseFamily({"P": (L1, mu), "R": (L2, mu)}, rng.normal(size=n))
    assert shared_measure_rigidity(fam)["pass"]
