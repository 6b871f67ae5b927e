"""Pointwise order on a finite family of Markov semigroups.

Member ``i`` is below member ``j`` when ``P^i_t f <= P^j_t f`` at every
state and time for one fixed functional ``f``. Times are sampled on a grid,
so the relation is approximate in general; two-state members admit an exact
decision through polynomial sign analysis (see ``sturm``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache

import numpy as np

from . import sturm
from .errors import ImpMarkovError, IntransitiveRelation, TooLarge
from .semigroup import (
    Functional,
    GeneratorMatrix,
    ProbabilityMeasure,
    apply,
    check_semigroup_axioms,
    invariant_measure,
    transition_matrix,
    values_of,
)

BELOW, ABOVE, EQUAL, INCOMPARABLE = "below", "above", "equal", "incomparable"
RELATIONS = (BELOW, ABOVE, EQUAL, INCOMPARABLE)
_FLIP = {BELOW: ABOVE, ABOVE: BELOW, EQUAL: EQUAL, INCOMPARABLE: INCOMPARABLE}

BRUTE_FORCE_LIMIT = 15
EXACT_DEGREE_CAP = 64


def default_time_grid():
    return np.geomspace(1e-3, 50.0, 64)


@dataclass(eq=False)
class ImpreciseFamily:
    """Named members ``(generator, invariant measure)`` sharing one state space."""

    members: dict
    f_tilde: object
    time_grid: np.ndarray = field(default_factory=default_time_grid)
    eps_order: float = 1e-9

    def __post_init__(self):
        if not self.members:
            raise ValueError("a family needs at least one member")
        members = {}
        states = None
        for name, entry in self.members.items():
            L, mu = entry if isinstance(entry, tuple) else (entry, None)
            if not isinstance(L, GeneratorMatrix):
                raise TypeError(f"member {name!r} is not a GeneratorMatrix")
            if states is None:
                states = L.states
            elif L.states != states:
                raise ValueError(f"member {name!r} lives on a different state space")
            if mu is None:
                mu = invariant_measure(L)
            members[str(name)] = (L, mu)
        self.members = members
        self.states = states
        f = values_of(self.f_tilde)
        self.f_tilde = Functional(states, f)
        grid = np.asarray(self.time_grid, dtype=float)
        if grid.ndim != 1 or grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
            raise ValueError("time grid must be strictly increasing positive reals")
        self.time_grid = grid
        if not self.eps_order >= 0:
            raise ValueError("eps_order must be nonnegative")

    @property
    def names(self) -> list:
        return list(self.members)

    def __len__(self):
        return len(self.members)

    def index(self, member) -> int:
        return member if isinstance(member, (int, np.integer)) else self.names.index(member)

    def generator(self, member) -> GeneratorMatrix:
        return self.members[self.names[self.index(member)]][0]

    def measure(self, member) -> ProbabilityMeasure:
        return self.members[self.names[self.index(member)]][1]

    def action(self, member, t: float) -> np.ndarray:
        return apply(transition_matrix(self.generator(member), t), self.f_tilde)

    @cached_property
    def actions(self) -> np.ndarray:
        """``actions[m, k, x] = (P^m_{t_k} f)(x)`` on the time grid."""
        out = np.empty((len(self), self.time_grid.size, self.states.size))
        for m in range(len(self)):
            for k, t in enumerate(self.time_grid):
                out[m, k] = self.action(m, t)
        return out


def compare(family: ImpreciseFamily, i, j) -> str:
    """Relation of member ``i`` to member ``j`` on the time grid."""
    i, j = family.index(i), family.index(j)
    if i == j:
        return EQUAL
    d = family.actions[j] - family.actions[i]
    eps = family.eps_order
    up = bool(np.max(d) > eps)
    down = bool(np.min(d) < -eps)
    if up and down:
        return INCOMPARABLE
    if up:
        return BELOW
    if down:
        return ABOVE
    return EQUAL


# exact decision for two-state members

def _two_state_closed_form(a: Fraction, b: Fraction):
    """``(gap, mean weights)``: ``P_t f(x) = mu f + (f(x) - mu f) exp(-gap t)``."""
    gap = a + b
    weights = (Fraction(1, 2), Fraction(1, 2)) if gap == 0 else (b / gap, a / gap)
    return gap, weights


def _exponents(g_i: Fraction, g_j: Fraction):
    """Integer powers ``(p, q)`` with ``exp(-g_i t) = u^p`` and ``exp(-g_j t) = u^q``."""
    if g_i == 0 or g_j == 0:
        return (0 if g_i == 0 else 1), (0 if g_j == 0 else 1)
    r = g_i / g_j
    return r.numerator, r.denominator


@lru_cache(maxsize=4096)
def _exact_two_state(rates_i, rates_j, f):
    g_i, w_i = _two_state_closed_form(*map(Fraction, rates_i))
    g_j, w_j = _two_state_closed_form(*map(Fraction, rates_j))
    p, q = _exponents(g_i, g_j)
    if max(p, q) > EXACT_DEGREE_CAP:
        return None
    f = [Fraction(v) for v in f]
    m_i = w_i[0] * f[0] + w_i[1] * f[1]
    m_j = w_j[0] * f[0] + w_j[1] * f[1]
    signs = []
    for x in range(2):
        # P^j_t f(x) - P^i_t f(x) as a polynomial in u = exp(-c t), u in (0, 1]
        poly = [Fraction(0)] * (max(p, q) + 1)
        poly[0] += m_j - m_i
        poly[q] += f[x] - m_j
        poly[p] -= f[x] - m_i
        signs.append(sturm.sign_on_interval(poly, 0, 1))
    if "mixed" in signs or {"nonnegative", "nonpositive"} <= set(signs):
        return INCOMPARABLE
    if "nonnegative" in signs:
        return BELOW
    if "nonpositive" in signs:
        return ABOVE
    return EQUAL


def exact_compare(family: ImpreciseFamily, i, j):
    """Exact relation between two-state members over all ``t >= 0``.

    Returns None when the members are not two-state or the gap ratio needs
    a polynomial of degree above ``EXACT_DEGREE_CAP``.
    """
    i, j = family.index(i), family.index(j)
    if family.states.size != 2:
        return None
    if i == j:
        return EQUAL
    Li, Lj = family.generator(i).rates, family.generator(j).rates
    return _exact_two_state((float(Li[0, 1]), float(Li[1, 0])), (float(Lj[0, 1]), float(Lj[1, 0])),
                            tuple(float(v) for v in family.f_tilde.values))


# order structure

@dataclass
class OrderReport:
    names: list
    relation: list
    width: int
    max_antichain: list
    least: str | None
    greatest: str | None
    hasse_edges: list
    classes: list
    exactness: str = "approximate"
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "names": list(self.names),
            "relation": [list(r) for r in self.relation],
            "width": int(self.width),
            "max_antichain": list(self.max_antichain),
            "least": self.least,
            "greatest": self.greatest,
            "hasse_edges": [list(e) for e in self.hasse_edges],
            "classes": [list(c) for c in self.classes],
            "exactness": self.exactness,
            "details": self.details,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OrderReport":
        return cls(
            names=list(d["names"]),
            relation=[list(r) for r in d["relation"]],
            width=int(d["width"]),
            max_antichain=list(d["max_antichain"]),
            least=d.get("least"),
            greatest=d.get("greatest"),
            hasse_edges=[tuple(e) for e in d["hasse_edges"]],
            classes=[list(c) for c in d["classes"]],
            exactness=d.get("exactness", "approximate"),
            details=dict(d.get("details", {})),
        )


def relation_matrix(family: ImpreciseFamily) -> list:
    m = len(family)
    rel = [[EQUAL] * m for _ in range(m)]
    for i in range(m):
        for j in range(i + 1, m):
            r = compare(family, i, j)
            rel[i][j], rel[j][i] = r, _FLIP[r]
    return rel


def _check_relation(rel):
    m = len(rel)
    for i in range(m):
        if len(rel[i]) != m:
            raise ValueError("relation must be a square matrix")
        if rel[i][i] != EQUAL:
            raise ValueError(f"relation is not reflexive at member {i}")
        for j in range(m):
            if rel[i][j] not in RELATIONS:
                raise ValueError(f"unknown relation entry {rel[i][j]!r}")
            if rel[j][i] != _FLIP[rel[i][j]]:
                raise ValueError(f"relation entries ({i},{j}) and ({j},{i}) disagree")


def _equality_classes(rel):
    """Partition into mutually equal members; raises if equality is not transitive."""
    m = len(rel)
    classes, seen = [], set()
    for i in range(m):
        if i in seen:
            continue
        cls = [j for j in range(m) if rel[i][j] == EQUAL]
        for a in cls:
            for b in cls:
                if rel[a][b] != EQUAL:
                    raise IntransitiveRelation(
                        f"members {a} and {b} are both equal to {i} but not to each other; "
                        "use a smaller eps_order or a finer time grid")
        for a in cls:
            for k in range(m):
                if rel[a][k] != rel[i][k]:
                    raise IntransitiveRelation(
                        f"equal members {i} and {a} relate differently to member {k}; "
                        "use a smaller eps_order or a finer time grid")
        classes.append(cls)
        seen.update(cls)
    return classes


def _strict_order(rel, classes):
    """``lt[a][b]`` on classes, with a transitivity check."""
    c = len(classes)
    lt = np.zeros((c, c), dtype=bool)
    for a in range(c):
        for b in range(c):
            lt[a, b] = rel[classes[a][0]][classes[b][0]] == BELOW
    for a in range(c):
        for b in np.nonzero(lt[a])[0]:
            missing = np.nonzero(lt[b] & ~lt[a])[0]
            if missing.size:
                k = int(missing[0])
                raise IntransitiveRelation(
                    f"{classes[a][0]} < {classes[b][0]} < {classes[k][0]} but not "
                    f"{classes[a][0]} < {classes[k][0]}; use a smaller eps_order or a finer time grid")
    return lt


def _max_matching(adj):
    """Maximum bipartite matching by augmenting paths; ``match_right[v]`` is the
    left partner of right vertex ``v`` or -1."""
    n = adj.shape[0]
    match_right = [-1] * n

    def augment(u, visited):
        for v in np.nonzero(adj[u])[0]:
            if visited[v]:
                continue
            visited[v] = True
            if match_right[v] < 0 or augment(match_right[v], visited):
                match_right[v] = u
                return True
        return False

    for u in range(n):
        augment(u, [False] * n)
    return match_right


def width_and_antichain(lt: np.ndarray):
    """Dilworth width of a strict order and a maximum antichain.

    The minimum chain cover has ``N - |M|`` chains for a maximum matching M
    of the split graph (left copy -> right copy along ``<``). A minimum vertex
    cover follows from the alternating-path reachability set Z (Konig), and
    the elements with neither copy in the cover form a maximum antichain.
    """
    n = lt.shape[0]
    match_right = _max_matching(lt)
    match_left = [-1] * n
    for v, u in enumerate(match_right):
        if u >= 0:
            match_left[u] = v
    z_left = [match_left[u] < 0 for u in range(n)]
    z_right = [False] * n
    stack = [u for u in range(n) if z_left[u]]
    while stack:
        u = stack.pop()
        for v in np.nonzero(lt[u])[0]:
            if not z_right[v]:
                z_right[v] = True
                w = match_right[v]
                if w >= 0 and not z_left[w]:
                    z_left[w] = True
                    stack.append(w)
    antichain = [x for x in range(n) if z_left[x] and not z_right[x]]
    width = n - sum(1 for u in match_right if u >= 0)
    assert len(antichain) == width
    return width, antichain


def transitive_reduction(lt: np.ndarray):
    """Covering pairs ``(a, b)`` of a transitive strict order."""
    n = lt.shape[0]
    return [(a, b) for a in range(n) for b in range(n)
            if lt[a, b] and not np.any(lt[a] & lt[:, b])]


def analyze_relation(names, rel, exactness: str = "explicit", details=None) -> OrderReport:
    """Order structure of an explicit relation matrix."""
    names = [str(n) for n in names]
    if len(names) != len(rel):
        raise ValueError("names and relation sizes differ")
    _check_relation(rel)
    classes = _equality_classes(rel)
    lt = _strict_order(rel, classes)
    width, antichain = width_and_antichain(lt)
    c = len(classes)
    rep = [names[cls[0]] for cls in classes]
    least = next((rep[a] for a in range(c) if all(lt[a, b] for b in range(c) if b != a)), None)
    greatest = next((rep[a] for a in range(c) if all(lt[b, a] for b in range(c) if b != a)), None)
    return OrderReport(
        names=names,
        relation=[list(r) for r in rel],
        width=width,
        max_antichain=[rep[a] for a in antichain],
        least=least,
        greatest=greatest,
        hasse_edges=[(rep[a], rep[b]) for a, b in transitive_reduction(lt)],
        classes=[[names[i] for i in cls] for cls in classes],
        exactness=exactness,
        details=dict(details or {}),
    )


def order_report(family: ImpreciseFamily) -> OrderReport:
    """Relation, width, extremes and Hasse edges of a family.

    Grid conclusions are cross-checked by ``exact_compare`` when every pair
    admits it; the report is then marked exact, otherwise approximate.
    """
    rel = relation_matrix(family)
    m = len(family)
    disagreements, certified = [], True
    for i in range(m):
        for j in range(i + 1, m):
            exact = exact_compare(family, i, j)
            if exact is None:
                certified = False
            elif exact != rel[i][j]:
                disagreements.append([family.names[i], family.names[j], rel[i][j], exact])
    exactness = "exact" if certified and not disagreements else "approximate"
    details = {
        "eps_order": family.eps_order,
        "time_grid": [float(family.time_grid[0]), float(family.time_grid[-1]), int(family.time_grid.size)],
        "exact_disagreements": disagreements,
    }
    return analyze_relation(family.names, rel, exactness, details)


def _as_relation(relation):
    if isinstance(relation, OrderReport):
        return relation.relation
    if isinstance(relation, ImpreciseFamily):
        return relation_matrix(relation)
    return relation


def brute_force_width(relation) -> int:
    """Largest pairwise-incomparable subset, by enumerating every subset."""
    rel = _as_relation(relation)
    m = len(rel)
    if m > BRUTE_FORCE_LIMIT:
        raise TooLarge(f"{m} members exceeds the brute-force limit of {BRUTE_FORCE_LIMIT}")
    inc = [sum(1 << j for j in range(m) if rel[i][j] == INCOMPARABLE) for i in range(m)]
    ok = [False] * (1 << m)
    ok[0] = True
    best = 0
    for s in range(1, 1 << m):
        low = (s & -s).bit_length() - 1
        rest = s & (s - 1)
        ok[s] = ok[rest] and (inc[low] & rest) == rest
        if ok[s]:
            best = max(best, bin(s).count("1"))
    return best


def directedness_check(relation, subset, names=None) -> dict:
    """Whether every pair in ``subset`` has an upper (lower) bound inside it.

    ``subset`` holds member indices, or names when ``names`` (or an
    OrderReport) is given.
    """
    if isinstance(relation, OrderReport):
        names = relation.names
    rel = _as_relation(relation)
    idx = [names.index(s) if names is not None and not isinstance(s, (int, np.integer)) else int(s)
           for s in subset]

    def le(a, b):
        return rel[a][b] in (BELOW, EQUAL)

    up = all(any(le(a, c) and le(b, c) for c in idx) for a in idx for b in idx)
    down = all(any(le(c, a) and le(c, b) for c in idx) for a in idx for b in idx)
    return {"up_directed": up, "down_directed": down}


def minimal_elements(report: OrderReport) -> list:
    rel = report.relation
    reps = [report.names.index(c[0]) for c in report.classes]
    return [report.names[a] for a in reps if not any(rel[b][a] == BELOW for b in reps)]


def maximal_elements(report: OrderReport) -> list:
    rel = report.relation
    reps = [report.names.index(c[0]) for c in report.classes]
    return [report.names[a] for a in reps if not any(rel[a][b] == BELOW for b in reps)]


def imsg_certify(family: ImpreciseFamily, axiom_grid=(0.1, 0.5, 1.0, 2.0)) -> dict:
    """Certificate that a finite family forms an imprecise Markov semigroup.

    Compactness and Dedekind-closedness hold automatically for finitely many
    members, so only the semigroup axioms, the width and the existence of
    least and greatest elements are checked. A negative certificate carries
    the minimal and maximal elements as antichain witnesses.
    """
    axioms = {name: check_semigroup_axioms(L, axiom_grid).passed
              for name, (L, _) in family.members.items()}
    report = order_report(family)
    extremes = report.least is not None and report.greatest is not None
    cert = {
        "positive": bool(all(axioms.values()) and extremes),
        "axioms": axioms,
        "width": report.width,
        "least": report.least,
        "greatest": report.greatest,
        "order_check": report.exactness,
        "compact": "automatic (finite family)",
        "dedekind_closed": "automatic (finite family)",
    }
    if not extremes:
        cert["witness"] = {"minimal": minimal_elements(report), "maximal": maximal_elements(report)}
    return cert


def lower_upper_prevision(family: ImpreciseFamily, t: float, report: OrderReport | None = None):
    """Pointwise min and max of ``P_t f`` over the members.

    When the family has a least (greatest) element its action must match
    the min (max) within ``eps_order``; a mismatch raises.
    """
    acts = np.array([family.action(m, t) for m in range(len(family))])
    lower, upper = acts.min(axis=0), acts.max(axis=0)
    report = report if report is not None else order_report(family)
    slack = family.eps_order + 1e-12
    for name, target in ((report.least, lower), (report.greatest, upper)):
        if name is not None:
            dev = float(np.max(np.abs(acts[family.index(name)] - target)))
            if dev > slack:
                raise ImpMarkovError(f"extreme member {name} misses the envelope by {dev:.3e} at t={t}")
    return Functional(family.states, lower), Functional(family.states, upper)


# Hasse diagram export

def _dot_id(name: str) -> str:
    return '"' + str(name).replace("\\", "\\\\").replace('"', '\\"') + '"'


def hasse_dot(report: OrderReport) -> str:
    """Graphviz source with covering edges drawn from upper to lower element."""
    lines = ["digraph hasse {", "  rankdir=TB;", "  node [shape=ellipse];"]
    for cls in report.classes:
        rep = cls[0]
        label = ", ".join(cls)
        attrs = []
        if rep == report.least:
            label += "\\n(least)"
            attrs.append('style=filled, fillcolor="lightblue"')
        if rep == report.greatest:
            label += "\\n(greatest)"
            attrs.append('style=filled, fillcolor="lightsalmon"' if rep != report.least
                         else 'peripheries=2')
        attrs.insert(0, f"label={_dot_id(label)}")
        lines.append(f"  {_dot_id(rep)} [{', '.join(attrs)}];")
    for lower, upper in report.hasse_edges:
        lines.append(f"  {_dot_id(upper)} -> {_dot_id(lower)};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_hasse(report: OrderReport, path) -> int:
    """Write the Hasse diagram to ``path``; returns the number of edges."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(hasse_dot(report))
    return len(report.hasse_edges)


def shared_measure_rigidity(family: ImpreciseFamily, tol: float = 1e-12) -> dict:
    """No two members sharing a fully supported invariant measure are strictly ordered.

    ``sum_x mu(x) (P^j_t f - P^i_t f)(x) = 0`` for all t, so a one-signed
    difference must vanish: strict comparability would be a contradiction.
    """
    ref = family.measure(0).weights
    if np.any(ref <= 0):
        raise ValueError("the shared invariant measure must have full support")
    for name in family.names:
        if np.max(np.abs(family.measure(name).weights - ref)) > tol:
            raise ValueError(f"member {name!r} has a different invariant measure")
    rel = relation_matrix(family)
    strict = [[family.names[i], family.names[j], rel[i][j]]
              for i in range(len(family)) for j in range(i + 1, len(family))
              if rel[i][j] in (BELOW, ABOVE)]
    return {"pass": not strict, "strict_pairs": strict, "relation": rel}
