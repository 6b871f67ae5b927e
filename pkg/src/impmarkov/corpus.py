"""Small chains and families used as fixtures, demos and test corpora."""

from __future__ import annotations

import numpy as np

from .poset import ABOVE, BELOW, EQUAL, INCOMPARABLE, ImpreciseFamily
from .semigroup import GeneratorMatrix, ProbabilityMeasure, StateSpace, validate_generator


def generator_from_rates(rates, labels=None) -> GeneratorMatrix:
    """Off-diagonal rates in, diagonal filled so rows sum to zero."""
    Q = np.array(rates, dtype=float)
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return validate_generator(Q, labels)


def two_state(alpha: float, beta: float) -> GeneratorMatrix:
    """Rate ``alpha`` from state 0 to 1 and ``beta`` back; invariant ``(beta, alpha) / (alpha + beta)``."""
    return generator_from_rates([[0.0, alpha], [beta, 0.0]])


def two_state_measure(alpha: float, beta: float) -> ProbabilityMeasure:
    return ProbabilityMeasure(StateSpace.of_size(2), np.array([beta, alpha]) / (alpha + beta))


def complete_graph(n: int, rate: float = 1.0) -> GeneratorMatrix:
    return generator_from_rates(np.full((n, n), rate))


def cycle(n: int, rate: float = 1.0) -> GeneratorMatrix:
    A = np.zeros((n, n))
    for i in range(n):
        A[i, (i + 1) % n] = A[(i + 1) % n, i] = rate
    return generator_from_rates(A)


def path(n: int, rate: float = 1.0) -> GeneratorMatrix:
    A = np.zeros((n, n))
    for i in range(n - 1):
        A[i, i + 1] = A[i + 1, i] = rate
    return generator_from_rates(A)


def directed_cycle(n: int = 3, rate: float = 1.0) -> GeneratorMatrix:
    """Non-reversible: uniform invariant measure but no detailed balance."""
    A = np.zeros((n, n))
    for i in range(n):
        A[i, (i + 1) % n] = rate
    return generator_from_rates(A)


def reducible_pair() -> GeneratorMatrix:
    """Two disjoint unit-rate two-state blocks."""
    A = np.zeros((4, 4))
    A[0, 1] = A[1, 0] = A[2, 3] = A[3, 2] = 1.0
    return generator_from_rates(A)


def reversible_from(weights, mu) -> tuple[GeneratorMatrix, ProbabilityMeasure]:
    """``L(x, y) = S(x, y) / mu(x)`` for symmetric ``S``; ``mu`` satisfies detailed balance."""
    S = np.asarray(weights, dtype=float)
    S = 0.5 * (S + S.T)
    mu = np.asarray(mu, dtype=float)
    mu = mu / mu.sum()
    L = generator_from_rates(S / mu[:, None])
    return L, ProbabilityMeasure(L.states, mu)


def random_reversible(n: int, rng, mu=None, rate_range=(0.5, 2.0)):
    """Dense reversible chain with invariant ``mu`` (random if not given)."""
    rng = np.random.default_rng(rng)
    if mu is None:
        mu = rng.uniform(0.5, 1.5, n)
        mu = mu / mu.sum()
    S = rng.uniform(*rate_range, (n, n))
    S = 0.5 * (S + S.T) * float(np.mean(mu))
    return reversible_from(S, mu)


def reversible_corpus() -> dict:
    """Named reversible chains on at most six states, all with positive curvature."""
    chains = {}
    for a, b in [(1, 1), (1, 2), (1, 3), (2, 5)]:
        chains[f"two_state_{a}_{b}"] = (two_state(a, b), two_state_measure(a, b))
    for n in range(3, 7):
        L = complete_graph(n)
        chains[f"complete_{n}"] = (L, ProbabilityMeasure.uniform(L.states))
    for name, L in [("cycle_3", cycle(3)), ("cycle_4", cycle(4)), ("path_3", path(3)), ("path_4", path(4))]:
        chains[name] = (L, ProbabilityMeasure.uniform(L.states))
    for seed in range(10):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(3, 7))
        chains[f"random_{seed}"] = random_reversible(n, rng)
    return chains


def shared_measure_pair(n: int, rng):
    """Two independent reversible chains sharing one fully supported invariant measure."""
    rng = np.random.default_rng(rng)
    mu = rng.uniform(0.5, 1.5, n)
    mu = mu / mu.sum()
    return random_reversible(n, rng, mu), random_reversible(n, rng, mu)


def three_chain_family(**kwargs) -> ImpreciseFamily:
    """``A(1,1) <= C(1,2) <= B(1,3)`` for the indicator of state 0."""
    members = {name: (two_state(a, b), two_state_measure(a, b))
               for name, (a, b) in [("A", (1, 1)), ("C", (1, 2)), ("B", (1, 3))]}
    return ImpreciseFamily(members, [1.0, 0.0], **kwargs)


def random_two_state_family(m: int, rng, rates=(1, 2, 3, 4, 5, 6)) -> ImpreciseFamily:
    """``m`` two-state chains with integer rates, compared on the indicator of state 0."""
    rng = np.random.default_rng(rng)
    members = {}
    for k in range(m):
        a, b = (int(v) for v in rng.choice(rates, 2))
        members[f"M{k}"] = (two_state(a, b), two_state_measure(a, b))
    return ImpreciseFamily(members, [1.0, 0.0])


def diamond_relation(middle: int = 4):
    """Bottom element, ``middle`` mutually incomparable elements, top element."""
    m = middle + 2
    names = [f"P{k + 1}" for k in range(m)]
    rel = [[EQUAL] * m for _ in range(m)]
    for i in range(m):
        for j in range(m):
            if i == j:
                continue
            if i == 0 or j == m - 1:
                rel[i][j] = BELOW
            elif j == 0 or i == m - 1:
                rel[i][j] = ABOVE
            else:
                rel[i][j] = INCOMPARABLE
    return names, rel


def chain_relation(m: int):
    names = [f"P{k + 1}" for k in range(m)]
    rel = [[EQUAL if i == j else (BELOW if i < j else ABOVE) for j in range(m)] for i in range(m)]
    return names, rel
