"""Exact sign decisions for rational polynomials on an interval.

Polynomials are lists of ``Fraction`` coefficients, lowest degree first.
Used to certify the order between two-state chains: with commensurate
spectral gaps the difference of their actions on a functional is a
polynomial in ``u = exp(-g t)``, ``u`` in ``(0, 1]``.
"""

from __future__ import annotations

from fractions import Fraction


def trim(p):
    p = list(p)
    while p and p[-1] == 0:
        p.pop()
    return p


def evaluate(p, x):
    acc = Fraction(0)
    for c in reversed(p):
        acc = acc * x + c
    return acc


def derivative(p):
    return trim([k * c for k, c in enumerate(p)][1:])


def divmod_poly(num, den):
    num, den = trim(num), trim(den)
    if not den:
        raise ZeroDivisionError("polynomial division by zero")
    quot = [Fraction(0)] * max(0, len(num) - len(den) + 1)
    rem = list(num)
    while len(trim(rem)) >= len(den):
        rem = trim(rem)
        shift = len(rem) - len(den)
        factor = rem[-1] / den[-1]
        quot[shift] = factor
        for k, c in enumerate(den):
            rem[k + shift] -= factor * c
        rem = trim(rem)
    return trim(quot), trim(rem)


def gcd_poly(p, q):
    p, q = trim(p), trim(q)
    while q:
        _, r = divmod_poly(p, q)
        p, q = q, r
    return [c / p[-1] for c in p] if p else p


def squarefree(p):
    p = trim(p)
    dp = derivative(p)
    if not dp:
        return p
    g = gcd_poly(p, dp)
    return divmod_poly(p, g)[0] if len(g) > 1 else p


def sturm_chain(p):
    chain = [trim(p), derivative(p)]
    while chain[-1]:
        _, r = divmod_poly(chain[-2], chain[-1])
        chain.append([-c for c in r])
    return [q for q in chain if q]


def _sign_changes(chain, x):
    signs = [s for s in (evaluate(q, x) for q in chain) if s != 0]
    return sum(1 for a, b in zip(signs, signs[1:]) if (a > 0) != (b > 0))


def count_roots(p, lo, hi) -> int:
    """Distinct real roots of ``p`` in the half-open interval ``(lo, hi]``."""
    sf = squarefree(p)
    if len(sf) <= 1:
        return 0
    chain = sturm_chain(sf)
    return _sign_changes(chain, lo) - _sign_changes(chain, hi)


def isolate_roots(p, lo, hi):
    """Disjoint intervals ``(a, b]`` inside ``(lo, hi]`` each holding one root."""
    sf = squarefree(p)
    if len(sf) <= 1:
        return []
    chain = sturm_chain(sf)
    out, stack = [], [(Fraction(lo), Fraction(hi))]
    while stack:
        a, b = stack.pop()
        k = _sign_changes(chain, a) - _sign_changes(chain, b)
        if k == 0:
            continue
        if k == 1:
            out.append((a, b))
            continue
        mid = (a + b) / 2
        stack.extend([(a, mid), (mid, b)])
    return sorted(out)


def _separated(p, lo, hi):
    """Isolating intervals refined until they are pairwise separated, strictly
    inside ``(lo, hi)`` where possible, and any root hit exactly is pinned."""
    sf = squarefree(p)
    chain = sturm_chain(sf)
    ivs = [list(iv) for iv in isolate_roots(p, lo, hi)]

    def settled(k):
        a, b = ivs[k]
        if a == b:
            return True
        left = ivs[k - 1][1] if k else lo
        right = ivs[k + 1][0] if k + 1 < len(ivs) else hi
        return a > left and b < right

    for _ in range(400):
        todo = [k for k in range(len(ivs)) if not settled(k)]
        if not todo:
            break
        for k in todo:
            a, b = ivs[k]
            if evaluate(sf, b) == 0:
                ivs[k] = [b, b]
                continue
            mid = (a + b) / 2
            if evaluate(sf, mid) == 0:
                ivs[k] = [mid, mid]
            elif _sign_changes(chain, a) - _sign_changes(chain, mid) == 1:
                ivs[k] = [a, mid]
            else:
                ivs[k] = [mid, b]
    return ivs


def sign_on_interval(p, lo, hi) -> str:
    """One of ``"zero"``, ``"nonnegative"``, ``"nonpositive"`` or ``"mixed"``
    for ``p`` on the closed interval ``[lo, hi]``.

    ``p`` cannot change sign between consecutive distinct roots, so probing
    the endpoints and one point in every gap between isolated roots decides
    the sign exactly.
    """
    p = trim(p)
    if not p:
        return "zero"
    lo, hi = Fraction(lo), Fraction(hi)
    ivs = _separated(p, lo, hi)
    bounds = [lo] + [x for iv in ivs for x in iv] + [hi]
    probes = [lo, hi]
    for a, b in zip(bounds[0::2], bounds[1::2]):
        if a < b:
            probes.append((a + b) / 2)
    values = [evaluate(p, x) for x in probes]
    pos = any(v > 0 for v in values)
    neg = any(v < 0 for v in values)
    if pos and neg:
        return "mixed"
    return "nonpositive" if neg else "nonnegative"
