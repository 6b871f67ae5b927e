"""Finite-state Markov semigroups given by their rate matrices.

A chain on ``n`` states is described by a generator ``L`` (off-diagonal
rates >= 0, rows summing to zero). ``P_t = exp(tL)`` is evaluated by
uniformization so that every transition matrix is entrywise nonnegative and
row-stochastic by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    NegativeOffDiagonal,
    NotUniquelyErgodic,
    RowSumViolation,
)

MAX_STATES = 2000
ROW_SUM_TOL = 1e-12
DEFAULT_EXPM_TOL = 1e-13
DEFAULT_TOL = 1e-10

# largest Poisson mean handled before scaling-and-squaring kicks in
_UNIFORMIZATION_MEAN = 2.0


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class StateSpace:
    labels: tuple

    def __post_init__(self):
        labels = tuple(str(s) for s in self.labels)
        if not labels:
            raise ValueError("state space needs at least one state")
        if len(set(labels)) != len(labels):
            raise ValueError("state labels must be distinct")
        object.__setattr__(self, "labels", labels)

    @property
    def size(self) -> int:
        return len(self.labels)

    def __len__(self):
        return len(self.labels)

    @classmethod
    def of_size(cls, n: int) -> "StateSpace":
        return cls(tuple(str(i) for i in range(n)))

    def index(self, label) -> int:
        return self.labels.index(str(label))


@dataclass(frozen=True, eq=False)
class GeneratorMatrix:
    states: StateSpace
    rates: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rates", _readonly(self.rates))

    @property
    def size(self) -> int:
        return self.states.size

    @property
    def uniformization_rate(self) -> float:
        return float(np.max(-np.diag(self.rates), initial=0.0))

    def __matmul__(self, f):
        return self.rates @ np.asarray(f, dtype=float)

    def __repr__(self):
        return f"GeneratorMatrix(n={self.size})"


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    states: StateSpace
    time: float
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _readonly(self.probs))

    def __matmul__(self, f):
        return self.probs @ np.asarray(f, dtype=float)


@dataclass(frozen=True, eq=False)
class ProbabilityMeasure:
    states: StateSpace
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.states.size,):
            raise DimensionMismatch(f"measure has shape {w.shape}, expected ({self.states.size},)")
        if np.any(w < 0):
            raise ValueError("measure weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"measure weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "weights", _readonly(w))

    def expect(self, f) -> float:
        return float(self.weights @ values_of(f))

    @property
    def support(self) -> np.ndarray:
        return self.weights > 0

    @classmethod
    def uniform(cls, states: StateSpace) -> "ProbabilityMeasure":
        return cls(states, np.full(states.size, 1.0 / states.size))


@dataclass(frozen=True, eq=False)
class Functional:
    states: StateSpace
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.states.size,):
            raise DimensionMismatch(f"functional has shape {v.shape}, expected ({self.states.size},)")
        if not np.all(np.isfinite(v)):
            raise ValueError("functional values must be finite")
        object.__setattr__(self, "values", _readonly(v))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


@dataclass
class CheckReport:
    """Outcome of a numerical check: named deviations against one tolerance."""

    name: str
    passed: bool
    max_deviation: float
    tol: float
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "name": self.name,
            "pass": bool(self.passed),
            "max_deviation": float(self.max_deviation),
            "tol": float(self.tol),
            "details": self.details,
        }


def values_of(f) -> np.ndarray:
    """Plain float vector behind a Functional, measure or array-like."""
    if isinstance(f, Functional):
        return np.asarray(f.values, dtype=float)
    if isinstance(f, ProbabilityMeasure):
        return np.asarray(f.weights, dtype=float)
    return np.asarray(f, dtype=float)


def _as_vector(f, n: int) -> np.ndarray:
    v = values_of(f)
    if v.shape != (n,):
        raise DimensionMismatch(f"functional of shape {v.shape} on a {n}-state space")
    return v


def rates_of(L) -> np.ndarray:
    if isinstance(L, GeneratorMatrix):
        return L.rates
    return np.asarray(L, dtype=float)


def validate_generator(rates, states: StateSpace | Sequence[str] | None = None,
                       tol: float = ROW_SUM_TOL, max_states: int = MAX_STATES) -> GeneratorMatrix:
    """Check sign and row-sum conditions and return a GeneratorMatrix.

    Row sums within ``tol`` (scaled by the largest rate when rates exceed 1)
    are repaired by resetting the diagonal; off-diagonal entries in
    ``[-tol, 0)`` are clipped to zero.
    """
    Q = np.array(rates, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise DimensionMismatch(f"rate matrix must be square, got shape {Q.shape}")
    n = Q.shape[0]
    if states is None:
        states = StateSpace.of_size(n)
    elif not isinstance(states, StateSpace):
        states = StateSpace(tuple(states))
    if states.size != n:
        raise DimensionMismatch(f"{n}x{n} rates for {states.size} states")
    if n > max_states:
        raise DimensionMismatch(f"{n} states exceeds the configured cap of {max_states}")
    if not np.all(np.isfinite(Q)):
        raise ValueError("rates must be finite")

    scale = max(1.0, float(np.max(np.abs(Q), initial=0.0)))
    off = ~np.eye(n, dtype=bool)
    if np.any(Q[off] < -tol * scale):
        i, j = np.argwhere((Q < -tol * scale) & off)[0]
        raise NegativeOffDiagonal(f"rate L[{i},{j}] = {Q[i, j]!r} is negative")
    Q[off & (Q < 0)] = 0.0
    dev = np.abs(Q.sum(axis=1))
    if np.any(dev > tol * scale):
        i = int(np.argmax(dev))
        raise RowSumViolation(f"row {i} sums to {Q[i].sum()!r}, expected 0")
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return GeneratorMatrix(states, Q)


def _as_generator(L) -> GeneratorMatrix:
    return L if isinstance(L, GeneratorMatrix) else validate_generator(L)


def _poisson_tail_bound(weight_next: float, q: float, j_next: int) -> float:
    # sum_{i >= j_next} w_i <= w_{j_next} / (1 - q / (j_next + 1)) once j_next + 1 > q
    ratio = q / (j_next + 1)
    if ratio >= 1.0:
        return math.inf
    return weight_next / (1.0 - ratio)


def expm_uniformized(Q: np.ndarray, t: float, tol: float = DEFAULT_EXPM_TOL) -> np.ndarray:
    """exp(tQ) for a rate matrix Q by uniformization.

    With ``lam = max |Q_ii|`` and ``M = I + Q/lam`` (a stochastic matrix),
    ``exp(tQ) = sum_k Pois(k; lam t) M^k``. Long horizons are split into
    ``2^k`` steps of Poisson mean at most 2 and recombined by squaring, which
    keeps the result nonnegative; the per-step truncation tolerance is
    ``tol / 2^k`` so the total truncated mass stays below ``tol``.
    """
    Q = np.asarray(Q, dtype=float)
    n = Q.shape[0]
    identity = np.eye(n)
    lam = float(np.max(-np.diag(Q), initial=0.0))
    if t == 0 or lam == 0:
        return identity
    q_total = lam * t
    if q_total < _UNIFORMIZATION_MEAN:
        squarings = 0
    else:
        squarings = math.ceil(math.log2(q_total / _UNIFORMIZATION_MEAN))
    tau = t / 2**squarings
    step_tol = tol / 2**squarings
    M = identity + Q / lam
    q = lam * tau

    weight = math.exp(-q)
    term = identity
    P = weight * identity
    j = 0
    while True:
        next_weight = weight * q / (j + 1)
        if _poisson_tail_bound(next_weight, q, j + 1) < step_tol:
            break
        j += 1
        term = term @ M
        weight = next_weight
        P += weight * term
    for _ in range(squarings):
        P = P @ P
    P[(P < 0) & (P > -1e-14)] = 0.0
    return P


def transition_matrix(L, t: float, tol: float = DEFAULT_EXPM_TOL) -> TransitionMatrix:
    if t < 0:
        raise ValueError("time must be nonnegative")
    if not 0 < tol <= 1e-6:
        raise ValueError("tol must lie in (0, 1e-6]")
    L = _as_generator(L)
    return TransitionMatrix(L.states, float(t), expm_uniformized(L.rates, t, tol))


def apply(P, f) -> np.ndarray:
    """``(P f)(x) = sum_y P(x, y) f(y)``; accepts a TransitionMatrix or a raw matrix."""
    probs = P.probs if isinstance(P, TransitionMatrix) else np.asarray(P, dtype=float)
    return probs @ _as_vector(f, probs.shape[0])


def invariant_measure(L) -> ProbabilityMeasure:
    """Unique invariant probability of ``L``.

    The null space of ``L^T`` is sized from its singular values; more than
    one null direction means several closed classes and raises
    NotUniquelyErgodic. The measure itself solves the augmented system
    ``[L^T; 1^T] mu = [0; 1]`` in the least-squares sense.
    """
    L = _as_generator(L)
    Q = L.rates
    n = L.size
    if n == 1:
        return ProbabilityMeasure(L.states, np.ones(1))
    s = np.linalg.svd(Q.T, compute_uv=False)
    cutoff = max(s[0], 1.0) * n * np.finfo(float).eps * 16
    nullity = int(np.sum(s <= cutoff))
    if nullity > 1:
        raise NotUniquelyErgodic(f"generator has {nullity} independent invariant measures")
    A = np.vstack([Q.T, np.ones(n)])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    mu, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    mu[mu < 0] = 0.0
    mu /= mu.sum()
    residual = float(np.max(np.abs(mu @ Q)))
    if residual > DEFAULT_TOL * max(1.0, L.uniformization_rate):
        raise NotUniquelyErgodic(f"invariant measure residual {residual:.3e} too large")
    return ProbabilityMeasure(L.states, mu)


def check_invariance(L, mu: ProbabilityMeasure, f, t_grid: Iterable[float],
                     tol: float = DEFAULT_TOL) -> CheckReport:
    L = _as_generator(L)
    w = values_of(mu)
    f = _as_vector(f, L.size)
    base = float(w @ f)
    deviations = []
    for t in t_grid:
        Pf = apply(transition_matrix(L, t), f)
        deviations.append(abs(float(w @ Pf) - base))
    worst = max(deviations, default=0.0)
    return CheckReport("invariance", worst < tol, worst, tol,
                       {"t_grid": [float(t) for t in t_grid], "deviations": deviations})


def check_reversibility(L, mu: ProbabilityMeasure, t_grid: Iterable[float],
                        tol: float = DEFAULT_TOL) -> CheckReport:
    """Detailed balance plus ``int f P_t g dmu = int g P_t f dmu`` on indicators."""
    L = _as_generator(L)
    w = values_of(mu)
    flux = w[:, None] * L.rates
    balance = float(np.max(np.abs(flux - flux.T)))
    semigroup_dev = 0.0
    for t in t_grid:
        # for indicators e_i, e_j: mu_i P_t(i, j) versus mu_j P_t(j, i)
        F = w[:, None] * transition_matrix(L, t).probs
        semigroup_dev = max(semigroup_dev, float(np.max(np.abs(F - F.T))))
    worst = max(balance, semigroup_dev)
    return CheckReport("reversibility", worst < tol, worst, tol,
                       {"detailed_balance": balance, "semigroup_symmetry": semigroup_dev})


def _l2_norm(v, w):
    return float(np.sqrt(w @ (v * v)))


def check_semigroup_axioms(L, t_grid: Sequence[float], tol: float = DEFAULT_TOL,
                           continuity_levels: int = 24) -> CheckReport:
    """Identity at 0, mass conservation, positivity, composition, continuity at 0."""
    L = _as_generator(L)
    n = L.size
    t_grid = [float(t) for t in t_grid]
    P = {t: transition_matrix(L, t).probs for t in t_grid}

    identity_dev = float(np.max(np.abs(transition_matrix(L, 0.0).probs - np.eye(n))))
    mass_dev = max((float(np.max(np.abs(Pt.sum(axis=1) - 1.0))) for Pt in P.values()), default=0.0)
    min_entry = min((float(Pt.min()) for Pt in P.values()), default=0.0)
    positivity_dev = max(0.0, -min_entry)
    composition_dev = 0.0
    for t in t_grid:
        for s in t_grid:
            lhs = transition_matrix(L, t + s).probs
            composition_dev = max(composition_dev, float(np.max(np.abs(lhs - P[t] @ P[s]))))

    try:
        w = invariant_measure(L).weights
    except NotUniquelyErgodic:
        w = np.full(n, 1.0 / n)
    f = np.zeros(n)
    f[0] = 1.0
    hs = [2.0**-k for k in range(1, continuity_levels + 1)]
    norms = [_l2_norm(apply(transition_matrix(L, h), f) - f, w) for h in hs]
    ratios = [a / b if b > 0 else float("nan") for a, b in zip(norms, norms[1:])]
    bound = hs[-1] * float(np.max(np.abs(L @ f))) * 2 + tol
    continuity_ok = norms[-1] <= bound and all(b <= a + tol for a, b in zip(norms, norms[1:]))

    devs = {
        "identity": identity_dev,
        "mass_conservation": mass_dev,
        "positivity": positivity_dev,
        "composition": composition_dev,
    }
    worst = max(devs.values())
    return CheckReport(
        "semigroup_axioms",
        worst < tol and continuity_ok,
        worst,
        tol,
        {**devs, "continuity_h": hs, "continuity_norms": norms,
         "continuity_ratios": ratios, "continuity_pass": bool(continuity_ok)},
    )


def generator_from_semigroup(P_eval: Callable[[float], object], h: float) -> GeneratorMatrix:
    """Difference quotient ``(P_h - I)/h``, accurate to O(h).

    ``P_eval`` maps a time to a TransitionMatrix or a raw stochastic matrix.
    The diagonal is reset to minus the off-diagonal row sums so the result is
    an exact rate matrix.
    """
    if not 0 < h <= 1e-2:
        raise ValueError("h must lie in (0, 1e-2]")
    Ph = P_eval(h)
    states = Ph.states if isinstance(Ph, TransitionMatrix) else None
    probs = Ph.probs if isinstance(Ph, TransitionMatrix) else np.asarray(Ph, dtype=float)
    Q = (probs - np.eye(probs.shape[0])) / h
    np.fill_diagonal(Q, 0.0)
    Q[Q < 0] = 0.0
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return GeneratorMatrix(states or StateSpace.of_size(Q.shape[0]), Q)
