"""One-dimensional diffusions ``Lf = a f'' + b f'`` and their grid chains.

The model semigroups are Ornstein-Uhlenbeck (``a = 1, b = -x``), Laguerre
(``a = x, b = alpha + 1 - x`` on the half line) and the heat semigroup
(``a = 1, b = 0``). Each is discretized into a birth-death generator so the
finite-state machinery (Gamma-calculus, invariant measures, uniformization)
applies unchanged.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.hermite_e import hermeval, hermegauss

from .errors import EllipticityError, PecletViolation
from .expr import parse_expression
from .gamma import gamma, gamma2
from .semigroup import (
    CheckReport,
    GeneratorMatrix,
    ProbabilityMeasure,
    StateSpace,
    apply,
    invariant_measure,
    transition_matrix,
)

BOUNDARIES = ("reflecting", "truncated")
GRIDS = ("uniform", "geometric")


def _callable(coef):
    if callable(coef):
        return coef
    if isinstance(coef, (int, float)):
        value = float(coef)
        return lambda x: np.full_like(np.asarray(x, dtype=float), value)
    return parse_expression(coef)


def _source(coef):
    if isinstance(coef, str):
        return coef
    if isinstance(coef, (int, float)):
        return repr(float(coef))
    return getattr(coef, "source", None)


def make_grid(lo: float, hi: float, size: int, kind: str = "uniform",
              ratio: float = 1.25) -> np.ndarray:
    """Uniform grid, or a geometric progression from ``lo`` that turns uniform
    once its step reaches the uniform spacing of the remaining interval."""
    if kind == "uniform":
        return np.linspace(lo, hi, size)
    if kind != "geometric":
        raise ValueError(f"unknown grid kind {kind!r}")
    if lo <= 0:
        raise ValueError("geometric grids need a positive left endpoint")
    # m geometric nodes lo * ratio^k, then a uniform tail of size - m intervals;
    # m is the first count at which the geometric step reaches the tail step
    for m in range(1, size - 1):
        last = lo * ratio ** (m - 1)
        tail_step = (hi - last) / (size - m)
        if last * (ratio - 1) >= tail_step or last * ratio >= hi:
            break
    head = lo * ratio ** np.arange(m)
    return np.concatenate([head, np.linspace(head[-1], hi, size - m + 1)[1:]])


@dataclass(frozen=True, eq=False)
class Discretization:
    spec: "DiffusionSpec"
    grid: np.ndarray
    generator: GeneratorMatrix
    measure: ProbabilityMeasure | None
    peclet_max: float


@dataclass(frozen=True, eq=False)
class DiffusionSpec:
    """``Lf = a(x) f'' + b(x) f'`` on ``[lo, hi]`` with ``grid_size`` nodes.

    ``a`` and ``b`` may be callables, numbers or expression strings.
    """

    domain: tuple
    grid_size: int
    a: Callable
    b: Callable
    boundary: str = "reflecting"
    grid_kind: str = "uniform"
    name: str = "diffusion"
    with_measure: bool = True

    def __post_init__(self):
        lo, hi = (float(v) for v in self.domain)
        if not hi > lo:
            raise ValueError("domain must satisfy lo < hi")
        if self.grid_size < 16:
            raise ValueError("grid_size must be at least 16")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}")
        if self.grid_kind not in GRIDS:
            raise ValueError(f"grid kind must be one of {GRIDS}")
        object.__setattr__(self, "domain", (lo, hi))
        object.__setattr__(self, "a_source", _source(self.a))
        object.__setattr__(self, "b_source", _source(self.b))
        object.__setattr__(self, "a", _callable(self.a))
        object.__setattr__(self, "b", _callable(self.b))
        x = self.grid
        a = np.asarray(self.a(x), dtype=float) * np.ones_like(x)
        if not np.all(a > 0):
            bad = x[np.argmin(a)]
            raise EllipticityError(f"diffusion coefficient a({bad:.4g}) = {a.min():.4g} is not positive")

    @property
    def grid(self) -> np.ndarray:
        return make_grid(*self.domain, self.grid_size, self.grid_kind)

    def discretize(self) -> Discretization:
        return discretize(self)

    def refined(self, grid_size: int) -> "DiffusionSpec":
        spec = DiffusionSpec(self.domain, grid_size, self.a, self.b, self.boundary,
                             self.grid_kind, self.name, self.with_measure)
        object.__setattr__(spec, "a_source", self.a_source)
        object.__setattr__(spec, "b_source", self.b_source)
        return spec

    def to_dict(self):
        return {
            "name": self.name,
            "domain": list(self.domain),
            "grid_size": self.grid_size,
            "a": self.a_source,
            "b": self.b_source,
            "boundary": self.boundary,
            "grid": self.grid_kind,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiffusionSpec":
        return cls(
            domain=tuple(d["domain"]),
            grid_size=int(d["grid_size"]),
            a=d["a"],
            b=d["b"],
            boundary=d.get("boundary", "reflecting"),
            grid_kind=d.get("grid", "uniform"),
            name=d.get("name", "diffusion"),
            with_measure=d.get("invariant_measure", True),
        )


def discretize(spec: DiffusionSpec) -> Discretization:
    """Central-difference birth-death generator for ``spec``.

    Interior rates are ``2a/(h+ (h- + h+)) + b h-/(h+ (h- + h+))`` upwards and
    ``2a/(h- (h- + h+)) - b h+/(h- (h- + h+))`` downwards, i.e.
    ``a/h^2 +- b/(2h)`` on a uniform grid. Negative rates (cell Péclet number
    at least 1) are clipped to zero with a PecletViolation warning. Boundary
    rows either mirror a ghost node (reflecting) or drop the outward rate
    (truncated); both keep the chain conservative.
    """
    x = spec.grid
    n = len(x)
    a = np.asarray(spec.a(x), dtype=float) * np.ones(n)
    b = np.asarray(spec.b(x), dtype=float) * np.ones(n)
    h = np.diff(x)
    Q = np.zeros((n, n))
    hm, hp = h[:-1], h[1:]
    s = hm + hp
    i = np.arange(1, n - 1)
    Q[i, i + 1] = 2 * a[i] / (hp * s) + b[i] * hm / (hp * s)
    Q[i, i - 1] = 2 * a[i] / (hm * s) - b[i] * hp / (hm * s)
    if spec.boundary == "reflecting":
        Q[0, 1] = 2 * a[0] / h[0] ** 2
        Q[-1, -2] = 2 * a[-1] / h[-1] ** 2
    else:
        Q[0, 1] = a[0] / h[0] ** 2 + b[0] / (2 * h[0])
        Q[-1, -2] = a[-1] / h[-1] ** 2 - b[-1] / (2 * h[-1])

    peclet = np.abs(b[1:-1]) * np.maximum(hm, hp) / (2 * a[1:-1])
    peclet_max = float(peclet.max(initial=0.0))
    if np.any(Q < 0) or peclet_max >= 1:
        warnings.warn(
            f"{spec.name}: cell Péclet number {peclet_max:.3g} >= 1, negative rates clipped; "
            "refine the grid", PecletViolation, stacklevel=2)
        Q[Q < 0] = 0.0
    np.fill_diagonal(Q, -Q.sum(axis=1))
    states = StateSpace(tuple(f"x{k}" for k in range(n)))
    L = GeneratorMatrix(states, Q)
    mu = birth_death_measure(Q, states) if spec.with_measure else None
    return Discretization(spec, x, L, mu, peclet_max)


def birth_death_measure(Q: np.ndarray, states: StateSpace) -> ProbabilityMeasure:
    """Invariant measure of a tridiagonal generator.

    Uses the general solver from semigroup-core and polishes it with detailed
    balance, which holds exactly for birth-death chains and is accurate in
    the far tails where the dense solve loses relative precision.
    """
    mu_dense = invariant_measure(GeneratorMatrix(states, Q)).weights
    n = Q.shape[0]
    log_w = np.zeros(n)
    up = Q[np.arange(n - 1), np.arange(1, n)]
    down = Q[np.arange(1, n), np.arange(n - 1)]
    if np.all(up > 0) and np.all(down > 0):
        log_w[1:] = np.cumsum(np.log(up) - np.log(down))
        w = np.exp(log_w - log_w.max())
        w /= w.sum()
        if np.max(np.abs(w - mu_dense)) < 1e-8:
            return ProbabilityMeasure(states, w)
    return ProbabilityMeasure(states, mu_dense)


# model semigroups ------------------------------------------------------------

def ou_spec(grid_size: int = 400, lo: float = -6.0, hi: float = 6.0, theta: float = 1.0,
            sigma: float = math.sqrt(2.0), boundary: str = "reflecting") -> DiffusionSpec:
    """Ornstein-Uhlenbeck ``dX = -theta X dt + sigma dW``: ``a = sigma^2/2, b = -theta x``."""
    diff = sigma**2 / 2
    spec = DiffusionSpec((lo, hi), grid_size, lambda x: np.full_like(x, diff),
                         lambda x: -theta * x, boundary, "uniform", "ornstein-uhlenbeck")
    object.__setattr__(spec, "a_source", repr(diff))
    object.__setattr__(spec, "b_source", f"-{theta!r}*x")
    return spec


def langevin_spec(grad_potential: Callable = lambda x: x, grid_size: int = 400,
                  lo: float = -6.0, hi: float = 6.0, boundary: str = "reflecting") -> DiffusionSpec:
    """Brownian motion in a potential, ``dX = -V'(X) dt + sqrt(2) dW``:
    ``a = 1, b = -V'``. The default is the quadratic potential ``x^2 / 2``."""
    return DiffusionSpec((lo, hi), grid_size, lambda x: np.ones_like(x),
                         lambda x: -np.asarray(grad_potential(x), dtype=float) * np.ones_like(x),
                         boundary, "uniform", "langevin")


def heat_spec(grid_size: int = 400, lo: float = -5.0, hi: float = 5.0,
              boundary: str = "truncated") -> DiffusionSpec:
    return DiffusionSpec((lo, hi), grid_size, 1.0, 0.0, boundary, "uniform", "heat")


def laguerre_spec(alpha: float = 1.0, grid_size: int = 400, lo: float = 0.01,
                  hi: float = 100.0) -> DiffusionSpec:
    """Laguerre ``Lf = x f'' + (alpha + 1 - x) f'`` on a grid geometric near 0."""
    if not alpha > -1:
        raise ValueError("Laguerre parameter must exceed -1")
    spec = DiffusionSpec((lo, hi), grid_size, lambda x: np.asarray(x, dtype=float),
                         lambda x: alpha + 1 - np.asarray(x, dtype=float),
                         "reflecting", "geometric", "laguerre")
    object.__setattr__(spec, "a_source", "x")
    object.__setattr__(spec, "b_source", f"{alpha + 1!r} - x")
    return spec


def ou_apply_exact(f: Callable, t: float, x, quad_order: int = 60):
    """Mehler formula ``E f(e^{-t} x + sqrt(1 - e^{-2t}) Z)``, ``Z ~ N(0, 1)``,
    by Gauss-Hermite quadrature."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    z, w = hermegauss(quad_order)
    w = w / math.sqrt(2 * math.pi)
    x = np.asarray(x, dtype=float)
    pts = math.exp(-t) * x[..., None] + math.sqrt(-math.expm1(-2 * t)) * z
    return np.asarray(f(pts), dtype=float) @ w


def heat_apply_exact(f: Callable, t: float, x, quad_order: int = 60):
    """``E f(x + sqrt(2t) Z)`` for ``L = d^2/dx^2``."""
    z, w = hermegauss(quad_order)
    w = w / math.sqrt(2 * math.pi)
    x = np.asarray(x, dtype=float)
    return np.asarray(f(x[..., None] + math.sqrt(2 * t) * z), dtype=float) @ w


@dataclass(frozen=True, eq=False)
class ModelSemigroup:
    kind: str
    parameters: dict
    spec: DiffusionSpec
    exact_evaluator: Callable | None
    curvature: float


def model(kind: str, grid_size: int = 400, **params) -> ModelSemigroup:
    """OU, Laguerre or heat model with its known curvature constant."""
    kind = kind.lower()
    if kind in ("ou", "ornstein-uhlenbeck"):
        return ModelSemigroup("OU", params, ou_spec(grid_size, **params), ou_apply_exact, 1.0)
    if kind == "laguerre":
        params.setdefault("alpha", 1.0)
        return ModelSemigroup("Laguerre", params, laguerre_spec(grid_size=grid_size, **params), None, 0.5)
    if kind == "heat":
        return ModelSemigroup("Heat", params, heat_spec(grid_size, **params), heat_apply_exact, 0.0)
    raise ValueError(f"unknown model {kind!r}")


# curvature on a test family --------------------------------------------------

def smooth_test_family(grid: np.ndarray, n_bumps: int = 50, max_degree: int = 6,
                       seed: int = 0) -> list[np.ndarray]:
    """Hermite polynomials (degree 1..max_degree) times a smooth cutoff, plus
    seeded Gaussian bumps of random centre and width."""
    lo, hi = float(grid[0]), float(grid[-1])
    centre, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    s = (grid - centre) / half
    inside = np.abs(s) < 1
    cutoff = np.zeros_like(grid)
    cutoff[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    z = 3.0 * s
    family = [hermeval(z, [0.0] * k + [1.0]) * cutoff for k in range(1, max_degree + 1)]
    rng = np.random.default_rng(seed)
    h_mean = (hi - lo) / (len(grid) - 1)
    for _ in range(n_bumps):
        c = rng.uniform(lo, hi)
        w = rng.uniform(5 * h_mean, (hi - lo) / 4)
        family.append(np.exp(-0.5 * ((grid - c) / w) ** 2))
    return family


@dataclass
class Curvature1D:
    rho: float
    location: float
    analytic_rho: float | None
    per_function: list = field(default_factory=list)

    def __float__(self):
        return float(self.rho)

    def to_dict(self):
        return {"rho": self.rho, "location": self.location, "analytic_rho": self.analytic_rho}


def curvature_1d(spec: DiffusionSpec, test_functions: Sequence | None = None,
                 gamma_floor: float = 1e-3, margin: int = 2, seed: int = 0) -> Curvature1D:
    """Largest rho with ``Gamma2(f) >= rho Gamma(f)`` at interior nodes over a test family.

    Nodes where ``Gamma(f)`` falls below ``gamma_floor`` times its maximum
    are skipped for that ``f``: there the ratio is dominated by
    discretization error. ``margin`` boundary nodes are excluded on each
    side. For ``a == 1`` the analytic value ``inf(-b')`` is reported too.
    """
    disc = spec.discretize() if not isinstance(spec, Discretization) else spec
    spec = disc.spec
    x = disc.grid
    Q = disc.generator.rates
    fams = test_functions if test_functions is not None else smooth_test_family(x, seed=seed)
    inner = slice(margin, len(x) - margin)
    best, where, per_function = math.inf, math.nan, []
    for f in fams:
        f = np.asarray(f(x) if callable(f) else f, dtype=float)
        G = gamma(Q, f)[inner]
        G2 = gamma2(Q, f)[inner]
        ok = G > gamma_floor * G.max(initial=0.0)
        if not np.any(ok):
            per_function.append(None)
            continue
        ratios = np.where(ok, G2 / np.where(ok, G, 1.0), np.inf)
        k = int(np.argmin(ratios))
        per_function.append(float(ratios[k]))
        if ratios[k] < best:
            best, where = float(ratios[k]), float(x[inner][k])
    analytic = None
    a = np.asarray(spec.a(x), dtype=float) * np.ones_like(x)
    if np.allclose(a, 1.0):
        b = np.asarray(spec.b(x), dtype=float) * np.ones_like(x)
        analytic = float(np.min(-np.gradient(b, x)[inner]))
    return Curvature1D(best, where, analytic, per_function)


def gradient_identity_check(spec: DiffusionSpec, f: Callable, df: Callable, d2f: Callable,
                            margin: int = 2, tol: float = 1e-12) -> CheckReport:
    """Compare discrete ``Gamma, Gamma2`` with ``(f')^2, (f'')^2`` for ``a = 1, b = 0``.

    Passes when the interior sup error is below ``tol`` or shrinks by a factor
    in [3.5, 4.5] when the grid step halves.
    """
    errors = {}
    for size in (spec.grid_size, 2 * spec.grid_size - 1):
        disc = spec.refined(size).discretize()
        x, Q = disc.grid, disc.generator.rates
        fx = np.asarray(f(x), dtype=float) * np.ones_like(x)
        inner = slice(margin, len(x) - margin)
        e1 = np.abs(gamma(Q, fx) - np.asarray(df(x)) ** 2)[inner].max()
        e2 = np.abs(gamma2(Q, fx) - np.asarray(d2f(x)) ** 2)[inner].max()
        errors[size] = (float(e1), float(e2))
    coarse, fine = errors.values()
    ratios, ok = [], True
    for ec, ef in zip(coarse, fine):
        if ec < tol and ef < tol:
            ratios.append(None)
            continue
        r = ec / ef if ef > 0 else math.inf
        ratios.append(r)
        ok &= 3.5 <= r <= 4.5
    return CheckReport("gradient_identity", bool(ok), max(fine), tol,
                       {"errors": {str(k): v for k, v in errors.items()},
                        "refinement_ratios": ratios})


def mehler_vs_discrete(f: Callable, t: float, spec: DiffusionSpec | None = None,
                       tol: float = 1e-3, inner: float = 4.0, quad_order: int = 60) -> CheckReport:
    """Mehler quadrature against ``transition_matrix(discretized OU) f`` on ``|x| <= inner``."""
    spec = spec or ou_spec()
    disc = spec.discretize()
    x = disc.grid
    discrete = apply(transition_matrix(disc.generator, t), np.asarray(f(x), dtype=float))
    exact = ou_apply_exact(f, t, x, quad_order)
    mask = np.abs(x) <= inner
    dev = float(np.max(np.abs(discrete - exact)[mask]))
    return CheckReport("mehler_vs_discrete", dev < tol, dev, tol,
                       {"t": t, "grid_size": spec.grid_size, "inner": inner})


def gaussian_weights(grid: np.ndarray, variance: float = 1.0) -> np.ndarray:
    w = np.exp(-0.5 * grid**2 / variance)
    return w / w.sum()


def shared_invariant_demo(grid_size: int = 400, seed: int = 0) -> dict:
    """OU with ``sigma = sqrt(2)`` and Brownian motion in ``V(x) = x^2/2``.

    Both normalize to ``a = 1, b = -x``, so their grid generators, invariant
    measures and curvatures coincide.
    """
    ou = ou_spec(grid_size, theta=1.0, sigma=math.sqrt(2.0)).discretize()
    lv = langevin_spec(lambda x: x, grid_size).discretize()
    gen_diff = float(np.max(np.abs(ou.generator.rates - lv.generator.rates)))
    mu_diff = float(np.max(np.abs(ou.measure.weights - lv.measure.weights)))
    gauss = gaussian_weights(ou.grid)
    gauss_dev = float(np.max(np.abs(ou.measure.weights - gauss)) / gauss.max())
    rho_ou = curvature_1d(ou, seed=seed).rho
    rho_lv = curvature_1d(lv, seed=seed).rho
    checks = {
        "generator_sup_difference": gen_diff,
        "measure_sup_difference": mu_diff,
        "gaussian_relative_sup_error": gauss_dev,
        "curvature_ou": rho_ou,
        "curvature_langevin": rho_lv,
    }
    passed = gen_diff < 1e-12 and mu_diff < 1e-10 and gauss_dev < 1e-3 \
        and abs(rho_ou - 1) <= 1e-2 and abs(rho_lv - 1) <= 1e-2
    return {"name": "shared_invariant", "pass": bool(passed), **checks}
