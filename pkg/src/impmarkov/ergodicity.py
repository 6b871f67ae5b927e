"""Long-time behaviour of finite reversible chains and of ordered families.

The gradient bound, the local Poincare inequality and the Poincare
inequality are evaluated pointwise with the slack ``RHS - LHS`` reported;
ergodic limits are observed on a geometric time grid in the sup norm.
States of zero invariant mass are left out of every pass/fail decision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingExtremes, NoConvergence, NotReversible
from .gamma import dirichlet_form, gamma
from .poset import ImpreciseFamily, imsg_certify, order_report
from .semigroup import (
    _as_generator,
    _as_vector,
    apply,
    transition_matrix,
    values_of,
)

SYMMETRY_TOL = 1e-10
NOISE_FLOOR = 1e-10
RATE_AGREEMENT = 0.05


def _jsonable(v):
    v = float(v)
    if math.isnan(v):
        return None
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


@dataclass
class InequalityReport:
    name: str
    worst_slack: float
    passed: bool
    witness: dict | None
    tol: float
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {"name": self.name, "worst_slack": _jsonable(self.worst_slack),
                "pass": bool(self.passed), "witness": self.witness, "tol": self.tol,
                "details": self.details}


@dataclass
class ConvergenceReport:
    times: np.ndarray
    sup_errors: np.ndarray
    rate_estimate: float
    limit_value: float
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {"times": [float(t) for t in self.times],
                "sup_errors": [float(e) for e in self.sup_errors],
                "rate_estimate": _jsonable(self.rate_estimate),
                "limit_value": float(self.limit_value),
                "pass": bool(self.passed), "details": self.details}


def variance(mu, f) -> float:
    w = values_of(mu)
    f = _as_vector(f, w.size)
    m = float(w @ f)
    return max(0.0, float(w @ (f - m) ** 2))


def _support(mu, n):
    if mu is None:
        return np.ones(n, dtype=bool)
    return values_of(mu) > 0


def symmetrized(L, mu) -> np.ndarray:
    """``D^{1/2} L D^{-1/2}`` on the support of ``mu``; symmetric iff reversible."""
    Q = _as_generator(L).rates
    w = values_of(mu)
    keep = w > 0
    s = np.sqrt(w[keep])
    S = s[:, None] * Q[np.ix_(keep, keep)] / s[None, :]
    residual = float(np.max(np.abs(S - S.T), initial=0.0))
    if residual > SYMMETRY_TOL * max(1.0, float(np.max(np.abs(Q)))):
        raise NotReversible(f"symmetrization residual {residual:.3e}")
    return 0.5 * (S + S.T)


def spectral_gap(L, mu) -> float:
    """Second smallest eigenvalue of ``-L`` in ``L^2(mu)``.

    Zero for a disconnected chain; ``inf`` on a single state, where every
    Poincare constant works.
    """
    S = symmetrized(L, mu)
    if S.shape[0] < 2:
        return math.inf
    vals = np.sort(np.linalg.eigvalsh(-S))
    return max(0.0, float(vals[1]))


def gap_eigenfunction(L, mu) -> np.ndarray:
    """Eigenfunction of ``-L`` for the spectral gap, normalized in ``L^2(mu)``."""
    S = symmetrized(L, mu)
    w = values_of(mu)
    keep = w > 0
    vals, vecs = np.linalg.eigh(-S)
    f = np.zeros(w.size)
    f[keep] = vecs[:, 1] / np.sqrt(w[keep])
    return f


def _worst(slack, times, support):
    """Minimum slack over (time, state in support) and where it occurs."""
    masked = np.where(support[None, :], slack, np.inf)
    k, x = np.unravel_index(int(np.argmin(masked)), masked.shape)
    return float(masked[k, x]), {"t": float(times[k]), "state": int(x)}


def _scaled(factor, v):
    # factor may be huge or infinite for negative rho; 0 * inf is taken as 0
    with np.errstate(over="ignore", invalid="ignore"):
        return np.where(v == 0, 0.0, factor * v)


def _decay(rho, t):
    """``exp(-2 rho t)``, infinite rather than overflowing for very negative rho."""
    if t == 0:
        return 1.0
    with np.errstate(over="ignore"):
        return float(np.exp(-2.0 * rho * t))


def check_gradient_bound(L, mu, rho: float, f, t_grid, tol: float = 1e-8) -> InequalityReport:
    """``Gamma(P_t f) <= exp(-2 rho t) P_t Gamma(f)`` pointwise."""
    L = _as_generator(L)
    f = _as_vector(f, L.size)
    times = np.asarray(list(t_grid), dtype=float)
    g = gamma(L, f)
    slack = np.empty((times.size, L.size))
    for k, t in enumerate(times):
        P = transition_matrix(L, t)
        lhs = gamma(L, apply(P, f))
        slack[k] = _scaled(_decay(rho, t), apply(P, g)) - lhs
    worst, where = _worst(slack, times, _support(mu, L.size))
    return InequalityReport("gradient_bound", worst, worst >= -tol, where, tol, {"rho": _jsonable(rho)})


def local_poincare_coefficient(rho: float, t: float) -> float:
    """``(1 - exp(-2 rho t)) / rho`` with its limit ``2 t`` at ``rho = 0``."""
    if rho == 0:
        return 2.0 * t
    if rho == -math.inf:
        return math.inf if t > 0 else 0.0
    return -math.expm1(-2.0 * rho * t) / rho


def check_local_poincare(L, rho: float, f, t_grid, tol: float = 1e-8, mu=None) -> InequalityReport:
    """``P_t(f^2) - (P_t f)^2 <= c(t) P_t Gamma(f)`` with ``c`` as above."""
    L = _as_generator(L)
    f = _as_vector(f, L.size)
    times = np.asarray(list(t_grid), dtype=float)
    g = gamma(L, f)
    slack = np.empty((times.size, L.size))
    for k, t in enumerate(times):
        P = transition_matrix(L, t)
        Pf = apply(P, f)
        lhs = apply(P, f * f) - Pf * Pf
        slack[k] = _scaled(local_poincare_coefficient(rho, t), apply(P, g)) - lhs
    worst, where = _worst(slack, times, _support(mu, L.size))
    return InequalityReport("local_poincare", worst, worst >= -tol, where, tol, {"rho": _jsonable(rho)})


def check_poincare(L, mu, rho: float, f, tol: float = 1e-8) -> InequalityReport:
    """``Var_mu(f) <= E(f) / rho``; needs ``rho > 0``."""
    if not rho > 0:
        raise ValueError("the Poincare inequality needs rho > 0")
    L = _as_generator(L)
    f = _as_vector(f, L.size)
    var = variance(mu, f)
    energy = dirichlet_form(L, mu, f)
    slack = energy / rho - var
    return InequalityReport("poincare", slack, slack >= -tol, None, tol,
                            {"rho": _jsonable(rho), "variance": var, "dirichlet": energy})


def check_variance_dirichlet(L, mu, f, tol: float = 1e-8) -> InequalityReport:
    """Integration by parts ``sum mu Gamma(f) = -sum mu f Lf``; slack is minus the gap."""
    L = _as_generator(L)
    f = _as_vector(f, L.size)
    w = values_of(mu)
    lhs = float(w @ gamma(L, f))
    rhs = -float(w @ (f * (L @ f)))
    slack = -abs(lhs - rhs)
    return InequalityReport("variance_dirichlet", slack, slack >= -tol, None, tol,
                            {"gamma_integral": lhs, "minus_f_Lf": rhs})


def ergodic_time_grid(t_max: float, points: int = 240) -> np.ndarray:
    return np.geomspace(min(1e-3, t_max / 10), t_max, points)


FIT_DECADES = 3
FIT_POINTS = 40


def _fit_rate(times, errors, floor, sup_error):
    """Decay rate from a log-linear fit over the last ``FIT_DECADES`` decades
    of error above ``floor``.

    That window is located on the coarse grid and resampled on
    ``FIT_POINTS`` evenly spaced times through ``sup_error(t)``: it is the
    latest stretch where the error is still resolved, so faster modes have
    died out as far as the arithmetic allows.
    """
    above = np.nonzero(errors > floor)[0]
    if above.size < 2:
        return math.nan, 0, None
    t_hi = times[above[-1]]
    high = np.nonzero(errors >= floor * 10.0**FIT_DECADES)[0]
    t_lo = times[high[-1]] if high.size else times[0]
    if not t_hi > t_lo:
        return math.nan, 0, None
    fit_times = np.linspace(t_lo, t_hi, FIT_POINTS)
    fit_errors = np.array([sup_error(t) for t in fit_times])
    keep = fit_errors > floor
    if keep.sum() < 3:
        return math.nan, int(keep.sum()), None
    slope = np.polyfit(fit_times[keep], np.log(fit_errors[keep]), 1)[0]
    return max(0.0, -float(slope)), int(keep.sum()), [float(t_lo), float(t_hi)]


def check_ergodic_limit(L, mu, f, tol: float = 1e-8, t_max: float | None = None) -> ConvergenceReport:
    """Sup-norm distance between ``P_t f`` and ``mu(f)`` up to ``t_max``.

    ``t_max`` defaults to ``max(50 / gap, 50)``. A final error above ``tol``
    whose last decade shows no decay raises NoConvergence carrying the
    report; the limit profile ``P_{t_max} f`` is kept in the details.
    """
    L = _as_generator(L)
    f = _as_vector(f, L.size)
    w = values_of(mu)
    support = w > 0
    try:
        gap = spectral_gap(L, mu)
    except NotReversible:
        gap = math.nan
    if t_max is None:
        t_max = max(50.0 / gap, 50.0) if gap > 0 else 50.0
    times = ergodic_time_grid(t_max)
    limit = float(w @ f)

    def sup_error(t):
        return float(np.max(np.abs(apply(transition_matrix(L, t), f) - limit)[support], initial=0.0))

    errors = np.array([sup_error(t) for t in times])
    profile = apply(transition_matrix(L, times[-1]), f)
    floor = NOISE_FLOOR * max(1.0, float(np.max(np.abs(f))))
    rate, n_fit, window = _fit_rate(times, errors, floor, sup_error)
    passed = bool(errors[-1] < tol)
    details = {
        "t_max": float(t_max),
        "spectral_gap": _jsonable(gap),
        "fit_points": n_fit,
        "fit_window": window,
        "rate_matches_gap": bool(math.isfinite(rate) and gap > 0 and abs(rate - gap) <= RATE_AGREEMENT * gap),
        "final_profile": [float(v) for v in profile],
    }
    report = ConvergenceReport(times, errors, rate, limit, passed, details)
    if not passed:
        decade = errors[times >= t_max / 10]
        if decade[-1] > 0.5 * decade[0]:
            raise NoConvergence(f"sup error plateaus at {errors[-1]:.3e} > tol={tol:g}", report)
    return report


def check_sandwich(family: ImpreciseFamily, tol: float = 1e-8) -> dict:
    """Members' ergodic limits against the invariant means of the extremes.

    Each limit must lie in ``[mu_low(f) - tol, mu_high(f) + tol]`` where
    ``mu_low`` and ``mu_high`` belong to the least and greatest members. When
    the two measures coincide every limit must equal their common mean.
    """
    cert = imsg_certify(family)
    report = order_report(family)
    if report.least is None or report.greatest is None:
        raise MissingExtremes("family has no least or greatest member; "
                              f"minimal/maximal witness: {cert.get('witness')}")
    f = family.f_tilde.values
    mu_low, mu_high = family.measure(report.least), family.measure(report.greatest)
    lower, upper = mu_low.expect(f), mu_high.expect(f)
    same_measure = bool(np.max(np.abs(mu_low.weights - mu_high.weights)) <= tol)

    members = {}
    ok = True
    for name in family.names:
        L, mu = family.members[name]
        conv = check_ergodic_limit(L, mu, f, tol)
        final = np.asarray(conv.details["final_profile"])[mu.weights > 0]
        lo_ok = bool(final.min() >= lower - tol)
        hi_ok = bool(final.max() <= upper + tol)
        eq_ok = (not same_measure) or bool(np.max(np.abs(final - lower)) <= tol)
        passed = conv.passed and lo_ok and hi_ok and eq_ok
        ok &= passed
        members[name] = {
            "limit": conv.limit_value,
            "final_min": float(final.min()),
            "final_max": float(final.max()),
            "sup_error": float(conv.sup_errors[-1]),
            "rate_estimate": _jsonable(conv.rate_estimate),
            "spectral_gap": conv.details["spectral_gap"],
            "lower_ergodic": lo_ok,
            "upper_ergodic": hi_ok,
            "pass": passed,
        }

    acts = family.actions
    lo_idx, hi_idx = family.index(report.least), family.index(report.greatest)
    eps = family.eps_order
    monotone = bool(np.all(acts >= acts[lo_idx] - eps) and np.all(acts <= acts[hi_idx] + eps))
    return {
        "pass": bool(ok and monotone and cert["positive"]),
        "least": report.least,
        "greatest": report.greatest,
        "lower_bound": lower,
        "upper_bound": upper,
        "same_invariant_measure": same_measure,
        "monotone_on_grid": monotone,
        "certificate": cert,
        "members": members,
        "tol": tol,
        "hypotheses": "connexity and self-adjointness hold by construction for finite reversible members",
    }


def proof_chain(L, mu, rho: float, f, t_grid, tol: float = 1e-8) -> list:
    """Gradient bound, local Poincare, integration by parts and (if rho > 0) Poincare."""
    out = [check_gradient_bound(L, mu, rho, f, t_grid, tol),
           check_local_poincare(L, rho, f, t_grid, tol, mu=mu),
           check_variance_dirichlet(L, mu, f, tol)]
    if rho > 0:
        out.append(check_poincare(L, mu, rho, f, tol))
    return out

