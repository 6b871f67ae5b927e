"""Carré du champ, iterated carré du champ and Bakry-Émery curvature for rate matrices.

For a generator ``L`` on a finite set,

    Gamma(f, g)(x)  = 1/2 [L(fg) - f Lg - g Lf](x)
                    = 1/2 sum_y L(x, y) (f(y) - f(x)) (g(y) - g(x))
    Gamma2(f)(x)    = 1/2 [L Gamma(f) - 2 Gamma(f, Lf)](x)

Both are quadratic in ``f`` at every state, so curvature reduces to a
generalized symmetric eigenproblem per state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionMismatch, IntegrationByPartsViolation
from .semigroup import (
    DEFAULT_TOL,
    GeneratorMatrix,
    ProbabilityMeasure,
    StateSpace,
    rates_of,
    values_of,
)

KERNEL_CUTOFF = 1e-10


def _pair(L, f, g=None):
    Q = rates_of(L)
    n = Q.shape[0]
    f = values_of(f)
    g = f if g is None else values_of(g)
    if f.shape != (n,) or g.shape != (n,):
        raise DimensionMismatch(f"functionals of shape {f.shape}, {g.shape} on {n} states")
    return Q, f, g


def gamma(L, f, g=None) -> np.ndarray:
    """Carré du champ ``Gamma(f, g)``; ``g`` defaults to ``f``.

    Evaluated through the edge sum, which is nonnegative term by term when
    ``f == g``.
    """
    Q, f, g = _pair(L, f, g)
    df = f[None, :] - f[:, None]
    dg = df if g is f else g[None, :] - g[:, None]
    off = Q - np.diag(np.diag(Q))
    return 0.5 * np.sum(off * df * dg, axis=1)


def gamma_definition(L, f, g=None) -> np.ndarray:
    """``1/2 [L(fg) - f Lg - g Lf]`` evaluated literally (cross-check route)."""
    Q, f, g = _pair(L, f, g)
    return 0.5 * (Q @ (f * g) - f * (Q @ g) - g * (Q @ f))


def gamma2(L, f, g=None) -> np.ndarray:
    """Iterated carré du champ ``1/2 [L Gamma(f, g) - Gamma(f, Lg) - Gamma(Lf, g)]``."""
    Q, f, g = _pair(L, f, g)
    return 0.5 * (Q @ gamma(Q, f, g) - gamma(Q, f, Q @ g) - gamma(Q, Q @ f, g))


@dataclass(frozen=True, eq=False)
class QuadraticFormAtState:
    """``f -> f^T matrix f`` evaluated at one state."""

    state: int
    matrix: np.ndarray

    def __call__(self, f) -> float:
        f = values_of(f)
        return float(f @ self.matrix @ f)


def _gamma_form(Q: np.ndarray, x: int) -> np.ndarray:
    # A_x = 1/2 sum_y L(x,y) (e_y - e_x)(e_y - e_x)^T
    n = Q.shape[0]
    row = Q[x].copy()
    row[x] = 0.0
    A = np.diag(0.5 * row)
    A[x, :] -= 0.5 * row
    A[:, x] -= 0.5 * row
    A[x, x] = 0.5 * row.sum()
    return A


def _forms(Q: np.ndarray, x: int):
    """``A_x, B_x, C_x`` on the full index set of ``Q``.

    Only rows of ``x`` and its out-neighbours are read, so ``Q`` may be the
    restriction of a larger generator to the two-step neighbourhood of ``x``.
    """
    n = Q.shape[0]
    A = _gamma_form(Q, x)
    # Gamma2(f)(x) = 1/2 sum_z L(x,z) Gamma(f)(z) - Gamma(f, Lf)(x)
    B = np.zeros((n, n))
    for z in np.nonzero(Q[x])[0]:
        if z != x:
            B += 0.5 * Q[x, z] * (_gamma_form(Q, z) - A)
    AL = A @ Q
    B -= 0.5 * (AL + AL.T)
    C = np.outer(Q[x], Q[x])
    return A, B, C


def _neighbourhood(Q: np.ndarray, x: int) -> np.ndarray:
    one = np.nonzero(Q[x])[0]
    two = np.nonzero(np.any(Q[one] != 0, axis=0))[0]
    return np.union1d(np.union1d(one, two), [x])


def quadratic_forms_at(L, x: int):
    """Matrices ``A_x, B_x, C_x`` with ``f^T A_x f = Gamma(f)(x)``,
    ``f^T B_x f = Gamma2(f)(x)`` and ``f^T C_x f = (Lf)(x)^2``."""
    Q = rates_of(L)
    A, B, C = _forms(Q, x)
    return (QuadraticFormAtState(x, A), QuadraticFormAtState(x, 0.5 * (B + B.T)),
            QuadraticFormAtState(x, C))


@dataclass
class CurvatureReport:
    per_state_rho: np.ndarray
    global_rho: float
    dimension_n: float
    witness: np.ndarray | None
    argmin_state: int | None
    degenerate_states: list = field(default_factory=list)

    def to_dict(self):
        return {
            "per_state": [_jsonable_float(r) for r in self.per_state_rho],
            "global_rho": _jsonable_float(self.global_rho),
            "n": _jsonable_float(self.dimension_n),
            "witness": None if self.witness is None else [float(v) for v in self.witness],
            "argmin_state": self.argmin_state,
            "degenerate_states": list(self.degenerate_states),
        }


def _jsonable_float(v):
    v = float(v)
    if math.isnan(v):
        return None
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _local_curvature(A: np.ndarray, B: np.ndarray, cutoff: float = KERNEL_CUTOFF):
    """Largest rho with ``B - rho A`` positive semidefinite, plus a minimizer.

    ``A`` is split into its range R (eigenvalues above cutoff) and kernel K.
    Kernel directions of ``f`` are free in the Rayleigh quotient, so they are
    eliminated through the Schur complement ``B_RR - B_RK B_KK^+ B_KR``.
    Returns ``(None, None)`` when ``A`` vanishes (degenerate state) and
    ``(-inf, f)`` when B is indefinite on the kernel.
    """
    B = 0.5 * (B + B.T)
    lam, V = np.linalg.eigh(A)
    scale = max(1.0, float(np.max(np.abs(lam), initial=0.0)))
    keep = lam > cutoff * scale
    if not np.any(keep):
        return None, None
    R, K = V[:, keep], V[:, ~keep]
    lam_r = lam[keep]
    Brr = R.T @ B @ R
    bscale = max(1.0, float(np.max(np.abs(B))))
    if K.shape[1]:
        Bkk = K.T @ B @ K
        Bkr = K.T @ B @ R
        mu_k, W = np.linalg.eigh(Bkk)
        if mu_k[0] < -cutoff * bscale:
            return -math.inf, K @ W[:, 0]
        pos = mu_k > cutoff * bscale
        Wp = W[:, pos]
        pinv = (Wp / mu_k[pos]) @ Wp.T
        # Bkr must lie in range(Bkk), otherwise the quotient is unbounded below
        leak = Bkr - (Wp @ Wp.T) @ Bkr
        if np.max(np.abs(leak), initial=0.0) > 1e-8 * bscale:
            j = int(np.argmax(np.max(np.abs(leak), axis=0)))
            return -math.inf, R[:, j]
        S = Brr - Bkr.T @ pinv @ Bkr
    else:
        pinv = None
        S = Brr
    inv_sqrt = 1.0 / np.sqrt(lam_r)
    M = inv_sqrt[:, None] * S * inv_sqrt[None, :]
    M = 0.5 * (M + M.T)
    vals, vecs = np.linalg.eigh(M)
    u = inv_sqrt * vecs[:, 0]
    f = R @ u
    if pinv is not None:
        f = f - K @ (pinv @ (Bkr @ u))
    return float(vals[0]), f


def curvature(L, n: float = math.inf) -> CurvatureReport:
    """Per-state and global optimal ``rho`` in ``Gamma2 >= rho Gamma + (Lf)^2 / n``.

    ``per_state_rho`` is NaN at degenerate states (where Gamma vanishes for
    every f) and ``-inf`` where no rho works. ``global_rho`` is the minimum
    over non-degenerate states, NaN if every state is degenerate.
    """
    if not n >= 1:
        raise ValueError("dimension n must lie in [1, inf]")
    Q = rates_of(L)
    size = Q.shape[0]
    rho = np.full(size, np.nan)
    witnesses = {}
    degenerate = []
    for x in range(size):
        idx = _neighbourhood(Q, x)
        A, B, C = _forms(Q[np.ix_(idx, idx)], int(np.searchsorted(idx, x)))
        if not math.isinf(n):
            B = B - C / n
        r, f_local = _local_curvature(A, B)
        if r is None:
            degenerate.append(x)
            continue
        rho[x] = r
        witnesses[x] = np.zeros(size)
        witnesses[x][idx] = f_local
    if not witnesses:
        return CurvatureReport(rho, math.nan, float(n), None, None, degenerate)
    x_star = min(witnesses, key=lambda x: rho[x])
    return CurvatureReport(rho, float(rho[x_star]), float(n), witnesses[x_star], x_star, degenerate)


def curvature_defect(L, rho: float, n: float, f) -> np.ndarray:
    """Pointwise ``Gamma2(f) - rho Gamma(f) - (Lf)^2 / n``."""
    Q, f, _ = _pair(L, f)
    out = gamma2(Q, f) - rho * gamma(Q, f)
    if not math.isinf(n):
        out = out - (Q @ f) ** 2 / n
    return out


def cd_check(L, rho: float, n: float = math.inf, test_set: Sequence | None = None,
             tol: float = DEFAULT_TOL) -> dict:
    """Evaluate CD(rho, n) on ``test_set`` (default: indicator basis)."""
    Q = rates_of(L)
    size = Q.shape[0]
    if test_set is None:
        test_set = list(np.eye(size))
    worst = math.inf
    where = None
    for k, f in enumerate(test_set):
        d = curvature_defect(Q, rho, n, f)
        x = int(np.argmin(d))
        if d[x] < worst:
            worst, where = float(d[x]), {"function": k, "state": x}
    return {"name": "cd_check", "rho": rho, "n": _jsonable_float(n),
            "pass": bool(worst >= -tol), "worst_violation": worst, "where": where, "tol": tol}


def _find(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


def connected_components(L) -> list[list[int]]:
    """Components of the undirected support graph ``{x ~ y : L(x,y) > 0}``."""
    Q = rates_of(L)
    n = Q.shape[0]
    parent = list(range(n))
    for x, y in zip(*np.nonzero(Q > 0)):
        if x != y:
            rx, ry = _find(parent, int(x)), _find(parent, int(y))
            if rx != ry:
                parent[max(rx, ry)] = min(rx, ry)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(_find(parent, i), []).append(i)
    return [groups[k] for k in sorted(groups)]


def connexity_check(L):
    """``(True, "connected")`` when Gamma(f) = 0 forces f constant, else
    ``(False, f)`` with ``f`` the indicator of the component holding state 0."""
    Q = rates_of(L)
    comps = connected_components(Q)
    if len(comps) == 1:
        return True, "connected"
    f = np.zeros(Q.shape[0])
    f[comps[0]] = 1.0
    return False, f


def dirichlet_form(L, mu, f, g=None, tol: float = DEFAULT_TOL) -> float:
    """``sum_x mu(x) Gamma(f, g)(x)``, checked against ``-sum_x mu(x) f(x) (Lg)(x)``.

    The two agree for reversible ``mu``; a mismatch raises
    IntegrationByPartsViolation.
    """
    Q, f, g = _pair(L, f, g)
    w = values_of(mu)
    energy = float(w @ gamma(Q, f, g))
    by_parts = float(-(w @ (f * (Q @ g))))
    scale = max(1.0, abs(energy))
    if abs(energy - by_parts) > tol * scale:
        raise IntegrationByPartsViolation(
            f"Gamma route {energy!r} vs integration by parts {by_parts!r}")
    return energy


def _finite_difference_gate(psi, dpsi, d2psi, probes=(-1.3, -0.4, 0.2, 0.9, 1.7), rtol=1e-6):
    for u in probes:
        h1 = 1e-5 * max(1.0, abs(u))
        h2 = 1e-3 * max(1.0, abs(u))
        d1 = (psi(u + h1) - psi(u - h1)) / (2 * h1)
        d2 = (psi(u + h2) - 2 * psi(u) + psi(u - h2)) / h2**2
        for approx, exact in ((d1, dpsi(u)), (d2, d2psi(u))):
            if abs(approx - exact) > rtol * max(1.0, abs(exact)):
                raise ValueError(f"derivatives of psi inconsistent at u={u}: {approx!r} vs {exact!r}")


def diffusion_property_residual(L, psi: Callable, dpsi: Callable, d2psi: Callable, f) -> np.ndarray:
    """``L psi(f) - psi'(f) Lf - psi''(f) Gamma(f)`` pointwise.

    Vanishes up to discretization error for discretized diffusions and is
    generically nonzero for jump chains. ``L`` may also be a DiffusionSpec,
    which is discretized first.
    """
    if hasattr(L, "discretize"):
        L = L.discretize().generator
    Q, f, _ = _pair(L, f)
    _finite_difference_gate(psi, dpsi, d2psi)
    pf = np.vectorize(psi, otypes=[float])(f)
    return Q @ pf - np.vectorize(dpsi, otypes=[float])(f) * (Q @ f) \
        - np.vectorize(d2psi, otypes=[float])(f) * gamma(Q, f)


__all__ = [
    "gamma", "gamma_definition", "gamma2", "QuadraticFormAtState", "quadratic_forms_at",
    "CurvatureReport", "curvature", "curvature_defect", "cd_check", "connected_components",
    "connexity_check", "dirichlet_form", "diffusion_property_residual",
]
