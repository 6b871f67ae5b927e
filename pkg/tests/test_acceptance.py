"""Acceptance gate: criteria 1 to 7, one PASS/FAIL line each."""

import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from impmarkov.corpus import (
    diamond_relation,
    random_reversible,
    random_two_state_family,
    reversible_corpus,
    shared_measure_pair,
    three_chain_family,
    two_state,
    two_state_measure,
)
from impmarkov.diffusion import curvature_1d, heat_spec, laguerre_spec, ou_spec, shared_invariant_demo
from impmarkov.ergodicity import (
    check_gradient_bound,
    check_local_poincare,
    check_poincare,
    check_sandwich,
    gap_eigenfunction,
    spectral_gap,
    variance,
)
from impmarkov.gamma import curvature, dirichlet_form
from impmarkov.poset import BELOW, ImpreciseFamily, analyze_relation, brute_force_width, order_report, shared_measure_rigidity
from impmarkov.semigroup import transition_matrix

from oracles import expm_eig, rayleigh_curvature

pytestmark = pytest.mark.acceptance

ROOT = Path(__file__).resolve().parents[1]


def report(capsys, number, ok, elapsed, limit, detail):
    status = "PASS" if ok and elapsed < limit else "FAIL"
    with capsys.disabled():
        print(f"\ncriterion {number}: {status}  {detail}  [{elapsed:.2f} s, limit {limit:g} s]")
    assert ok, detail
    assert elapsed < limit, f"runtime {elapsed:.2f} s exceeds {limit} s"


def test_criterion_1_model_curvatures(capsys):
    cases = [("OU", ou_spec(400), 1.0, 1e-2), ("Laguerre", laguerre_spec(1.0, 400), 0.5, 2e-2),
             ("heat", heat_spec(400), 0.0, 1e-2)]
    ok, parts, slowest = True, [], 0.0
    for name, spec, expected, tol in cases:
        start = time.perf_counter()
        rho = curvature_1d(spec).rho
        slowest = max(slowest, time.perf_counter() - start)
        ok &= abs(rho - expected) <= tol
        parts.append(f"{name} rho={rho:.5f} (target {expected} +- {tol:g})")
    report(capsys, 1, ok, slowest, 10, "; ".join(parts))


def test_criterion_2_hasse_fixture(capsys):
    start = time.perf_counter()
    r = analyze_relation(*diamond_relation(4))
    elapsed = time.perf_counter() - start
    ok = r.width == 4 and r.least == "P1" and r.greatest == "P6"
    report(capsys, 2, ok, elapsed, 1, f"width={r.width} least={r.least} greatest={r.greatest}")


def test_criterion_3_sandwich(capsys):
    start = time.perf_counter()
    fam = three_chain_family()
    rep = order_report(fam)
    sw = check_sandwich(fam, tol=1e-8)
    elapsed = time.perf_counter() - start
    rel = rep.relation
    total = rel[0][1] == BELOW and rel[1][2] == BELOW and rel[0][2] == BELOW and rep.exactness == "exact"
    limits = [sw["members"][m]["final_max"] for m in ("A", "C", "B")]
    lows = [sw["members"][m]["final_min"] for m in ("A", "C", "B")]
    near = np.allclose(limits, [0.5, 2 / 3, 0.75], rtol=0, atol=1e-8) and np.allclose(lows, limits, atol=1e-8)
    bounds = (abs(sw["lower_bound"] - 0.5) < 1e-12 and abs(sw["upper_bound"] - 0.75) < 1e-12)
    inside = all(sw["lower_bound"] - 1e-8 <= v <= sw["upper_bound"] + 1e-8 for v in limits + lows)
    ok = total and near and bounds and inside and sw["pass"]
    detail = (f"order A<C<B exact={total}; limits={[round(v, 10) for v in limits]}; "
              f"interval=[{sw['lower_bound']}, {sw['upper_bound']}]")
    report(capsys, 3, ok, elapsed, 5, detail)


def test_criterion_4_proof_chain(capsys):
    start = time.perf_counter()
    corpus = reversible_corpus()
    t_grid = np.concatenate([[0.0], np.geomspace(1e-3, 10, 25)])
    rng = np.random.default_rng(2024)
    worst = {"gradient_bound": math.inf, "local_poincare": math.inf, "poincare": math.inf}
    failures = []
    for name, (L, mu) in corpus.items():
        rho = curvature(L).global_rho
        funcs = list(np.eye(L.size)) + list(rng.normal(size=(20, L.size)))
        for f in funcs:
            for rep in (check_gradient_bound(L, mu, rho, f, t_grid, tol=1e-8),
                        check_local_poincare(L, rho, f, t_grid, tol=1e-8, mu=mu),
                        check_poincare(L, mu, rho, f, tol=1e-8)):
                worst[rep.name] = min(worst[rep.name], rep.worst_slack)
                if not rep.passed:
                    failures.append((name, rep.name, rep.worst_slack))
    L, mu = two_state(1, 1), two_state_measure(1, 1)
    e = gap_eigenfunction(L, mu)
    e = e / abs(e[0]) * 0.5  # scale to the indicator's centred version, Var = 0.25
    gap = spectral_gap(L, mu)
    tight = check_poincare(L, mu, gap, e, tol=1e-8)
    var, energy = variance(mu, e), dirichlet_form(L, mu, e)
    elapsed = time.perf_counter() - start
    ok = (len(corpus) >= 20 and max(m.size for m, _ in corpus.values()) <= 6 and not failures
          and tight.passed and abs(tight.worst_slack) < 1e-8
          and abs(var - 0.25) < 1e-12 and abs(var - 0.5 * energy) < 1e-12)
    detail = (f"{len(corpus)} chains, worst slacks " + ", ".join(f"{k}={v:.2e}" for k, v in worst.items())
              + f"; failures={len(failures)}; unit chain Var={var:.6f} E/2={energy / 2:.6f} "
              f"slack={tight.worst_slack:.1e}")
    report(capsys, 4, ok, elapsed, 30, detail)


def test_criterion_5_oracles(capsys):
    start = time.perf_counter()
    # width via matching against brute force on 200 random families of at most 12 members
    width_bad = 0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        fam = random_two_state_family(int(rng.integers(1, 13)), rng)
        rep = order_report(fam)
        width_bad += rep.width != brute_force_width(rep.relation)
    # curvature against random-restart Rayleigh minimization on every corpus chain
    curv_dev = 0.0
    for name, (L, _) in reversible_corpus().items():
        curv_dev = max(curv_dev, float(np.max(np.abs(rayleigh_curvature(L.rates) - curvature(L).per_state_rho))))
    # uniformization against the spectral exponential on random reversible 5-state chains
    expm_dev = 0.0
    for seed in range(50):
        rng = np.random.default_rng(1000 + seed)
        L, mu = random_reversible(5, rng)
        for t in (0.01, 0.3, 1.0, 7.5):
            expm_dev = max(expm_dev, float(np.max(np.abs(transition_matrix(L, t).probs
                                                          - expm_eig(L.rates, mu.weights, t)))))
    elapsed = time.perf_counter() - start
    ok = width_bad == 0 and curv_dev < 1e-6 and expm_dev < 1e-9
    detail = (f"width mismatches {width_bad}/200; curvature vs Rayleigh max dev {curv_dev:.1e}; "
              f"uniformization vs eigendecomposition max dev {expm_dev:.1e}")
    report(capsys, 5, ok, elapsed, 60, detail)


def test_criterion_6_shared_invariant(capsys):
    start = time.perf_counter()
    demo = shared_invariant_demo(400)
    rng = np.random.default_rng(6)
    rigid = 0
    for _ in range(50):
        (L1, mu), (L2, _) = shared_measure_pair(int(rng.integers(2, 7)), rng)
        fam = ImpreciseFamily({"first": (L1, mu), "second": (L2, mu)}, rng.normal(size=L1.size))
        rigid += shared_measure_rigidity(fam)["pass"]
    elapsed = time.perf_counter() - start
    ok = (demo["generator_sup_difference"] < 1e-12 and demo["measure_sup_difference"] < 1e-10
          and demo["gaussian_relative_sup_error"] < 1e-3 and rigid == 50)
    detail = (f"generator diff {demo['generator_sup_difference']:.1e}, measure diff "
              f"{demo['measure_sup_difference']:.1e}, Gaussian rel err {demo['gaussian_relative_sup_error']:.1e}, "
              f"rigidity {rigid}/50")
    report(capsys, 6, ok, elapsed, 10, detail)


def test_criterion_7_property_suites(capsys):
    env = dict(os.environ, HYPOTHESIS_PROFILE="default")
    start = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", str(ROOT / "tests"), "-m", "not acceptance", "-q",
         "-p", "no:cacheprovider"],
        cwd=ROOT, env=env, capture_output=True, text=True)
    elapsed = time.perf_counter() - start
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    detail = f"500 derandomized cases per property, every module: {tail}"
    if proc.returncode != 0:
        with capsys.disabled():
            print(proc.stdout[-4000:])
    report(capsys, 7, proc.returncode == 0, elapsed, 300, detail)
