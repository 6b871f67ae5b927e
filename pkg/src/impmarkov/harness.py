"""Configuration-driven experiment runner.

A config lists inline fixtures and an ordered list of tasks. Each task
writes ``<id>.json`` and ``<id>.csv`` into the output directory; the run
adds ``summary.json`` (pass/fail counts) and ``metadata.json`` (timestamps
and environment, the only non-deterministic output).
"""

from __future__ import annotations

import csv
import json
import math
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .corpus import shared_measure_pair
from .diffusion import (
    curvature_1d,
    gradient_identity_check,
    heat_spec,
    mehler_vs_discrete,
    shared_invariant_demo,
)
from .ergodicity import (
    check_ergodic_limit,
    check_poincare,
    check_sandwich,
    gap_eigenfunction,
    proof_chain,
    spectral_gap,
)
from .errors import ConfigError, ImpMarkovError, NoConvergence, NotReversible, NotUniquelyErgodic
from .fixtures import FixtureSet, config_schema, load_all, pointer, time_grid, validate_fixture
from .gamma import cd_check, curvature
from .poset import ImpreciseFamily, analyze_relation, hasse_dot, order_report, shared_measure_rigidity
from .semigroup import (
    check_invariance,
    check_reversibility,
    check_semigroup_axioms,
    invariant_measure,
)

# fixture references per task type: field -> fixture kind
_REFERENCES = {
    "axioms": {"generator": "generator"},
    "curvature": {"generator": "generator", "diffusion": "diffusion"},
    "order": {"family": "family", "relation": "relation"},
    "ergodicity": {"generator": "generator"},
    "sandwich": {"family": "family"},
    "diffusion-bench": {},
}


@dataclass
class TaskResult:
    id: str
    type: str
    passed: bool
    payload: dict
    rows: list = field(default_factory=list)
    error: str | None = None
    extra_files: dict = field(default_factory=dict)
    seconds: float = 0.0


# config handling

def load_config(source) -> dict:
    """Parse and schema-check a config from a path or a dict."""
    if isinstance(source, dict):
        cfg = source
    else:
        try:
            cfg = json.loads(Path(source).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}", "/") from None
    validator = jsonschema.Draft202012Validator(config_schema())
    errors = sorted(validator.iter_errors(cfg), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        e = max(errors, key=lambda e: len(e.absolute_path))
        raise ConfigError(e.message, pointer(e.absolute_path))
    return cfg


def task_ids(tasks) -> list[str]:
    ids, seen = [], {}
    for task in tasks:
        base = task.get("id", task["type"])
        seen[base] = seen.get(base, 0) + 1
        ids.append(base if seen[base] == 1 else f"{base}_{seen[base]}")
    if len(set(ids)) != len(ids):
        raise ConfigError("task ids are not unique", "/tasks")
    return ids


def resolve_fixtures(cfg) -> FixtureSet:
    raw = load_all()
    for name, obj in cfg.get("fixtures", {}).items():
        validate_fixture(obj, f"/fixtures/{name}")
        raw[name] = obj
    fx = FixtureSet(raw)
    # every reference must exist before anything runs
    for k, task in enumerate(cfg["tasks"]):
        for key, kind in _REFERENCES[task["type"]].items():
            if key in task:
                fx.get(task[key], kind, f"/tasks/{k}/{key}")
        for j, ref in enumerate(task.get("functionals", [])):
            fx.get(ref, "functional", f"/tasks/{k}/functionals/{j}")
        for j, ref in enumerate(task.get("diffusions", [])):
            fx.get(ref, "diffusion", f"/tasks/{k}/diffusions/{j}")
    for name, obj in raw.items():
        if obj.get("kind") == "family":
            for j, ref in enumerate(obj["members"]):
                if ref not in raw:
                    raise ConfigError(f"family {name!r} references unknown fixture {ref!r}",
                                      f"/fixtures/{name}/members/{j}")
    return fx


# task implementations: each returns (passed, payload, rows, extra files)

def _axioms(task, fx, rng, where):
    L, mu = fx.generator(task["generator"], where)
    tg = time_grid(task.get("t_grid", [0.1, 0.5, 1.0, 2.0]))
    tol = task.get("tol", 1e-10)
    reports = [check_semigroup_axioms(L, tg, tol)]
    try:
        mu = mu if mu is not None else invariant_measure(L)
    except NotUniquelyErgodic as exc:
        mu = None
        measure_note = str(exc)
    else:
        measure_note = "unique"
    if mu is not None:
        for x in range(L.size):
            rep = check_invariance(L, mu, np.eye(L.size)[x], tg, tol)
            rep.name = f"invariance_e{x}"
            reports.append(rep)
        reports.append(check_reversibility(L, mu, tg, tol))
    required = [r for r in reports if r.name != "reversibility" or task.get("require_reversible", False)]
    passed = all(r.passed for r in required)
    rows = [{"check": r.name, "max_deviation": r.max_deviation, "tol": r.tol, "pass": r.passed} for r in reports]
    payload = {"generator": task["generator"], "invariant_measure": measure_note,
               "measure": None if mu is None else list(mu.weights),
               "checks": [r.to_dict() for r in reports]}
    return passed, payload, rows, {}


def _curvature(task, fx, rng, where):
    tol = task.get("tol")
    if "generator" in task:
        L, _ = fx.generator(task["generator"], where)
        n = math.inf if task.get("n", "inf") == "inf" else float(task["n"])
        rep = curvature(L, n)
        payload = {"generator": task["generator"], **rep.to_dict()}
        rho = rep.global_rho
        if math.isfinite(rho):
            payload["cd_check"] = cd_check(L, rho, n, tol=1e-8)
        expected = task.get("expected_rho")
        tol = 1e-8 if tol is None else tol
        rows = [{"state": x, "rho": r} for x, r in enumerate(rep.per_state_rho)]
    else:
        spec = fx.diffusion(task["diffusion"], where)
        rep = curvature_1d(spec)
        rho = rep.rho
        payload = {"diffusion": task["diffusion"], "spec": spec.to_dict(), **rep.to_dict()}
        expected = task.get("expected_rho", fx.raw[task["diffusion"]].get("expected_rho"))
        tol = 1e-2 if tol is None else tol
        rows = [{"function": k, "min_ratio": r} for k, r in enumerate(rep.per_function)]
    passed = not math.isnan(rho)
    if expected is not None:
        passed = bool(abs(rho - expected) <= tol)
        payload.update(expected_rho=expected, tol=tol, deviation=abs(rho - expected))
    if "cd_check" in payload:
        passed = passed and payload["cd_check"]["pass"]
    return passed, payload, rows, {}


def _order(task, fx, rng, where):
    if "family" in task:
        fam = fx.family(task["family"], where)
        rep = order_report(fam)
        source = {"family": task["family"]}
    else:
        names, rel = fx.relation(task["relation"], where)
        rep = analyze_relation(names, rel)
        source = {"relation": task["relation"]}
    expected = task.get("expected", {})
    observed = {"width": rep.width, "least": rep.least, "greatest": rep.greatest,
                "edges": len(rep.hasse_edges)}
    mismatches = {k: [observed[k], v] for k, v in expected.items() if observed[k] != v}
    payload = {**rep.to_dict(), **source, "expected": expected, "mismatches": mismatches}
    rows = [{"member": a, "other": b, "relation": rep.relation[i][j]}
            for i, a in enumerate(rep.names) for j, b in enumerate(rep.names)]
    return not mismatches, payload, rows, {".dot": hasse_dot(rep)}


def _default_grid():
    return np.concatenate([[0.0], np.geomspace(1e-3, 10.0, 30)])


def _ergodicity(task, fx, rng, where):
    L, mu = fx.generator(task["generator"], where)
    mu = mu if mu is not None else invariant_measure(L)
    tol = task.get("tol", 1e-8)
    tg = time_grid(task["t_grid"]) if "t_grid" in task else _default_grid()
    rep = curvature(L)
    rho = float(task["rho"]) if "rho" in task else rep.global_rho
    try:
        gap = spectral_gap(L, mu)
    except NotReversible as exc:
        return False, {"generator": task["generator"], "error": str(exc)}, [], {}

    functions = {f"e{x}": np.eye(L.size)[x] for x in range(L.size)}
    for ref in task.get("functionals", []):
        functions[ref] = fx.functional(ref, L.states, where).values
    if rep.witness is not None:
        functions["curvature_witness"] = rep.witness
    for k in range(task.get("random_functions", 20)):
        functions[f"random_{k}"] = rng.normal(size=L.size)

    rows, checks = [], {}
    for fname, f in functions.items():
        for r in proof_chain(L, mu, rho, f, tg, tol):
            rows.append({"check": r.name, "function": fname, "worst_slack": r.worst_slack,
                         "t": (r.witness or {}).get("t"), "state": (r.witness or {}).get("state"),
                         "pass": r.passed})
            c = checks.setdefault(r.name, {"pass": True, "worst_slack": math.inf, "function": None})
            if r.worst_slack < c["worst_slack"]:
                c.update(worst_slack=r.worst_slack, function=fname, witness=r.witness)
            c["pass"] = c["pass"] and r.passed
    passed = all(c["pass"] for c in checks.values())

    extras = {}
    if gap > 0 and math.isfinite(gap):
        tight = check_poincare(L, mu, gap, gap_eigenfunction(L, mu), tol)
        extras["poincare_at_gap_on_eigenfunction"] = tight.worst_slack
    if "rho" not in task and math.isfinite(rho):
        extras["curvature_below_gap"] = bool(rho <= gap + 1e-8)
        passed = passed and extras["curvature_below_gap"]

    convergence = {}
    for fname in ["e0", *task.get("functionals", [])]:
        try:
            conv = check_ergodic_limit(L, mu, functions[fname], tol)
            convergence[fname] = {"pass": conv.passed, "limit": conv.limit_value,
                                  "final_error": float(conv.sup_errors[-1]),
                                  "rate_estimate": conv.to_dict()["rate_estimate"],
                                  "rate_matches_gap": conv.details["rate_matches_gap"]}
            passed = passed and conv.passed
            for t, e in zip(conv.times, conv.sup_errors):
                rows.append({"check": "ergodic_limit", "function": fname, "t": float(t), "sup_error": float(e)})
        except NoConvergence as exc:
            convergence[fname] = {"pass": False, "error": str(exc)}
            passed = False
    payload = {"generator": task["generator"], "rho": rho,
               "rho_source": "override" if "rho" in task else "curvature",
               "spectral_gap": gap, "checks": checks, "convergence": convergence, **extras,
               "hypotheses": "connexity and self-adjointness hold by construction on a finite reversible chain"}
    return passed, payload, rows, {}


def _sandwich(task, fx, rng, where):
    fam = fx.family(task["family"], where)
    tol = task.get("tol", 1e-8)
    rep = check_sandwich(fam, tol)
    mismatches = {}
    for name, value in task.get("expected_limits", {}).items():
        got = rep["members"].get(name, {}).get("final_max")
        if got is None or abs(got - value) > tol:
            mismatches[name] = [got, value]
    rep["expected_limits"] = task.get("expected_limits", {})
    rep["mismatches"] = mismatches
    rows = [{"member": k, **m} for k, m in rep["members"].items()]
    return rep["pass"] and not mismatches, rep, rows, {}


def _diffusion_bench(task, fx, rng, where):
    checks = task.get("checks", ["shared_invariant", "mehler", "gradient_identity"])
    grid_size = task.get("grid_size", 400)
    out, rows = {}, []
    if "shared_invariant" in checks:
        demo = shared_invariant_demo(grid_size)
        pairs = []
        for k in range(task.get("rigidity_pairs", 50)):
            (L1, mu1), (L2, _) = shared_measure_pair(int(rng.integers(2, 7)), rng)
            f = rng.normal(size=L1.size)
            fam = ImpreciseFamily({"first": (L1, mu1), "second": (L2, mu1)}, f)
            pairs.append(shared_measure_rigidity(fam)["pass"])
        demo["rigidity_pairs"] = len(pairs)
        demo["rigidity_pass"] = all(pairs)
        demo["pass"] = demo["pass"] and demo["rigidity_pass"]
        out["shared_invariant"] = demo
    if "mehler" in checks:
        reps = [mehler_vs_discrete(np.tanh, 0.5), mehler_vs_discrete(lambda x: x**2, 1.0)]
        out["mehler"] = {"pass": all(r.passed for r in reps), "cases": [r.to_dict() for r in reps]}
    if "gradient_identity" in checks:
        r = gradient_identity_check(heat_spec(200), np.sin, np.cos, lambda x: -np.sin(x))
        out["gradient_identity"] = {"pass": r.passed, **r.to_dict()}
    if "curvature" in checks:
        cur = {}
        for name in task.get("diffusions", []):
            spec = fx.diffusion(name, where)
            c = curvature_1d(spec.refined(grid_size) if grid_size != spec.grid_size else spec)
            expected = fx.raw[name].get("expected_rho")
            ok = expected is None or abs(c.rho - expected) <= task.get("tol", 1e-2)
            cur[name] = {"pass": bool(ok), **c.to_dict(), "expected_rho": expected}
        out["curvature"] = {"pass": all(v["pass"] for v in cur.values()), "models": cur}
    for name, res in out.items():
        rows.append({"check": name, "pass": res["pass"]})
    return all(r["pass"] for r in out.values()), {"checks": out, "grid_size": grid_size}, rows, {}


_RUNNERS = {
    "axioms": _axioms,
    "curvature": _curvature,
    "order": _order,
    "ergodicity": _ergodicity,
    "sandwich": _sandwich,
    "diffusion-bench": _diffusion_bench,
}


def execute(task, task_id, index, fx, seed) -> TaskResult:
    rng = np.random.default_rng([seed, index])
    start = time.perf_counter()
    try:
        passed, payload, rows, extra = _RUNNERS[task["type"]](task, fx, rng, f"/tasks/{index}")
        error = None
    except ConfigError:
        raise
    except (ImpMarkovError, ValueError, ArithmeticError) as exc:
        passed, payload, rows, extra = False, {}, [], {}
        error = f"{type(exc).__name__}: {exc}"
    elapsed = time.perf_counter() - start
    payload = {"task": {k: task[k] for k in sorted(task)}, "id": task_id, "pass": bool(passed),
               "error": error, "result": payload}
    return TaskResult(task_id, task["type"], bool(passed), payload, rows, error, extra, elapsed)


# output

def clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def dump_json(obj, path: Path):
    path.write_text(json.dumps(clean(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def dump_csv(rows, path: Path):
    rows = clean(rows)
    columns = []
    for row in rows:
        columns.extend(c for c in row if c not in columns)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns or ["empty"])
        writer.writeheader()
        writer.writerows(rows)


def run_config(cfg, out_dir, seed: int | None = None, parallel: int = 1) -> list[TaskResult]:
    cfg = load_config(cfg)
    ids = task_ids(cfg["tasks"])
    fx = resolve_fixtures(cfg)
    seed = int(cfg.get("seed", 0) if seed is None else seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc)
    jobs = [(task, ids[k], k, fx, seed) for k, task in enumerate(cfg["tasks"])]
    if parallel > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(lambda job: execute(*job), jobs))
    else:
        results = [execute(*job) for job in jobs]
    for r in results:
        dump_json(r.payload, out / f"{r.id}.json")
        dump_csv(r.rows, out / f"{r.id}.csv")
        for suffix, text in r.extra_files.items():
            (out / f"{r.id}{suffix}").write_text(text, encoding="utf-8")
    summary = {
        "config": cfg.get("name", ""),
        "seed": seed,
        "tasks": [{"id": r.id, "type": r.type, "pass": r.passed, "error": r.error,
                   "report": f"{r.id}.json"} for r in results],
        "passed": sum(r.passed for r in results),
        "failed": sum(not r.passed for r in results),
    }
    dump_json(summary, out / "summary.json")
    dump_json({
        "started": started.isoformat(),
        "finished": datetime.now(timezone.utc).isoformat(),
        "task_seconds": {r.id: round(r.seconds, 4) for r in results},
        "parallel": parallel,
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }, out / "metadata.json")
    return results


def run(config, out_dir, seed: int | None = None, parallel: int = 1) -> int:
    """Run every task; 0 iff all pass. ConfigError propagates to the caller."""
    results = run_config(config, out_dir, seed, parallel)
    return 0 if all(r.passed for r in results) else 1
