"""Scenario runner: ``pullback-lab run scenario.json``.

A scenario names a registered system, a tau schedule, a mandatory seed and a
list of diagnostics. Each diagnostic maps to one function of
:mod:`pullback_lab.process`; its ``expect`` block states the verdicts the run
must reproduce, so counterexamples are asserted rather than skipped.

Exit codes: 0 all expectations met, 1 verdict mismatch, 2 malformed or
invalid scenario, 3 error while building or running the system.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .metric import Ball, Box, NonautonomousSet, Region, RegionUnion, SampledSet
from .process import (
    CLOSED_FORM_TOL,
    AttractorConstructionError,
    Process,
    TauSchedule,
    attraction_test,
    attractor_construct,
    check_axioms,
    closedness_probe,
    dissipativity_classify,
    flattening_test,
    invariance_check,
    jsonable,
    omega_limit,
    parallel_map,
    point_dissipativity_test,
)
from .systems import REGISTRY, make_system

REPORT_SCHEMA_VERSION = 1

EXIT_OK, EXIT_MISMATCH, EXIT_INVALID, EXIT_SYSTEM = 0, 1, 2, 3


class ScenarioError(ValueError):
    """Scenario is malformed or refers to unknown things."""


# ---------------------------------------------------------------- schema

_NUM = {"type": "number"}
_INT = {"type": "integer"}
_OBJ = {"type": "object"}
_ARR = {"type": "array"}

SCHEDULE_SCHEMA = {
    "type": "object",
    "properties": {
        "type": {"enum": ["geometric", "arithmetic", "lags"]},
        "h": _NUM,
        "r": _NUM,
        "steps": {**_INT, "minimum": 1},
        "integer": {"type": "boolean"},
        "step": _NUM,
        "count": {**_INT, "minimum": 1},
        "start": _NUM,
        "lags": {"type": "array", "items": _NUM, "minItems": 1},
    },
    "required": ["type"],
    "additionalProperties": False,
}

_COMMON = {"schedule": SCHEDULE_SCHEMA, "branch_budget": {**_INT, "minimum": 1}}

# required and optional parameters of each diagnostic kind
DIAGNOSTIC_PARAMS = {
    "check_axioms": (
        {"probes": {"type": "array", "minItems": 1, "items": {
            "type": "object", "required": ["t", "s", "tau", "x"],
            "properties": {"t": _NUM, "s": _NUM, "tau": _NUM}}}},
        {"oracle_budget": {**_INT, "minimum": 1}},
    ),
    "omega_limit": (
        {"t": _NUM, "B": _OBJ, "cluster_eps": {**_NUM, "exclusiveMinimum": 0}},
        {"min_hits": {**_INT, "minimum": 1}, "drift_window": {**_INT, "minimum": 2}},
    ),
    "attraction_test": ({"K": _OBJ, "B": _OBJ, "t": _NUM}, {}),
    "dissipativity_classify": (
        {"candidate": _OBJ, "test_sets": {**_ARR, "minItems": 1}, "times": {**_ARR, "minItems": 1}},
        {"bound_cap": _NUM},
    ),
    "point_dissipativity_test": (
        {"candidate": _OBJ, "points": {**_ARR, "minItems": 1}, "times": {}},
        {"refine": {"type": "boolean"}},
    ),
    "flattening_test": ({"B": _OBJ, "t": _NUM, "m": {**_INT, "minimum": 0}}, {"tau_max": _NUM}),
    "closedness_probe": (
        {"t": _NUM, "t_star": {**_NUM, "exclusiveMinimum": 0}, "eta": _OBJ},
        {"conv_tol": _NUM},
    ),
    "attractor_construct": (
        {"B0": _OBJ, "times": {**_ARR, "minItems": 1}, "cluster_eps": {**_NUM, "exclusiveMinimum": 0}},
        {"test_sets": _ARR},
    ),
    "invariance_check": ({"A": _OBJ, "pairs": {**_ARR, "minItems": 1}}, {}),
}

DIAGNOSTIC_KINDS = tuple(DIAGNOSTIC_PARAMS)


def _params_schema(kind: str) -> dict:
    required, optional = DIAGNOSTIC_PARAMS[kind]
    return {
        "type": "object",
        "properties": {**required, **optional, **_COMMON},
        "required": sorted(required),
        "additionalProperties": False,
    }


_MATCHER = {
    "anyOf": [
        {"type": ["boolean", "integer", "number", "string", "array", "null"]},
        {
            "type": "object",
            "properties": {"approx": _NUM, "abs": {**_NUM, "minimum": 0}, "le": _NUM, "ge": _NUM},
            "additionalProperties": False,
            "minProperties": 1,
        },
    ]
}

SCENARIO_SCHEMA = {
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "system": {
            "type": "object",
            "properties": {"name": {"enum": list(REGISTRY)}, "params": _OBJ},
            "required": ["name"],
            "additionalProperties": False,
        },
        "schedule": SCHEDULE_SCHEMA,
        "seed": {**_INT, "minimum": 0},
        "output_dir": {"type": "string"},
        "diagnostics": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {
                    "kind": {"enum": list(DIAGNOSTIC_KINDS)},
                    "id": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
                    "params": _OBJ,
                    "tolerances": {
                        "type": "object",
                        "properties": {"tol": {**_NUM, "minimum": 0}},
                        "additionalProperties": False,
                    },
                    "expect": {"type": "object", "additionalProperties": _MATCHER},
                },
                "required": ["kind", "params"],
                "additionalProperties": False,
            },
        },
    },
    "required": ["system", "seed", "diagnostics"],
    "additionalProperties": False,
}


def system_params_schema(name: str) -> dict:
    return {"type": "object", "properties": REGISTRY[name].params, "additionalProperties": False}


def validate_scenario(sc) -> list[dict]:
    """Validate the scenario document; returns diagnostics with ids filled in."""
    try:
        jsonschema.validate(sc, SCENARIO_SCHEMA)
        system = sc["system"]
        jsonschema.validate(system.get("params", {}), system_params_schema(system["name"]))
        diags = []
        for i, d in enumerate(sc["diagnostics"]):
            jsonschema.validate(d["params"], _params_schema(d["kind"]))
            diags.append({**d, "id": d.get("id", f"{i:02d}-{d['kind']}")})
    except jsonschema.ValidationError as err:
        path = "/".join(str(x) for x in err.absolute_path)
        raise ScenarioError(f"{path or '<root>'}: {err.message}") from None
    ids = [d["id"] for d in diags]
    if len(set(ids)) != len(ids):
        raise ScenarioError("diagnostic ids must be unique")
    return diags


# ---------------------------------------------------------------- scenario parsing


def make_schedule(spec: dict) -> TauSchedule:
    kind = spec["type"]
    if kind == "geometric":
        return TauSchedule.geometric(spec.get("h", 1.0), spec.get("r", 1.5), spec.get("steps", 20), spec.get("integer", False))
    if kind == "arithmetic":
        if "step" not in spec or "count" not in spec:
            raise ScenarioError("arithmetic schedule needs step and count")
        return TauSchedule.arithmetic(spec["step"], spec["count"], spec.get("start"))
    if "lags" not in spec:
        raise ScenarioError("lags schedule needs lags")
    return TauSchedule(tuple(spec["lags"]))


def make_vector(spec, dim: int) -> np.ndarray:
    """A point: a list of numbers, or ``{"entries": {"k": value}}`` sparse over ``dim``."""
    if isinstance(spec, dict):
        out = np.zeros(spec.get("dim", dim))
        for k, v in spec.get("entries", {}).items():
            out[int(k)] = float(v)
        v = out
    else:
        v = np.asarray(spec, dtype=float).ravel()
    if v.shape != (dim,):
        raise ScenarioError(f"point has dimension {v.size}, system has {dim}")
    return v


def make_axis(spec) -> np.ndarray:
    """One grid axis: a list, ``linspace``, ``reciprocal`` (1/n), ``geometric`` or ``concat``."""
    if isinstance(spec, list):
        return np.asarray(spec, dtype=float)
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ScenarioError(f"bad axis spec {spec!r}")
    (kind, arg), = spec.items()
    if kind == "linspace":
        a, b, n = arg
        return np.linspace(a, b, int(n))
    if kind == "reciprocal":
        n0, n1 = arg
        return 1.0 / np.arange(int(n0), int(n1) + 1)
    if kind == "geometric":
        scale, ratio, count = arg
        return scale * float(ratio) ** np.arange(int(count))
    if kind == "concat":
        return np.concatenate([make_axis(a) for a in arg])
    raise ScenarioError(f"unknown axis kind {kind!r}")


def make_region(spec: dict, p: Process) -> Region:
    """Parse a set spec into a region carrying the system's metric weight."""
    label = spec.get("label", "")
    w = p.metric_weight
    keys = [k for k in ("points", "grid", "ball", "box", "union") if k in spec]
    if len(keys) != 1:
        raise ScenarioError(f"set spec needs exactly one of points/grid/ball/box/union, got {sorted(spec)}")
    kind = keys[0]
    if kind == "points":
        return SampledSet(np.array([make_vector(x, p.dimension) for x in spec["points"]]), label=label, metric_weight=w)
    if kind == "grid":
        axes = [make_axis(a) for a in spec["grid"]]
        if len(axes) != p.dimension:
            raise ScenarioError("grid needs one axis per coordinate")
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, p.dimension)
        return SampledSet(pts, label=label, metric_weight=w)
    if kind == "ball":
        b = spec["ball"]
        center = make_vector(b["center"], p.dimension) if "center" in b else np.zeros(p.dimension)
        ball = Ball(center, float(b["radius"]), w, label)
        if b.get("n_random", 0):
            return ball.sampled(int(b["n_random"]), int(b.get("seed", 0)))
        return ball
    if kind == "box":
        b = spec["box"]
        box = Box(make_vector(b["lo"], p.dimension), make_vector(b["hi"], p.dimension), w, label)
        return box.sampled(int(b["per_axis"])) if "per_axis" in b else box
    return RegionUnion(tuple(make_region(s, p) for s in spec["union"]), label)


def make_cloud(spec: dict, p: Process) -> SampledSet:
    s = make_region(spec, p).sampled()
    label = spec.get("label", s.label)
    return SampledSet(s.points, label=label, metric_weight=p.metric_weight)


def make_family(spec: dict, p: Process, times) -> NonautonomousSet:
    """``{"times": [...], "sets": [...]}``, or a single set held constant over ``times``."""
    if "times" in spec:
        sets = spec.get("sets")
        if sets is None or len(sets) != len(spec["times"]):
            raise ScenarioError("family needs one set per time")
        return NonautonomousSet(tuple(spec["times"]), tuple(make_region(s, p) for s in sets))
    return NonautonomousSet.constant(sorted(set(float(t) for t in times)), make_region(spec, p))


def make_times(spec) -> list[float]:
    return make_axis(spec).tolist() if isinstance(spec, dict) else [float(t) for t in spec]


# ---------------------------------------------------------------- diagnostics


def _f(x):
    return float(x)


def _max(values):
    values = [float(v) for v in values]
    return max(values) if values else 0.0


def _run_check_axioms(p, prm, sched, tol, budget, seed):
    probes = [(q["t"], q["s"], q["tau"], make_vector(q["x"], p.dimension)) for q in prm["probes"]]
    rep = check_axioms(p, probes, tol, budget, seed, prm.get("oracle_budget"))
    summary = {
        "is_process": rep.is_process,
        "is_strict": rep.is_strict,
        "max_identity_residual": _max(r.identity_residual for r in rep.probes),
        "max_subcomposition_residual": _max(r.subcomposition_residual for r in rep.probes),
    }
    return summary, rep.to_dict(), {}


def _run_omega_limit(p, prm, sched, tol, budget, seed):
    kw = {k: prm[k] for k in ("min_hits", "drift_window") if k in prm}
    res = omega_limit(p, prm["t"], make_cloud(prm["B"], p), sched, prm["cluster_eps"], tol, budget, seed, **kw)
    summary = {"converged": res.converged, "drifting": res.drifting, "limit_size": res.to_dict()["limit_size"]}
    return summary, res.to_dict(), {"": ("semidistance", res.attraction_curve)}


def _run_attraction_test(p, prm, sched, tol, budget, seed):
    K = make_family(prm["K"], p, [prm["t"]])
    res = attraction_test(p, K, make_cloud(prm["B"], p), prm["t"], sched, tol, budget, seed)
    summary = {"verdict": res.verdict, "final_distance": _f(res.curve[-1][1])}
    return summary, res.to_dict(), {"": ("semidistance", res.curve)}


def _run_dissipativity_classify(p, prm, sched, tol, budget, seed):
    times = make_times(prm["times"])
    cand = make_family(prm["candidate"], p, times)
    tests = []
    for i, s in enumerate(prm["test_sets"]):
        c = make_cloud(s, p)
        tests.append(c if c.label else SampledSet(c.points, label=f"E{i}", metric_weight=c.metric_weight))
    kw = {"bound_cap": prm["bound_cap"]} if "bound_cap" in prm else {}
    rep = dissipativity_classify(p, cand, tests, times, sched, tol, branch_budget=budget, rng_seed=seed, **kw)
    summary = {
        "absorbing": rep.absorbing,
        "monotone": rep.monotone,
        "backward_bounded": rep.backward_bounded,
        "point_dissipative": rep.point_dissipative,
        "witness_count": len(rep.witnesses),
        "max_entering_time": jsonable(_max(rep.entering_times.values())),
        "max_witness_distance": _max(w["distance"] for w in rep.witnesses),
    }
    return summary, rep.to_dict(), {}


def _run_point_dissipativity_test(p, prm, sched, tol, budget, seed):
    pts = [make_vector(x, p.dimension) for x in prm["points"]]
    rep = point_dissipativity_test(
        p, make_region(prm["candidate"], p), pts, make_times(prm["times"]), tol,
        prm.get("refine", True), budget, seed,
    )
    summary = {"passed": rep.passed, "entering_times": jsonable(rep.entering_times)}
    return summary, rep.to_dict(), {}


def _run_flattening_test(p, prm, sched, tol, budget, seed):
    res = flattening_test(p, make_cloud(prm["B"], p), prm["t"], prm["m"], sched, prm.get("tau_max"), budget, seed)
    return {"sup_tail": res.sup_tail}, res.to_dict(), {"": ("tail_norm", res.tails)}


def _eta_sequence(spec: dict, dim: int):
    if "seq" in spec:
        return [make_vector(x, dim) for x in spec["seq"]], make_vector(spec["limit"], dim)
    limit = make_vector(spec["limit"], dim)
    direction = make_vector(spec["direction"], dim)
    return [limit + float(s) * direction for s in make_times(spec["scales"])], limit


def _run_closedness_probe(p, prm, sched, tol, budget, seed):
    try:
        seq, limit = _eta_sequence(prm["eta"], p.dimension)
    except KeyError as err:
        raise ScenarioError(f"eta spec is missing {err}") from None
    kw = {"conv_tol": prm["conv_tol"]} if "conv_tol" in prm else {}
    w = closedness_probe(p, prm["t"], prm["t_star"], seq, limit, tol, branch_budget=budget, rng_seed=seed, **kw)
    return {"verdict": w.verdict, "violation": w.violation, "gap": _f(w.gap)}, w.to_dict(), {}


def _run_attractor_construct(p, prm, sched, tol, budget, seed):
    times = make_times(prm["times"])
    B0 = make_family(prm["B0"], p, times)
    tests = [make_cloud(s, p) for s in prm.get("test_sets", [])]
    try:
        res = attractor_construct(p, B0, times, sched, prm["cluster_eps"], tests, tol, budget, seed)
    except AttractorConstructionError as err:
        summary = {"constructed": False, "limit_sizes": [], "all_attracted": False}
        return summary, {"constructed": False, "failed_at": err.t, "omega": err.result.to_dict()}, {}
    d = res.to_dict()
    summary = {
        "constructed": True,
        "limit_sizes": [len(s) for s in res.attractor.sets],
        "all_attracted": d["all_attracted"],
    }
    curves = {f"omega-t{t!r}": ("semidistance", r.attraction_curve) for t, r in res.omega.items()}
    for (t, label), r in res.attraction.items():
        curves[f"attraction-t{t!r}-{label or 'set'}"] = ("semidistance", r.curve)
    return summary, {"constructed": True, **d}, curves


def _run_invariance_check(p, prm, sched, tol, budget, seed):
    pairs = [tuple(map(float, q)) for q in prm["pairs"]]
    A = make_family(prm["A"], p, [x for q in pairs for x in q])
    rep = invariance_check(p, A, pairs, tol, budget, seed)
    summary = {
        "negatively_invariant": rep.negatively_invariant,
        "invariant": rep.invariant,
        "max_negative_residual": _max(r["negative_residual"] for r in rep.rows),
        "max_forward_residual": _max(r["forward_residual"] for r in rep.rows),
    }
    return summary, rep.to_dict(), {}


RUNNERS = {
    "check_axioms": _run_check_axioms,
    "omega_limit": _run_omega_limit,
    "attraction_test": _run_attraction_test,
    "dissipativity_classify": _run_dissipativity_classify,
    "point_dissipativity_test": _run_point_dissipativity_test,
    "flattening_test": _run_flattening_test,
    "closedness_probe": _run_closedness_probe,
    "attractor_construct": _run_attractor_construct,
    "invariance_check": _run_invariance_check,
}


def _as_number(v):
    if isinstance(v, str) and v in ("inf", "-inf", "nan"):
        return float(v)
    return v


def match_expectation(actual, matcher) -> bool:
    if isinstance(matcher, dict):
        v = _as_number(actual)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            return False
        ok = True
        if "approx" in matcher:
            ok &= abs(v - matcher["approx"]) <= matcher.get("abs", 1e-9)
        if "le" in matcher:
            ok &= v <= matcher["le"]
        if "ge" in matcher:
            ok &= v >= matcher["ge"]
        return bool(ok)
    if isinstance(matcher, bool) or isinstance(actual, bool):
        return actual is matcher
    return actual == matcher


def run_diagnostic(p: Process, diag: dict, default_sched: TauSchedule, seed: int) -> dict:
    prm = diag["params"]
    sched = make_schedule(prm["schedule"]) if "schedule" in prm else default_sched
    tol = diag.get("tolerances", {}).get("tol")
    if tol is None and diag["kind"] != "omega_limit":
        tol = CLOSED_FORM_TOL  # omega_limit falls back to its cluster radius
    summary, result, curves = RUNNERS[diag["kind"]](p, prm, sched, tol, prm.get("branch_budget", 1), seed)
    summary = jsonable(summary)
    expect = diag.get("expect", {})
    mismatches = []
    for key, m in expect.items():
        if key not in summary:
            raise ScenarioError(f"{diag['id']}: unknown expectation key {key!r}; have {sorted(summary)}")
        if not match_expectation(summary[key], m):
            mismatches.append({"key": key, "expected": m, "actual": summary[key]})
    return {
        "id": diag["id"],
        "kind": diag["kind"],
        "tol": tol,
        "summary": summary,
        "expect": expect,
        "matched": not mismatches,
        "mismatches": mismatches,
        "result": jsonable(result),
        "_curves": curves,
    }


# ---------------------------------------------------------------- artifacts


def _fmt(x: float) -> str:
    return repr(float(x))


def curve_csv(header: str, rows) -> str:
    lines = [f"tau,{header}"]
    lines += [f"{_fmt(a)},{_fmt(b)}" for a, b in rows]
    return "\n".join(lines) + "\n"


def curve_svg(title: str, ylabel: str, rows, width: int = 480, height: int = 300) -> str:
    """A minimal line chart of ``rows`` = [(tau, value)], tau on the x axis."""
    pad = 48
    xs = np.array([a for a, _ in rows], dtype=float)
    ys = np.array([b for _, b in rows], dtype=float)
    ys = np.where(np.isfinite(ys), ys, np.nan)
    x0, x1 = float(xs.min()), float(xs.max())
    finite = ys[np.isfinite(ys)]
    y0, y1 = (0.0, float(finite.max())) if finite.size else (0.0, 1.0)
    y0 = min(y0, float(finite.min())) if finite.size else y0
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def px(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def py(y):
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys) if np.isfinite(y))
    esc = title.replace("&", "&amp;").replace("<", "&lt;")
    return "\n".join([
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="20" text-anchor="middle" font-family="sans-serif" font-size="13">{esc}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{pad}" y="{height - pad + 16}" font-family="sans-serif" font-size="10">{x0:.4g}</text>',
        f'<text x="{width - pad}" y="{height - pad + 16}" text-anchor="end" font-family="sans-serif" font-size="10">{x1:.4g}</text>',
        f'<text x="{width / 2:.0f}" y="{height - 10}" text-anchor="middle" font-family="sans-serif" font-size="11">tau</text>',
        f'<text x="{pad - 4}" y="{height - pad}" text-anchor="end" font-family="sans-serif" font-size="10">{y0:.4g}</text>',
        f'<text x="{pad - 4}" y="{pad + 4}" text-anchor="end" font-family="sans-serif" font-size="10">{y1:.4g}</text>',
        f'<text x="14" y="{height / 2:.0f}" transform="rotate(-90 14 {height / 2:.0f})" text-anchor="middle" '
        f'font-family="sans-serif" font-size="11">{ylabel}</text>',
        f'<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{pts}"/>',
        "</svg>",
        "",
    ])


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def shipped_scenarios() -> dict[str, Path]:
    root = resources.files("pullback_lab") / "scenarios"
    return {Path(str(f)).stem: Path(str(f)) for f in root.iterdir() if str(f).endswith(".json")}


def load_scenario(path: str) -> tuple[dict, str]:
    p = Path(path)
    if not p.exists():
        shipped = shipped_scenarios()
        if path in shipped:
            p = shipped[path]
        else:
            raise ScenarioError(f"no such scenario file: {path}")
    text = p.read_text()
    try:
        return json.loads(text), p.stem
    except json.JSONDecodeError as err:
        raise ScenarioError(f"malformed JSON in {path}: {err}") from None


def run_scenario(sc: dict, default_name: str = "scenario", output: str | None = None, seed: int | None = None,
                 log=print) -> int:
    """Run a parsed scenario and write its artifacts; returns the exit code."""
    started = time.perf_counter()
    stamp = datetime.now(timezone.utc).isoformat()
    try:
        diags = validate_scenario(sc)
        if seed is not None:
            sc = {**sc, "seed": int(seed)}
        sched = make_schedule(sc.get("schedule", {"type": "geometric"}))
    except (ScenarioError, ValueError) as err:
        log(f"error: invalid scenario: {err}")
        return EXIT_INVALID
    name = sc.get("name", default_name)
    out = Path(output or sc.get("output_dir") or f"runs/{name}")

    try:
        system = make_system(sc["system"]["name"], sc["system"].get("params", {}))
    except (ValueError, TypeError, KeyError) as err:
        log(f"error: cannot build system: {err}")
        return EXIT_SYSTEM

    def run_one(d):
        try:
            return run_diagnostic(system, d, sched, sc["seed"])
        except ScenarioError as err:
            return ScenarioError(f"{d['id']}: {err}")
        except Exception as err:  # reported as a system error below
            return RuntimeError(f"{d['id']} ({d['kind']}): {type(err).__name__}: {err}")

    results = parallel_map(run_one, diags)
    for r in results:
        if isinstance(r, ScenarioError):
            log(f"error: invalid scenario: {r}")
            return EXIT_INVALID
    errors = [r for r in results if isinstance(r, Exception)]
    if errors:
        for e in errors:
            log(f"error: {e}")
        return EXIT_SYSTEM

    canonical = json.dumps(sc, sort_keys=True, separators=(",", ":"))
    curves_dir, plots_dir = out / "curves", out / "plots"
    curves_dir.mkdir(parents=True, exist_ok=True)
    plots_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for r in results:
        for suffix, (ylabel, rows) in sorted(r.pop("_curves").items()):
            if not rows:
                continue
            stem = r["id"] if not suffix else f"{r['id']}__{suffix}"
            (curves_dir / f"{stem}.csv").write_text(curve_csv(ylabel, rows))
            (plots_dir / f"{stem}.svg").write_text(curve_svg(f"{r['id']} {suffix}".strip(), ylabel, rows))
            files += [f"curves/{stem}.csv", f"plots/{stem}.svg"]

    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "scenario": name,
        "system": {"name": sc["system"]["name"], "params": sc["system"].get("params", {})},
        "seed": sc["seed"],
        "schedule_lags": list(sched.lags),
        "diagnostics": results,
        "all_matched": all(r["matched"] for r in results),
    }
    (out / "report.json").write_text(_dump(report))
    manifest = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "scenario_sha256": hashlib.sha256(canonical.encode()).hexdigest(),
        "toolkit_version": __version__,
        "wall_clock": {"started": stamp, "elapsed_seconds": round(time.perf_counter() - started, 3)},
        "verdicts": {r["id"]: {"matched": r["matched"], "summary": r["summary"]} for r in results},
        "files": ["report.json"] + files,
    }
    (out / "manifest.json").write_text(_dump(manifest))

    for r in results:
        status = "ok" if r["matched"] else "MISMATCH"
        log(f"{status:8s} {r['id']} ({r['kind']})")
        for m in r["mismatches"]:
            log(f"         {m['key']}: expected {m['expected']!r}, got {m['actual']!r}")
    log(f"artifacts written to {out}")
    return EXIT_OK if report["all_matched"] else EXIT_MISMATCH


# ---------------------------------------------------------------- entry point


def cmd_list_systems(as_json: bool) -> int:
    if as_json:
        payload = [
            {"name": e.name, "summary": e.summary, "params_schema": system_params_schema(e.name)}
            for e in REGISTRY.values()
        ]
        print(json.dumps({"systems": payload}, indent=2))
    else:
        width = max(len(n) for n in REGISTRY)
        for e in REGISTRY.values():
            params = ", ".join(e.params) or "-"
            print(f"{e.name:<{width}}  {e.summary}  [params: {params}]")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pullback-lab", description="Sampled pullback-attractor diagnostics.")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario file (or the name of a shipped scenario)")
    run.add_argument("scenario")
    run.add_argument("--output", help="output directory (overrides output_dir)")
    run.add_argument("--seed", type=int, help="override the scenario seed")
    ls = sub.add_parser("list-systems", help="list registered systems")
    ls.add_argument("--json", action="store_true", help="machine-readable output with parameter schemas")
    sub.add_parser("version", help="print the toolkit version")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "version":
        print(__version__)
        return EXIT_OK
    if args.command == "list-systems":
        return cmd_list_systems(args.json)
    try:
        sc, stem = load_scenario(args.scenario)
    except ScenarioError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    if not isinstance(sc, dict):
        print("error: scenario must be a JSON object", file=sys.stderr)
        return EXIT_INVALID
    return run_scenario(sc, stem, args.output, args.seed)


if __name__ == "__main__":
    sys.exit(main())
