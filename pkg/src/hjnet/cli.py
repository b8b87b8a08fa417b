"""Command line front end: ``hjnet SUBCOMMAND --config run.yaml``.

Every run reads a YAML document, fills defaults, rejects unknown keys, and
writes one CSV table. The first CSV line is ``# config_sha256=<hash>`` of the
resolved configuration so results can be traced to their inputs.

Exit codes: 0 success, 2 configuration error, 3 numerical failure. Errors
also print one JSON record on stderr.
"""

from __future__ import annotations

import argparse
import ast
import copy
import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np
import yaml

from . import control, flux_limiter, homogenization, solver, vertex_test
from .errors import HJNetError
from .grid import Grid
from .hamiltonian import (CallableHamiltonian, PiecewiseLinearHamiltonian, PowerHamiltonian,
                          QuasiConvexHamiltonian)
from .network import Edge, Network, build_junction

SUBCOMMANDS = ("solve", "stationary", "limiter", "vtf-check", "control", "cell", "homogenize", "reduce")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

DEFAULTS: dict[str, Any] = {"grid": {"dx": 0.01, "truncation": 2.0}, "scheme": {"cfl_safety": 0.5}, "T": 1.0}

#: top-level keys each subcommand accepts
ALLOWED: dict[str, set[str]] = {
    "solve": {"network", "hamiltonians", "limiters", "junction_functions", "grid", "scheme",
              "initial", "T", "snapshots", "output"},
    "stationary": {"network", "hamiltonians", "limiters", "grid", "scheme", "alpha", "tol", "output"},
    "limiter": {"branches", "junction_function", "output"},
    "vtf-check": {"branches", "A", "gamma", "kind", "samples", "seed", "radius", "output"},
    "control": {"network", "controls", "vertex_controls", "initial", "T", "grid", "dwell",
                "time_steps", "output"},
    "cell": {"branches", "A", "P", "grid", "output"},
    "homogenize": {"branches", "A", "initial", "T", "eps", "cells_per_edge", "extent", "window", "output"},
    "reduce": {"branches", "junction_function", "initial", "T", "dx", "truncation", "scheme", "output"},
}

SECTION_KEYS = {
    "grid": {"dx", "truncation"},
    "scheme": {"cfl_safety", "backend"},
    "network": {"junction", "edges", "truncation"},
}

HAMILTONIAN_KEYS = {
    "power": {"type", "scale", "center", "exponent", "offset", "search_bound"},
    "quadratic": {"type", "scale", "center", "offset", "search_bound"},
    "abs": {"type", "scale", "center", "offset", "search_bound"},
    "piecewise_linear": {"type", "knots", "values", "search_bound"},
    "controls": {"type", "samples"},
    "expression": {"type", "expr", "search_bound"},
}


class ConfigError(Exception):
    """Raised for anything wrong with the configuration document."""


# ---------------------------------------------------------------------------
# expressions

_NUMPY_NAMES = ("abs", "sqrt", "exp", "log", "sin", "cos", "tan", "minimum", "maximum", "where",
                "clip", "sign", "pi", "inf", "tanh", "arctan", "floor", "ceil", "sum", "max", "min")
_SAFE_NODES = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.BoolOp, ast.Compare, ast.IfExp, ast.Call,
               ast.Name, ast.Load, ast.Constant, ast.Attribute, ast.Subscript, ast.Tuple, ast.List,
               ast.Slice, ast.keyword, ast.operator, ast.unaryop, ast.cmpop, ast.boolop)


def compile_expression(text: str, variables: Sequence[str]) -> Callable[..., Any]:
    """Turn ``text`` into a function of ``variables`` over a small numpy namespace."""
    if not isinstance(text, str):
        raise ConfigError(f"expected an expression string, got {text!r}")
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from None
    allowed = set(variables) | set(_NUMPY_NAMES) | {"np"}
    for node in ast.walk(tree):
        if not isinstance(node, _SAFE_NODES):
            raise ConfigError(f"expression {text!r} uses unsupported syntax {type(node).__name__}")
        if isinstance(node, ast.Name) and node.id not in allowed:
            raise ConfigError(f"expression {text!r} uses unknown name {node.id!r}")
        if isinstance(node, ast.Attribute):
            if not (isinstance(node.value, ast.Name) and node.value.id == "np" and node.attr in _NUMPY_NAMES):
                raise ConfigError(f"expression {text!r} may only use np.{{{', '.join(_NUMPY_NAMES)}}}")
    code = compile(tree, "<config>", "eval")
    namespace = {name: getattr(np, name) for name in _NUMPY_NAMES}
    namespace["np"] = np

    def fn(*args):
        local = dict(namespace)
        local.update(zip(variables, args))
        return eval(code, {"__builtins__": {}}, local)

    return fn


# ---------------------------------------------------------------------------
# config parsing


@dataclass
class RunConfig:
    subcommand: str
    data: dict
    digest: str


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def apply_override(data: dict, assignment: str) -> None:
    """Apply one ``dotted.key=value`` override; the value is read as YAML."""
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ConfigError(f"empty key in {assignment!r}")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot read value in {assignment!r}: {exc}") from None
    node = data
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"{key!r} descends into a non-section")
    node[parts[-1]] = value


def _digest(data: dict) -> str:
    text = json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def parse_config(document, subcommand: str, overrides: Sequence[str] = ()) -> RunConfig:
    """Validate a YAML document (text or mapping) for ``subcommand``."""
    if subcommand not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    if isinstance(document, str):
        try:
            data = yaml.safe_load(document)
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed YAML: {exc}") from None
    else:
        data = copy.deepcopy(document)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("the configuration must be a mapping")
    for item in overrides:
        apply_override(data, item)
    unknown = sorted(set(data) - ALLOWED[subcommand])
    if unknown:
        raise ConfigError(f"unknown key(s) for {subcommand}: {', '.join(map(str, unknown))}")
    defaults = {k: v for k, v in DEFAULTS.items() if k in ALLOWED[subcommand]}
    data = _merge(defaults, data)
    for section, keys in SECTION_KEYS.items():
        if section in data:
            if not isinstance(data[section], dict):
                raise ConfigError(f"section {section!r} must be a mapping")
            bad = sorted(set(data[section]) - keys)
            if bad:
                raise ConfigError(f"unknown key(s) in {section}: {', '.join(bad)}")
    cfg = RunConfig(subcommand, data, _digest({"subcommand": subcommand, **data}))
    try:
        _build(cfg)  # surface reference errors before any computation
    except (HJNetError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def _number(data: dict, key: str, default=None, positive: bool = False) -> float:
    value = data.get(key, default)
    if value is None:
        raise ConfigError(f"missing required key {key!r}")
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key!r} must be a number, got {value!r}") from None
    if not math.isfinite(out) or (positive and out <= 0):
        raise ConfigError(f"{key!r} must be {'positive' if positive else 'finite'}, got {value!r}")
    return out


def build_hamiltonian(spec) -> QuasiConvexHamiltonian:
    if isinstance(spec, str):
        spec = {"type": "expression", "expr": spec}
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigError(f"a Hamiltonian needs a 'type', got {spec!r}")
    kind = spec["type"]
    if kind not in HAMILTONIAN_KEYS:
        raise ConfigError(f"unknown Hamiltonian type {kind!r}")
    bad = sorted(set(spec) - HAMILTONIAN_KEYS[kind])
    if bad:
        raise ConfigError(f"unknown key(s) for a {kind} Hamiltonian: {', '.join(bad)}")
    extra = {"search_bound": float(spec["search_bound"])} if "search_bound" in spec else {}
    try:
        if kind in ("power", "quadratic", "abs"):
            exponent = {"quadratic": 2.0, "abs": 1.0}.get(kind, spec.get("exponent", 2.0))
            H = PowerHamiltonian(float(spec.get("scale", 1.0)), float(spec.get("center", 0.0)),
                                 float(exponent), float(spec.get("offset", 0.0)), **extra)
        elif kind == "piecewise_linear":
            H = PiecewiseLinearHamiltonian(np.asarray(spec["knots"], float), np.asarray(spec["values"], float), **extra)
        elif kind == "controls":
            H = control.hamiltonian_from_controls(control.BranchControl.from_samples(spec["samples"]))
        else:
            fn = compile_expression(spec.get("expr"), ["p"])
            H = CallableHamiltonian(lambda p, fn=fn: fn(p), spec["expr"], **extra)
        H.validate()
    except KeyError as exc:
        raise ConfigError(f"{kind} Hamiltonian is missing {exc.args[0]!r}") from None
    except HJNetError as exc:
        raise ConfigError(f"invalid {kind} Hamiltonian: {exc}") from None
    return H


def build_network(spec) -> Network:
    if not isinstance(spec, dict):
        raise ConfigError("'network' must be a mapping")
    if ("junction" in spec) == ("edges" in spec):
        raise ConfigError("network needs exactly one of 'junction' or 'edges'")
    try:
        if "junction" in spec:
            return build_junction(int(spec["junction"]))
        edges = []
        for item in spec["edges"]:
            bad = sorted(set(item) - {"id", "length", "tail", "head"})
            if bad:
                raise ConfigError(f"unknown key(s) in an edge: {', '.join(bad)}")
            edges.append(Edge(str(item["id"]), float(item["length"]), str(item["tail"]),
                              None if item.get("head") is None else str(item["head"])))
        return Network.from_edges(edges)
    except KeyError as exc:
        raise ConfigError(f"edge is missing {exc.args[0]!r}") from None
    except (HJNetError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid network: {exc}") from None


def _per_edge(net: Network, spec, what: str, build: Callable) -> dict:
    """Resolve ``{default: ..., <edge>: ...}`` (or one shared value) for every edge."""
    if isinstance(spec, dict) and not ("type" in spec and what == "hamiltonians"):
        for key in spec:
            if key != "default" and key not in net.edges:
                raise ConfigError(f"{what} refers to undefined edge {key!r}")
        shared = build(spec["default"]) if "default" in spec else None
        out = {}
        for eid in net.edge_ids:
            if eid in spec:
                out[eid] = build(spec[eid])
            elif shared is not None:
                out[eid] = shared
            else:
                raise ConfigError(f"{what} has no entry for edge {eid!r}")
        return out
    shared = build(spec)
    return {eid: shared for eid in net.edge_ids}


def _limiters(net: Network, spec) -> dict:
    spec = spec or {}
    if not isinstance(spec, dict):
        raise ConfigError("'limiters' must map vertex ids to values")
    out = {}
    for key, value in spec.items():
        if key not in net.vertices:
            raise ConfigError(f"limiters refer to undefined vertex {key!r}")
        try:
            out[key] = flux_limiter.parse_limiter(value)
        except (HJNetError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad limiter at {key!r}: {exc}") from None
    return out


def _junction_function(text, arity: int) -> flux_limiter.JunctionFunction:
    fn = compile_expression(text, ["p"])
    return flux_limiter.JunctionFunction(arity, lambda p, fn=fn: float(fn(np.asarray(p))), str(text))


def _initial(net: Network, spec) -> Callable:
    if spec is None:
        raise ConfigError("missing required key 'initial'")
    funcs = _per_edge(net, spec, "initial", lambda s: compile_expression(str(s), ["x"]))
    return lambda eid, x: np.asarray(funcs[eid](x), dtype=float) * np.ones_like(x)


def _branches(data: dict) -> list[QuasiConvexHamiltonian]:
    spec = data.get("branches")
    if not isinstance(spec, list) or not spec:
        raise ConfigError("'branches' must be a non-empty list of Hamiltonians")
    return [build_hamiltonian(s) for s in spec]


def _limiter_value(data: dict, key: str = "A"):
    try:
        return flux_limiter.parse_limiter(data.get(key, "-inf"))
    except (HJNetError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad limiter {key!r}: {exc}") from None


def _scheme(data: dict, hams, limiters) -> solver.SchemeConfig:
    s = data.get("scheme", {})
    try:
        return solver.SchemeConfig(hams, limiters, _number(s, "cfl_safety", 0.5), backend=s.get("backend"))
    except HJNetError as exc:
        raise ConfigError(str(exc)) from None


def _grid(data: dict, net: Network) -> Grid:
    g = data.get("grid", {})
    truncation = data.get("network", {}).get("truncation", g.get("truncation", 2.0))
    try:
        return Grid(net, _number(g, "dx", 0.01, positive=True), float(truncation))
    except (HJNetError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid grid: {exc}") from None


def _build(cfg: RunConfig) -> dict:
    """Instantiate everything a subcommand needs, raising ConfigError on bad input."""
    d, cmd = cfg.data, cfg.subcommand
    out: dict[str, Any] = {}
    if cmd in ("solve", "stationary"):
        net = build_network(d.get("network"))
        hams = _per_edge(net, d.get("hamiltonians"), "hamiltonians", build_hamiltonian)
        limiters = _limiters(net, d.get("limiters"))
        for key, text in (d.get("junction_functions") or {}).items():
            if key not in net.vertices:
                raise ConfigError(f"junction_functions refer to undefined vertex {key!r}")
            limiters[key] = _junction_function(text, net.vertex(key).degree)
        out.update(net=net, grid=_grid(d, net), scheme=_scheme(d, hams, limiters))
        if cmd == "solve":
            out.update(initial=_initial(net, d.get("initial")), T=_number(d, "T", 1.0),
                       snapshots=[float(t) for t in d.get("snapshots", []) or []])
        else:
            out.update(alpha=_number(d, "alpha", positive=True), tol=_number(d, "tol", 1e-8, positive=True))
    elif cmd == "limiter":
        out["hams"] = _branches(d)
        if "junction_function" in d:
            out["F"] = _junction_function(d["junction_function"], len(out["hams"]))
    elif cmd == "vtf-check":
        out["hams"] = _branches(d)
        out["A"] = _limiter_value(d)
        out["gamma"] = _number(d, "gamma", 0.1, positive=True)
        out["kind"] = d.get("kind", "regularized")
        if out["kind"] not in ("G0", "regularized", "piecewise_sharp"):
            raise ConfigError(f"unknown test-function kind {out['kind']!r}")
        out["samples"] = int(d.get("samples", 1000))
        out["seed"] = int(d.get("seed", 0))
        out["radius"] = _number(d, "radius", 5.0, positive=True)
    elif cmd == "control":
        net = build_network(d.get("network"))
        ctrl = d.get("controls")
        controls = _per_edge(net, ctrl, "controls", lambda s: control.BranchControl.from_samples(s))
        vertex = control.VertexControl.from_samples(d.get("vertex_controls") or [])
        try:
            problem = control.ControlProblem(net, controls, vertex, _initial(net, d.get("initial")))
            for bc in controls.values():
                control.hamiltonian_from_controls(bc)
        except HJNetError as exc:
            raise ConfigError(str(exc)) from None
        dwell = d.get("dwell", "junction")
        if dwell not in ("junction", "tangential", "regular"):
            raise ConfigError(f"unknown dwell mode {dwell!r}")
        steps = d.get("time_steps")
        out.update(problem=problem, grid=_grid(d, net), T=_number(d, "T", 1.0), dwell=dwell,
                   time_steps=None if steps is None else int(steps))
    elif cmd == "cell":
        hams = _branches(d)
        try:
            out["cell"] = homogenization.PeriodicCell(hams, _limiter_value(d))
        except HJNetError as exc:
            raise ConfigError(str(exc)) from None
        P = d.get("P", [0.0])
        out["P"] = [np.atleast_1d(np.asarray(p, dtype=float)) for p in (P if isinstance(P, list) else [P])]
        if any(p.shape != (len(hams),) for p in out["P"]):
            raise ConfigError(f"each P needs {len(hams)} component(s)")
        out["dx"] = _number(d.get("grid", {}), "dx", 0.02, positive=True)
    elif cmd == "homogenize":
        hams = _branches(d)
        if len(hams) != 1:
            raise ConfigError("homogenize runs the one-dimensional lattice: give one Hamiltonian")
        out["cell"] = homogenization.PeriodicCell(hams, _limiter_value(d))
        out["u0"] = compile_expression(str(d.get("initial", "-np.minimum(np.abs(x), 1.0)")), ["x"])
        out["T"] = _number(d, "T", 0.5)
        out["eps"] = [float(e) for e in d.get("eps", [0.25, 0.125, 0.0625])]
        out["cells_per_edge"] = int(d.get("cells_per_edge", 16))
        out["extent"] = tuple(float(v) for v in d.get("extent", (-3.0, 3.0)))
        out["window"] = tuple(float(v) for v in d.get("window", (-1.5, 1.5)))
    elif cmd == "reduce":
        hams = _branches(d)
        if "junction_function" not in d:
            raise ConfigError("missing required key 'junction_function'")
        out["hams"] = hams
        out["F"] = _junction_function(d["junction_function"], len(hams))
        net = build_junction(len(hams))
        out["initial"] = _initial(net, d.get("initial"))
        out["T"] = _number(d, "T", 1.0)
        dxs = d.get("dx", [0.02, 0.01, 0.005])
        out["dxs"] = [float(v) for v in (dxs if isinstance(dxs, list) else [dxs])]
        out["truncation"] = _number(d, "truncation", 2.0, positive=True)
        out["cfl"] = _number(d.get("scheme", {}), "cfl_safety", 0.5, positive=True)
    return out


# ---------------------------------------------------------------------------
# running


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if x is flux_limiter.MINUS_INFINITY:
        return "-inf"
    return format(float(x), ".17g")


def _table(header: Sequence[str], rows, digest: str) -> str:
    buf = io.StringIO()
    buf.write(f"# config_sha256={digest}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _node_rows(u, time=None):
    for eid, off, node in u.grid.node_points():
        row = [eid, off, u.values[node]]
        yield row if time is None else [time] + row


def execute(cfg: RunConfig) -> str:
    """Run a parsed configuration and return the CSV text."""
    b = _build(cfg)
    cmd = cfg.subcommand
    if cmd == "solve":
        res = solver.solve(b["initial"], b["T"], b["grid"], b["scheme"],
                           snapshot_times=b["snapshots"] or None)
        frames = res.info.get("snapshots", [res])
        rows = [r for f in frames for r in _node_rows(f, f.time)]
        return _table(["time", "edge_id", "offset", "value"], rows, cfg.digest)
    if cmd == "stationary":
        res = solver.solve_stationary(b["grid"], b["scheme"], b["alpha"], tol=b["tol"])
        return _table(["edge_id", "offset", "value"], _node_rows(res), cfg.digest)
    if cmd == "limiter":
        hams = b["hams"]
        base = flux_limiter.a0(hams)
        a_f = flux_limiter.reduce_to_flux_limit(b["F"], hams) if "F" in b else math.nan
        lo, hi = flux_limiter.ishii_limiters(*hams) if len(hams) == 2 else (math.nan, math.nan)
        return _table(["a0", "a_f", "ai_minus", "ai_plus"], [[base, a_f, lo, hi]], cfg.digest)
    if cmd == "vtf-check":
        kind, A, gamma, hams = b["kind"], b["A"], b["gamma"], b["hams"]
        if kind == "G0":
            G = vertex_test.g0_function(A, hams)
        elif kind == "regularized":
            G = vertex_test.regularize(A, hams, gamma, sample_count=b["samples"], seed=b["seed"])
        else:
            G, _ = vertex_test.build_sharp(A, hams, gamma)
        i, a, j, y = vertex_test.sample_pairs(G, b["samples"], b["seed"], min(b["radius"], G.valid_radius))
        keep = vertex_test._mask_excluded(G, i, a, j, y)
        part, res = vertex_test.residuals(G, i[keep], a[keep], j[keep], y[keep])
        ids = G.junction.edge_ids
        rows = zip(i[keep], a[keep], j[keep], y[keep], part.value, part.gx_right, part.gy_right, res)
        return _table(["x_branch", "x", "y_branch", "y", "G", "Gx", "Gy", "residual"],
                      ([ids[r[0]], r[1], ids[r[2]], *r[3:]] for r in rows), cfg.digest)
    if cmd == "control":
        res = control.value_function_dp(b["problem"], b["T"], b["grid"], b["time_steps"], dwell=b["dwell"])
        return _table(["time", "edge_id", "offset", "value"], _node_rows(res, res.time), cfg.digest)
    if cmd == "cell":
        rows = homogenization.effective_check(b["cell"], b["P"], b["dx"])
        d = b["cell"].dimension
        head = ["P"] if d == 1 else [f"P_{k + 1}" for k in range(d)]
        return _table(head + ["lambda_num", "lambda_formula", "gap"],
                      [[*r.P, r.lambda_num, r.lambda_formula, r.gap] for r in rows], cfg.digest)
    if cmd == "homogenize":
        u0 = b["u0"]
        rows = homogenization.eps_convergence(
            b["cell"], lambda x: np.asarray(u0(x), dtype=float) * np.ones_like(x), b["T"], b["eps"],
            extent=b["extent"], window=b["window"], cells_per_edge=b["cells_per_edge"])
        return _table(["eps", "sup_error"], [[r.eps, r.sup_error] for r in rows], cfg.digest)
    if cmd == "reduce":
        rows = []
        for dx in b["dxs"]:
            grid = solver.junction_grid(len(b["hams"]), dx, b["truncation"])
            r = solver.reduction_experiment(b["F"], b["hams"], b["initial"], b["T"], grid, b["cfl"])
            rows.append([dx, r.flux_limit, r.sup_gap])
        return _table(["dx", "a_f", "sup_gap"], rows, cfg.digest)
    raise ConfigError(f"unknown subcommand {cmd!r}")  # pragma: no cover


def _fail(kind: str, exc: BaseException, code: int) -> int:
    record = {"status": "error", "kind": kind, "error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(record, sort_keys=True), file=sys.stderr)
    return code


def run(cfg: RunConfig, output: str | None = None) -> int:
    """Execute and write the CSV to ``output`` (config ``output`` key, else stdout)."""
    try:
        text = execute(cfg)
    except ConfigError as exc:
        return _fail("config", exc, EXIT_CONFIG)
    except (HJNetError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return _fail("numerical", exc, EXIT_NUMERICAL)
    target = output or cfg.data.get("output")
    if target:
        with open(target, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hjnet", description="Hamilton-Jacobi equations on networks")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", "-c", required=True, help="YAML configuration file")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (dotted path, YAML value); repeatable")
    parser.add_argument("--output", "-o", help="CSV output path (default: stdout)")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        return _fail("config", exc, EXIT_CONFIG)
    try:
        cfg = parse_config(text, args.subcommand, args.overrides)
    except ConfigError as exc:
        return _fail("config", exc, EXIT_CONFIG)
    return run(cfg, args.output)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
