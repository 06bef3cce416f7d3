"""Command-line harness: solve, bench, certify and list.

Exit codes: 0 converged (or certified), 1 not near-stationary (certify),
2 iteration limit, 3 invalid configuration or input, 4 oracle or master failure.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Optional

import numpy as np

from .approx import Schedule, run_outer
from .bundle import BundleConfig, bundle_run
from .dc import DcConfig, dc_run
from .errors import CompOptError, ConfigurationError, InvalidInputError, RegistryError
from .problems import (REGISTRY, build_family, build_instance, descriptor, list_instances,
                       verify_instance)
from .stationarity import StationarityTriple, residual

EXIT_OK, EXIT_NONSTATIONARY, EXIT_MAXITER, EXIT_CONFIG, EXIT_FAILURE = 0, 1, 2, 3, 4

ALGORITHMS = ("bundle", "dc", "proximal-distance", "outer")
ITERATION_COLUMNS = ("k", "step_kind", "v_k", "e_k", "t_k", "step_norm", "objective",
                     "model_size", "residual_total")
OUTER_COLUMNS = ("nu", "tol", "iterations", "converged", "certificate", "residual_approx",
                 "residual_actual", "y_norm", "near_stationary")
BENCH_COLUMNS = ("run", "instance", "algorithm", "exit_code", "iterations", "serious", "null",
                 "backtracking", "final_v", "final_e", "residual", "certificate")
RUN_KEYS = ("instance", "algorithm", "inner", "x0", "seed")
SECTIONS = ("run", "params", "solver", "schedule")


# ---------------------------------------------------------------------------
# configuration

@dataclasses.dataclass
class RunConfig:
    instance: str
    algorithm: str = "bundle"
    inner: str = "bundle"
    x0: Optional[list] = None
    seed: int = 0
    params: dict = dataclasses.field(default_factory=dict)
    solver: dict = dataclasses.field(default_factory=dict)
    schedule: dict = dataclasses.field(default_factory=dict)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _parse_scalar(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", ""):
        return None
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        return t


def _parse_vector(value) -> list:
    if isinstance(value, str):
        value = [v for v in value.replace(",", " ").split()]
    if isinstance(value, (int, float)):
        value = [value]
    try:
        return [float(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigurationError(f"x0: cannot parse {value!r} as a vector") from None


def _coerce_fields(cls, values: dict, section: str) -> dict:
    """Cast values to the field types of a config dataclass; reject unknown keys."""
    known = {f.name: f for f in dataclasses.fields(cls)}
    out = {}
    for key, value in values.items():
        if key not in known:
            raise ConfigurationError(f"{key}: unknown key in [{section}]")
        default = known[key].default
        try:
            if value is None:
                out[key] = None
            elif isinstance(default, bool):
                out[key] = value if isinstance(value, bool) else str(value).lower() == "true"
            elif isinstance(default, int):
                if float(value) != int(float(value)):
                    raise ValueError
                out[key] = int(float(value))
            elif isinstance(default, float) or default is None:
                out[key] = float(value)
            else:
                out[key] = str(value)
        except (TypeError, ValueError):
            raise ConfigurationError(f"{key}: cannot parse {value!r}") from None
    return out


def run_config_from_dict(data: dict) -> RunConfig:
    unknown = set(data) - set(SECTIONS)
    if unknown:
        raise ConfigurationError(f"{sorted(unknown)[0]}: unknown section")
    run = dict(data.get("run", {}))
    bad = set(run) - set(RUN_KEYS)
    if bad:
        raise ConfigurationError(f"{sorted(bad)[0]}: unknown key in [run]")
    if "instance" not in run:
        raise ConfigurationError("instance: missing from [run]")
    cfg = RunConfig(instance=str(run["instance"]))
    if "algorithm" in run:
        cfg.algorithm = str(run["algorithm"])
    if "inner" in run:
        cfg.inner = str(run["inner"])
    if run.get("x0") is not None:
        cfg.x0 = _parse_vector(run["x0"])
    if "seed" in run:
        cfg.seed = int(run["seed"])
    cfg.params = {k: _parse_scalar(v) if isinstance(v, str) else v
                  for k, v in dict(data.get("params", {})).items()}
    cfg.solver = {k: _parse_scalar(v) if isinstance(v, str) else v
                  for k, v in dict(data.get("solver", {})).items()}
    cfg.schedule = {k: _parse_scalar(v) if isinstance(v, str) else v
                    for k, v in dict(data.get("schedule", {})).items()}
    validate_run_config(cfg)
    return cfg


def validate_run_config(cfg: RunConfig) -> None:
    if cfg.algorithm not in ALGORITHMS:
        raise ConfigurationError(f"algorithm: must be one of {ALGORITHMS}")
    if cfg.inner not in ALGORITHMS[:3]:
        raise ConfigurationError(f"inner: must be one of {ALGORITHMS[:3]}")
    try:
        d = descriptor(cfg.instance)
    except RegistryError as exc:
        raise ConfigurationError(f"instance: {exc.args[0]}") from None
    d.params(cfg.params)
    solver_cls = BundleConfig if _solver_kind(cfg) == "bundle" else DcConfig
    solver_cls(**_coerce_fields(solver_cls, cfg.solver, "solver"))
    if cfg.algorithm == "outer":
        Schedule(**_coerce_fields(Schedule, cfg.schedule, "schedule"))
        if d.family is None:
            raise ConfigurationError(f"algorithm: instance {cfg.instance} has no approximation family")
    elif cfg.schedule:
        raise ConfigurationError("schedule: only valid with algorithm = outer")
    if cfg.x0 is not None and len(cfg.x0) != d.dims["n"]:
        raise ConfigurationError(f"x0: expected {d.dims['n']} entries")


def _solver_kind(cfg: RunConfig) -> str:
    alg = cfg.inner if cfg.algorithm == "outer" else cfg.algorithm
    return "bundle" if alg == "bundle" else "dc"


def load_config(path: str) -> dict:
    """Read an INI file with [run] [params] [solver] [schedule], or a JSON file."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"config: cannot read {path}: {exc.strerror}") from None
    if path.endswith(".json") or text.lstrip().startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config: invalid JSON ({exc.msg})") from None
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"config: {exc}") from None
    return {s: dict(parser[s]) for s in parser.sections()}


# ---------------------------------------------------------------------------
# output helpers

def _plain(obj):
    """Convert numpy containers and non-finite floats into JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in columns])
    return buf.getvalue()


def parse_csv_value(text: str):
    """Inverse of the CSV cell encoding for numeric and empty cells."""
    if text == "":
        return None
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _write(path: str, text: str) -> None:
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# running

def execute(cfg: RunConfig, verify: bool = False) -> dict:
    """Run one configuration. Returns a summary dict with exit_code and rows."""
    summary = {"instance": cfg.instance, "algorithm": cfg.algorithm, "config": cfg.to_dict()}
    try:
        validate_run_config(cfg)
        d = descriptor(cfg.instance)
        params = d.params(cfg.params)
        x0 = cfg.x0 if cfg.x0 is not None else list(d.x0)
        if verify:
            rep = verify_instance(build_instance(cfg.instance, params),
                                  np.random.default_rng(cfg.seed))
            summary["verification"] = rep.checks
            if not rep.ok:
                summary.update(exit_code=EXIT_FAILURE, status="verification-failed", rows=[])
                return summary
        if cfg.algorithm == "outer":
            return _execute_outer(cfg, params, x0, summary)
        problem = build_instance(cfg.instance, params)
        if cfg.algorithm == "bundle":
            res = bundle_run(problem, BundleConfig(**_coerce_fields(BundleConfig, cfg.solver, "solver")), x0)
        else:
            res = dc_run(problem, DcConfig(**_coerce_fields(DcConfig, cfg.solver, "solver")), x0,
                         variant=cfg.algorithm)
    except (ConfigurationError, InvalidInputError, RegistryError) as exc:
        summary.update(exit_code=EXIT_CONFIG, status="invalid-config", error=str(exc), rows=[])
        return summary
    except CompOptError as exc:
        summary.update(exit_code=EXIT_FAILURE, status="failure", error=f"{type(exc).__name__}: {exc}",
                       rows=[])
        return summary
    rows = [r.row() for r in res.records]
    last = res.records[-1]
    summary.update(
        exit_code=EXIT_OK if res.converged else EXIT_MAXITER,
        status="converged" if res.converged else "max-iter",
        iterations=res.iterations, counts=res.counts(), x=res.x, y=res.y, z=res.z,
        final_v=last.v, final_e=getattr(last, "e", None),
        certificate=res.certificate.to_dict() if res.certificate else None,
        residual=res.residual.to_dict() if res.residual else None, rows=rows)
    return summary


def _execute_outer(cfg: RunConfig, params: dict, x0, summary: dict) -> dict:
    family = build_family(cfg.instance, params)
    schedule = Schedule(**_coerce_fields(Schedule, cfg.schedule, "schedule"))
    if cfg.inner == "bundle":
        inner_cfg = BundleConfig(**_coerce_fields(BundleConfig, cfg.solver, "solver"))
    else:
        inner_cfg = DcConfig(**_coerce_fields(DcConfig, cfg.solver, "solver"))
    out = run_outer(family, schedule, cfg.inner, x0, inner_cfg)
    rows = [{"nu": r.nu, "tol": r.tol, "iterations": r.iterations, "converged": r.converged,
             "certificate": r.certificate, "residual_approx": r.residual_approx.total,
             "residual_actual": None if r.residual_actual is None else r.residual_actual.total,
             "y_norm": r.y_norm, "near_stationary": r.near_stationary} for r in out.rows]
    if out.failure is not None:
        code, status = EXIT_FAILURE, "failure"
    elif all(r.converged for r in out.rows):
        code, status = EXIT_OK, "converged"
    else:
        code, status = EXIT_MAXITER, "max-iter"
    summary.update(out.to_dict())
    summary.update(exit_code=code, status=status, iterations=sum(r.iterations for r in out.rows),
                   rows=rows)
    return summary


def _write_run(summary: dict, out: str, stem: str = "") -> None:
    columns = OUTER_COLUMNS if summary["algorithm"] == "outer" else ITERATION_COLUMNS
    rows = summary.get("rows", [])
    _write(os.path.join(out, f"{stem}iterations.csv"), csv_text(columns, rows))
    body = {k: v for k, v in summary.items() if k != "rows"}
    _write(os.path.join(out, f"{stem}summary.json"), dumps_json(body))


# ---------------------------------------------------------------------------
# commands

def _config_from_args(args) -> RunConfig:
    if args.config:
        data = load_config(args.config)
    else:
        if not args.instance:
            raise ConfigurationError("instance: pass --config or --instance")
        data = {"run": {"instance": args.instance, "algorithm": args.algorithm or "bundle"}}
    run = data.setdefault("run", {})
    if args.config and args.instance:
        run["instance"] = args.instance
    if args.config and args.algorithm:
        run["algorithm"] = args.algorithm
    if args.seed is not None:
        run["seed"] = args.seed
    return run_config_from_dict(data)


def cmd_solve(args) -> int:
    try:
        cfg = _config_from_args(args)
    except (ConfigurationError, InvalidInputError, RegistryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    summary = execute(cfg, verify=args.verify)
    _write_run(summary, args.out)
    line = f"{cfg.instance} {cfg.algorithm}: {summary['status']}"
    if summary.get("residual"):
        line += f", residual {summary['residual']['total']:.3e}"
    if "error" in summary:
        print(f"error: {summary['error']}", file=sys.stderr)
    print(line)
    return summary["exit_code"]


def default_suite() -> list:
    return [{"run": {"instance": name, "algorithm": alg}}
            for name in sorted(REGISTRY) for alg in REGISTRY[name].algorithms]


def load_suite(path: Optional[str]) -> list:
    """A suite is a JSON {"runs": [...]} of run configs, or an INI with [run NAME] sections.

    INI run sections hold run keys plus params.*, solver.* and schedule.* keys.
    """
    if path is None:
        return default_suite()
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"suite: cannot read {path}: {exc.strerror}") from None
    if path.endswith(".json") or text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"suite: invalid JSON ({exc.msg})") from None
        if set(data) - {"runs"}:
            raise ConfigurationError("suite: only the key 'runs' is allowed")
        runs = data.get("runs", [])
        if not isinstance(runs, list):
            raise ConfigurationError("runs: must be a list")
        return runs
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"suite: {exc}") from None
    runs = []
    for section in parser.sections():
        if not section.startswith("run"):
            raise ConfigurationError(f"{section}: suite sections must be named [run NAME]")
        entry = {"run": {}}
        for key, value in parser[section].items():
            head, _, tail = key.partition(".")
            if tail:
                if head not in SECTIONS[1:]:
                    raise ConfigurationError(f"{key}: unknown key prefix")
                entry.setdefault(head, {})[tail] = value
            else:
                entry["run"][key] = value
        runs.append(entry)
    return runs


def _bench_one(item):
    index, data, seed = item
    start = time.perf_counter()
    try:
        data = json.loads(json.dumps(data))
        data.setdefault("run", {})
        if seed is not None:
            data["run"]["seed"] = seed
        cfg = run_config_from_dict(data)
        summary = execute(cfg)
    except (ConfigurationError, InvalidInputError, RegistryError) as exc:
        run = data.get("run", {}) if isinstance(data, dict) else {}
        summary = {"instance": run.get("instance"), "algorithm": run.get("algorithm"),
                   "exit_code": EXIT_CONFIG, "status": "invalid-config", "error": str(exc),
                   "rows": []}
    return index, summary, time.perf_counter() - start


def _bench_row(index: int, s: dict) -> dict:
    counts = s.get("counts", {})
    res = s.get("residual")
    cert = s.get("certificate")
    return {"run": index, "instance": s.get("instance"), "algorithm": s.get("algorithm"),
            "exit_code": s["exit_code"], "iterations": s.get("iterations"),
            "serious": counts.get("serious"), "null": counts.get("null"),
            "backtracking": counts.get("backtracking"), "final_v": s.get("final_v"),
            "final_e": s.get("final_e"), "residual": res["total"] if res else None,
            "certificate": cert["epsilon"] if cert else None}


def cmd_bench(args) -> int:
    try:
        runs = load_suite(args.config)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not runs:
        print("error: runs: suite is empty", file=sys.stderr)
        return EXIT_CONFIG
    items = [(i, r, args.seed) for i, r in enumerate(runs)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_bench_one, items))
    else:
        results = [_bench_one(it) for it in items]
    results.sort(key=lambda r: r[0])
    rows = [_bench_row(i, s) for i, s, _ in results]
    _write(os.path.join(args.out, "bench.csv"), csv_text(BENCH_COLUMNS, rows))
    _write(os.path.join(args.out, "bench.json"),
           dumps_json([{k: v for k, v in s.items() if k != "rows"} for _, s, _ in results]))
    # wall time varies between runs, so it lives apart from the deterministic outputs
    _write(os.path.join(args.out, "timings.csv"),
           csv_text(("run", "wall_time"), [{"run": i, "wall_time": w} for i, _, w in results]))
    for i, s, _ in results:
        if args.per_run:
            _write_run(s, os.path.join(args.out, "runs"), stem=f"{i:03d}-")
        print(f"[{i}] {s.get('instance')} {s.get('algorithm')}: {s['status']}")
    return EXIT_OK if all(s["exit_code"] == EXIT_OK for _, s, _ in results) else \
        max(s["exit_code"] for _, s, _ in results)


def certify_point(instance: str, point: dict, params: Optional[dict] = None):
    """Residual breakdown at a supplied point; (y, z) default to (subgradient(h, F(x)), F(x))."""
    problem = build_instance(instance, params)
    if not isinstance(point, dict) or "x" not in point:
        raise InvalidInputError("point: expected a JSON object with key 'x'")
    unknown = set(point) - {"x", "y", "z", "eps"}
    if unknown:
        raise InvalidInputError(f"{sorted(unknown)[0]}: unknown key in point file")
    try:
        x = np.atleast_1d(np.asarray(point["x"], dtype=float))
        z = None if point.get("z") is None else np.atleast_1d(np.asarray(point["z"], dtype=float))
        y = None if point.get("y") is None else np.atleast_1d(np.asarray(point["y"], dtype=float))
    except (TypeError, ValueError):
        raise InvalidInputError("point: entries must be numeric") from None
    if x.shape != (problem.n,):
        raise InvalidInputError(f"x: expected {problem.n} entries")
    if (y is None) != (z is None):
        raise InvalidInputError("point: give both y and z or neither")
    if z is None:
        z = problem.inner(x)
        y = problem.h.subgradient(z)
    if y.shape != (problem.m,) or z.shape != (problem.m,):
        raise InvalidInputError(f"y, z: expected {problem.m} entries")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.all(np.isfinite(z))):
        raise InvalidInputError("point: entries must be finite")
    mode = "smooth" if problem.has_smooth_mapping else "dc"
    return residual(problem, StationarityTriple(x, y, z), mode=mode)


def cmd_certify(args) -> int:
    try:
        with open(args.point, encoding="utf-8") as fh:
            point = json.load(fh)
        params = json.loads(args.params) if args.params else None
        res = certify_point(args.instance, point, params)
        eps = args.eps if args.eps is not None else float(point.get("eps", 1e-6))
    except (OSError, json.JSONDecodeError, InvalidInputError, ConfigurationError,
            RegistryError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    body = res.to_dict()
    body.update(eps=eps, near_stationary=bool(res.total <= eps))
    sys.stdout.write(dumps_json(body))
    return EXIT_OK if res.total <= eps else EXIT_NONSTATIONARY


def cmd_list(args) -> int:
    items = list_instances()
    if args.json:
        sys.stdout.write(dumps_json(items))
        return EXIT_OK
    for d in items:
        algs = ",".join(d["algorithms"])
        extra = " [outer]" if d["family"] else ""
        print(f"{d['name']:<16} {algs:<24} {d['description']}{extra}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="compopt-cli", description="Composite optimization solvers.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one instance")
    s.add_argument("--config", help="INI or JSON run config")
    s.add_argument("--instance", help="instance name (overrides the config)")
    s.add_argument("--algorithm", choices=ALGORITHMS, help="algorithm (overrides the config)")
    s.add_argument("--out", default="out", help="output directory")
    s.add_argument("--verify", action="store_true", help="run sampled assumption checks first")
    s.add_argument("--seed", type=int, default=None, help="seed for sampled checks")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="run a suite of configurations")
    b.add_argument("--config", help="suite file; default runs every instance and algorithm")
    b.add_argument("--out", default="bench-out", help="output directory")
    b.add_argument("--jobs", type=int, default=1, help="parallel runs")
    b.add_argument("--seed", type=int, default=None, help="seed applied to every run")
    b.add_argument("--per-run", action="store_true", help="also write per-run logs")
    b.set_defaults(func=cmd_bench)

    c = sub.add_parser("certify", help="stationarity residual at a supplied point")
    c.add_argument("instance")
    c.add_argument("point", help="JSON with x and optional y, z, eps")
    c.add_argument("--eps", type=float, default=None, help="tolerance (default: file or 1e-6)")
    c.add_argument("--params", help="JSON parameter overrides")
    c.set_defaults(func=cmd_certify)

    ls = sub.add_parser("list", help="list shipped instances")
    ls.add_argument("--json", action="store_true")
    ls.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        print("error: jobs: must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
