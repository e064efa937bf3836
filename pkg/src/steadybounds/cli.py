"""Batch driver: ``steadybounds {certify,ising-map,g2,trajectories,sweep}``.

Each run reads one TOML config (``schema = 1``) and writes a CSV whose
'#' header records the toolkit version, command, parameters and seed.
Exit codes: 0 success, 1 configuration or solver error, 2 a bound was
violated.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import logging
import math
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar

from . import __version__
from .analytic_cavity import epsilon_c
from .bounds import BoundReport, certify
from .correlations import correlation_time_quadrature, correlation_time_resolvent
from .errors import ConfigError, SteadyBoundsError
from .liouvillian import adequate_cavity, spectral_gap, steady_state
from .operators import (LindbladModel, build_infinite_range_ising, build_ising,
                        build_parametric_cavity, build_thermal_cavity, expect, thermal_dim)
from .sensitivity import dss_domega
from .trajectories import count_statistics, empirical_g2, run_ensemble, write_records

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("steadybounds")

EXIT_OK, EXIT_ERROR, EXIT_VIOLATION = 0, 1, 2
SCHEMA = 1

MODEL_KEYS = {
    "parametric_cavity": {"omega", "epsilon", "gamma", "dim"},
    "thermal_cavity": {"gamma", "nbar", "dim", "omega"},
    "ising": {"n", "omega", "hx", "J", "gamma"},
    "infinite_range_ising": {"n", "omega", "hx", "Jbar", "gamma"},
}
REQUIRED_KEYS = {
    "parametric_cavity": {"omega", "epsilon", "gamma"},
    "thermal_cavity": {"gamma", "nbar"},
    "ising": {"n", "omega", "hx", "J", "gamma"},
    "infinite_range_ising": {"n", "omega", "hx", "Jbar", "gamma"},
}
SWEEP_OUTPUTS = ("g0_mean", "d_g0", "tau_c", "tau_c_quadrature", "gap", "bounds")


# ---------------------------------------------------------------- config

@dataclass
class Config:
    path: Path
    text: str
    data: dict

    def line_of(self, section: str | None, key: str | None = None) -> int | None:
        """Line (1-based) of ``key`` inside ``[section]``, or of the header."""
        current = None
        for i, raw in enumerate(self.text.splitlines(), 1):
            line = raw.strip()
            m = re.match(r"^\[\s*([^\]]+?)\s*\]", line)
            if m:
                current = m.group(1)
                if key is None and current == section:
                    return i
                continue
            if key is not None and current == section and re.match(rf"^{re.escape(key)}\s*=", line):
                return i
        return None

    def error(self, message: str, section: str | None = None, key: str | None = None):
        return ConfigError(f"{self.path}: {message}", line=self.line_of(section, key))

    def section(self, name: str, required: bool = False) -> dict:
        sec = self.data.get(name)
        if sec is None:
            if required:
                raise ConfigError(f"{self.path}: missing [{name}] section")
            return {}
        if not isinstance(sec, dict):
            raise self.error(f"'{name}' must be a table", None, name)
        return sec


def load_config(path) -> Config:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        if line is None:
            m = re.search(r"line (\d+)", str(exc))
            line = int(m.group(1)) if m else None
        raise ConfigError(f"{path}: {getattr(exc, 'msg', exc)}", line=line) from exc
    cfg = Config(path, text, data)
    schema = data.get("schema")
    if schema != SCHEMA:
        raise cfg.error(f"unsupported schema {schema!r}; expected schema = {SCHEMA}", None, "schema")
    return cfg


def _number(cfg: Config, section: str, key: str, value, integer: bool = False):
    ok = isinstance(value, int if integer else (int, float)) and not isinstance(value, bool)
    if not ok or not math.isfinite(value):
        kind = "an integer" if integer else "a finite number"
        raise cfg.error(f"'{key}' must be {kind}, got {value!r}", section, key)
    return value


def parse_grid(cfg: Config, section: str, key: str, value, scale: float = 1.0) -> np.ndarray:
    """A grid is a list of numbers or a table {start, stop, num[, scale]}."""
    if isinstance(value, dict):
        unknown = set(value) - {"start", "stop", "num", "scale"}
        if unknown:
            raise cfg.error(f"unknown grid keys {sorted(unknown)} for '{key}'", section, key)
        try:
            start = _number(cfg, section, key, value["start"])
            stop = _number(cfg, section, key, value["stop"])
            num = _number(cfg, section, key, value["num"], integer=True)
        except KeyError as exc:
            raise cfg.error(f"grid '{key}' needs start, stop and num", section, key) from exc
        if num < 1:
            raise cfg.error(f"grid '{key}' must have num >= 1", section, key)
        grid = np.linspace(start, stop, num) * scale
    elif isinstance(value, list):
        grid = np.array([_number(cfg, section, key, v) for v in value], dtype=float) * scale
    else:
        grid = np.array([_number(cfg, section, key, value)], dtype=float) * scale
    if grid.size == 0:
        raise cfg.error(f"grid '{key}' is empty", section, key)
    if grid.size > 1:
        steps = np.diff(grid)
        if not (np.all(steps > 0) or np.all(steps < 0)):
            raise cfg.error(f"grid '{key}' must be strictly monotone", section, key)
    return grid


def model_params(cfg: Config) -> dict:
    sec = cfg.section("model", required=True)
    kind = sec.get("kind")
    if kind not in MODEL_KEYS:
        raise cfg.error(f"unknown model kind {kind!r}; choose from {sorted(MODEL_KEYS)}",
                        "model", "kind")
    params = {k: v for k, v in sec.items() if k != "kind"}
    unknown = set(params) - MODEL_KEYS[kind]
    if unknown:
        key = sorted(unknown)[0]
        raise cfg.error(f"unknown key '{key}' for model kind {kind}", "model", key)
    missing = REQUIRED_KEYS[kind] - set(params)
    if missing:
        raise cfg.error(f"model kind {kind} needs {sorted(missing)}", "model")
    for k, v in params.items():
        if k == "dim" and v == "auto":
            continue
        if k in ("hx", "J") and isinstance(v, list):
            continue
        _number(cfg, "model", k, v, integer=k in ("n", "dim"))
    return {"kind": kind, **params}


def build_model(p: dict) -> LindbladModel:
    kind = p["kind"]
    if kind == "parametric_cavity":
        dim = p.get("dim", "auto")
        if dim == "auto":
            return adequate_cavity(p["omega"], p["epsilon"], p["gamma"])
        return build_parametric_cavity(p["omega"], p["epsilon"], p["gamma"], int(dim))
    if kind == "thermal_cavity":
        dim = p.get("dim", "auto")
        dim = thermal_dim(p["nbar"]) if dim == "auto" else int(dim)
        return build_thermal_cavity(p["gamma"], p["nbar"], dim, p.get("omega", 1.0))
    if kind == "ising":
        return build_ising(int(p["n"]), p["omega"], p["hx"], p["J"], p["gamma"])
    if kind == "infinite_range_ising":
        return build_infinite_range_ising(int(p["n"]), p["omega"], p["hx"], p["Jbar"], p["gamma"])
    raise ValueError(kind)


def sweep_points(cfg: Config, base: dict) -> tuple[list[str], list[dict]]:
    """Cartesian product of the [sweep] grids over the base model parameters."""
    sec = cfg.section("sweep")
    names, grids = [], []
    for key, value in sec.items():
        if key not in MODEL_KEYS[base["kind"]] or key in ("J", "dim", "n"):
            raise cfg.error(f"cannot sweep '{key}' for model kind {base['kind']}", "sweep", key)
        scale = 1.0
        if isinstance(value, dict) and "scale" in value:
            if value["scale"] != "epsilon_c" or base["kind"] != "parametric_cavity":
                raise cfg.error("the only grid scale is 'epsilon_c' (parametric cavity)",
                                "sweep", key)
            scale = epsilon_c(base["omega"], base["gamma"])
        names.append(key)
        grids.append(parse_grid(cfg, "sweep", key, value, scale))
    if not names:
        return [], [dict(base)]
    mesh = np.meshgrid(*grids, indexing="ij")
    points = []
    for vals in zip(*(m.ravel() for m in mesh)):
        p = dict(base)
        p.update({n: float(v) for n, v in zip(names, vals)})
        points.append(p)
    return names, points


# ---------------------------------------------------------------- output

def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_table(path, header: list[str], rows: list[list], meta: dict, timestamp: bool):
    buf = io.StringIO()
    buf.write(f"# steadybounds {__version__}\n")
    for k, v in meta.items():
        buf.write(f"# {k} = {v}\n")
    if timestamp:
        buf.write(f"# generated = {_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    text = buf.getvalue()
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)
    return text


def _model_meta(p: dict) -> str:
    return " ".join(f"{k}={fmt(v)}" for k, v in sorted(p.items()))


def pool_map(func, tasks: list, threads: int) -> list:
    """Ordered map over tasks, in-process when threads == 1."""
    if threads <= 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, tasks))


# ---------------------------------------------------------------- workers

def _certify_task(task):
    p, opts = task
    try:
        model = build_model(p)
        o = model.g0 / opts["obs_scale"](p) if opts.get("obs_scale") else None
        rep = certify(model, O=o, g0max_mode=opts.get("g0max_mode"),
                      gap_modes=opts.get("gap_modes", 6))
        return rep, ""
    except SteadyBoundsError as exc:
        return None, f"{type(exc).__name__}: {exc}"


def _per_site(p):
    return float(p["n"])


def _sweep_task(task):
    p, outputs, opts = task
    try:
        model = build_model(p)
        rho = steady_state(model).rho
        row = {}
        if "g0_mean" in outputs:
            row["g0_mean"] = float(expect(model.g0, rho).real)
        if "d_g0" in outputs:
            row["d_g0"] = dss_domega(model).d_obs["g0"]
        if "tau_c" in outputs:
            row["tau_c"] = correlation_time_resolvent(model).tau_c
        gap = None
        if "gap" in outputs or "tau_c_quadrature" in outputs:
            gap = spectral_gap(model, k=opts.get("gap_modes", 6))
            if "gap" in outputs:
                row["gap"] = gap
        if "tau_c_quadrature" in outputs:
            q = correlation_time_quadrature(model, steps=opts.get("steps", 2000), gap=gap)
            row["tau_c_quadrature"] = q.tau_c
            row["tau_c_truncation"] = q.truncation_estimate
        if "bounds" in outputs:
            rep = certify(model, g0max_mode=opts.get("g0max_mode"),
                          gap_modes=opts.get("gap_modes", 6))
            row.update({k: getattr(rep, k) for k in BoundReport.columns()})
        return row, ""
    except SteadyBoundsError as exc:
        return None, f"{type(exc).__name__}: {exc}"


def _m_derivative(p):
    model = build_model(p)
    return dss_domega(model).d_obs["g0"] / p["n"]


def _scan_task(task):
    """Locate omega_c for one n: maximum of |d<m>/d omega| over a grid, then refined."""
    p, grid = task
    vals = np.array([abs(_m_derivative({**p, "omega": float(w)})) for w in grid])
    i = int(np.argmax(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(lambda w: -abs(_m_derivative({**p, "omega": float(w)})),
                          bounds=(lo, hi), method="bounded", options={"xatol": 1e-4})
    w_c = float(res.x) if -res.fun >= vals[i] else float(grid[i])
    model = build_model({**p, "omega": w_c})
    rho = steady_state(model).rho
    m = model.g0 / p["n"]
    m_ss = float(expect(m, rho).real)
    var_m = float(expect(m @ m, rho).real) - m_ss**2
    d_m = dss_domega(model).d_obs["g0"] / p["n"]
    from .bounds import correlation_bound, relaxation_bound
    cb = correlation_bound(model, m_ss * p["n"], d_m * p["n"])
    rb = relaxation_bound(model, m, "operator_norm", d_obs=d_m)
    return [p["n"], w_c, abs(d_m), m_ss, var_m, cb.value, rb.value]


# ---------------------------------------------------------------- commands

@dataclass
class RunContext:
    out: str | None
    threads: int
    seed: int
    timestamp: bool
    meta: dict = field(default_factory=dict)


def _options(cfg: Config, name: str) -> dict:
    sec = cfg.section(name)
    opts = {}
    if "g0max_mode" in sec:
        mode = sec["g0max_mode"]
        if mode not in ("auto", "steady_state", "operator_norm", "trajectory"):
            raise cfg.error(f"unknown g0max_mode {mode!r}", name, "g0max_mode")
        opts["g0max_mode"] = None if mode == "auto" else mode
    if "gap_modes" in sec:
        opts["gap_modes"] = _number(cfg, name, "gap_modes", sec["gap_modes"], integer=True)
    if "steps" in sec:
        opts["steps"] = _number(cfg, name, "steps", sec["steps"], integer=True)
    return opts


def run_certify(cfg: Config, ctx: RunContext) -> int:
    base = model_params(cfg)
    names, points = sweep_points(cfg, base)
    opts = _options(cfg, "certify")
    results = pool_map(_certify_task, [(p, opts) for p in points], ctx.threads)
    header = names + BoundReport.columns() + ["error"]
    rows, violated, failed = [], False, False
    for p, (rep, err) in zip(points, results):
        prefix = [p[n] for n in names]
        if rep is None:
            failed = True
            rows.append(prefix + [math.nan] * len(BoundReport.columns()) + [err])
            log.error("point %s: %s", _model_meta({n: p[n] for n in names}), err)
            continue
        violated |= not rep.satisfied
        rows.append(prefix + [getattr(rep, c) for c in BoundReport.columns()] + [""])
    write_table(ctx.out, header, rows, {"command": "certify", "model": _model_meta(base),
                                        **ctx.meta}, ctx.timestamp)
    if violated:
        log.error("at least one bound is violated")
        return EXIT_VIOLATION
    return EXIT_ERROR if failed else EXIT_OK


def run_sweep(cfg: Config, ctx: RunContext) -> int:
    base = model_params(cfg)
    names, points = sweep_points(cfg, base)
    sec = cfg.section("outputs")
    outputs = sec.get("values", ["g0_mean", "d_g0", "tau_c"])
    if not isinstance(outputs, list) or not set(outputs) <= set(SWEEP_OUTPUTS):
        raise cfg.error(f"outputs.values must be a subset of {list(SWEEP_OUTPUTS)}",
                        "outputs", "values")
    opts = _options(cfg, "outputs")
    results = pool_map(_sweep_task, [(p, outputs, opts) for p in points], ctx.threads)
    cols = []
    for row, _ in results:
        if row:
            cols = list(row)
            break
    rows, failed, violated = [], False, False
    for p, (row, err) in zip(points, results):
        if row is None:
            failed = True
            rows.append([p[n] for n in names] + [math.nan] * len(cols) + [err])
            continue
        if "bounds" in outputs:
            violated |= not (row["tau_ss_satisfied"] and row["tau_c_satisfied"])
        rows.append([p[n] for n in names] + [row[c] for c in cols] + [""])
    write_table(ctx.out, names + cols + ["error"], rows,
                {"command": "sweep", "model": _model_meta(base), **ctx.meta}, ctx.timestamp)
    if violated:
        return EXIT_VIOLATION
    return EXIT_ERROR if failed else EXIT_OK


def run_g2(cfg: Config, ctx: RunContext) -> int:
    base = model_params(cfg)
    sec = cfg.section("g2")
    model = build_model(base)
    steps = _number(cfg, "g2", "steps", sec.get("steps", 2000), integer=True)
    gap = spectral_gap(model)
    tau_max = _number(cfg, "g2", "tau_max", sec.get("tau_max", 20.0 / gap))
    res = correlation_time_resolvent(model, tau_max=tau_max, steps=steps)
    quad = correlation_time_quadrature(model, tau_max=tau_max, steps=steps, gap=gap)
    rows = list(zip(res.tau_grid, res.g2_values))
    meta = {"command": "g2", "model": _model_meta(base),
            "tau_c_resolvent": fmt(res.tau_c), "tau_c_quadrature": fmt(quad.tau_c),
            "truncation_estimate": fmt(quad.truncation_estimate),
            "click_rate": fmt(res.click_rate), **ctx.meta}
    write_table(ctx.out, ["tau", "g2"], rows, meta, ctx.timestamp)
    return EXIT_OK


def run_trajectories(cfg: Config, ctx: RunContext) -> int:
    base = model_params(cfg)
    sec = cfg.section("trajectories", required=True)
    model = build_model(base)
    n = _number(cfg, "trajectories", "n", sec.get("n", 100), integer=True)
    duration = _number(cfg, "trajectories", "duration", sec.get("duration"))
    window = _number(cfg, "trajectories", "window", sec.get("window", duration / 10))
    records = run_ensemble(model, n, duration, ctx.seed, threads=ctx.threads)
    stats = count_statistics(records, window, channels=model.counting)
    meta = {"command": "trajectories", "model": _model_meta(base), **ctx.meta,
            "mean_rate": fmt(stats.mean_rate), "variance_rate": fmt(stats.variance_rate),
            "fano": fmt(stats.fano),
            "mean_rate_se": fmt(stats.standard_errors["mean_rate"]),
            "variance_rate_se": fmt(stats.standard_errors["variance_rate"])}
    if "bin_width" in sec:
        bw = _number(cfg, "trajectories", "bin_width", sec["bin_width"])
        tmax = _number(cfg, "trajectories", "tau_max", sec.get("tau_max", 20 * bw))
        g2 = empirical_g2(records, bw, tmax, channels=model.counting, seed=ctx.seed)
        meta["g2_first_bin"] = fmt(g2.g2_values[0])
        meta["tau_c_histogram"] = fmt(g2.tau_c)
    if ctx.timestamp:
        meta["generated"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    if ctx.out is None or ctx.out == "-":
        buf = io.StringIO()
        for k, v in meta.items():
            buf.write(f"# {k} = {v}\n")
        sys.stdout.write(buf.getvalue())
    else:
        write_records(records, ctx.out, {"toolkit": f"steadybounds {__version__}", **meta})
    return EXIT_OK


def run_ising_map(cfg: Config, ctx: RunContext) -> int:
    base = model_params(cfg)
    if base["kind"] != "infinite_range_ising":
        raise cfg.error("ising-map needs model kind infinite_range_ising", "model", "kind")
    sec = cfg.section("ising_map", required=True)
    for key in ("omega", "hx"):
        if key not in sec:
            raise cfg.error(f"[ising_map] needs an '{key}' grid", "ising_map")
    omegas = parse_grid(cfg, "ising_map", "omega", sec["omega"])
    hxs = parse_grid(cfg, "ising_map", "hx", sec["hx"])
    opts = _options(cfg, "ising_map")
    opts["obs_scale"] = _per_site
    opts.setdefault("g0max_mode", "operator_norm")
    points = [{**base, "omega": float(w), "hx": float(h)} for w in omegas for h in hxs]
    results = pool_map(_certify_task, [(p, opts) for p in points], ctx.threads)
    header = ["omega", "hx", "tau_c_bound", "tau_ss_bound", "d_m_domega", "m_ss", "var_m",
              "tau_c_measured", "tau_ss_measured", "tau_c_satisfied", "tau_ss_satisfied", "error"]
    rows, violated, failed = [], False, False
    for p, (rep, err) in zip(points, results):
        if rep is None:
            failed = True
            rows.append([p["omega"], p["hx"]] + [math.nan] * 9 + [err])
            continue
        n = p["n"]
        violated |= not rep.satisfied
        rows.append([p["omega"], p["hx"], rep.tau_c_bound, rep.tau_ss_bound, rep.d_obs,
                     rep.g0_mean / n, rep.obs_variance, rep.tau_c_measured,
                     rep.tau_ss_measured, rep.tau_c_satisfied, rep.tau_ss_satisfied, err])
    write_table(ctx.out, header, rows, {"command": "ising-map", "model": _model_meta(base),
                                        **ctx.meta}, ctx.timestamp)
    if "n_scan" in sec:
        ns = sec["n_scan"]
        if not isinstance(ns, list) or not all(isinstance(v, int) and v >= 1 for v in ns):
            raise cfg.error("n_scan must be a list of positive integers", "ising_map", "n_scan")
        scan_grid = parse_grid(cfg, "ising_map", "scan_omega",
                               sec.get("scan_omega", {"start": -0.3, "stop": 0.3, "num": 13}))
        scan_hx = _number(cfg, "ising_map", "scan_hx", sec.get("scan_hx", base["hx"]))
        tasks = [({**base, "n": n, "hx": scan_hx}, scan_grid) for n in ns]
        scan = pool_map(_scan_task, tasks, ctx.threads)
        out = None if ctx.out in (None, "-") else _suffixed(ctx.out, "_nscan")
        write_table(out, ["n", "omega_c", "abs_d_m_domega", "m_ss", "var_m", "tau_c_bound",
                          "tau_ss_bound"], scan,
                    {"command": "ising-map n-scan", "model": _model_meta(base), **ctx.meta},
                    ctx.timestamp)
    if violated:
        return EXIT_VIOLATION
    return EXIT_ERROR if failed else EXIT_OK


def _suffixed(path: str, suffix: str) -> str:
    p = Path(path)
    return str(p.with_name(p.stem + suffix + p.suffix))


COMMANDS = {
    "certify": run_certify,
    "ising-map": run_ising_map,
    "g2": run_g2,
    "trajectories": run_trajectories,
    "sweep": run_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="steadybounds", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"steadybounds {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, metavar="PATH")
        sp.add_argument("--out", default=None, metavar="PATH", help="output CSV ('-' for stdout)")
        sp.add_argument("--threads", type=int, default=os.cpu_count() or 1, metavar="N")
        sp.add_argument("--seed", type=int, default=None, metavar="U64")
        sp.add_argument("--no-timestamp", action="store_true")
        sp.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        cfg = load_config(args.config)
        seed = args.seed if args.seed is not None else cfg.data.get("seed", 0)
        if not isinstance(seed, int) or not 0 <= seed < 2**64:
            raise cfg.error("seed must be an unsigned 64-bit integer", None, "seed")
        ctx = RunContext(args.out, max(1, args.threads), seed, not args.no_timestamp,
                         {"seed": seed})
        return COMMANDS[args.command](cfg, ctx)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except SteadyBoundsError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
