"""Experiment configs, runners and result persistence.

A config file holds flat ``key = value`` lines.  Text after ``#`` is a
comment, and blank lines are ignored.  Lists are comma-separated, and an
empty value gives an empty list.  ``kind`` is required.  ``seed`` and
``output`` are optional.  Every other key must belong to the kind's schema.
"""
from __future__ import annotations

import csv
import io
import json
import math
import subprocess
import time
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np
from scipy import stats as sps

from . import coupling, meanfield, static
from .model import Erlang, Exponential, HyperExponential, SystemConfig, SystemState
from .simulator import SnapshotPlan, run_ctmc, run_workload, transient_ccdf


class ValidationError(ValueError):
    """Bad config; ``path`` names the offending field and ``line`` its line."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if path is not None:
            where.append(path)
        super().__init__(f"{': '.join(where)}: {message}" if where else message)
        self.path, self.line = path, line


class ExperimentIOError(OSError):
    pass


# --------------------------------------------------------------------------
# schemas
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Param:
    type: str          # "int", "float", "ints", "floats", "str", "strs"
    default: object
    lo: float | None = None
    hi: float | None = None
    lo_open: bool = False
    hi_open: bool = False
    choices: tuple = ()
    help: str = ""


_STABLE = dict(lo=0.0, hi=1.0, lo_open=True, hi_open=True)
LAWS = ("exponential", "erlang4", "hyperexp")

SCHEMAS: dict[str, dict[str, Param]] = {
    "table1": {
        "lambdas": Param("floats", (0.3, 0.9), **_STABLE),
        "ds": Param("ints", (2, 4), lo=1),
        "ns": Param("ints", (100, 500), lo=2),
        "snapshots": Param("int", 400, lo=2),
    },
    "cdf_compare": {
        "lambda": Param("float", 0.3, **_STABLE),
        "d": Param("int", 2, lo=2),
        "n": Param("int", 500, lo=2),
        "snapshots": Param("int", 400, lo=2),
    },
    "transient_ccdf": {
        "lambda": Param("float", 0.9, **_STABLE),
        "d": Param("int", 2, lo=2),
        "n": Param("int", 500, lo=2),
        "replicas": Param("int", 20, lo=1),
        "horizon": Param("float", 50.0, lo=0.0, lo_open=True),
        "dt": Param("float", 1.0, lo=0.0, lo_open=True),
        "levels": Param("int", 4, lo=2),
    },
    "insensitivity": {
        "lambda": Param("float", 0.8, **_STABLE),
        "d": Param("int", 2, lo=1),
        "n": Param("int", 500, lo=2),
        "snapshots": Param("int", 400, lo=2),
        "laws": Param("strs", LAWS, choices=LAWS),
    },
    "coupling_suite": {
        "lambda": Param("float", 0.7, **_STABLE),
        "d": Param("int", 2, lo=1),
        "n": Param("int", 50, lo=2),
        "events": Param("int", 100000, lo=1),
        "replicas": Param("int", 1, lo=1),
    },
    "tv_curve": {
        "lambda": Param("float", 0.7, **_STABLE),
        "d": Param("int", 2, lo=1),
        "ns": Param("ints", (50, 100, 200), lo=2),
        "times": Param("floats", (0, 1, 2, 3, 4, 6, 8, 10, 15, 20, 30), lo=0.0),
        "replicas": Param("int", 200, lo=1),
    },
    "makespan_suite": {
        "instances": Param("int", 200, lo=0),
        "n_max": Param("int", 60, lo=3),
        "lambdas": Param("floats", (0.5, 1.0, 2.0), lo=0.0, lo_open=True),
        "ds": Param("ints", (2, 3), lo=2),
    },
    "meanfield_sweep": {
        "lambdas": Param("floats", tuple(round(0.05 * i, 2) for i in range(1, 20)), **_STABLE),
        "ds": Param("ints", (1, 2, 3, 4, 5, 6), lo=1),
    },
}

KIND_DESCRIPTIONS = {
    "table1": "mean queue length: simulation at each n next to the mean-field value",
    "cdf_compare": "stationary queue-length cdf, simulation vs mean field",
    "transient_ccdf": "ccdf levels over time from empty, replicas vs ODE",
    "insensitivity": "queue-length cdf under non-exponential service laws",
    "coupling_suite": "dominance coupling from empty vs a warmed start",
    "tv_curve": "total-variation distance to stationarity over time, per n",
    "makespan_suite": "k-core bounds against the exact makespan on random instances",
    "meanfield_sweep": "mean-field mean queue length over a lambda grid, per d",
}


@dataclass
class ExperimentSpec:
    kind: str
    parameters: dict = field(default_factory=dict)
    seed: int = 0
    output_path: str = ""

    def __post_init__(self):
        if not self.output_path:
            self.output_path = f"{self.kind}.csv"


def _fmt(v) -> str:
    if isinstance(v, (list, tuple)):
        return ", ".join(_fmt(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def emit_default(kind: str) -> str:
    if kind not in SCHEMAS:
        raise ValidationError(f"unknown kind {kind!r}", path="kind")
    lines = [f"# {KIND_DESCRIPTIONS[kind]}", f"kind = {kind}", "seed = 0", f"output = {kind}.csv"]
    lines += [f"{k} = {_fmt(p.default)}" for k, p in SCHEMAS[kind].items()]
    return "\n".join(lines) + "\n"


def _scalar(text: str, typ: str, key: str, line):
    try:
        if typ == "int":
            return int(text)
        if typ == "float":
            v = float(text)
            if not math.isfinite(v):
                raise ValueError
            return v
        return text
    except ValueError:
        raise ValidationError(f"cannot read {text!r} as {typ}", path=key, line=line) from None


def _check_range(key: str, v, p: Param, kind: str, line):
    if p.choices and v not in p.choices:
        raise ValidationError(f"{v!r} is not one of {', '.join(p.choices)}", path=key, line=line)
    if p.lo is not None and (v < p.lo or (p.lo_open and v == p.lo)):
        raise ValidationError(f"value {v} below allowed range", path=key, line=line)
    if p.hi is not None and (v > p.hi or (p.hi_open and v == p.hi)):
        if p.hi == 1.0 and "lambda" in key:
            raise ValidationError(
                f"value {v} violates the stability condition lambda < 1", path=key, line=line)
        raise ValidationError(f"value {v} above allowed range", path=key, line=line)


def _coerce(key: str, raw: str, p: Param, kind: str, line):
    if p.type in ("ints", "floats", "strs"):
        items = [s.strip() for s in raw.split(",")] if raw.strip() else []
        if any(s == "" for s in items):
            raise ValidationError("empty list item", path=key, line=line)
        vals = tuple(_scalar(s, p.type[:-1] if p.type != "strs" else "str", key, line) for s in items)
        for v in vals:
            _check_range(key, v, p, kind, line)
        return vals
    v = _scalar(raw.strip(), p.type, key, line)
    _check_range(key, v, p, kind, line)
    return v


def validate_spec(text: str) -> ExperimentSpec:
    """Parse and check a config; errors carry the line number and key."""
    raw: dict[str, tuple[str, int]] = {}
    for no, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ValidationError("expected 'key = value'", line=no)
        key, value = (s.strip() for s in body.split("=", 1))
        if not key:
            raise ValidationError("missing key", line=no)
        if key in raw:
            raise ValidationError("duplicate key", path=key, line=no)
        raw[key] = (value, no)
    if "kind" not in raw:
        raise ValidationError("missing required key", path="kind")
    kind, kline = raw.pop("kind")
    if kind not in SCHEMAS:
        raise ValidationError(f"unknown kind {kind!r}; choose from {', '.join(SCHEMAS)}",
                              path="kind", line=kline)
    seed = 0
    if "seed" in raw:
        value, no = raw.pop("seed")
        seed = _scalar(value, "int", "seed", no)
        if not 0 <= seed < 2 ** 63:
            raise ValidationError("seed must be a nonnegative 63-bit integer", path="seed", line=no)
    output = raw.pop("output", (f"{kind}.csv", None))[0]
    schema = SCHEMAS[kind]
    params = {k: p.default for k, p in schema.items()}
    for key, (value, no) in raw.items():
        if key not in schema:
            raise ValidationError(f"unknown key for kind {kind}", path=key, line=no)
        params[key] = _coerce(key, value, schema[key], kind, no)
    return ExperimentSpec(kind, params, seed, output)


# --------------------------------------------------------------------------
# results
# --------------------------------------------------------------------------

@dataclass
class ResultTable:
    columns: dict[str, list]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ValueError("all columns must have equal length")

    @property
    def rows(self) -> int:
        return len(next(iter(self.columns.values()), []))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in zip(*self.columns.values()):
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        return buf.getvalue()

    def write(self, csv_path) -> tuple[Path, Path]:
        csv_path = Path(csv_path)
        meta_path = csv_path.with_suffix(".json")
        try:
            csv_path.parent.mkdir(parents=True, exist_ok=True)
            csv_path.write_text(self.to_csv())
            meta_path.write_text(json.dumps(self.metadata, indent=2, sort_keys=True, default=str) + "\n")
        except OSError as exc:
            raise ExperimentIOError(f"cannot write results to {csv_path}: {exc}") from exc
        return csv_path, meta_path


def artifact_version() -> str:
    try:
        version = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        version = "0+unknown"
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).parent, timeout=5)
        if rev.returncode == 0 and rev.stdout.strip():
            version += f"+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return version


# --------------------------------------------------------------------------
# runners
# --------------------------------------------------------------------------

def _seeds(seed: int, count: int) -> list[int]:
    ss = np.random.SeedSequence(seed).spawn(count)
    return [int(s.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1)) for s in ss]


def _table1(p, seed, threads):
    cols = {"row": [], "lambda": [], "d": [], "mean_q": [], "ci_halfwidth": []}
    cells = [(n, lam, d) for n in p["ns"] for lam in p["lambdas"] for d in p["ds"]]
    for (n, lam, d), s in zip(cells, _seeds(seed, len(cells))):
        st = run_ctmc(SystemConfig(n, d, lam, seed=s), SnapshotPlan.default(lam, p["snapshots"]))
        for k, v in zip(cols, (f"n={n}", lam, d, st.mean, st.mean_ci_halfwidth)):
            cols[k].append(v)
    for lam in p["lambdas"]:
        for d in p["ds"]:
            for k, v in zip(cols, ("mean-field", lam, d, meanfield.mean_queue_length(lam, d), 0.0)):
                cols[k].append(v)
    return cols


def _cdf_compare(p, seed, threads):
    lam, d, n = p["lambda"], p["d"], p["n"]
    st = run_ctmc(SystemConfig(n, d, lam, seed=seed), SnapshotPlan.default(lam, p["snapshots"]))
    mf = meanfield.stationary_cdf(meanfield.solve_fixed_point(lam, d))
    levels = max(st.empirical_cdf.size, mf.size)
    emp = st.cdf(levels)
    ref = np.ones(levels)
    ref[: mf.size] = mf
    return {"k": list(range(levels)), "simulated_cdf": emp.tolist(), "meanfield_cdf": ref.tolist(),
            "abs_diff": np.abs(emp - ref).tolist()}


def _transient(p, seed, threads):
    lam, d, n, levels = p["lambda"], p["d"], p["n"], p["levels"]
    times = np.arange(0.0, p["horizon"] + 1e-9, p["dt"])
    sim = transient_ccdf(SystemConfig(n, d, lam, seed=seed), times, p["replicas"], levels, threads)
    traj = meanfield.integrate_ode(meanfield.CcdfState.empty(2), float(times[-1]), 0.01, lam, d)
    cols = {"t": [], "k": [], "simulated": [], "ode": []}
    for i, t in enumerate(times):
        y = traj.at(t)
        for k in range(1, levels):
            for c, v in zip(cols, (float(t), k, float(sim[i, k]), float(y[k]) if k < y.size else 0.0)):
                cols[c].append(v)
    return cols


def _law(name: str):
    return {"exponential": Exponential(), "erlang4": Erlang(4),
            "hyperexp": HyperExponential.unit_mean(2.0, 0.5)}[name]


def _insensitivity(p, seed, threads):
    lam, d, n = p["lambda"], p["d"], p["n"]
    plan = SnapshotPlan.default(lam, p["snapshots"])
    runs = {}
    for name, s in zip(p["laws"], _seeds(seed, len(p["laws"]))):
        runs[name] = run_workload(SystemConfig(n, d, lam, service_law=_law(name), seed=s), plan)
    ref = runs.get("exponential")
    levels = max((r.empirical_cdf.size for r in runs.values()), default=0)
    cols = {"law": [], "k": [], "cdf": [], "mean": [], "ks_vs_exponential": []}
    for name, r in runs.items():
        ks = sps.ks_2samp(r.samples, ref.samples).statistic if ref is not None else math.nan
        for k in range(levels):
            for c, v in zip(cols, (name, k, float(r.cdf(levels)[k]), r.mean, float(ks))):
                cols[c].append(v)
    return cols


def _coupling(p, seed, threads):
    lam, d, n = p["lambda"], p["d"], p["n"]
    cols = {"replica": [], "events": [], "arrivals": [], "w_initial": [], "w_final": [],
            "lower_only": [], "upper_only": [], "violations": []}
    for r, s in enumerate(_seeds(seed, p["replicas"])):
        cfg = SystemConfig(n, d, lam, seed=s)
        warm = 50.0 / (1.0 - lam)
        upper = run_ctmc(cfg, SnapshotPlan(warm, 1, 0.0)).final_state()
        tr = coupling.run_coupled(cfg, math.inf, SystemState(n), upper,
                                  rng=np.random.default_rng(s + 1), max_events=p["events"])
        vals = (r, tr.events, tr.arrivals, float(tr.w_values[0]), float(tr.w_values[-1]),
                tr.increases, tr.decreases, 0)
        for c, v in zip(cols, vals):
            cols[c].append(v)
    return cols


def _tv(p, seed, threads):
    cols = {"n": [], "t": [], "tv": []}
    for n, s in zip(p["ns"], _seeds(seed, len(p["ns"]))):
        cfg = SystemConfig(n, p["d"], p["lambda"], seed=s)
        for t, tv in coupling.tv_convergence_curve(cfg, sorted(p["times"]), p["replicas"], threads=threads):
            cols["n"].append(n)
            cols["t"].append(t)
            cols["tv"].append(tv)
    return cols


def _makespan(p, seed, threads):
    cols = {"instance": [], "n": [], "m": [], "d": [], "lambda": [], "k_star": [], "lower": [],
            "exact": [], "upper": []}
    if not p["lambdas"] or not p["ds"]:
        return cols
    rng = np.random.default_rng(seed)
    for i in range(p["instances"]):
        d = p["ds"][i % len(p["ds"])]
        lam = p["lambdas"][(i // len(p["ds"])) % len(p["lambdas"])]
        n = int(rng.integers(max(d, 3), p["n_max"] + 1))
        h = static.gen_hypergraph(n, lam, d, rng)
        r = static.makespan_exact(h, 1e-7) if h.m else static.makespan_bounds(h)
        exact = r.exact if r.exact is not None else 0.0
        for c, v in zip(cols, (i, n, h.m, d, lam, r.k_star, r.lower, exact, r.upper)):
            cols[c].append(v)
    return cols


def _sweep(p, seed, threads):
    cols = {"lambda": [], "d": [], "mean_q": [], "heavy_traffic_bound": [], "bound_applies": []}
    for lam in p["lambdas"]:
        for d in p["ds"]:
            if d >= 2:
                bound, ok = meanfield.heavy_traffic_bound(lam, d)
            else:
                bound, ok = math.nan, False
            for c, v in zip(cols, (lam, d, meanfield.mean_queue_length(lam, d), bound, int(ok))):
                cols[c].append(v)
    return cols


RUNNERS = {"table1": _table1, "cdf_compare": _cdf_compare, "transient_ccdf": _transient,
           "insensitivity": _insensitivity, "coupling_suite": _coupling, "tv_curve": _tv,
           "makespan_suite": _makespan, "meanfield_sweep": _sweep}


def run_experiment(spec: ExperimentSpec, out_dir=".", threads: int = 1, write: bool = True) -> ResultTable:
    """Run ``spec`` and (by default) write ``<out_dir>/<output>`` plus a JSON sidecar."""
    if spec.kind not in RUNNERS:
        raise ValidationError(f"unknown kind {spec.kind!r}", path="kind")
    started = time.time()
    cols = RUNNERS[spec.kind](spec.parameters, spec.seed, threads)
    meta = {
        "kind": spec.kind,
        "seed": spec.seed,
        "parameters": {k: list(v) if isinstance(v, tuple) else v for k, v in spec.parameters.items()},
        "columns": list(cols),
        "version": artifact_version(),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(started)),
        "elapsed_seconds": round(time.time() - started, 3),
    }
    table = ResultTable(cols, meta)
    if write:
        table.write(Path(out_dir) / spec.output_path)
    return table
