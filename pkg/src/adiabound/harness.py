"""Experiment configuration, parameter sweeps, decay fits and the command line."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import hamiltonians as hm
from . import schedules as sch
from .hamiltonians import HamiltonianError, InterpolatingHamiltonian, NumericalError
from .metrics import (BoundInputError, BoundInputs, bound_summary, corollary_exponential, error_report,
                      implied_q, theorem1_error_bound, theorem1_time)
from .propagator import evolve, evolve_adiabatic
from .schedules import ScheduleError
from .spectral import SpectralError, gap_profile, track
from .superadiabatic import ExpansionError, a_bound, boundary_vanishing, expand

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
MACHINE_FLOOR = 1e-12
FLOOR_MARGIN = 10.0
SWEEP_VARIABLES = ("N", "T", "q", "n")
BUILTINS = ("grover", "x-to-z", "random-2local")
MAX_N = {"grover": 8, "random-2local": 6, "x-to-z": 8}


class ConfigError(ValueError):
    pass


CONFIG_ERRORS = (ConfigError, ScheduleError, HamiltonianError, BoundInputError, json.JSONDecodeError)
NUMERICAL_ERRORS = (NumericalError, SpectralError, ExpansionError, FloatingPointError, np.linalg.LinAlgError)


# -- configuration ------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    """One experiment, reproducible from this record alone.

    ``hamiltonian`` is either {"builtin": name, "n": .., "m": .., "seed": ..,
    "coupling": ..} or {"spec": <LocalHamiltonianSpec JSON or path>}.
    ``schedule`` is {"family": .., "Nb": .., "gamma": ..}; during an N sweep
    Nb follows N (plus ``nb_offset``).  ``sweep`` is {"variable": one of N,
    T, q, n, "values": [...]} or a range {"start", "stop", "num",
    "spacing": "linear" | "log"}.  Non-swept parameters come from N, q, T.
    """

    hamiltonian: dict = field(default_factory=lambda: {"builtin": "x-to-z", "n": 2})
    schedule: dict = field(default_factory=lambda: {"family": "smooth_poly", "Nb": 3})
    sweep: dict | None = None
    N: int | None = None
    q: float = 2.0
    T: float | None = None
    tol: float = 1e-8
    frame: str = "adiabatic"
    seed: int = 0
    output: str = "results"
    workers: int = 1
    nb_offset: int = 0
    opensys: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        h = self.hamiltonian
        if not isinstance(h, dict) or not ("builtin" in h or "spec" in h):
            raise ConfigError("hamiltonian needs a 'builtin' name or a 'spec'")
        if "builtin" in h and h["builtin"] not in BUILTINS:
            raise ConfigError(f"unknown builtin {h['builtin']!r}; choose from {BUILTINS}")
        if "family" not in self.schedule:
            raise ConfigError("schedule needs a 'family'")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.frame not in ("adiabatic", "lab"):
            raise ConfigError("frame must be 'adiabatic' or 'lab'")
        if not self.q > 0:
            raise ConfigError("q must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.sweep is not None:
            var = self.sweep.get("variable")
            if var not in SWEEP_VARIABLES:
                raise ConfigError(f"sweep variable must be one of {SWEEP_VARIABLES}")
            if len(self.sweep_values()) == 0:
                raise ConfigError("sweep range is empty")

    def sweep_values(self) -> list:
        sw = self.sweep or {}
        if "values" in sw:
            vals = list(sw["values"])
        elif {"start", "stop", "num"} <= sw.keys():
            num = int(sw["num"])
            if num < 1:
                return []
            if sw.get("spacing", "linear") == "log":
                if sw["start"] <= 0 or sw["stop"] <= 0:
                    raise ConfigError("log spacing needs positive endpoints")
                vals = list(np.geomspace(sw["start"], sw["stop"], num))
            else:
                vals = list(np.linspace(sw["start"], sw["stop"], num))
        else:
            raise ConfigError("sweep needs 'values' or 'start'/'stop'/'num'")
        if sw.get("variable") in ("N", "n"):
            if any(float(v) != int(v) for v in vals):
                raise ConfigError(f"{sw['variable']} values must be integers")
            vals = [int(v) for v in vals]
        else:
            vals = [float(v) for v in vals]
        return vals

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = cls.__dataclass_fields__.keys()
        extra = set(d) - set(known)
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        return cls.from_dict(json.loads(text))

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def make_hamiltonian(cfg: ExperimentConfig, Nb: int | None = None, n: int | None = None) -> InterpolatingHamiltonian:
    sc = dict(cfg.schedule)
    family = sc.pop("family")
    if Nb is not None and family == "smooth_poly":
        sc["Nb"] = Nb
    schedule = sch.make_schedule(family, **sc)
    h = cfg.hamiltonian
    if "spec" in h:
        spec = h["spec"]
        if isinstance(spec, str) and not spec.lstrip().startswith("{"):
            spec = Path(spec).read_text()
        return hm.build(hm.LocalHamiltonianSpec.from_json(spec))
    name = h["builtin"]
    n = int(h.get("n", 2)) if n is None else int(n)
    J = float(h.get("J", 1.0))
    if not 1 <= n <= MAX_N[name]:
        raise ConfigError(f"{name} supports 1 <= n <= {MAX_N[name]}")
    if name == "grover":
        return hm.grover(n, int(h.get("m", 0)), schedule, J)
    if name == "x-to-z":
        return hm.x_to_z(n, schedule, float(h.get("coupling", 0.5)), J)
    seed = int(h.get("seed", cfg.seed))
    return hm.build(hm.random_2local_spec(n, seed, schedule, J))


# -- single runs ----------------------------------------------------------------------------


def instance_inputs(ham: InterpolatingHamiltonian, N: int, q: float, points: int = 513) -> BoundInputs:
    grid = np.linspace(0, 1, points)
    d = gap_profile(track(ham, grid), ham.J).d
    xi = hm.norm_profile(ham, grid).xi
    return BoundInputs(N=N, q=q, gamma=ham.gamma, xi=xi, d=d, J=ham.J)


def run_point(cfg: ExperimentConfig, N: int, q: float, T: float | None, n: int | None = None) -> dict:
    """Simulate one point; T = None means the theorem time for (N, q)."""
    Nb = N + cfg.nb_offset if (cfg.sweep or {}).get("variable") == "N" else None
    ham = make_hamiltonian(cfg, Nb=Nb, n=n)
    inp = instance_inputs(ham, N, q)
    from_theorem = T is None
    if from_theorem:
        T = theorem1_time(inp)
        q_eff, bound = q, theorem1_error_bound(inp)
    else:
        # the theorem bound applies only where the implied dilation exceeds 1
        q_eff = implied_q(T, inp)
        bound = theorem1_error_bound(BoundInputs(N=N, q=q_eff, gamma=inp.gamma, xi=inp.xi, d=inp.d, J=inp.J)) \
            if q_eff > 1 and N >= 1 else math.nan
    c, env = corollary_exponential(T, inp)
    row = {"N": N, "q": q_eff, "n": n if n is not None else cfg.hamiltonian.get("n"), "T": T, "JT": T * ham.J,
           "epsilon": 1.0 / (ham.J * T), "xi": inp.xi, "d": inp.d, "gamma": inp.gamma,
           "delta_bound": bound,
           "bound_applies": bool(from_theorem), "c": c, "envelope": env}
    if cfg.frame == "adiabatic":
        series = expand(ham, max(N - 1, 0))
        res = evolve_adiabatic(ham, T, series, tol=cfg.tol)
        rep = error_report(res, series=series)
    else:
        res = evolve(ham, T, tol=cfg.tol)
        rep = error_report(res)
    row.update(rep.to_dict())
    row["delta_measured"] = row.pop("delta")
    row.pop("theta")
    row["delta_floor"] = max(res.floor, MACHINE_FLOOR if cfg.frame == "lab" else 0.0)
    row["steps"] = res.step_stats.accepted
    row["rejected"] = res.step_stats.rejected
    row["unitarity_defect"] = res.step_stats.max_unitarity_defect
    return row


def _point_args(cfg: ExperimentConfig) -> list[dict]:
    N0 = cfg.N if cfg.N is not None else int(cfg.schedule.get("Nb", 1))
    base = {"N": N0, "q": cfg.q, "T": cfg.T, "n": None}
    if cfg.sweep is None:
        return [base]
    var = cfg.sweep["variable"]
    return [{**base, var: v} for v in cfg.sweep_values()]


ROW_COLUMNS = ("index", "N", "q", "n", "T", "JT", "epsilon", "xi", "d", "gamma", "delta_measured", "delta_bound",
               "bound_applies", "delta1", "delta2", "fidelity", "fs_distance", "phase", "c", "envelope",
               "delta_floor", "censored", "steps", "rejected", "unitarity_defect", "status", "error", "config_hash")


def _worker(payload):
    cfg_dict, i, args = payload
    cfg = ExperimentConfig.from_dict(cfg_dict)
    t0 = time.perf_counter()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            row = run_point(cfg, **args)
        row["status"], row["error"] = "ok", ""
    except Exception as exc:  # recorded per row; the sweep continues
        row = {**args, "status": "error", "error": f"{type(exc).__name__}: {exc}"}
    row["index"] = i
    return row, time.perf_counter() - t0


def _censored(row: dict) -> bool:
    """True when delta is not resolved above FLOOR_MARGIN times its error floor."""
    d = row.get("delta_measured")
    if d is None or not np.isfinite(d):
        return True
    return bool(d <= FLOOR_MARGIN * row.get("delta_floor", MACHINE_FLOOR))


@dataclass
class SweepResult:
    rows: list[dict]
    config: ExperimentConfig
    wall_times: list[float]
    csv_path: Path | None = None
    json_path: Path | None = None

    def column(self, name: str) -> np.ndarray:
        return np.array([r.get(name, np.nan) for r in self.rows], dtype=float)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=ROW_COLUMNS, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items() if k in ROW_COLUMNS})
    return buf.getvalue()


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def run_sweep(cfg: ExperimentConfig, out: str | Path | None = None, write: bool = True) -> SweepResult:
    """One row per sweep point, written as CSV and JSON under ``out``.

    Rows are identical for identical configs.  Wall times go to the JSON only
    so the CSV is reproducible byte for byte.
    """
    cfg.validate()
    chash = cfg.hash()
    payloads = [(cfg.to_dict(), i, a) for i, a in enumerate(_point_args(cfg))]
    if cfg.workers > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            done = list(pool.map(_worker, payloads))
    else:
        done = [_worker(p) for p in payloads]
    done.sort(key=lambda rw: rw[0]["index"])
    rows, walls = [], []
    for row, wall in done:
        row["config_hash"] = chash
        row["censored"] = _censored(row) if row["status"] == "ok" else True
        rows.append(row)
        walls.append(wall)
    result = SweepResult(rows, cfg, walls)
    if write:
        outdir = Path(out if out is not None else cfg.output)
        stem = f"sweep_{(cfg.sweep or {}).get('variable', 'single')}_{chash}"
        result.csv_path = outdir / f"{stem}.csv"
        result.json_path = outdir / f"{stem}.json"
        doc = {"config": cfg.to_dict(), "config_hash": chash, "rows": rows, "wall_time_s": walls}
        var = (cfg.sweep or {}).get("variable")
        if var is not None:
            try:
                doc["fit"] = asdict(fit_decay(rows, {"N": "N", "T": "JT", "q": "q", "n": "n"}[var], floor=0.0))
            except FitError as exc:
                doc["fit"] = {"error": str(exc)}
        # serialized single writer: both files are written here, after all workers finish
        _atomic_write(result.csv_path, _csv_text(rows))
        _atomic_write(result.json_path, json.dumps(_jsonable(doc), indent=2, sort_keys=True))
    return result


# -- fits --------------------------------------------------------------------------------


class FitError(ValueError):
    pass


@dataclass
class FitResult:
    slope: float
    intercept: float
    r2: float
    ci95: tuple[float, float]
    stderr: float
    n_used: int
    n_censored: int
    x_column: str


def fit_decay(table, x_column: str, y_column: str = "delta_measured", floor: float = MACHINE_FLOOR) -> FitResult:
    """Least squares of ln(y) against x.

    ``table`` is a list of row dicts or a dict of columns.  Rows with y at or
    below ``floor``, rows flagged ``censored``, and failed rows are excluded
    and counted.
    """
    if isinstance(table, SweepResult):
        table = table.rows
    if isinstance(table, dict):
        keys = list(table)
        table = [dict(zip(keys, vals)) for vals in zip(*table.values())]
    xs, ys, censored = [], [], 0
    for r in table:
        y = r.get(y_column)
        bad = r.get("status", "ok") != "ok" or r.get("censored", False)
        if bad or y is None or not np.isfinite(y) or y <= floor:
            censored += 1
            continue
        xs.append(float(r[x_column]))
        ys.append(math.log(y))
    if len(xs) < 4:
        raise FitError(f"need at least 4 rows above the floor, have {len(xs)} ({censored} censored)")
    x, y = np.array(xs), np.array(ys)
    if np.ptp(x) == 0:
        raise FitError("x values are all equal")
    lr = stats.linregress(x, y)
    resid = y - (lr.intercept + lr.slope * x)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0 else max(0.0, min(1.0, 1.0 - float((resid**2).sum()) / ss_tot))
    half = float(stats.t.ppf(0.975, len(x) - 2) * lr.stderr)
    return FitResult(float(lr.slope), float(lr.intercept), r2, (float(lr.slope - half), float(lr.slope + half)), float(lr.stderr),
                     len(x), censored, x_column)


# -- command line ------------------------------------------------------------------------------


def _load_cfg(args) -> ExperimentConfig:
    d = {}
    if args.config:
        try:
            d = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
    if args.seed is not None:
        d["seed"] = args.seed
    if args.tol is not None:
        d["tol"] = args.tol
    if args.out is not None:
        d["output"] = args.out
    return ExperimentConfig.from_dict(d)


def _emit(doc: dict, outdir: str | None, name: str) -> None:
    text = json.dumps(_jsonable(doc), indent=2, sort_keys=True)
    print(text)
    if outdir:
        _atomic_write(Path(outdir) / name, text + "\n")


def cmd_simulate(args) -> int:
    cfg = _load_cfg(args)
    cfg.sweep = None
    res = run_sweep(cfg, out=args.out, write=bool(args.out))
    row = res.rows[0]
    _emit({k: row.get(k) for k in ROW_COLUMNS if k in row}, None, "")
    if row["status"] != "ok":
        print(row["error"], file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_cfg(args)
    if cfg.sweep is None:
        raise ConfigError("sweep needs a 'sweep' section in the config")
    res = run_sweep(cfg, out=args.out)
    for r in res.rows:
        print(f"{r['index']:3d}  N={r.get('N')}  q={r.get('q')}  T={r.get('T')}  "
              f"delta={r.get('delta_measured', float('nan'))}  {r['status']}")
    print(f"wrote {res.csv_path} and {res.json_path}")
    return EXIT_OK if all(r["status"] == "ok" for r in res.rows) else EXIT_NUMERICAL


def cmd_bound(args) -> int:
    d = {}
    if args.config:
        try:
            d = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    if "bound" in d:
        b = d["bound"]
        try:
            inp = BoundInputs(**{k: v for k, v in b.items() if k != "T"})
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        T = b.get("T")
    else:
        cfg = _load_cfg(args)
        ham = make_hamiltonian(cfg)
        N = cfg.N if cfg.N is not None else ham.boundary_flatness
        inp = instance_inputs(ham, N, cfg.q)
        T = cfg.T
    _emit(bound_summary(inp, T), args.out, "bound.json")
    return EXIT_OK


def cmd_superadiabatic(args) -> int:
    cfg = _load_cfg(args)
    ham = make_hamiltonian(cfg)
    N = cfg.N if cfg.N is not None else max(ham.boundary_flatness - 1, 0)
    series = expand(ham, N)
    numeric, analytic = a_bound(series)
    van = boundary_vanishing(series, min(ham.boundary_flatness, series.orders))
    doc = {"N": N, "A_numeric": numeric, "A_analytic": analytic, "noise": series.noise,
           "boundary": {"at0": van.at0, "at1": van.at1, "passed": van.passed}}
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        series.norm_profiles_csv(Path(args.out) / "norm_profiles.csv")
    _emit(doc, args.out, "superadiabatic.json")
    return EXIT_OK


def cmd_opensys(args) -> int:
    from .opensys import default_joint_spec, theorem2_report

    cfg = _load_cfg(args)
    ham = make_hamiltonian(cfg)
    o = cfg.opensys
    spec = default_joint_spec(ham, n_bath=int(o.get("n_bath", 1)), g=float(o.get("coupling", 0.01)),
                              seed=cfg.seed, bath_gap=float(o.get("bath_gap", 0.5)))
    rep = theorem2_report(spec, N=cfg.N, q=cfg.q, tol=cfg.tol, T=cfg.T)
    _emit(rep.to_dict(), args.out, "opensys.json")
    return EXIT_OK


def run_checks() -> list[tuple[str, bool, str]]:
    """Fast invariant suite: (name, passed, detail)."""
    from .metrics import grover_gap
    from .propagator import propagate_fixed

    out = []
    ok = all(hm.count_parameters(n, 2) == len(hm.pauli_strings(n, 2)) for n in range(1, 7))
    out.append(("parameter count", ok, "n = 1..6"))
    errs = []
    for n in range(1, 7):
        for x in np.linspace(0, 1, 11):
            e = np.linalg.eigvalsh(hm.grover_hamiltonian(n, 0, x))
            errs.append(abs((e[1] - e[0]) - grover_gap(n, x)))
    out.append(("grover gap", max(errs) < 1e-10, f"max error {max(errs):.2e}"))
    b = sch.verify_boundary(sch.smooth_poly(4), 4)
    out.append(("boundary flatness", b.passed, "smooth_poly(4)"))
    ham = hm.x_to_z(1)
    psi0 = np.linalg.eigh(ham(0.0))[1][:, 0].astype(complex)
    errs = []
    ref = propagate_fixed(ham, psi0, 0.0, 1.0, 0.02, 4096)
    for m in (64, 128):
        errs.append(np.linalg.norm(propagate_fixed(ham, psi0, 0.0, 1.0, 0.02, m) - ref))
    order = math.log2(errs[0] / errs[1])
    out.append(("integrator order", abs(order - 4) < 0.3, f"observed {order:.2f}"))
    gp = gap_profile(track(ham, np.linspace(0, 1, 257)))
    out.append(("gap 1-qubit", abs(gp.Delta - math.sqrt(2)) < 1e-6, f"min gap {gp.Delta:.8f}"))
    return out


def cmd_check(args) -> int:
    results = run_checks()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adiabound", description="Adiabatic error bounds: simulation and evaluation.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, helptext in (
        ("simulate", cmd_simulate, "single run"),
        ("sweep", cmd_sweep, "parameter sweep with CSV/JSON output"),
        ("bound", cmd_bound, "closed-form time and error bounds"),
        ("superadiabatic", cmd_superadiabatic, "expansion diagnostics"),
        ("opensys", cmd_opensys, "system plus bath run"),
        ("check", cmd_check, "invariant suite"),
    ):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config", help="experiment config (JSON)")
        s.add_argument("--out", help="output directory")
        s.add_argument("--seed", type=int, help="random seed (u64)")
        s.add_argument("--tol", type=float, help="integrator tolerance")
        s.set_defaults(func=fn)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("config error: seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
