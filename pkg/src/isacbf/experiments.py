"""Experiment harness: single runs, sweeps, angle sets, record validation
and plot-script export.

Everything written to disk goes through :func:`atomic_write`, and all CSV
numbers use 9 significant digits with LF line endings so that reruns are
byte-identical.
"""

from __future__ import annotations

import datetime as _dt
import io
import json
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .irm import IRMParams, IRMResult, run_irm, trace_csv
from .metrics import (
    BeamformerError,
    BeamformerSet,
    beam_matching_error,
    beampattern_csv,
    format_number,
    rank_one_residual,
    rate,
    sinr,
    to_dbm,
    transmit_beampattern,
)
from .scene import (
    Scenario,
    ScenarioError,
    TargetSpec,
    UserSpec,
    build_desired_pattern,
    load_scenario,
)
from .sdp import SolverOptions


class ExperimentError(ValueError):
    """Malformed experiment description or record."""


# -- file helpers ----------------------------------------------------------------

def atomic_write(path, text: str) -> None:
    """Write ``text`` via a temporary file in the same directory and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _mat_to_json(A) -> list:
    A = np.asarray(A, dtype=complex)
    if A.ndim == 1:
        return [[float(v.real), float(v.imag)] for v in A]
    return [[[float(v.real), float(v.imag)] for v in row] for row in A]


def _mat_from_json(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.shape[-1] != 2:
        raise ExperimentError("matrices must be nested [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def _num(x: float):
    """JSON-safe float (inf/nan as strings)."""
    x = float(x)
    if math.isfinite(x):
        return x
    return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")


def _unnum(x) -> float:
    return float(x)


# -- run record --------------------------------------------------------------------

@dataclass
class RunRecord:
    """Everything needed to re-check one run without re-solving it."""

    scenario: dict
    status: str
    iterations: int
    sdr_power_mw: float
    final_power_mw: float
    final_r: float
    rates: list
    beam_matching_error: float
    covariances: list  # of (N, N) complex arrays
    radar_covariance: np.ndarray
    vectors: list | None
    sdr_covariances: list | None
    sdr_radar_covariance: np.ndarray | None
    reports: list  # of SolverReport dicts
    params: dict
    started: str
    finished: str
    message: str = ""
    trace: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def final_power_dbm(self) -> float:
        return to_dbm(self.final_power_mw)

    def beamformers(self, check: bool = True) -> BeamformerSet:
        return BeamformerSet(tuple(self.covariances), self.radar_covariance,
                             None if self.vectors is None else tuple(self.vectors),
                             rank_one_tol=self.params.get("rank_one_tol", 1e-6), check=check)

    def sdr_beamformers(self) -> BeamformerSet | None:
        if self.sdr_covariances is None:
            return None
        return BeamformerSet(tuple(self.sdr_covariances), self.sdr_radar_covariance, check=False)

    def to_json(self) -> str:
        d = {
            "scenario": self.scenario,
            "status": self.status,
            "iterations": self.iterations,
            "sdr_power_mw": _num(self.sdr_power_mw),
            "final_power_mw": _num(self.final_power_mw),
            "final_r": _num(self.final_r),
            "rates": [_num(r) for r in self.rates],
            "beam_matching_error": _num(self.beam_matching_error),
            "covariances": [_mat_to_json(W) for W in self.covariances],
            "radar_covariance": _mat_to_json(self.radar_covariance),
            "vectors": None if self.vectors is None else [_mat_to_json(w) for w in self.vectors],
            "sdr_covariances": (None if self.sdr_covariances is None
                                else [_mat_to_json(W) for W in self.sdr_covariances]),
            "sdr_radar_covariance": (None if self.sdr_radar_covariance is None
                                     else _mat_to_json(self.sdr_radar_covariance)),
            "reports": [{k: (_num(v) if isinstance(v, float) else v) for k, v in r.items()}
                        for r in self.reports],
            "params": self.params,
            "started": self.started,
            "finished": self.finished,
            "message": self.message,
            "trace": [[int(i), _num(p), _num(r), _num(w)] for i, p, r, w in self.trace],
        }
        return json.dumps(d, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunRecord":
        try:
            d = json.loads(text)
            return cls(
                scenario=d["scenario"],
                status=d["status"],
                iterations=int(d["iterations"]),
                sdr_power_mw=_unnum(d["sdr_power_mw"]),
                final_power_mw=_unnum(d["final_power_mw"]),
                final_r=_unnum(d["final_r"]),
                rates=[_unnum(r) for r in d["rates"]],
                beam_matching_error=_unnum(d["beam_matching_error"]),
                covariances=[_mat_from_json(W) for W in d["covariances"]],
                radar_covariance=_mat_from_json(d["radar_covariance"]),
                vectors=None if d["vectors"] is None else [_mat_from_json(w) for w in d["vectors"]],
                sdr_covariances=(None if d["sdr_covariances"] is None
                                 else [_mat_from_json(W) for W in d["sdr_covariances"]]),
                sdr_radar_covariance=(None if d["sdr_radar_covariance"] is None
                                      else _mat_from_json(d["sdr_radar_covariance"])),
                reports=[{k: (float(v) if k in ("duality_gap", "primal_residual", "dual_residual",
                                                "wall_time") else v) for k, v in r.items()}
                         for r in d["reports"]],
                params=d["params"],
                started=d["started"],
                finished=d["finished"],
                message=d.get("message", ""),
                trace=[(int(i), _unnum(p), _unnum(r), _unnum(w)) for i, p, r, w in d.get("trace", [])],
            )
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            if isinstance(exc, ExperimentError):
                raise
            raise ExperimentError(f"malformed run record: {exc}") from None

    @classmethod
    def load(cls, path) -> "RunRecord":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())

    def save(self, path) -> None:
        atomic_write(path, self.to_json())


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def make_record(scenario: Scenario, result: IRMResult, params: IRMParams,
                started: str, finished: str) -> RunRecord:
    bf = result.beamformers
    rates, bme = [], math.nan
    if bf is not None:
        use_vec = bf.vectors is not None
        rates = [rate(sinr(bf, k, scenario, use_vectors=use_vec)) for k in range(scenario.num_users)]
        bme = beam_matching_error(bf, build_desired_pattern(scenario), scenario.array)
    sdr = result.sdr_beamformers
    n = scenario.array.num_antennas
    return RunRecord(
        scenario=scenario.to_dict(),
        status=result.status,
        iterations=result.iterations,
        sdr_power_mw=result.sdr_power,
        final_power_mw=result.final_power,
        final_r=result.final_r,
        rates=rates,
        beam_matching_error=bme,
        covariances=list(bf.covariances) if bf is not None else [np.zeros((n, n))] * scenario.num_users,
        radar_covariance=bf.radar_covariance if bf is not None else np.zeros((n, n)),
        vectors=None if bf is None or bf.vectors is None else list(bf.vectors),
        sdr_covariances=None if sdr is None else list(sdr.covariances),
        sdr_radar_covariance=None if sdr is None else sdr.radar_covariance,
        reports=[r.to_dict() for r in result.reports],
        params=asdict(params),
        started=started,
        finished=finished,
        message=result.message,
        trace=list(result.trace),
    )


def solve_scenario(scenario: Scenario, params: IRMParams | None = None,
                   options: SolverOptions | None = None) -> RunRecord:
    """Run IRM on ``scenario`` and wrap the outcome as a :class:`RunRecord`."""
    params = params or IRMParams()
    started = _now()
    result = run_irm(scenario, params, options)
    return make_record(scenario, result, params, started, _now())


# -- outcome classes and exit codes ---------------------------------------------

EXIT_OK = 0
EXIT_VALIDATION_FAILED = 1
EXIT_PARSE_ERROR = 2
EXIT_INFEASIBLE = 3
EXIT_NOT_CONVERGED = 4


def exit_code_for(status: str) -> int:
    if status == "converged":
        return EXIT_OK
    if status in ("infeasible", "unbounded"):
        return EXIT_INFEASIBLE
    return EXIT_NOT_CONVERGED


# -- single run ------------------------------------------------------------------

def run_scenario(config, out_dir, params: IRMParams | None = None,
                 options: SolverOptions | None = None) -> tuple[RunRecord, dict]:
    """Solve one scenario file and write its outputs.

    Files written to ``out_dir``: ``record.json`` always; for a run with a
    solution also ``beampattern.csv`` (final design), ``beampattern_sdr.csv``
    (relaxed optimum) and ``trace.csv`` (IRM iterations).

    Raises
    ------
    ScenarioError
        The config cannot be parsed; nothing is written in that case.
    """
    scenario = config if isinstance(config, Scenario) else load_scenario(config)
    record = solve_scenario(scenario, params, options)
    return record, write_run_outputs(record, scenario, out_dir)


def write_run_outputs(record: RunRecord, scenario: Scenario, out_dir) -> dict:
    out = Path(out_dir)
    paths = {"record": out / "record.json"}
    if record.status not in ("infeasible", "unbounded") and record.sdr_covariances is not None:
        paths["beampattern"] = out / "beampattern.csv"
        paths["beampattern_sdr"] = out / "beampattern_sdr.csv"
        paths["trace"] = out / "trace.csv"
        atomic_write(paths["beampattern"], beampattern_csv(record.beamformers(check=False), scenario.array))
        atomic_write(paths["beampattern_sdr"], beampattern_csv(record.sdr_beamformers(), scenario.array))
        atomic_write(paths["trace"], _trace_csv_rows(record.trace))
    record.save(paths["record"])
    return paths


def _trace_csv_rows(rows) -> str:
    fake = IRMResult("", None, None, 0, 0.0, 0.0, 0.0, [], list(rows), [])
    return trace_csv(fake)


# -- experiment specs --------------------------------------------------------------

# "decomposition" is a single run; its beampattern CSV carries the
# communication, radar and total curves.
KINDS = ("single", "decomposition", "antenna_sweep", "distance_sweep", "angle_sets")
SINGLE_KINDS = ("single", "decomposition")
_SPEC_KEYS = {"kind", "scenario", "antennas", "distances_m", "deltas_deg", "fixed_distance_m",
              "sets", "output", "name"}


@dataclass(frozen=True)
class AngleSet:
    label: str
    users_deg: tuple
    targets_deg: tuple


@dataclass(frozen=True)
class ExperimentSpec:
    """Description of one experiment family.

    ``scenario`` is the base instance; sweeps vary one field of it.
    """

    kind: str
    scenario: Scenario
    antennas: tuple = ()
    distances_m: tuple = ()
    deltas_deg: tuple = ()
    fixed_distance_m: float = 10.0
    sets: tuple = ()
    output: str | None = None
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ExperimentError(f"unknown experiment kind {self.kind!r}")
        need = {"antenna_sweep": ("antennas",), "distance_sweep": ("distances_m", "deltas_deg"),
                "angle_sets": ("sets",)}.get(self.kind, ())
        for attr in need:
            if len(getattr(self, attr)) == 0:
                raise ExperimentError(f"{self.kind} needs a nonempty {attr!r} list")

    @classmethod
    def from_dict(cls, doc, base_dir=".") -> "ExperimentSpec":
        if not isinstance(doc, dict):
            raise ExperimentError("experiment spec must be a mapping")
        unknown = sorted(set(doc) - _SPEC_KEYS)
        if unknown:
            raise ExperimentError(f"experiment spec: unknown key(s) {unknown}")
        try:
            sc = doc["scenario"]
            if isinstance(sc, str):
                scenario = load_scenario(Path(base_dir) / sc)
            else:
                scenario = Scenario.from_dict(sc)
            sets = tuple(
                AngleSet(str(s["label"]), tuple(float(a) for a in s["users_deg"]),
                         tuple(float(a) for a in s.get("targets_deg", [t.angle for t in scenario.targets])))
                for s in doc.get("sets", [])
            )
            return cls(
                kind=str(doc["kind"]),
                scenario=scenario,
                antennas=tuple(int(n) for n in doc.get("antennas", [])),
                distances_m=tuple(float(d) for d in doc.get("distances_m", [])),
                deltas_deg=tuple(float(d) for d in doc.get("deltas_deg", [])),
                fixed_distance_m=float(doc.get("fixed_distance_m", 10.0)),
                sets=sets,
                output=doc.get("output"),
                name=str(doc.get("name", "")),
            )
        except KeyError as exc:
            raise ExperimentError(f"experiment spec: missing key {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, (ExperimentError, ScenarioError)):
                raise
            raise ExperimentError(f"experiment spec: malformed value: {exc}") from None


def load_experiment(path) -> ExperimentSpec:
    import yaml

    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ExperimentError(f"{path}: not valid YAML: {exc}") from None
    except OSError as exc:
        raise ExperimentError(f"{path}: {exc}") from None
    return ExperimentSpec.from_dict(doc, base_dir=path.parent)


def load_run_config(path) -> Scenario:
    """Scenario for ``solve``: a scenario document, or an experiment of kind
    ``single`` or ``decomposition`` that references one."""
    import yaml

    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: not a valid YAML/JSON document: {exc}") from None
    if isinstance(doc, dict) and "kind" in doc:
        spec = ExperimentSpec.from_dict(doc, base_dir=path.parent)
        if spec.kind not in SINGLE_KINDS:
            raise ExperimentError(f"{path}: 'solve' takes a scenario or a single/decomposition "
                                  f"experiment, got kind {spec.kind!r}")
        return spec.scenario
    if doc is None:
        raise ScenarioError(f"{path}: empty document")
    return Scenario.from_dict(doc)


# -- batch execution ----------------------------------------------------------------

def _run_one(job):
    scenario, params, options = job
    if isinstance(scenario, str):  # construction already failed
        return scenario
    try:
        return solve_scenario(scenario, params, options)
    except (ScenarioError, BeamformerError, ValueError) as exc:
        return str(exc)


def run_batch(scenarios: Sequence[Scenario], params: IRMParams | None = None,
              options: SolverOptions | None = None, workers: int = 1) -> list:
    """Solve independent scenarios, in order; failures come back as strings.

    Entries of ``scenarios`` may already be error strings (an instance that
    could not be constructed); they are passed through unchanged.
    """
    params = params or IRMParams()
    jobs = [(s, params, options) for s in scenarios]
    if workers <= 1 or len(jobs) <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))


def _power_dbm(rec) -> float:
    if isinstance(rec, RunRecord) and rec.sdr_covariances is not None:
        return to_dbm(rec.final_power_mw)
    return math.nan


def _iters(rec) -> int:
    return rec.iterations if isinstance(rec, RunRecord) else -1


@dataclass
class SweepResult:
    rows: list
    records: list
    csv: str
    labels: list = field(default_factory=list)


def sweep_antennas(base: Scenario, antennas: Sequence[int], params=None, options=None,
                   workers: int = 1) -> SweepResult:
    """One run per array size; CSV ``N,power_dBm,iters``."""
    scenarios = []
    for n in antennas:
        try:
            scenarios.append(base.with_antennas(int(n)))
        except ScenarioError as exc:
            scenarios.append(f"N={n}: {exc}")
    recs = run_batch(scenarios, params, options, workers)
    rows = [(int(n), _power_dbm(r), _iters(r)) for n, r in zip(antennas, recs)]
    buf = io.StringIO()
    buf.write("N,power_dBm,iters\n")
    for n, p, it in rows:
        buf.write(f"{n},{format_number(p)},{it}\n")
    return SweepResult(rows, recs, buf.getvalue(), [f"N{n}" for n in antennas])


def _with_distances(base: Scenario, user_d=None, target_d=None) -> Scenario:
    users = [UserSpec(u.angle, user_d if user_d is not None else u.distance, u.noise_power,
                      u.tx_gain, u.rx_gain) for u in base.users]
    targets = [TargetSpec(t.angle, target_d if target_d is not None else t.distance,
                          t.tx_gain, t.rx_gain) for t in base.targets]
    return base.replace(users=users, targets=targets)


def sweep_distance(base: Scenario, distances: Sequence[float], deltas: Sequence[float],
                   fixed_distance: float = 10.0, params=None, options=None,
                   workers: int = 1) -> SweepResult:
    """Move the targets (users fixed) and then the users (targets fixed).

    CSV ``swept_entity,distance_m,delta_deg,power_dBm``; the fixed entity
    sits at ``fixed_distance``.
    """
    jobs, keys = [], []
    for entity in ("target", "user"):
        for delta in deltas:
            for d in distances:
                if entity == "target":
                    sc = _with_distances(base, user_d=fixed_distance, target_d=d)
                else:
                    sc = _with_distances(base, user_d=d, target_d=fixed_distance)
                jobs.append(sc.replace(beam_width=float(delta)))
                keys.append((entity, float(d), float(delta)))
    recs = run_batch(jobs, params, options, workers)
    rows = [(e, d, dl, _power_dbm(r)) for (e, d, dl), r in zip(keys, recs)]
    buf = io.StringIO()
    buf.write("swept_entity,distance_m,delta_deg,power_dBm\n")
    for e, d, dl, p in rows:
        buf.write(f"{e},{format_number(d)},{format_number(dl)},{format_number(p)}\n")
    labels = [f"{e}_d{format_number(d)}_delta{format_number(dl)}" for e, d, dl in keys]
    return SweepResult(rows, recs, buf.getvalue(), labels)


def angle_sets(base: Scenario, sets: Sequence[AngleSet], params=None, options=None,
               workers: int = 1) -> SweepResult:
    """One run per user/target angle configuration.

    Users and targets inherit distance, noise and gains from the first user
    and first target of ``base``. CSV
    ``set,users_deg,targets_deg,power_dBm,iters``.
    """
    u0, t0 = base.users[0], base.targets[0]
    scenarios = []
    for s in sets:
        users = [UserSpec(a, u0.distance, u0.noise_power, u0.tx_gain, u0.rx_gain) for a in s.users_deg]
        targets = [TargetSpec(a, t0.distance, t0.tx_gain, t0.rx_gain) for a in s.targets_deg]
        scenarios.append(base.replace(users=users, targets=targets))
    recs = run_batch(scenarios, params, options, workers)
    rows = [(s.label, s.users_deg, s.targets_deg, _power_dbm(r), _iters(r)) for s, r in zip(sets, recs)]
    buf = io.StringIO()
    buf.write("set,users_deg,targets_deg,power_dBm,iters\n")
    for label, ud, td, p, it in rows:
        us = " ".join(format_number(a) for a in ud)
        ts = " ".join(format_number(a) for a in td)
        buf.write(f"{label},{us},{ts},{format_number(p)},{it}\n")
    return SweepResult(rows, recs, buf.getvalue(), [s.label for s in sets])


def write_sweep(result: SweepResult, out_dir, csv_name: str) -> dict:
    """Summary CSV plus one record (and beampattern CSV) per run."""
    out = Path(out_dir)
    paths = {"summary": out / csv_name}
    for label, rec in zip(result.labels, result.records):
        if isinstance(rec, RunRecord):
            sc = Scenario.from_dict(rec.scenario)
            sub = write_run_outputs(rec, sc, out / "runs" / label)
            paths[label] = sub["record"]
        else:
            atomic_write(out / "runs" / label / "error.txt", rec + "\n")
    atomic_write(paths["summary"], result.csv)
    return paths


# -- validation --------------------------------------------------------------------------

@dataclass(frozen=True)
class Check:
    name: str
    margin: float  # >= 0 means satisfied
    passed: bool


@dataclass
class ValidationReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def text(self) -> str:
        lines = [f"{'PASS' if c.passed else 'FAIL'} {c.name} margin={c.margin:.6e}" for c in self.checks]
        lines.append("overall: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines) + "\n"


def validate_record(record: RunRecord, feas_tol: float = 1e-8, rate_tol: float = 1e-6,
                    rank_one_tol: float = 1e-6) -> ValidationReport:
    """Re-evaluate every constraint of the rank-one problem from the record.

    Both the covariance (trace) form and, when present, the extracted
    vectors are checked: rates against ``R_min - rate_tol``, pattern samples
    against ``rho -+ (eta + 1e-6 rho + feas_tol)`` and the covariances
    against ``w w^H``.
    """
    sc = Scenario.from_dict(record.scenario)
    checks: list[Check] = []
    if not record.converged:
        checks.append(Check(f"status[{record.status}]", -1.0, False))
    bf = BeamformerSet(tuple(record.covariances), record.radar_covariance, check=False)
    forms = [("trace", bf)]
    if record.vectors is not None:
        vec_set = BeamformerSet(tuple(np.outer(w, w.conj()) for w in record.vectors),
                                record.radar_covariance, check=False)
        forms.append(("vector", vec_set))
        for k, (W, w) in enumerate(zip(record.covariances, record.vectors)):
            err = rank_one_residual(W, w)
            checks.append(Check(f"rank_one[{k + 1}]", rank_one_tol - err, err <= rank_one_tol))
    for name, A in [(f"W{k + 1}", W) for k, W in enumerate(record.covariances)] + [("Rd", record.radar_covariance)]:
        ev = np.linalg.eigvalsh(0.5 * (A + A.conj().T))
        margin = ev[0] + 1e-9 * max(ev[-1], 0.0)
        checks.append(Check(f"psd[{name}]", float(margin), margin >= 0))

    pattern = build_desired_pattern(sc)
    for form, s in forms:
        for k in range(sc.num_users):
            r = rate(sinr(s, k, sc))
            m = r - (sc.rate_floor - rate_tol)
            checks.append(Check(f"{form}:rate[{k + 1}]", m, m >= 0))
        B = transmit_beampattern(s, sc.array, pattern.angles)
        if sc.pattern_metric == "channel":
            gains = np.array([p.pathloss for p in pattern.samples])
        else:
            gains = np.ones(len(pattern))
        for p, b, g in zip(pattern.samples, B, gains):
            lvl, eta = g * p.level, g * p.tolerance
            slack = 1e-6 * lvl + feas_tol
            lo = g * b - (lvl - eta - slack)
            hi = (lvl + eta + slack) - g * b
            checks.append(Check(f"{form}:pattern_lo[{p.angle:g}]", lo / max(lvl, 1e-300), lo >= 0))
            checks.append(Check(f"{form}:pattern_hi[{p.angle:g}]", hi / max(lvl, 1e-300), hi >= 0))
    return ValidationReport(checks)


def validate_solution(path, **kw) -> ValidationReport:
    """Load a record from ``path`` and validate it."""
    return validate_record(RunRecord.load(path), **kw)


# -- plot script -------------------------------------------------------------------------

_PLOT_HEADER = '''#!/usr/bin/env python3
"""Plots generated from isacbf CSV outputs. Run with: python3 {name}"""

import csv

import matplotlib.pyplot as plt


def read(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return rows


def col(rows, key):
    return [float(r[key]) for r in rows]


'''


def _csv_kind(header: list[str]) -> str:
    h = tuple(header)
    if h == ("angle_deg", "total_dBm", "comm_dBm", "radar_dBm"):
        return "beampattern"
    if h == ("N", "power_dBm", "iters"):
        return "antennas"
    if h == ("swept_entity", "distance_m", "delta_deg", "power_dBm"):
        return "distance"
    if h == ("iter", "phi", "r", "power_mW"):
        return "trace"
    if h == ("set", "users_deg", "targets_deg", "power_dBm", "iters"):
        return "angle_sets"
    raise ExperimentError(f"unrecognised CSV header {','.join(header)}")


def _panel(kind: str, path: str, i: int) -> str:
    p = json.dumps(path)
    if kind == "beampattern":
        return (f"rows = read({p})\nax = axes[{i}]\nfor key in (\"total_dBm\", \"comm_dBm\", \"radar_dBm\"):\n"
                f"    ax.plot(col(rows, \"angle_deg\"), col(rows, key), label=key)\n"
                f"ax.set_xlabel(\"angle (deg)\")\nax.set_ylabel(\"beampattern (dBm)\")\n"
                f"ax.set_title({p})\nax.legend()\n")
    if kind == "antennas":
        return (f"rows = read({p})\nax = axes[{i}]\nax.plot(col(rows, \"N\"), col(rows, \"power_dBm\"), marker=\"o\")\n"
                f"ax.set_xlabel(\"N\")\nax.set_ylabel(\"total power (dBm)\")\nax.set_title({p})\n")
    if kind == "distance":
        return (f"rows = read({p})\nax = axes[{i}]\n"
                f"for ent in sorted({{r[\"swept_entity\"] for r in rows}}):\n"
                f"    for dl in sorted({{r[\"delta_deg\"] for r in rows}}, key=float):\n"
                f"        sel = [r for r in rows if r[\"swept_entity\"] == ent and r[\"delta_deg\"] == dl]\n"
                f"        ax.plot(col(sel, \"distance_m\"), col(sel, \"power_dBm\"), marker=\"o\",\n"
                f"                label=ent + \" delta=\" + dl)\n"
                f"ax.set_xlabel(\"distance (m)\")\nax.set_ylabel(\"total power (dBm)\")\n"
                f"ax.set_title({p})\nax.legend()\n")
    if kind == "trace":
        return (f"rows = read({p})\nax = axes[{i}]\nax.semilogy(col(rows, \"iter\"), col(rows, \"r\"), marker=\"o\")\n"
                f"ax.set_xlabel(\"iteration\")\nax.set_ylabel(\"r\")\nax.set_title({p})\n")
    return (f"rows = read({p})\nax = axes[{i}]\nax.bar([r[\"set\"] for r in rows], col(rows, \"power_dBm\"))\n"
            f"ax.set_ylabel(\"total power (dBm)\")\nax.set_title({p})\n")


def emit_plot_script(csv_paths: Sequence, out_path, image: str = "figure.png") -> Path:
    """Write a standalone matplotlib script with one panel per CSV.

    The script is never executed here.
    """
    if not csv_paths:
        raise ExperimentError("no CSV files given")
    kinds = []
    for p in csv_paths:
        p = Path(p)
        if not p.is_file():
            raise ExperimentError(f"missing CSV {p}")
        with open(p, "r", encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
        kinds.append(_csv_kind(header))
    out_path = Path(out_path)
    n = len(csv_paths)
    body = [_PLOT_HEADER.format(name=out_path.name),
            f"fig, axes = plt.subplots({n}, 1, figsize=(7, {3.5 * n:g}), squeeze=False)\n",
            "axes = axes[:, 0]\n\n"]
    for i, (kind, p) in enumerate(zip(kinds, csv_paths)):
        body.append(_panel(kind, str(p), i) + "\n")
    body.append(f"fig.tight_layout()\nfig.savefig({json.dumps(image)}, dpi=150)\n")
    atomic_write(out_path, "".join(body))
    return out_path


__all__ = [
    "AngleSet", "Check", "ExperimentError", "ExperimentSpec", "RunRecord", "SweepResult",
    "ValidationReport", "angle_sets", "atomic_write", "emit_plot_script", "exit_code_for",
    "load_experiment", "make_record", "run_batch", "run_scenario", "solve_scenario",
    "sweep_antennas", "sweep_distance", "validate_record", "validate_solution", "write_run_outputs",
    "write_sweep",
]

