"""Experiment runners behind the command line: simulate, geometry, tabular, audit.

Every runner takes a validated config dataclass and an output directory,
writes CSV files there, and returns a small summary dict.
"""

from __future__ import annotations

import csv
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .core import (
    FairKind,
    FairSubspace,
    GroupMarginal,
    load_marginal,
    overall_risk,
)
from .data import (
    DataError,
    SchemaError,
    TabularSchema,
    default_gaussian_spec,
    gaussian_sample,
    load_csv,
    make_pstar_testset,
    minority_joint,
    philox,
    split_train_test,
    standardize,
)
from .geometry import (
    AssumptionError,
    InfeasibleFairError,
    RiskPolytope,
    bayes_fair_check,
    decompose_bias,
    load_polytope,
    minimize_linear,
    minimize_linear_fair,
    orthogonality_check,
    recovery_condition,
    rp_threshold,
)
from .instances import random_rp2_instance
from .solver import ConstraintSpec, SolverConfig, evaluate, train_constrained

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

RESULT_COLUMNS = ("mode", "repetition", "parameter", "model", "accuracy_on_pstar",
                  "accuracy_on_ptilde", "fairness_gap", "wall_time")


class ConfigError(ValueError):
    pass


class GeometryCheckError(AssertionError):
    pass


# -- configuration ------------------------------------------------------------------

@dataclass
class SolverBlock:
    bound: float | None = None
    eta0: float = 2.0
    l2: float = 1e-6
    max_newton: int = 100
    tol: float = 1e-8
    selection: str = "average"


@dataclass
class SimulateBlock:
    p_minor: list = field(default_factory=lambda: [0.01, 0.05, 0.1, 0.25])
    repetitions: int = 20
    n_train: int = 2000
    n_test: int = 2000
    iterations: int = 25
    eps_baseline: float = 10.0
    eps_fair: float = 0.1


@dataclass
class GeometryBlock:
    fixture: str = ""  # empty: the shipped counterexample
    vertices: str = ""  # 2-group RP polytope for the sweep; empty: generated
    majority_index: int = -1  # -1: the heavier group under p_tilde
    p_tilde_majority: float = 0.8
    sweep_points: int = 101


@dataclass
class TabularBlock:
    path: str = ""
    name: str = "tabular"
    numeric: list = field(default_factory=list)
    categorical: list = field(default_factory=list)
    protected: list = field(default_factory=list)
    protected_binarize: dict = field(default_factory=dict)
    label: str = "label"
    positive: str = "1"
    repetitions: int = 20
    iterations: int = 50
    ratio: float = 0.7
    eps_baseline: float = 10.0
    eps_fair: float = 0.1


@dataclass
class AuditBlock:
    vertices: str = ""
    pstar: str = ""
    ptilde: str = ""
    fair: str = "crp"
    majority_index: int = -1


@dataclass
class ExperimentConfig:
    mode: str = "simulate"
    seed: int = 0
    workers: int = 1
    out: str = "results"
    solver: SolverBlock = field(default_factory=SolverBlock)
    simulate: SimulateBlock = field(default_factory=SimulateBlock)
    geometry: GeometryBlock = field(default_factory=GeometryBlock)
    tabular: TabularBlock = field(default_factory=TabularBlock)
    audit: AuditBlock = field(default_factory=AuditBlock)

    def solver_config(self, iterations: int) -> SolverConfig:
        return SolverConfig(iterations=iterations, seed=self.seed, **asdict(self.solver))


_BLOCKS = {"solver": SolverBlock, "simulate": SimulateBlock, "geometry": GeometryBlock,
           "tabular": TabularBlock, "audit": AuditBlock}
MODES = ("simulate", "geometry", "tabular", "audit")


def _check_type(default, v, where: str, k: str) -> None:
    if default is None:
        ok = v is None or (isinstance(v, (int, float)) and not isinstance(v, bool))
    elif isinstance(default, bool):
        ok = isinstance(v, bool)
    elif isinstance(default, int):
        ok = isinstance(v, int) and not isinstance(v, bool)
    elif isinstance(default, float):
        ok = isinstance(v, (int, float)) and not isinstance(v, bool)
    else:
        ok = isinstance(v, type(default))
    if not ok:
        raise ConfigError(f"[{where}] {k}: expected {type(default).__name__}, got {v!r}")


def _fill(cls, raw: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown keys in [{where}]: {unknown}")
    obj = cls()
    for k, v in raw.items():
        _check_type(getattr(obj, k), v, where, k)
        setattr(obj, k, float(v) if isinstance(getattr(obj, k), float) else v)
    return obj


def parse_config(raw: dict) -> ExperimentConfig:
    raw = dict(raw)
    blocks = {name: raw.pop(name, {}) for name in _BLOCKS}
    cfg = _fill(ExperimentConfig, {k: v for k, v in raw.items()}, "top level")
    for name, cls in _BLOCKS.items():
        if not isinstance(blocks[name], dict):
            raise ConfigError(f"[{name}] must be a table")
        setattr(cfg, name, _fill(cls, blocks[name], name))
    validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(raw)


def validate(cfg: ExperimentConfig) -> None:
    if cfg.mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {cfg.mode!r}")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    if cfg.seed < 0:
        raise ConfigError("seed must be non-negative")
    sim = cfg.simulate
    if not sim.p_minor or any(not isinstance(p, (int, float)) or not 0 < p <= 0.5 for p in sim.p_minor):
        raise ConfigError("simulate.p_minor must be a non-empty list of values in (0, 0.5]")
    if sim.repetitions < 1 or sim.n_train < 10 or sim.n_test < 10 or sim.iterations < 1:
        raise ConfigError("simulate: repetitions, iterations >= 1 and n_train, n_test >= 10")
    for blk in (sim, cfg.tabular):
        if blk.eps_baseline < 0 or blk.eps_fair < 0:
            raise ConfigError("constraint tolerances must be >= 0")
    if cfg.solver.selection not in ("average", "best_gap", "lp"):
        raise ConfigError(f"solver.selection {cfg.solver.selection!r} is not supported")
    if cfg.geometry.sweep_points < 2:
        raise ConfigError("geometry.sweep_points must be >= 2")
    if not 0.5 <= cfg.geometry.p_tilde_majority <= 1.0:
        raise ConfigError("geometry.p_tilde_majority must lie in [0.5, 1]")
    if not 0 < cfg.tabular.ratio < 1:
        raise ConfigError("tabular.ratio must lie in (0, 1)")
    try:
        FairKind(cfg.audit.fair)
    except ValueError:
        raise ConfigError(f"audit.fair must be 'rp' or 'crp', got {cfg.audit.fair!r}") from None


# -- results --------------------------------------------------------------------

@dataclass
class ResultRow:
    mode: str
    repetition: int
    parameter: str
    model: str
    accuracy_on_pstar: float
    accuracy_on_ptilde: float
    fairness_gap: float
    wall_time: float

    def sort_key(self):
        return (self.parameter, self.repetition, self.model)


def write_results(path, rows: list[ResultRow]) -> None:
    rows = sorted(rows, key=ResultRow.sort_key)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in rows:
            w.writerow([r.mode, r.repetition, r.parameter, r.model, f"{r.accuracy_on_pstar:.10f}",
                        f"{r.accuracy_on_ptilde:.10f}", f"{r.fairness_gap:.10f}", f"{r.wall_time:.4f}"])


def read_results(path) -> list[ResultRow]:
    with Path(path).open(newline="") as fh:
        return [ResultRow(d["mode"], int(d["repetition"]), d["parameter"], d["model"],
                          float(d["accuracy_on_pstar"]), float(d["accuracy_on_ptilde"]),
                          float(d["fairness_gap"]), float(d["wall_time"]))
                for d in csv.DictReader(fh)]


def summarize(rows: list[ResultRow]) -> list[dict]:
    """Mean and sample sd per (parameter, model), sorted."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.parameter, r.model), []).append(r)
    out = []
    for (param, model), rs in sorted(groups.items()):
        rec = {"parameter": param, "model": model, "n": len(rs)}
        for col in ("accuracy_on_pstar", "accuracy_on_ptilde", "fairness_gap"):
            v = np.array([getattr(r, col) for r in rs])
            rec[f"{col}_mean"] = float(v.mean())
            rec[f"{col}_sd"] = float(v.std(ddof=1)) if v.size > 1 else 0.0
        out.append(rec)
    return out


def write_summary(path, summary: list[dict]) -> None:
    if not summary:
        return
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(summary[0]), lineterminator="\n")
        w.writeheader()
        for rec in summary:
            w.writerow({k: (f"{v:.10f}" if isinstance(v, float) else v) for k, v in rec.items()})


def cell_seed(master: int, index: int, repetition: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([master, index, repetition])


def _map(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))


# -- simulate ---------------------------------------------------------------------

def _fmt_param(p: float) -> str:
    return f"{p:.4f}"


def _simulate_cell(job):
    cfg, index, p_minor, rep = job
    sim = cfg.simulate
    ss = cell_seed(cfg.seed, index, rep)
    s_train, s_pstar, s_ptilde = ss.spawn(3)
    spec = default_gaussian_spec(p_minor, sim.n_train)
    train = gaussian_sample(spec, philox(s_train))
    test_star = gaussian_sample(spec.with_joint(minority_joint(0.25), sim.n_test), philox(s_pstar))
    test_tilde = gaussian_sample(spec.with_joint(spec.joint, sim.n_test), philox(s_ptilde))
    rows = []
    for model, eps in (("baseline", sim.eps_baseline), ("fair", sim.eps_fair)):
        t0 = time.perf_counter()
        try:
            clf = train_constrained(train, ConstraintSpec(FairKind.CRP, eps), cfg.solver_config(sim.iterations))
        except Exception as exc:
            raise RuntimeError(f"training failed at p_minor={p_minor}, repetition={rep}, "
                               f"model={model}: {exc}") from exc
        rows.append(ResultRow(
            "simulate", rep, _fmt_param(p_minor), model,
            evaluate(clf, test_star).accuracy,
            evaluate(clf, test_tilde).accuracy,
            evaluate(clf, train).gap,
            time.perf_counter() - t0,
        ))
    return rows


def run_simulate(cfg: ExperimentConfig, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, i, float(p), rep) for i, p in enumerate(cfg.simulate.p_minor)
            for rep in range(cfg.simulate.repetitions)]
    rows = [r for cell in _map(_simulate_cell, jobs, cfg.workers) for r in cell]
    write_results(out / "results.csv", rows)
    summary = summarize(rows)
    write_summary(out / "summary.csv", summary)
    return {"rows": len(rows), "summary": summary}


# -- geometry ----------------------------------------------------------------------

def shipped_fixture(name: str = "counterexample_v1") -> Path:
    return Path(str(resources.files("fairshift") / "fixtures" / name))


def load_instance(directory) -> tuple[RiskPolytope, GroupMarginal, GroupMarginal]:
    d = Path(directory)
    poly = load_polytope(d / "vertices.csv")
    ps = load_marginal(d / "pstar.csv")
    pt = load_marginal(d / "ptilde.csv")
    if ps.space != poly.space or pt.space != poly.space:
        raise DataError(f"{d}: marginals and vertices use different groups/disc values")
    return poly, ps, pt


def check_counterexample(poly, p_star, p_tilde, fair: FairSubspace) -> dict:
    """Fair target optimum, yet the unconstrained training optimum does better on target."""
    bayes_fair = bayes_fair_check(poly, p_star, fair)
    _, argmin = minimize_linear(poly, p_tilde)
    r_tilde = poly.vertices[min(argmin, key=lambda i: tuple(poly.flat[i]))]
    try:
        _, rf, _ = minimize_linear_fair(poly, p_tilde, fair)
    except InfeasibleFairError:
        return {"ok": False, "bayes_fair": bayes_fair, "reason": "hull misses the fair subspace"}
    risk_u = overall_risk(p_star, r_tilde)
    risk_f = overall_risk(p_star, rf)
    return {
        "ok": bool(bayes_fair and len(argmin) == 1 and risk_u < risk_f),
        "bayes_fair": bayes_fair,
        "unique_training_argmin": len(argmin) == 1,
        "target_risk_unconstrained": risk_u,
        "target_risk_fair": risk_f,
        "harm": risk_f - risk_u,
        "r_tilde": r_tilde.copy(),
        "r_tilde_fair": rf.values.copy(),
    }


def threshold_sweep(r_tilde, r_fair, majority_index: int, points: int) -> list[dict]:
    th = rp_threshold(r_tilde, r_fair, majority_index)
    minority = 1 - majority_index
    rows = []
    for p in np.linspace(0.0, 1.0, points):
        marg = np.empty(2)
        marg[majority_index], marg[minority] = p, 1.0 - p
        ru = float(marg @ np.ravel(r_tilde))
        rfv = float(marg @ np.ravel(r_fair))
        rows.append({"p_majority": float(p), "risk_unconstrained": ru, "risk_fair": rfv,
                     "verdict_threshold": th.verdict(p),
                     "verdict_direct": "HARM" if ru <= rfv else "HELP"})
    return rows


def crossings(sweep: list[dict]) -> list[float]:
    out = []
    for prev, cur in zip(sweep, sweep[1:]):
        a = prev["risk_unconstrained"] - prev["risk_fair"]
        b = cur["risk_unconstrained"] - cur["risk_fair"]
        if a == 0.0:
            continue
        if a * b < 0 or b == 0.0:
            # linear in p: interpolate the root
            p0, p1 = prev["p_majority"], cur["p_majority"]
            out.append(p0 + (p1 - p0) * a / (a - b))
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def run_geometry(cfg: ExperimentConfig, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    g = cfg.geometry
    fixture = Path(g.fixture) if g.fixture else shipped_fixture()
    poly, ps, pt = load_instance(fixture)
    fair = FairSubspace(poly.space, FairKind.CRP)
    report = {"fixture": str(fixture), "counterexample": check_counterexample(poly, ps, pt, fair)}

    if g.vertices:
        rp_poly = load_polytope(g.vertices)
        if rp_poly.space.shape != (2, 1):
            raise DataError("geometry.vertices must be a two-group polytope with trivial V")
        p_tilde = np.array([g.p_tilde_majority, 1.0 - g.p_tilde_majority])
        maj = 0 if g.majority_index < 0 else g.majority_index
        if maj == 1:
            p_tilde = p_tilde[::-1]
        _, argmin = minimize_linear(rp_poly, p_tilde)
        r_tilde = rp_poly.vertices[min(argmin, key=lambda i: tuple(rp_poly.flat[i]))].ravel()
        _, rf, _ = minimize_linear_fair(rp_poly, p_tilde, FairSubspace(rp_poly.space, FairKind.RP))
        r_fair = rf.values.ravel()
    else:
        _, p_tilde, maj, r_tilde, r_fair = random_rp2_instance(np.random.default_rng(cfg.seed))
    sweep = threshold_sweep(r_tilde, r_fair, maj, g.sweep_points)
    th = rp_threshold(r_tilde, r_fair, maj)
    with (out / "threshold_sweep.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(sweep[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(sweep)
    report["threshold"] = {
        "p_tilde": p_tilde, "majority_index": maj, "r_tilde": r_tilde, "r_tilde_fair": r_fair,
        "threshold": th.threshold, "comparator": th.comparator, "crossings": crossings(sweep),
        "verdicts_agree": all(r["verdict_threshold"] == r["verdict_direct"] for r in sweep
                              if abs(r["risk_unconstrained"] - r["risk_fair"]) > 1e-9),
    }
    report = _jsonable(report)
    (out / "geometry_report.json").write_text(json.dumps(report, indent=2) + "\n")
    if not report["counterexample"]["ok"]:
        raise GeometryCheckError(f"fixture {fixture} is not a valid counterexample: "
                                 f"{report['counterexample']}")
    return report


# -- tabular ----------------------------------------------------------------------

DOWNLOAD_HINT = (
    "Tabular runs need a local CSV. COMPAS: download compas-scores-two-years.csv from "
    "https://github.com/propublica/compas-analysis ; Adult: adult.data from the UCI "
    "repository (add a header row). Point [tabular] path at the file."
)


def tabular_schema(t: TabularBlock) -> TabularSchema:
    try:
        return TabularSchema(numeric=list(t.numeric), categorical=list(t.categorical),
                             protected=list(t.protected), label=t.label, positive=str(t.positive),
                             protected_binarize=dict(t.protected_binarize))
    except SchemaError as exc:
        raise ConfigError(f"[tabular] {exc}") from None


def _tabular_rep(job):
    cfg, data, n_numeric, rep = job
    t = cfg.tabular
    ss = cell_seed(cfg.seed, 0, rep)
    s_split, s_star = ss.spawn(2)
    train, test = split_train_test(data, t.ratio, s_split)
    test_star = make_pstar_testset(test, s_star)
    train, (test, test_star), _ = standardize(train, [test, test_star], n_numeric)
    rows = []
    for model, eps in (("baseline", t.eps_baseline), ("fair", t.eps_fair)):
        t0 = time.perf_counter()
        clf = train_constrained(train, ConstraintSpec(FairKind.CRP, eps), cfg.solver_config(t.iterations))
        rows.append(ResultRow("tabular", rep, t.name, model,
                              evaluate(clf, test_star).accuracy, evaluate(clf, test).accuracy,
                              evaluate(clf, train).gap, time.perf_counter() - t0))
    return rows


def run_tabular(cfg: ExperimentConfig, out: Path) -> dict:
    t = cfg.tabular
    if not t.path:
        raise DataError("no dataset path given. " + DOWNLOAD_HINT)
    if not Path(t.path).exists():
        raise DataError(f"dataset file not found: {t.path}. " + DOWNLOAD_HINT)
    schema = tabular_schema(t)
    loaded = load_csv(t.path, schema)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, loaded.dataset, loaded.n_numeric, rep) for rep in range(t.repetitions)]
    rows = [r for rep in _map(_tabular_rep, jobs, cfg.workers) for r in rep]
    write_results(out / "results.csv", rows)
    summary = summarize(rows)
    write_summary(out / "summary.csv", summary)
    return {"rows": len(rows), "dropped_rows": loaded.dropped_rows, "summary": summary}


# -- audit ------------------------------------------------------------------------

def audit(poly: RiskPolytope, ps: GroupMarginal, pt: GroupMarginal, kind: FairKind,
          majority_index: int = -1) -> dict:
    fair = FairSubspace(poly.space, kind)
    orth, resid = decompose_bias(ps, pt, fair)
    report = {
        "fair": kind.value,
        "groups": list(poly.space.groups),
        "disc_values": list(poly.space.disc_values),
        "bias_norm": float(np.linalg.norm(pt.probs - ps.probs)),
        "orthogonal_part_norm": float(np.linalg.norm(orth)),
        "residual_part_norm": float(np.linalg.norm(resid)),
        "orthogonal_bias": orthogonality_check(ps, pt, fair),
    }
    try:
        verdict = recovery_condition(poly, ps, pt, fair)
    except AssumptionError as exc:
        report["bayes_fair"] = False
        report["recoverable"] = None
        report["note"] = str(exc)
    else:
        report["bayes_fair"] = True
        report["recoverable"] = verdict.recoverable
        report["r_star"] = verdict.r_star.values
        report["fair_optimum_under_bias"] = verdict.fair_optimum_under_bias.values
        report["certificate"] = verdict.certificate
        report["path"] = ("sufficient: bias lies in F-perp" if report["orthogonal_bias"]
                          else "normal-cone LP")
    if poly.space.shape == (2, 1):
        maj = int(np.argmax(pt.probs.ravel())) if majority_index < 0 else majority_index
        _, argmin = minimize_linear(poly, pt)
        r_tilde = poly.vertices[min(argmin, key=lambda i: tuple(poly.flat[i]))].ravel()
        try:
            _, rf, _ = minimize_linear_fair(poly, pt, FairSubspace(poly.space, FairKind.RP))
        except InfeasibleFairError:
            report["harm_threshold"] = None
        else:
            th = rp_threshold(r_tilde, rf.values.ravel(), maj)
            report["harm_threshold"] = {"majority_index": maj, "threshold": th.threshold,
                                        "comparator": th.comparator,
                                        "verdict_at_pstar": th.verdict(float(ps.probs.ravel()[maj]))}
    return _jsonable(report)


def run_audit(cfg: ExperimentConfig, out: Path | None = None) -> dict:
    a = cfg.audit
    missing = [k for k in ("vertices", "pstar", "ptilde") if not getattr(a, k)]
    if missing:
        raise ConfigError(f"[audit] needs file paths for {missing}")
    for k in ("vertices", "pstar", "ptilde"):
        if not Path(getattr(a, k)).exists():
            raise DataError(f"[audit] {k} file not found: {getattr(a, k)}")
    try:
        poly = load_polytope(a.vertices)
        ps = load_marginal(a.pstar)
        pt = load_marginal(a.ptilde)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    if ps.space != poly.space or pt.space != poly.space:
        raise DataError("vertices and marginals use different groups/disc values")
    report = audit(poly, ps, pt, FairKind(a.fair), a.majority_index)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "audit_report.json").write_text(json.dumps(report, indent=2) + "\n")
    return report


RUNNERS = {"simulate": run_simulate, "geometry": run_geometry, "tabular": run_tabular,
           "audit": run_audit}
