"""Outer loops, configuration, verification and reporting.

This is the multi-query driver around the hierarchy: it draws seeded
parameter streams, runs them through a scenario ("parabolic" or
"optdemo"), writes one CSV row per query, and aggregates summaries.  The
`baseline` entry point answers the same stream with the reference model
alone (adaptation disabled, so the cheap stages never become ready), which
is the speedup reference.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import fom, mlsurrogate, optdemo, rb
from .errors import ConfigurationError
from .hierarchy import (REFERENCE, ModelHierarchy, ParameterBox, StatsSummary,
                        summarize)
from .rng import SplitMix64

CSV_EVENT_SEP = ";"
MAX_STAGES = 3  # fixed CSV schema: dur_s1..dur_s3


# ----------------------------------------------------------------------
# Configuration


@dataclass
class FomConfig:
    n_h: int = 200
    K: int = 100
    T: float = 1.0
    Q: int = 2
    source: str = "one"
    u0: str = "zero"


@dataclass
class RbConfig:
    pod_tol: float = 1e-13
    n_add_max: int = 12
    N_max: int = 60


@dataclass
class MlConfig:
    n_min: int = 10
    lengthscale: object = 0.12  # box-scaled units; "median" selects the heuristic
    ridge: float = 1e-8


@dataclass
class OptConfig:
    TOL_grad: float = 1e-3
    max_iters: int = 500
    delay_s: float = 0.002


@dataclass
class OutputConfig:
    results_path: str = "results.csv"
    dumps: dict = field(default_factory=dict)  # {"trajectory"|"basis"|"training": path}


@dataclass
class RunConfig:
    scenario: str = "parabolic"
    tolerance: float = 1e-3
    n_queries: int = 400
    seed: int = 42
    parameter_box: list = None
    fom: FomConfig = field(default_factory=FomConfig)
    rb: RbConfig = field(default_factory=RbConfig)
    ml: MlConfig = None  # scenario-dependent default, see __post_init__
    opt: OptConfig = field(default_factory=OptConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def __post_init__(self):
        if self.scenario not in ("parabolic", "optdemo"):
            raise ConfigurationError(f"unknown scenario {self.scenario!r}")
        if self.ml is None:
            # the optimization surrogate interpolates sharply clustered
            # descent data and needs a much smaller ridge than the
            # coefficient surrogate
            self.ml = (MlConfig() if self.scenario == "parabolic"
                       else MlConfig(ridge=optdemo.OPT_RIDGE_DEFAULT))
        if self.tolerance < 0:
            raise ConfigurationError("tolerance must be >= 0")
        if self.n_queries < 0:
            raise ConfigurationError("n_queries must be >= 0")
        if not (0 <= int(self.seed) < 2**64):
            raise ConfigurationError("seed must fit in 64 bits")
        if self.parameter_box is None:
            self.parameter_box = ([[0.1, 10.0]] * self.fom.Q
                                  if self.scenario == "parabolic"
                                  else [[-5.0, 5.0], [-5.0, 5.0]])
        for pair in self.parameter_box:
            if len(pair) != 2 or not float(pair[0]) < float(pair[1]):
                raise ConfigurationError(f"bad box interval {pair!r}")
        if self.scenario == "parabolic":
            if len(self.parameter_box) != self.fom.Q:
                raise ConfigurationError("parameter box dimension must equal fom.Q")
            if any(float(pair[0]) <= 0 for pair in self.parameter_box):
                raise ConfigurationError("diffusivity box must be positive")

    @property
    def box(self) -> ParameterBox:
        return ParameterBox(self.parameter_box)

    @property
    def hierarchy_tolerance(self) -> float:
        """TOL of the acceptance check; the gradient threshold for optdemo."""
        return self.opt.TOL_grad if self.scenario == "optdemo" else self.tolerance


def _coerce_section(cls, data, name):
    if not isinstance(data, dict):
        raise ConfigurationError(f"config section {name!r} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigurationError(f"unknown keys {sorted(unknown)} in section {name!r}")
    return cls(**data)


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigurationError("config must be a JSON object")
    data = dict(data)
    sections = {"fom": FomConfig, "rb": RbConfig, "ml": MlConfig,
                "opt": OptConfig, "output": OutputConfig}
    kwargs = {}
    for key, value in data.items():
        if key in sections:
            kwargs[key] = _coerce_section(sections[key], value, key)
        elif key in {f.name for f in dataclasses.fields(RunConfig)}:
            kwargs[key] = value
        else:
            raise ConfigurationError(f"unknown config key {key!r}")
    try:
        return RunConfig(**kwargs)
    except TypeError as err:
        raise ConfigurationError(str(err)) from None


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as err:
        raise ConfigurationError(f"config is not valid JSON: {err}") from None
    return config_from_dict(data)


def default_config(scenario: str = "parabolic", **overrides) -> RunConfig:
    config = RunConfig(scenario=scenario)
    for key, value in overrides.items():
        if not hasattr(config, key):
            raise ConfigurationError(f"unknown config key {key!r}")
        setattr(config, key, value)
    return config


# ----------------------------------------------------------------------
# Scenario wiring


@dataclass
class Scenario:
    hierarchy: ModelHierarchy
    levels_total: int
    system: fom.AffineSystem = None
    rb_level: rb.ReducedBasisLevel = None
    ml_level: mlsurrogate.MLCoefficientLevel = None
    oracle: optdemo.ObjectiveOracle = None
    opt_surrogate: optdemo.SurrogateObjectiveLevel = None

    def basis_n(self) -> int:
        return self.rb_level.basis.N if self.rb_level is not None else 0

    def ml_n(self) -> int:
        if self.ml_level is not None:
            return self.ml_level.training.n
        if self.opt_surrogate is not None:
            return self.opt_surrogate.training.n
        return 0


def build_scenario(config: RunConfig, adaptation_enabled: bool = True) -> Scenario:
    box = config.box
    if config.scenario == "parabolic":
        system = fom.assemble(config.fom.n_h, config.fom.K, config.fom.T,
                              config.fom.Q, source=config.fom.source,
                              u0=config.fom.u0)
        fom_level = fom.FullOrderLevel(system)
        rb_level = rb.ReducedBasisLevel(system, pod_tol=config.rb.pod_tol,
                                        n_add_max=config.rb.n_add_max,
                                        n_max=config.rb.N_max)
        ml_level = mlsurrogate.MLCoefficientLevel(
            box, rb_level, n_min=config.ml.n_min,
            lengthscale=config.ml.lengthscale, ridge=config.ml.ridge)
        hierarchy = ModelHierarchy([ml_level, rb_level, fom_level],
                                   tolerance=config.hierarchy_tolerance,
                                   box=box, adaptation_enabled=adaptation_enabled)
        return Scenario(hierarchy=hierarchy, levels_total=3, system=system,
                        rb_level=rb_level, ml_level=ml_level)

    oracle = optdemo.ObjectiveOracle(delay_s=config.opt.delay_s)
    full_level = optdemo.FullObjectiveLevel(oracle, box,
                                            max_iters=config.opt.max_iters)
    surrogate = optdemo.SurrogateObjectiveLevel(
        oracle, box, n_min=config.ml.n_min,
        lengthscale=config.ml.lengthscale, ridge=config.ml.ridge,
        max_iters=config.opt.max_iters)
    hierarchy = ModelHierarchy([surrogate, full_level],
                               tolerance=config.hierarchy_tolerance,
                               box=box, adaptation_enabled=adaptation_enabled)
    return Scenario(hierarchy=hierarchy, levels_total=2, oracle=oracle,
                    opt_surrogate=surrogate)


def draw_parameters(config: RunConfig) -> np.ndarray:
    """The seeded query stream: component-ordered SplitMix64 draws."""
    rng = SplitMix64(config.seed)
    box = config.box
    return np.array([box.sample(rng) for _ in range(config.n_queries)]
                    ).reshape(config.n_queries, box.dim)


# ----------------------------------------------------------------------
# Results CSV


def csv_header(dim: int) -> str:
    mu_cols = ",".join(f"mu_{i + 1}" for i in range(dim))
    return (f"query_id,{mu_cols},stage,estimate,qoi,"
            f"dur_s1,dur_s2,dur_s3,basis_n,ml_n,events")


def _fmt(value: float) -> str:
    if not math.isfinite(value):
        raise ConfigurationError(f"non-finite value {value!r} in results")
    return format(value, ".17g")


def result_row(record, qoi: float, basis_n: int, ml_n: int) -> str:
    answer = record.answer
    estimate = "ref" if answer.estimate is REFERENCE else _fmt(answer.estimate)
    durations = [0.0] * MAX_STAGES
    for attempt in record.answer.attempts:
        durations[attempt.stage - 1] = attempt.duration_s
    events = CSV_EVENT_SEP.join(f"{s}>{t}" for s, t in record.adaptation_events)
    cells = ([str(record.query_id)] + [_fmt(v) for v in record.mu]
             + [str(answer.stage), estimate, _fmt(qoi)]
             + [format(d, ".6e") for d in durations]
             + [str(basis_n), str(ml_n), events])
    return ",".join(cells)


# ----------------------------------------------------------------------
# run / baseline


@dataclass
class RunResult:
    config: RunConfig
    records: list
    summary: StatsSummary
    rows: list
    qoi_values: np.ndarray
    certified_bounds: np.ndarray  # per-sample c_l * Delta (0 for reference rows)
    wall_s: float
    scenario: Scenario

    @property
    def qoi_mean(self) -> float:
        return float(self.qoi_values.mean()) if len(self.qoi_values) else 0.0

    @property
    def qoi_mean_bound(self) -> float:
        return (float(self.certified_bounds.mean())
                if len(self.certified_bounds) else 0.0)


def _write_rows(path, dim: int, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(csv_header(dim) + "\n")
        for row in rows:
            fh.write(row + "\n")


def _execute(config: RunConfig, adaptation_enabled: bool) -> RunResult:
    scenario = build_scenario(config, adaptation_enabled=adaptation_enabled)
    parameters = draw_parameters(config)
    rows, qois, bounds = [], [], []
    c_l = scenario.system.qoi_const if scenario.system is not None else 1.0

    def on_record(record):
        payload = record.answer.payload
        qoi = payload.qoi if config.scenario == "parabolic" else payload.j
        rows.append(result_row(record, qoi, scenario.basis_n(), scenario.ml_n()))
        qois.append(qoi)
        bounds.append(0.0 if record.answer.estimate is REFERENCE
                      else c_l * record.answer.estimate)

    t0 = time.perf_counter()
    records = scenario.hierarchy.run_query_stream(parameters, on_record=on_record)
    wall_s = time.perf_counter() - t0

    result = RunResult(config=config, records=records,
                       summary=summarize(records), rows=rows,
                       qoi_values=np.array(qois),
                       certified_bounds=np.array(bounds),
                       wall_s=wall_s, scenario=scenario)
    if config.output.results_path:
        _write_rows(config.output.results_path, config.box.dim, rows)
    _write_dumps(config, scenario, records)
    return result


def _write_dumps(config: RunConfig, scenario: Scenario, records) -> None:
    dumps = config.output.dumps or {}
    if "basis" in dumps and scenario.rb_level is not None:
        rb.dump_basis(scenario.rb_level.basis, scenario.rb_level.pod_tol,
                      dumps["basis"])
    if "training" in dumps and scenario.ml_level is not None:
        mlsurrogate.dump_training_set(scenario.ml_level.training, dumps["training"])
    if "trajectory" in dumps:
        for record in reversed(records):
            trajectory = getattr(record.answer.payload, "trajectory", None)
            if trajectory is not None:
                fom.dump_trajectory(trajectory, dumps["trajectory"])
                break


def run(config: RunConfig) -> RunResult:
    """Full adaptive hierarchy over the seeded stream."""
    return _execute(config, adaptation_enabled=True)


def baseline(config: RunConfig) -> RunResult:
    """Reference-model-only answers for the identical stream.

    Adaptation is disabled, so the surrogate stages never become ready and
    every query falls through to the top stage; same CSV schema.
    """
    return _execute(config, adaptation_enabled=False)


def format_summary(result: RunResult) -> str:
    s = result.summary
    lines = [f"scenario={result.config.scenario} queries={s.n_queries} "
             f"tolerance={result.config.hierarchy_tolerance:g} "
             f"seed={result.config.seed}"]
    for stage in range(1, result.scenario.levels_total + 1):
        mean = s.eval_mean_s.get(stage)
        mean_text = f"{mean * 1e3:9.3f} ms" if mean is not None else "      -   "
        lines.append(
            f"  stage {stage}: accepted {s.accepted.get(stage, 0):5d}   "
            f"evaluations {s.eval_count.get(stage, 0):5d}   "
            f"mean eval {mean_text}")
    if s.first_half is not None:
        first, second = s.first_half.accepted, s.second_half.accepted
        lines.append("  accepted per half: "
                     + " ".join(f"s{st}:{first.get(st, 0)}/{second.get(st, 0)}"
                                for st in range(1, result.scenario.levels_total + 1))
                     + "  (first/second)")
    lines.append(f"  adaptation events: {s.adaptation_total}")
    lines.append(f"  wall time: {result.wall_s:.3f} s")
    if result.config.scenario == "parabolic":
        lines.append(f"  qoi mean: {result.qoi_mean:.10g} "
                     f"(certified per-sample bound, mean: "
                     f"{result.qoi_mean_bound:.3e})")
    else:
        lines.append(f"  objective mean: {result.qoi_mean:.10g}")
    return "\n".join(lines)


# ----------------------------------------------------------------------
# verify


@dataclass
class Check:
    name: str
    value: float
    bound: float
    passed: bool
    note: str = ""


@dataclass
class VerifyReport:
    checks: list

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def format(self) -> str:
        lines = []
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            note = f"  ({c.note})" if c.note else ""
            lines.append(f"[{status}] {c.name}: value={c.value:.6e} "
                         f"bound={c.bound:.6e}{note}")
        lines.append("verify: " + ("all checks passed" if self.all_passed
                                   else "FAILURES present"))
        return "\n".join(lines)


def _analytic_error(n_h: int, K: int, T: float, Q: int) -> float:
    """Max-node error of the discrete solution against the closed-form
    single-sine heat mode e^{-pi^2 t} sin(pi x) at unit diffusivity."""
    system = fom.assemble(n_h, K, T, Q, source="zero", u0="sine")
    trajectory = fom.solve_fom(system, np.ones(Q))
    exact = math.exp(-math.pi**2 * T) * np.sin(np.pi * system.nodes())
    return float(np.max(np.abs(trajectory.states[-1] - exact)))


def verify(config: RunConfig, sabotage: bool = False) -> VerifyReport:
    """User-facing correctness suite; see README for the check list.

    ``sabotage`` is a test-only hook that flips a sign in the online
    residual Gramian, which must make the offline/online check fail.
    """
    checks = []
    fc = config.fom

    # 1. analytic heat mode at the configured resolution (T fixed at 0.1,
    #    the analytic configuration) with a resolution-aware bound, plus
    #    the refinement ratio of a (2 n_h + 1, 4 K) refinement.
    T_a = 0.1
    h = 1.0 / (fc.n_h + 1)
    dt = T_a / fc.K
    err_coarse = _analytic_error(fc.n_h, fc.K, T_a, fc.Q)
    bound = 3.0 * T_a * math.exp(-math.pi**2 * T_a) * math.pi**4 * (
        dt / 2.0 + h**2 / 12.0)
    checks.append(Check("fom analytic error (bound ~ h^2 + dt)",
                        err_coarse, bound, err_coarse <= bound,
                        note=f"n_h={fc.n_h} K={fc.K}"))
    err_fine = _analytic_error(2 * fc.n_h + 1, 4 * fc.K, T_a, fc.Q)
    ratio = err_coarse / err_fine if err_fine > 0 else float("inf")
    checks.append(Check("fom refinement ratio in [3.2, 4.8]", ratio, 4.8,
                        3.2 <= ratio <= 4.8))

    # 2. offline/online residual norm equality on random bases/coefficients
    system = fom.assemble(fc.n_h, fc.K, fc.T, fc.Q, source=fc.source, u0=fc.u0)
    worst = _offline_online_discrepancy(system, config, trials=50,
                                        sabotage=sabotage)
    checks.append(Check("offline/online residual norms (relative)",
                        worst, 1e-8, worst <= 1e-8))

    # 3. X-orthonormality of an adaptively grown basis
    basis = _grown_basis(system, config)
    gram = basis.V.T @ (system.X @ basis.V)
    ortho = float(np.max(np.abs(gram - np.eye(basis.N)))) if basis.N else 0.0
    checks.append(Check("basis X-orthonormality max|V^T X V - I|",
                        ortho, 1e-8, ortho <= 1e-8, note=f"N={basis.N}"))

    # 4. estimator rigor on random triples (true error by fresh FOM solves)
    margin = _rigor_margin(system, config, trials=25)
    checks.append(Check("estimator rigor min(Delta - true error)",
                        margin, -1e-10, margin >= -1e-10))
    return VerifyReport(checks)


def _random_basis(system, rng, n_vectors: int) -> rb.ReducedBasis:
    W = np.array([[rng.uniform(-1.0, 1.0) for _ in range(n_vectors)]
                  for _ in range(system.n_h)])
    V = rb._x_orthonormalize(system, np.zeros((system.n_h, 0)), W)
    return rb.ReducedBasis(V=V, generation=1)


def _offline_online_discrepancy(system, config, trials: int,
                                sabotage: bool = False) -> float:
    rng = SplitMix64(config.seed ^ 0xA5A5A5A5)
    box = config.box if config.scenario == "parabolic" else ParameterBox(
        [[0.1, 10.0]] * system.Q)
    worst = 0.0
    for _ in range(trials):
        basis = _random_basis(system, rng, 4)
        reduced_system = rb.build_reduced_system(system, basis)
        if sabotage:
            reduced_system = dataclasses.replace(reduced_system,
                                                 g_fm=-reduced_system.g_fm)
        mu = box.sample(rng)
        coeffs = np.array([[rng.uniform(-1.0, 1.0) for _ in range(basis.N)]
                           for _ in range(system.K + 1)])
        trajectory = rb.ReducedTrajectory(coefficients=coeffs, mu=mu,
                                          generation=1, producer="rb")
        online = rb.residual_dual_norms(reduced_system, mu, trajectory)
        direct = _direct_residual_norms(system, basis, mu, coeffs)
        scale = max(float(np.max(direct)), 1e-30)
        worst = max(worst, float(np.max(np.abs(online - direct))) / scale)
    return worst


def _direct_residual_norms(system, basis, mu, coeffs) -> np.ndarray:
    """Brute-force oracle: assemble each residual in full space and lift."""
    U = coeffs @ basis.V.T  # (K+1, n_h)
    norms = np.empty(system.K)
    for k in range(1, system.K + 1):
        r = (system.F - (system.M @ (U[k] - U[k - 1])) / system.dt
             - sum(m_q * (A_q @ U[k]) for m_q, A_q in zip(mu, system.A)))
        rho = system.x_solve(r)
        norms[k - 1] = np.sqrt(max(float(r @ rho), 0.0))
    return norms


def _grown_basis(system, config) -> rb.ReducedBasis:
    rng = SplitMix64(config.seed ^ 0x5A5A5A5A)
    box = (config.box if config.scenario == "parabolic"
           else ParameterBox([[0.1, 10.0]] * system.Q))
    basis = rb.ReducedBasis.empty(system.n_h)
    reduced_system = rb.build_reduced_system(system, basis)
    for _ in range(3):
        trajectory = fom.solve_fom(system, box.sample(rng))
        basis, reduced_system, _ = rb.extend_basis(
            basis, reduced_system, system, trajectory,
            pod_tol=config.rb.pod_tol, n_add_max=config.rb.n_add_max,
            n_max=config.rb.N_max)
    return basis


def _rigor_margin(system, config, trials: int) -> float:
    """min over samples of (Delta - true final-time M-norm error)."""
    rng = SplitMix64(config.seed ^ 0x3C3C3C3C)
    box = (config.box if config.scenario == "parabolic"
           else ParameterBox([[0.1, 10.0]] * system.Q))
    basis = _grown_basis(system, config)
    reduced_system = rb.build_reduced_system(system, basis)
    margin = float("inf")
    for trial in range(trials):
        mu = box.sample(rng)
        if trial % 2 == 0:
            trajectory = rb.solve_rb(reduced_system, mu)
        else:
            coeffs = np.array([[rng.uniform(-0.5, 0.5) for _ in range(basis.N)]
                               for _ in range(system.K + 1)])
            trajectory = rb.ReducedTrajectory(coefficients=coeffs, mu=mu,
                                              generation=basis.generation,
                                              producer="ml")
        delta = rb.error_estimate(reduced_system, mu, trajectory)
        u_true = fom.solve_fom(system, mu).states[-1]
        u_red = rb.reconstruct_final(basis, trajectory)
        margin = min(margin, delta - system.m_norm(u_true - u_red))
    return margin


# ----------------------------------------------------------------------
# report


@dataclass
class ReportSummary:
    n_queries: int
    stage_counts: dict
    stage_fractions: dict
    stage_mean_dur_s: dict
    adaptation_counts: dict
    adaptation_total: int
    halves_stage_counts: dict   # {"first": {...}, "second": {...}}
    qoi_mean: float
    qoi_mean_bound: float       # conservative: ||1||_M <= 1 for this domain

    def to_dict(self) -> dict:
        def k(d):  # JSON needs string keys
            return {str(key): val for key, val in d.items()}
        return {
            "n_queries": self.n_queries,
            "stage_counts": k(self.stage_counts),
            "stage_fractions": k(self.stage_fractions),
            "stage_mean_dur_s": k(self.stage_mean_dur_s),
            "adaptation_counts": {f"{s}>{t}": c for (s, t), c
                                  in sorted(self.adaptation_counts.items())},
            "adaptation_total": self.adaptation_total,
            "halves_stage_counts": {h: k(d) for h, d
                                    in self.halves_stage_counts.items()},
            "qoi_mean": self.qoi_mean,
            "qoi_mean_bound": self.qoi_mean_bound,
        }

    def format(self) -> str:
        lines = [f"queries: {self.n_queries}"]
        for stage in sorted(self.stage_counts):
            mean = self.stage_mean_dur_s.get(stage)
            mean_text = f"{mean * 1e3:9.3f} ms" if mean is not None else "        -"
            lines.append(f"  stage {stage}: {self.stage_counts[stage]:5d} "
                         f"({self.stage_fractions[stage]:7.2%})  mean dur {mean_text}")
        lines.append(f"  adaptation events: {self.adaptation_total} "
                     + " ".join(f"{s}>{t}:{c}" for (s, t), c
                                in sorted(self.adaptation_counts.items())))
        first = self.halves_stage_counts.get("first", {})
        second = self.halves_stage_counts.get("second", {})
        stages = sorted(set(first) | set(second))
        lines.append("  halves (first/second): "
                     + " ".join(f"s{st}:{first.get(st, 0)}/{second.get(st, 0)}"
                                for st in stages))
        lines.append(f"  qoi mean: {self.qoi_mean:.10g} "
                     f"+- {self.qoi_mean_bound:.3e} (certified)")
        return "\n".join(lines)


def _parse_row(line: str, dim: int, row_number: int):
    cells = line.split(",")
    # query_id + mu + (stage, estimate, qoi) + durations + (basis_n, ml_n) + events
    expected = 1 + dim + 3 + MAX_STAGES + 2 + 1
    if len(cells) != expected:
        raise ConfigurationError(
            f"results row {row_number}: expected {expected} cells, "
            f"got {len(cells)}")
    try:
        query_id = int(cells[0])
        mu = [float(c) for c in cells[1:1 + dim]]
        stage = int(cells[1 + dim])
        raw_estimate = cells[2 + dim]
        estimate = None if raw_estimate == "ref" else float(raw_estimate)
        if estimate is not None and (not math.isfinite(estimate) or estimate < 0):
            raise ValueError(f"bad estimate {raw_estimate!r}")
        qoi = float(cells[3 + dim])
        durations = [float(c) for c in cells[4 + dim:4 + dim + MAX_STAGES]]
        basis_n = int(cells[4 + dim + MAX_STAGES])
        ml_n = int(cells[5 + dim + MAX_STAGES])
        events = []
        if cells[-1]:
            for token in cells[-1].split(CSV_EVENT_SEP):
                src, tgt = token.split(">")
                events.append((int(src), int(tgt)))
        if not 1 <= stage <= MAX_STAGES:
            raise ValueError(f"stage {stage} out of range")
    except (ValueError, IndexError) as err:
        raise ConfigurationError(f"results row {row_number}: {err}") from None
    return (query_id, mu, stage, estimate, qoi, durations, basis_n, ml_n, events)


def read_results(path) -> tuple[int, list]:
    """Parse a results CSV; returns (parameter dimension, parsed rows)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh]
    if not lines:
        raise ConfigurationError("results file is empty (missing header)")
    header = lines[0].split(",")
    dim = sum(1 for cell in header if cell.startswith("mu_"))
    if dim == 0 or lines[0] != csv_header(dim):
        raise ConfigurationError("results header does not match the schema")
    rows = [_parse_row(line, dim, i + 1)
            for i, line in enumerate(lines[1:]) if line]
    return dim, rows


def report(path) -> ReportSummary:
    """Aggregate a results CSV into the standard summary."""
    _, rows = read_results(path)
    n = len(rows)
    stage_counts, dur_total, dur_count, adaptation = {}, {}, {}, {}
    qoi_sum = 0.0
    bound_sum = 0.0
    halves = {"first": {}, "second": {}}
    n_first = (n + 1) // 2
    for i, (_, _, stage, estimate, qoi, durations, _, _, events) in enumerate(rows):
        stage_counts[stage] = stage_counts.get(stage, 0) + 1
        half = "first" if i < n_first else "second"
        halves[half][stage] = halves[half].get(stage, 0) + 1
        qoi_sum += qoi
        if estimate is not None:
            bound_sum += estimate  # ||1||_M <= 1: conservative certified bound
        for s, duration in enumerate(durations, start=1):
            if duration > 0:
                dur_total[s] = dur_total.get(s, 0.0) + duration
                dur_count[s] = dur_count.get(s, 0) + 1
        for event in events:
            adaptation[event] = adaptation.get(event, 0) + 1
    return ReportSummary(
        n_queries=n,
        stage_counts=stage_counts,
        stage_fractions={s: c / n for s, c in stage_counts.items()} if n else {},
        stage_mean_dur_s={s: dur_total[s] / dur_count[s] for s in dur_total},
        adaptation_counts=adaptation,
        adaptation_total=sum(adaptation.values()),
        halves_stage_counts=halves,
        qoi_mean=qoi_sum / n if n else 0.0,
        qoi_mean_bound=bound_sum / n if n else 0.0,
    )


# ----------------------------------------------------------------------
# sharded mode (independent hierarchies on disjoint sub-streams)


def run_sharded(config: RunConfig, shards: int) -> list:
    """Split the seeded stream into contiguous blocks, one fresh hierarchy
    per block, separate output files.  This is a different experiment from
    the sequential run, not a parallelization of it."""
    if shards < 1:
        raise ConfigurationError("shards must be >= 1")
    parameters = draw_parameters(config)
    block = math.ceil(len(parameters) / shards) if len(parameters) else 0
    results = []
    for s in range(shards):
        chunk = parameters[s * block:(s + 1) * block]
        scenario = build_scenario(config, adaptation_enabled=True)
        rows = []

        def on_record(record, scenario=scenario, rows=rows, offset=s * block):
            record.query_id += offset
            payload = record.answer.payload
            qoi = payload.qoi if config.scenario == "parabolic" else payload.j
            rows.append(result_row(record, qoi, scenario.basis_n(),
                                   scenario.ml_n()))

        records = scenario.hierarchy.run_query_stream(chunk, on_record=on_record)
        path = f"{config.output.results_path}.shard{s}.csv"
        _write_rows(path, config.box.dim, rows)
        results.append((path, records))
    return results
