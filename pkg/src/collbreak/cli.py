"""Command-line entry point: ``collbreak {validate,simulate,stationary,sweep} --config run.json``.

Exit codes: 0 success, 1 check failure, 2 configuration error, 3 integrator
failure, 4 non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .analysis import CHECKS, CheckParams, check_trajectory
from .daughter import (
    DaughterError,
    DaughterSpec,
    IncompleteTableError,
    daughter_from_dict,
    fit_moment_constants,
    mandatory_passed,
    validate_daughter,
)
from .integrator import IntegratorConfig, StiffnessError, default_sample_times, integrate
from .kernel import CollisionKernel, KernelError
from .report import all_passed, reports_to_json
from .rhs import Problem, write_pair_flux_csv
from .state import StateError, StateVector, make_initial, y1_distance
from .stationary import (
    SWEEP_COLUMNS,
    StationaryExpectations,
    StationaryResult,
    default_eta,
    find_stationary_accelerated,
    find_stationary_by_flow,
    sweep_row,
    verify_stationary,
)

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_INTEGRATOR, EXIT_UNCONVERGED = 0, 1, 2, 3, 4

logger = logging.getLogger("collbreak")


class ConfigError(ValueError):
    """Unreadable or inconsistent run configuration."""


@dataclass(frozen=True)
class InitialConfig:
    kind: str = "monomer"
    rho0: float | None = None
    rho1: float = 1.0
    N: int = 256
    eta: float | None = None
    exponent: float = 2.5
    support: int | None = None
    perturbation: float = 0.0

    def build(self, seed: int) -> StateVector:
        w = make_initial(self.kind, self.rho0, self.rho1, self.N, self.eta, self.exponent, self.support)
        return perturb(w, self.perturbation, seed) if self.perturbation else w


@dataclass(frozen=True)
class StationaryConfig:
    method: str = "flow"
    tol: float = 1e-10
    t_max: float = 1e3
    max_iter: int = 20000
    memory: int = 5

    def __post_init__(self) -> None:
        if self.method not in ("flow", "accelerated"):
            raise ConfigError(f"unknown stationary method {self.method!r}")


@dataclass(frozen=True)
class ValidateConfig:
    jk_max: int = 64
    moment_orders: tuple[float, ...] = (2.0,)
    fit_jk_max: int = 256


@dataclass(frozen=True)
class RunConfig:
    kernel: CollisionKernel
    daughter: DaughterSpec
    daughter_block: dict[str, Any]
    initial: InitialConfig = InitialConfig()
    truncation: int | None = None
    integrator: IntegratorConfig = IntegratorConfig()
    T: float = 10.0
    checks: tuple[str, ...] | None = None
    check_m: float = 2.0
    plateau: float | None = None
    stationary: StationaryConfig = StationaryConfig()
    sweep: dict[str, list[float]] = field(default_factory=dict)
    validate: ValidateConfig = ValidateConfig()
    snapshot_times: tuple[float, ...] = ()
    debug_pair_flux: bool = False
    out: str | None = None
    seed: int = 0

    @property
    def problem(self) -> Problem:
        return Problem(self.kernel, self.daughter, self.truncation)


def _block(cls, d: Mapping[str, Any] | None, name: str):
    d = dict(d or {})
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown keys in '{name}': {sorted(unknown)}")
    for key in ("moment_orders",):
        if key in d:
            d[key] = tuple(d[key])
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{name}' block: {exc}") from None


TOP_KEYS = {
    "kernel", "daughter", "initial", "truncation", "integrator", "T", "checks", "check_m",
    "plateau", "stationary", "sweep", "validate", "snapshot_times", "debug_pair_flux", "out", "seed",
}


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return config_from_dict(raw, base_dir=path.parent)


def config_from_dict(raw: Mapping[str, Any], base_dir: str | Path | None = None) -> RunConfig:
    if not isinstance(raw, Mapping):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    for key in ("kernel", "daughter"):
        if key not in raw:
            raise ConfigError(f"config lacks '{key}' block")
    try:
        kernel = CollisionKernel.from_dict(raw["kernel"])
        daughter = daughter_from_dict(raw["daughter"], base_dir)
    except (KernelError, DaughterError, OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    checks = raw.get("checks")
    if checks is not None:
        bad = set(checks) - set(CHECKS)
        if bad:
            raise ConfigError(f"unknown checks {sorted(bad)}")
        checks = tuple(checks)
    sweep = {k: [float(x) for x in v] for k, v in dict(raw.get("sweep") or {}).items()}
    if set(sweep) - {"rho0", "rho1", "eta"}:
        raise ConfigError("sweep keys must be among rho0, rho1, eta")
    T = float(raw.get("T", 10.0))
    if not T > 0:
        raise ConfigError("horizon T must be positive")
    truncation = raw.get("truncation")
    cfg = RunConfig(
        kernel=kernel,
        daughter=daughter,
        daughter_block=dict(raw["daughter"]),
        initial=_block(InitialConfig, raw.get("initial"), "initial"),
        truncation=None if truncation is None else int(truncation),
        integrator=_block(IntegratorConfig, raw.get("integrator"), "integrator"),
        T=T,
        checks=checks,
        check_m=float(raw.get("check_m", 2.0)),
        plateau=raw.get("plateau"),
        stationary=_block(StationaryConfig, raw.get("stationary"), "stationary"),
        sweep=sweep,
        validate=_block(ValidateConfig, raw.get("validate"), "validate"),
        snapshot_times=tuple(float(t) for t in raw.get("snapshot_times", ())),
        debug_pair_flux=bool(raw.get("debug_pair_flux", False)),
        out=raw.get("out"),
        seed=int(raw.get("seed", 0)),
    )
    if cfg.truncation is not None and cfg.truncation < 1:
        raise ConfigError("truncation must be >= 1")
    return cfg


def perturb(w: StateVector, size: float, seed: int) -> StateVector:
    """Add a seeded nonnegative perturbation of ``Y1`` norm ``size`` on the support of ``w``."""
    rng = np.random.default_rng(seed)
    support = w.counts > 0
    u = np.where(support, rng.random(w.cap), 0.0)
    u *= size / math.fsum(w.sizes * u)
    return w.with_counts(w.counts + u)


# ---------------------------------------------------------------- schema

SCHEMA: dict[str, dict[str, str]] = {
    "trajectory.csv": {
        "time": "sample time",
        "M0": "number density sum_i w_i",
        "M1": "mass density sum_i i w_i on the cap",
        "M2": "second moment",
        "M<g>": "moment of order g (extra orders, M_alpha and M_{1+beta})",
        "w1": "monomer density",
        "leak": "cumulative mass of fragments produced above the cap",
        "clamp": "cumulative mass booked when small negative entries were reset to zero (<= 0)",
    },
    "state CSV (final_state.csv, snapshots/state_t*.csv, stationary_state.csv)": {
        "i": "cluster size 1..N",
        "w": "number density of size-i clusters",
        "# leaked_mass=": "footer: leak ledger",
        "# clamped_mass=": "footer: clamp ledger",
    },
    "pair_flux.csv": {"s": "combined size p+q", "c": "sum over ordered pairs p+q=s of a_pq w_p w_q"},
    "sweep.csv": {
        "rho0": "initial number density",
        "rho1": "initial mass density",
        "eta": "dimer density of the two-point start (blank if not swept)",
        "converged": "1 if the residual tolerance was met",
        "residual": "sum_i i |dw_i/dt| plus the leak flux at the returned state",
        "w1_star": "monomer density of the returned state",
        "M0_star": "number density of the returned state",
        "tail_mass": "mass above size N/2",
        "status": "ok or an error message",
    },
    "sweep_distances.csv": {"a": "row index", "b": "row index", "y1_distance": "sum_i i |w_i - v_i|"},
}


def write_schema(out: Path) -> None:
    (out / "schema.json").write_text(json.dumps(SCHEMA, indent=2) + "\n")


# ---------------------------------------------------------------- commands


def cmd_validate(cfg: RunConfig, out: Path) -> int:
    vc = cfg.validate
    reports = validate_daughter(cfg.daughter, vc.jk_max)
    fits = []
    if "complete" not in reports:
        for m in vc.moment_orders:
            try:
                fits.append(asdict(fit_moment_constants(cfg.daughter, m, vc.fit_jk_max)))
            except IncompleteTableError as exc:
                fits.append({"m": m, "error": f"table incomplete: {exc}"})
    doc = {
        "kernel": {**cfg.kernel.to_dict(), "admissible": True},
        "daughter": cfg.daughter_block,
        "checks": json.loads(reports_to_json(reports.values())),
        "mandatory_passed": mandatory_passed(reports),
        "moment_fits": fits,
    }
    (out / "validation.json").write_text(json.dumps(doc, indent=2, default=_json_default) + "\n")
    for r in reports.values():
        logger.info("%-18s %s  violation=%.3e", r.name, "ok" if r.passed else "FAIL", r.violation)
    return EXIT_OK if mandatory_passed(reports) else EXIT_CHECK


def _json_default(x):
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    raise TypeError(f"not serializable: {type(x).__name__}")


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    w0 = cfg.initial.build(cfg.seed)
    problem = cfg.problem
    if cfg.debug_pair_flux:
        write_pair_flux_csv(w0, problem, out / "pair_flux.csv")
    sample = None
    if cfg.snapshot_times:
        sample = np.union1d(default_sample_times(cfg.T, cfg.integrator.observable_stride), cfg.snapshot_times)
    try:
        traj = integrate(w0, cfg.T, cfg.integrator, problem, sample_times=sample, store_states=True)
    except StiffnessError as exc:
        exc.state.to_csv(out / "failure_state.csv")
        logger.error("integrator failure: %s", exc)
        return EXIT_INTEGRATOR
    traj.to_csv(out / "trajectory.csv")
    traj.final_state.to_csv(out / "final_state.csv")
    if cfg.snapshot_times:
        traj.write_snapshots(out / "snapshots", cfg.snapshot_times)
    params = CheckParams.for_problem(problem, m=cfg.check_m, plateau=cfg.plateau)
    reports = check_trajectory(traj, cfg.checks, params)
    (out / "checks.json").write_text(reports_to_json(reports) + "\n")
    for r in reports:
        logger.info("%-22s %s  violation=%.3e", r.name, "ok" if r.passed else "FAIL", r.violation)
    return EXIT_OK if all_passed(reports) else EXIT_CHECK


def _initial_for_stationary(
    init: InitialConfig, eta: float | None, rho0: float | None, rho1: float, dimer_keeping: bool
) -> StateVector:
    """Two-point starts under dimer keeping default to the midpoint ``eta``; otherwise ``M0 = rho0``."""
    eta = init.eta if eta is None else eta
    if init.kind == "two_point" and eta is None and dimer_keeping and rho0 is not None and rho0 < rho1:
        eta = default_eta(rho0, rho1)
    return make_initial(init.kind, rho0, rho1, init.N, eta, init.exponent, init.support)


def _keeps_dimers(problem: Problem) -> bool:
    return validate_daughter(problem.daughter, 64)["dimer_keeping"].passed


def run_stationary(
    w0: StateVector, problem: Problem, sc: StationaryConfig, icfg: IntegratorConfig
) -> StationaryResult:
    if sc.method == "flow":
        return find_stationary_by_flow(w0, problem, sc.tol, sc.t_max, icfg)
    return find_stationary_accelerated(
        w0, problem, sc.tol, sc.max_iter, sc.memory, fallback_t_max=sc.t_max, config=icfg
    )


def _expectations(problem: Problem, w0: StateVector, tol: float) -> StationaryExpectations:
    v = validate_daughter(problem.daughter, 64)
    return StationaryExpectations(
        rho0=float(np.sum(w0.counts)),
        rho1=float(w0.sizes @ w0.counts),
        number_conserving=v["number_conserving"].passed,
        dimer_keeping=v["dimer_keeping"].passed,
        tol=tol,
    )


def cmd_stationary(cfg: RunConfig, out: Path) -> int:
    init = cfg.initial
    w0 = _initial_for_stationary(init, None, init.rho0, init.rho1, _keeps_dimers(cfg.problem))
    try:
        result = run_stationary(w0, cfg.problem, cfg.stationary, cfg.integrator)
    except StiffnessError as exc:
        logger.error("integrator failure: %s", exc)
        return EXIT_INTEGRATOR
    result.state.to_csv(out / "stationary_state.csv")
    reports = verify_stationary(result, _expectations(cfg.problem, w0, cfg.stationary.tol))
    doc = json.loads(result.to_json())
    doc["checks"] = json.loads(reports_to_json(reports))
    (out / "stationary.json").write_text(json.dumps(doc, indent=2) + "\n")
    logger.info("method=%s converged=%s residual=%.3e", result.method, result.converged, result.residual)
    if not result.converged:
        return EXIT_UNCONVERGED
    return EXIT_OK if all_passed(reports) else EXIT_CHECK


def _sweep_cell(args) -> tuple[dict[str, object], np.ndarray | None]:
    cfg, rho0, rho1, eta = args
    try:
        w0 = _initial_for_stationary(cfg.initial, eta, rho0, rho1, _keeps_dimers(cfg.problem))
        res = run_stationary(w0, cfg.problem, cfg.stationary, cfg.integrator)
    except (StateError, StiffnessError, ValueError) as exc:
        row = {c: "" for c in SWEEP_COLUMNS}
        row.update(rho0=rho0, rho1=rho1, eta="" if eta is None else eta, status=f"error: {exc}")
        return row, None
    row = sweep_row(rho0, rho1, eta, res)
    row["status"] = "ok"
    return row, np.array(res.state.counts)


def sweep_cells(cfg: RunConfig) -> list[tuple[float, float, float | None]]:
    init = cfg.initial
    rho0s = cfg.sweep.get("rho0", [init.rho0] if "eta" in cfg.sweep else [])
    rho1s = cfg.sweep.get("rho1", [init.rho1])
    etas: list[float | None] = list(cfg.sweep.get("eta", [None]))
    return [(r0, r1, e) for r0 in rho0s for r1 in rho1s for e in etas]


def cmd_sweep(cfg: RunConfig, out: Path, jobs: int = 1) -> int:
    cells = sweep_cells(cfg)
    if not cells or any(not cfg.sweep.get(k, [0]) for k in cfg.sweep):
        logger.error("sweep grid is empty")
        return EXIT_CONFIG
    tasks = [(cfg, r0, r1, e) for r0, r1, e in cells]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_cell, tasks))
    else:
        results = [_sweep_cell(t) for t in tasks]
    cols = [*SWEEP_COLUMNS, "status"]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    writer.writeheader()
    for row, _ in results:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    (out / "sweep.csv").write_text(buf.getvalue())
    states = [(i, s) for i, (_, s) in enumerate(results) if s is not None]
    lines = ["a,b,y1_distance"]
    for x, (i, a) in enumerate(states):
        for j, b in states[x + 1 :]:
            lines.append(f"{i},{j},{y1_distance(a, b)!r}")
    (out / "sweep_distances.csv").write_text("\n".join(lines) + "\n")
    failed = sum(1 for row, _ in results if row["status"] != "ok")
    logger.info("sweep: %d cells, %d failed", len(results), failed)
    return EXIT_CHECK if failed == len(results) else EXIT_OK


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON run configuration")
    common.add_argument("--out", help="output directory (overrides config 'out')")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    common.add_argument("--seed", type=int, help="seed for randomized perturbations (overrides config)")
    common.add_argument("--verbose", "-v", action="store_true")
    parser = argparse.ArgumentParser(prog="collbreak", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("validate", "check daughter conditions and fit moment constants"),
        ("simulate", "integrate and run trajectory checks"),
        ("stationary", "search for a stationary state"),
        ("sweep", "stationary searches over a (rho0, rho1) or eta grid"),
    ):
        sub.add_parser(name, parents=[common], help=text)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        out = Path(args.out or cfg.out or "out")
        out.mkdir(parents=True, exist_ok=True)
        write_schema(out)
        if args.command == "validate":
            return cmd_validate(cfg, out)
        if args.command == "simulate":
            return cmd_simulate(cfg, out)
        if args.command == "stationary":
            return cmd_stationary(cfg, out)
        return cmd_sweep(cfg, out, args.jobs)
    except (ConfigError, StateError, KernelError, DaughterError) as exc:
        print(f"collbreak: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
