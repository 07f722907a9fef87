"""Stationary solutions: long-time flow and an accelerated fixed-point search."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .daughter import validate_daughter
from .integrator import Integrator, IntegratorConfig, StiffnessError
from .report import CheckReport
from .rhs import Problem, residual_norm, rhs
from .state import StateVector, moment, y1_distance

logger = logging.getLogger(__name__)


@dataclass
class StationaryResult:
    """Outcome of a stationary search.

    ``iterations`` counts fixed-point iterations (accelerated) or checkpoints
    (flow); ``horizon`` is the flow time used. ``history`` holds
    ``(t or iteration, residual)`` pairs.
    """

    state: StateVector
    residual: float
    method: str
    converged: bool
    iterations: int = 0
    horizon: float = 0.0
    fell_back: bool = False
    history: list[tuple[float, float]] = field(default_factory=list)
    note: str = ""

    @property
    def properties(self) -> dict[str, float]:
        return stationary_properties(self.state)

    def to_json(self) -> str:
        d = {k: v for k, v in asdict(self).items() if k not in ("state", "history")}
        d["properties"] = self.properties
        d["history"] = [list(h) for h in self.history]
        return json.dumps(d, indent=2)


def tail_mass(w, start: int | None = None) -> float:
    """Mass ``sum_{i > start} i w_i``; ``start`` defaults to half the cap."""
    c = w.counts if isinstance(w, StateVector) else np.asarray(w, dtype=float)
    start = c.size // 2 if start is None else start
    return math.fsum(np.arange(start + 1, c.size + 1) * c[start:])


def stationary_properties(w: StateVector) -> dict[str, float]:
    c = w.counts
    return {
        "M0": moment(w, 0.0),
        "M1": moment(w, 1.0),
        "M2": moment(w, 2.0),
        "w1": float(c[0]),
        "non_monomers": math.fsum(c[1:]),
        "tail_mass": tail_mass(w),
    }


def stationary_residual(w, problem: Problem) -> float:
    """``sum_i i |rate_i|`` on the cap plus the mass flux leaving it."""
    return residual_norm(w, problem) + abs(rhs(w, problem).leak_rate)


def default_eta(rho0: float, rho1: float) -> float:
    """Midpoint of the admissible dimer density ``(0, min{rho1/2, rho1 - rho0})``."""
    return 0.5 * min(rho1 / 2, rho1 - rho0)


def find_stationary_by_flow(
    w0: StateVector,
    problem: Problem,
    tol: float = 1e-10,
    t_max: float = 1e3,
    config: IntegratorConfig | None = None,
    t_first: float = 1.0,
) -> StationaryResult:
    """Integrate with checkpoints at ``t_first * 2^k`` until the residual is below ``tol``."""
    if not tol > 0 or not t_max > 0:
        raise ValueError("tol and t_max must be positive")
    res = stationary_residual(w0, problem)
    history = [(0.0, res)]
    if res <= tol:
        return StationaryResult(w0, res, "flow", True, 0, 0.0, history=history)
    drv = Integrator(w0, problem, config)
    t = min(t_first, t_max)
    k = 0
    while True:
        k += 1
        state = drv.advance_to(t)
        res = stationary_residual(state, problem)
        history.append((t, res))
        logger.debug("flow checkpoint t=%g residual=%.3e", t, res)
        if res <= tol or t >= t_max:
            return StationaryResult(state, res, "flow", res <= tol, k, t, history=history)
        t = min(2 * t, t_max)


def _project(x: np.ndarray, rho0: float, rho1: float, keep_number: bool) -> np.ndarray:
    """Clip to ``x >= 0`` and restore ``M1`` (and ``M0`` when ``keep_number``) by ``a x + b e_1``."""
    x = np.maximum(x, 0.0)
    sizes = np.arange(1, x.size + 1, dtype=float)
    m1 = math.fsum(sizes * x)
    if keep_number:
        m0 = math.fsum(x)
        if m1 > m0:
            a = (rho1 - rho0) / (m1 - m0)
            b = rho1 - a * m1
            if a > 0 and x[0] * a + b >= 0:
                x = a * x
                x[0] += b
                return x
    return x * (rho1 / m1) if m1 > 0 else x


def find_stationary_accelerated(
    w0: StateVector,
    problem: Problem,
    tol: float = 1e-10,
    max_iter: int = 20000,
    memory: int = 5,
    keep_number: bool | None = None,
    fallback_t_max: float = 1e3,
    config: IntegratorConfig | None = None,
) -> StationaryResult:
    """Anderson-accelerated iteration of ``g(w) = w + h rhs(w)``.

    ``h`` is the largest step for which ``g`` maps nonnegative states to
    nonnegative states. After each update the iterate is clipped at zero and
    moved back onto the moment constraints. ``memory=0`` is plain Picard. On
    divergence or stagnation the flow method takes over from the best iterate.
    ``keep_number=None`` restores ``M0`` only if the daughter is number conserving.

    The Picard map never decreases ``M0`` (nor ``M0 - w1`` for dimer-keeping
    daughters). When those quantities are not conserved the fixed points can
    form a continuum, and an unguarded mixed step may jump to one the dynamics
    cannot reach. Such steps are replaced by a Picard step and the history is
    cleared.
    """
    if memory < 0:
        raise ValueError("memory must be >= 0")
    checks = validate_daughter(problem.daughter, 32)
    if keep_number is None:
        keep_number = checks["number_conserving"].passed
    dimer_keeping = checks["dimer_keeping"].passed
    k_, l = problem.kernel, problem.truncation
    x = np.array(w0.counts, dtype=float)
    n = x.size
    sizes = np.arange(1, n + 1, dtype=float)
    rho0, rho1 = math.fsum(x), math.fsum(sizes * x)
    f, g = k_.factors(n, l)

    def gmap(v: np.ndarray) -> np.ndarray:
        s_f, s_g = math.fsum(f * v), math.fsum(g * v)
        h = 1.0 / float(np.max(k_.A * (f * s_g + g * s_f)))
        return v + h * rhs(v, problem).rate

    slack = 1e-14 * rho1

    def admissible(new: np.ndarray, old: np.ndarray) -> bool:
        m0_new, m0_old = math.fsum(new), math.fsum(old)
        if m0_new < m0_old - slack:
            return False
        return not dimer_keeping or m0_new - new[0] >= m0_old - old[0] - slack

    res = stationary_residual(x, problem)
    history: list[tuple[float, float]] = [(0.0, res)]
    best_x, best_res = x, res
    if res <= tol:
        return StationaryResult(StateVector(x), res, "accelerated", True, 0, history=history)

    dF: list[np.ndarray] = []
    dG: list[np.ndarray] = []
    gx = gmap(x)
    fx = gx - x
    reason = f"no convergence in {max_iter} iterations"
    for it in range(1, max_iter + 1):
        if memory and dF:
            Fm = np.column_stack(dF) * sizes[:, None]
            gamma, *_ = np.linalg.lstsq(Fm, fx * sizes, rcond=None)
            x_new = gx - np.column_stack(dG) @ gamma
        else:
            x_new = gx
        x_new = _project(x_new, rho0, rho1, keep_number)
        if dF and not admissible(x_new, x):
            x_new = _project(gx, rho0, rho1, keep_number)
            dF.clear()
            dG.clear()
        res = stationary_residual(x_new, problem)
        history.append((float(it), res))
        if not math.isfinite(res) or res > 1e6 * max(best_res, tol):
            reason = f"diverged at iteration {it}"
            break
        if res < best_res:
            best_x, best_res = x_new, res
        if res <= tol:
            return StationaryResult(StateVector(x_new), res, "accelerated", True, it, history=history)
        gx_new = gmap(x_new)
        fx_new = gx_new - x_new
        if memory:
            dF.append(fx_new - fx)
            dG.append(gx_new - gx)
            if len(dF) > memory:
                dF.pop(0)
                dG.pop(0)
        x, gx, fx = x_new, gx_new, fx_new

    logger.info("accelerated search fell back to flow: %s", reason)
    start = StateVector(best_x)
    try:
        flow = find_stationary_by_flow(start, problem, tol, fallback_t_max, config)
    except StiffnessError as exc:
        return StationaryResult(
            exc.state, stationary_residual(exc.state, problem), "flow", False,
            len(history) - 1, exc.t, True, history, f"{reason}; flow failed: {exc}",
        )
    flow.fell_back = True
    flow.note = reason
    flow.history = history + flow.history
    return flow


@dataclass(frozen=True)
class StationaryExpectations:
    """What :func:`verify_stationary` should assert.

    ``rho0`` is the initial number density; under number conservation it must
    be reproduced exactly, under dimer keeping it is a lower bound.
    """

    rho0: float
    rho1: float
    number_conserving: bool = False
    dimer_keeping: bool = False
    tol: float = 1e-10
    moment_rtol: float = 1e-8
    tail_rtol: float = 1e-10
    strict_margin: float = 1e-12


def verify_stationary(result: StationaryResult, expectations: StationaryExpectations) -> list[CheckReport]:
    e = expectations
    p = stationary_properties(result.state)
    out = [
        CheckReport.from_violation("residual", result.residual, e.tol),
        CheckReport.from_violation("mass", abs(p["M1"] - e.rho1), e.moment_rtol * e.rho1),
        CheckReport.from_violation("tail", p["tail_mass"], e.tail_rtol * e.rho1, f"i>{result.state.cap // 2}"),
    ]
    if e.number_conserving:
        out.append(CheckReport.from_violation("m0_conserved", abs(p["M0"] - e.rho0), e.moment_rtol * e.rho0))
        if e.rho0 < e.rho1:
            # a state with M0 < M1 cannot be all monomers
            out.append(
                CheckReport.from_violation(
                    "nontrivial", e.strict_margin * e.rho1 - p["non_monomers"], 0.0,
                    detail=f"non_monomers={p['non_monomers']!r}",
                )
            )
    else:
        out.append(CheckReport.not_applicable("m0_conserved", "daughter is not number conserving"))
    if e.dimer_keeping:
        out.append(
            CheckReport.from_violation(
                "w1_below_m0", e.strict_margin * e.rho1 - (p["M0"] - p["w1"]), 0.0,
                detail=f"M0-w1={p['M0'] - p['w1']!r}",
            )
        )
        out.append(CheckReport.from_violation("m0_lower", e.rho0 - p["M0"], e.moment_rtol * e.rho0))
    else:
        out.append(CheckReport.not_applicable("w1_below_m0", "daughter does not keep two non-monomers"))
    return out


def stationary_distance(a: StationaryResult | StateVector, b: StationaryResult | StateVector) -> float:
    sa = a.state if isinstance(a, StationaryResult) else a
    sb = b.state if isinstance(b, StationaryResult) else b
    return y1_distance(sa, sb)


SWEEP_COLUMNS = ("rho0", "rho1", "eta", "converged", "residual", "w1_star", "M0_star", "tail_mass")


def sweep_row(rho0: float, rho1: float, eta: float | None, result: StationaryResult) -> dict[str, object]:
    p = result.properties
    return {
        "rho0": rho0,
        "rho1": rho1,
        "eta": "" if eta is None else eta,
        "converged": int(result.converged),
        "residual": result.residual,
        "w1_star": p["w1"],
        "M0_star": p["M0"],
        "tail_mass": p["tail_mass"],
    }
