"""Closed-form constants and executable trajectory checks for the breakage dynamics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .daughter import validate_daughter
from .integrator import Trajectory, moment_key
from .report import CheckReport
from .rhs import Problem

CHECKS = (
    "mass",
    "m0_monotone",
    "m0_constant",
    "m_alpha_lower",
    "mm_bounded",
    "m0_minus_w1_monotone",
)


class AnalysisConfigError(ValueError):
    """A requested check needs an observable the trajectory does not carry."""


def delta0(rho0: float, rho1: float, alpha: float) -> float:
    """Lower bound ``min{rho0/2, (rho0/2)^(1-alpha) rho1^alpha}`` for ``M_alpha``."""
    if not 0 < rho0 <= rho1:
        raise ValueError(f"need 0 < rho0 <= rho1, got {rho0}, {rho1}")
    half = rho0 / 2
    return min(half, half ** (1 - alpha) * rho1**alpha)


def gronwall_envelope(A: float, R: float, T: float, d0: float) -> Callable[[float], float]:
    """``t -> d0 exp(4 A R t)`` on ``[0, T]``."""
    if not (A > 0 and R > 0 and T > 0) or d0 < 0:
        raise ValueError("A, R, T must be positive and d0 nonnegative")
    rate = 4.0 * A * R

    def bound(t):
        t_arr = np.asarray(t, dtype=float)
        if (t_arr < 0).any() or (t_arr > T * (1 + 1e-12)).any():
            raise ValueError(f"envelope defined on [0, {T}]")
        out = d0 * np.exp(rate * t_arr)
        return float(out) if out.ndim == 0 else out

    return bound


def _envelope_factor(t, m: float, beta: float):
    t = np.asarray(t, dtype=float)
    if (t <= 0).any():
        raise ValueError("moment envelope needs t > 0")
    return (1.0 + 1.0 / t) ** ((m - 1.0) / beta)


def moment_envelope(m: float, beta: float, F: float) -> Callable[[float], float]:
    """``t -> F (1 + 1/t)^((m - 1)/beta)`` for ``t > 0``."""
    if not m > 1 or not beta > 0:
        raise ValueError("need m > 1 and beta > 0")

    def bound(t):
        out = F * _envelope_factor(t, m, beta)
        return float(out) if out.ndim == 0 else out

    return bound


def fit_envelope_constant(
    times: Sequence[float],
    values: Sequence[float],
    m: float,
    beta: float,
    t_min: float = 0.0,
    t_max: float = math.inf,
) -> float:
    """``sup M_m(t) (1 + 1/t)^-((m-1)/beta)`` over samples with ``t_min <= t <= t_max``, ``t > 0``."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    sel = (t > 0) & (t >= t_min) & (t <= t_max)
    if not sel.any():
        raise ValueError("no samples in the fitting window")
    return float(np.max(v[sel] / _envelope_factor(t[sel], m, beta)))


@dataclass(frozen=True)
class CheckParams:
    """Inputs for :func:`check_trajectory`.

    ``number_conserving`` / ``dimer_keeping`` gate the ``m0_constant`` and
    ``m0_minus_w1_monotone`` checks. ``plateau=None`` takes the largest sample
    of ``M_m`` over the last half of the run. ``monotone_tol=None`` uses ten
    times the solver tolerance, scaled by the observable.
    """

    alpha: float
    number_conserving: bool = False
    dimer_keeping: bool = False
    m: float = 2.0
    plateau: float | None = None
    mass_tol: float = 1e-8
    constant_tol: float = 1e-8
    lower_tol: float = 1e-8
    bounded_rtol: float = 1e-8
    monotone_tol: float | None = None

    @classmethod
    def for_problem(cls, problem: Problem, jk_max: int = 64, **kw) -> "CheckParams":
        v = validate_daughter(problem.daughter, jk_max)
        return cls(
            alpha=problem.kernel.alpha,
            number_conserving=v["number_conserving"].passed,
            dimer_keeping=v["dimer_keeping"].passed,
            **kw,
        )


def _need(traj: Trajectory, *names: str) -> list[np.ndarray]:
    missing = [n for n in names if n not in traj.observables]
    if missing:
        raise AnalysisConfigError(f"trajectory lacks observables {missing}")
    return [np.asarray(traj.observables[n]) for n in names]


def _at(traj: Trajectory, idx: int) -> str:
    return f"t={float(traj.times[idx])!r}"


def _monotone(traj: Trajectory, name: str, series: np.ndarray, tol: float) -> CheckReport:
    if series.size < 2:
        return CheckReport.from_violation(name, 0.0, tol)
    drops = -np.diff(series)
    idx = int(np.argmax(drops))
    return CheckReport.from_violation(name, drops[idx], tol, _at(traj, idx + 1))


def _monotone_tol(traj: Trajectory, params: CheckParams, series: np.ndarray) -> float:
    if params.monotone_tol is not None:
        return params.monotone_tol
    return 10.0 * (traj.rtol * float(np.max(np.abs(series))) + traj.atol)


def check_trajectory(
    traj: Trajectory, suite: Sequence[str] | None, params: CheckParams
) -> list[CheckReport]:
    """Evaluate the selected checks (all of :data:`CHECKS` when ``suite`` is None) at every sample."""
    suite = CHECKS if suite is None else tuple(suite)
    unknown = set(suite) - set(CHECKS)
    if unknown:
        raise AnalysisConfigError(f"unknown checks {sorted(unknown)}")
    out: list[CheckReport] = []
    for name in suite:
        if name == "mass":
            m1, leak, clamp = _need(traj, "M1", "leak", "clamp")
            acc = m1 + leak + clamp
            dev = np.abs(acc - acc[0])
            idx = int(np.argmax(dev))
            out.append(CheckReport.from_violation(name, dev[idx], params.mass_tol * abs(acc[0]), _at(traj, idx)))
        elif name == "m0_monotone":
            (m0,) = _need(traj, "M0")
            out.append(_monotone(traj, name, m0, _monotone_tol(traj, params, m0)))
        elif name == "m0_constant":
            if not params.number_conserving:
                out.append(CheckReport.not_applicable(name, "daughter is not number conserving"))
                continue
            (m0,) = _need(traj, "M0")
            dev = np.abs(m0 - m0[0])
            idx = int(np.argmax(dev))
            out.append(CheckReport.from_violation(name, dev[idx], params.constant_tol * m0[0], _at(traj, idx)))
        elif name == "m_alpha_lower":
            m_a, m0, m1 = _need(traj, moment_key(params.alpha), "M0", "M1")
            bound = delta0(m0[0], m1[0], params.alpha)
            gap = bound - m_a
            idx = int(np.argmax(gap))
            out.append(
                CheckReport.from_violation(
                    name, gap[idx], params.lower_tol, _at(traj, idx), f"delta0={bound!r}"
                )
            )
        elif name == "mm_bounded":
            (mm,) = _need(traj, moment_key(params.m))
            plateau = params.plateau
            if plateau is None:
                plateau = float(np.max(mm[traj.times >= traj.times[-1] / 2]))
            bound = max(mm[0], plateau)
            excess = mm - bound
            idx = int(np.argmax(excess))
            out.append(
                CheckReport.from_violation(
                    name, excess[idx], params.bounded_rtol * bound, _at(traj, idx), f"plateau={plateau!r}"
                )
            )
        elif name == "m0_minus_w1_monotone":
            if not params.dimer_keeping:
                out.append(CheckReport.not_applicable(name, "daughter does not keep two non-monomers"))
                continue
            m0, w1 = _need(traj, "M0", "w1")
            series = m0 - w1
            out.append(_monotone(traj, name, series, _monotone_tol(traj, params, m0)))
    return out
