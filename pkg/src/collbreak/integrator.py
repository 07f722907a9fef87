"""Time integration of the capped system with positivity control and mass ledgers.

The leak rate is integrated with the same Runge-Kutta weights as the state, so
``M1 + leaked_mass`` is a linear invariant of the scheme and is preserved up
to rounding. Small negative entries produced by a step are reset to zero and
booked in ``clamped_mass``; larger ones reject the step.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .rhs import Problem, rhs
from .state import StateVector, moment

logger = logging.getLogger(__name__)

METHODS = ("rk45_adaptive", "euler_fixed")

# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = _A[6] + (0.0,)
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)


class StiffnessError(RuntimeError):
    """Step size fell below ``dt_min``; carries the last accepted state."""

    def __init__(self, message: str, state: StateVector, t: float):
        super().__init__(message)
        self.state = state
        self.t = t


@dataclass(frozen=True)
class IntegratorConfig:
    """Solver settings.

    ``atol=None`` resolves to ``1e-14 * M1(w0) / N`` and ``positivity_floor=None``
    to ``atol``. ``observable_stride`` is the sampling interval used when no
    explicit sample times are passed (``None`` gives 100 samples).
    """

    method: str = "rk45_adaptive"
    rtol: float = 1e-10
    atol: float | None = None
    dt_init: float = 1e-3
    dt_min: float = 1e-14
    dt_max: float = 50.0
    positivity_floor: float | None = None
    observable_stride: float | None = None
    moment_orders: tuple[float, ...] = ()
    policy: str = "drop_with_ledger"
    max_steps: int = 5_000_000

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not self.rtol > 0 or (self.atol is not None and not self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if not 0 < self.dt_min <= self.dt_init <= self.dt_max:
            raise ValueError("need 0 < dt_min <= dt_init <= dt_max")
        if self.observable_stride is not None and not self.observable_stride > 0:
            raise ValueError("observable_stride must be positive")
        object.__setattr__(self, "moment_orders", tuple(float(m) for m in self.moment_orders))

    def resolved_atol(self, w0: StateVector) -> float:
        if self.atol is not None:
            return self.atol
        m1 = moment(w0, 1.0)
        return 1e-14 * (m1 if m1 > 0 else 1.0) / w0.cap

    def resolved_floor(self, w0: StateVector) -> float:
        return self.resolved_atol(w0) if self.positivity_floor is None else self.positivity_floor


def _f(y: np.ndarray, problem: Problem, policy: str) -> tuple[np.ndarray, float]:
    r = rhs(y, problem, policy)
    return r.rate, r.leak_rate


def _clamp(y: np.ndarray, floor: float) -> tuple[np.ndarray, float, bool]:
    """Reset entries in ``[-floor, 0)`` to zero; report booked mass and whether the step is admissible."""
    neg = y < 0
    if not neg.any():
        return y, 0.0, True
    if (y[neg] < -floor).any():
        return y, 0.0, False
    sizes = np.flatnonzero(neg) + 1.0
    booked = math.fsum(sizes * y[neg])
    y = y.copy()
    y[neg] = 0.0
    return y, booked, True


def _rk45_attempt(y, leak, dt, k1, problem, policy, rtol, atol):
    ks = [k1]
    for stage in range(1, 7):
        incr = sum(a * k[0] for a, k in zip(_A[stage], ks) if a != 0.0)
        ks.append(_f(y + dt * incr, problem, policy))
    y_new = y + dt * sum(b * k[0] for b, k in zip(_B, ks) if b != 0.0)
    leak_new = leak + dt * math.fsum(b * k[1] for b, k in zip(_B, ks))
    err_vec = dt * sum(e * k[0] for e, k in zip(_E, ks) if e != 0.0)
    scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
    err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
    return y_new, leak_new, err, ks[6]


def step(
    w: StateVector, dt: float, config: IntegratorConfig, problem: Problem
) -> tuple[StateVector, float]:
    """One attempted step from ``w``.

    Returns the new state and the scaled error estimate (``<= 1`` means the step
    meets the tolerances). An estimate of ``inf`` signals a positivity rejection,
    in which case ``w`` is returned unchanged.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    atol, floor = config.resolved_atol(w), config.resolved_floor(w)
    y = w.counts
    k1 = _f(y, problem, config.policy)
    if config.method == "rk45_adaptive":
        y_new, leak_new, err, _ = _rk45_attempt(y, w.leaked_mass, dt, k1, problem, config.policy, config.rtol, atol)
    else:
        y_new = y + dt * k1[0]
        leak_new = w.leaked_mass + dt * k1[1]
        k2 = _f(np.maximum(y_new, 0.0), problem, config.policy)
        scale = atol + config.rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.sqrt(np.mean((0.5 * dt * (k2[0] - k1[0]) / scale) ** 2)))
    y_new, booked, ok = _clamp(y_new, floor)
    if not ok:
        return w, math.inf
    return StateVector(y_new, leak_new, w.clamped_mass + booked), err


@dataclass
class Trajectory:
    """Sampled observables (and optionally full states) of one run."""

    times: np.ndarray
    observables: dict[str, np.ndarray]
    states: list[StateVector] | None = None
    accepted_steps: int = 0
    rejected_steps: int = 0
    step_log: list[tuple[float, float, float, bool]] = field(default_factory=list)
    rtol: float = 1e-10
    atol: float = 0.0

    def __getitem__(self, name: str) -> np.ndarray:
        return self.observables[name]

    @property
    def final_state(self) -> StateVector:
        if not self.states:
            raise ValueError("trajectory was run without store_states")
        return self.states[-1]

    def columns(self) -> list[str]:
        return ["time", *self.observables]

    def to_csv(self, path: str | Path) -> None:
        Path(path).write_text(trajectory_to_csv(self))

    def write_snapshots(self, directory: str | Path, times: Iterable[float] | None = None) -> list[Path]:
        if self.states is None:
            raise ValueError("trajectory was run without store_states")
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        wanted = None if times is None else [float(t) for t in times]
        paths = []
        for t, s in zip(self.times, self.states):
            if wanted is not None and not any(math.isclose(t, u, rel_tol=1e-12, abs_tol=1e-15) for u in wanted):
                continue
            p = directory / f"state_t{float(t)!r}.csv"
            s.to_csv(p)
            paths.append(p)
        return paths


def moment_key(gamma: float) -> str:
    return f"M{float(gamma):g}"


def observable_orders(problem: Problem, extra: Sequence[float] = ()) -> list[float]:
    orders = [0.0, 1.0, 2.0, *extra, problem.kernel.alpha, 1.0 + problem.kernel.beta]
    seen: list[float] = []
    for g in orders:
        if float(g) not in seen:
            seen.append(float(g))
    return seen


def observe(w: StateVector, orders: Sequence[float]) -> dict[str, float]:
    out = {moment_key(g): moment(w, g) for g in orders}
    out["w1"] = float(w.counts[0])
    out["leak"] = w.leaked_mass
    out["clamp"] = w.clamped_mass
    return out


def trajectory_to_csv(traj: Trajectory) -> str:
    cols = traj.columns()
    lines = [",".join(cols)]
    for idx, t in enumerate(traj.times):
        row = [repr(float(t))] + [repr(float(traj.observables[c][idx])) for c in cols[1:]]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


class Integrator:
    """Stateful driver that can be advanced repeatedly (used by the stationary search)."""

    def __init__(self, w0: StateVector, problem: Problem, config: IntegratorConfig | None = None):
        self.config = config or IntegratorConfig()
        self.problem = problem
        self.state = w0
        self.t = 0.0
        self.dt = self.config.dt_init
        self.atol = self.config.resolved_atol(w0)
        self.floor = self.config.resolved_floor(w0)
        self.accepted = 0
        self.rejected = 0
        self.log: list[tuple[float, float, float, bool]] = []
        self._k1: tuple[np.ndarray, float] | None = None

    def advance_to(self, t_end: float) -> StateVector:
        cfg = self.config
        while self.t < t_end:
            if self.accepted + self.rejected >= cfg.max_steps:
                raise StiffnessError(f"step budget {cfg.max_steps} exhausted at t={self.t}", self.state, self.t)
            remaining = t_end - self.t
            dt = min(self.dt, cfg.dt_max)
            landing = dt >= remaining * (1 - 1e-12)
            if landing:
                dt = remaining
            accepted, err = self._attempt(dt)
            self.log.append((self.t, dt, err, accepted))
            if cfg.method == "euler_fixed":
                if not accepted:
                    raise StiffnessError(f"negative state with fixed step dt={dt} at t={self.t}", self.state, self.t)
                continue
            if accepted:
                fac = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err**-0.2))
                new_dt = dt * fac
                # keep the pre-landing step size proposal when the step was shortened
                self.dt = max(new_dt, self.dt) if landing and dt < self.dt else new_dt
            else:
                fac = 0.5 if not math.isfinite(err) else max(0.2, 0.9 * err**-0.2)
                self.dt = dt * min(fac, 0.9)
                if self.dt < cfg.dt_min:
                    raise StiffnessError(
                        f"step size {self.dt:.3e} below dt_min at t={self.t}", self.state, self.t
                    )
            self.dt = min(self.dt, cfg.dt_max)
        return self.state

    def _attempt(self, dt: float) -> tuple[bool, float]:
        cfg, problem = self.config, self.problem
        w = self.state
        y = w.counts
        if self._k1 is None:
            self._k1 = _f(y, problem, cfg.policy)
        if cfg.method == "rk45_adaptive":
            y_new, leak_new, err, k_last = _rk45_attempt(
                y, w.leaked_mass, dt, self._k1, problem, cfg.policy, cfg.rtol, self.atol
            )
            if not math.isfinite(err) or err > 1.0:
                self.rejected += 1
                return False, err
        else:
            y_new = y + dt * self._k1[0]
            leak_new = w.leaked_mass + dt * self._k1[1]
            err, k_last = 0.0, None
        y_new, booked, ok = _clamp(y_new, self.floor)
        if not ok:
            self.rejected += 1
            return False, math.inf
        self.state = StateVector(y_new, leak_new, w.clamped_mass + booked)
        self.t += dt
        self.accepted += 1
        # first-same-as-last reuse is only valid if clamping left the state untouched
        self._k1 = k_last if booked == 0.0 and k_last is not None else None
        return True, err


def default_sample_times(T: float, stride: float | None) -> np.ndarray:
    if stride is None:
        return np.linspace(0.0, T, 101)
    n = int(math.floor(T / stride + 1e-9))
    times = np.arange(n + 1) * stride
    if times[-1] < T * (1 - 1e-12):
        times = np.append(times, T)
    return times


def integrate(
    w0: StateVector,
    T: float,
    config: IntegratorConfig | None,
    problem: Problem,
    callbacks: Sequence[Callable[[float, StateVector], None]] = (),
    sample_times: Sequence[float] | None = None,
    store_states: bool = False,
) -> Trajectory:
    """Integrate on ``[0, T]``, sampling observables at ``sample_times``.

    Sampled observables: ``M0, M1, M2``, the configured extra orders,
    ``M_alpha`` and ``M_{1+beta}``, ``w1`` and the two ledgers.
    """
    if not T > 0:
        raise ValueError("horizon T must be positive")
    config = config or IntegratorConfig()
    if sample_times is None:
        times = default_sample_times(T, config.observable_stride)
    else:
        times = np.unique(np.clip(np.asarray(sample_times, dtype=float), 0.0, T))
        if times[0] > 0:
            times = np.insert(times, 0, 0.0)
    orders = observable_orders(problem, config.moment_orders)
    drv = Integrator(w0, problem, config)
    records: dict[str, list[float]] = {}
    states: list[StateVector] = []
    for t in times:
        s = drv.advance_to(float(t)) if t > 0 else w0
        for key, val in observe(s, orders).items():
            records.setdefault(key, []).append(val)
        if store_states:
            states.append(s)
        for cb in callbacks:
            cb(float(t), s)
    logger.debug("integrated to T=%g: %d accepted, %d rejected steps", T, drv.accepted, drv.rejected)
    return Trajectory(
        times=times,
        observables={k: np.asarray(v) for k, v in records.items()},
        states=states if store_states else None,
        accepted_steps=drv.accepted,
        rejected_steps=drv.rejected,
        step_log=drv.log,
        rtol=config.rtol,
        atol=drv.atol,
    )
