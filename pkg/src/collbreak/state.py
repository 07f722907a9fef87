"""Finite-cap cluster distributions, their moments and initial-state constructors."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable

import numpy as np


class StateError(ValueError):
    """Raised when a state or an initial-state request is inconsistent."""


@dataclass(frozen=True, eq=False)
class StateVector:
    """Number densities ``w_1..w_N`` plus mass ledgers.

    ``leaked_mass`` accumulates the mass of fragments produced above the cap.
    ``clamped_mass`` accumulates ``sum i * w_i`` over entries that the
    integrator reset from small negative values to zero (so it is <= 0), which
    makes ``M1 + leaked_mass + clamped_mass`` the conserved quantity.
    """

    counts: np.ndarray
    leaked_mass: float = 0.0
    clamped_mass: float = 0.0

    def __post_init__(self) -> None:
        c = np.array(self.counts, dtype=float)
        if c.ndim != 1 or c.size == 0:
            raise StateError("counts must be a non-empty 1-d array")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "leaked_mass", float(self.leaked_mass))
        object.__setattr__(self, "clamped_mass", float(self.clamped_mass))

    @property
    def cap(self) -> int:
        return self.counts.size

    @property
    def sizes(self) -> np.ndarray:
        return np.arange(1, self.cap + 1, dtype=float)

    def is_nonnegative(self) -> bool:
        return bool((self.counts >= 0).all()) and self.leaked_mass >= 0

    def with_counts(self, counts: np.ndarray, **ledgers: float) -> "StateVector":
        return replace(self, counts=counts, **ledgers)

    def resized(self, cap: int) -> "StateVector":
        """Zero-pad or cut to ``cap``; mass cut off is moved to the leak ledger."""
        c = self.counts
        if cap >= c.size:
            return self.with_counts(np.concatenate([c, np.zeros(cap - c.size)]))
        dropped = math.fsum(np.arange(cap + 1, c.size + 1) * c[cap:])
        return self.with_counts(c[:cap].copy(), leaked_mass=self.leaked_mass + dropped)

    def accounted_mass(self) -> float:
        return moment(self, 1.0) + self.leaked_mass + self.clamped_mass

    # CSV: header "i,w", one row per size, trailing comment lines with ledgers
    def to_csv(self, path: str | Path) -> None:
        Path(path).write_text(state_to_csv(self))

    @classmethod
    def from_csv(cls, path: str | Path) -> "StateVector":
        return state_from_csv(Path(path).read_text())


def _counts(w) -> np.ndarray:
    return w.counts if isinstance(w, StateVector) else np.asarray(w, dtype=float)


def moment(w, gamma: float) -> float:
    """``M_gamma(w) = sum_i i^gamma w_i`` (correctly rounded sum)."""
    c = _counts(w)
    i = np.arange(1, c.size + 1, dtype=float)
    return math.fsum(i**gamma * c)


@dataclass(frozen=True)
class MomentSet:
    orders: tuple[float, ...]
    values: tuple[float, ...]

    def __getitem__(self, gamma: float) -> float:
        return self.values[self.orders.index(gamma)]


def moments(w, orders: Iterable[float]) -> MomentSet:
    orders = tuple(float(g) for g in orders)
    return MomentSet(orders, tuple(moment(w, g) for g in orders))


def y1_distance(w, v) -> float:
    """``sum_i i |w_i - v_i|``; the shorter vector is zero-padded."""
    a, b = _counts(w), _counts(v)
    n = max(a.size, b.size)
    a = np.pad(a, (0, n - a.size))
    b = np.pad(b, (0, n - b.size))
    return math.fsum(np.arange(1, n + 1) * np.abs(a - b))


def y1_norm(w) -> float:
    c = _counts(w)
    return math.fsum(np.arange(1, c.size + 1) * np.abs(c))


def monomer_state(rho1: float, N: int) -> StateVector:
    c = np.zeros(N)
    c[0] = rho1
    return StateVector(c)


def make_initial(
    kind: str,
    rho0: float | None,
    rho1: float,
    N: int,
    eta: float | None = None,
    exponent: float = 2.5,
    support: int | None = None,
) -> StateVector:
    """Build an initial state with ``M1 = rho1`` (and ``M0 = rho0`` where the family allows).

    ``kind``:
      * ``monomer``: ``rho1`` monomers.
      * ``two_point``: ``(rho1 - 2 eta, eta, 0, ...)`` with ``M0 = rho1 - eta``.
        ``eta`` defaults to ``rho1 - rho0`` (so ``M0 = rho0``), which needs
        ``rho0 >= rho1 / 2``; admissible values satisfy
        ``0 < eta <= min(rho1 / 2, rho1 - rho0)``.
      * ``power_law``: ``w_i ~ i^-exponent`` on ``1..support`` scaled to
        ``M1 = rho1``, then mixed with monomers (``a w + b delta_1``) so that
        ``M0 = rho0``.
    """
    if N < 1:
        raise StateError("cap N must be >= 1")
    if not rho1 > 0:
        raise StateError("rho1 must be positive")
    if rho0 is not None and not 0 < rho0 <= rho1:
        raise StateError(f"need 0 < rho0 <= rho1, got rho0={rho0}, rho1={rho1}")

    if kind == "monomer":
        return monomer_state(rho1, N)

    if kind == "two_point":
        if N < 2:
            raise StateError("two_point needs N >= 2")
        if eta is None:
            if rho0 is None:
                raise StateError("two_point needs eta or rho0")
            eta = rho1 - rho0
        upper = rho1 / 2 if rho0 is None else min(rho1 / 2, rho1 - rho0)
        if not 0 < eta <= upper * (1 + 1e-15):
            raise StateError(
                f"cannot satisfy moment constraints: eta={eta} not in (0, {upper}]"
            )
        c = np.zeros(N)
        c[0] = max(rho1 - 2 * eta, 0.0)
        c[1] = eta
        return StateVector(c)

    if kind == "power_law":
        n = N if support is None else min(int(support), N)
        if n < 2 and rho0 is not None and rho0 < rho1:
            raise StateError("cannot satisfy moment constraints: support too small")
        i = np.arange(1, n + 1, dtype=float)
        c = i**-exponent
        c *= rho1 / math.fsum(i * c)
        if rho0 is not None:
            m0, m1 = math.fsum(c), math.fsum(i * c)
            if rho0 == rho1:
                return monomer_state(rho1, N)
            # a * (m1, m0) + b * (1, 1) = (rho1, rho0)
            a = (rho1 - rho0) / (m1 - m0)
            b = rho1 - a * m1
            if a <= 0 or a * c[0] + b < 0:
                raise StateError(
                    f"cannot satisfy moment constraints: M0={rho0} unreachable for exponent {exponent}"
                )
            c = a * c
            c[0] += b
        out = np.zeros(N)
        out[:n] = c
        return StateVector(out)

    raise StateError(f"unknown initial-state kind {kind!r}")


def state_to_csv(w: StateVector) -> str:
    lines = ["i,w"]
    lines += [f"{i},{float(x)!r}" for i, x in enumerate(w.counts, 1)]
    lines.append(f"# leaked_mass={w.leaked_mass!r}")
    lines.append(f"# clamped_mass={w.clamped_mass!r}")
    return "\n".join(lines) + "\n"


def state_from_csv(text: str) -> StateVector:
    ledgers = {"leaked_mass": 0.0, "clamped_mass": 0.0}
    values: list[float] = []
    lines = text.splitlines()
    if not lines or lines[0].strip() != "i,w":
        raise StateError("state CSV must start with header 'i,w'")
    for line in lines[1:]:
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            if key in ledgers:
                ledgers[key] = float(val)
            continue
        i, x = line.split(",")
        if int(i) != len(values) + 1:
            raise StateError(f"state CSV rows must be consecutive, got i={i}")
        values.append(float(x))
    return StateVector(np.array(values), **ledgers)
