"""Daughter distributions ``B^s_{j,k}``: built-in families, validation and moment constants.

Rows are generated on demand from closed forms. For the right-hand side each
family also exposes a vectorised representation of its full table on sizes
``1..n``; which one depends on the family (see :mod:`collbreak.rhs`).
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .report import CheckReport

Row = list[tuple[int, float]]


class IncompleteTableError(KeyError):
    """A custom table has no entry for a requested collision pair."""


class DaughterError(ValueError):
    """Invalid daughter configuration."""


def _merge(entries) -> Row:
    acc: dict[int, float] = defaultdict(float)
    for s, w in entries:
        if w != 0.0:
            acc[int(s)] += float(w)
    return sorted((s, w) for s, w in acc.items() if w != 0.0)


class DaughterSpec:
    """Base class for fragment distributions.

    Subclasses implement :meth:`row`. The dense helpers below fall back to a
    coordinate (COO) table assembled row by row, which is fine for sparse
    families; dense families override :meth:`weighted_table`.
    """

    name = "daughter"
    #: whether ``B^i_{p,q}`` depends on ``(i, p + q)`` only
    separable = False

    def row(self, j: int, k: int) -> Row:
        raise NotImplementedError

    def separable_weight(self, i: np.ndarray, s: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"{self.name} is not separable in (i, j+k)")

    def coo(self, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Entries ``(p, q, s, weight)`` for all ordered pairs ``p, q <= n`` (1-based)."""
        cache = self.__dict__.setdefault("_coo_cache", {})
        if n not in cache:
            cache[n] = self._build_coo(n)
        return cache[n]

    def _build_coo(self, n: int):
        p_, q_, s_, w_ = [], [], [], []
        for p in range(1, n + 1):
            for q in range(1, n + 1):
                for s, w in self.row(p, q):
                    p_.append(p)
                    q_.append(q)
                    s_.append(s)
                    w_.append(w)
        return (
            np.asarray(p_, dtype=np.int64),
            np.asarray(q_, dtype=np.int64),
            np.asarray(s_, dtype=np.int64),
            np.asarray(w_, dtype=float),
        )

    def weighted_table(self, n: int, mu: np.ndarray) -> np.ndarray:
        """``T[j-1, k-1] = sum_s mu[s-1] B^s_{j,k}`` for ``j, k <= n``; ``mu`` covers sizes ``1..2n-1``."""
        p, q, s, w = self.coo(n)
        vals = w * np.asarray(mu, dtype=float)[s - 1]
        idx = (p - 1) * n + (q - 1)
        return np.bincount(idx, weights=vals, minlength=n * n).reshape(n, n)

    def moment_table(self, n: int, gamma: float, smin: int = 1) -> np.ndarray:
        """``T[j-1, k-1] = sum_{s >= smin} s^gamma B^s_{j,k}`` for ``j, k <= n``."""
        sizes = np.arange(1, 2 * n, dtype=float)
        return self.weighted_table(n, np.where(sizes >= smin, sizes**gamma, 0.0))

    def to_dict(self) -> dict[str, Any]:
        return {"variant": self.name}


@dataclass(frozen=True, eq=False)
class Uniform(DaughterSpec):
    """``B^s_{j,k} = 2 / (j + k - 1)`` for ``1 <= s <= j + k - 1``."""

    name = "uniform"
    separable = True

    def row(self, j: int, k: int) -> Row:
        n = j + k - 1
        w = 2.0 / n
        return [(s, w) for s in range(1, n + 1)]

    def separable_weight(self, i, s):
        i = np.asarray(i)
        s = np.asarray(s, dtype=float)
        return np.where(i < s, 2.0 / (s - 1.0), 0.0)

    def weighted_table(self, n: int, mu: np.ndarray) -> np.ndarray:
        # partial[t] = sum_{s <= t} mu_s
        partial = np.concatenate(([0.0], np.cumsum(np.asarray(mu, dtype=float)[: 2 * n - 1])))
        j = np.arange(1, n + 1)
        top = j[:, None] + j[None, :] - 1
        return 2.0 * partial[top] / top


@dataclass(frozen=True, eq=False)
class ShatterAttach(DaughterSpec):
    """One partner shatters into monomers, one of which sticks to the other.

    ``B_{1,k} = delta_1 + delta_k``; for ``j, k >= 2`` the collision yields
    ``(j + k - 2)/2`` monomers and half a cluster at each of ``j + 1``, ``k + 1``.
    """

    name = "shatter_attach"

    def row(self, j: int, k: int) -> Row:
        if j == 1 and k == 1:
            return [(1, 2.0)]
        if j == 1 or k == 1:
            return _merge([(1, 1.0), (max(j, k), 1.0)])
        return _merge([(1, (j + k - 2) / 2.0), (j + 1, 0.5), (k + 1, 0.5)])

    def _build_coo(self, n: int):
        P, Q = np.meshgrid(np.arange(1, n + 1), np.arange(1, n + 1), indexing="ij")
        P, Q = P.ravel(), Q.ravel()
        one = (P == 1) | (Q == 1)
        big = ~one
        blocks = [
            # monomer branch, including (1, 1) -> two monomers
            (P[one], Q[one], np.ones(one.sum(), dtype=np.int64), np.ones(one.sum())),
            (P[one], Q[one], np.maximum(P[one], Q[one]), np.ones(one.sum())),
            (P[big], Q[big], np.ones(big.sum(), dtype=np.int64), (P[big] + Q[big] - 2) / 2.0),
            (P[big], Q[big], P[big] + 1, np.full(big.sum(), 0.5)),
            (P[big], Q[big], Q[big] + 1, np.full(big.sum(), 0.5)),
        ]
        return _concat(blocks)


@dataclass(frozen=True, eq=False)
class KeepTwo(DaughterSpec):
    """Collisions between clusters of size >= 2 always leave a dimer behind.

    ``B_{1,k} = delta_1 + delta_k``, ``B_{2,2} = 2 delta_2``,
    ``B_{2,k} = delta_2 + delta_k`` (k >= 3) and, for ``j, k >= 3``,
    ``(j + k - 6)/2 delta_1 + delta_2 + (delta_{j+1} + delta_{k+1})/2``.
    """

    name = "keep_two"

    def row(self, j: int, k: int) -> Row:
        lo, hi = min(j, k), max(j, k)
        if lo == 1:
            return _merge([(1, 1.0), (hi, 1.0)])
        if lo == 2:
            return _merge([(2, 1.0), (hi, 1.0)])
        return _merge([(1, (j + k - 6) / 2.0), (2, 1.0), (j + 1, 0.5), (k + 1, 0.5)])

    def _build_coo(self, n: int):
        P, Q = np.meshgrid(np.arange(1, n + 1), np.arange(1, n + 1), indexing="ij")
        P, Q = P.ravel(), Q.ravel()
        lo, hi = np.minimum(P, Q), np.maximum(P, Q)
        small = lo <= 2
        big = ~small
        ones_s = np.ones(small.sum())
        mono = big & (P + Q > 6)
        blocks = [
            (P[small], Q[small], lo[small], ones_s),
            (P[small], Q[small], hi[small], ones_s),
            (P[mono], Q[mono], np.ones(mono.sum(), dtype=np.int64), (P[mono] + Q[mono] - 6) / 2.0),
            (P[big], Q[big], np.full(big.sum(), 2, dtype=np.int64), np.ones(big.sum())),
            (P[big], Q[big], P[big] + 1, np.full(big.sum(), 0.5)),
            (P[big], Q[big], Q[big] + 1, np.full(big.sum(), 0.5)),
        ]
        return _concat(blocks)


def _concat(blocks):
    p = np.concatenate([b[0] for b in blocks]).astype(np.int64)
    q = np.concatenate([b[1] for b in blocks]).astype(np.int64)
    s = np.concatenate([b[2] for b in blocks]).astype(np.int64)
    w = np.concatenate([b[3] for b in blocks]).astype(float)
    return p, q, s, w


def uniform_breakup(i: int, j: int) -> Row:
    """Breakup kernel ``b_{s,i;j}``: an ``i``-cluster splits uniformly into smaller sizes."""
    if i == 1:
        return [(1, 1.0)]
    w = 2.0 / (i - 1)
    return [(s, w) for s in range(1, i)]


@dataclass(frozen=True, eq=False)
class NoMassTransfer(DaughterSpec):
    """``B^s_{j,k} = 1[s <= j] b_{s,j;k} + 1[s <= k] b_{s,k;j}``.

    ``breakup(i, j)`` lists the fragments ``(s, b_{s,i;j})`` of an
    ``i``-cluster hit by a ``j``-cluster. When ``partner_independent`` the
    gain term reduces to a matrix-vector product with the loss term.
    """

    breakup: Callable[[int, int], Sequence[tuple[int, float]]] = uniform_breakup
    partner_independent: bool = True

    name = "no_mass_transfer"

    def row(self, j: int, k: int) -> Row:
        entries = [(s, w) for s, w in self.breakup(j, k) if 1 <= s <= j]
        entries += [(s, w) for s, w in self.breakup(k, j) if 1 <= s <= k]
        return _merge(entries)

    def breakup_matrix(self, n: int) -> np.ndarray:
        """``M[s-1, i-1] = b_{s,i}`` for a partner-independent breakup kernel."""
        if not self.partner_independent:
            raise DaughterError("breakup matrix needs a partner-independent breakup kernel")
        cache = self.__dict__.setdefault("_bmat_cache", {})
        if n not in cache:
            M = np.zeros((n, n))
            for i in range(1, n + 1):
                for s, w in self.breakup(i, 1):
                    if 1 <= s <= i:
                        M[s - 1, i - 1] += w
            cache[n] = M
        return cache[n]

    def weighted_table(self, n: int, mu: np.ndarray) -> np.ndarray:
        if not self.partner_independent:
            return super().weighted_table(n, mu)
        u = np.asarray(mu, dtype=float)[:n] @ self.breakup_matrix(n)
        return u[:, None] + u[None, :]


@dataclass(eq=False)
class CustomTable(DaughterSpec):
    """Explicit sparse table ``(j, k) -> [(s, B^s_{j,k})]``.

    A missing ``(j, k)`` falls back to the entry stored for ``(k, j)``.
    """

    entries: Mapping[tuple[int, int], Sequence[tuple[int, float]]] = field(default_factory=dict)
    source: str | None = None

    name = "custom"

    def row(self, j: int, k: int) -> Row:
        if (j, k) in self.entries:
            return _merge(self.entries[(j, k)])
        if (k, j) in self.entries:
            return _merge(self.entries[(k, j)])
        raise IncompleteTableError(f"incomplete table: no entry for (j, k) = ({j}, {k})")

    @classmethod
    def from_rule(cls, rule: Callable[[int, int], Sequence[tuple[int, float]]], n: int) -> "CustomTable":
        return cls({(j, k): list(rule(j, k)) for j in range(1, n + 1) for k in range(1, n + 1)})

    @classmethod
    def load(cls, path: str | Path) -> "CustomTable":
        """Read whitespace-separated ``j k s weight`` lines (``#`` starts a comment)."""
        entries: dict[tuple[int, int], list[tuple[int, float]]] = defaultdict(list)
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise DaughterError(f"{path}:{lineno}: expected 'j k s weight', got {line!r}")
            j, k, s = (int(x) for x in parts[:3])
            entries[(j, k)].append((s, float(parts[3])))
        return cls(dict(entries), source=str(path))

    def save(self, path: str | Path) -> None:
        lines = ["# j k s weight"]
        for (j, k) in sorted(self.entries):
            for s, w in self.entries[(j, k)]:
                lines.append(f"{j} {k} {s} {w!r}")
        Path(path).write_text("\n".join(lines) + "\n")

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"variant": self.name}
        if self.source is not None:
            d["table_path"] = self.source
        return d


BUILTIN_DAUGHTERS: dict[str, Callable[[], DaughterSpec]] = {
    "uniform": Uniform,
    "shatter_attach": ShatterAttach,
    "keep_two": KeepTwo,
    "no_mass_transfer": NoMassTransfer,
}


def daughter_from_dict(d: Mapping[str, Any], base_dir: str | Path | None = None) -> DaughterSpec:
    variant = str(d.get("variant", "")).lower()
    if variant in BUILTIN_DAUGHTERS:
        return BUILTIN_DAUGHTERS[variant]()
    if variant == "custom":
        if "table_path" not in d:
            raise DaughterError("custom daughter needs 'table_path'")
        path = Path(d["table_path"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return CustomTable.load(path)
    raise DaughterError(f"unknown daughter variant {variant!r}")


def daughter_row(spec: DaughterSpec, j: int, k: int) -> Row:
    if j < 1 or k < 1:
        raise ValueError(f"sizes must be >= 1, got ({j}, {k})")
    return spec.row(j, k)


MANDATORY_CHECKS = ("support", "symmetry", "mass", "fragment_count")


def validate_daughter(spec: DaughterSpec, jk_max: int = 64, tol: float = 1e-12) -> dict[str, CheckReport]:
    """Check the structural conditions on ``B`` for all ``j, k <= jk_max``.

    Mandatory: support and sign (``1 <= s <= j + k - 1``, weights >= 0),
    symmetry, local mass conservation and at least two fragments per collision.
    Informational: ``number_conserving`` (exactly two fragments on average) and
    ``dimer_keeping`` (the condition under which ``M0 - w1`` cannot decrease).
    """
    if jk_max < 2:
        raise ValueError("jk_max must be >= 2")
    n = jk_max
    try:
        rows = {(j, k): spec.row(j, k) for j in range(1, n + 1) for k in range(1, n + 1)}
    except IncompleteTableError as exc:
        return {"complete": CheckReport.from_violation("complete", 1.0, 0.0, detail=str(exc))}

    worst_support, loc_support = 0.0, ""
    worst_sym, loc_sym = 0.0, ""
    for (j, k), r in rows.items():
        for s, w in r:
            bad = max(-w, 0.0) + (1.0 if not 1 <= s <= j + k - 1 else 0.0)
            if bad > worst_support:
                worst_support, loc_support = bad, f"(j,k,s)=({j},{k},{s})"
        if j < k:
            a, b = dict(r), dict(rows[(k, j)])
            for s in a.keys() | b.keys():
                d = abs(a.get(s, 0.0) - b.get(s, 0.0))
                if d > worst_sym:
                    worst_sym, loc_sym = d, f"(j,k,s)=({j},{k},{s})"

    J = np.arange(1, n + 1, dtype=float)
    jk = J[:, None] + J[None, :]
    count = np.array([[math.fsum(w for _, w in rows[(j, k)]) for k in range(1, n + 1)] for j in range(1, n + 1)])
    mass = np.array(
        [[math.fsum(s * w for s, w in rows[(j, k)]) for k in range(1, n + 1)] for j in range(1, n + 1)]
    )
    count_ge2 = np.array(
        [[math.fsum(w for s, w in rows[(j, k)] if s >= 2) for k in range(1, n + 1)] for j in range(1, n + 1)]
    )

    def _argmax(arr):
        j, k = np.unravel_index(int(np.argmax(arr)), arr.shape)
        return f"(j,k)=({j + 1},{k + 1})"

    mass_err = np.abs(mass - jk) / jk
    frag_def = np.maximum(2.0 - count, 0.0)
    z1_err = np.abs(count - 2.0)
    z3_def = np.zeros_like(count)
    z3_def[0, 1:] = np.maximum(1.0 - count_ge2[0, 1:], 0.0)
    z3_def[1:, 1:] = np.maximum(2.0 - count_ge2[1:, 1:], 0.0)
    b11 = dict(rows[(1, 1)]).get(1, 0.0)

    return {
        "support": CheckReport.from_violation("support", worst_support, 0.0, loc_support),
        "symmetry": CheckReport.from_violation("symmetry", worst_sym, tol, loc_sym),
        "mass": CheckReport.from_violation("mass", float(mass_err.max()), tol, _argmax(mass_err)),
        "monomer_pair": CheckReport.from_violation("monomer_pair", abs(b11 - 2.0), tol, "(j,k)=(1,1)"),
        "fragment_count": CheckReport.from_violation(
            "fragment_count", float(frag_def.max()), tol, _argmax(frag_def)
        ),
        "number_conserving": CheckReport.from_violation(
            "number_conserving", float(z1_err.max()), tol, _argmax(z1_err)
        ),
        "dimer_keeping": CheckReport.from_violation("dimer_keeping", float(z3_def.max()), tol, _argmax(z3_def)),
    }


def mandatory_passed(reports: Mapping[str, CheckReport]) -> bool:
    if "complete" in reports:
        return False
    return all(reports[name].passed for name in MANDATORY_CHECKS)


@dataclass(frozen=True)
class MomentFit:
    """Result of :func:`fit_moment_constants` on a finite size range."""

    m: float
    jk_max: int
    feasible: bool
    epsilon: float
    kappa: float


def minimal_kappa(
    spec: DaughterSpec, m: float, epsilon: float, jk_max: int, table: np.ndarray | None = None
) -> float:
    """Smallest ``kappa >= 1`` with
    ``sum_s s^m B^s_{j,k} <= (1 - eps)(j^m + k^m) + kappa (j k^(m-1) + j^(m-1) k)`` on ``j, k <= jk_max``.
    """
    S = spec.moment_table(jk_max, m) if table is None else table[:jk_max, :jk_max]
    j = np.arange(1, jk_max + 1, dtype=float)
    J, K = j[:, None], j[None, :]
    need = (S - (1.0 - epsilon) * (J**m + K**m)) / (J * K ** (m - 1) + J ** (m - 1) * K)
    return max(1.0, float(need.max()))


def fit_moment_constants(
    spec: DaughterSpec,
    m: float,
    jk_max: int = 256,
    growth_tol: float = 0.05,
    refine_tol: float = 1e-7,
) -> MomentFit:
    """Largest ``epsilon`` on the grid ``0.01 .. 0.99`` with a range-stable ``kappa``.

    On a finite range every ``epsilon < 1`` admits some finite ``kappa``, so an
    ``epsilon`` is accepted only if its minimal ``kappa`` grows by at most
    ``growth_tol`` (relative) when the range doubles from ``jk_max // 2`` to
    ``jk_max``. The accepted grid point is refined by bisection towards the
    first rejected one.
    """
    if m <= 1:
        raise ValueError("moment order must exceed 1")
    if jk_max < 4:
        raise ValueError("jk_max must be >= 4")
    table = spec.moment_table(jk_max, m)
    half = jk_max // 2

    def stable(eps: float) -> bool:
        k_full = minimal_kappa(spec, m, eps, jk_max, table)
        k_half = minimal_kappa(spec, m, eps, half, table)
        return k_full <= (1.0 + growth_tol) * k_half

    grid = np.round(np.arange(1, 100) / 100.0, 2)
    ok = [float(e) for e in grid if stable(float(e))]
    if not ok:
        return MomentFit(m, jk_max, False, math.nan, math.inf)
    lo = max(ok)
    hi = round(lo + 0.01, 2)
    if hi < 1.0 and not stable(hi):
        while hi - lo > refine_tol:
            mid = 0.5 * (lo + hi)
            if stable(mid):
                lo = mid
            else:
                hi = mid
    return MomentFit(m, jk_max, True, lo, minimal_kappa(spec, m, lo, jk_max, table))
