"""Collision kernels ``a_ij = A (i^alpha j^beta + i^beta j^alpha)`` and their truncations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np


class KernelError(ValueError):
    """Raised for kernel parameters outside the admissible family."""


@dataclass(frozen=True)
class CollisionKernel:
    """Symmetric two-exponent collision kernel.

    Admissible parameters: ``A > 0``, ``alpha <= beta <= 1``, ``beta > 0`` and
    ``alpha < 1``. The multiplicative kernel ``alpha = beta = 1`` is rejected.
    """

    A: float
    alpha: float
    beta: float

    def __post_init__(self) -> None:
        A, alpha, beta = float(self.A), float(self.alpha), float(self.beta)
        if not np.isfinite([A, alpha, beta]).all():
            raise KernelError("kernel parameters must be finite")
        if A <= 0:
            raise KernelError(f"A must be positive, got {A}")
        if not alpha <= beta <= 1:
            raise KernelError(f"need alpha <= beta <= 1, got alpha={alpha}, beta={beta}")
        if beta <= 0:
            raise KernelError(f"need beta > 0, got {beta}")
        if alpha >= 1:
            raise KernelError(f"need alpha < 1, got {alpha} (multiplicative kernel excluded)")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def alpha_plus(self) -> float:
        return max(self.alpha, 0.0)

    def __call__(self, i: int, j: int) -> float:
        return eval_kernel(self, i, j)

    def factors(self, n: int, truncation: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(f, g)`` on sizes ``1..n`` with ``a_ij = A (f_i g_j + g_i f_j)``.

        ``f_i = i^alpha`` (or ``min(i, l)^alpha_+ i^(alpha - alpha_+)`` under
        truncation ``l``) and ``g_i = i^beta``.
        """
        i = np.arange(1, n + 1, dtype=float)
        g = i**self.beta
        if truncation is None:
            f = i**self.alpha
        else:
            ap = self.alpha_plus
            f = np.minimum(i, float(truncation)) ** ap * i ** (self.alpha - ap)
        return f, g

    def matrix(self, n: int, truncation: int | None = None) -> np.ndarray:
        f, g = self.factors(n, truncation)
        return self.A * (np.outer(f, g) + np.outer(g, f))

    def to_dict(self) -> dict[str, float]:
        return {"A": self.A, "alpha": self.alpha, "beta": self.beta}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "CollisionKernel":
        try:
            return cls(float(d["A"]), float(d["alpha"]), float(d["beta"]))
        except KeyError as exc:
            raise KernelError(f"kernel block missing key {exc}") from None


def _check_sizes(*sizes: int) -> None:
    for s in sizes:
        if s < 1:
            raise ValueError(f"sizes must be >= 1, got {s}")


def eval_kernel(kernel: CollisionKernel, i: int, j: int) -> float:
    _check_sizes(i, j)
    a, b = kernel.alpha, kernel.beta
    return kernel.A * (float(i) ** a * float(j) ** b + float(i) ** b * float(j) ** a)


def eval_truncated_kernel(kernel: CollisionKernel, l: int, i: int, j: int) -> float:
    """Linear-growth truncation of the kernel; coincides with it when ``max(i, j) <= l``."""
    _check_sizes(i, j)
    if l < 1:
        raise ValueError(f"truncation index must be >= 1, got {l}")
    a, b, ap = kernel.alpha, kernel.beta, kernel.alpha_plus
    fi = float(min(i, l)) ** ap * float(i) ** (a - ap)
    fj = float(min(j, l)) ** ap * float(j) ** (a - ap)
    return kernel.A * (fi * float(j) ** b + float(i) ** b * fj)
