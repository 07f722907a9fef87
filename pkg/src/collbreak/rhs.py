"""Right-hand side of the collision-induced breakage system on a finite size cap.

The kernel family is a sum of two separable products, ``a_pq = A (f_p g_q +
g_p f_q)``, so the loss term costs ``O(N)`` and the pair fluxes
``c_s = sum_{p+q=s} a_pq w_p w_q`` are a single ``O(N^2)`` convolution. The
gain term is then assembled according to the daughter family:

* separable in ``(i, p + q)`` (uniform): suffix sums over ``c_s``;
* no mass transfer with a partner-independent breakup kernel: ``b @ loss``;
* shatter-attach and keep-two: closed forms in the row sums of ``a_pq w_p w_q``;
* anything else: a scatter over the coordinate table of ``B``.

:func:`gain_term_oracle` is the direct triple sum and serves as the reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .daughter import DaughterSpec, KeepTwo, NoMassTransfer, ShatterAttach
from .kernel import CollisionKernel, eval_kernel, eval_truncated_kernel
from .state import StateVector, _counts

POLICIES = ("drop_with_ledger", "extended")


class FastPathUnavailable(ValueError):
    """The daughter distribution is not separable in ``(i, p + q)``."""


@dataclass(frozen=True)
class Problem:
    """Kinetic coefficients of one run: kernel, daughter and optional kernel truncation."""

    kernel: CollisionKernel
    daughter: DaughterSpec
    truncation: int | None = None

    def __post_init__(self) -> None:
        if self.truncation is not None and self.truncation < 1:
            raise ValueError("truncation index must be >= 1")


@dataclass(frozen=True)
class RhsResult:
    rate: np.ndarray
    leak_rate: float
    extended: bool


def _weighted(w: np.ndarray, kernel: CollisionKernel, l: int | None):
    f, g = kernel.factors(w.size, l)
    return f * w, g * w


def loss_term(w, kernel: CollisionKernel, l: int | None = None) -> np.ndarray:
    """``L_i = w_i sum_j a_ij w_j`` in ``O(N)``."""
    w = _counts(w)
    f, g = kernel.factors(w.size, l)
    s_f, s_g = math.fsum(f * w), math.fsum(g * w)
    return kernel.A * w * (f * s_g + g * s_f)


def loss_term_oracle(w, kernel: CollisionKernel, l: int | None = None) -> np.ndarray:
    w = _counts(w)
    a = kernel.matrix(w.size, l)
    return np.array([math.fsum(a[i] * w * w[i]) for i in range(w.size)])


def pair_flux(w, kernel: CollisionKernel, l: int | None = None) -> np.ndarray:
    """``c[s - 2] = sum_{p + q = s} a_pq w_p w_q`` over ordered pairs, ``s = 2..2N``."""
    w = _counts(w)
    fw, gw = _weighted(w, kernel, l)
    return 2.0 * kernel.A * np.convolve(fw, gw)


def _split(G_ext: np.ndarray, n: int, extended: bool) -> tuple[np.ndarray, float]:
    if extended:
        return G_ext, 0.0
    over = np.arange(n + 1, G_ext.size + 1, dtype=float)
    return G_ext[:n].copy(), math.fsum(over * G_ext[n:])


def gain_term_oracle(
    w, kernel: CollisionKernel, daughter: DaughterSpec, l: int | None = None, extended: bool = False
) -> tuple[np.ndarray, float]:
    """Direct ``O(N^2 x row)`` evaluation of ``G_i = 1/2 sum_{p,q} B^i_pq a_pq w_p w_q``.

    Returns ``(G, leak_rate)``. With ``extended`` the output covers sizes up to
    ``2N - 1`` and the leak rate is zero; otherwise fragments above ``N`` are
    reported as the mass flux ``leak_rate``.
    """
    w = _counts(w)
    n = w.size
    acc: list[list[float]] = [[] for _ in range(2 * n - 1)]
    for p in range(1, n + 1):
        if w[p - 1] == 0.0:
            continue
        for q in range(1, n + 1):
            if w[q - 1] == 0.0:
                continue
            flux = 0.5 * _pair_rate(kernel, l, p, q) * w[p - 1] * w[q - 1]
            for s, b in daughter.row(p, q):
                acc[s - 1].append(b * flux)
    G = np.array([math.fsum(a) for a in acc])
    return _split(G, n, extended)


def _pair_rate(kernel: CollisionKernel, l: int | None, p: int, q: int) -> float:
    return eval_kernel(kernel, p, q) if l is None else eval_truncated_kernel(kernel, l, p, q)


def gain_term_fast(
    w, kernel: CollisionKernel, daughter: DaughterSpec, l: int | None = None, extended: bool = False
) -> tuple[np.ndarray, float]:
    """Gain term from pair fluxes for daughters with ``B^i_pq = f(i, p + q)``."""
    if not daughter.separable:
        raise FastPathUnavailable(f"fast path unavailable for daughter {daughter.name!r}")
    return _gain_separable(_counts(w), kernel, daughter, l, extended, net=False)


def _gain_separable(w, kernel, daughter, l, extended, net):
    n = w.size
    c = pair_flux(w, kernel, l)  # index s - 2
    if net:
        c[0] = 0.0  # the (1, 1) pair only, a null collision
    s = np.arange(2, 2 * n + 1, dtype=float)
    if daughter.name == "uniform":
        # G_i = sum_{s > i} c_s / (s - 1), i = 1..2N-1
        terms = c / (s - 1.0)
        suffix = np.cumsum(terms[::-1])[::-1]
        G = suffix[: 2 * n - 1].copy()
    else:
        i = np.arange(1, 2 * n, dtype=float)
        G = 0.5 * daughter.separable_weight(i[:, None], s[None, :]) @ c
    return _split(G, n, extended)


def _loss_net(w, kernel, l, skip: int) -> np.ndarray:
    """Loss without null collisions.

    ``skip = 0`` drops only the ``(1, 1)`` pair; ``skip >= 1`` drops every pair
    with ``min(p, q) <= skip``.
    """
    f, g = kernel.factors(w.size, l)
    if skip == 0:
        L = loss_term(w, kernel, l)
        if w.size:
            s_f, s_g = math.fsum(f[1:] * w[1:]), math.fsum(g[1:] * w[1:])
            L[0] = kernel.A * w[0] * (f[0] * s_g + g[0] * s_f)
        return L
    s_f, s_g = math.fsum(f[skip:] * w[skip:]), math.fsum(g[skip:] * w[skip:])
    L = kernel.A * w * (f * s_g + g * s_f)
    L[:skip] = 0.0
    return L


def _gain_coo(w, kernel, daughter, l, extended, net=False):
    n = w.size
    p, q, s, b = daughter.coo(n)
    fw, gw = _weighted(w, kernel, l)
    pair = kernel.A * (fw[p - 1] * gw[q - 1] + gw[p - 1] * fw[q - 1])
    if net:
        pair = np.where((p == 1) & (q == 1), 0.0, pair)
    G = 0.5 * np.bincount(s - 1, weights=b * pair, minlength=2 * n - 1)
    return _split(G, n, extended)


def _gain_no_transfer(w, kernel, daughter: NoMassTransfer, l, extended, net=False):
    n = w.size
    # G_s = sum_{i,j} b_{s,i} a_ij w_i w_j = sum_i b_{s,i} L_i; fragments never exceed N
    L = _loss_net(w, kernel, l, 0) if net else loss_term(w, kernel, l)
    G = daughter.breakup_matrix(n) @ L
    G = np.concatenate([G, np.zeros(n - 1)]) if extended else G
    return G, 0.0


def _pair_column(w, kernel, l, q: int) -> np.ndarray:
    """``P[:, q-1]`` with ``P_pq = a_pq w_p w_q``."""
    f, g = kernel.factors(w.size, l)
    return kernel.A * (f * g[q - 1] + g * f[q - 1]) * w * w[q - 1]


def _gain_shatter_attach(w, kernel, l, extended, net=False):
    n = w.size
    sizes = np.arange(1, n + 1, dtype=float)
    R = _loss_net(w, kernel, l, 1)  # R_p = sum_{q >= 2} P_pq for p >= 2
    G = np.zeros(2 * n)
    G[0] = 0.5 * math.fsum((sizes[1:] - 1.0) * R[1:])
    G[2 : n + 1] += 0.5 * R[1:]
    if not net:
        # collisions with a monomer: (1, q) -> monomer + q
        P1 = _pair_column(w, kernel, l, 1)
        G[0] += P1[0] + math.fsum(P1[1:])
        G[1:n] += P1[1:]
    return _split(G[: 2 * n - 1], n, extended)


def _gain_keep_two(w, kernel, l, extended, net=False):
    n = w.size
    G = np.zeros(2 * n)
    if n >= 3:
        R = _loss_net(w, kernel, l, 2)[2:]  # R_p = sum_{q >= 3} P_pq, p >= 3
        sizes = np.arange(3, n + 1, dtype=float)
        G[0] += 0.5 * math.fsum((sizes - 3.0) * R)
        G[1] += 0.5 * math.fsum(R)
        G[3 : n + 1] += 0.5 * R
    if not net:
        # collisions with a monomer or a dimer reproduce their inputs
        for q in (1, 2)[: n]:
            P = _pair_column(w, kernel, l, q)
            if q == 2:
                P[0] = 0.0  # (1, 2) is already counted in the monomer column
            G[q - 1] += P[q - 1] + math.fsum(P[q:]) + (P[0] if q == 2 else 0.0)
            G[q:n] += P[q:]
    return _split(G[: 2 * n - 1], n, extended)


def _dispatch(daughter: DaughterSpec):
    """Gain routine and null-collision skip depth for ``daughter``."""
    if daughter.separable:
        return (lambda w, k, l, e, net: _gain_separable(w, k, daughter, l, e, net)), 0
    if isinstance(daughter, NoMassTransfer) and daughter.partner_independent:
        return (lambda w, k, l, e, net: _gain_no_transfer(w, k, daughter, l, e, net)), 0
    if type(daughter) is ShatterAttach:
        return _gain_shatter_attach, 1
    if type(daughter) is KeepTwo:
        return _gain_keep_two, 2
    return (lambda w, k, l, e, net: _gain_coo(w, k, daughter, l, e, net)), 0


def gain_term(
    w, kernel: CollisionKernel, daughter: DaughterSpec, l: int | None = None, extended: bool = False
) -> tuple[np.ndarray, float]:
    """Fastest available gain evaluation for ``daughter``."""
    gain, _ = _dispatch(daughter)
    return gain(_counts(w), kernel, l, extended, False)


def rhs(w, problem: Problem, policy: str = "drop_with_ledger", oracle: bool = False) -> RhsResult:
    """``dw/dt = gain - loss``.

    ``drop_with_ledger`` returns rates on ``1..N`` and the mass flux lost above
    the cap; ``extended`` returns rates on ``1..2N-1`` with zero leak.

    The fast evaluation leaves out collisions whose fragments equal the
    colliding pair (always ``(1, 1)``; any pair with a monomer for
    shatter-attach, with a monomer or dimer for keep-two). They contribute
    nothing to the rate, and skipping them makes the cancellation exact.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown overflow policy {policy!r}")
    extended = policy == "extended"
    w = _counts(w)
    n = w.size
    k, d, l = problem.kernel, problem.daughter, problem.truncation
    if oracle:
        G, leak = gain_term_oracle(w, k, d, l, extended)
        L = loss_term(w, k, l)
    else:
        gain, skip = _dispatch(d)
        G, leak = gain(w, k, l, extended, True)
        L = _loss_net(w, k, l, skip)
    rate = G.copy()
    rate[:n] -= L
    return RhsResult(rate, leak, extended)


def moment_rate_weak(w, mu, problem: Problem) -> float:
    """``d/dt sum_i mu_i w_i`` from the weak form
    ``1/2 sum_{j,k} (sum_i mu_i B^i_jk - mu_j - mu_k) a_jk w_j w_k``.

    ``mu`` must cover sizes ``1..2N-1``.
    """
    w = _counts(w)
    n = w.size
    mu = np.asarray(mu, dtype=float)
    if mu.size < 2 * n - 1:
        raise ValueError(f"mu must have at least {2 * n - 1} entries")
    T = problem.daughter.weighted_table(n, mu)
    bracket = T - mu[:n, None] - mu[None, :n]
    a = problem.kernel.matrix(n, problem.truncation)
    return 0.5 * math.fsum((bracket * a * np.outer(w, w)).ravel())


def residual_norm(w, problem: Problem) -> float:
    """``sum_i i |dw_i/dt|`` over the cap (capped rates)."""
    r = rhs(w, problem).rate
    return math.fsum(np.arange(1, r.size + 1) * np.abs(r))


def write_pair_flux_csv(w, problem: Problem, path: str | Path) -> None:
    c = pair_flux(w, problem.kernel, problem.truncation)
    lines = ["s,c"] + [f"{s},{float(x)!r}" for s, x in enumerate(c, 2)]
    Path(path).write_text("\n".join(lines) + "\n")


def as_state(w) -> StateVector:
    return w if isinstance(w, StateVector) else StateVector(np.asarray(w, dtype=float))
