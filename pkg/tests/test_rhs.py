import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from collbreak.daughter import CustomTable, ShatterAttach, Uniform
from collbreak.kernel import CollisionKernel
from collbreak.rhs import (
    FastPathUnavailable,
    Problem,
    gain_term,
    gain_term_fast,
    gain_term_oracle,
    loss_term,
    loss_term_oracle,
    moment_rate_weak,
    pair_flux,
    residual_norm,
    rhs,
    write_pair_flux_csv,
)

from conftest import BUILTINS, kernels, states

R2 = math.sqrt(2.0)


def l1(x):
    return float(np.sum(np.abs(x)))


def test_loss_small(sqrt_kernel):
    L = loss_term([1.0, 1.0], sqrt_kernel)
    np.testing.assert_allclose(L, [2 + 2 * R2, 2 * R2 + 4], rtol=1e-15)


def test_loss_monomers(sqrt_kernel):
    L = loss_term([3.0, 0.0, 0.0], sqrt_kernel)
    np.testing.assert_allclose(L, [9.0 * 2.0, 0.0, 0.0])


@given(kernels, states(64), st.one_of(st.none(), st.integers(1, 64)))
def test_loss_matches_double_loop(k, w, l):
    np.testing.assert_allclose(loss_term(w, k, l), loss_term_oracle(w, k, l), rtol=1e-13, atol=1e-300)


def test_gain_small(sqrt_kernel):
    G, leak = gain_term_oracle([1.0, 1.0], sqrt_kernel, Uniform(), extended=True)
    np.testing.assert_allclose(G, [2 + 2 * R2 + 4 / 3, 2 * R2 + 4 / 3, 4 / 3], rtol=1e-14)
    assert leak == 0.0
    Gf, _ = gain_term_fast([1.0, 1.0], sqrt_kernel, Uniform(), extended=True)
    np.testing.assert_allclose(Gf, G, rtol=1e-14)


def test_gain_monomers(sqrt_kernel):
    G, _ = gain_term_oracle([2.0, 0.0], sqrt_kernel, Uniform())
    assert G[0] == pytest.approx(4.0 * 2.0)
    c = pair_flux([2.0, 0.0], sqrt_kernel)
    assert c[0] == pytest.approx(4.0 * 2.0) and not c[1:].any()


def test_fast_path_refuses_non_separable(sqrt_kernel):
    with pytest.raises(FastPathUnavailable, match="fast path unavailable"):
        gain_term_fast([1.0, 1.0], sqrt_kernel, ShatterAttach())


def test_rate_small(sqrt_kernel):
    r = rhs([1.0, 1.0], Problem(sqrt_kernel, Uniform()), "extended")
    np.testing.assert_allclose(r.rate, [4 / 3, -8 / 3, 4 / 3], rtol=0, atol=1e-14)
    assert abs(r.rate @ [1, 2, 3]) <= 1e-14
    assert abs(r.rate.sum()) <= 1e-14


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_monomer_state_is_stationary(name, sqrt_kernel):
    r = rhs([0.7] + [0.0] * 9, Problem(sqrt_kernel, BUILTINS[name]))
    assert not r.rate.any() and r.leak_rate == 0.0


@given(kernels, states(32), st.sampled_from(sorted(BUILTINS)), st.one_of(st.none(), st.integers(1, 8)),
       st.booleans())
def test_every_gain_path_matches_oracle(k, w, name, l, extended):
    d = BUILTINS[name]
    G, leak = gain_term(w, k, d, l, extended)
    Go, leako = gain_term_oracle(w, k, d, l, extended)
    assert l1(G - Go) <= 1e-12 * l1(Go) + 1e-300
    assert leak == pytest.approx(leako, rel=1e-12, abs=1e-300)


@given(kernels, states(128))
def test_uniform_fast_equals_oracle(k, w):
    G, _ = gain_term_fast(w, k, Uniform(), extended=True)
    Go, _ = gain_term_oracle(w, k, Uniform(), extended=True)
    assert l1(G - Go) <= 1e-12 * l1(Go) + 1e-300


@given(kernels, states(128), st.sampled_from(sorted(BUILTINS)))
def test_extended_mass_and_number(k, w, name):
    r = rhs(w, Problem(k, BUILTINS[name]), "extended")
    i = np.arange(1, r.rate.size + 1)
    scale = math.fsum(i * np.abs(r.rate))
    assert abs(math.fsum(i * r.rate)) <= 1e-12 * scale + 1e-300
    assert math.fsum(r.rate) >= -1e-12 * l1(r.rate)


@given(kernels, states(64), st.sampled_from(sorted(BUILTINS)))
def test_capped_mass_with_leak(k, w, name):
    r = rhs(w, Problem(k, BUILTINS[name]))
    i = np.arange(1, r.rate.size + 1)
    scale = math.fsum(i * np.abs(r.rate)) + r.leak_rate
    assert r.leak_rate >= 0
    assert abs(math.fsum(i * r.rate) + r.leak_rate) <= 1e-12 * scale + 1e-300


@given(kernels, states(48), st.floats(0.01, 100.0), st.sampled_from(sorted(BUILTINS)))
def test_quadratic_scaling(k, w, c, name):
    p = Problem(k, BUILTINS[name])
    np.testing.assert_allclose(rhs(c * w, p).rate, c**2 * rhs(w, p).rate, rtol=1e-11, atol=1e-300)


def swapped_oracle(w, k, d):
    # iterate q outside p; symmetry of a and B makes this equal to the oracle
    n = len(w)
    acc = [[] for _ in range(2 * n - 1)]
    a = k.matrix(n)
    for q in range(n, 0, -1):
        for p in range(n, 0, -1):
            for s, b in d.row(q, p):
                acc[s - 1].append(0.5 * b * a[p - 1, q - 1] * w[p - 1] * w[q - 1])
    return np.array([math.fsum(x) for x in acc])


@given(kernels, states(16), st.sampled_from(sorted(BUILTINS)))
def test_oracle_loop_order(k, w, name):
    G, _ = gain_term_oracle(w, k, BUILTINS[name], extended=True)
    np.testing.assert_allclose(swapped_oracle(w, k, BUILTINS[name]), G, rtol=1e-13, atol=1e-300)


@given(states(32), st.sampled_from(sorted(BUILTINS)))
def test_weak_form_mass_and_number(w, name):
    k = CollisionKernel(1.0, 0.5, 0.5)
    p = Problem(k, BUILTINS[name])
    n = w.size
    i = np.arange(1, 2 * n, dtype=float)
    assert abs(moment_rate_weak(w, i, p)) <= 1e-12 * (1 + l1(rhs(w, p, "extended").rate) * n)
    assert moment_rate_weak(w, np.ones(2 * n - 1), p) >= -1e-12


@given(kernels, states(32), st.sampled_from(sorted(BUILTINS)))
def test_weak_form_matches_rates(k, w, name):
    # the weak form drops null collisions exactly, as the production rate does
    p = Problem(k, BUILTINS[name])
    r = rhs(w, p, "extended").rate
    mu = np.arange(1, r.size + 1, dtype=float) ** 2
    ref = math.fsum(mu * r)
    scale = math.fsum(mu * np.abs(r))
    assert moment_rate_weak(w, mu, p) == pytest.approx(ref, rel=1e-11, abs=1e-11 * scale + 1e-300)


def test_weak_form_needs_extended_weights(sqrt_kernel):
    with pytest.raises(ValueError):
        moment_rate_weak([1.0, 1.0], [1.0, 1.0], Problem(sqrt_kernel, Uniform()))


def test_truncation_changes_only_large_pairs():
    k = CollisionKernel(1.0, 0.5, 0.9)
    w = np.linspace(1.0, 0.1, 6)
    small = rhs(w[:3], Problem(k, Uniform(), truncation=3), "extended").rate
    plain = rhs(w[:3], Problem(k, Uniform()), "extended").rate
    np.testing.assert_allclose(small, plain, rtol=1e-15)
    assert not np.allclose(rhs(w, Problem(k, Uniform(), 2)).rate, rhs(w, Problem(k, Uniform())).rate)


def test_custom_table_uses_generic_path(sqrt_kernel):
    t = CustomTable.from_rule(ShatterAttach().row, 8)
    w = np.linspace(0.5, 0.01, 8)
    np.testing.assert_allclose(
        rhs(w, Problem(sqrt_kernel, t)).rate, rhs(w, Problem(sqrt_kernel, ShatterAttach())).rate, rtol=1e-12
    )


def test_policy_validation(sqrt_kernel):
    with pytest.raises(ValueError):
        rhs([1.0], Problem(sqrt_kernel, Uniform()), "wrap")
    with pytest.raises(ValueError):
        Problem(sqrt_kernel, Uniform(), truncation=0)


def test_pair_flux_dump(tmp_path, sqrt_kernel):
    p = Problem(sqrt_kernel, Uniform())
    write_pair_flux_csv([1.0, 1.0], p, tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "s,c" and len(lines) == 4
    assert float(lines[1].split(",")[1]) == pytest.approx(2.0)


def test_residual_norm_zero_for_monomers(sqrt_kernel):
    assert residual_norm([1.0, 0.0, 0.0], Problem(sqrt_kernel, Uniform())) == 0.0
