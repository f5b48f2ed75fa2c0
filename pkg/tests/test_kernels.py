import math

import numpy as np
import pytest

import figp.kernels
from figp import (Domain, FigpError, FunctionalInput, GramFactorizationError,
                  KernelSpec, LINEAR, MaternParams, NONLINEAR,
                  apply_pointwise_map, build_grid, gram, kernel_matrix,
                  kernel_value, linear_kernel, matern52_exp5, matern_psi,
                  nonlinear_kernel, sample_function)

from figp_testlib import random_poly_inputs


# values frozen from a high-precision evaluation of the closed forms
MATERN_ORACLES = [
    (0.5, 1.0, 1.0, 0.24311673443421421),
    (1.5, 1.0, 1.0, 0.29782076792963152),
    (2.5, 1.0, 1.0, 0.3172833639540438),
    (2.5, 0.35, 2.0, 1.663085639863483),
    (1.7, 0.8, 1.0, 0.42610752274918579),  # general-nu Bessel branch
]


@pytest.mark.parametrize("nu,r,sigma2,want", MATERN_ORACLES)
def test_matern_psi_oracles(nu, r, sigma2, want):
    got = float(matern_psi(r, MaternParams(nu, sigma2)))
    assert math.isclose(got, want, rel_tol=1e-12)


def test_matern_psi_at_zero_and_vectorized():
    p = MaternParams(2.5, 3.0)
    assert math.isclose(float(matern_psi(0.0, p)), 3.0, rel_tol=1e-14)
    r = np.linspace(0.0, 2.0, 9).reshape(3, 3)
    assert matern_psi(r, p).shape == (3, 3)


def test_matern_closed_forms_meet_bessel_branch():
    # the half-integer shortcuts must agree with the general formula
    for nu in (0.5, 1.5, 2.5):
        a = float(matern_psi(0.7, MaternParams(nu, 1.0)))
        b = float(matern_psi(0.7, MaternParams(nu + 1e-9, 1.0)))
        assert math.isclose(a, b, rel_tol=1e-6)


@pytest.mark.parametrize("nu", [0.5, 1.5, 2.5, 1.7])
def test_matern_psi_monotone_decreasing(nu):
    r = np.linspace(0.0, 6.0, 1000)
    vals = matern_psi(r, MaternParams(nu, 1.0))
    assert np.all(np.diff(vals) < 0)


def test_matern52_exp5_profile():
    assert math.isclose(float(matern52_exp5(0.0)), 1.0, rel_tol=1e-14)
    assert math.isclose(float(matern52_exp5(1.0)), 0.03303436618297373,
                        rel_tol=1e-12)
    # faster tail than the standard nu=5/2 profile
    assert float(matern52_exp5(3.0)) < float(matern_psi(3.0, MaternParams(2.5, 1.0)))


def test_matern_params_validation():
    with pytest.raises(FigpError):
        MaternParams(0.0, 1.0)
    with pytest.raises(FigpError):
        MaternParams(2.5, -1.0)
    with pytest.raises(FigpError):
        MaternParams(2.5, 1.0, (1.0, -2.0))


def test_kernel_spec_validation():
    p = MaternParams(2.5, 1.0, (1.0, 1.0))
    with pytest.raises(FigpError):
        KernelSpec("cubic", p)
    with pytest.raises(FigpError):
        KernelSpec(NONLINEAR, MaternParams(2.5, 1.0))  # gamma missing
    with pytest.raises(FigpError):
        KernelSpec(NONLINEAR, MaternParams(2.5, 1.0), gamma=1.0, premap="square")
    with pytest.raises(FigpError):
        KernelSpec(LINEAR, p, gamma=1.0)
    with pytest.raises(FigpError):
        KernelSpec(LINEAR, p, premap="cube")


def test_linear_kernel_refined_grid_oracle():
    # the quadrature value must be stable when the grid is refined 20 -> 40
    p = MaternParams(2.5, 1.0, (1.0, 1.0))
    dom = Domain(((0.0, 1.0), (0.0, 1.0)))
    g20, g40 = build_grid(dom, 20), build_grid(dom, 40)
    for e1, e2 in [("1", "1"), ("x1", "sin(3*x1)+x2")]:
        coarse = linear_kernel(sample_function(e1, g20),
                               sample_function(e2, g20), p)
        fine = linear_kernel(sample_function(e1, g40),
                             sample_function(e2, g40), p)
        assert math.isclose(coarse, fine, rel_tol=1e-6)


def test_linear_kernel_bilinear(square_grid):
    p = MaternParams(2.5, 1.5, (0.7, 1.3))
    rng = np.random.default_rng(21)
    for _ in range(10):
        g1, g2, g3 = random_poly_inputs(square_grid, 3, rng)
        a, b = rng.uniform(-2.0, 2.0, 2)
        lhs = linear_kernel(a * g1 + b * g2, g3, p)
        rhs = a * linear_kernel(g1, g3, p) + b * linear_kernel(g2, g3, p)
        assert math.isclose(lhs, rhs, rel_tol=1e-12, abs_tol=1e-12)


def test_kernels_symmetric(square_grid):
    rng = np.random.default_rng(3)
    g1, g2 = random_poly_inputs(square_grid, 2, rng)
    for spec in (KernelSpec(LINEAR, MaternParams(2.5, 1.0, (1.0, 1.0))),
                 KernelSpec(NONLINEAR, MaternParams(2.5, 1.0), gamma=0.8)):
        assert math.isclose(kernel_value(g1, g2, spec),
                            kernel_value(g2, g1, spec), rel_tol=1e-12)


def test_nonlinear_kernel_translation_invariant(square_grid):
    p = MaternParams(2.5, 1.0)
    rng = np.random.default_rng(9)
    g1, g2, shift = random_poly_inputs(square_grid, 3, rng)
    a = nonlinear_kernel(g1, g2, p, 0.6)
    b = nonlinear_kernel(g1 + shift, g2 + shift, p, 0.6)
    assert math.isclose(a, b, rel_tol=1e-12)


def test_nonlinear_kernel_radial(square_grid):
    # pairs at equal L2 distance get equal kernel values
    from figp import l2_norm
    p = MaternParams(1.5, 2.0)
    x1 = sample_function("x1", square_grid)
    x2 = sample_function("x2", square_grid)
    base = sample_function("1+x1*x2", square_grid)
    v = 0.35 * x1
    w = (l2_norm(v) / l2_norm(x2)) * x2
    assert math.isclose(nonlinear_kernel(base, base + v, p, 1.1),
                        nonlinear_kernel(base, base + w, p, 1.1),
                        rel_tol=1e-12)


@pytest.mark.parametrize("spec", [
    KernelSpec(LINEAR, MaternParams(2.5, 1.3, (0.9, 1.4))),
    KernelSpec(LINEAR, MaternParams(2.5, 1.0, (1.0, 1.0)), premap="square"),
    KernelSpec(NONLINEAR, MaternParams(2.5, 0.7), gamma=0.5),
])
def test_kernel_matrix_matches_pairwise_values(square_grid, spec):
    rng = np.random.default_rng(11)
    ga = random_poly_inputs(square_grid, 4, rng)
    gb = random_poly_inputs(square_grid, 3, rng)
    K = kernel_matrix(ga, gb, spec)
    assert K.shape == (4, 3)
    for i in range(4):
        for j in range(3):
            assert math.isclose(K[i, j], kernel_value(ga[i], gb[j], spec),
                                rel_tol=1e-12, abs_tol=1e-12)


def test_linear_premap_equals_mapped_inputs(square_grid):
    p = MaternParams(2.5, 1.0, (1.0, 1.0))
    rng = np.random.default_rng(13)
    g1, g2 = random_poly_inputs(square_grid, 2, rng)
    direct = linear_kernel(g1, g2, p, premap="square")
    mapped = linear_kernel(apply_pointwise_map(g1, np.square),
                           apply_pointwise_map(g2, np.square), p)
    assert math.isclose(direct, mapped, rel_tol=1e-12)


@pytest.mark.parametrize("spec", [
    KernelSpec(LINEAR, MaternParams(2.5, 1.0, (1.0, 1.0)), nugget=0.0),
    KernelSpec(NONLINEAR, MaternParams(2.5, 1.0), gamma=1.0, nugget=0.0),
])
def test_kernels_strictly_pd_without_nugget(square_grid, spec):
    rng = np.random.default_rng(17)
    for _ in range(10):
        ins = random_poly_inputs(square_grid, 5, rng)
        K = kernel_matrix(ins, ins, spec)
        assert np.linalg.eigvalsh(0.5 * (K + K.T)).min() > 0.0


def test_gram_factorization_reconstructs(square_grid):
    spec = KernelSpec(NONLINEAR, MaternParams(2.5, 1.0), gamma=0.7)
    rng = np.random.default_rng(19)
    ins = random_poly_inputs(square_grid, 6, rng)
    fact = gram(ins, spec)
    K = kernel_matrix(ins, ins, spec) + fact.nugget * np.eye(6)
    np.testing.assert_allclose(fact.gram, K, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(fact.chol @ fact.chol.T, fact.gram,
                               rtol=1e-10, atol=1e-12)
    sign, logdet = np.linalg.slogdet(fact.gram)
    assert sign > 0 and math.isclose(fact.log_det, logdet, rel_tol=1e-10,
                                     abs_tol=1e-10)
    b = rng.standard_normal(6)
    np.testing.assert_allclose(fact.solve(b), np.linalg.solve(fact.gram, b),
                               rtol=1e-8, atol=1e-10)


def test_solve_refined_does_not_degrade(square_grid):
    spec = KernelSpec(LINEAR, MaternParams(2.5, 1.0, (1.0, 1.0)))
    rng = np.random.default_rng(23)
    ins = random_poly_inputs(square_grid, 8, rng)
    fact = gram(ins, spec)
    b = rng.standard_normal(8)
    r0 = np.linalg.norm(b - fact.gram @ fact.solve(b))
    r1 = np.linalg.norm(b - fact.gram @ fact.solve_refined(b))
    assert r1 <= r0 + 1e-14


def test_gram_duplicate_inputs_survive_with_jitter(square_grid):
    x1 = sample_function("x1", square_grid)
    spec = KernelSpec(LINEAR, MaternParams(2.5, 1.0, (1.0, 1.0)))
    fact = gram([x1, x1], spec)
    assert fact.nugget > 0


def test_gram_degenerate_zero_nugget_raises(square_grid):
    x1 = sample_function("x1", square_grid)
    two = sample_function("2*x1", square_grid)
    spec = KernelSpec(LINEAR, MaternParams(2.5, 1.0, (1.0, 1.0)), nugget=0.0)
    with pytest.raises(GramFactorizationError):
        gram([x1, two], spec)


def test_gram_nugget_escalation_warns(square_grid, monkeypatch):
    # force the first two jitter levels to fail so the escalation path runs
    real = figp.kernels._try_cholesky
    calls = {"n": 0}

    def flaky(K):
        calls["n"] += 1
        if calls["n"] <= 2:
            return None
        return real(K)

    monkeypatch.setattr(figp.kernels, "_try_cholesky", flaky)
    rng = np.random.default_rng(29)
    ins = random_poly_inputs(square_grid, 4, rng)
    spec = KernelSpec(NONLINEAR, MaternParams(2.5, 1.0), gamma=1.0)
    with pytest.warns(UserWarning, match="escalated"):
        fact = gram(ins, spec)
    assert fact.nugget == pytest.approx(1e-6, rel=1e-9)
