import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from quantile_oracle import quantile_w2
from sticky_jko.domain import DomainSpec, build_discretization
from sticky_jko.measure import DecomposedMeasure
from sticky_jko.transport import (Method, barycentric_momentum, exact_ot, reconstructed_momentum,
                                  wasserstein_boundary_circle, wasserstein_entropic, wasserstein_exact,
                                  wasserstein_interval_reconstructed, write_plan_csv)

I64 = build_discretization(DomainSpec.interval(1.0, 62))  # 64 sites
I4 = build_discretization(DomainSpec.interval(1.0, 4))
D = build_discretization(DomainSpec.disk(1.0, 4, 32))
seeds = st.integers(min_value=0, max_value=2 ** 31 - 1)


def rand_prob(disc, rng, vacuum=0.0):
    m = rng.gamma(0.7, size=disc.n_sites)
    m[rng.uniform(size=m.size) < vacuum] = 0.0
    m[0] += 1e-3
    return DecomposedMeasure.from_masses(disc, m / m.sum())


def test_identity_plan():
    rho = rand_prob(I64, np.random.default_rng(0))
    p = wasserstein_exact(rho, rho)
    assert p.cost_value == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_allclose(p.pi, np.diag(rho.masses), atol=1e-15)
    assert p.method is Method.EXACT


def test_two_site_cost():
    C = np.array([[0.0, 0.49], [0.49, 0.0]])
    p = exact_ot(np.array([1.0, 0.0]), np.array([0.0, 1.0]), C)
    assert p.cost_value == pytest.approx(0.49)


@given(seeds)
def test_exact_matches_quantile_oracle(seed):
    rng = np.random.default_rng(seed)
    a, b = rand_prob(I64, rng, 0.2), rand_prob(I64, rng, 0.2)
    p = wasserstein_exact(a, b)
    x = I64.positions[:, 0]
    assert abs(p.cost_value - quantile_w2(x, a.masses, x, b.masses)) <= 1e-8
    assert p.extras["certificate_residual"] <= 1e-9
    assert p.marginal_residual <= 1e-12
    assert p.converged


@given(seeds)
def test_metric_axioms(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (rand_prob(D, rng, 0.3) for _ in range(3))
    W = lambda u, v: math.sqrt(wasserstein_exact(u, v).cost_value)
    assert abs(W(a, b) - W(b, a)) <= 1e-9
    assert W(a, c) <= W(a, b) + W(b, c) + 1e-9
    assert W(a, a) <= 1e-9


def test_exact_errors():
    with pytest.raises(ValueError, match="mass"):
        exact_ot(np.array([1.0, 0.0]), np.array([0.5, 0.4]), np.zeros((2, 2)))
    n = 4097
    with pytest.raises(ValueError, match="4096"):
        exact_ot(np.ones(n) / n, np.ones(n) / n, np.zeros((1, 1)))


def test_certificate_with_empty_rows_and_columns():
    rng = np.random.default_rng(2)
    a = rand_prob(D, rng, 0.7)
    b = rand_prob(D, rng, 0.7)
    p = wasserstein_exact(a, b)
    assert p.extras["certificate_residual"] <= 1e-9
    assert p.extras["dual_value"] == pytest.approx(p.cost_value, abs=1e-9)


def test_entropic_debiased_zero_at_equality():
    rho = rand_prob(I64, np.random.default_rng(1))
    p = wasserstein_entropic(rho, rho, 1e-2)
    assert abs(p.extras["debiased"]) <= 1e-8
    assert p.method is Method.ENTROPIC and p.epsilon == 1e-2


def test_entropic_two_sites_small_epsilon():
    C = np.array([[0.0, 0.49], [0.49, 0.0]])
    p = wasserstein_entropic(np.array([1.0, 0.0]), np.array([0.0, 1.0]), 1e-4, cost=C)
    assert p.cost_value == pytest.approx(0.49, rel=0.01)


def test_entropic_error_decreases_along_schedule():
    rng = np.random.default_rng(7)
    a, b = rand_prob(I64, rng), rand_prob(I64, rng)
    ex = wasserstein_exact(a, b).cost_value
    errs = {"plan": [], "raw": [], "debiased": []}
    for eps in (1e-2, 5e-3, 2.5e-3, 1.25e-3):
        p = wasserstein_entropic(a, b, eps)
        assert p.converged
        errs["plan"].append(abs(p.cost_value - ex))
        errs["raw"].append(abs(p.extras["raw"] - ex))
        errs["debiased"].append(abs(p.extras["debiased"] - ex))
        # the plan is feasible, so its cost can only exceed the optimum
        assert p.cost_value >= ex - 1e-12
    for e in errs.values():
        assert np.all(np.diff(e) < 0)


def test_entropic_flags_nonconvergence():
    rng = np.random.default_rng(8)
    a, b = rand_prob(I64, rng), rand_prob(I64, rng)
    p = wasserstein_entropic(a, b, 1e-4, max_iter=2, tol=1e-14)
    assert not p.converged and p.marginal_residual > 1e-14
    with pytest.raises(ValueError):
        wasserstein_entropic(a, b, 0.0)


def _bump(theta, center, width):
    d = (theta - center + np.pi) % (2 * np.pi) - np.pi
    s = np.clip(np.abs(d) / width, 0, 1)
    return np.where(s < 1, np.cos(0.5 * np.pi * s) ** 2, 0.0)


def test_circle_identity_and_rotation():
    R = 1.5
    d = build_discretization(DomainSpec.disk(R, 2, 512))
    th = (np.arange(512) + 0.5) * 2 * np.pi / 512
    g = _bump(th, 1.0, 0.6)
    g /= g @ d.boundary_area
    assert wasserstein_boundary_circle(d, g, g) == pytest.approx(0.0, abs=1e-12)
    alpha = 0.05
    gr = _bump(th, 1.0 + alpha, 0.6)
    gr /= gr @ d.boundary_area
    assert wasserstein_boundary_circle(d, g, gr) == pytest.approx((R * alpha) ** 2, rel=0.02)


@given(seeds)
def test_circle_at_least_chord_transport(seed):
    rng = np.random.default_rng(seed)
    ga = rng.gamma(0.5, size=D.n_boundary)
    gb = rng.gamma(0.5, size=D.n_boundary)
    ga /= ga @ D.boundary_area
    gb /= gb @ D.boundary_area
    z = np.zeros(D.n_interior)
    chord = wasserstein_exact(DecomposedMeasure(D, z, ga), DecomposedMeasure(D, z, gb)).cost_value
    assert wasserstein_boundary_circle(D, ga, gb) >= chord - 1e-8


def test_circle_rejects_interval():
    with pytest.raises(ValueError):
        wasserstein_boundary_circle(I4, np.ones(2), np.ones(2))


@given(seeds)
def test_product_plan_upper_bound(seed):
    rng = np.random.default_rng(seed)
    ni = D.n_interior
    a, b = rng.gamma(0.7, size=(2, D.n_sites))
    mi, mb = 0.6, 0.4
    for m in (a, b):
        m[:ni] *= mi / m[:ni].sum()
        m[ni:] *= mb / m[ni:].sum()
    full = wasserstein_exact(a, b, D.cost_euclid).cost_value
    inner = exact_ot(a[:ni], b[:ni], D.cost_euclid[:ni, :ni]).cost_value
    ga, gb = a[ni:] / D.boundary_area, b[ni:] / D.boundary_area
    assert full <= inner + wasserstein_boundary_circle(D, ga, gb) + 1e-8


def test_barycentric_momentum_cases():
    rho = rand_prob(D, np.random.default_rng(3))
    m = barycentric_momentum(D, wasserstein_exact(rho, rho), 0.1)
    assert np.abs(m.interior).max() == 0 and np.abs(m.boundary_normal).max() == 0
    assert np.abs(m.boundary_tangential).max() == 0
    # all mass from cell 0 to the right endpoint of the unit interval, N = 4
    ma = np.array([1.0, 0, 0, 0, 0, 0])
    mb = np.array([0, 0, 0, 0, 0, 1.0])
    p = exact_ot(ma, mb, I4.cost_euclid)
    mom = barycentric_momentum(I4, p, 0.5)
    assert mom.boundary_normal[1] == pytest.approx((1.0 - 1 / 8) / 0.5)
    assert mom.boundary_tangential is None
    assert np.all(mom.interior == 0)


def test_boundary_momentum_split_is_orthogonal():
    rng = np.random.default_rng(5)
    a, b = rand_prob(D, rng), rand_prob(D, rng)
    p = wasserstein_exact(a, b)
    mom = barycentric_momentum(D, p, 1.0)
    x = D.positions
    full = (p.pi.sum(0)[:, None] * x - p.pi.T @ x)[D.n_interior:]
    rebuilt = mom.boundary_normal[:, None] * D.boundary_normal + mom.boundary_tangential[:, None] * D.boundary_tangent
    np.testing.assert_allclose(rebuilt, full, atol=1e-14)


def test_reconstructed_distance_closed_forms():
    d = build_discretization(DomainSpec.interval(1.0, 4))
    uni = DecomposedMeasure(d, np.ones(4), np.zeros(2))
    ends = DecomposedMeasure(d, np.zeros(4), np.array([0.5, 0.5]))
    assert wasserstein_interval_reconstructed(uni, ends) == pytest.approx(1 / 12, abs=1e-14)
    left = DecomposedMeasure(d, np.array([2.0, 2.0, 0, 0]), np.zeros(2))
    right = DecomposedMeasure(d, np.array([0, 0, 2.0, 2.0]), np.zeros(2))
    assert wasserstein_interval_reconstructed(left, right) == pytest.approx(0.25, abs=1e-14)
    assert wasserstein_interval_reconstructed(left, left) == 0.0
    with pytest.raises(ValueError):
        wasserstein_interval_reconstructed(DecomposedMeasure.stationary(D), DecomposedMeasure.stationary(D))


@given(seeds)
def test_reconstructed_distance_symmetric(seed):
    rng = np.random.default_rng(seed)
    a, b = rand_prob(I64, rng, 0.2), rand_prob(I64, rng, 0.2)
    assert wasserstein_interval_reconstructed(a, b) == pytest.approx(wasserstein_interval_reconstructed(b, a),
                                                                     rel=1e-10, abs=1e-14)


@given(seeds)
def test_reconstructed_momentum_first_moment(seed):
    rng = np.random.default_rng(seed)
    a, b = rand_prob(I64, rng), rand_prob(I64, rng)
    tau = 0.01
    m = reconstructed_momentum(a, b, tau)
    total = m.interior[:, 0].sum() + np.sum(m.boundary_normal * I64.boundary_normal[:, 0])
    x = I64.positions[:, 0]
    assert total == pytest.approx((b.masses @ x - a.masses @ x) / tau, rel=1e-9, abs=1e-12)
    z = reconstructed_momentum(a, a, tau)
    assert np.abs(z.interior).max() < 1e-12 and np.abs(z.boundary_normal).max() < 1e-12


def test_plan_csv(tmp_path):
    p = exact_ot(np.array([0.5, 0.5]), np.array([0.5, 0.5]), np.array([[0.0, 1.0], [1.0, 0.0]]))
    write_plan_csv(tmp_path / "plan.csv", p)
    lines = (tmp_path / "plan.csv").read_text().splitlines()
    assert lines == ["i,j,mass", "0,0,0.5", "1,1,0.5"]
