import numpy as np
import pytest
import scipy.linalg as sla

from sticky_jko.domain import DomainSpec, build_discretization
from sticky_jko.measure import DecomposedMeasure, entropy, tv_distance
from sticky_jko.pde_oracle import build_fd_system, default_test_functions, fd_run, graph_laplacian, weak_residual

I64 = build_discretization(DomainSpec.interval(1.0, 64))
D = build_discretization(DomainSpec.disk(1.0, 6, 24))


def interior_only(disc):
    return DecomposedMeasure.from_masses(
        disc, np.concatenate([disc.interior_vol, np.zeros(disc.n_boundary)]) / disc.interior_vol.sum())


@pytest.mark.parametrize("disc", [I64, D], ids=["interval", "disk"])
def test_generator_structure(disc):
    sysm = build_fd_system(disc, 1e-3)
    G = sysm.generator
    np.testing.assert_allclose(G @ np.ones(disc.n_sites), 0.0, atol=1e-12)
    assert np.abs(disc.weights @ G).max() <= 1e-13 * max(1.0, abs(G).max())
    A = graph_laplacian(disc)
    assert abs(A - A.T).max() == 0
    off = sysm.operator.tolil()
    off.setdiag(0)
    assert off.tocsr().max() <= 0  # M-matrix sign pattern
    np.testing.assert_array_equal(sysm.conservation_vector, disc.weights)


def test_generator_spectrum_nonpositive():
    G = build_fd_system(I64, 1e-3).generator.toarray()
    w = I64.weights
    S = np.sqrt(w)[:, None] * G / np.sqrt(w)[None, :]  # similar and symmetric
    ev = sla.eigvalsh(0.5 * (S + S.T))
    assert ev.max() <= 1e-12


def test_invalid_dt():
    with pytest.raises(ValueError):
        build_fd_system(I64, 0.0)
    with pytest.raises(ValueError):
        fd_run(DecomposedMeasure.stationary(I64), 0.0, 1e-3)


@pytest.mark.parametrize("disc", [I64, D], ids=["interval", "disk"])
def test_stationary_state_constant(disc):
    bar = DecomposedMeasure.stationary(disc)
    run = fd_run(bar, 0.1, 1e-2)
    for s in run.states:
        np.testing.assert_allclose(s.density, bar.density, atol=1e-12)


def test_interior_only_run():
    run = fd_run(interior_only(I64), 0.05, 1e-3)
    b = np.array([s.boundary_mass for s in run.states])
    assert np.all(np.diff(b[:20]) > 0)
    m = np.array([s.mass for s in run.states])
    assert np.abs(m - 1).max() <= 1e-10
    assert min(s.density.min() for s in run.states) >= 0
    E = [entropy(s) for s in run.states]
    assert np.all(np.diff(E) <= 1e-13)


@pytest.mark.parametrize("disc", [I64, D], ids=["interval", "disk"])
def test_long_run_reaches_stationary(disc):
    run = fd_run(interior_only(disc), 10.0, 1e-2, save_every=100)
    assert abs(run.states[-1].mass - 1) <= 1e-10
    assert tv_distance(run.states[-1], DecomposedMeasure.stationary(disc)) <= 1e-6


def test_comparison_principle():
    M = I64.total_mass
    x = I64.positions[:, 0]
    f = 1 + np.cos(3 * x) ** 2
    rho = DecomposedMeasure.from_density(I64, f / (I64.weights @ f))
    hi, lo = rho.density.max(), rho.density.min()
    run = fd_run(rho, 0.2, 1e-3)
    for s in run.states:
        assert s.density.max() <= hi * (1 + 1e-12) and s.density.min() >= lo * (1 - 1e-12)
    assert hi * M <= 3


def test_ledger_rows():
    run = fd_run(interior_only(I64), 0.01, 1e-3, save_every=5)
    led = run.ledger()
    assert [list(r) for r in led[:1]] == [["t", "mass", "entropy", "tv_to_stationary"]]
    np.testing.assert_allclose([r["t"] for r in led], [0, 0.005, 0.01])


def test_test_families():
    fam = default_test_functions(I64)
    assert list(fam) == ["1", "x", "x2", "cos"]
    fam = default_test_functions(D)
    assert list(fam) == ["1", "x", "r2cos", "x2-y2"]
    assert all(v.shape == (D.n_sites,) for v in fam.values())


def test_weak_residual_constant_function_is_mass_drift():
    run = fd_run(interior_only(D), 0.05, 1e-3)
    R = weak_residual(run.states, run.times)
    assert R.per_function()["1"] <= 1e-10


def test_fd_weak_residual_small():
    d = build_discretization(DomainSpec.interval(1.0, 128))
    run = fd_run(interior_only(d), 0.1, 1e-4)
    R = weak_residual(run.states, run.times)
    assert R.max_abs <= 1e-3
    assert R.residuals.shape == (4, len(run.times))
