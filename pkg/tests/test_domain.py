import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sticky_jko.domain import DomainSpec, build_discretization, chord_vs_intrinsic_gap


@pytest.fixture(scope="module")
def disk():
    return build_discretization(DomainSpec.disk(1.0, 4, 16))


def test_interval_n4_sites_and_weights():
    d = build_discretization(DomainSpec.interval(1.0, 4))
    np.testing.assert_allclose(d.interior_pos[:, 0], [1 / 8, 3 / 8, 5 / 8, 7 / 8])
    np.testing.assert_allclose(d.interior_vol, 0.25)
    np.testing.assert_allclose(d.boundary_pos[:, 0], [0.0, 1.0])
    np.testing.assert_allclose(d.boundary_area, 1.0)


def test_interval_total_mu_mass():
    d = build_discretization(DomainSpec.interval(1.0, 4))
    assert d.total_mass == pytest.approx(3.0, abs=1e-12)


def test_disk_boundary_circumference():
    d = build_discretization(DomainSpec.disk(1.0, 2, 8))
    assert d.boundary_area.sum() == pytest.approx(2 * math.pi, abs=1e-12)


@pytest.mark.parametrize("R,nr,nt", [(1.0, 2, 8), (2.5, 5, 24), (0.3, 8, 64)])
def test_disk_area_and_positivity(R, nr, nt):
    d = build_discretization(DomainSpec.disk(R, nr, nt))
    assert np.all(d.interior_vol > 0) and np.all(d.boundary_area > 0)
    assert d.interior_vol.sum() == pytest.approx(math.pi * R * R, abs=1e-12)
    assert d.boundary_area.sum() == pytest.approx(2 * math.pi * R, abs=1e-12)
    # no site at the centre
    assert np.min(np.hypot(*d.interior_pos.T)) > 0
    # boundary nodes sit at the outermost angular positions, projected to r = R
    outer = d.interior_pos[-nt:]
    np.testing.assert_allclose(np.arctan2(outer[:, 1], outer[:, 0]),
                               np.arctan2(d.boundary_pos[:, 1], d.boundary_pos[:, 0]), atol=1e-12)
    np.testing.assert_allclose(np.hypot(*d.boundary_pos.T), R)


def test_disk_cell_volume_formula():
    R, nr, nt = 1.0, 3, 8
    d = build_discretization(DomainSpec.disk(R, nr, nt))
    r = np.linspace(0, R, nr + 1)
    expect = np.repeat((2 * math.pi / nt) * (r[1:] ** 2 - r[:-1] ** 2) / 2, nt)
    np.testing.assert_allclose(d.interior_vol, expect, rtol=1e-13)


@pytest.mark.parametrize("bad", [
    dict(kind="interval", size=0.0, n_radial=4),
    dict(kind="interval", size=1.0, n_radial=1),
    dict(kind="disk", size=1.0, n_radial=1, n_angular=8),
    dict(kind="disk", size=1.0, n_radial=2, n_angular=7),
    dict(kind="disk", size=-1.0, n_radial=2, n_angular=8),
])
def test_invalid_specs_rejected(bad):
    with pytest.raises(ValueError):
        DomainSpec(**bad)


def test_cost_matrix_properties(disk):
    C = disk.cost_euclid
    assert np.allclose(C, C.T) and np.all(np.diag(C) == 0)
    D = np.sqrt(C)
    rng = np.random.default_rng(0)
    idx = rng.integers(0, disk.n_sites, size=(500, 3))
    x, y, z = idx.T
    assert np.all(D[x, z] <= D[x, y] + D[y, z] + 1e-12)


def test_chord_gap_antipodal_and_adjacent():
    d = build_discretization(DomainSpec.disk(1.0, 2, 8))
    gap = chord_vs_intrinsic_gap(d)
    assert gap[0, 4] == pytest.approx(math.pi - 2, abs=1e-12)
    assert gap[0, 1] == pytest.approx(2 * math.pi / 8 - 2 * math.sin(math.pi / 8), abs=1e-12)
    assert gap[0, 1] > 0
    assert np.all(np.diag(gap) == 0)
    assert np.all(gap >= -1e-12)


def test_interval_boundary_components():
    d = build_discretization(DomainSpec.interval(1.0, 8))
    assert np.isinf(d.dist_boundary[0, 1]) and d.dist_boundary[0, 0] == 0
    assert np.all(chord_vs_intrinsic_gap(d) >= -1e-12)


def _sbp_residual(d, rng):
    phi = rng.normal(size=d.n_interior)
    u = rng.normal(size=d.face_a.size + d.bface_cell.size)
    nf = d.face_a.size
    lhs = np.sum(phi * (d.div @ u) * d.interior_vol)
    lhs += np.sum((d.grad @ phi) * u[:nf] * d.face_area * d.face_dist)
    rhs = np.sum(phi[d.bface_cell] * u[nf:] * d.bface_area)
    return abs(lhs - rhs) / (1 + abs(rhs))


@given(st.integers(min_value=0, max_value=2 ** 31 - 1))
def test_summation_by_parts(seed):
    rng = np.random.default_rng(seed)
    for spec in (DomainSpec.interval(1.3, 17), DomainSpec.disk(0.7, 3, 12)):
        assert _sbp_residual(build_discretization(spec), rng) < 1e-12


def test_outward_normal_convention():
    d = build_discretization(DomainSpec.interval(1.0, 64))
    x = d.interior_pos[:, 0]
    dn = d.normal_derivative @ (x ** 2)
    # at x=0 the outward derivative is -f'(0) = 0, at x=1 it is f'(1) = 2
    assert dn[0] == pytest.approx(0.0, abs=0.05)
    assert dn[1] == pytest.approx(2.0, abs=0.05)


def test_trace_extrapolation_second_order():
    errs = []
    for n in (16, 32, 64):
        d = build_discretization(DomainSpec.interval(1.0, n))
        x = d.interior_pos[:, 0]
        tr = d.trace_operator(True) @ np.cos(np.pi * x)
        errs.append(np.max(np.abs(tr - np.cos(np.pi * d.boundary_pos[:, 0]))))
    assert errs[1] / errs[0] < 0.3 and errs[2] / errs[1] < 0.3


def test_trace_adjacent_first_order():
    d = build_discretization(DomainSpec.interval(1.0, 32))
    x = d.interior_pos[:, 0]
    tr = d.trace_operator(False) @ x
    np.testing.assert_allclose(tr, [x[0], x[-1]])


@pytest.mark.parametrize("kind", ["interval", "disk"])
def test_gradient_refinement_consistency(kind):
    errs = []
    for n in (8, 16, 32):
        if kind == "interval":
            d = build_discretization(DomainSpec.interval(1.0, 4 * n))
            x = d.interior_pos[:, 0]
            g = d.cell_gradient(np.cos(np.pi * x))
            ex = -np.pi * np.sin(np.pi * x)[:, None]
        else:
            d = build_discretization(DomainSpec.disk(1.0, n, 4 * n))
            X, Y = d.interior_pos.T
            g = d.cell_gradient(X * X - Y * Y)  # r^2 cos(2 theta)
            ex = np.stack([2 * X, -2 * Y], axis=1)
        errs.append(np.sum(np.linalg.norm(g - ex, axis=1) * d.interior_vol))
    assert errs[1] <= 0.55 * errs[0] and errs[2] <= 0.55 * errs[1]


def test_disk_boundary_gradient_of_cosine():
    d = build_discretization(DomainSpec.disk(2.0, 4, 64))
    th = np.arctan2(d.boundary_pos[:, 1], d.boundary_pos[:, 0])
    g = d.grad_boundary @ np.cos(th)
    mid = th[d.bedge_a] + 0.5 * np.angle(np.exp(1j * (th[d.bedge_b] - th[d.bedge_a])))
    np.testing.assert_allclose(g, -np.sin(mid) / 2.0, atol=2e-3)


def test_nearest_site():
    d = build_discretization(DomainSpec.interval(1.0, 4))
    idx = d.nearest_site(np.array([[0.01], [0.4], [0.99]]))
    np.testing.assert_array_equal(idx, [d.n_interior + 0, 1, d.n_interior + 1])
