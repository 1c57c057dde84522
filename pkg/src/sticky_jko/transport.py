"""Optimal transport between decomposed measures.

The ground cost is the squared chord distance between all sites.  Exact plans
come from a network-simplex LP solver; entropic plans from log-domain Sinkhorn
scaling.  Plans are oriented with rows indexed by the source (earlier state)
and columns by the target (later state).
"""
from __future__ import annotations

import csv
import enum
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .domain import Discretization
from .measure import DecomposedMeasure

for _backend in ("TENSORFLOW", "PYTORCH", "JAX", "CUPY"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_backend}", "1")
import ot  # noqa: E402

MAX_EXACT_SITES = 4096


class Method(str, enum.Enum):
    EXACT = "exact_lp"
    ENTROPIC = "entropic"
    PROXIMAL = "jko_entropic"
    BRUTE = "brute_force"


@dataclass(eq=False)
class TransportPlan:
    """Coupling between two site-mass vectors.

    Attributes
    ----------
    pi : ndarray, shape (n, n)
        Plan in mass units.
    cost_value : float
        ``sum(C * pi)``.
    method : Method
    epsilon : float or None
        Entropic parameter for entropic plans.
    marginal_residual : float
        L1 violation of the prescribed marginals (the column marginal is only
        prescribed for pure transport problems).
    converged : bool
    extras : dict
        Method-specific values (regularized and debiased costs, certificate
        residual, iteration counts).
    """

    pi: np.ndarray
    cost_value: float
    method: Method
    epsilon: float | None = None
    marginal_residual: float = 0.0
    converged: bool = True
    extras: dict = field(default_factory=dict)

    @property
    def source(self) -> np.ndarray:
        return self.pi.sum(axis=1)

    @property
    def target(self) -> np.ndarray:
        return self.pi.sum(axis=0)


@dataclass
class Momentum:
    """Barycentric momentum at target sites.

    ``interior`` has shape (n_interior, dim).  ``boundary_tangential`` is None
    on the interval.  ``boundary_normal`` uses the outward normal.
    """

    interior: np.ndarray
    boundary_tangential: np.ndarray | None
    boundary_normal: np.ndarray


def _mass_vectors(a, b) -> tuple[np.ndarray, np.ndarray]:
    ma = a.masses if isinstance(a, DecomposedMeasure) else np.asarray(a, dtype=float)
    mb = b.masses if isinstance(b, DecomposedMeasure) else np.asarray(b, dtype=float)
    return ma, mb


def _cost(a, b, cost) -> np.ndarray:
    if cost is not None:
        return np.asarray(cost, dtype=float)
    for m in (a, b):
        if isinstance(m, DecomposedMeasure):
            return m.disc.cost_euclid
    raise ValueError("a cost matrix is required for raw mass vectors")


def exact_ot(ma: np.ndarray, mb: np.ndarray, C: np.ndarray) -> TransportPlan:
    """Exact OT between mass vectors by network simplex.

    The LP is solved on the supports; duals of empty rows and columns are
    filled by c-transforms so the reduced-cost certificate covers the whole
    cost matrix.
    """
    ma = np.asarray(ma, dtype=float)
    mb = np.asarray(mb, dtype=float)
    if abs(ma.sum() - mb.sum()) > 1e-9:
        raise ValueError(f"mass mismatch: {ma.sum()!r} vs {mb.sum()!r}")
    n = max(ma.size, mb.size)
    if n > MAX_EXACT_SITES:
        raise ValueError(f"exact OT limited to {MAX_EXACT_SITES} sites, got {n}")
    ia, ib = np.flatnonzero(ma > 0), np.flatnonzero(mb > 0)
    a, b = ma[ia], mb[ib]
    b = b * (a.sum() / b.sum())  # the LP needs exactly balanced marginals
    Cs = np.ascontiguousarray(C[np.ix_(ia, ib)])
    pis, log = ot.emd(a, b, Cs, numItermax=10_000_000, log=True)
    u = np.full(ma.size, np.nan)
    v = np.full(mb.size, np.nan)
    u[ia], v[ib] = log["u"], log["v"]
    zero_b = np.setdiff1d(np.arange(mb.size), ib)
    if zero_b.size:
        v[zero_b] = np.min(C[np.ix_(ia, zero_b)] - u[ia, None], axis=0)
    zero_a = np.setdiff1d(np.arange(ma.size), ia)
    if zero_a.size:
        u[zero_a] = np.min(C[zero_a] - v[None, :], axis=1)
    reduced = C - u[:, None] - v[None, :]
    scale = max(1.0, float(np.abs(C).max()))
    cert = float(-min(reduced.min(), 0.0)) / scale
    pi = np.zeros((ma.size, mb.size))
    pi[np.ix_(ia, ib)] = pis
    resid = float(np.abs(pi.sum(1) - ma).sum() + np.abs(pi.sum(0) - mb).sum())
    ok = log.get("warning") is None and cert <= 1e-9
    return TransportPlan(
        pi=pi,
        cost_value=float(np.sum(Cs * pis)),
        method=Method.EXACT,
        marginal_residual=resid,
        converged=ok,
        extras={"certificate_residual": cert, "dual_u": u, "dual_v": v,
                "dual_value": float(u[ia] @ ma[ia] + v[ib] @ mb[ib]), "warning": log.get("warning")},
    )


def wasserstein_exact(a, b, cost: np.ndarray | None = None) -> TransportPlan:
    """Exact squared Wasserstein distance and an optimal plan.

    Parameters
    ----------
    a, b : DecomposedMeasure or ndarray
        Source and target.  Raw mass vectors need ``cost``.
    cost : ndarray, optional
        Defaults to the squared chord cost of the discretization.
    """
    ma, mb = _mass_vectors(a, b)
    return exact_ot(ma, mb, _cost(a, b, cost))


def _sinkhorn_log(la, lb, C, eps, f, g, max_iter, tol):
    """Log-domain Sinkhorn on supports with log-masses ``la``, ``lb``."""
    it = 0
    resid = math.inf
    ea, eb = np.exp(la), np.exp(lb)
    for it in range(1, max_iter + 1):
        f = -eps * logsumexp(lb[None, :] + (g[None, :] - C) / eps, axis=1)
        g = -eps * logsumexp(la[:, None] + (f[:, None] - C) / eps, axis=0)
        if it % 10 == 0 or it == max_iter:
            logp = la[:, None] + lb[None, :] + (f[:, None] + g[None, :] - C) / eps
            resid = float(np.abs(np.exp(logsumexp(logp, axis=1)) - ea).sum())
            if resid <= tol:
                break
    logp = la[:, None] + lb[None, :] + (f[:, None] + g[None, :] - C) / eps
    resid = float(np.abs(np.exp(logsumexp(logp, axis=1)) - ea).sum()
                  + np.abs(np.exp(logsumexp(logp, axis=0)) - eb).sum())
    return f, g, np.exp(logp), resid, it


def _entropic_value(la, lb, C, eps, f, g, pi):
    """Regularized objective ``<C,pi> + eps KL(pi | a x b)``.

    The reference ``a x b`` has total mass ``m_a m_b``, so the KL term
    includes ``- sum pi + m_a m_b``.
    """
    pos = pi > 0
    a, b = np.exp(la), np.exp(lb)
    logref = (la[:, None] + lb[None, :])[pos]
    kl = float(np.sum(pi[pos] * (np.log(pi[pos]) - logref)) - pi.sum() + a.sum() * b.sum())
    return float(np.sum(C * pi)) + eps * kl


def entropic_ot(ma, mb, C, epsilon, max_iter=20000, tol=1e-9, scaling=0.5, eps_start=None):
    """Entropic OT with an epsilon-scaling warm start, returning (plan, value)."""
    ma = np.asarray(ma, dtype=float)
    mb = np.asarray(mb, dtype=float)
    ia, ib = ma > 0, mb > 0
    la, lb = np.log(ma[ia]), np.log(mb[ib])
    Cs = C[np.ix_(ia, ib)]
    f = np.zeros(la.size)
    g = np.zeros(lb.size)
    eps = max(epsilon, float(Cs.max()) if eps_start is None else eps_start)
    total_it = 0
    while True:
        last = eps <= epsilon
        f, g, pis, resid, it = _sinkhorn_log(la, lb, Cs, eps, f, g,
                                             max_iter if last else 200, tol if last else 1e-6)
        total_it += it
        if last:
            break
        eps = max(eps * scaling, epsilon)
    value = _entropic_value(la, lb, Cs, epsilon, f, g, pis)
    pi = np.zeros((ma.size, mb.size))
    pi[np.ix_(ia, ib)] = pis
    return pi, value, resid, total_it


def wasserstein_entropic(a, b, epsilon: float, max_iter: int = 20000, tol: float = 1e-9,
                         cost: np.ndarray | None = None) -> TransportPlan:
    """Entropic OT by log-domain Sinkhorn with epsilon scaling.

    ``cost_value`` is the transport cost of the entropic plan.  ``extras``
    carries the labeled variants:

    * ``raw``: regularized value ``OT_eps(a, b)``,
    * ``debiased``: ``OT_eps(a, b) - (OT_eps(a, a) + OT_eps(b, b)) / 2``.

    Non-convergence is reported through ``converged`` and
    ``marginal_residual``, never raised.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    ma, mb = _mass_vectors(a, b)
    C = _cost(a, b, cost)
    pi, val_ab, resid, its = entropic_ot(ma, mb, C, epsilon, max_iter, tol)
    _, val_aa, _, _ = entropic_ot(ma, ma, C, epsilon, max_iter, tol)
    _, val_bb, _, _ = entropic_ot(mb, mb, C, epsilon, max_iter, tol)
    return TransportPlan(
        pi=pi,
        cost_value=float(np.sum(C * pi)),
        method=Method.ENTROPIC,
        epsilon=epsilon,
        marginal_residual=resid,
        converged=resid <= tol,
        extras={"raw": val_ab, "debiased": val_ab - 0.5 * (val_aa + val_bb), "iterations": its},
    )


def _interval_quantile_pieces(disc: Discretization, dens: np.ndarray):
    """Cumulative masses and quantile pieces of the cell-wise reconstruction.

    Boundary nodes are atoms at the endpoints; interior cell ``i`` is spread
    uniformly over ``[x_i - h/2, x_i + h/2]``.
    """
    L, h = disc.spec.size, disc.mesh_size
    ni = disc.n_interior
    m = dens * disc.weights
    # ordered pieces: left atom, cells, right atom; (mass, start, length)
    mass = np.concatenate([[m[ni]], m[:ni], [m[ni + 1]]])
    start = np.concatenate([[0.0], np.arange(ni) * h, [L]])
    length = np.concatenate([[0.0], np.full(ni, h), [0.0]])
    return mass, start, length


def _piece_quantile(piece, cum, s):
    mass, start, length = piece
    j = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, mass.size - 1)
    safe = np.where(mass[j] > 0, mass[j], 1.0)
    frac = np.where(mass[j] > 0, (s - cum[j]) / safe, 0.0)
    return start[j] + np.clip(frac, 0.0, 1.0) * length[j], j


def _reconstructed_coupling(a: DecomposedMeasure, b: DecomposedMeasure):
    """Sub-intervals of the quantile coupling of the cell-wise reconstructions.

    Returns ``(lo, hi, x_lo, x_mid, x_hi, y_lo, y_mid, y_hi, jb)`` where the
    positions are source (``x``) and target (``y``) quantiles at the ends and
    midpoint of each sub-interval and ``jb`` the target piece index.
    """
    disc = a.disc
    if disc.is_disk:
        raise ValueError("reconstructed transport is only available on the interval")
    if abs(a.mass - b.mass) > 1e-9:
        raise ValueError("mass mismatch")
    pa = _interval_quantile_pieces(disc, a.density)
    pb = _interval_quantile_pieces(disc, b.density * (a.mass / b.mass))
    ca = np.concatenate([[0.0], np.cumsum(pa[0])])
    cb = np.concatenate([[0.0], np.cumsum(pb[0])])
    M = ca[-1]
    grid = np.unique(np.clip(np.concatenate([ca, cb]), 0.0, M))
    lo, hi = grid[:-1], grid[1:]
    keep = hi - lo > 0
    lo, hi = lo[keep], hi[keep]
    mid = 0.5 * (lo + hi)
    inset = 1e-14 * (hi - lo)
    xl, _ = _piece_quantile(pa, ca, lo + inset)
    xm, _ = _piece_quantile(pa, ca, mid)
    xh, _ = _piece_quantile(pa, ca, hi - inset)
    yl, _ = _piece_quantile(pb, cb, lo + inset)
    ym, jb = _piece_quantile(pb, cb, mid)
    yh, _ = _piece_quantile(pb, cb, hi - inset)
    return lo, hi, xl, xm, xh, yl, ym, yh, jb


def wasserstein_interval_reconstructed(a: DecomposedMeasure, b: DecomposedMeasure) -> float:
    """Squared distance between the cell-wise reconstructions on an interval.

    Interior masses are uniform on their cells and boundary masses are atoms
    at the endpoints.  The quantile functions are piecewise affine, so the
    quantile-coupling integral is evaluated exactly (Simpson's rule on each
    affine piece).  Unlike the distance between point masses at the sites,
    it is consistent for displacements smaller than a cell.
    """
    lo, hi, xl, xm, xh, yl, ym, yh, _ = _reconstructed_coupling(a, b)
    d0, dm, d1 = yl - xl, ym - xm, yh - xh
    return float(np.sum((hi - lo) * (d0 ** 2 + 4 * dm ** 2 + d1 ** 2) / 6.0))


def reconstructed_momentum(a: DecomposedMeasure, b: DecomposedMeasure, tau: float) -> "Momentum":
    """Barycentric momentum of the reconstructed monotone coupling (interval).

    The displacement ``y - x`` of every quantile is divided by ``tau`` and
    accumulated on the target piece (cell or endpoint atom) it lands in.
    Layers thinner than a cell that stick to an endpoint contribute their
    true sub-cell displacement.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    disc = a.disc
    lo, hi, xl, xm, xh, yl, ym, yh, jb = _reconstructed_coupling(a, b)
    disp = (hi - lo) * (ym - xm) / tau  # displacement is affine on each piece
    ni = disc.n_interior
    acc = np.bincount(jb, weights=disp, minlength=ni + 2)
    interior = acc[1:ni + 1, None]
    boundary = np.array([acc[0], acc[ni + 1]])
    normal = boundary * disc.boundary_normal[:, 0]
    return Momentum(interior=interior, boundary_tangential=None, boundary_normal=normal)


def _circle_quantile_cost(ta, ma, tb, mb, period, alpha) -> float:
    """Cost of coupling quantile ``t`` of ``a`` with quantile ``t + alpha`` of
    the periodically extended ``b`` (atomic measures on an unrolled circle)."""
    M = ma.sum()
    Fa, Fb = np.cumsum(ma), np.cumsum(mb)
    k0 = math.floor(alpha / M)
    ext = np.concatenate([Fb + (k0 + j) * M for j in (-1, 0, 1, 2)]) - alpha
    grid = np.concatenate([[0.0], Fa, ext[(ext > 0) & (ext < M)]])
    grid = np.unique(np.clip(grid, 0.0, M))
    mid = 0.5 * (grid[1:] + grid[:-1])
    xa = ta[np.minimum(np.searchsorted(Fa, mid, side="right"), ta.size - 1)]
    u = mid + alpha
    k = np.floor(u / M)
    r = u - k * M
    xb = tb[np.minimum(np.searchsorted(Fb, r, side="right"), tb.size - 1)] + k * period
    return float(np.sum(np.diff(grid) * (xb - xa) ** 2))


def wasserstein_boundary_circle(disc: Discretization, ga: np.ndarray, gb: np.ndarray) -> float:
    """Squared Wasserstein distance on the boundary circle with arc-length cost.

    Parameters
    ----------
    ga, gb : ndarray, shape (n_boundary,)
        Boundary densities with respect to arc length.

    Notes
    -----
    The optimal coupling on the circle is the monotone coupling of the
    unrolled measures with some shift of the quantile origin; the cost is
    convex in the shift and minimized by golden-section search.
    """
    if not disc.is_disk:
        raise ValueError("circle transport is only defined on the disk boundary")
    ma = np.asarray(ga, dtype=float) * disc.boundary_area
    mb = np.asarray(gb, dtype=float) * disc.boundary_area
    if abs(ma.sum() - mb.sum()) > 1e-9:
        raise ValueError("boundary masses differ")
    M = ma.sum()
    if M <= 0:
        return 0.0
    mb = mb * (M / mb.sum())
    R = disc.spec.size
    nt = disc.n_boundary
    theta = (np.arange(nt) + 0.5) * 2.0 * np.pi / nt
    s = R * theta
    period = 2.0 * np.pi * R
    ia, ib = ma > 0, mb > 0
    ta, wa, tb, wb = s[ia], ma[ia], s[ib], mb[ib]

    def cost(alpha):
        return _circle_quantile_cost(ta, wa, tb, wb, period, alpha)

    # the cost is convex in the shift; bracket a period around the best grid shift
    shifts = np.linspace(-M, M, 4 * nt + 1)
    vals = np.array([cost(x) for x in shifts])
    j = int(np.argmin(vals))
    lo, hi = shifts[max(j - 1, 0)], shifts[min(j + 1, shifts.size - 1)]
    gr = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = hi - gr * (hi - lo), lo + gr * (hi - lo)
    fc, fd = cost(c), cost(d)
    while hi - lo > 1e-10 * max(M, 1.0):
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - gr * (hi - lo)
            fc = cost(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + gr * (hi - lo)
            fd = cost(d)
    return float(min(fc, fd, vals[j]))


def barycentric_momentum(disc: Discretization, plan: TransportPlan, tau: float) -> Momentum:
    """``m_j = sum_i pi_ij (x_j - x_i) / tau`` at every target site.

    Interior entries are the raw vectors (mass times velocity); boundary
    entries are split into the outward normal component and, on the disk, the
    tangential component.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    x = disc.positions
    pi = plan.pi
    m = (pi.sum(axis=0)[:, None] * x - pi.T @ x) / tau
    ni = disc.n_interior
    mb = m[ni:]
    normal = np.sum(mb * disc.boundary_normal, axis=1)
    tang = None if disc.boundary_tangent is None else np.sum(mb * disc.boundary_tangent, axis=1)
    return Momentum(interior=m[:ni], boundary_tangential=tang, boundary_normal=normal)


def write_plan_csv(path, plan: TransportPlan, threshold: float = 0.0) -> None:
    """Write the plan's nonzero entries as (i, j, mass) rows."""
    ii, jj = np.nonzero(plan.pi > threshold)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "mass"])
        for i, j in zip(ii, jj):
            w.writerow([int(i), int(j), repr(float(plan.pi[i, j]))])
