"""Minimizing-movement (JKO) steps for the entropy on a decomposed grid.

One step maps ``prev`` to the minimizer of ``E(rho) + W^2(prev, rho) / (2 tau)``.

Entropic solver
---------------
The plan ``pi`` (rows = ``prev`` sites, columns = new sites) is found by
minimizing ``eps KL(pi | prev_i P_ij) + 2 tau E(pi^T 1)`` with rows fixed to
``prev``.  The reference kernel ``P`` is the Gibbs kernel ``exp(-C / eps)``
symmetrized so that it is row-stochastic and reversible for the site weights
``w``: ``P_ij = d_i d_j exp(-C_ij / eps) w_j`` with ``d`` the symmetric
Sinkhorn scaling.  Reversibility makes the normalized reference measure an
exact fixed point of the regularized step and gives an exact discrete maximum
principle.

Alternating scaling projects the rows onto ``prev`` and applies the closed
form KL-proximal map of ``2 tau E`` to the columns: the new density is the
pre-proximal density raised to ``kappa = eps / (eps + 2 tau)``.  Scaling
sweeps are followed by Newton iterations on the same convex dual
(``_dual_newton``), which converge quadratically when ``kappa`` is small and
plain scaling contracts only at rate ``1 - kappa``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
from scipy.special import logsumexp

from .domain import Discretization
from .measure import (DecomposedMeasure, entropy, fisher, h_entropy, trace_gap)
from .transport import Method, TransportPlan, exact_ot


class Solver(str, enum.Enum):
    ENTROPIC = "entropic"
    BRUTE_FORCE = "brute_force"


class StepError(RuntimeError):
    """Raised when a step fails to converge and the config asks for strictness."""


@dataclass(frozen=True)
class JkoConfig:
    """Parameters of one minimizing-movement step.

    Parameters
    ----------
    tau : float
        Time step.
    sinkhorn_epsilon : float or None
        Final entropic parameter (length^2).  ``None`` selects
        ``min(h^2, 1e-3 diam^2)`` for the grid at hand.
    epsilon_start : float or None
        First value of the geometric epsilon schedule; ``None`` starts at the
        final value.
    epsilon_decay : float
        Factor between consecutive schedule values.
    inner_tol : float
        Tolerance on the L1 stationarity residual of the dual (mass units).
    max_inner_iter : int
        Budget of Newton iterations per schedule stage.
    scaling_sweeps : int
        Alternating scaling sweeps before the Newton polish.
    solver : Solver
    mu_regularization : float or None
        Width of the mollified reference measure (see
        :func:`jko_step_regularized`).
    kernel : {"reversible", "gibbs"}
        Reference kernel of the entropic term.
    proximal_rounds : int
        Extra Bregman proximal-point rounds at the final epsilon, each using
        the previous plan times ``exp(-C / eps)`` as reference.  Every round
        shrinks the entropic bias; the limit is the unregularized step.
    strict : bool
        Raise :class:`StepError` on non-convergence instead of flagging.
    """

    tau: float
    sinkhorn_epsilon: float | None = None
    epsilon_start: float | None = None
    epsilon_decay: float = 0.5
    inner_tol: float = 1e-10
    max_inner_iter: int = 200
    scaling_sweeps: int = 20
    solver: Solver = Solver.ENTROPIC
    mu_regularization: float | None = None
    kernel: str = "reversible"
    proximal_rounds: int = 0
    strict: bool = False

    def __post_init__(self):
        object.__setattr__(self, "solver", Solver(self.solver))
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise ValueError("tau must be positive")
        if self.sinkhorn_epsilon is not None and not self.sinkhorn_epsilon > 0:
            raise ValueError("sinkhorn_epsilon must be positive")
        if not self.inner_tol > 0:
            raise ValueError("inner_tol must be positive")
        if not 0 < self.epsilon_decay < 1:
            raise ValueError("epsilon_decay must lie in (0, 1)")
        if self.kernel not in ("reversible", "gibbs"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.max_inner_iter < 1:
            raise ValueError("max_inner_iter must be at least 1")

    def epsilon_for(self, disc: Discretization) -> float:
        if self.sinkhorn_epsilon is not None:
            return float(self.sinkhorn_epsilon)
        return float(min(disc.mesh_size ** 2, 1e-3 * disc.diameter ** 2))

    def schedule(self, disc: Discretization) -> list[float]:
        final = self.epsilon_for(disc)
        eps = final if self.epsilon_start is None else max(self.epsilon_start, final)
        out = [eps]
        while eps > final * (1 + 1e-12):
            eps = max(eps * self.epsilon_decay, final)
            out.append(eps)
        return out


# ---------------------------------------------------------------- kernel
def _symmetric_scaling(C: np.ndarray, w: np.ndarray, eps: float, tol: float = 1e-14) -> np.ndarray:
    """Log of ``d`` solving ``d_i sum_j exp(-C_ij/eps) d_j w_j = 1``.

    Newton on the convex potential
    ``F(u) = 1/2 sum_ij w_i w_j exp(u_i + u_j - C_ij/eps) - sum_i w_i u_i``.
    """
    lw = np.log(w)
    L = -C / eps + lw[None, :]
    u = -0.5 * logsumexp(L, axis=1)

    def parts(u):
        M = L + u[None, :] + u[:, None]  # log of K_ij d_j w_j d_i
        row = np.exp(logsumexp(M, axis=1))  # d_i sum_j K_ij d_j w_j
        return M, row

    def value(u):
        M = L + u[None, :] + u[:, None] + lw[:, None]
        return 0.5 * np.exp(logsumexp(M)) - w @ u

    M, row = parts(u)
    for _ in range(200):
        grad = w * (row - 1.0)
        if np.max(np.abs(row - 1.0)) <= tol:
            break
        E = np.exp(M) * w[:, None]  # w_i d_i K_ij d_j w_j
        H = E + np.diag(w * row)
        step = -sla.solve(H, grad, assume_a="pos")
        f0 = value(u)
        s = 1.0
        while s > 1e-12:
            un = u + s * step
            if value(un) <= f0 + 1e-4 * s * (grad @ step):
                break
            s *= 0.5
        u = un
        M, row = parts(u)
    return u


def reference_log_kernel(disc: Discretization, eps: float, kind: str = "reversible") -> np.ndarray:
    """Log of the row-stochastic reference kernel ``P`` for entropic steps."""
    key = ("logP", float(eps), kind)
    cache = disc._cache
    if key not in cache:
        C = disc.cost_euclid
        w = disc.weights
        if kind == "reversible":
            u = _symmetric_scaling(C, w, eps)
            logP = u[:, None] + u[None, :] - C / eps + np.log(w)[None, :]
        else:
            logP = -C / eps + np.log(w)[None, :]
        logP -= logsumexp(logP, axis=1, keepdims=True)  # remove round-off
        # bounded cache: kernels are n x n
        for k in [k for k in cache if isinstance(k, tuple) and k[0] == "logP"][:-3]:
            del cache[k]
        cache[key] = logP
    return cache[key]


# --------------------------------------------------------- entropic solver
@dataclass
class _DualState:
    g: np.ndarray
    logpi: np.ndarray
    sigma: np.ndarray
    resid: float


def _plan_from_g(la: np.ndarray, logR: np.ndarray, g: np.ndarray, eps: float):
    """Row-normalized plan for column potential ``g``."""
    Z = logR + g[None, :] / eps
    logpi = Z - logsumexp(Z, axis=1, keepdims=True) + la[:, None]
    return logpi


def _dual_value(la, logR, g, eps, w, two_tau):
    Z = logR + g[None, :] / eps
    return eps * np.exp(la) @ logsumexp(Z, axis=1) + two_tau * w @ np.exp(-g / two_tau)


def _state(la, logR, g, eps, w, two_tau) -> _DualState:
    logpi = _plan_from_g(la, logR, g, eps)
    sigma = np.exp(logsumexp(logpi, axis=0))
    resid = float(np.abs(sigma - w * np.exp(-g / two_tau)).sum())
    return _DualState(g, logpi, sigma, resid)


def _scaling_sweeps(la, logR, g, eps, w, two_tau, n):
    """Alternating scaling: row projection then the geometric-mean proximal map."""
    kappa = eps / (eps + two_tau)
    lw = np.log(w)
    for _ in range(n):
        f = -eps * logsumexp(logR + g[None, :] / eps, axis=1)
        ell = logsumexp(la[:, None] + logR + f[:, None] / eps, axis=0) - lw  # pre-proximal log density
        g = -eps * (1.0 - kappa) * ell
    return g


def _dual_newton(la, logR, g, eps, w, two_tau, tol, max_iter):
    a = np.exp(la)
    st = _state(la, logR, g, eps, w, two_tau)
    it = 0
    for it in range(1, max_iter + 1):
        if st.resid <= tol:
            break
        pi = np.exp(st.logpi)
        q = w * np.exp(-st.g / two_tau)
        grad = st.sigma - q
        H = (np.diag(st.sigma) - (pi / a[:, None]).T @ pi) / eps + np.diag(q / two_tau)
        s = np.sqrt(np.diag(H))
        Hs = H / s[:, None] / s[None, :]
        try:
            step = -sla.solve(Hs, grad / s, assume_a="pos") / s
        except (sla.LinAlgError, ValueError):
            step = -sla.lstsq(Hs, grad / s)[0] / s
        phi0 = _dual_value(la, logR, st.g, eps, w, two_tau)
        slope = grad @ step
        t = 1.0
        while True:
            gn = st.g + t * step
            phin = _dual_value(la, logR, gn, eps, w, two_tau)
            if phin <= phi0 + 1e-4 * t * slope or t < 1e-10:
                break
            t *= 0.5
        new = _state(la, logR, gn, eps, w, two_tau)
        if t < 1e-10 and new.resid >= st.resid:
            break
        st = new
    return st, it


def _solve_stage(la, logR, g, eps, w, two_tau, cfg):
    g = _scaling_sweeps(la, logR, g, eps, w, two_tau, cfg.scaling_sweeps)
    return _dual_newton(la, logR, g, eps, w, two_tau, cfg.inner_tol, cfg.max_inner_iter)


def _regularized_objective(logpi, la, logR, sigma, w, eps, two_tau) -> float:
    pi = np.exp(logpi)
    kl = float(np.sum(pi * (logpi - la[:, None] - logR)))
    return eps * kl + two_tau * float(w @ h_entropy(sigma / w))


def _entropic_step(masses: np.ndarray, disc: Discretization, w: np.ndarray, C: np.ndarray,
                   cfg: JkoConfig, g0: np.ndarray | None, kernel_fn):
    src = np.flatnonzero(masses > 0)
    la = np.log(masses[src])
    two_tau = 2.0 * cfg.tau
    g = np.zeros(w.size) if g0 is None else np.asarray(g0, dtype=float).copy()
    total_it = 0
    st = None
    for eps in cfg.schedule(disc):
        logR = kernel_fn(eps)[src]
        st, it = _solve_stage(la, logR, g, eps, w, two_tau, cfg)
        g = st.g
        total_it += it
    eps = cfg.schedule(disc)[-1]
    logR = kernel_fn(eps)[src]
    reg = _regularized_objective(st.logpi, la, logR, st.sigma, w, eps, two_tau)
    for _ in range(cfg.proximal_rounds):
        logR = st.logpi - la[:, None] - C[src] / eps
        logR = logR - logsumexp(logR, axis=1, keepdims=True)
        st, it = _solve_stage(la, logR, st.g, eps, w, two_tau, cfg)
        total_it += it
    pi = np.zeros((masses.size, w.size))
    pi[src] = np.exp(st.logpi)
    return pi, st, total_it, eps, reg


# -------------------------------------------------------- brute-force oracle
def brute_force_step(masses: np.ndarray, w: np.ndarray, C: np.ndarray, tau: float,
                     tol: float = 1e-10, max_iter: int = 200_000):
    """Mirror descent over plans with fixed rows for small instances.

    Minimizes ``<C, pi> / (2 tau) + sum_j w_j H(sigma_j / w_j)`` over
    nonnegative ``pi`` with row sums ``masses``.  Multiplicative updates
    ``pi_ij <- pi_ij exp(-G_ij)`` followed by row renormalization until the
    Frank-Wolfe gap is below ``tol``.

    Returns
    -------
    pi : ndarray
    gap : float
        Final Frank-Wolfe gap (an upper bound on the suboptimality).
    iterations : int
    """
    n = w.size
    if n > 12:
        raise ValueError("brute-force oracle is limited to 12 sites")
    a = np.asarray(masses, dtype=float)
    rows = a > 0
    pi = np.zeros((a.size, n))
    pi[rows] = a[rows, None] * (w / w.sum())[None, :]

    def gradient(p):
        s = p.sum(axis=0)
        return C / (2 * tau) + np.log(np.maximum(s, 1e-300) / w)[None, :]

    # E is 1-smooth relative to KL on plans (data processing: KL of the column
    # marginals never exceeds KL of the plans) and the cost term is linear, so
    # unit steps decrease the objective without a line search
    eta = 1.0
    gap = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        G = gradient(pi)
        gap = float(np.sum(pi * G) - a @ G.min(axis=1))
        if gap <= tol:
            break
        logp = np.log(np.maximum(pi[rows], 1e-320)) - eta * G[rows]
        logp -= logsumexp(logp, axis=1, keepdims=True)
        pi[rows] = a[rows, None] * np.exp(logp)
    return pi, gap, it


# --------------------------------------------------------------- steps
def _measure_from_sigma(prev: DecomposedMeasure, sigma: np.ndarray) -> DecomposedMeasure:
    disc = prev.disc
    sigma = np.maximum(sigma, 0.0)
    if prev.probability:
        sigma = sigma * (prev.mass / sigma.sum())  # remove summation round-off only
    return DecomposedMeasure.from_masses(disc, sigma, prev.probability)


def jko_step(prev: DecomposedMeasure, cfg: JkoConfig, warm_start: np.ndarray | None = None):
    """One minimizing-movement step.

    Parameters
    ----------
    prev : DecomposedMeasure
    cfg : JkoConfig
    warm_start : ndarray, optional
        Column potential from a previous entropic step.

    Returns
    -------
    next : DecomposedMeasure
    plan : TransportPlan
        Rows are ``prev`` sites, columns the new sites.  ``plan.extras`` holds
        the column potential (``"g"``), the regularized objective, the
        iteration count and the stationarity residual.  Non-convergence sets
        ``plan.converged = False`` (or raises when ``cfg.strict``).
    """
    if cfg.mu_regularization is not None:
        return jko_step_regularized(prev, cfg, warm_start)
    disc = prev.disc
    w = disc.weights
    C = disc.cost_euclid
    m = prev.masses
    if cfg.solver is Solver.BRUTE_FORCE:
        pi, gap, it = brute_force_step(m, w, C, cfg.tau)
        sigma = pi.sum(axis=0)
        plan = TransportPlan(pi, float(np.sum(C * pi)), Method.BRUTE,
                             marginal_residual=float(np.abs(pi.sum(1) - m).sum()),
                             converged=gap <= 1e-10, extras={"fw_gap": gap, "iterations": it})
    else:
        pi, st, it, eps, reg = _entropic_step(m, disc, w, C, cfg, warm_start,
                                              lambda e: reference_log_kernel(disc, e, cfg.kernel))
        sigma = st.sigma
        plan = TransportPlan(pi, float(np.sum(C * pi)), Method.PROXIMAL, epsilon=eps,
                             marginal_residual=st.resid, converged=st.resid <= cfg.inner_tol,
                             extras={"g": st.g, "iterations": it, "regularized_objective": reg})
    if not plan.converged and cfg.strict:
        raise StepError(f"JKO step did not converge: residual {plan.marginal_residual:.3e}")
    return _measure_from_sigma(prev, sigma), plan


def epsilon_drift(prev: DecomposedMeasure, cfg: JkoConfig, tol: float = 1e-3) -> tuple[float, bool]:
    """Entropic bias check: L1 distance between the step at the configured
    final epsilon and the step at half of it, and whether it is ``<= tol``."""
    a, _ = jko_step(prev, cfg)
    half = replace(cfg, sinkhorn_epsilon=0.5 * cfg.epsilon_for(prev.disc))
    b, _ = jko_step(prev, half)
    d = float(np.abs(a.masses - b.masses).sum())
    return d, d <= tol


# ------------------------------------------------- mollified reference measure
def mollified_weights(disc: Discretization, eps_mu: float):
    """Spread every boundary weight onto interior cells within ``eps_mu``.

    Each boundary node's area is distributed over the cells of its normal
    column (the whole interval half next to an endpoint, the radial column
    on the disk) with a hat profile ``(1 - dist / eps_mu)_+`` in the distance
    to the boundary, normalized so the node's area is preserved exactly.

    Returns
    -------
    w_eps : ndarray, shape (n_interior,)
        Interior weights of the mollified measure.
    added : ndarray, shape (n_boundary, n_interior)
        Weight each boundary node contributes to each cell.
    """
    h = disc.mesh_size
    if not eps_mu >= h * (1 - 1e-12):
        raise ValueError(f"eps_mu={eps_mu!r} is below the mesh resolution {h!r}")
    nb, ni = disc.n_boundary, disc.n_interior
    added = np.zeros((nb, ni))
    x = disc.interior_pos
    if disc.is_disk:
        nr, nt = disc.spec.n_radial, disc.spec.n_angular
        dist = disc.spec.size - np.hypot(x[:, 0], x[:, 1])
        col = np.arange(ni) % nt
        for k in range(nb):
            prof = np.where(col == k, np.maximum(1.0 - dist / eps_mu, 0.0), 0.0)
            added[k] = disc.boundary_area[k] * prof / prof.sum()
    else:
        L = disc.spec.size
        for k, d in enumerate([x[:, 0], L - x[:, 0]]):
            near = d <= 0.5 * L
            prof = np.where(near, np.maximum(1.0 - d / eps_mu, 0.0), 0.0)
            added[k] = disc.boundary_area[k] * prof / prof.sum()
    return disc.interior_vol + added.sum(axis=0), added


def jko_step_regularized(prev: DecomposedMeasure, cfg: JkoConfig, warm_start=None):
    """Step against the mollified reference measure ``mu^eps``.

    The boundary weights are removed and redistributed to interior cells (see
    :func:`mollified_weights`), so the new state is an absolutely continuous
    density on interior cells.  For comparison with ordinary steps the share
    of each cell's mass that came from boundary node ``k`` is collapsed back
    onto that node.

    Returns
    -------
    next : DecomposedMeasure
        Collapsed state on the original discretization.
    plan : TransportPlan
        Rows are ``prev`` sites; boundary columns are empty.
        ``plan.extras["raw_density"]`` is the density with respect to
        ``mu^eps`` on interior cells and ``plan.extras["weights"]`` the
        mollified weights.
    """
    eps_mu = cfg.mu_regularization
    if eps_mu is None:
        raise ValueError("cfg.mu_regularization is not set")
    disc = prev.disc
    w_eps, added = mollified_weights(disc, eps_mu)
    ni = disc.n_interior
    C = disc.cost_euclid[:, :ni]
    m = prev.masses

    def kernel(eps):
        key = ("logP_moll", float(eps), float(eps_mu))
        if key not in disc._cache:
            Ci = disc.cost_euclid[:ni, :ni]
            u = _symmetric_scaling(Ci, w_eps, eps)
            logP = np.empty((disc.n_sites, ni))
            logP[:ni] = u[:, None] + u[None, :] - Ci / eps + np.log(w_eps)[None, :]
            logP[ni:] = u[None, :] - C[ni:] / eps + np.log(w_eps)[None, :]
            logP -= logsumexp(logP, axis=1, keepdims=True)
            disc._cache[key] = logP
        return disc._cache[key]

    pi_i, st, it, eps, reg = _entropic_step(m, disc, w_eps, C, cfg, warm_start, kernel)
    sigma = st.sigma
    raw = sigma / w_eps
    om = raw * disc.interior_vol
    ga = added @ raw
    full = np.concatenate([om, ga])
    pi = np.zeros((disc.n_sites, disc.n_sites))
    pi[:, :ni] = pi_i
    plan = TransportPlan(pi, float(np.sum(C * pi_i)), Method.PROXIMAL, epsilon=eps,
                         marginal_residual=st.resid, converged=st.resid <= cfg.inner_tol,
                         extras={"g": st.g, "iterations": it, "regularized_objective": reg,
                                 "raw_density": raw, "weights": w_eps})
    if not plan.converged and cfg.strict:
        raise StepError(f"regularized step did not converge: residual {st.resid:.3e}")
    return _measure_from_sigma(prev, full), plan


# ------------------------------------------------------------ trajectories
LEDGER_COLUMNS = ("n", "t", "w2", "speed2", "entropy", "fisherI", "fisherB", "trace_gap", "edi_slack")


@dataclass
class JkoTrajectory:
    """States ``rho^0 .. rho^N`` with per-step records.

    ``records[k]`` describes the step from ``states[k]`` to ``states[k+1]``
    and has the keys of :data:`LEDGER_COLUMNS`.  ``w2`` is the exact squared
    distance between consecutive states when ``w2_mode == "exact"`` and the
    cost of the step's own plan otherwise.
    """

    states: list
    records: list
    cfg: JkoConfig
    plans: list = field(default_factory=list)
    converged: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    w2_mode: str = "exact"

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.states)) * self.cfg.tau

    @property
    def n_steps(self) -> int:
        return len(self.states) - 1

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.records])


def step_record(n: int, tau: float, prev: DecomposedMeasure, nxt: DecomposedMeasure, w2: float) -> dict:
    e_prev, e_next = entropy(prev), entropy(nxt)
    return {
        "n": n + 1,
        "t": (n + 1) * tau,
        "w2": w2,
        "speed2": w2 / tau ** 2,
        "entropy": e_next,
        "fisherI": fisher(nxt, "interior"),
        "fisherB": fisher(nxt, "boundary"),
        "trace_gap": trace_gap(nxt),
        "edi_slack": e_prev - e_next - w2 / (2 * tau),
    }


def run_trajectory(rho0: DecomposedMeasure, T: float, cfg: JkoConfig, store_plans: bool = True,
                   w2_mode: str = "exact", callback=None) -> JkoTrajectory:
    """Iterate :func:`jko_step` for ``ceil(T / tau)`` steps.

    Parameters
    ----------
    w2_mode : {"exact", "plan"}
        Distance recorded per step: exact OT between consecutive states or
        the transport cost of the step's plan (an upper bound).
    callback : callable, optional
        Called as ``callback(n, state, record)`` after every step.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if not np.all(np.isfinite(rho0.density)):
        raise ValueError("initial entropy must be finite")
    if w2_mode not in ("exact", "plan"):
        raise ValueError(f"unknown w2_mode {w2_mode!r}")
    n_steps = int(math.ceil(T / cfg.tau - 1e-9))
    traj = JkoTrajectory([rho0], [], cfg, w2_mode=w2_mode)
    g = None
    cur = rho0
    C = rho0.disc.cost_euclid
    for n in range(n_steps):
        try:
            nxt, plan = jko_step(cur, cfg, g)
        except StepError as exc:
            raise StepError(f"step {n + 1}: {exc}") from exc
        g = plan.extras.get("g")
        if w2_mode == "exact":
            w2 = exact_ot(cur.masses, nxt.masses, C).cost_value
        else:
            w2 = plan.cost_value
        rec = step_record(n, cfg.tau, cur, nxt, w2)
        traj.states.append(nxt)
        traj.records.append(rec)
        traj.converged.append(bool(plan.converged))
        traj.residuals.append(float(plan.marginal_residual))
        if store_plans:
            traj.plans.append(plan)
        if callback is not None:
            callback(n + 1, nxt, rec)
        cur = nxt
    return traj


class Interpolant(str, enum.Enum):
    CONSTANT = "constant"
    GEODESIC = "geodesic"
    DEGIORGI = "degiorgi"


def geodesic_point(disc: Discretization, pi: np.ndarray, s: float, probability: bool = True) -> DecomposedMeasure:
    """Displacement interpolation of a plan at fraction ``s``.

    Mass ``pi_ij`` is placed at ``(1 - s) x_i + s x_j`` and deposited on the
    nearest site.
    """
    x = disc.positions
    ii, jj = np.nonzero(pi > 0)
    pts = (1.0 - s) * x[ii] + s * x[jj]
    if s == 0.0:
        idx = ii
    elif s == 1.0:
        idx = jj
    else:
        idx = disc.nearest_site(pts)
    m = np.bincount(idx, weights=pi[ii, jj], minlength=disc.n_sites)
    return DecomposedMeasure.from_masses(disc, m, probability)


def interpolate(traj: JkoTrajectory, t: float, kind="constant", cfg: JkoConfig | None = None) -> DecomposedMeasure:
    """Evaluate one of the three time interpolants at ``t``.

    ``constant`` returns ``rho^{n+1}`` on ``(t_n, t_{n+1}]``; ``geodesic``
    interpolates the stored plan of step ``n``; ``degiorgi`` runs a fresh step
    of length ``t - t_n`` from ``rho^n`` (``cfg`` overrides the trajectory
    config, ``tau`` is replaced).
    """
    kind = Interpolant(kind)
    tau = traj.cfg.tau
    T = traj.n_steps * tau
    if not -1e-12 <= t <= T + 1e-12:
        raise ValueError(f"t={t!r} outside [0, {T!r}]")
    if kind is Interpolant.CONSTANT:
        k = int(math.ceil(t / tau - 1e-9))
        return traj.states[min(max(k, 0), traj.n_steps)]
    n = min(int(math.floor(t / tau + 1e-9)), traj.n_steps)
    r = t - n * tau
    if n == traj.n_steps or r <= 1e-12 * tau:
        return traj.states[n]
    if kind is Interpolant.GEODESIC:
        if not traj.plans:
            raise ValueError("geodesic interpolation needs stored plans")
        return geodesic_point(traj.states[n].disc, traj.plans[n].pi, r / tau, traj.states[n].probability)
    base = traj.cfg if cfg is None else cfg
    nxt, _ = jko_step(traj.states[n], replace(base, tau=r))
    return nxt
