"""Machine-checkable ledgers for JKO and finite-difference trajectories.

Inequalities guaranteed for the discrete objects are reported
with a pass flag at an explicit tolerance.  Quantities without a guaranteed
sign are reported, never flagged.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .domain import Discretization, DomainSpec, build_discretization
from .jko import JkoTrajectory, geodesic_point
from .measure import (DecomposedMeasure, ckp_check, dissipation, entropy, entropy_shift, fisher,
                      rel_entropy_stationary)
from .transport import (barycentric_momentum, exact_ot, reconstructed_momentum, wasserstein_exact,
                        wasserstein_interval_reconstructed)


# ----------------------------------------------------------------- EDI ledger
@dataclass
class EdiLedger:
    variant: str
    horizon: float
    entropy_initial: float
    entropy_final: float
    action: float
    dissipation_integral: float
    dissipation_integral_sentinel: float
    edi_slack: float
    edi_slack_sentinel: float
    tol: float
    ok: bool | None

    def as_dict(self) -> dict:
        return asdict(self)


def edi_ledger(traj: JkoTrajectory, variant: str = "one_step", tol: float = 1e-6,
               trace_tol: float | None = None) -> EdiLedger:
    """Sum the per-step energy balance of a trajectory.

    Parameters
    ----------
    variant : {"one_step", "with_dissipation"}
        ``one_step`` adds the one-step minimality inequalities; its slack must
        be ``>= -tol`` and ``ok`` reports that.  ``with_dissipation`` also
        subtracts ``sum tau D(rho^{n+1}) / 2`` using the unconditional
        ``I(omega) + I(gamma)`` (and separately the trace-checked version); its
        sign is not guaranteed, so ``ok`` is ``None``.
    """
    if variant not in ("one_step", "with_dissipation"):
        raise ValueError(f"unknown variant {variant!r}")
    tau = traj.cfg.tau
    e0 = entropy(traj.states[0])
    e1 = entropy(traj.states[-1])
    w2 = traj.column("w2") if traj.records else np.zeros(0)
    action = float(np.sum(w2) / (2 * tau))
    if variant == "one_step":
        slack = e0 - e1 - action
        return EdiLedger(variant, traj.n_steps * tau, e0, e1, action, 0.0, 0.0, slack, slack, tol,
                         bool(slack >= -tol))
    d_unc = np.array([fisher(s, "interior") + fisher(s, "boundary") for s in traj.states[1:]])
    d_sen = np.array([dissipation(s, trace_tol) for s in traj.states[1:]])
    di = float(0.5 * tau * d_unc.sum())
    ds = float(0.5 * tau * d_sen.sum())
    return EdiLedger(variant, traj.n_steps * tau, e0, e1, action, di, ds,
                     e0 - e1 - action - di, e0 - e1 - action - ds, tol, None)


# -------------------------------------------------------------- decay fitting
@dataclass
class DecayFit:
    lambda_fit: float
    r2: float
    ckp_ok: bool
    monotone_ok: bool
    envelope_ok: bool
    flagged: bool
    message: str = ""
    tail_start: float = math.nan
    times: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    rel_entropy: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["times"] = self.times.tolist()
        d["rel_entropy"] = self.rel_entropy.tolist()
        return d


def _times_states(source):
    if isinstance(source, JkoTrajectory):
        return source.times, source.states
    if hasattr(source, "times") and hasattr(source, "states"):
        return np.asarray(source.times), list(source.states)
    times, states = source
    return np.asarray(times, dtype=float), list(states)


def decay_fit(source, floor: float = 1e-12, mono_tol: float = 1e-10, min_decades: float = 2.0) -> DecayFit:
    """Fit ``H(rho_t | mu_bar) ~ exp(-2 lambda t)`` on the tail of a run.

    The tail is the last half of the samples with ``H`` above ``floor``.  The
    result also records whether ``H`` is non-increasing, whether CKP holds at
    every sample, and whether the tail stays below the fitted envelope with
    5% slack.  Runs whose ``H`` drops by fewer than ``min_decades`` decades are
    flagged and not fitted.
    """
    times, states = _times_states(source)
    H = np.array([rel_entropy_stationary(s) for s in states])
    ckp = all(ckp_check(s)[2] for s in states)
    mono = bool(np.all(np.diff(H) <= mono_tol * max(1.0, H[0])))
    base = dict(ckp_ok=ckp, monotone_ok=mono, times=times, rel_entropy=H)
    if H[0] <= floor or not np.all(H[0] / np.maximum(H[-1], 1e-300) >= 10 ** min_decades):
        return DecayFit(math.nan, math.nan, envelope_ok=False, flagged=True,
                        message="insufficient decay to fit", **base)
    valid = np.flatnonzero(H > floor)
    tail = valid[len(valid) // 2:]
    if tail.size < 3:
        return DecayFit(math.nan, math.nan, envelope_ok=False, flagged=True,
                        message="too few samples above the floor", **base)
    t, y = times[tail], np.log(H[tail])
    A = np.vstack([t, np.ones_like(t)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    slope = coef[0]
    resid = y - A @ coef
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss if ss > 0 else math.nan
    lam = -0.5 * slope
    env = H[tail[0]] * np.exp(-2 * lam * (t - t[0])) * 1.05
    envelope_ok = bool(np.all(H[tail] <= env))
    return DecayFit(float(lam), float(r2), envelope_ok=envelope_ok, flagged=False,
                    tail_start=float(t[0]), **base)


# --------------------------------------------------------------- slope probe
def _interior_neumann_laplacian(disc: Discretization) -> sp.csr_matrix:
    ni = disc.n_interior
    c = disc.face_area / disc.face_dist
    off = sp.coo_matrix((np.concatenate([c, c]),
                         (np.concatenate([disc.face_a, disc.face_b]),
                          np.concatenate([disc.face_b, disc.face_a]))), shape=(ni, ni)).tocsr()
    A = off - sp.diags(np.asarray(off.sum(axis=1)).ravel())
    return (sp.diags(1.0 / disc.interior_vol) @ A).tocsr()


def _boundary_laplacian(disc: Discretization) -> sp.csr_matrix:
    nb = disc.n_boundary
    if disc.bedge_a.size == 0:
        return sp.csr_matrix((nb, nb))
    c = 1.0 / disc.bedge_len
    off = sp.coo_matrix((np.concatenate([c, c]),
                         (np.concatenate([disc.bedge_a, disc.bedge_b]),
                          np.concatenate([disc.bedge_b, disc.bedge_a]))), shape=(nb, nb)).tocsr()
    A = off - sp.diags(np.asarray(off.sum(axis=1)).ravel())
    return (sp.diags(1.0 / disc.boundary_area) @ A).tocsr()


def partwise_heat_flow(rho: DecomposedMeasure, t: float) -> DecomposedMeasure:
    """Run the interior Neumann heat flow on ``omega`` and the boundary heat
    flow on ``gamma`` separately for time ``t`` (exact discrete semigroups)."""
    disc = rho.disc
    om = expm_multiply(t * _interior_neumann_laplacian(disc), rho.omega)
    Lb = _boundary_laplacian(disc)
    ga = rho.gamma.copy() if Lb.nnz == 0 else expm_multiply(t * Lb, rho.gamma)
    return DecomposedMeasure(disc, np.maximum(om, 0.0), np.maximum(ga, 0.0), rho.probability)


@dataclass
class SlopeProbe:
    times: np.ndarray
    quotients: np.ndarray
    half_fisher: float
    tol_probe: float
    ok: bool
    w2_mode: str

    def rows(self) -> list[dict]:
        return [{"t": float(t), "quotient": float(q), "half_fisher": self.half_fisher,
                 "ratio": float(q / self.half_fisher) if self.half_fisher > 0 else math.nan}
                for t, q in zip(self.times, self.quotients)]


def slope_probe(rho: DecomposedMeasure, t_list, tol_probe: float = 0.1, w2_mode: str = "auto") -> SlopeProbe:
    """Heat-flow lower bound for the metric slope.

    For every ``t`` the quotient ``(E(rho) - E(rho_t) - W^2(rho, rho_t)/(2t)) / t``
    is computed along the part-wise heat flows and compared with
    ``I(omega) + I(gamma)`` halved; the check is made at the smallest ``t``.

    Parameters
    ----------
    w2_mode : {"auto", "reconstructed", "sites"}
        ``reconstructed`` (the interval default) transports the cell-wise
        uniform reconstruction, which resolves sub-cell displacements;
        ``sites`` transports point masses at the sites.
    """
    disc = rho.disc
    if np.any(rho.density <= 0):
        raise ValueError("slope probe needs a strictly positive state")
    if w2_mode == "auto":
        w2_mode = "sites" if disc.is_disk else "reconstructed"
    t_arr = np.sort(np.asarray(list(t_list), dtype=float))
    e0 = entropy(rho)
    q = []
    for t in t_arr:
        rt = partwise_heat_flow(rho, t)
        if w2_mode == "reconstructed":
            w2 = wasserstein_interval_reconstructed(rho, rt)
        else:
            w2 = exact_ot(rho.masses, rt.masses * (rho.mass / rt.mass), disc.cost_euclid).cost_value
        q.append((e0 - entropy(rt) - w2 / (2 * t)) / t)
    q = np.array(q)
    half = 0.5 * (fisher(rho, "interior") + fisher(rho, "boundary"))
    ok = bool(q[0] >= (1.0 - tol_probe) * half)
    return SlopeProbe(t_arr, q, half, tol_probe, ok, w2_mode)


# ------------------------------------------------------ momentum decomposition
def _boundary_gradient_nodes(disc: Discretization, gamma: np.ndarray) -> np.ndarray:
    """Centred tangential derivative of a boundary field at the nodes."""
    if not disc.is_disk:
        return np.zeros(disc.n_boundary)
    ds = disc.bedge_len[0]
    return (np.roll(gamma, -1) - np.roll(gamma, 1)) / (2 * ds)


def momentum_decomposition_report(traj: JkoTrajectory, plan: str = "auto", tol: float = 0.05) -> list[dict]:
    """Per-step comparison of barycentric momentum with the density gradients.

    Parameters
    ----------
    plan : {"auto", "reconstructed", "exact", "stored"}
        ``reconstructed`` (interval only) uses the monotone coupling of the
        cell-wise uniform reconstructions, which resolves layers thinner than
        a cell; ``exact`` recomputes an optimal plan between the site masses;
        ``stored`` uses the step's own (entropic) plan.  ``auto`` picks
        ``reconstructed`` on the interval and ``exact`` on the disk.
    tol : float
        Relative slack for ``I(omega) + I(gamma) <= W^2 / tau^2``.

    Returns
    -------
    list of dict
        Keys: ``n``, ``interior_rel_l1`` (relative L1 of momentum plus
        ``grad omega`` times cell volume), ``tangential_rel_l1`` (disk only),
        ``normal_l1``, ``fisher``, ``speed2``, ``fisher_bound_ok``.
    """
    disc = traj.states[0].disc
    tau = traj.cfg.tau
    if plan == "auto":
        plan = "exact" if disc.is_disk else "reconstructed"
    if plan not in ("reconstructed", "exact", "stored"):
        raise ValueError(f"unknown plan mode {plan!r}")
    if plan == "stored" and not traj.plans:
        raise ValueError("trajectory has no stored plans")
    out = []
    for n in range(traj.n_steps):
        a, b = traj.states[n], traj.states[n + 1]
        if plan == "reconstructed":
            m = reconstructed_momentum(a, b, tau)
            w2 = wasserstein_interval_reconstructed(a, b)
        else:
            p = wasserstein_exact(a, b) if plan == "exact" else traj.plans[n]
            m = barycentric_momentum(disc, p, tau)
            w2 = p.cost_value
        grad = disc.cell_gradient(b.omega) * disc.interior_vol[:, None]
        num = np.linalg.norm(m.interior + grad, axis=1).sum()
        den = np.linalg.norm(grad, axis=1).sum()
        rel = float(num / den) if den > 0 else float(num)
        tang = None
        if m.boundary_tangential is not None:
            gg = _boundary_gradient_nodes(disc, b.gamma) * disc.boundary_area
            dd = np.abs(gg).sum()
            tang = float(np.abs(m.boundary_tangential + gg).sum() / dd) if dd > 0 else float(np.abs(m.boundary_tangential).sum())
        fi = fisher(b, "interior") + fisher(b, "boundary")
        speed2 = w2 / tau ** 2
        out.append({
            "n": n + 1,
            "interior_rel_l1": rel,
            "tangential_rel_l1": tang,
            "normal_l1": float(np.abs(m.boundary_normal).sum()),
            "fisher": fi,
            "speed2": float(speed2),
            "fisher_bound_ok": bool(fi <= speed2 * (1 + tol) + 1e-12),
        })
    return out


# --------------------------------------------------------- displacement convexity
def boundary_cap(disc: Discretization, center: float, width: float) -> DecomposedMeasure:
    """Boundary-only probability with a smooth bump of total angular ``width``."""
    nt = disc.n_boundary
    th = (np.arange(nt) + 0.5) * 2 * np.pi / nt
    d = (th - center + np.pi) % (2 * np.pi) - np.pi
    s = np.clip(np.abs(d) / (0.5 * width), 0, 1)
    bump = np.where(s < 1, np.cos(0.5 * np.pi * s) ** 2, 0.0)
    if bump.sum() == 0:
        raise ValueError("cap narrower than the boundary resolution")
    ga = bump / (bump @ disc.boundary_area)
    return DecomposedMeasure(disc, np.zeros(disc.n_interior), ga)


def nonconvexity_demo(disc: Discretization, width: float = np.pi / 4, s: float = 0.5) -> dict:
    """Geodesic between two antipodal boundary caps on the disk.

    Returns the interior mass fraction and the entropies of the endpoints and
    of the interpolated state at fraction ``s``.
    """
    if not disc.is_disk:
        raise ValueError("the displacement convexity demo needs the disk")
    r0 = boundary_cap(disc, 0.0, width)
    r1 = boundary_cap(disc, np.pi, width)
    plan = wasserstein_exact(r0, r1)
    mid = geodesic_point(disc, plan.pi, s)
    e0, e1, em = entropy(r0), entropy(r1), entropy(mid)
    return {
        "n_theta": disc.n_boundary,
        "n_r": disc.spec.n_radial,
        "width": width,
        "w2": plan.cost_value,
        "interior_fraction": mid.interior_mass,
        "entropy_start": e0,
        "entropy_end": e1,
        "entropy_mid": em,
        "entropy_jump": em - max(e0, e1),
        "convexity_violated": bool(em > (1 - s) * e0 + s * e1),
    }


def nonconvexity_refinement(n_thetas=(16, 32, 64), radius: float = 1.0, width: float = np.pi / 4) -> list[dict]:
    """Run :func:`nonconvexity_demo` on disks with ``n_r = n_theta / 4``."""
    out = []
    for nt in n_thetas:
        disc = build_discretization(DomainSpec.disk(radius, max(2, nt // 4), nt))
        out.append(nonconvexity_demo(disc, width))
    return out


def entropy_identity_residual(rho: DecomposedMeasure) -> float:
    """``|E(rho) - H(rho | mu_bar) - (M - 1 - log M)|`` for a probability ``rho``."""
    return abs(entropy(rho) - rel_entropy_stationary(rho) - entropy_shift(rho.disc))
