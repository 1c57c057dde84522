"""Implicit finite-volume solver for the bulk/boundary heat system.

Unknowns are the densities on all sites (interior cells, then boundary
nodes).  The mass-form generator is the weighted graph Laplacian ``A`` with
conductance ``area / dist`` on every face family:

* interior faces carry the interior Laplacian,
* cell-to-node faces carry the near-boundary flux with the boundary value
  substituted for the interior trace; the same flux enters the boundary node,
* node-to-node edges carry the Laplace-Beltrami operator on the circle.

``A`` is symmetric with zero row sums, so ``W f' = A f`` conserves
``sum(W f)`` and keeps the constant density stationary.  Implicit Euler uses
``W - dt A``, an M-matrix.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .domain import Discretization
from .measure import DecomposedMeasure, entropy, tv_distance


def graph_laplacian(disc: Discretization) -> sp.csr_matrix:
    """Symmetric mass-form generator over all sites."""
    ni = disc.n_interior
    p = np.concatenate([disc.face_a, disc.bface_cell, ni + disc.bedge_a])
    q = np.concatenate([disc.face_b, ni + disc.bface_node, ni + disc.bedge_b])
    c = np.concatenate([disc.face_area / disc.face_dist,
                        disc.bface_area / disc.bface_dist,
                        1.0 / disc.bedge_len if disc.bedge_len.size else np.zeros(0)])
    n = disc.n_sites
    off = sp.coo_matrix((np.concatenate([c, c]), (np.concatenate([p, q]), np.concatenate([q, p]))),
                        shape=(n, n)).tocsr()
    deg = np.asarray(off.sum(axis=1)).ravel()
    return (off - sp.diags(deg)).tocsr()


@dataclass(eq=False)
class FdSystem:
    """Implicit Euler system for step ``dt``.

    Attributes
    ----------
    operator : sparse matrix
        ``I - dt * G`` in density form, ``G = W^{-1} A``.
    generator : sparse matrix
        ``G``.
    laplacian : sparse matrix
        Symmetric mass-form generator ``A``.
    conservation_vector : ndarray
        Site weights; ``weights @ G == 0``.
    """

    disc: Discretization
    dt: float
    operator: sp.csr_matrix
    generator: sp.csr_matrix
    laplacian: sp.csr_matrix
    conservation_vector: np.ndarray
    _lu: object = field(default=None, repr=False)

    def step(self, f: np.ndarray) -> np.ndarray:
        w = self.conservation_vector
        out = self._lu.solve(w * f)
        if not np.all(np.isfinite(out)):
            raise FloatingPointError("implicit solve produced non-finite values")
        return out


def build_fd_system(disc: Discretization, dt: float) -> FdSystem:
    if not dt > 0:
        raise ValueError("dt must be positive")
    A = graph_laplacian(disc)
    w = disc.weights
    G = (sp.diags(1.0 / w) @ A).tocsr()
    op = (sp.identity(disc.n_sites) - dt * G).tocsr()
    sym = (sp.diags(w) - dt * A).tocsc()
    try:
        lu = spla.splu(sym)
    except RuntimeError as exc:  # singular factor
        raise np.linalg.LinAlgError(f"implicit system factorization failed: {exc}") from exc
    return FdSystem(disc, float(dt), op, G, A, w.copy(), lu)


@dataclass
class FdRun:
    times: np.ndarray
    states: list
    dt: float

    def ledger(self) -> list[dict]:
        """Rows (t, mass, entropy, tv_to_stationary) for every stored state."""
        if not self.states:
            return []
        bar = DecomposedMeasure.stationary(self.states[0].disc)
        return [dict(t=float(t), mass=s.mass, entropy=entropy(s), tv_to_stationary=tv_distance(s, bar))
                for t, s in zip(self.times, self.states)]


def fd_run(rho0: DecomposedMeasure, T: float, dt: float, save_every: int = 1,
           system: FdSystem | None = None) -> FdRun:
    """Implicit Euler trajectory from ``rho0`` up to time ``T``.

    ``ceil(T / dt)`` steps are taken; every ``save_every``-th state and the
    final state are stored.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    disc = rho0.disc
    sysm = system if system is not None else build_fd_system(disc, dt)
    n_steps = int(math.ceil(T / dt - 1e-9))
    f = rho0.density.copy()
    times, states = [0.0], [rho0]
    for n in range(1, n_steps + 1):
        f = sysm.step(f)
        if n % save_every == 0 or n == n_steps:
            # round-off can leave -1e-18 style entries at exact zeros
            states.append(DecomposedMeasure.from_density(disc, np.maximum(f, 0.0), rho0.probability))
            times.append(n * dt)
    return FdRun(np.array(times), states, float(dt))


def default_test_functions(disc: Discretization) -> dict:
    """Default smooth test functions evaluated at all sites."""
    x = disc.positions
    if disc.is_disk:
        r = np.hypot(x[:, 0], x[:, 1])
        th = np.arctan2(x[:, 1], x[:, 0])
        return {"1": np.ones(len(x)), "x": x[:, 0], "r2cos": r * r * np.cos(th),
                "x2-y2": x[:, 0] ** 2 - x[:, 1] ** 2}
    s = x[:, 0] / disc.spec.size
    return {"1": np.ones(len(x)), "x": s, "x2": s * s, "cos": np.cos(np.pi * s)}


@dataclass
class ResidualTable:
    names: list
    times: np.ndarray
    residuals: np.ndarray  # shape (n_functions, n_times)

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.residuals))) if self.residuals.size else 0.0

    def per_function(self) -> dict:
        return {k: float(np.max(np.abs(r))) for k, r in zip(self.names, self.residuals)}


def weak_residual(states, times, test_functions: dict | None = None) -> ResidualTable:
    """Residual of the weak formulation along a stored trajectory.

    For each test function ``phi`` and stored time ``t_k``::

        R = <phi, rho_{t_k}> - <phi, rho_0> + int_0^{t_k} a(phi, rho_s) ds

    where ``a`` is the Dirichlet form of interior gradients (including the
    half cells next to the boundary, with the boundary density as the
    interior trace) plus tangential boundary gradients.  The time integral
    uses the trapezoid rule.
    """
    states = list(states)
    times = np.asarray(times, dtype=float)
    disc = states[0].disc
    fam = default_test_functions(disc) if test_functions is None else test_functions
    A = graph_laplacian(disc)
    w = disc.weights
    F = np.array([s.density for s in states])  # (nt, n)
    names = list(fam)
    out = np.zeros((len(names), len(states)))
    dts = np.diff(times)
    for k, name in enumerate(names):
        phi = np.asarray(fam[name], dtype=float)
        pair = F @ (w * phi)
        form = -(F @ (A @ phi))  # a(phi, f) = -phi^T A f, A symmetric
        integral = np.concatenate([[0.0], np.cumsum(0.5 * dts * (form[1:] + form[:-1]))])
        out[k] = pair - pair[0] + integral
    return ResidualTable(names, times, out)
