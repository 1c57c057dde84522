"""Decomposed measures and the functionals evaluated on them.

A :class:`DecomposedMeasure` stores densities with respect to the reference
measure ``mu`` on every site of a :class:`~sticky_jko.domain.Discretization`:
``omega`` on interior cells and ``gamma`` on boundary nodes.  The mass of a
site is ``density * weight``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .domain import Discretization

MASS_TOL = 1e-9


def h_entropy(z: np.ndarray) -> np.ndarray:
    """Pointwise ``z log z - z + 1`` with the limit value 1 at ``z = 0``."""
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    pos = z > 0
    zp = z[pos]
    out[pos] = zp * np.log(zp) - zp + 1.0
    return out


@dataclass(frozen=True, eq=False)
class DecomposedMeasure:
    """Interior and boundary densities with respect to ``mu``.

    Parameters
    ----------
    disc : Discretization
    omega : ndarray, shape (n_interior,)
    gamma : ndarray, shape (n_boundary,)
    probability : bool
        When true (default) the total mass must equal 1 within ``1e-9``.
    """

    disc: Discretization
    omega: np.ndarray
    gamma: np.ndarray
    probability: bool = True

    def __post_init__(self):
        om = np.array(self.omega, dtype=float).ravel()
        ga = np.array(self.gamma, dtype=float).ravel()
        if om.size != self.disc.n_interior or ga.size != self.disc.n_boundary:
            raise ValueError("density sizes do not match the discretization")
        if not (np.all(np.isfinite(om)) and np.all(np.isfinite(ga))):
            raise ValueError("densities must be finite")
        if om.min(initial=0.0) < 0 or ga.min(initial=0.0) < 0:
            raise ValueError("densities must be nonnegative")
        om.setflags(write=False)
        ga.setflags(write=False)
        object.__setattr__(self, "omega", om)
        object.__setattr__(self, "gamma", ga)
        if self.probability and abs(self.mass - 1.0) > MASS_TOL:
            raise ValueError(f"probability measure has mass {self.mass!r}")

    # ----------------------------------------------------------- constructors
    @classmethod
    def from_density(cls, disc: Discretization, f: np.ndarray, probability: bool = True):
        """Build from a stacked density vector (interior first)."""
        f = np.asarray(f, dtype=float)
        return cls(disc, f[: disc.n_interior], f[disc.n_interior:], probability)

    @classmethod
    def from_masses(cls, disc: Discretization, m: np.ndarray, probability: bool = True):
        """Build from site masses; densities are masses over weights."""
        return cls.from_density(disc, np.asarray(m, dtype=float) / disc.weights, probability)

    @classmethod
    def stationary(cls, disc: Discretization) -> "DecomposedMeasure":
        """The normalized reference measure: constant density ``1 / mu(closure)``."""
        c = 1.0 / disc.total_mass
        return cls(disc, np.full(disc.n_interior, c), np.full(disc.n_boundary, c))

    # -------------------------------------------------------------- accessors
    @property
    def density(self) -> np.ndarray:
        return np.concatenate([self.omega, self.gamma])

    @property
    def masses(self) -> np.ndarray:
        return self.density * self.disc.weights

    @property
    def mass(self) -> float:
        return float(self.omega @ self.disc.interior_vol + self.gamma @ self.disc.boundary_area)

    @property
    def interior_mass(self) -> float:
        return float(self.omega @ self.disc.interior_vol)

    @property
    def boundary_mass(self) -> float:
        return float(self.gamma @ self.disc.boundary_area)


@dataclass(frozen=True)
class FunctionalReport:
    entropy: float
    fisher_interior: float
    fisher_boundary: float
    trace_gap: float
    dissipation: float
    rel_entropy_stationary: float
    tv_to_stationary: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _check_same(a: DecomposedMeasure, b: DecomposedMeasure):
    if a.disc is not b.disc:
        raise ValueError("measures live on different discretizations")


def entropy(rho: DecomposedMeasure) -> float:
    """``sum_i vol_i H(omega_i) + sum_j area_j H(gamma_j)``."""
    d = rho.disc
    return float(d.interior_vol @ h_entropy(rho.omega) + d.boundary_area @ h_entropy(rho.gamma))


def fisher(rho: DecomposedMeasure, part: str = "interior") -> float:
    """Fisher information in the form ``4 ||grad sqrt f||^2``.

    Parameters
    ----------
    part : {"interior", "boundary"}
        Interior faces with the interior gradient, or boundary edges with the
        tangential gradient.  The interval boundary has no edges, so the
        boundary part is exactly zero there.
    """
    d = rho.disc
    if part == "interior":
        s = np.sqrt(rho.omega)
        diff = s[d.face_b] - s[d.face_a]
        return float(4.0 * np.sum(d.face_area / d.face_dist * diff * diff))
    if part == "boundary":
        if d.bedge_a.size == 0:
            return 0.0
        s = np.sqrt(rho.gamma)
        diff = s[d.bedge_b] - s[d.bedge_a]
        return float(4.0 * np.sum(diff * diff / d.bedge_len))
    raise ValueError(f"unknown part {part!r}")


def trace_gap(rho: DecomposedMeasure, extrapolate: bool = True) -> float:
    """Mean mismatch between the interior trace and the boundary density.

    Returns ``sum_j area_j |trace(omega)_j - gamma_j| / |boundary|``.
    """
    d = rho.disc
    tr = d.trace_operator(extrapolate) @ rho.omega
    return float(d.boundary_area @ np.abs(tr - rho.gamma) / d.boundary_area.sum())


def default_trace_tol(disc: Discretization) -> float:
    return 2.0 * disc.mesh_size


def dissipation(rho: DecomposedMeasure, trace_tol: float | None = None) -> float:
    """``I(omega) + I(gamma)`` if the trace matches within ``trace_tol``, else ``inf``."""
    if trace_tol is None:
        trace_tol = default_trace_tol(rho.disc)
    if trace_tol <= 0:
        raise ValueError("trace_tol must be positive")
    if trace_gap(rho) > trace_tol:
        return math.inf
    return fisher(rho, "interior") + fisher(rho, "boundary")


def tv_distance(a: DecomposedMeasure, b: DecomposedMeasure) -> float:
    _check_same(a, b)
    return float(0.5 * np.sum(np.abs(a.density - b.density) * a.disc.weights))


def rel_entropy_stationary(rho: DecomposedMeasure) -> float:
    """Relative entropy with respect to the normalized reference measure.

    Computed directly as ``sum_i w_i f_i log(M f_i)`` with ``M = mu(closure)``,
    which equals ``H(rho | mu_bar)`` for a probability ``rho``.
    """
    f = rho.density
    w = rho.disc.weights
    M = rho.disc.total_mass
    pos = f > 0
    return float(np.sum(w[pos] * f[pos] * np.log(M * f[pos])))


def entropy_shift(disc: Discretization) -> float:
    """Constant ``E(rho) - H(rho | mu_bar)`` for probabilities: ``M - 1 - log M``."""
    M = disc.total_mass
    return M - 1.0 - math.log(M)


def ckp_check(rho: DecomposedMeasure) -> tuple[float, float, bool]:
    """Compare ``TV(rho, mu_bar)`` with ``sqrt(H(rho | mu_bar) / 2)``."""
    lhs = tv_distance(rho, DecomposedMeasure.stationary(rho.disc))
    rhs = math.sqrt(0.5 * max(rel_entropy_stationary(rho), 0.0))
    return lhs, rhs, lhs <= rhs + 1e-12


def functional_report(rho: DecomposedMeasure, trace_tol: float | None = None) -> FunctionalReport:
    return FunctionalReport(
        entropy=entropy(rho),
        fisher_interior=fisher(rho, "interior"),
        fisher_boundary=fisher(rho, "boundary"),
        trace_gap=trace_gap(rho),
        dissipation=dissipation(rho, trace_tol),
        rel_entropy_stationary=rel_entropy_stationary(rho),
        tv_to_stationary=tv_distance(rho, DecomposedMeasure.stationary(rho.disc)),
    )


# ----------------------------------------------------------------- CSV format
def _fmt_pos(p: np.ndarray) -> str:
    return ";".join(repr(float(v)) for v in p)


def csv_header(disc: Discretization) -> list[str]:
    cols = ["kind"]
    cols += [f"omega@{_fmt_pos(p)}" for p in disc.interior_pos]
    cols += [f"gamma@{_fmt_pos(p)}" for p in disc.boundary_pos]
    return cols


def csv_row(rho: DecomposedMeasure, tag: str | None = None) -> list[str]:
    tag = rho.disc.spec.kind.value if tag is None else tag
    return [tag] + [repr(float(v)) for v in rho.density]


def write_measure_csv(path, states, tag: str | None = None) -> None:
    """Write one or more measures on the same discretization, one row each."""
    if isinstance(states, DecomposedMeasure):
        states = [states]
    states = list(states)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_header(states[0].disc))
        for s in states:
            w.writerow(csv_row(s, tag))


def read_measure_csv(path_or_text, disc: Discretization, probability: bool = True) -> list[DecomposedMeasure]:
    """Read measures written by :func:`write_measure_csv`.

    The header positions must match ``disc`` to 1e-12.
    """
    if isinstance(path_or_text, (str, Path)) and Path(path_or_text).exists():
        text = Path(path_or_text).read_text()
    else:
        text = str(path_or_text)
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ValueError("empty measure file")
    header, body = rows[0], rows[1:]
    if len(header) != disc.n_sites + 1 or header[0] != "kind":
        raise ValueError("measure header does not match the discretization")
    pos = np.array([[float(v) for v in c.split("@", 1)[1].split(";")] for c in header[1:]])
    if pos.shape != disc.positions.shape or not np.allclose(pos, disc.positions, atol=1e-12, rtol=0):
        raise ValueError("site positions in the header do not match the discretization")
    out = []
    for r in body:
        if not r:
            continue
        f = np.array([float(v) for v in r[1:]])
        out.append(DecomposedMeasure.from_density(disc, f, probability))
    return out
