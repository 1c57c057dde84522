"""Discrete geometry for bulk/boundary diffusion on an interval or a disk.

Sites are split into interior cells (weighted by cell volume) and boundary
nodes (weighted by surface measure), so that the site weights realize the
reference measure ``Leb_interior + Leb_boundary``.  All site-indexed arrays
put the interior cells first and the boundary nodes after them.

The finite-volume connectivity is stored as three face families:

* interior faces between two cells,
* boundary faces between an outermost cell and the boundary node it touches,
* boundary edges between consecutive boundary nodes (empty on the interval).

Every face carries an area and a centre-to-centre distance; its conductance
``area / dist`` is shared by the Fisher information, the summation-by-parts
stencils and the finite-difference generator.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


class DomainKind(str, enum.Enum):
    INTERVAL = "interval"
    DISK = "disk"


@dataclass(frozen=True)
class DomainSpec:
    """Shape and resolution of the discretized domain.

    For the interval ``size`` is the length and ``n_radial`` the number of
    cells; ``n_angular`` is ignored.  For the disk ``size`` is the radius and
    the grid has ``n_radial x n_angular`` polar cells plus ``n_angular``
    boundary nodes on the circle.
    """

    kind: DomainKind
    size: float = 1.0
    n_radial: int = 64
    n_angular: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", DomainKind(self.kind))
        if not np.isfinite(self.size) or self.size <= 0:
            raise ValueError(f"domain size must be positive, got {self.size}")
        if self.kind is DomainKind.INTERVAL:
            if self.n_radial < 2:
                raise ValueError("interval needs at least 2 cells")
        else:
            if self.n_radial < 2:
                raise ValueError("disk needs n_radial >= 2")
            if self.n_angular < 8:
                raise ValueError("disk needs n_angular >= 8")

    @classmethod
    def interval(cls, length: float = 1.0, n: int = 64) -> "DomainSpec":
        return cls(DomainKind.INTERVAL, float(length), int(n), 0)

    @classmethod
    def disk(cls, radius: float = 1.0, n_r: int = 16, n_theta: int = 64) -> "DomainSpec":
        return cls(DomainKind.DISK, float(radius), int(n_r), int(n_theta))


@dataclass(frozen=True, eq=False)
class Discretization:
    spec: DomainSpec
    interior_pos: np.ndarray
    interior_vol: np.ndarray
    boundary_pos: np.ndarray
    boundary_area: np.ndarray
    boundary_normal: np.ndarray
    boundary_tangent: np.ndarray | None
    mesh_size: float
    # interior faces
    face_a: np.ndarray
    face_b: np.ndarray
    face_area: np.ndarray
    face_dist: np.ndarray
    face_normal: np.ndarray
    # cell <-> boundary node faces
    bface_cell: np.ndarray
    bface_node: np.ndarray
    bface_area: np.ndarray
    bface_dist: np.ndarray
    # boundary node <-> boundary node edges
    bedge_a: np.ndarray
    bedge_b: np.ndarray
    bedge_len: np.ndarray
    # trace extraction: for each boundary node the two nearest cells along the normal
    trace_cells: np.ndarray
    trace_offsets: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    # ------------------------------------------------------------------ sizes
    @property
    def dim(self) -> int:
        return self.interior_pos.shape[1]

    @property
    def n_interior(self) -> int:
        return self.interior_vol.size

    @property
    def n_boundary(self) -> int:
        return self.boundary_area.size

    @property
    def n_sites(self) -> int:
        return self.n_interior + self.n_boundary

    @property
    def positions(self) -> np.ndarray:
        return np.vstack([self.interior_pos, self.boundary_pos])

    @property
    def weights(self) -> np.ndarray:
        """Reference-measure weight of every site (interior first)."""
        return np.concatenate([self.interior_vol, self.boundary_area])

    @property
    def total_mass(self) -> float:
        return float(self.interior_vol.sum() + self.boundary_area.sum())

    @property
    def is_disk(self) -> bool:
        return self.spec.kind is DomainKind.DISK

    @property
    def diameter(self) -> float:
        return self.spec.size if not self.is_disk else 2.0 * self.spec.size

    def boundary_index(self, j):
        """Site index of boundary node ``j``."""
        return self.n_interior + np.asarray(j)

    # ------------------------------------------------------------ cost matrices
    @property
    def cost_euclid(self) -> np.ndarray:
        if "cost" not in self._cache:
            x = self.positions
            sq = np.sum(x * x, axis=1)
            c = sq[:, None] + sq[None, :] - 2.0 * x @ x.T
            np.fill_diagonal(c, 0.0)
            self._cache["cost"] = np.maximum(c, 0.0)
        return self._cache["cost"]

    @property
    def dist_boundary(self) -> np.ndarray:
        """Intrinsic distance along the boundary.

        Arc length on the circle.  The interval boundary has two connected
        components (its endpoints), so distinct nodes are at infinite
        intrinsic distance.
        """
        if "dist_boundary" not in self._cache:
            if self.is_disk:
                nt = self.n_boundary
                j = np.arange(nt)
                k = np.abs(j[:, None] - j[None, :])
                k = np.minimum(k, nt - k)
                d = self.spec.size * (2.0 * np.pi / nt) * k
            else:
                d = np.full((2, 2), np.inf)
                np.fill_diagonal(d, 0.0)
            self._cache["dist_boundary"] = d
        return self._cache["dist_boundary"]

    # ----------------------------------------------------------------- stencils
    @property
    def grad(self) -> sp.csr_matrix:
        """Interior gradient, cells -> interior faces (normal component a->b)."""
        if "grad" not in self._cache:
            nf = self.face_a.size
            rows = np.concatenate([np.arange(nf), np.arange(nf)])
            cols = np.concatenate([self.face_a, self.face_b])
            vals = np.concatenate([-1.0 / self.face_dist, 1.0 / self.face_dist])
            self._cache["grad"] = sp.csr_matrix((vals, (rows, cols)), shape=(nf, self.n_interior))
        return self._cache["grad"]

    @property
    def div(self) -> sp.csr_matrix:
        """Interior divergence, (interior faces + boundary faces) -> cells.

        Flux values are normal components; for boundary faces the normal is
        the outward one.  With this sign convention
        ``sum(phi * div(u) * vol) + sum(grad(phi) * u * area * dist)``
        equals ``sum(phi[bcell] * u_bnd * bface_area)``.
        """
        if "div" not in self._cache:
            nf, nb = self.face_a.size, self.bface_cell.size
            vol = self.interior_vol
            rows = np.concatenate([self.face_a, self.face_b, self.bface_cell])
            cols = np.concatenate([np.arange(nf), np.arange(nf), nf + np.arange(nb)])
            vals = np.concatenate([
                self.face_area / vol[self.face_a],
                -self.face_area / vol[self.face_b],
                self.bface_area / vol[self.bface_cell],
            ])
            self._cache["div"] = sp.csr_matrix((vals, (rows, cols)), shape=(self.n_interior, nf + nb))
        return self._cache["div"]

    @property
    def grad_boundary(self) -> sp.csr_matrix:
        """Tangential gradient along the boundary, nodes -> boundary edges."""
        if "grad_boundary" not in self._cache:
            ne = self.bedge_a.size
            rows = np.concatenate([np.arange(ne), np.arange(ne)])
            cols = np.concatenate([self.bedge_a, self.bedge_b])
            vals = np.concatenate([-1.0 / self.bedge_len, 1.0 / self.bedge_len])
            self._cache["grad_boundary"] = sp.csr_matrix((vals, (rows, cols)), shape=(ne, self.n_boundary))
        return self._cache["grad_boundary"]

    def trace_operator(self, extrapolate: bool = True) -> sp.csr_matrix:
        """Boundary trace of an interior field, nodes x cells.

        With ``extrapolate`` the value is linearly extrapolated from the two
        nearest cells along the normal, otherwise the adjacent cell value.
        """
        key = ("trace", extrapolate)
        if key not in self._cache:
            nb = self.n_boundary
            near, far = self.trace_cells[:, 0], self.trace_cells[:, 1]
            if extrapolate:
                d1, d2 = self.trace_offsets[:, 0], self.trace_offsets[:, 1]
                w_near = d2 / (d2 - d1)
                w_far = -d1 / (d2 - d1)
                rows = np.concatenate([np.arange(nb), np.arange(nb)])
                cols = np.concatenate([near, far])
                vals = np.concatenate([w_near, w_far])
            else:
                rows, cols, vals = np.arange(nb), near, np.ones(nb)
            self._cache[key] = sp.csr_matrix((vals, (rows, cols)), shape=(nb, self.n_interior))
        return self._cache[key]

    @property
    def normal_derivative(self) -> sp.csr_matrix:
        """One-sided outward normal derivative of an interior field at each node."""
        if "dnu" not in self._cache:
            nb = self.n_boundary
            near, far = self.trace_cells[:, 0], self.trace_cells[:, 1]
            gap = self.trace_offsets[:, 1] - self.trace_offsets[:, 0]
            rows = np.concatenate([np.arange(nb), np.arange(nb)])
            cols = np.concatenate([near, far])
            vals = np.concatenate([1.0 / gap, -1.0 / gap])
            self._cache["dnu"] = sp.csr_matrix((vals, (rows, cols)), shape=(nb, self.n_interior))
        return self._cache["dnu"]

    def cell_gradient(self, f: np.ndarray) -> np.ndarray:
        """Cell-centred gradient vector of an interior field, shape (n_interior, dim)."""
        f = np.asarray(f, dtype=float)
        if not self.is_disk:
            h = self.mesh_size
            return np.gradient(f, h, edge_order=2)[:, None]
        nr, nt = self.spec.n_radial, self.spec.n_angular
        dr = self.spec.size / nr
        dth = 2.0 * np.pi / nt
        F = f.reshape(nr, nt)
        f_r = np.gradient(F, dr, axis=0, edge_order=2)
        f_t = (np.roll(F, -1, axis=1) - np.roll(F, 1, axis=1)) / (2.0 * dth)
        r = ((np.arange(nr) + 0.5) * dr)[:, None]
        th = ((np.arange(nt) + 0.5) * dth)[None, :]
        gx = f_r * np.cos(th) - f_t / r * np.sin(th)
        gy = f_r * np.sin(th) + f_t / r * np.cos(th)
        return np.stack([gx.ravel(), gy.ravel()], axis=1)

    def nearest_site(self, points: np.ndarray) -> np.ndarray:
        """Index of the nearest site for each point (ties broken by lower index)."""
        x = self.positions
        p = np.atleast_2d(points)
        d = np.sum(p * p, axis=1)[:, None] + np.sum(x * x, axis=1)[None, :] - 2.0 * p @ x.T
        return np.argmin(d, axis=1)


def build_discretization(spec: DomainSpec) -> Discretization:
    if spec.kind is DomainKind.INTERVAL:
        return _build_interval(spec)
    return _build_disk(spec)


def _build_interval(spec: DomainSpec) -> Discretization:
    L, n = spec.size, spec.n_radial
    h = L / n
    x = (np.arange(n) + 0.5) * h
    ia = np.arange(n - 1)
    return Discretization(
        spec=spec,
        interior_pos=x[:, None],
        interior_vol=np.full(n, h),
        boundary_pos=np.array([[0.0], [L]]),
        boundary_area=np.ones(2),
        boundary_normal=np.array([[-1.0], [1.0]]),
        boundary_tangent=None,
        mesh_size=h,
        face_a=ia,
        face_b=ia + 1,
        face_area=np.ones(n - 1),
        face_dist=np.full(n - 1, h),
        face_normal=np.ones((n - 1, 1)),
        bface_cell=np.array([0, n - 1]),
        bface_node=np.array([0, 1]),
        bface_area=np.ones(2),
        bface_dist=np.full(2, 0.5 * h),
        bedge_a=np.zeros(0, dtype=int),
        bedge_b=np.zeros(0, dtype=int),
        bedge_len=np.zeros(0),
        trace_cells=np.array([[0, 1], [n - 1, n - 2]]),
        trace_offsets=np.array([[0.5 * h, 1.5 * h], [0.5 * h, 1.5 * h]]),
    )


def _build_disk(spec: DomainSpec) -> Discretization:
    R, nr, nt = spec.size, spec.n_radial, spec.n_angular
    dr = R / nr
    dth = 2.0 * np.pi / nt
    r_edges = np.arange(nr + 1) * dr
    r_c = (np.arange(nr) + 0.5) * dr
    th = (np.arange(nt) + 0.5) * dth
    idx = np.arange(nr * nt).reshape(nr, nt)

    rr, tt = np.meshgrid(r_c, th, indexing="ij")
    pos = np.stack([rr * np.cos(tt), rr * np.sin(tt)], axis=-1).reshape(-1, 2)
    vol = (0.5 * dth * (r_edges[1:] ** 2 - r_edges[:-1] ** 2))[:, None] * np.ones((1, nt))

    # radial faces between ring i and i+1 at radius r_edges[i+1]
    ra = idx[:-1, :].ravel()
    rb = idx[1:, :].ravel()
    r_area = (r_edges[1:-1, None] * dth * np.ones((1, nt))).ravel()
    r_dist = np.full(ra.size, dr)
    r_th = np.broadcast_to(th, (nr - 1, nt)).ravel()
    r_norm = np.stack([np.cos(r_th), np.sin(r_th)], axis=1)
    # angular faces between sector j and j+1 (periodic)
    aa = idx.ravel()
    ab = np.roll(idx, -1, axis=1).ravel()
    a_area = np.full(aa.size, dr)
    a_dist = (r_c[:, None] * dth * np.ones((1, nt))).ravel()
    th_face = th + 0.5 * dth
    a_th = np.broadcast_to(th_face, (nr, nt)).ravel()
    a_norm = np.stack([-np.sin(a_th), np.cos(a_th)], axis=1)

    bpos = np.stack([R * np.cos(th), R * np.sin(th)], axis=1)
    bnorm = bpos / R
    btan = np.stack([-np.sin(th), np.cos(th)], axis=1)
    nodes = np.arange(nt)

    return Discretization(
        spec=spec,
        interior_pos=pos,
        interior_vol=vol.ravel(),
        boundary_pos=bpos,
        boundary_area=np.full(nt, R * dth),
        boundary_normal=bnorm,
        boundary_tangent=btan,
        mesh_size=max(dr, R * dth),
        face_a=np.concatenate([ra, aa]),
        face_b=np.concatenate([rb, ab]),
        face_area=np.concatenate([r_area, a_area]),
        face_dist=np.concatenate([r_dist, a_dist]),
        face_normal=np.vstack([r_norm, a_norm]),
        bface_cell=idx[-1, :].copy(),
        bface_node=nodes,
        bface_area=np.full(nt, R * dth),
        bface_dist=np.full(nt, 0.5 * dr),
        bedge_a=nodes,
        bedge_b=np.roll(nodes, -1),
        bedge_len=np.full(nt, R * dth),
        trace_cells=np.stack([idx[-1, :], idx[-2, :]], axis=1),
        trace_offsets=np.tile([0.5 * dr, 1.5 * dr], (nt, 1)),
    )


def chord_vs_intrinsic_gap(disc: Discretization) -> np.ndarray:
    """Intrinsic boundary distance minus chord length for every pair of nodes.

    Entries are ``inf`` between different connected components (interval).
    """
    b = disc.boundary_pos
    chord = np.sqrt(np.sum((b[:, None, :] - b[None, :, :]) ** 2, axis=-1))
    gap = disc.dist_boundary - chord
    np.fill_diagonal(gap, 0.0)
    return gap
