"""Spatial bookkeeping: pixel grid, slope-unit adjacency graph, ICAR precision and projections."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .exceptions import DomainError


@dataclass(frozen=True)
class PixelGrid:
    """Pixels with centroids, relative exposure ``e_i`` and slope-unit membership."""

    su_index: np.ndarray
    centroids: np.ndarray | None = None
    exposure: np.ndarray | None = None
    ids: np.ndarray | None = None

    def __post_init__(self):
        su = np.asarray(self.su_index, dtype=np.int64)
        object.__setattr__(self, "su_index", su)
        n = su.size
        if np.any(su < 0):
            raise DomainError("negative slope-unit index")
        e = np.ones(n) if self.exposure is None else np.asarray(self.exposure, dtype=float)
        if e.shape != (n,) or np.any(~np.isfinite(e)) or np.any(e <= 0):
            raise DomainError("exposure must be a positive vector with one entry per pixel")
        object.__setattr__(self, "exposure", e)
        if self.centroids is not None:
            c = np.asarray(self.centroids, dtype=float)
            if c.shape != (n, 2):
                raise DomainError("centroids must have shape (n1, 2)")
            object.__setattr__(self, "centroids", c)
        ids = np.arange(n) if self.ids is None else np.asarray(self.ids)
        object.__setattr__(self, "ids", ids)
        for arr in (su, e, ids):
            arr.setflags(write=False)

    @property
    def n1(self) -> int:
        return self.su_index.size


def exposure_from_area(area) -> np.ndarray:
    """Relative exposure: pixel area divided by the mean pixel area."""
    a = np.asarray(area, dtype=float)
    return a / a.mean()


@dataclass(frozen=True)
class SlopeUnitGraph:
    n: int
    edges: np.ndarray  # (E, 2), i < j, unique
    degree: np.ndarray = field(repr=False)
    Q: sparse.csr_matrix = field(repr=False)
    labels: np.ndarray = field(repr=False)
    n_components: int = 0

    @property
    def mean_degree(self) -> float:
        return float(self.degree.sum()) / self.n

    @property
    def rank(self) -> int:
        return self.n - self.n_components

    @property
    def isolated(self) -> np.ndarray:
        return np.flatnonzero(self.degree == 0)

    def component_indicator(self) -> np.ndarray:
        """Dense ``N x n_components`` 0/1 matrix."""
        C = np.zeros((self.n, self.n_components))
        C[np.arange(self.n), self.labels] = 1.0
        return C

    def adjacency_pairs(self) -> np.ndarray:
        return self.edges.copy()


def build_graph(pairs, n_units: int | None = None) -> SlopeUnitGraph:
    """Build the slope-unit graph and ``Q = D - A`` from undirected edge pairs.

    Duplicate and reversed pairs are merged.  ``n_units`` defaults to one
    more than the largest id seen.
    """
    p = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if np.any(p < 0):
        raise DomainError("negative slope-unit id in adjacency")
    if np.any(p[:, 0] == p[:, 1]):
        bad = p[p[:, 0] == p[:, 1]][0, 0]
        raise DomainError(f"self-loop at slope unit {bad}")
    n = int(p.max()) + 1 if n_units is None else int(n_units)
    if p.size and p.max() >= n:
        raise DomainError(f"adjacency references unit {p.max()} but n_units={n}")
    e = np.unique(np.sort(p, axis=1), axis=0)
    ones = np.ones(len(e))
    A = sparse.coo_matrix((ones, (e[:, 0], e[:, 1])), shape=(n, n)).tocsr()
    A = A + A.T
    degree = np.asarray(A.sum(axis=1)).ravel()
    Q = (sparse.diags(degree) - A).tocsr()
    ncomp, labels = connected_components(A, directed=False)
    if np.any(degree == 0):
        warnings.warn(
            f"{int(np.sum(degree == 0))} isolated slope unit(s); their spatial effect is pinned by centering",
            stacklevel=2,
        )
    for arr in (e, degree, labels):
        arr.setflags(write=False)
    return SlopeUnitGraph(n=n, edges=e, degree=degree, Q=Q, labels=labels, n_components=int(ncomp))


def icar_quad_form(graph: SlopeUnitGraph, w) -> float:
    """Sum over undirected edges of squared differences, i.e. ``w' Q w``."""
    w = np.asarray(w, dtype=float)
    if w.shape != (graph.n,):
        raise DomainError(f"expected vector of length {graph.n}, got shape {w.shape}")
    d = w[graph.edges[:, 0]] - w[graph.edges[:, 1]]
    return float(d @ d)


def hard_center(w, labels=None) -> np.ndarray:
    """Subtract the mean, separately within each connected component when ``labels`` is given."""
    w = np.asarray(w, dtype=float)
    if labels is None:
        return w - w.mean()
    labels = np.asarray(labels)
    counts = np.bincount(labels)
    means = np.bincount(labels, weights=w) / counts
    return w - means[labels]


@dataclass(frozen=True)
class Projection:
    """Index form of the one-hot projections: unit of every pixel and of every landslide."""

    counts_index: np.ndarray
    sizes_index: np.ndarray
    n_units: int

    def __post_init__(self):
        for name in ("counts_index", "sizes_index"):
            a = np.asarray(getattr(self, name), dtype=np.int64)
            if a.size and (a.min() < 0 or a.max() >= self.n_units):
                raise DomainError(f"{name} out of range [0, {self.n_units})")
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    def index(self, side: str) -> np.ndarray:
        if side == "counts":
            return self.counts_index
        if side == "sizes":
            return self.sizes_index
        raise ValueError(f"side must be 'counts' or 'sizes', got {side!r}")

    def matrix(self, side: str) -> sparse.csr_matrix:
        idx = self.index(side)
        return sparse.csr_matrix((np.ones(idx.size), (np.arange(idx.size), idx)), shape=(idx.size, self.n_units))

    def unit_counts(self, side: str) -> np.ndarray:
        """Diagonal of ``A' A`` (number of rows mapped to each unit)."""
        return np.bincount(self.index(side), minlength=self.n_units).astype(float)

    def adjoint(self, side: str, r) -> np.ndarray:
        """``A' r``: sum of ``r`` within each unit."""
        return np.bincount(self.index(side), weights=np.asarray(r, dtype=float), minlength=self.n_units)


def project(projection: Projection, w, side: str) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (projection.n_units,):
        raise DomainError(f"expected vector of length {projection.n_units}")
    return w[projection.index(side)]


def aggregate_to_areal(dataset, grid: PixelGrid, n_units: int | None = None, size_covariates_pixel=None):
    """Collapse a pixel-level dataset to one record per slope unit.

    Counts and sizes are summed within units, count covariates averaged over
    pixels and exposures summed.  Units without landslides get no size record
    (their size is missing).  Size covariates are averaged over the unit's
    pixels when ``size_covariates_pixel`` (n1 x P2) is given, otherwise over
    the unit's landslides.

    Returns ``(areal_dataset, areal_grid)``; the areal grid has one "pixel"
    per unit, so the projection becomes the identity.
    """
    from .model import Dataset

    su = grid.su_index
    n = int(su.max()) + 1 if n_units is None else int(n_units)
    npix = np.bincount(su, minlength=n).astype(float)
    if np.any(npix == 0):
        raise DomainError("every slope unit must contain at least one pixel")
    counts = np.bincount(su, weights=dataset.counts, minlength=n).astype(np.int64)
    exposure = np.bincount(su, weights=grid.exposure, minlength=n)
    Z1 = np.stack([np.bincount(su, weights=col, minlength=n) / npix for col in dataset.Z1.T], axis=1) if dataset.Z1.shape[1] else np.zeros((n, 0))
    ls_unit = su[dataset.landslide_pixel]
    size_sum = np.bincount(ls_unit, weights=dataset.sizes, minlength=n)
    has = np.flatnonzero(counts > 0)
    P2 = dataset.Z2.shape[1]
    if P2 == 0:
        Z2 = np.zeros((has.size, 0))
    elif size_covariates_pixel is not None:
        zp = np.asarray(size_covariates_pixel, dtype=float)
        Z2 = np.stack([np.bincount(su, weights=col, minlength=n) / npix for col in zp.T], axis=1)[has]
    else:
        nls = np.bincount(ls_unit, minlength=n).astype(float)
        Z2 = np.stack([np.bincount(ls_unit, weights=col, minlength=n) for col in dataset.Z2.T], axis=1)[has] / nls[has, None]
    centroids = None
    if grid.centroids is not None:
        centroids = np.stack([np.bincount(su, weights=grid.centroids[:, k], minlength=n) / npix for k in range(2)], axis=1)
    areal = Dataset(
        counts=counts,
        landslide_pixel=has,
        sizes=size_sum[has],
        Z1=Z1,
        Z2=Z2,
        exposure=exposure,
        z1_names=dataset.z1_names,
        z2_names=dataset.z2_names,
        multiplicity_check=False,
    )
    areal_grid = PixelGrid(su_index=np.arange(n), centroids=centroids, exposure=exposure)
    return areal, areal_grid
