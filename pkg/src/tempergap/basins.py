"""Basin classification, boundary extraction, and tube geometry.

The two wells of a validated potential split the torus into two basins
of attraction of the gradient flow.  This module classifies points by
integrating the flow, extracts the basin boundary (a finite point set in
d=1, closed polylines in d=2), and provides the projection, signed
distance, and orthonormal frames on the tubular neighborhood of the
boundary that the perturbation construction consumes.

Classification is exact-by-flow but cached: a label grid is built once
from full gradient-flow runs at every cell center, and a certainty mask
marks cells whose 5^d neighborhood is unanimous.  Later classifications
integrate the flow only until the trajectory enters a certain cell,
which is a handful of steps for points near the separatrix and zero for
everything else.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    ConvergenceError,
    ExtractionError,
    GeometryError,
    OutOfTubeError,
    UndefinedBasinError,
)
from .potentials import Potential, find_critical_points
from .torus import torus_displacement, torus_distance, wrap

__all__ = [
    "BasinGeometry",
    "BasinCache",
    "BoundaryFrame",
    "classify_basin",
    "classify_many",
    "extract_boundary",
    "project_boundary",
    "project_boundary_many",
    "signed_distance",
    "frame",
    "mass_of_basin",
    "boundary_to_csv",
]

_GRAD_TOL = 1e-8
_MIN_SNAP = 1e-4
_MAX_FLOW_STEPS = 10**6


def _torus_dist_rows(x, p):
    """Torus distances from each row of x to the point p."""
    d = np.atleast_2d(x) - np.asarray(p, dtype=np.float64)[None, :]
    d -= np.round(d)
    return np.linalg.norm(d, axis=1)


# ---------------------------------------------------------------------
# Gradient-flow classification
# ---------------------------------------------------------------------

def _flow_labels(pot, x0, cache=None, max_steps=_MAX_FLOW_STEPS):
    """Integrate dy/dt = -grad U from a batch of points until each is
    classified.

    RK4 with a per-point step that halves whenever the energy fails to
    decrease (energy monotonicity is the flow's defining property) and
    grows again after clean steps.  A point retires when its gradient
    norm drops below 1e-8 (it reached a critical point) or, when a label
    cache is supplied, as soon as it enters a cell whose neighborhood is
    unanimously labeled.

    Returns:
        (labels, stalled): labels in {1, 2} (0 where the flow stalled at
        a non-minimum critical point), and the stalled mask.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    n, d = x0.shape
    minima = pot.minima
    if minima is None or len(minima) < 2:
        raise ValueError("potential has no recorded minima; locate them first")

    y = x0.copy()
    dt = np.full(n, 0.005)
    labels = np.zeros(n, dtype=np.int8)
    active = np.ones(n, dtype=bool)
    u = pot.u_many(y)

    if cache is not None:
        hit = cache.certain_label_many(y)
        sure = hit > 0
        labels[sure] = hit[sure]
        active &= ~sure

    for _ in range(max_steps):
        if not active.any():
            break
        ai = np.flatnonzero(active)
        ya, dta = y[ai], dt[ai]
        g1 = pot.grad_many(ya)
        gn = np.linalg.norm(g1, axis=1)

        # Retire points that reached a critical point (label 0 unless it
        # is a minimum) or that are provably inside a well: within 1e-6
        # of a nondegenerate minimum the flow can no longer leave, while
        # the energy check still resolves steps at that scale.
        dmin = [_torus_dist_rows(ya, m) for m in minima[:2]]
        snapped = (dmin[0] <= 1e-6) | (dmin[1] <= 1e-6)
        done = (gn <= _GRAD_TOL) | snapped
        if done.any():
            for k in np.flatnonzero(done):
                i = ai[k]
                lab = 0
                for m_i in (0, 1):
                    if dmin[m_i][k] < _MIN_SNAP:
                        lab = m_i + 1
                        break
                labels[i] = lab
                active[i] = False
            keep = ~done
            if not keep.any():
                continue
            ai, ya, dta, g1 = ai[keep], ya[keep], dta[keep], g1[keep]

        h = dta[:, None]
        k1 = -g1
        k2 = -pot.grad_many(ya + 0.5 * h * k1)
        k3 = -pot.grad_many(ya + 0.5 * h * k2)
        k4 = -pot.grad_many(ya + h * k3)
        ynew = ya + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        unew = pot.u_many(ynew)

        good = unew <= u[ai] + 1e-14
        gi = ai[good]
        y[gi] = ynew[good]
        u[gi] = unew[good]
        dt[gi] = np.minimum(dt[gi] * 1.25, 0.05)
        bi = ai[~good]
        dt[bi] = np.maximum(dt[bi] * 0.5, 1e-14)

        if cache is not None and gi.size:
            hit = cache.certain_label_many(y[gi])
            sure = hit > 0
            if sure.any():
                si = gi[sure]
                labels[si] = hit[sure]
                active[si] = False
    else:
        raise ConvergenceError(
            "gradient flow exceeded %d steps for %d point(s)"
            % (max_steps, int(active.sum()))
        )
    return labels, labels == 0


def classify_many(pot: Potential, x, geom=None):
    """Basin labels in {1,2} for an (n, d) batch of points.

    Passing the potential's :class:`BasinGeometry` (or a
    :class:`BasinCache`) accelerates the flow without changing its
    result.  Raises :class:`UndefinedBasinError` for points whose flow
    stalls at a non-minimum critical point.
    """
    cache = _cache_of(geom)
    labels, stalled = _flow_labels(pot, x, cache)
    if stalled.any():
        bad = np.atleast_2d(np.asarray(x, float))[stalled][0]
        raise UndefinedBasinError(
            "gradient flow stalled at a non-minimum critical point from %s"
            % np.array2string(np.asarray(bad), precision=8)
        )
    return labels.astype(int)


def classify_basin(pot: Potential, x, geom=None) -> int:
    """Basin label of a single point: 1 for the deeper well's basin."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    return int(classify_many(pot, x[None, :], geom)[0])


def _cache_of(geom):
    if geom is None:
        return None
    if isinstance(geom, BasinCache):
        return geom
    return geom.cache()


class BasinCache:
    """Grid of basin labels with a conservative certainty mask.

    ``labels`` holds the flow classification of every cell center.
    ``certain`` marks cells whose 5^d neighborhood is unanimous; a label
    can be trusted for *any* point of a certain cell, because a boundary
    curve reaching that cell would have had to cross two full rings of
    unanimously-labeled centers.  Lookups in uncertain cells re-run the
    (cache-accelerated) flow for the exact query point.
    """

    def __init__(self, pot: Potential, n: int = 512):
        self.pot = pot
        self.n = int(n)
        d = pot.dim
        centers = _cell_centers(d, self.n)
        labels, stalled = _flow_labels(pot, centers)

        shape = (self.n,) * d
        grid = labels.reshape(shape)
        unanimous = np.ones(shape, dtype=bool)
        for off in np.ndindex(*(5,) * d):
            shift = tuple(o - 2 for o in off)
            if all(s == 0 for s in shift):
                continue
            unanimous &= grid == np.roll(grid, shift, axis=tuple(range(d)))
        self.certain = unanimous & (grid > 0)

        if stalled.any():
            # A stalled center sits on the separatrix; give it the label
            # of its nearest classified neighbor (it is never a certain
            # cell, so lookups there re-resolve exactly).
            good = ~stalled
            tree = cKDTree(centers[good])
            _, nn = tree.query(centers[stalled])
            labels[stalled] = labels[np.flatnonzero(good)[nn]]
            grid = labels.reshape(shape)
        self.labels = grid

    def _cells(self, x):
        idx = np.minimum(
            (np.atleast_2d(x) % 1.0 * self.n).astype(int), self.n - 1
        )
        return np.ravel_multi_index(idx.T, self.labels.shape)

    def certain_label_many(self, x):
        """Labels where the containing cell is certain, else 0."""
        flat = self._cells(x)
        out = self.labels.ravel()[flat].astype(np.int8)
        out[~self.certain.ravel()[flat]] = 0
        return out

    def lookup(self, x) -> int:
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        lab = self.certain_label_many(x[None, :])[0]
        if lab:
            return int(lab)
        return classify_basin(self.pot, x, self)

    def lookup_many(self, x):
        """Vectorized lookup; uncertain cells fall back to the flow."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        out = self.certain_label_many(x).astype(int)
        miss = out == 0
        if miss.any():
            out[miss] = classify_many(self.pot, x[miss], self)
        return out


def _cell_centers(dim, n):
    ax = (np.arange(n) + 0.5) / n
    mesh = np.meshgrid(*([ax] * dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


# ---------------------------------------------------------------------
# Geometry container
# ---------------------------------------------------------------------

@dataclass(frozen=True)
class BoundaryFrame:
    """Orthonormal frame at a boundary point: outward normal + tangents."""

    base: np.ndarray
    normal: np.ndarray
    tangents: tuple


@dataclass
class BasinGeometry:
    """Extracted basin boundary plus the data derived from it.

    ``components`` holds one (n_vertices, d) array per boundary
    component: a single point each in d=1, a closed polyline (implicit
    last-to-first edge) in d=2.  ``r0`` is the tubular radius within
    which boundary projection is unique.
    """

    pot: Potential
    dim: int
    minima: list
    components: list
    r0: float
    resolution: float
    critical_points: list = field(default_factory=list)
    boundary_saddles: list = field(default_factory=list)
    _cache: object = field(default=None, repr=False)
    _tree: object = field(default=None, repr=False)
    _tree_map: object = field(default=None, repr=False)
    _arcs: object = field(default=None, repr=False)

    @property
    def saddles(self):
        return [c for c in self.critical_points if c.morse_index == 1]

    def cache(self, n: int = 512) -> BasinCache:
        if self._cache is None or self._cache.n != n:
            self._cache = BasinCache(self.pot, n)
        return self._cache

    def arc_table(self):
        """d=1 only: sorted boundary positions and per-arc basin labels."""
        if self.dim != 1:
            raise ValueError("arc_table is defined for d=1 geometries only")
        if self._arcs is None:
            pts = np.sort(np.array([float(c[0, 0]) for c in self.components]))
            labels = []
            for i in range(len(pts)):
                lo = pts[i]
                hi = pts[(i + 1) % len(pts)] + (1.0 if i == len(pts) - 1 else 0.0)
                mid = wrap([(lo + hi) / 2.0])
                labels.append(classify_basin(self.pot, mid, self.cache()))
            self._arcs = (pts, np.array(labels, dtype=np.int8))
        return self._arcs

    def _kd(self):
        """KD-tree over 3^d-tiled boundary vertices (torus wraparound)."""
        if self._tree is None:
            verts, owner = [], []
            for ci, comp in enumerate(self.components):
                for vi in range(comp.shape[0]):
                    verts.append(comp[vi])
                    owner.append((ci, vi))
            verts = np.asarray(verts)
            tiles, tile_owner = [], []
            for off in np.ndindex(*(3,) * self.dim):
                tiles.append(verts + (np.asarray(off, float) - 1.0))
                tile_owner.extend(owner)
            self._tree = cKDTree(np.concatenate(tiles, axis=0))
            self._tree_map = tile_owner
        return self._tree, self._tree_map


# ---------------------------------------------------------------------
# Boundary extraction
# ---------------------------------------------------------------------

def extract_boundary(pot: Potential, resolution: float = 1e-3) -> BasinGeometry:
    """Extract the basin boundary of a validated two-well potential.

    d=1: the boundary is the set of index-1 critical points.  d=2: each
    saddle seeds a predictor-corrector trace; the predictor steps along
    the current tangent (the saddle's stable eigenvector initially) and
    the corrector bisects between points classified into the two basins
    until the polyline closes on the torus.

    Returns a :class:`BasinGeometry`; ``r0`` is half the minimal
    distance between distinct components, capped at 0.25.
    """
    if pot.dim not in (1, 2):
        raise ValueError("boundary extraction supports d in {1, 2}")
    if not (0 < resolution <= 0.01):
        raise ValueError("resolution must lie in (0, 0.01]")
    cps = find_critical_points(pot, 64)
    minima = [c for c in cps if c.morse_index == 0]
    if len(minima) != 2:
        raise ValueError("expected two minima, found %d" % len(minima))
    minima.sort(key=lambda c: c.value)
    mins = [np.asarray(minima[0].location, float),
            np.asarray(minima[1].location, float)]
    pot.minima = mins

    if pot.dim == 1:
        walls = [c for c in cps if c.morse_index == 1]
        if len(walls) < 2:
            raise ExtractionError("a two-well circle potential needs two walls")
        comps = [np.array([w.location]) for w in walls]
        r0 = _component_gap(comps, 1)
        return BasinGeometry(pot, 1, mins, comps, r0, resolution, cps, walls)

    cache = BasinCache(pot)
    comps, seps = [], []
    for sad in (c for c in cps if c.morse_index == 1):
        if not _separates_basins(pot, cache, sad):
            continue  # ridge saddle: both sides descend into the same well
        seps.append(sad)
        if any(_poly_min_dist(comp, sad.location) < resolution for comp in comps):
            continue  # this saddle lies on an already-traced component
        comps.append(_trace_component(pot, cache, sad, resolution))
    if not comps:
        raise ExtractionError("no saddle separates the two basins")
    r0 = _component_gap(comps, 2)
    geom = BasinGeometry(pot, 2, mins, comps, r0, resolution, cps, seps)
    geom._cache = cache
    return geom


def _separates_basins(pot, cache, saddle):
    """True when the saddle's unstable manifold connects the two wells,
    i.e. the saddle lies on the basin boundary."""
    eigval, eigvec = np.linalg.eigh(pot.hess(saddle.location))
    u_dir = eigvec[:, 0]  # unstable direction: most negative eigenvalue
    probes = np.array(
        [saddle.location + 1e-4 * u_dir, saddle.location - 1e-4 * u_dir]
    )
    la, lb = classify_many(pot, wrap(probes), cache)
    return la != lb


def _poly_min_dist(comp, x):
    return min(torus_distance(v, x) for v in comp)


def _component_gap(comps, dim):
    if len(comps) < 2:
        return 0.25
    best = np.inf
    for i in range(len(comps)):
        for j in range(i + 1, len(comps)):
            tiles = [
                comps[j] + (np.asarray(off, float) - 1.0)
                for off in np.ndindex(*(3,) * dim)
            ]
            tree = cKDTree(np.concatenate(tiles, axis=0))
            best = min(best, float(tree.query(comps[i])[0].min()))
    return float(min(best / 2.0, 0.25))


def _bisect_boundary(pot, cache, p1, p2, tol=1e-8):
    """Refine a straddling segment (p1 in basin 1, p2 in basin 2) to a
    boundary point within ``tol``, classifying interior ladders in batch."""
    a = np.asarray(p1, dtype=np.float64)
    b = np.asarray(p2, dtype=np.float64)
    for _ in range(12):
        width = float(np.linalg.norm(b - a))
        if width <= tol:
            break
        k = 33
        ts = np.linspace(0.0, 1.0, k)[1:-1]
        pts = a[None, :] + ts[:, None] * (b - a)[None, :]
        labs = classify_many(pot, wrap(pts.ravel()).reshape(pts.shape), cache)
        flip = np.flatnonzero(labs == 2)
        if flip.size == 0:
            a = pts[-1]
        elif flip[0] == 0:
            b = pts[0]
        else:
            a, b = pts[flip[0] - 1], pts[flip[0]]
    return 0.5 * (a + b)


def _trace_component(pot, cache, saddle, resolution):
    """Predictor-corrector trace of one closed boundary component."""
    _, eigvec = np.linalg.eigh(pot.hess(saddle.location))
    tangent = eigvec[:, -1]  # stable direction: largest (positive) eigenvalue
    start = np.asarray(saddle.location, dtype=np.float64)
    verts = [wrap(start)]
    current = start
    tau = tangent / np.linalg.norm(tangent)
    start_tau = tau.copy()
    max_vertices = 10**5

    for step in range(max_vertices):
        q = current + resolution * tau
        nrm = np.array([tau[1], -tau[0]])
        # Grow the bracket until the two offsets straddle the boundary.
        alpha, straddle = 0.5 * resolution, None
        for _ in range(6):
            cand = np.array([q - alpha * nrm, q + alpha * nrm])
            la, lb = classify_many(pot, wrap(cand.ravel()).reshape(2, 2), cache)
            if la != lb:
                lo, hi = q - alpha * nrm, q + alpha * nrm
                straddle = (lo, hi) if la == 1 else (hi, lo)
                break
            alpha *= 2.0
        if straddle is None:
            raise ExtractionError(
                "boundary trace lost the separatrix near %s"
                % np.array2string(wrap(q), precision=6)
            )
        v = _bisect_boundary(pot, cache, straddle[0], straddle[1])
        step_vec = v - current
        tau = step_vec / np.linalg.norm(step_vec)
        current = v
        if (
            step > 2
            and torus_distance(wrap(v), wrap(start)) < resolution
            and float(tau @ start_tau) > 0.0
        ):
            return np.array(verts)
        verts.append(wrap(v))
    raise ExtractionError(
        "boundary component failed to close within %d vertices" % max_vertices
    )


# ---------------------------------------------------------------------
# Projection, signed distance, frames
# ---------------------------------------------------------------------

def project_boundary(geom: BasinGeometry, x):
    """Nearest boundary point and distance, valid inside the tube.

    Returns:
        (xi, dist): the projection of x onto the boundary and the torus
        distance to it.

    Raises:
        OutOfTubeError: x is farther than r0 from the boundary.
    """
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if geom.dim == 1:
        best, bd = None, np.inf
        for comp in geom.components:
            d = torus_distance(x, comp[0])
            if d < bd:
                best, bd = comp[0], d
        if bd >= geom.r0:
            raise OutOfTubeError(
                "point %s is outside the boundary tube (dist %.4g >= r0 %.4g)"
                % (x, bd, geom.r0)
            )
        return np.array(best, dtype=np.float64), float(bd)

    tree, owner = geom._kd()
    _, ti = tree.query(x)
    ci, vi = owner[int(ti)]
    comp = geom.components[ci]
    nv = comp.shape[0]
    best_p, best_d = None, np.inf
    for a_idx, b_idx in (((vi - 1) % nv, vi), (vi, (vi + 1) % nv)):
        a = x + torus_displacement(x, comp[a_idx])
        b = x + torus_displacement(x, comp[b_idx])
        ab = b - a
        denom = float(ab @ ab)
        t = 0.0 if denom == 0.0 else float(np.clip((x - a) @ ab / denom, 0.0, 1.0))
        p = a + t * ab
        d = float(np.linalg.norm(x - p))
        if d < best_d:
            best_p, best_d = p, d
    if best_d >= geom.r0:
        raise OutOfTubeError(
            "point %s is outside the boundary tube (dist %.4g >= r0 %.4g)"
            % (x, best_d, geom.r0)
        )
    return wrap(best_p), best_d


def project_boundary_many(geom: BasinGeometry, x):
    """Vectorized :func:`project_boundary` over rows of ``x``.

    Returns:
        (xi, dist): arrays of shape (n, d) and (n,) with the boundary
        projections and torus distances.

    Raises:
        OutOfTubeError: any row is farther than r0 from the boundary.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n = x.shape[0]
    if geom.dim == 1:
        comps = np.array([c[0][0] for c in geom.components])
        disp = comps[None, :] - x
        disp -= np.round(disp)
        dist = np.abs(disp)
        k = np.argmin(dist, axis=1)
        bd = dist[np.arange(n), k]
        if np.any(bd >= geom.r0):
            raise OutOfTubeError(
                "a point is outside the boundary tube (max dist %.4g >= "
                "r0 %.4g)" % (float(bd.max()), geom.r0)
            )
        return comps[k][:, None], bd

    tree, owner = geom._kd()
    _, ti = tree.query(x)
    own = np.array(owner, dtype=np.int64)
    ci = own[ti, 0]
    vi = own[ti, 1]
    # Gather the two candidate segments (vi-1, vi) and (vi, vi+1) of each
    # point's owning component into flat coordinate arrays.
    sizes = np.array([c.shape[0] for c in geom.components])
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    allv = np.concatenate([np.atleast_2d(c) for c in geom.components], axis=0)
    base = offsets[ci]
    nv = sizes[ci]
    best_p = np.empty_like(x)
    best_d = np.full(n, np.inf)
    for a_off, b_off in ((-1, 0), (0, 1)):
        ai = base + (vi + a_off) % nv
        bi = base + (vi + b_off) % nv
        da = allv[ai] - x
        da -= np.round(da)
        db = allv[bi] - x
        db -= np.round(db)
        a = x + da
        b = x + db
        ab = b - a
        denom = np.einsum("ij,ij->i", ab, ab)
        num = np.einsum("ij,ij->i", x - a, ab)
        with np.errstate(invalid="ignore", divide="ignore"):
            t = np.where(denom == 0.0, 0.0, np.clip(num / denom, 0.0, 1.0))
        p = a + t[:, None] * ab
        d = np.sqrt(np.einsum("ij,ij->i", x - p, x - p))
        better = d < best_d
        best_p[better] = p[better]
        best_d[better] = d[better]
    if np.any(best_d >= geom.r0):
        raise OutOfTubeError(
            "a point is outside the boundary tube (max dist %.4g >= r0 "
            "%.4g)" % (float(best_d.max()), geom.r0)
        )
    return wrap(best_p.ravel()).reshape(n, geom.dim), best_d


def signed_distance(geom: BasinGeometry, x) -> float:
    """Distance to the boundary, negative inside basin 1."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    _, d = project_boundary(geom, x)
    if d == 0.0:
        return 0.0
    label = geom.cache().lookup(x)
    return -d if label == 1 else d


def frame(geom: BasinGeometry, b) -> BoundaryFrame:
    """Orthonormal frame at a boundary point (normal outward from basin 1)."""
    b = np.atleast_1d(np.asarray(b, dtype=np.float64))
    xi, d = project_boundary(geom, b)
    if d > 1e-6:
        raise ValueError(
            "frame: point %s is %.3g from the boundary (needs <= 1e-6)" % (b, d)
        )
    pot, cache = geom.pot, geom.cache()
    if geom.dim == 1:
        for sgn in (1.0, -1.0):
            if classify_basin(pot, wrap(xi + 1e-4 * sgn), cache) == 2:
                if classify_basin(pot, wrap(xi - 1e-4 * sgn), cache) != 1:
                    raise GeometryError("inconsistent orientation at %s" % xi)
                return BoundaryFrame(xi, np.array([sgn]), ())
        raise GeometryError("could not orient the normal at %s" % xi)

    tree, owner = geom._kd()
    _, ti = tree.query(xi)
    ci, vi = owner[int(ti)]
    comp = geom.components[ci]
    nv = comp.shape[0]
    tau = torus_displacement(comp[(vi - 1) % nv], comp[(vi + 1) % nv])
    tau = tau / np.linalg.norm(tau)
    nrm = np.array([tau[1], -tau[0]])
    if classify_basin(pot, wrap(xi + 1e-4 * nrm), cache) == 1:
        nrm = -nrm
    if classify_basin(pot, wrap(xi - 1e-4 * nrm), cache) != 1:
        raise GeometryError("inconsistent orientation at %s" % xi)
    return BoundaryFrame(xi, nrm, (tau,))


# ---------------------------------------------------------------------
# Basin masses
# ---------------------------------------------------------------------

def mass_of_basin(pot: Potential, geom: BasinGeometry, eps: float, label: int,
                  resolution: int | None = None) -> float:
    """Gibbs mass of one basin at temperature eps.

    d=1 integrates exp(-U/eps) arc by arc between boundary points
    (trapezoid, 2^16 nodes per arc); d=2 uses the cell-center quadrature
    of the classification cache.  All exponentials share one log-space
    shift, so arbitrarily small eps is safe.  The two labels' masses sum
    to 1 by construction.
    """
    if eps <= 0:
        raise ValueError("mass_of_basin: eps must be positive")
    if label not in (1, 2):
        raise ValueError("mass_of_basin: label must be 1 or 2")

    if pot.dim == 1:
        pts, arc_labels = geom.arc_table()
        nb = len(pts)
        arcs = []
        for i in range(nb):
            lo = pts[i]
            hi = pts[(i + 1) % nb] + (1.0 if i == nb - 1 else 0.0)
            t = np.linspace(lo, hi, 1 << 16)
            arcs.append((t, -pot.u_many((t % 1.0)[:, None]) / eps))
        shift = max(float(lw.max()) for _, lw in arcs)
        per_label = {1: 0.0, 2: 0.0}
        for i, (t, logw) in enumerate(arcs):
            per_label[int(arc_labels[i])] += float(
                np.trapezoid(np.exp(logw - shift), t)
            )
        total = per_label[1] + per_label[2]
        return per_label[label] / total

    n = int(resolution) if resolution else 512
    cache = geom.cache(n)
    centers = _cell_centers(2, n)
    logw = -pot.u_many(centers) / eps
    w = np.exp(logw - logw.max())
    lab = cache.labels.ravel()
    m1 = float(w[lab == 1].sum())
    m2 = float(w[lab == 2].sum())
    return (m1 if label == 1 else m2) / (m1 + m2)


def boundary_to_csv(geom: BasinGeometry, path: str):
    """Write the boundary polylines as CSV (component_id, vertex_index, coords)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["component_id", "vertex_index", "x"] + (
            ["y"] if geom.dim == 2 else []
        )
        writer.writerow(header)
        for ci, comp in enumerate(geom.components):
            for vi, v in enumerate(comp):
                writer.writerow([ci, vi] + ["%.17g" % c for c in v])
