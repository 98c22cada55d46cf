"""Energy potentials on the torus with derivatives and landscape analysis.

A :class:`Potential` bundles an energy ``U`` with gradient and Hessian
evaluators (closed-form for the builtins, central finite differences for
user-supplied callables).  The landscape operations in this module find
and classify critical points, compute the minimax barrier height between
wells, and validate the two-well / nondegeneracy / uniform-mass
requirements that the samplers and diagnostics rely on.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import AssumptionError, ConvergenceWarning, DegeneracyError
from .torus import torus_distance, wrap

__all__ = [
    "Potential",
    "CriticalPoint",
    "AssumptionReport",
    "builtin_potential",
    "from_callables",
    "find_critical_points",
    "saddle_height",
    "validate_assumptions",
    "sup_norm",
]

_FD_STEP = 1e-5


@dataclass(frozen=True)
class CriticalPoint:
    """A nondegenerate critical point of the potential."""

    location: np.ndarray
    value: float
    morse_index: int
    hessian_eigenvalues: np.ndarray

    def __repr__(self):
        return "CriticalPoint(x=%s, U=%.6g, index=%d)" % (
            np.array2string(self.location, precision=6),
            self.value,
            self.morse_index,
        )


@dataclass(frozen=True)
class AssumptionReport:
    """Outcome of the two-well landscape validation."""

    two_minima: bool
    all_nondegenerate: bool
    saddle_height: float
    lowest_saddle: CriticalPoint
    lowest_saddle_unique: bool
    mass_ratio_constant: float
    theta_low: float
    theta_high: float


class Potential:
    """An energy on [0,1)^d with gradient and Hessian access.

    Instances are immutable after construction and safe to share across
    threads; every evaluator is pure.  Batch variants (``u_many``,
    ``grad_many``) take an (n, d) array of points and are the workhorses
    of the flow classifier and the quadrature routines.
    """

    def __init__(self, dim, u_many, grad_many=None, hess_one=None,
                 name="custom", params=None, offset=0.0, minima=None,
                 analytic=True):
        self.dim = int(dim)
        self.name = name
        self.params = dict(params or {})
        self.offset = float(offset)
        self._u_many = u_many
        self._grad_many = grad_many
        self._hess_one = hess_one
        self.analytic = bool(analytic)
        # Builtins install a scalar closed-form evaluator (libm call
        # order matching the compiled chain driver) and an id/parameter
        # tuple the driver dispatches on; None for user potentials.
        self.u_scalar = None
        self.builtin = None
        # Known minima, ordered so minima[0] is the global minimum.
        self.minima = None if minima is None else [np.asarray(m, float) for m in minima]

    # -- evaluation ---------------------------------------------------

    def u_many(self, x):
        """Energies at an (n, d) array of points."""
        x = np.asarray(x, dtype=np.float64)
        return self._u_many(x) - self.offset

    def u(self, x):
        """Energy at a single point (length-d array-like)."""
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        return float(self.u_many(x[None, :])[0])

    def grad_many(self, x):
        """Gradients at an (n, d) array of points, shape (n, d)."""
        x = np.asarray(x, dtype=np.float64)
        if self._grad_many is not None:
            return self._grad_many(x)
        return self._fd_grad_many(x)

    def grad(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        return self.grad_many(x[None, :])[0]

    def hess(self, x):
        """Hessian matrix at a single point, shape (d, d)."""
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        if self._hess_one is not None:
            return self._hess_one(x)
        return self._fd_hess(x)

    # -- finite-difference fallbacks ----------------------------------

    def _fd_grad_many(self, x, step=_FD_STEP):
        n, d = x.shape
        g = np.empty((n, d))
        for i in range(d):
            e = np.zeros(d)
            e[i] = step
            g[:, i] = (self.u_many(x + e) - self.u_many(x - e)) / (2 * step)
        return g

    def _fd_hess(self, x, step=_FD_STEP):
        d = x.shape[0]
        h = np.empty((d, d))
        u0 = self.u(x)
        for i in range(d):
            ei = np.zeros(d)
            ei[i] = step
            h[i, i] = (self.u(x + ei) - 2 * u0 + self.u(x - ei)) / step**2
            for j in range(i + 1, d):
                ej = np.zeros(d)
                ej[j] = step
                hij = (
                    self.u(x + ei + ej)
                    - self.u(x + ei - ej)
                    - self.u(x - ei + ej)
                    + self.u(x - ei - ej)
                ) / (4 * step**2)
                h[i, j] = h[j, i] = hij
        return h

    def __repr__(self):
        ps = ", ".join("%s=%g" % kv for kv in sorted(self.params.items()))
        return "Potential(%s(%s), d=%d)" % (self.name, ps, self.dim)


# ---------------------------------------------------------------------
# Builtin double wells
# ---------------------------------------------------------------------

def _dw1_raw(delta, mu):
    def u_many(x):
        t = x[:, 0]
        return (
            0.5 * (1.0 - np.cos(4 * np.pi * t))
            + 0.5 * delta * (1.0 - np.cos(2 * np.pi * t))
            + 0.5 * mu * (1.0 + np.sin(2 * np.pi * t))
        )

    def grad_many(x):
        t = x[:, 0]
        g = (
            2 * np.pi * np.sin(4 * np.pi * t)
            + delta * np.pi * np.sin(2 * np.pi * t)
            + mu * np.pi * np.cos(2 * np.pi * t)
        )
        return g[:, None]

    def hess_one(x):
        t = float(x[0])
        h = (
            8 * np.pi**2 * math.cos(4 * np.pi * t)
            + 2 * delta * np.pi**2 * math.cos(2 * np.pi * t)
            - 2 * mu * np.pi**2 * math.sin(2 * np.pi * t)
        )
        return np.array([[h]])

    return u_many, grad_many, hess_one


def _dw2_raw(c_y, mu):
    def u_many(x):
        t, s = x[:, 0], x[:, 1]
        return (
            0.5 * (1.0 - np.cos(4 * np.pi * t))
            + 0.5 * c_y * (1.0 - np.cos(2 * np.pi * s))
            + 0.5 * mu * (1.0 + np.sin(2 * np.pi * t))
        )

    def grad_many(x):
        t, s = x[:, 0], x[:, 1]
        gx = 2 * np.pi * np.sin(4 * np.pi * t) + mu * np.pi * np.cos(2 * np.pi * t)
        gy = c_y * np.pi * np.sin(2 * np.pi * s)
        return np.stack([gx, gy], axis=1)

    def hess_one(x):
        t, s = float(x[0]), float(x[1])
        hxx = 8 * np.pi**2 * math.cos(4 * np.pi * t) - 2 * mu * np.pi**2 * math.sin(
            2 * np.pi * t
        )
        hyy = 2 * c_y * np.pi**2 * math.cos(2 * np.pi * s)
        return np.array([[hxx, 0.0], [0.0, hyy]])

    return u_many, grad_many, hess_one


def _dw1_scalar(delta, mu, offset):
    def u_scalar(xs):
        t = 2.0 * math.pi * xs[0]
        return (
            0.5 * (1.0 - math.cos(2.0 * t))
            + 0.5 * delta * (1.0 - math.cos(t))
            + 0.5 * mu * (1.0 + math.sin(t))
            - offset
        )

    return u_scalar


def _dw2_scalar(c_y, mu, offset):
    def u_scalar(xs):
        t = 2.0 * math.pi * xs[0]
        s = 2.0 * math.pi * xs[1]
        return (
            0.5 * (1.0 - math.cos(2.0 * t))
            + 0.5 * c_y * (1.0 - math.cos(s))
            + 0.5 * mu * (1.0 + math.sin(t))
            - offset
        )

    return u_scalar


def _newton_refine(u_many, grad_many, hess_one, x0, max_iter=100, tol=1e-12):
    """Damped Newton iteration on grad U = 0 from a seed point.

    Returns the refined point (unwrapped) or None when the iteration
    fails to reach |grad| <= tol within the budget.
    """
    x = np.array(x0, dtype=np.float64)
    g = grad_many(x[None, :])[0]
    for _ in range(max_iter):
        gn = float(np.linalg.norm(g))
        if gn <= tol:
            return x
        h = hess_one(x)
        try:
            step = np.linalg.solve(h, -g)
        except np.linalg.LinAlgError:
            return None
        # Halve the step until |grad| decreases (robust on trig landscapes).
        lam, ok = 1.0, False
        for _ in range(60):
            xn = x + lam * step
            gnew = grad_many(xn[None, :])[0]
            if float(np.linalg.norm(gnew)) < gn:
                x, g, ok = xn, gnew, True
                break
            lam *= 0.5
        if not ok:
            return None
    return x if float(np.linalg.norm(g)) <= tol else None


def builtin_potential(name: str, params: dict | None = None, **kw) -> Potential:
    """Construct a named builtin potential.

    Supported names:

    * ``DW1`` (d=1): ``U(x) = (1 - cos 4 pi x)/2 + (delta/2)(1 - cos 2 pi x)
      + (mu/2)(1 + sin 2 pi x)``, parameters ``delta >= 0``, ``mu >= 0``.
    * ``DW2`` (d=2): ``U(x, y) = (1 - cos 4 pi x)/2 + (c_y/2)(1 - cos 2 pi y)
      + (mu/2)(1 + sin 2 pi x)``, parameters ``c_y > 0``, ``mu >= 0``.

    The energy is shifted so the deeper well sits exactly at 0.

    Raises:
        ValueError: unknown name or out-of-range parameters.
    """
    p = dict(params or {})
    p.update(kw)
    name = str(name).upper()
    if name == "DW1":
        delta = float(p.pop("delta", 0.0))
        mu = float(p.pop("mu", 0.0))
        if p:
            raise ValueError("DW1: unknown parameters %s" % sorted(p))
        if delta < 0 or mu < 0:
            raise ValueError("DW1: need delta >= 0 and mu >= 0")
        dim, raw, prm = 1, _dw1_raw(delta, mu), {"delta": delta, "mu": mu}
        seeds = [np.array([0.0]), np.array([0.5])]
    elif name == "DW2":
        c_y = float(p.pop("c_y", 6.0))
        mu = float(p.pop("mu", 0.0))
        if p:
            raise ValueError("DW2: unknown parameters %s" % sorted(p))
        if c_y <= 0 or mu < 0:
            raise ValueError("DW2: need c_y > 0 and mu >= 0")
        dim, raw, prm = 2, _dw2_raw(c_y, mu), {"c_y": c_y, "mu": mu}
        seeds = [np.array([0.0, 0.0]), np.array([0.5, 0.0])]
    else:
        raise ValueError("unknown builtin potential %r (have: DW1, DW2)" % (name,))

    u_many, grad_many, hess_one = raw
    # Locate the wells and normalize the deeper one to energy 0.
    wells = []
    for s in seeds:
        x = _newton_refine(u_many, grad_many, hess_one, s)
        if x is None:
            raise ValueError(
                "%s%s: could not locate a well near %s" % (name, prm, s)
            )
        wells.append(wrap(x))
    values = [float(u_many(w[None, :])[0]) for w in wells]
    order = int(np.argmin(values))
    minima = [wells[order], wells[1 - order]]
    offset = values[order]
    pot = Potential(
        dim,
        u_many,
        grad_many,
        hess_one,
        name=name,
        params=prm,
        offset=offset,
        minima=minima,
        analytic=True,
    )
    if name == "DW1":
        pot.u_scalar = _dw1_scalar(prm["delta"], prm["mu"], offset)
        pot.builtin = ("DW1", (prm["delta"], prm["mu"]))
    else:
        pot.u_scalar = _dw2_scalar(prm["c_y"], prm["mu"], offset)
        pot.builtin = ("DW2", (prm["c_y"], prm["mu"]))
    return pot


def from_callables(dim, u, grad=None, hess=None, name="custom", params=None,
                   normalize=False) -> Potential:
    """Wrap user-supplied evaluators into a :class:`Potential`.

    ``u`` maps a length-d array to a float.  Missing derivatives are
    substituted by central finite differences with step 1e-5.  Inputs
    are wrapped into [0,1)^d before evaluation, so ``u`` only ever sees
    canonical torus coordinates.
    """

    def u_many(x):
        xw = x - np.floor(x)
        return np.array([float(u(row)) for row in np.atleast_2d(xw)])

    grad_many = None
    if grad is not None:
        def grad_many(x):  # noqa: E306
            xw = x - np.floor(x)
            return np.array([np.asarray(grad(row), float) for row in np.atleast_2d(xw)])

    hess_one = None
    if hess is not None:
        def hess_one(x):  # noqa: E306
            return np.asarray(hess(wrap(x)), dtype=np.float64)

    pot = Potential(dim, u_many, grad_many, hess_one, name=name, params=params,
                    analytic=(grad is not None and hess is not None))
    if normalize:
        cps = find_critical_points(pot, 64)
        mins = [c for c in cps if c.morse_index == 0]
        if mins:
            pot.offset += min(c.value for c in mins)
    return pot


# ---------------------------------------------------------------------
# Critical points
# ---------------------------------------------------------------------

def _grid_points(dim, n):
    axes = [np.arange(n) / n] * dim
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _local_min_mask(g, dim, n):
    """Cells where |grad| is <= all axis/diagonal neighbors (wraparound)."""
    g = g.reshape((n,) * dim)
    mask = np.ones_like(g, dtype=bool)
    shifts = [-1, 0, 1]
    for off in np.ndindex(*(3,) * dim):
        sh = tuple(shifts[o] for o in off)
        if all(s == 0 for s in sh):
            continue
        mask &= g <= np.roll(g, sh, axis=tuple(range(dim)))
    return mask.ravel()


def find_critical_points(pot: Potential, grid_resolution: int = 64):
    """All critical points of the potential, Newton-refined and classified.

    Seeds a damped Newton iteration from every grid cell where |grad U|
    is locally minimal, merges duplicates within torus distance 1e-6,
    and classifies each survivor by its Hessian spectrum.

    Raises:
        DegeneracyError: a converged point has a Hessian eigenvalue
            within 1e-8 of zero.
    Warns:
        ConvergenceWarning: some seed cell failed to converge (the cell
            is reported, never silently dropped).
    """
    if grid_resolution < 16:
        raise ValueError("find_critical_points: grid_resolution must be >= 16")
    n, dim = int(grid_resolution), pot.dim
    pts = _grid_points(dim, n)
    gn = np.linalg.norm(pot.grad_many(pts), axis=1)
    seeds = pts[_local_min_mask(gn, dim, n)]

    found: list[np.ndarray] = []
    failed: list[np.ndarray] = []
    for s in seeds:
        x = _newton_refine(
            lambda q: pot.u_many(q),
            lambda q: pot.grad_many(q),
            lambda q: pot.hess(q),
            s,
        )
        if x is None:
            failed.append(s)
            continue
        x = wrap(x)
        if not any(torus_distance(x, y) < 1e-6 for y in found):
            found.append(x)
    if failed:
        warnings.warn(
            "find_critical_points: Newton failed from %d seed(s), e.g. %s"
            % (len(failed), np.array2string(failed[0], precision=4)),
            ConvergenceWarning,
        )

    out = []
    for x in found:
        eigs = np.sort(np.linalg.eigvalsh(pot.hess(x)))
        if np.any(np.abs(eigs) < 1e-8):
            raise DegeneracyError(
                "degenerate critical point at %s (Hessian eigenvalues %s)"
                % (np.array2string(x, precision=8), eigs)
            )
        out.append(
            CriticalPoint(
                location=x,
                value=pot.u(x),
                morse_index=int(np.sum(eigs < 0)),
                hessian_eigenvalues=eigs,
            )
        )
    out.sort(key=lambda c: (c.morse_index, c.value))
    return out


# ---------------------------------------------------------------------
# Saddle height (minimax barrier) via union-find on the grid graph
# ---------------------------------------------------------------------

class _UnionFind:
    __slots__ = ("parent", "rank")

    def __init__(self, n):
        self.parent = np.arange(n)
        self.rank = np.zeros(n, dtype=np.int32)

    def find(self, i):
        p = self.parent
        root = i
        while p[root] != root:
            root = p[root]
        while p[i] != root:  # path compression
            p[i], i = root, p[i]
        return root

    def union(self, i, j):
        ri, rj = self.find(i), self.find(j)
        if ri == rj:
            return
        if self.rank[ri] < self.rank[rj]:
            ri, rj = rj, ri
        self.parent[rj] = ri
        if self.rank[ri] == self.rank[rj]:
            self.rank[ri] += 1


def _nearest_node(x, n, dim):
    idx = np.round(np.asarray(x) * n).astype(int) % n
    flat = 0
    for i in range(dim):
        flat = flat * n + idx[i]
    return int(flat)


def saddle_height(pot: Potential, m1, m2, grid_resolution: int = 128):
    """Minimax barrier between two wells on the grid graph.

    Activates grid nodes in increasing energy order, merging connected
    components with a union-find; the first node whose activation joins
    the components of m1 and m2 is the bottleneck, and its energy is the
    barrier height.  Converges to the continuous saddle height as the
    resolution grows.

    Returns:
        (height, bottleneck_point)
    """
    m1 = wrap(m1)
    m2 = wrap(m2)
    for m in (m1, m2):
        r = _newton_refine(pot.u_many, pot.grad_many, pot.hess, m)
        if r is None or torus_distance(wrap(r), m) > 1e-6:
            raise ValueError(
                "saddle_height: %s is not within 1e-6 of a critical point"
                % np.array2string(m, precision=6)
            )
    if torus_distance(m1, m2) == 0.0:
        return pot.u(m1), m1

    n, dim = int(grid_resolution), pot.dim
    pts = _grid_points(dim, n)
    u = pot.u_many(pts)
    order = np.argsort(u, kind="stable")
    uf = _UnionFind(len(pts))
    active = np.zeros(len(pts), dtype=bool)

    strides = [n ** (dim - 1 - i) for i in range(dim)]

    def neighbors(flat):
        coords = []
        rem = flat
        for s in strides:
            coords.append(rem // s)
            rem %= s
        for i in range(dim):
            for d in (-1, 1):
                c = list(coords)
                c[i] = (c[i] + d) % n
                yield sum(ci * si for ci, si in zip(c, strides))

    a, b = _nearest_node(m1, n, dim), _nearest_node(m2, n, dim)
    for flat in order:
        flat = int(flat)
        active[flat] = True
        for nb in neighbors(flat):
            if active[nb]:
                uf.union(flat, nb)
        if active[a] and active[b] and uf.find(a) == uf.find(b):
            return float(u[flat]), pts[flat]
    raise RuntimeError("saddle_height: wells never connected (unreachable)")


# ---------------------------------------------------------------------
# Assumption validation
# ---------------------------------------------------------------------

def sup_norm(pot: Potential, resolution: int | None = None) -> float:
    """Max of U over a dense grid (sup-norm of the normalized energy)."""
    if resolution is None:
        resolution = 16384 if pot.dim == 1 else 1024
    pts = _grid_points(pot.dim, int(resolution))
    return float(np.max(pot.u_many(pts)))


def validate_assumptions(pot: Potential, theta_low: float, theta_high: float,
                         geom=None, n_eps: int = 32) -> AssumptionReport:
    """Check the two-well requirements and measure the mass-ratio constant.

    The mass-ratio constant is ``C_m = (inf over the temperature grid of
    the smaller basin mass)**(-1/2)``, with the infimum taken over
    ``n_eps`` log-spaced temperatures in [theta_low, theta_high] and the
    masses computed by the basin-geometry quadrature.

    Raises:
        AssumptionError: fewer or more than two minima.
        DegeneracyError: any degenerate critical point.
    """
    if not (0 < theta_low < theta_high):
        raise ValueError("validate_assumptions: need 0 < theta_low < theta_high")
    from . import basins  # deferred: basins imports nothing from here

    cps = find_critical_points(pot, 64)
    minima = [c for c in cps if c.morse_index == 0]
    if len(minima) != 2:
        raise AssumptionError(
            "expected exactly two minima, found %d: %s" % (len(minima), minima)
        )
    minima.sort(key=lambda c: c.value)
    height, _ = saddle_height(pot, minima[0].location, minima[1].location, 128)

    saddles = [c for c in cps if c.morse_index == 1]
    if not saddles:
        raise AssumptionError("no index-1 critical point found")
    lowest = min(saddles, key=lambda c: c.value)
    unique = sum(1 for c in saddles if abs(c.value - lowest.value) <= 1e-9) == 1

    if geom is None:
        geom = basins.extract_boundary(pot)
    eps_grid = np.geomspace(theta_low, theta_high, int(n_eps))
    inf_mass = 1.0
    for eps in eps_grid:
        w1 = basins.mass_of_basin(pot, geom, float(eps), 1)
        inf_mass = min(inf_mass, w1, 1.0 - w1)
    c_m = 1.0 / math.sqrt(inf_mass)

    return AssumptionReport(
        two_minima=True,
        all_nondegenerate=True,
        saddle_height=float(height),
        lowest_saddle=lowest,
        lowest_saddle_unique=unique,
        mass_ratio_constant=c_m,
        theta_low=float(theta_low),
        theta_high=float(theta_high),
    )
