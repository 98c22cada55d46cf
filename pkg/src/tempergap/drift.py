"""Numerical verification of the geometric drift condition.

For the restricted ball walk on basin 1 with step h at temperature eps,
the Lyapunov function W = exp(gamma * Uhat) must contract outside a
small ball around the minimum:

    (Q W)(x) <= (1 - lambda gamma h^2) W(x) + b 1_{B(m1, a sqrt(eps))}.

The verifier inverts the existential constants: given (gamma, h, eps, a)
it measures the drift (QW)(x)/W(x) - 1 pointwise and reports

    lambda_emp = min over points outside the ball of -drift / (gamma h^2),
    b_emp      = max over points inside the ball of QW - W + lambda gamma h^2 W,

with verdict PASS when every outside drift is provably negative (below
-tolerance * gamma h^2 after the quadrature or Monte Carlo error is
charged against it) and b_emp is finite.

The drift integrand is evaluated in difference form,

    drift(x) = avg over y in B(x,h) of
                 1_{basin 1}(y) * acc(x, y) * (exp(gamma (Uhat(y) - Uhat(x))) - 1),

which is algebraically identical to (QW)/W - 1 (proposals refused by the
basin restriction keep the walker at x and contribute exactly zero) but
avoids the catastrophic 1 - (1 - tiny) cancellation: at h ~ 1e-4 the
drift is ~1e-8 while W itself is O(1).
"""

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .basins import frame as boundary_frame, project_boundary
from .errors import (
    ConfigError,
    GeometryError,
    OutOfTubeError,
    UndefinedBasinError,
)
from .torus import RngStream, wrap

__all__ = [
    "REGION_TAGS",
    "DriftParams",
    "DriftPoint",
    "DriftReport",
    "lyapunov_W",
    "drift_at",
    "drift_scan",
]

REGION_TAGS = (
    "near-saddle-boundary",
    "near-saddle-interior",
    "far-boundary",
    "far-interior",
    "inside-minimum-ball",
)

_MIN_RADIAL = 200
_MIN_ANGULAR = 64
_MIN_SAMPLES = 100000
# Slack between polyline distance and true-boundary distance (vertex
# bisection tolerance plus chord sag at resolution 1e-3).
_BOUNDARY_SLACK = 1e-5


@dataclass(frozen=True)
class DriftParams:
    """Parameters of one drift verification.

    Attributes
    ----------
    eps : float
        Temperature of the restricted walk.
    h : float
        Proposal ball radius; must satisfy ``h <= eta * eps**2``.
    gamma : float
        Exponent of the Lyapunov function ``W = exp(gamma * Uhat)``.
        ``gamma = 0`` is accepted but degenerate: every drift is exactly
        zero and a scan can only FAIL.
    a : float
        Sets the small-ball radius ``a * sqrt(eps)`` around the minimum
        and (scaled by the perturbation's support factor) the extent of
        the near-saddle region.
    scheme : str
        ``"tensor-grid"`` (deterministic quadrature, error estimated by
        resolution halving) or ``"monte-carlo"`` (mean of ``n_samples``
        uniform ball proposals, error reported as the standard error).
    n_radial, n_angular : int
        Tensor-grid resolution: Gauss-Legendre nodes in the radial
        coordinate and equispaced angles (d=2).  In d=1 the rule uses
        ``n_radial`` Gauss-Legendre nodes across the interval.
    n_samples : int
        Monte Carlo sample count per point.
    tolerance : float
        PASS requires every outside-ball drift to sit below
        ``-tolerance * gamma * h**2`` after its error bar is added.
    eta : float
        Step-size regime constant: ``h <= eta * eps**2`` is enforced.
    gamma_hat : float
        Configured upper bound for gamma.
    seed : int
        Base seed; Monte Carlo evaluations use one independent stream
        per point.
    """

    eps: float
    h: float
    gamma: float = 0.5
    a: float = 2.0
    scheme: str = "tensor-grid"
    n_radial: int = _MIN_RADIAL
    n_angular: int = _MIN_ANGULAR
    n_samples: int = _MIN_SAMPLES
    tolerance: float = 1e-3
    eta: float = 0.05
    gamma_hat: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.eps <= 0 or self.h <= 0 or self.a <= 0:
            raise ValueError("need eps > 0, h > 0, and a > 0")
        if self.eta <= 0 or self.gamma_hat <= 0:
            raise ValueError("need eta > 0 and gamma_hat > 0")
        if self.h > self.eta * self.eps**2 * (1.0 + 1e-12):
            raise ValueError(
                "h=%g exceeds eta*eps^2=%g; shrink h or raise eta"
                % (self.h, self.eta * self.eps**2)
            )
        if not 0.0 <= self.gamma <= self.gamma_hat:
            raise ValueError(
                "gamma must lie in [0, gamma_hat=%g]" % self.gamma_hat
            )
        if self.scheme not in ("tensor-grid", "monte-carlo"):
            raise ValueError("scheme must be 'tensor-grid' or 'monte-carlo'")
        if self.scheme == "tensor-grid" and self.n_radial < _MIN_RADIAL:
            raise ValueError("tensor-grid needs n_radial >= %d" % _MIN_RADIAL)
        if self.scheme == "tensor-grid" and self.n_angular < _MIN_ANGULAR:
            raise ValueError("tensor-grid needs n_angular >= %d" % _MIN_ANGULAR)
        if self.scheme == "monte-carlo" and self.n_samples < _MIN_SAMPLES:
            raise ValueError("monte-carlo needs n_samples >= %d" % _MIN_SAMPLES)
        if self.tolerance < 0:
            raise ValueError("tolerance must be nonnegative")

    @classmethod
    def for_temperature(cls, eps: float, eta: float = 0.05, **kw):
        """Params at temperature ``eps`` with the step rule h = eta*eps^2."""
        return cls(eps=float(eps), h=eta * float(eps) ** 2, eta=eta, **kw)


@dataclass(frozen=True)
class DriftPoint:
    """One tested point: location, stratum, drift value, error bar."""

    location: tuple
    region: str
    drift: float
    err: float


@dataclass
class DriftReport:
    """Outcome of a stratified drift scan.

    ``lambda_emp`` is the point estimate min(-drift/(gamma h^2)) over all
    points outside the minimum ball; the verdict additionally charges
    each point's quadrature/Monte Carlo error against it.  ``b_emp`` is
    the largest excess QW - W + lambda_emp * gamma h^2 * W over the
    inside-ball points.
    """

    points: list
    lambda_emp: float
    b_emp: float
    verdict: str
    eps: float
    h: float
    gamma: float
    a: float
    tolerance: float
    scheme: str
    region_counts: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "PASS"

    def to_dict(self) -> dict:
        return {
            "lambda_emp": self.lambda_emp,
            "b_emp": self.b_emp,
            "verdict": self.verdict,
            "eps": self.eps,
            "h": self.h,
            "gamma": self.gamma,
            "a": self.a,
            "tolerance": self.tolerance,
            "scheme": self.scheme,
            "region_counts": dict(self.region_counts),
            "n_points": len(self.points),
            "points": [
                {
                    "location": list(p.location),
                    "region": p.region,
                    "drift": p.drift,
                    "err": p.err,
                }
                for p in self.points
            ],
        }

    def write_csv(self, path: str):
        """One row per tested point."""
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            dim = len(self.points[0].location) if self.points else 0
            wr.writerow(
                ["x%d" % i for i in range(dim)] + ["region", "drift", "err"]
            )
            for p in self.points:
                wr.writerow(
                    ["%.17g" % c for c in p.location]
                    + [p.region, "%.17g" % p.drift, "%.17g" % p.err]
                )


def lyapunov_W(pp, gamma: float, x) -> float:
    """Lyapunov weight W(x) = exp(gamma * Uhat(x)).

    Drift computations never call this on differences larger than the
    local oscillation of Uhat (they work with exp(gamma * dU) - 1
    directly), so the single exponentiation here is safe for any
    realistic gamma.
    """
    return math.exp(gamma * pp.u_hat(np.atleast_1d(x)))


# ---------------------------------------------------------------------
# Single-point drift
# ---------------------------------------------------------------------

def _ball_nodes(x, h, d, n_radial, n_angular):
    """Quadrature nodes/weights averaging over the ball B(x, h).

    d=1: Gauss-Legendre across [x-h, x+h].  d=2: Gauss-Legendre in the
    squared-radius variable (which makes the area weight exact) times
    equispaced angles.  Weights sum to 1.
    """
    if d == 1:
        t, w = np.polynomial.legendre.leggauss(n_radial)
        pts = wrap(x[0] + h * t)[:, None]
        return pts, w / 2.0
    t, w = np.polynomial.legendre.leggauss(n_radial)
    u = 0.5 * (t + 1.0)
    wu = 0.5 * w
    r = h * np.sqrt(u)
    ang = 2.0 * math.pi * np.arange(n_angular) / n_angular
    dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    pts = x[None, None, :] + r[:, None, None] * dirs[None, :, :]
    wts = np.repeat(wu / n_angular, n_angular)
    return wrap(pts.ravel()).reshape(-1, d), wts


def _ball_in_basin(geom, x, h):
    """True when the whole ball B(x, h) provably stays in x's basin."""
    try:
        _, dist = project_boundary(geom, x)
    except OutOfTubeError:
        return True  # farther than the tube radius r0 >> h from the boundary
    return dist > h + _BOUNDARY_SLACK


def _labels_with_retry(cache, pts):
    """Basin labels, resolving flow stalls by an infinitesimal jitter.

    A quadrature node can land exactly on the stable manifold of an
    interior ridge saddle, where the gradient flow stalls and the label
    is formally undefined.  Such manifolds have measure zero, so a
    sub-h jitter resolves the label without moving the node materially.
    """
    try:
        return cache.lookup_many(pts)
    except UndefinedBasinError:
        pass
    out = np.empty(pts.shape[0], dtype=int)
    rng = np.random.default_rng(0)
    for i in range(pts.shape[0]):
        p = pts[i]
        for attempt in range(4):
            try:
                out[i] = cache.lookup(p)
                break
            except UndefinedBasinError:
                p = wrap(pts[i] + 1e-9 * rng.normal(size=pts.shape[1]))
        else:
            raise UndefinedBasinError(
                "basin label of quadrature node %s undefined after jitter"
                % np.array2string(pts[i], precision=9)
            )
    return out


def _basin1_mask(geom, x, pts, h):
    if _ball_in_basin(geom, x, h):
        return np.ones(pts.shape[0], dtype=bool)
    return _labels_with_retry(geom.cache(), pts) == 1


def _drift_mean(pp, geom, params, x, pts, wts_or_none):
    u_x = float(pp.u_hat(x))
    du = pp.u_hat_many(pts) - u_x
    mask = _basin1_mask(geom, x, pts, params.h)
    acc = np.exp(np.minimum(0.0, -du / params.eps))
    vals = np.where(mask, acc * np.expm1(params.gamma * du), 0.0)
    if wts_or_none is None:
        return vals
    return float(wts_or_none @ vals)


def _ball_samples(rng: RngStream, n, d):
    """n uniform points of the unit d-ball from one stream (vectorized)."""
    out = np.empty((n, d))
    have = 0
    gen = rng.generator
    while have < n:
        chunk = 2.0 * gen.random((max(n - have, 1024) * 2, d)) - 1.0
        keep = chunk[np.einsum("ij,ij->i", chunk, chunk) <= 1.0]
        take = min(len(keep), n - have)
        out[have : have + take] = keep[:take]
        have += take
    return out


def drift_at(pp, geom, params: DriftParams, x, stream_id: int = 0):
    """Drift (QW)(x)/W(x) - 1 of the restricted ball walk at one point.

    Parameters
    ----------
    pp : Perturbation
        Potential wrapper supplying ``u_hat`` / ``u_hat_many``.
    geom : BasinGeometry
        Basin geometry used for the restriction to basin 1.
    params : DriftParams
    x : array-like
        Torus point; must lie in basin 1.
    stream_id : int
        Monte Carlo stream index (one independent stream per point).

    Returns
    -------
    (drift, err) : tuple of float
        The drift estimate and its error bar: |full - half resolution|
        for the tensor grid, the standard error for Monte Carlo.

    Raises
    ------
    ValueError
        x lies outside basin 1.
    """
    x = wrap(np.asarray(x, dtype=np.float64))
    d = pp.pot.dim
    if x.shape != (d,):
        raise ValueError("x must be a point of dimension %d" % d)
    if geom.cache().lookup(x) != 1:
        raise ValueError(
            "drift_at needs a point of basin 1; %s is in basin 2"
            % np.array2string(x, precision=6)
        )
    if params.gamma == 0.0:
        return 0.0, 0.0  # W is identically 1

    if params.scheme == "monte-carlo":
        rng = RngStream(params.seed, stream_id)
        zs = _ball_samples(rng, params.n_samples, d)
        pts = wrap((x[None, :] + params.h * zs).ravel()).reshape(-1, d)
        vals = _drift_mean(pp, geom, params, x, pts, None)
        n = len(vals)
        err = float(np.std(vals, ddof=1) / math.sqrt(n))
        return float(np.mean(vals)), err

    pts, wts = _ball_nodes(x, params.h, d, params.n_radial, params.n_angular)
    full = _drift_mean(pp, geom, params, x, pts, wts)
    pts2, wts2 = _ball_nodes(
        x, params.h, d, max(2, params.n_radial // 2),
        max(4, params.n_angular // 2),
    )
    half = _drift_mean(pp, geom, params, x, pts2, wts2)
    return full, abs(full - half)


# ---------------------------------------------------------------------
# Stratified scan
# ---------------------------------------------------------------------

def _vertex_array(geom):
    return np.concatenate([np.atleast_2d(c) for c in geom.components], axis=0)


def _torus_dist_to(pts, p):
    disp = pts - p[None, :]
    disp -= np.round(disp)
    return np.sqrt(np.einsum("ij,ij->i", disp, disp))


def _offset_boundary_points(geom, cache, verts, pool, n, h, rng, exclude=None):
    """Points at distance delta*h inside basin 1 from sampled vertices.

    delta cycles through {0.1, 0.5, 1.0}, matching the boundary-layer
    parametrization the drift analysis uses.
    """
    deltas = (0.1, 0.5, 1.0)
    pts = []
    guard = 0
    while len(pts) < n and guard < 60 * n + 200:
        guard += 1
        vi = pool[rng.index(len(pool))]
        delta = deltas[len(pts) % len(deltas)]
        try:
            fr = boundary_frame(geom, verts[vi])
        except (ValueError, GeometryError):
            continue
        cand = wrap(verts[vi] - delta * h * fr.normal)
        try:
            if cache.lookup(cand) != 1:
                continue
        except UndefinedBasinError:
            continue
        if exclude is not None and exclude(cand):
            continue
        pts.append(cand)
    if len(pts) < n:
        raise ConfigError(
            "could only place %d of %d boundary-layer points; the basin "
            "geometry leaves no room at step size h=%g" % (len(pts), n, h)
        )
    return pts


def _thread_count() -> int:
    raw = os.environ.get("TEMPERGAP_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def drift_scan(pp, geom, params: DriftParams, budget: int) -> DriftReport:
    """Stratified drift verification over basin 1.

    Samples ``budget`` points across five strata -- near the saddle
    within the boundary layer of width h, near the saddle in the
    interior, far from the saddle in the boundary layer, far in the
    interior, and inside the small ball B(m1, a sqrt(eps)) -- evaluates
    :func:`drift_at` at each, and aggregates the empirical drift rate
    lambda_emp and offset b_emp.

    Verdict PASS requires gamma > 0, every outside-ball drift below
    ``-tolerance * gamma * h**2`` with its error bar charged against it,
    and a finite b_emp.

    Raises
    ------
    ValueError
        budget < 100.
    ConfigError
        The strata cannot be realized: the small ball reaches the
        boundary, or no boundary vertices are left outside the
        near-saddle region.
    """
    budget = int(budget)
    if budget < 100:
        raise ValueError("point budget must be at least 100")
    d = pp.pot.dim
    cache = geom.cache()
    h = params.h
    s = np.asarray(pp.frame.saddle, dtype=np.float64)
    m1 = np.asarray(geom.minima[0], dtype=np.float64)
    r_ball = params.a * math.sqrt(params.eps)
    # The near-saddle strata must scrutinize wherever the potential was
    # modified, so their radius follows the perturbation's support; for
    # an unmodified potential (support 0) half the tube radius is used.
    r_near = pp.support_radius if pp.support_radius > 0 else 0.5 * geom.r0

    verts = _vertex_array(geom)
    vdist_m1 = _torus_dist_to(verts, m1)
    if r_ball + 2.0 * h >= float(vdist_m1.min()):
        raise ConfigError(
            "ball radius a*sqrt(eps)=%g reaches the basin boundary "
            "(min distance %g from the minimum); shrink a"
            % (r_ball, float(vdist_m1.min()))
        )
    vdist_s = _torus_dist_to(verts, s)
    near_pool = np.flatnonzero(vdist_s <= r_near)
    far_pool = np.flatnonzero(vdist_s > r_near + h)
    if near_pool.size == 0 or far_pool.size == 0:
        raise ConfigError(
            "cannot stratify the boundary: %d vertices near the saddle, "
            "%d far (near radius %g); adjust a"
            % (near_pool.size, far_pool.size, r_near)
        )

    n_nsb = budget * 25 // 100
    n_nsi = budget * 20 // 100
    n_fb = budget * 20 // 100
    n_fi = budget * 20 // 100
    n_ball = budget - (n_nsb + n_nsi + n_fb + n_fi)
    rng = RngStream(params.seed, 1 << 20)

    def in_ball(p):
        return float(_torus_dist_to(p[None, :], m1)[0]) <= r_ball + 2.0 * h

    tagged = []
    for p in _offset_boundary_points(geom, cache, verts, near_pool, n_nsb,
                                     h, rng, exclude=in_ball):
        tagged.append((p, "near-saddle-boundary"))
    for p in _offset_boundary_points(geom, cache, verts, far_pool, n_fb,
                                     h, rng, exclude=in_ball):
        tagged.append((p, "far-boundary"))

    def interior_ok(p):
        try:
            _, dist = project_boundary(geom, p)
        except OutOfTubeError:
            return True
        return dist > 2.0 * h

    got, guard = 0, 0
    while got < n_nsi and guard < 200 * n_nsi + 400:
        guard += 1
        r = r_near * math.sqrt(rng.uniform())
        if r <= 2.0 * h:
            continue
        if d == 1:
            vec = np.array([1.0 if rng.uniform() < 0.5 else -1.0])
        else:
            ang = 2.0 * math.pi * rng.uniform()
            vec = np.array([math.cos(ang), math.sin(ang)])
        cand = wrap(s + r * vec)
        try:
            lab = cache.lookup(cand)
        except UndefinedBasinError:
            continue
        if lab != 1 or in_ball(cand) or not interior_ok(cand):
            continue
        tagged.append((cand, "near-saddle-interior"))
        got += 1
    if got < n_nsi:
        raise ConfigError(
            "could only place %d of %d near-saddle interior points within "
            "radius %g" % (got, n_nsi, r_near)
        )

    got, guard = 0, 0
    while got < n_fi and guard < 400 * n_fi + 400:
        guard += 1
        cand = wrap(rng.uniforms(d))
        try:
            lab = cache.lookup(cand)
        except UndefinedBasinError:
            continue
        if lab != 1:
            continue
        if float(_torus_dist_to(cand[None, :], s)[0]) <= r_near + h:
            continue
        if in_ball(cand) or not interior_ok(cand):
            continue
        tagged.append((cand, "far-interior"))
        got += 1
    if got < n_fi:
        raise ConfigError("could only place %d of %d far interior points"
                          % (got, n_fi))

    ball_pts = [m1]  # the minimum itself is always tested
    while len(ball_pts) < n_ball:
        cand = wrap(m1 + r_ball * rng.unit_ball(d))
        try:
            if cache.lookup(cand) == 1:
                ball_pts.append(cand)
        except UndefinedBasinError:
            continue
    for p in ball_pts:
        tagged.append((p, "inside-minimum-ball"))

    def evaluate(item):
        i, (p, tag) = item
        val, err = drift_at(pp, geom, params, p, stream_id=i)
        return DriftPoint(tuple(float(c) for c in p), tag, val, err)

    workers = _thread_count()
    items = list(enumerate(tagged))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            points = list(ex.map(evaluate, items))
    else:
        points = [evaluate(it) for it in items]

    gh2 = params.gamma * h * h
    outside = [p for p in points if p.region != "inside-minimum-ball"]
    inside = [p for p in points if p.region == "inside-minimum-ball"]
    if params.gamma == 0.0:
        lam = 0.0
        contract = False
    else:
        lam = min(-p.drift / gh2 for p in outside)
        contract = all(
            p.drift + p.err <= -params.tolerance * gh2 for p in outside
        )
    b_emp = max(
        lyapunov_W(pp, params.gamma, np.array(p.location))
        * (p.drift + lam * gh2)
        for p in inside
    )
    verdict = (
        "PASS"
        if params.gamma > 0.0 and contract and math.isfinite(b_emp)
        else "FAIL"
    )
    counts = {}
    for p in points:
        counts[p.region] = counts.get(p.region, 0) + 1
    return DriftReport(
        points=points, lambda_emp=float(lam), b_emp=float(b_emp),
        verdict=verdict, eps=params.eps, h=params.h, gamma=params.gamma,
        a=params.a, tolerance=params.tolerance, scheme=params.scheme,
        region_counts=counts,
    )
