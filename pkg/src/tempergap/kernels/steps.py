"""Single-step Markov kernels and the tempering ladder.

All acceptance ratios are computed in log-space (the Gibbs weights
underflow for cold temperatures).  Every step consumes random draws in a
fixed documented order, shared with the compiled driver, so traces are
bit-reproducible across backends:

* ball proposal: d uniforms per rejection attempt (cube sampling);
* Metropolis filter: exactly one uniform, drawn before the comparison
  even when the move is downhill;
* laziness: one uniform, hold when it is < 1/2;
* swap sweep (when the ladder has at least one adjacent pair): one
  laziness uniform, then one for the pair index and one for the filter;
* temperature resample: one uniform for the level selection.
"""

import math
from dataclasses import dataclass

import numpy as np

from ..torus import RngStream

__all__ = [
    "TemperatureLadder",
    "build_ladder",
    "PTState",
    "STState",
    "mrw_step",
    "lazy_mrw_step",
    "restricted_mrw_step",
    "pt_swap_sweep",
    "pt_step",
    "st_step",
]


@dataclass(frozen=True)
class TemperatureLadder:
    """Geometric data of a tempering ladder: eps_0 >= ... >= eps_N.

    Inverse temperatures are linearly spaced and each level carries the
    step size h_k = min(eta eps_k^2, 1).
    """

    eps: np.ndarray
    h: np.ndarray
    betas: np.ndarray
    nu_bar: float
    eta: float

    @property
    def n_levels(self) -> int:
        return len(self.eps)

    @property
    def n_pairs(self) -> int:
        return len(self.eps) - 1

    def __post_init__(self):
        if len(self.eps) != len(self.h) or len(self.eps) != len(self.betas):
            raise ValueError("ladder arrays must have equal length")
        if np.any(self.eps <= 0) or np.any(self.h <= 0) or np.any(self.h > 1):
            raise ValueError("need eps_k > 0 and 0 < h_k <= 1")


def build_ladder(eps_max: float, eps_min: float, nu_bar: float,
                 eta: float) -> TemperatureLadder:
    """Ladder with N = ceil(1/(nu_bar eps_min)) inverse-linear levels.

    Level 0 is the hottest (eps_max), level N the coldest (eps_min);
    1/eps_k is linearly spaced between them and h_k = min(eta eps_k^2, 1).

    Raises:
        ValueError: eps_min >= eps_max, or nonpositive parameters.
    """
    if not (0.0 < eps_min < eps_max):
        raise ValueError("need 0 < eps_min < eps_max")
    if nu_bar <= 0 or eta <= 0:
        raise ValueError("need nu_bar > 0 and eta > 0")
    n = math.ceil(1.0 / (nu_bar * eps_min))
    betas = np.linspace(1.0 / eps_max, 1.0 / eps_min, n + 1)
    eps = 1.0 / betas
    h = np.minimum(eta * eps * eps, 1.0)
    return TemperatureLadder(eps, h, betas, float(nu_bar), float(eta))


@dataclass
class PTState:
    """Parallel-tempering state: row k is the replica at temperature eps_k."""

    replicas: np.ndarray

    def copy(self):
        return PTState(self.replicas.copy())


@dataclass
class STState:
    """Simulated-tempering state: one walker plus its temperature level."""

    position: np.ndarray
    level: int

    def copy(self):
        return STState(self.position.copy(), self.level)


# ---------------------------------------------------------------------
# Scalar primitives (shared semantics with the compiled driver)
# ---------------------------------------------------------------------

def _scalar_u(pot):
    """Scalar energy evaluator: closed form for builtins, else a wrapper
    around the vectorized evaluator."""
    fn = getattr(pot, "u_scalar", None)
    if fn is not None:
        return fn
    return lambda xs: float(pot.u(np.array(xs)))


def _ball(x, h, uniform, d):
    """One ball proposal from x: d uniforms per rejection attempt."""
    while True:
        vv = 0.0
        v = [0.0] * d
        for i in range(d):
            vi = 2.0 * uniform() - 1.0
            v[i] = vi
            vv += vi * vi
        if vv <= 1.0:
            break
    y = [0.0] * d
    for i in range(d):
        t = x[i] + h * v[i]
        t -= math.floor(t)
        if t >= 1.0:
            t = 0.0
        y[i] = t
    return y


def _met_accept(ux, uy, eps, uniform):
    """Metropolis filter in log space; always consumes one uniform."""
    u = uniform()
    logr = -(uy - ux) / eps
    return logr >= 0.0 or u < math.exp(logr)


def _resample_level(u_val, betas, uniform):
    """Gibbs level selection proportional to exp(-beta_k U), stabilized."""
    n = len(betas)
    logw = [-betas[k] * u_val for k in range(n)]
    m = max(logw)
    p = [math.exp(lw - m) for lw in logw]
    total = 0.0
    for k in range(n):
        total += p[k]
    c = uniform() * total
    acc = 0.0
    for k in range(n):
        acc += p[k]
        if c < acc:
            return k
    return n - 1


def _basin_label_1d(x, pts, labels):
    """Arc membership on the circle: exact d=1 classification."""
    nb = len(pts)
    idx = 0
    while idx < nb and pts[idx] <= x:
        idx += 1
    return int(labels[(idx - 1) % nb])


# ---------------------------------------------------------------------
# Public single-step operations
# ---------------------------------------------------------------------

def mrw_step(pot, eps: float, h: float, x, rng: RngStream):
    """One Metropolis random-walk step with ball proposals.

    Proposes uniformly on the torus ball B(x, h) and accepts with
    probability min(1, exp(-(U(y) - U(x))/eps)).
    """
    if eps <= 0 or not (0.0 < h <= 1.0):
        raise ValueError("need eps > 0 and 0 < h <= 1")
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    u = _scalar_u(pot)
    xs = list(x)
    y = _ball(xs, h, rng.uniform, len(xs))
    if _met_accept(u(xs), u(y), eps, rng.uniform):
        return np.array(y)
    return x.copy()


def lazy_mrw_step(pot, eps: float, h: float, x, rng: RngStream):
    """Hold with probability 1/2, otherwise one mrw_step."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if rng.uniform() < 0.5:
        return x.copy()
    return mrw_step(pot, eps, h, x, rng)


def restricted_mrw_step(pot, geom, basin_label: int, eps: float, h: float,
                        x, rng: RngStream):
    """mrw_step restricted to one basin: out-of-basin moves are refused.

    Raises:
        ValueError: the starting point is not in the stated basin.
    """
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if _classify(geom, x) != basin_label:
        raise ValueError(
            "restricted step started outside basin %d at %s" % (basin_label, x)
        )
    y = mrw_step(pot, eps, h, x, rng)
    if y is not x and not np.array_equal(y, x):
        if _classify(geom, y) != basin_label:
            return x.copy()
    return y


def _classify(geom, x):
    if geom.dim == 1:
        pts, labels = geom.arc_table()
        return _basin_label_1d(float(x[0]), pts, labels)
    return geom.cache().lookup(x)


def pt_swap_sweep(pot, ladder: TemperatureLadder, state: PTState,
                  rng: RngStream) -> PTState:
    """Lazy adjacent-pair swap: the kernel S.

    With probability 1/2 holds; otherwise picks an adjacent pair I
    uniformly and swaps with probability
    min(1, exp((beta_{I+1} - beta_I)(U(X_{I+1}) - U(X_I)))).
    A single-level ladder has no pairs: the sweep is the identity and
    consumes no randomness.
    """
    out = state.copy()
    n_pairs = ladder.n_pairs
    if n_pairs == 0:
        return out
    if rng.uniform() < 0.5:
        return out
    i = rng.index(n_pairs)
    u = _scalar_u(pot)
    u_i = u(list(out.replicas[i]))
    u_j = u(list(out.replicas[i + 1]))
    draw = rng.uniform()
    log_a = (ladder.betas[i + 1] - ladder.betas[i]) * (u_j - u_i)
    if log_a >= 0.0 or draw < math.exp(log_a):
        out.replicas[[i, i + 1]] = out.replicas[[i + 1, i]]
    return out


def pt_step(pot, ladder: TemperatureLadder, state: PTState,
            rng: RngStream) -> PTState:
    """One parallel-tempering step: swap sweep, lazy single-replica
    Metropolis update, swap sweep."""
    out = pt_swap_sweep(pot, ladder, state, rng)
    if rng.uniform() >= 0.5:
        j = rng.index(ladder.n_levels)
        out.replicas[j] = mrw_step(
            pot, float(ladder.eps[j]), float(ladder.h[j]), out.replicas[j], rng
        )
    return pt_swap_sweep(pot, ladder, out, rng)


def st_step(pot, ladder: TemperatureLadder, state: STState,
            rng: RngStream) -> STState:
    """One simulated-tempering step: temperature update, lazy Metropolis
    update at the current level, temperature update."""
    if not (0 <= state.level <= ladder.n_pairs):
        raise ValueError("level %d out of range" % state.level)
    u = _scalar_u(pot)
    out = state.copy()

    for phase in (0, 1, 2):
        if phase == 1:
            if rng.uniform() >= 0.5:
                out.position = mrw_step(
                    pot,
                    float(ladder.eps[out.level]),
                    float(ladder.h[out.level]),
                    out.position,
                    rng,
                )
        else:
            if rng.uniform() >= 0.5:
                out.level = _resample_level(
                    u(list(out.position)), ladder.betas, rng.uniform
                )
    return out
