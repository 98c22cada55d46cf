"""Geometry of the flat torus [0,1)^d and the shared RNG contract.

Points on the torus are plain float64 numpy arrays whose coordinates lie
in [0,1).  All samplers draw their randomness exclusively through
:class:`RngStream`, one stream per chain, which makes every run
reproducible and lets the compiled and pure-Python chain drivers consume
bit-identical uniform sequences.
"""

import math

import numpy as np
from numpy.random import PCG64, Generator, SeedSequence

__all__ = [
    "RngStream",
    "wrap",
    "torus_displacement",
    "torus_distance",
    "sample_ball",
    "uniform_ball_second_moment",
]


def wrap(raw) -> np.ndarray:
    """Reduce coordinates modulo 1 into [0,1).

    Args:
        raw: array-like of d finite reals.

    Returns:
        float64 array with every coordinate in [0,1).

    Raises:
        ValueError: if any coordinate is NaN or infinite.
    """
    x = np.atleast_1d(np.asarray(raw, dtype=np.float64))
    if not np.all(np.isfinite(x)):
        raise ValueError("wrap: coordinates must be finite, got %r" % (raw,))
    out = x - np.floor(x)
    # x - floor(x) can round up to exactly 1.0 for tiny negative inputs.
    out[out >= 1.0] = 0.0
    return out


def torus_displacement(x, y) -> np.ndarray:
    """Minimal representative of y - x on the torus.

    Each component of the result lies in (-1/2, 1/2], and
    ``wrap(x + torus_displacement(x, y)) == y``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if x.shape != y.shape:
        raise ValueError(
            "torus_displacement: dimension mismatch %s vs %s" % (x.shape, y.shape)
        )
    d = y - x
    d = d - np.floor(d)  # into [0, 1)
    d[d > 0.5] -= 1.0  # into (-1/2, 1/2]
    return d


def torus_distance(x, y) -> float:
    """Geodesic (shortest-arc) Euclidean distance on the torus."""
    return float(np.linalg.norm(torus_displacement(x, y)))


def uniform_ball_second_moment(d: int) -> float:
    """Per-coordinate second moment of the uniform law on the unit d-ball.

    Equals 1/(d+2): the mean of r^2 over the ball is d/(d+2) and it is
    shared equally by the d coordinates.
    """
    if int(d) != d or d < 1:
        raise ValueError("uniform_ball_second_moment: d must be a positive integer")
    return 1.0 / (d + 2)


class RngStream:
    """A reproducible, single-owner stream of uniform doubles.

    Two instances constructed with the same ``(seed, stream_id)`` yield
    bit-identical draw sequences.  Distinct stream ids under one seed are
    statistically independent (PCG64 seeded with the (seed, stream_id)
    entropy pair), so parallel chains never share a stream.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._bitgen = PCG64(SeedSequence((self.seed, self.stream_id)))
        self.generator = Generator(self._bitgen)

    def __repr__(self):
        return "RngStream(seed=%d, stream_id=%d)" % (self.seed, self.stream_id)

    @property
    def capsule(self):
        """PyCapsule of the underlying bit generator (compiled driver hook)."""
        return self._bitgen.capsule

    def uniform(self) -> float:
        """One double in [0, 1); consumes exactly one generator draw."""
        return self.generator.random()

    def uniforms(self, n: int) -> np.ndarray:
        """n doubles in [0, 1); consumes exactly n generator draws."""
        return self.generator.random(int(n))

    def index(self, n: int) -> int:
        """Uniform integer in {0, ..., n-1}; consumes exactly one draw.

        Uses floor(u * n) rather than rejection sampling so that the
        compiled and pure-Python drivers consume identical draws (the
        1-in-2^53 rounding bias is irrelevant at sampler scale).
        """
        u = self.generator.random()
        i = int(u * n)
        return n - 1 if i >= n else i

    def unit_ball(self, d: int) -> np.ndarray:
        """Uniform point of the d-dimensional unit ball.

        Rejection from the enclosing cube [-1,1]^d: each attempt consumes
        exactly d draws, and attempts repeat until the point lands inside
        the ball (acceptance 2^-d * vol(B_d), at worst ~1.9 tries for
        d <= 3).
        """
        while True:
            v = 2.0 * self.generator.random(d) - 1.0
            if float(v @ v) <= 1.0:
                return v


def sample_ball(center, h: float, rng: RngStream) -> np.ndarray:
    """Uniform proposal on the radius-h ball around ``center``, wrapped.

    Args:
        center: torus point (coordinates in [0,1)).
        h: ball radius, 0 < h <= 1.
        rng: draw source.

    Returns:
        ``wrap(center + h * zeta)`` with zeta uniform on the unit ball.
    """
    if not (0.0 < h <= 1.0):
        raise ValueError("sample_ball: need 0 < h <= 1, got h=%r" % (h,))
    center = np.atleast_1d(np.asarray(center, dtype=np.float64))
    zeta = rng.unit_ball(center.shape[0])
    return wrap(center + h * zeta)


def _wrap1(x: float) -> float:
    """Scalar modulo-1 reduction (hot-loop helper, mirrors :func:`wrap`)."""
    r = x - math.floor(x)
    return 0.0 if r >= 1.0 else r
