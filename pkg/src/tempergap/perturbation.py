"""Saddle-flattening perturbation of the potential.

Near the lowest boundary saddle the restricted chain on one basin feels
a degenerate direction: the potential is flat to second order along the
boundary.  The perturbation built here subtracts a localized quadratic
form so that the perturbed potential has strictly positive tangential
curvature kappa at the saddle while its normal structure on the boundary
is untouched.  The drift (Lyapunov) verification consumes the perturbed
potential.

Construction, for a saddle s with outward normal n and frame projector
P_s = I - n n^T:

    H_s   = P_s D^2U(s) P_s            (tangential Hessian)
    K     = H_s - kappa P_s
    Phat(x) = 1/2 y^T K y * chi(|y|^2/(a^2 eps)) * chi(|z|^2/(abar^2 a^2 eps))

with xi(x) the boundary projection of x, z = x - xi(x) the normal
offset, y = xi(x) - s the along-boundary offset, and chi a smooth cutoff
equal to 1 on [0, 1/2] and 0 from 1 on.  The support is then contained
in the ball B(s, rho a sqrt(eps)) with rho = 2(1 + abar), and the
construction requires rho a sqrt(eps) < r0/2 so the projection is
defined throughout.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .basins import (
    BasinGeometry,
    frame as boundary_frame,
    project_boundary,
    project_boundary_many,
)
from .errors import OutOfTubeError, WellDefinednessError
from .potentials import Potential
from .torus import torus_displacement, uniform_ball_second_moment, wrap

__all__ = [
    "Cutoff",
    "default_cutoff",
    "SaddleFrame",
    "build_saddle_frame",
    "Perturbation",
    "build_perturbation",
    "identity_perturbation",
    "verify_perturbation",
    "PerturbationReport",
]


class Cutoff:
    """Smooth transition function: 1 on [0, 1/2], 0 on [1, inf).

    Built from the standard exponential partition of unity, so all
    derivatives vanish at both ends of the transition interval and
    chi(3/4) = 1/2 exactly by symmetry.
    """

    def __init__(self):
        xs = np.linspace(0.5, 1.0, 100001)
        self.sup_abs_derivative = float(
            np.max(np.abs(self.derivative(xs))) * 1.01
        )

    @staticmethod
    def _bump(t):
        out = np.zeros_like(t)
        pos = t > 0
        out[pos] = np.exp(-1.0 / t[pos])
        return out

    def __call__(self, s):
        s = np.asarray(s, dtype=np.float64)
        scalar = s.ndim == 0
        s = np.atleast_1d(s)
        a = self._bump(1.0 - s)
        b = self._bump(s - 0.5)
        out = np.ones_like(s)
        hi = s >= 1.0
        mid = (s > 0.5) & ~hi
        out[hi] = 0.0
        out[mid] = a[mid] / (a[mid] + b[mid])
        return float(out[0]) if scalar else out

    def derivative(self, s):
        s = np.asarray(s, dtype=np.float64)
        scalar = s.ndim == 0
        s = np.atleast_1d(s)
        out = np.zeros_like(s)
        mid = (s > 0.5) & (s < 1.0)
        if mid.any():
            t = s[mid]
            a = np.exp(-1.0 / (1.0 - t))
            b = np.exp(-1.0 / (t - 0.5))
            da = -a / (1.0 - t) ** 2  # d/ds exp(-1/(1-s))... sign below
            db = b / (t - 0.5) ** 2
            # chi = a/(a+b); chi' = (a' b - a b')/(a+b)^2 with a' = da.
            out[mid] = (da * b - a * db) / (a + b) ** 2
        return float(out[0]) if scalar else out


_DEFAULT_CUTOFF = None


def default_cutoff() -> Cutoff:
    global _DEFAULT_CUTOFF
    if _DEFAULT_CUTOFF is None:
        _DEFAULT_CUTOFF = Cutoff()
    return _DEFAULT_CUTOFF


@dataclass(frozen=True)
class SaddleFrame:
    """The lowest boundary saddle with its adapted orthonormal frame."""

    saddle: np.ndarray
    value: float
    normal: np.ndarray
    tangents: tuple
    lambda_u: float
    lambda_tangential: np.ndarray  # eigenvalues of H_s off the normal
    projector: np.ndarray  # P_s = I - n n^T
    tangential_hessian: np.ndarray  # H_s


def build_saddle_frame(pot: Potential, geom: BasinGeometry,
                       saddle=None) -> SaddleFrame:
    """Frame at the lowest boundary saddle (or an explicitly given one).

    Raises:
        WellDefinednessError: the lowest boundary saddle is not unique
            (two within 1e-9 in value) and none was given explicitly.
    """
    if saddle is None:
        cands = sorted(geom.boundary_saddles, key=lambda c: c.value)
        if not cands:
            raise WellDefinednessError("geometry has no boundary saddle")
        if len(cands) > 1 and cands[1].value - cands[0].value < 1e-9:
            raise WellDefinednessError(
                "lowest boundary saddle is not unique (values %.12g, %.12g);"
                " pass the saddle explicitly" % (cands[0].value, cands[1].value)
            )
        s_loc = np.asarray(cands[0].location, dtype=np.float64)
        s_val = float(cands[0].value)
    else:
        s_loc = wrap(np.asarray(saddle, dtype=np.float64))
        s_val = float(pot.u(s_loc))
        gn = float(np.linalg.norm(pot.grad(s_loc)))
        if gn > 1e-6:
            raise WellDefinednessError(
                "point %s is not a critical point (|DU| = %.3g)" % (s_loc, gn)
            )

    hess = pot.hess(s_loc)
    eigval, eigvec = np.linalg.eigh(hess)
    if eigval[0] >= 0 or np.sum(eigval < 0) != 1:
        raise WellDefinednessError(
            "point %s is not an index-1 saddle (Hessian eigenvalues %s)"
            % (s_loc, eigval)
        )
    lam_u = float(-eigval[0])
    n = eigvec[:, 0]
    # Orient the normal outward from basin 1, matching the boundary
    # frame; a saddle that does not sit on the boundary (a ridge saddle
    # between two approaches to the same well) has no such frame.
    try:
        bf = boundary_frame(geom, s_loc)
    except (OutOfTubeError, ValueError) as exc:
        raise WellDefinednessError(
            "point %s is not on the basin boundary: %s" % (s_loc, exc)
        ) from exc
    if float(n @ bf.normal) < 0:
        n = -n
    d = pot.dim
    proj = np.eye(d) - np.outer(n, n)
    h_s = proj @ hess @ proj
    if d == 1:
        lam_t = np.zeros(0)
        tangents = ()
    else:
        # Eigenvalues of H_s on the tangent space (drop the normal's 0).
        tvals, tvecs = np.linalg.eigh(h_s)
        order = np.argsort(np.abs(tvecs.T @ n))  # tangent vectors first
        keep = order[: d - 1]
        lam_t = np.sort(tvals[keep])
        tangents = tuple(tvecs[:, k] for k in keep)
        if lam_t[0] <= 0:
            raise WellDefinednessError(
                "tangential Hessian at %s is not positive definite (%s)"
                % (s_loc, lam_t)
            )
    return SaddleFrame(s_loc, s_val, n, tangents, lam_u, lam_t, proj, h_s)


@dataclass
class Perturbation:
    """The perturbation Phat and the perturbed potential Uhat = U - Phat."""

    pot: Potential
    geom: BasinGeometry
    frame: SaddleFrame
    eps: float
    a: float
    kappa: float
    w: float
    abar: float
    rho: float
    cutoff: Cutoff
    trivial: bool = False  # d=1, or the identity perturbation
    _k_matrix: np.ndarray = field(default=None, repr=False)

    @property
    def support_radius(self) -> float:
        return self.rho * self.a * math.sqrt(self.eps)

    def p_hat_many(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        out = np.zeros(x.shape[0])
        if self.trivial:
            return out
        s = self.frame.saddle
        r = self.support_radius
        d2s = x - s[None, :]
        d2s -= np.round(d2s)
        near = np.einsum("ij,ij->i", d2s, d2s) < r * r
        if not near.any():
            return out
        a2eps = self.a * self.a * self.eps
        idx = np.flatnonzero(near)
        xi, _ = project_boundary_many(self.geom, x[idx])
        z = x[idx] - xi
        z -= np.round(z)
        y = xi - s[None, :]
        y -= np.round(y)
        yk = y @ self._k_matrix
        quad = 0.5 * np.einsum("ij,ij->i", yk, y)
        cy = self.cutoff(np.einsum("ij,ij->i", y, y) / a2eps)
        cz = self.cutoff(
            np.einsum("ij,ij->i", z, z) / (self.abar**2 * a2eps)
        )
        out[idx] = quad * cy * cz
        return out

    def p_hat(self, x) -> float:
        return float(self.p_hat_many(np.atleast_1d(x)[None, :])[0])

    def u_hat_many(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return self.pot.u_many(x) - self.p_hat_many(x)

    def u_hat(self, x) -> float:
        return float(self.u_hat_many(np.atleast_1d(x)[None, :])[0])

    def grad_hat(self, x):
        """D(U - Phat); the potential part is exact, Phat by central FD."""
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        return self.pot.grad(x) - self._fd_grad_p(x)

    def hess_hat(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        return self.pot.hess(x) - self._fd_hess_p(x)

    def _fd_step(self) -> float:
        return min(1e-5, self.a * math.sqrt(self.eps) * 1e-3)

    def _fd_grad_p(self, x):
        d = x.size
        h = self._fd_step()
        pts = np.concatenate(
            [x[None, :] + h * np.eye(d), x[None, :] - h * np.eye(d)]
        )
        vals = self.p_hat_many(pts)
        return (vals[:d] - vals[d:]) / (2.0 * h)

    def _fd_hess_p(self, x):
        d = x.size
        h = self._fd_step()
        out = np.zeros((d, d))
        p0 = self.p_hat(x)
        eye = np.eye(d)
        for i in range(d):
            pp = self.p_hat(x + h * eye[i])
            pm = self.p_hat(x - h * eye[i])
            out[i, i] = (pp - 2.0 * p0 + pm) / (h * h)
            for j in range(i + 1, d):
                vpp = self.p_hat(x + h * eye[i] + h * eye[j])
                vpm = self.p_hat(x + h * eye[i] - h * eye[j])
                vmp = self.p_hat(x - h * eye[i] + h * eye[j])
                vmm = self.p_hat(x - h * eye[i] - h * eye[j])
                out[i, j] = out[j, i] = (vpp - vpm - vmp + vmm) / (4 * h * h)
        return out


def build_perturbation(pot: Potential, geom: BasinGeometry, eps: float,
                       a: float = 2.0, kappa: float | None = None,
                       w: float | None = None, cutoff: Cutoff | None = None,
                       saddle=None) -> Perturbation:
    """Construct the saddle-flattening perturbation at temperature eps.

    Defaults: w = sigma^2/2 with sigma^2 the per-coordinate second
    moment of the unit-ball proposal; kappa = half its admissible upper
    bound min{c_d, 1} lambda_u, where c_d = w/(2(d-1)).

    In d=1 the tangent space is empty, so Phat vanishes identically and
    the returned perturbation is flagged trivial (no support
    precondition applies).

    Raises:
        ValueError: nonpositive eps or a, or kappa out of range.
        WellDefinednessError: the support ball B(s, rho a sqrt(eps))
            does not fit inside half the tube radius r0/2.
    """
    if eps <= 0 or a <= 0:
        raise ValueError("eps and a must be positive")
    cutoff = cutoff or default_cutoff()
    fr = build_saddle_frame(pot, geom, saddle)
    d = pot.dim
    if w is None:
        w = uniform_ball_second_moment(d) / 2.0

    if d == 1:
        kap = 0.0 if kappa is None else float(kappa)
        pert = Perturbation(pot, geom, fr, eps, a, kap, w, 0.0, 2.0,
                            cutoff, trivial=True)
        pert._k_matrix = np.zeros((1, 1))
        return pert

    c_d = w / (2.0 * (d - 1))
    kappa_max = min(c_d, 1.0) * fr.lambda_u
    if kappa is None:
        kappa = 0.5 * kappa_max
    if not (0.0 < kappa < kappa_max):
        raise ValueError(
            "kappa must lie in (0, %.6g); got %.6g" % (kappa_max, kappa)
        )

    lam_small = float(fr.lambda_tangential[0])
    abar = math.sqrt(
        2.0 * (lam_small / fr.lambda_u) * cutoff.sup_abs_derivative
    )
    rho = 2.0 * (1.0 + abar)
    support = rho * a * math.sqrt(eps)
    if not (support < geom.r0 / 2.0):
        raise WellDefinednessError(
            "support radius rho*a*sqrt(eps) = %.6g does not fit in r0/2 ="
            " %.6g; shrink a or eps" % (support, geom.r0 / 2.0)
        )
    pert = Perturbation(pot, geom, fr, eps, a, float(kappa), w, abar, rho,
                        cutoff)
    pert._k_matrix = fr.tangential_hessian - kappa * fr.projector
    return pert


def identity_perturbation(pot: Potential, geom: BasinGeometry,
                          eps: float, saddle=None) -> Perturbation:
    """Phat = 0: lets the drift machinery run on the unperturbed U."""
    fr = build_saddle_frame(pot, geom, saddle)
    pert = Perturbation(pot, geom, fr, eps, 0.0, 0.0,
                        uniform_ball_second_moment(pot.dim) / 2.0,
                        0.0, 2.0, default_cutoff(), trivial=True)
    pert._k_matrix = np.zeros((pot.dim, pot.dim))
    return pert


@dataclass
class PerturbationReport:
    """Verification summary; check values, never raises on failure."""

    boundary_normal_grad_max: float
    boundary_normal_hess_max: float
    saddle_eigenvalues: tuple
    saddle_eigenvalues_expected: tuple
    saddle_eigenvalue_rel_error: float
    c0_lower_bound: float
    r1: float
    scaling_constants: tuple  # sup |D^i Phat| / (a sqrt(eps))^(2-i), i=0,1,2
    support_radius: float
    all_ok: bool

    def to_dict(self) -> dict:
        return {
            "boundary_normal_grad_max": self.boundary_normal_grad_max,
            "boundary_normal_hess_max": self.boundary_normal_hess_max,
            "saddle_eigenvalues": list(self.saddle_eigenvalues),
            "saddle_eigenvalues_expected": list(
                self.saddle_eigenvalues_expected
            ),
            "saddle_eigenvalue_rel_error": self.saddle_eigenvalue_rel_error,
            "c0_lower_bound": self.c0_lower_bound,
            "r1": self.r1,
            "scaling_constants": list(self.scaling_constants),
            "support_radius": self.support_radius,
            "all_ok": self.all_ok,
        }


def verify_perturbation(pert: Perturbation, n_boundary: int = 50,
                        n_radii: int = 24, n_angles: int = 64
                        ) -> PerturbationReport:
    """Check the construction's defining properties numerically.

    (i)   Phat does not disturb normal dynamics on the boundary:
          |DPhat . n| and |n^T D^2Phat n| at boundary points.
    (ii)  D^2 Uhat at the saddle has eigenvalues {-lambda_u, kappa}.
    (iii) c0 = min |DUhat(x)| / |x - s| over shells r in (0, r1],
          r1 = min(r0/2, 2 rho a sqrt(eps)): the perturbed saddle is
          nondegenerate in every direction.
    (iv)  sup |D^i Phat| / (a sqrt(eps))^(2-i): the scaling constants
          that make the construction uniform in eps.
    """
    fr = pert.frame
    s = fr.saddle
    d = pert.pot.dim
    sq = pert.a * math.sqrt(pert.eps) if pert.a > 0 else 1.0

    # (i) boundary flatness in the normal direction, across the active
    # stretch of the boundary (the y-cutoff support and a margin).
    gmax = hmax = 0.0
    if d == 2 and not pert.trivial:
        ts = np.linspace(-1.2, 1.2, n_boundary) * sq
        tan = fr.tangents[0]
        for t in ts:
            b = wrap(s + t * tan)
            xi, _ = project_boundary(pert.geom, b)
            g = pert._fd_grad_p(xi)
            h = pert._fd_hess_p(xi)
            gmax = max(gmax, abs(float(g @ fr.normal)))
            hmax = max(hmax, abs(float(fr.normal @ h @ fr.normal)))

    # (ii) saddle Hessian of Uhat
    hs = pert.hess_hat(s)
    eigs = np.sort(np.linalg.eigvalsh(hs))
    if pert.trivial:
        expected = np.sort(np.linalg.eigvalsh(pert.pot.hess(s)))
    else:
        expected = np.sort(np.array(
            [-fr.lambda_u] + [pert.kappa] * (d - 1)
        ))
    rel = float(np.max(np.abs(eigs - expected) / np.maximum(np.abs(expected),
                                                            1e-12)))

    # (iii) gradient lower bound near the saddle
    r1 = min(pert.geom.r0 / 2.0, 2.0 * pert.support_radius)
    radii = np.geomspace(r1 / 200.0, r1, n_radii)
    c0 = math.inf
    if d == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        ang = np.linspace(0.0, 2.0 * math.pi, n_angles, endpoint=False)
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    for r in radii:
        for v in dirs:
            x = wrap(s + r * v)
            gn = float(np.linalg.norm(pert.grad_hat(x)))
            c0 = min(c0, gn / r)

    # (iv) scaling constants over the support
    c_sup = [0.0, 0.0, 0.0]
    if not pert.trivial:
        rng = np.random.default_rng(0)
        pts = s[None, :] + pert.support_radius * (
            2.0 * rng.random((200, d)) - 1.0
        )
        pts = wrap(pts.ravel()).reshape(-1, d)
        for x in pts:
            p = abs(pert.p_hat(x))
            g = float(np.linalg.norm(pert._fd_grad_p(x)))
            h = float(np.linalg.norm(pert._fd_hess_p(x), 2))
            c_sup[0] = max(c_sup[0], p / sq**2)
            c_sup[1] = max(c_sup[1], g / sq)
            c_sup[2] = max(c_sup[2], h)

    ok = (
        gmax <= 1e-4
        and hmax <= 1e-4
        and rel <= 0.02
        and c0 > 0.0
        and all(math.isfinite(c) for c in c_sup)
    )
    return PerturbationReport(
        boundary_normal_grad_max=gmax,
        boundary_normal_hess_max=hmax,
        saddle_eigenvalues=tuple(float(e) for e in eigs),
        saddle_eigenvalues_expected=tuple(float(e) for e in expected),
        saddle_eigenvalue_rel_error=rel,
        c0_lower_bound=float(c0),
        r1=float(r1),
        scaling_constants=tuple(c_sup),
        support_radius=float(pert.support_radius),
        all_ok=bool(ok),
    )
