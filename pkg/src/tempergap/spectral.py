"""Grid-discretized kernels, exact spectral gaps, and comparison checks.

The continuous samplers in :mod:`tempergap.kernels` mix too slowly for
their convergence rates to be measured directly, so this module builds
exact transition matrices of grid analogs on the d=1 torus: the
Metropolis random walk (plain, lazy, or restricted to one basin) and the
simulated-tempering chain on ``M*(N+1)`` states.  Every matrix is
reversible by construction and validated against row-stochasticity and
detailed balance at 1e-12 before any eigensolve.

Spectral gaps are computed as ``1 - lambda_2`` of the symmetrized kernel
``D^{1/2} P D^{-1/2}`` -- dense symmetric eigendecomposition up to 2000
states, deflated Lanczos iteration above.  On top of the exact gaps sit
executable forms of the classical comparison inequalities (Holley--
Stroock density comparison, the Lyapunov drift lower bound, the
total-variation contraction bound for lazy chains) and the tempering
overlap quantities ``gamma_pt``/``delta_pt`` with their lower bounds.
The checks return structured reports; nothing raises on a mathematical
failure -- ``passed`` fields record the verdicts.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .errors import ConvergenceError, ResolutionWarning, SizeError

__all__ = [
    "GridKernel",
    "SpectralReport",
    "EmpiricalGapReport",
    "ComparisonReport",
    "GapBoundReport",
    "TVBoundReport",
    "OverlapReport",
    "FirstLevelReport",
    "discretize_mrw_1d",
    "discretize_st",
    "spectral_gap",
    "empirical_gap",
    "holley_stroock_check",
    "lyapunov_gap_bound_check",
    "tv_corollary_check",
    "overlap_quantities",
    "first_level_gap_check",
]

_DENSE_CAP = 2000       # largest matrix handed to the dense eigensolver
_ST_SIZE_CAP = 20000    # discretize_st refuses larger spaces w/o opt-in
_ROW_TOL = 1e-12
_DB_TOL = 1e-12


# ---------------------------------------------------------------------
# GridKernel
# ---------------------------------------------------------------------

@dataclass
class GridKernel:
    """Row-stochastic reversible transition matrix with its stationary law.

    ``P`` is dense (ndarray) up to 2000 states and sparse CSR above.
    Construction validates nonnegativity, unit row sums, and detailed
    balance ``max_ij |pi_i P_ij - pi_j P_ji| <= 1e-12``; an invalid
    matrix never becomes a ``GridKernel``.
    """

    P: object
    pi: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.pi = np.asarray(self.pi, dtype=np.float64)
        if not scipy.sparse.issparse(self.P):
            self.P = np.asarray(self.P, dtype=np.float64)
            if self.P.ndim != 2 or self.P.shape[0] != self.P.shape[1]:
                raise ValueError("P must be square")
        if self.pi.shape != (self.P.shape[0],):
            raise ValueError("pi must have one weight per state")
        self.validate()

    @property
    def m_total(self) -> int:
        return self.P.shape[0]

    @property
    def is_sparse(self) -> bool:
        return scipy.sparse.issparse(self.P)

    def validate(self):
        """Raise ValueError unless all GridKernel invariants hold."""
        if np.any(self.pi <= 0):
            raise ValueError("stationary weights must be strictly positive")
        if abs(float(self.pi.sum()) - 1.0) > 1e-9:
            raise ValueError("stationary weights must sum to 1")
        if self.is_sparse:
            if self.P.nnz and self.P.data.min() < 0:
                raise ValueError("transition matrix has negative entries")
            rows = np.asarray(self.P.sum(axis=1)).ravel()
        else:
            if self.P.size and self.P.min() < 0:
                raise ValueError("transition matrix has negative entries")
            rows = self.P.sum(axis=1)
        err = float(np.abs(rows - 1.0).max())
        if err > _ROW_TOL:
            raise ValueError("row sums deviate from 1 by %.3e" % err)
        err = self.balance_error()
        if err > _DB_TOL:
            raise ValueError("detailed balance violated by %.3e" % err)

    def balance_error(self) -> float:
        """max_ij |pi_i P_ij - pi_j P_ji| (the detailed-balance defect)."""
        if self.is_sparse:
            flux = scipy.sparse.diags(self.pi) @ self.P
            diff = (flux - flux.T).tocoo()
            return float(np.abs(diff.data).max()) if diff.nnz else 0.0
        flux = self.pi[:, None] * self.P
        return float(np.abs(flux - flux.T).max())

    def restrict(self, indices) -> "GridKernel":
        """Sub-chain on ``indices``: refused exits pile on the diagonal.

        The stationary law of the restriction is the conditioned,
        renormalized restriction of ``pi``.
        """
        idx = _as_index_array(indices, self.m_total)
        if self.is_sparse:
            sub = self.P.tocsr()[idx][:, idx].tolil()
            deficit = 1.0 - np.asarray(sub.sum(axis=1)).ravel()
            sub.setdiag(np.maximum(sub.diagonal() + deficit, 0.0))
            sub = sub.tocsr()
        else:
            sub = self.P[np.ix_(idx, idx)].copy()
            deficit = 1.0 - sub.sum(axis=1)
            di = np.diag_indices(len(idx))
            sub[di] = np.maximum(sub[di] + deficit, 0.0)
        pi = self.pi[idx] / self.pi[idx].sum()
        return GridKernel(sub, pi, label="%s|%d-states" % (self.label, len(idx)))

    def dense(self) -> np.ndarray:
        return self.P.toarray() if self.is_sparse else self.P


def _as_index_array(indices, n):
    idx = np.asarray(indices)
    if idx.dtype == bool:
        if idx.shape != (n,):
            raise ValueError("boolean index mask must have one entry per state")
        idx = np.flatnonzero(idx)
    else:
        idx = idx.astype(np.int64)
        if idx.size == 0:
            raise ValueError("index set is empty")
        if idx.min() < 0 or idx.max() >= n or len(np.unique(idx)) != idx.size:
            raise ValueError("index set must be unique indices in [0, %d)" % n)
    if idx.size == 0:
        raise ValueError("index set is empty")
    return np.sort(idx)


# ---------------------------------------------------------------------
# Discretizers
# ---------------------------------------------------------------------

def _grid_log_weights(pot, eps, M):
    """Grid points i/M and the log Gibbs weights -U(x_i)/eps."""
    xs = np.arange(M) / M
    u = pot.u_many(xs[:, None])
    return xs, -u / float(eps)


def _proposal_counts(w, M):
    """counts[r] = number of step offsets in {-w..-1, 1..w} hitting r mod M."""
    counts = np.zeros(M, dtype=np.float64)
    for delta in range(1, w + 1):
        counts[delta % M] += 1.0
        counts[(-delta) % M] += 1.0
    return counts


def _mrw_matrix(L, w, M, want_sparse):
    """Metropolis matrix for log-weights L with +-w uniform grid proposals.

    Entries are ``counts[j-i]/(2w) * exp(min(L_j, L_i) - L_i)``, so the
    stationary flux ``pi_i P_ij`` is symmetric by construction up to
    floating-point rounding.
    """
    counts = _proposal_counts(w, M)
    inv2w = 1.0 / (2.0 * w)
    if not want_sparse:
        idx = (np.arange(M)[None, :] - np.arange(M)[:, None]) % M
        P = counts[idx] * inv2w * np.exp(
            np.minimum(L[None, :], L[:, None]) - L[:, None]
        )
        di = np.diag_indices(M)
        P[di] += 1.0 - P.sum(axis=1)
        P[di] = np.maximum(P[di], 0.0)  # rounding can leave -1ulp
        return P

    base = np.arange(M)
    diag = np.zeros(M)
    rows, cols, vals = [], [], []
    off_sum = np.zeros(M)
    for r in range(1, M):
        if counts[r] == 0.0:
            continue
        c = (base + r) % M
        v = counts[r] * inv2w * np.exp(np.minimum(L[c], L) - L)
        rows.append(base)
        cols.append(c)
        vals.append(v)
        off_sum += v
    diag += counts[0] * inv2w  # offsets that wrap onto the start state
    diag += 1.0 - (off_sum + diag)
    diag = np.maximum(diag, 0.0)  # rounding can leave -1ulp
    rows.append(base)
    cols.append(base)
    vals.append(diag)
    P = scipy.sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(M, M),
    )
    return P.tocsr()


def _lazy(P):
    """(I + P) / 2."""
    if scipy.sparse.issparse(P):
        return (0.5 * P + 0.5 * scipy.sparse.identity(P.shape[0], format="csr")).tocsr()
    Q = 0.5 * P
    Q[np.diag_indices(P.shape[0])] += 0.5
    return Q


def _grid_basin_labels(geom, xs):
    """Exact arc-table classification of d=1 grid points."""
    pts, labels = geom.arc_table()
    k = np.searchsorted(pts, xs, side="right")
    return np.asarray(labels)[(k - 1) % len(pts)].astype(np.int64)


def _neighbor_width(h, M):
    """w = floor(h*M); errors when no neighbor is reachable, warns at one."""
    w = int(math.floor(float(h) * M))
    if w < 1:
        raise ValueError(
            "step size h=%g reaches no grid neighbor at M=%d (need h >= 1/M)"
            % (h, M)
        )
    if w == 1:
        warnings.warn(
            "h=%g gives a single reachable neighbor per side at M=%d; "
            "the discretization is marginal" % (h, M),
            ResolutionWarning,
            stacklevel=3,
        )
    return w


def discretize_mrw_1d(pot, eps, h, M, lazy=False, restriction=None, geom=None):
    """Exact transition matrix of the d=1 Metropolis random walk on a grid.

    States are ``x_i = i/M``; proposals are uniform over the ``w =
    floor(h*M)`` grid neighbors on each side; moves are accepted with
    probability ``min(1, exp(-(U(x_j)-U(x_i))/eps))`` and rejected mass
    stays on the diagonal.

    Parameters
    ----------
    pot : Potential
        One-dimensional energy landscape.
    eps : float
        Temperature, positive.
    h : float
        Proposal radius in (0, 1].
    M : int
        Grid size, at least 32.
    lazy : bool
        Average with the identity (hold with probability 1/2).
    restriction : int, optional
        Basin label (1 or 2): keep only that basin's grid points and
        fold refused exits onto the diagonal, so the stationary law is
        the conditioned Gibbs measure.
    geom : BasinGeometry, optional
        Precomputed basin geometry for the restriction (extracted on
        demand when omitted).

    Raises
    ------
    ValueError
        Non-1d potential, M < 32, bad eps/h, or h < 1/M (the walk could
        not leave its state).  A single reachable neighbor (h < 2/M)
        warns :class:`ResolutionWarning` instead.
    """
    if pot.dim != 1:
        raise ValueError("discretize_mrw_1d needs a one-dimensional potential")
    M = int(M)
    if M < 32:
        raise ValueError("grid size M must be at least 32")
    if eps <= 0 or not (0.0 < h <= 1.0):
        raise ValueError("need eps > 0 and 0 < h <= 1")
    if restriction not in (None, 1, 2):
        raise ValueError("restriction must be a basin label (1 or 2)")
    w = _neighbor_width(h, M)
    want_sparse = M > _DENSE_CAP

    xs, L = _grid_log_weights(pot, eps, M)
    P = _mrw_matrix(L, w, M, want_sparse)
    pi = np.exp(L - L.max())
    pi /= pi.sum()

    tag = "%s(eps=%g,h=%g,M=%d" % (pot.name, eps, h, M)
    if restriction is not None:
        if geom is None:
            from .basins import extract_boundary

            geom = extract_boundary(pot)
        labels = _grid_basin_labels(geom, xs)
        idx = np.flatnonzero(labels == restriction)
        if idx.size < 2:
            raise ValueError(
                "basin %d holds %d grid points; refine M" % (restriction, idx.size)
            )
        kern = GridKernel(P, pi, label=tag + ")").restrict(idx)
        P, pi = kern.P, kern.pi
        tag += ",basin=%d" % restriction
    if lazy:
        P = _lazy(P)
        tag += ",lazy"
    return GridKernel(P, pi, label=tag + ")")


def discretize_st(pot, ladder, M, iterative=False):
    """Exact transition matrix of d=1 simulated tempering on a grid.

    The state space is ``(level k, grid point j)`` with ``M*(N+1)``
    states, indexed ``k*M + j``.  One step composes temperature update,
    Metropolis update at the current level, temperature update -- each
    holding with probability 1/2, exactly as the continuous sampler
    does.  The stationary weights are ``exp(-U(x_j)/eps_k)`` normalized
    over the whole product space.

    Parameters
    ----------
    pot : Potential
        One-dimensional energy landscape.
    ladder : TemperatureLadder
        Levels with per-level step sizes.
    M : int
        Grid size per level, at least 32.
    iterative : bool
        Acknowledge state spaces above 20000 (eigensolves then use the
        Lanczos path; without the flag such sizes raise SizeError).

    Raises
    ------
    SizeError
        ``M*(N+1) > 20000`` without ``iterative=True``.
    ValueError
        Non-1d potential, M < 32, or a level whose step size reaches no
        grid neighbor.
    """
    if pot.dim != 1:
        raise ValueError("discretize_st needs a one-dimensional potential")
    M = int(M)
    if M < 32:
        raise ValueError("grid size M must be at least 32")
    n_lev = ladder.n_levels
    n_tot = M * n_lev
    if n_tot > _ST_SIZE_CAP and not iterative:
        raise SizeError(
            "state space %d = %d levels x %d points exceeds %d; pass "
            "iterative=True to accept a Lanczos-only kernel"
            % (n_tot, n_lev, M, _ST_SIZE_CAP)
        )

    xs = np.arange(M) / M
    u = pot.u_many(xs[:, None])
    eps = np.asarray(ladder.eps, dtype=np.float64)
    Lmat = -u[None, :] / eps[:, None]  # (n_lev, M)

    # Lazy per-level Metropolis blocks, built by the same dense/sparse
    # rule as discretize_mrw_1d so a one-level chain reproduces its
    # matrix bit for bit.
    want_sparse = M > _DENSE_CAP
    blocks = []
    for k in range(n_lev):
        w_k = _neighbor_width(float(ladder.h[k]), M)
        blk = _lazy(_mrw_matrix(Lmat[k], w_k, M, want_sparse))
        blocks.append(scipy.sparse.csr_matrix(blk))
    t_met = scipy.sparse.block_diag(blocks, format="csr")

    # Lazy temperature update: level l is drawn with the normalized
    # Gibbs weight of the current position, independent of the level.
    colmax = Lmat.max(axis=0)
    E = np.exp(Lmat - colmax)
    W = E / E.sum(axis=0)  # W[l, j]
    base = np.arange(M)
    rows, cols, vals = [], [], []
    for k in range(n_lev):
        for l in range(n_lev):
            v = 0.5 * W[l]
            if k == l:
                v = v + 0.5
            rows.append(k * M + base)
            cols.append(l * M + base)
            vals.append(v)
    t_temp = scipy.sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_tot, n_tot),
    ).tocsr()

    P = t_temp @ t_met @ t_temp
    pi = np.exp(Lmat - Lmat.max()).ravel()
    pi /= pi.sum()
    if n_tot <= _DENSE_CAP:
        P = P.toarray()
    label = "ST(%s,levels=%d,M=%d)" % (pot.name, n_lev, M)
    return GridKernel(P, pi, label=label)


# ---------------------------------------------------------------------
# Exact spectral gap
# ---------------------------------------------------------------------

@dataclass
class SpectralReport:
    """Exact-gap result: ``gap = 1 - lambda_2`` of the symmetrized kernel.

    ``lambda_2`` is the second-largest eigenvalue; for lazy kernels the
    gap lies in [0, 1], for general reversible kernels in [0, 2].
    """

    gap: float
    second_eigenvalue: float
    method: str
    residual: float


def _symmetrized(kern):
    s = np.sqrt(kern.pi)
    if kern.is_sparse:
        A = (
            scipy.sparse.diags(s) @ kern.P @ scipy.sparse.diags(1.0 / s)
        ).tocsr()
        return ((A + A.T) * 0.5).tocsr()
    A = kern.P * (s[:, None] / s[None, :])
    return (A + A.T) * 0.5


def spectral_gap(kern: GridKernel, method=None) -> SpectralReport:
    """Spectral gap ``1 - lambda_2`` of a reversible grid kernel.

    Uses a dense symmetric eigendecomposition up to 2000 states and a
    deflated Lanczos iteration (largest-algebraic, with the known top
    eigenvector ``sqrt(pi)`` projected out) above; ``method`` forces
    ``"dense"`` or ``"iterative"``.

    Raises
    ------
    ConvergenceError
        The iterative path exceeded the 1e-10 residual requirement.
    """
    n = kern.m_total
    if n < 2:
        raise ValueError("spectral gap needs at least two states")
    if method not in (None, "dense", "iterative"):
        raise ValueError("method must be None, 'dense', or 'iterative'")
    if method is None:
        method = "dense" if n <= _DENSE_CAP else "iterative"
    A = _symmetrized(kern)

    if method == "dense":
        Ad = A.toarray() if scipy.sparse.issparse(A) else A
        vals, vecs = scipy.linalg.eigh(Ad, subset_by_index=(n - 2, n - 1))
        if vals.size < 2:
            # The RRR subset driver can drop members of a tightly
            # clustered (degenerate) spectrum; redo with the full solver.
            vals, vecs = scipy.linalg.eigh(Ad)
            vals, vecs = vals[-2:], vecs[:, -2:]
        lam2 = float(vals[0])
        resid = 0.0
        for i in range(2):
            v = vecs[:, i]
            resid = max(resid, float(np.linalg.norm(Ad @ v - vals[i] * v)))
        return SpectralReport(
            gap=1.0 - lam2, second_eigenvalue=lam2, method="dense", residual=resid
        )

    v1 = np.sqrt(kern.pi)
    v1 /= np.linalg.norm(v1)

    def matvec(x):
        # Shift the known top eigenpair (v1, 1) down to -1 so the
        # largest-algebraic eigenvalue of the operator is lambda_2 even
        # when lambda_2 is negative.
        return A @ x - 2.0 * v1 * (v1 @ x)

    op = scipy.sparse.linalg.LinearOperator((n, n), matvec=matvec, dtype=np.float64)
    try:
        vals, vecs = scipy.sparse.linalg.eigsh(
            op, k=1, which="LA", ncv=min(n, 100), maxiter=100000
        )
    except scipy.sparse.linalg.ArpackNoConvergence as exc:
        raise ConvergenceError("Lanczos iteration did not converge") from exc
    lam2 = float(vals[0])
    v = vecs[:, 0]
    v = v - v1 * (v1 @ v)
    v /= np.linalg.norm(v)
    resid = float(np.linalg.norm(A @ v - lam2 * v))
    if resid > 1e-10:
        raise ConvergenceError(
            "Lanczos eigenpair residual %.3e exceeds 1e-10" % resid
        )
    return SpectralReport(
        gap=1.0 - lam2, second_eigenvalue=lam2, method="iterative", residual=resid
    )


# ---------------------------------------------------------------------
# Empirical gap from trace autocorrelation
# ---------------------------------------------------------------------

@dataclass
class EmpiricalGapReport:
    """Autocorrelation-decay gap estimate with a block-bootstrap CI.

    When ``white_noise`` is set the observable decorrelated within one
    step; ``gap`` is then the lower bound ``1 - rho_lo`` rather than a
    fitted value, and the CI spans up to the maximum possible gap.
    """

    gap: float
    ci_low: float
    ci_high: float
    white_noise: bool
    slope: float
    window: tuple
    tau_int: float
    n_used: int
    rho_lo: float
    rho_hi: float
    n_blocks: int


def _autocorr(x):
    n = len(x)
    xc = x - x.mean()
    var = float(xc @ xc) / n
    if var == 0.0:
        raise ValueError("observable is constant; autocorrelation undefined")
    size = 1 << int(math.ceil(math.log2(2 * n)))
    f = np.fft.rfft(xc, size)
    acf = np.fft.irfft(f * np.conj(f), size)[:n].real / n
    return acf / acf[0]


def _fit_window(rho, rho_lo, rho_hi):
    """Lag range [t_lo, t_hi] where rho decays through [rho_lo, rho_hi]."""
    n = len(rho)
    t_hi = n - 1
    for t in range(1, n):
        if rho[t] < rho_lo or rho[t] <= 0.0:
            t_hi = t - 1
            break
    if t_hi < 1:
        return None  # decorrelated within one step
    t_lo = t_hi
    for t in range(1, t_hi + 1):
        if rho[t] <= rho_hi:
            t_lo = t
            break
    if t_hi == t_lo:
        t_hi = min(t_hi + 1, n - 1)
        if rho[t_hi] <= 0.0 or t_hi == t_lo:
            return None
    return t_lo, t_hi


def _gap_from_series(x, rho_lo, rho_hi):
    rho = _autocorr(x)
    win = _fit_window(rho[: max(2, len(x) // 2)], rho_lo, rho_hi)
    if win is None:
        return None
    t_lo, t_hi = win
    ts = np.arange(t_lo, t_hi + 1)
    slope = np.polyfit(ts, np.log(rho[t_lo : t_hi + 1]), 1)[0]
    return 1.0 - math.exp(slope), slope, win


def empirical_gap(trace, observable, burn_in=0, rho_lo=0.05, rho_hi=0.8,
                  n_blocks=20, n_boot=200, seed=0) -> EmpiricalGapReport:
    """Estimate a chain's spectral gap from one observable's trace.

    Fits ``log rho(t)`` by least squares over the lag window where the
    normalized autocorrelation lies in ``[rho_lo, rho_hi]``; the gap
    estimate is ``1 - exp(slope)``.  The confidence interval is a
    2.5/97.5 percentile bootstrap over ``n_blocks`` non-overlapping
    blocks (block length at least five autocorrelation times).

    Parameters
    ----------
    trace : Trace
        Chain output; ``observable`` must name a scalar column.
    burn_in : int
        Records dropped from the front before analysis.

    Raises
    ------
    ValueError
        Vector-valued observable, constant series, or fewer than 10^4
        records after burn-in.
    """
    col = trace.column(observable)
    if col.ndim != 1:
        raise ValueError(
            "empirical_gap needs a scalar observable; %r has width %d"
            % (observable, col.shape[1])
        )
    x = np.asarray(col, dtype=np.float64)[int(burn_in):]
    n = len(x)
    if n < 10**4:
        raise ValueError(
            "need at least 10^4 records after burn-in, have %d" % n
        )

    fit = _gap_from_series(x, rho_lo, rho_hi)
    if fit is None:
        return EmpiricalGapReport(
            gap=1.0 - rho_lo, ci_low=1.0 - rho_lo, ci_high=2.0,
            white_noise=True, slope=math.nan, window=(0, 0),
            tau_int=0.5, n_used=n, rho_lo=rho_lo, rho_hi=rho_hi,
            n_blocks=n_blocks,
        )
    gap, slope, window = fit
    tau = max(-1.0 / slope, 1.0) if slope < 0 else 1.0

    blk = max(n // int(n_blocks), int(math.ceil(5.0 * tau)))
    n_blk = n // blk
    boots = []
    if n_blk >= 2:
        rng = np.random.default_rng(seed)
        starts = np.arange(n_blk) * blk
        for _ in range(int(n_boot)):
            pick = rng.integers(0, n_blk, n_blk)
            xb = np.concatenate([x[s : s + blk] for s in starts[pick]])
            f = _gap_from_series(xb, rho_lo, rho_hi)
            if f is not None:
                boots.append(f[0])
    if len(boots) >= max(10, int(n_boot) // 4):
        ci_low, ci_high = np.percentile(boots, [2.5, 97.5])
    else:
        ci_low = ci_high = math.nan
    return EmpiricalGapReport(
        gap=float(gap), ci_low=float(ci_low), ci_high=float(ci_high),
        white_noise=False, slope=float(slope), window=window,
        tau_int=float(tau), n_used=n, rho_lo=rho_lo, rho_hi=rho_hi,
        n_blocks=n_blocks,
    )


# ---------------------------------------------------------------------
# Comparison inequalities
# ---------------------------------------------------------------------

@dataclass
class ComparisonReport:
    """Verdict of the two-density gap comparison (Holley--Stroock).

    The gaps of Metropolis chains sharing a symmetric proposal, with
    unnormalized densities whose pointwise ratio lies in [a, b], differ
    by at most a factor ``(b/a)^2``.
    """

    gap1: float
    gap2: float
    ratio_min: float
    ratio_max: float
    lower: float
    upper: float
    passed: bool


def _metropolis_from_density(logp, proposal):
    n = len(logp)
    A = np.exp(np.minimum(logp[None, :], logp[:, None]) - logp[:, None])
    P = proposal * A
    P[np.diag_indices(n)] += 1.0 - P.sum(axis=1)
    pi = np.exp(logp - logp.max())
    pi /= pi.sum()
    return GridKernel(P, pi, label="metropolis-%d" % n)


def holley_stroock_check(p1, p2, proposal, tol=1e-9) -> ComparisonReport:
    """Check the gap-comparison inequality for two Metropolis chains.

    Builds the Metropolis kernels for unnormalized densities ``p1`` and
    ``p2`` over the shared symmetric ``proposal`` matrix, computes both
    exact gaps, and verifies ``(a/b)^2 Gap2 <= Gap1 <= (b/a)^2 Gap2``
    with ``a = min p1/p2`` and ``b = max p1/p2``.

    Raises
    ------
    ValueError
        Nonpositive densities or a non-symmetric / non-stochastic
        proposal.
    """
    p1 = np.asarray(p1, dtype=np.float64)
    p2 = np.asarray(p2, dtype=np.float64)
    Q = np.asarray(proposal, dtype=np.float64)
    if np.any(p1 <= 0) or np.any(p2 <= 0):
        raise ValueError("densities must be strictly positive")
    if p1.shape != p2.shape or Q.shape != (len(p1), len(p1)):
        raise ValueError("densities and proposal must share one state space")
    if np.any(Q < 0) or np.abs(Q.sum(axis=1) - 1.0).max() > 1e-9:
        raise ValueError("proposal must be row-stochastic")
    if np.abs(Q - Q.T).max() > 1e-12:
        raise ValueError("proposal must be symmetric")

    gap1 = spectral_gap(_metropolis_from_density(np.log(p1), Q)).gap
    gap2 = spectral_gap(_metropolis_from_density(np.log(p2), Q)).gap
    r = p1 / p2
    a, b = float(r.min()), float(r.max())
    lower = (a / b) ** 2 * gap2
    upper = (b / a) ** 2 * gap2
    passed = (lower <= gap1 + tol) and (gap1 <= upper + tol)
    return ComparisonReport(
        gap1=gap1, gap2=gap2, ratio_min=a, ratio_max=b,
        lower=lower, upper=upper, passed=passed,
    )


@dataclass
class GapBoundReport:
    """Verdict of the drift-based spectral gap lower bound.

    A verified drift inequality ``PV <= (1 - lam1) V + b1 1_K`` implies
    ``Gap(P) >= alpha1 lam1 / (b1 + alpha1)`` with ``alpha1`` the gap of
    the restriction to K.  ``drift_ok`` False marks a precondition
    failure (worst state reported); the bound is then not evaluated.
    """

    drift_ok: bool
    worst_state: int
    worst_violation: float
    alpha1: float
    gap: float
    bound: float
    passed: bool


def lyapunov_gap_bound_check(kern: GridKernel, V, K_set, lam1, b1,
                             tol=1e-9) -> GapBoundReport:
    """Verify the drift inequality and the gap lower bound it implies.

    Parameters
    ----------
    kern : GridKernel
        Reversible Metropolis-type kernel.
    V : array
        Candidate drift function, entrywise >= 1.
    K_set : index array or boolean mask
        Small set whose restricted chain supplies ``alpha1``.
    lam1, b1 : float
        Claimed drift rate and offset, both positive.

    Raises
    ------
    ValueError
        V < 1 somewhere, or nonpositive lam1/b1.
    """
    V = np.asarray(V, dtype=np.float64)
    if V.shape != (kern.m_total,):
        raise ValueError("V must assign one value per state")
    if np.any(V < 1.0):
        raise ValueError("drift function must be >= 1 everywhere")
    if lam1 <= 0 or b1 <= 0:
        raise ValueError("need lam1 > 0 and b1 > 0")
    idx = _as_index_array(K_set, kern.m_total)
    if idx.size < 2:
        raise ValueError("small set K must contain at least two states")
    ind_k = np.zeros(kern.m_total)
    ind_k[idx] = 1.0

    pv = kern.P @ V
    slack = pv - ((1.0 - lam1) * V + b1 * ind_k)
    worst = int(np.argmax(slack))
    worst_violation = float(slack[worst])
    if worst_violation > 1e-12:
        return GapBoundReport(
            drift_ok=False, worst_state=worst, worst_violation=worst_violation,
            alpha1=math.nan, gap=math.nan, bound=math.nan, passed=False,
        )

    alpha1 = spectral_gap(kern.restrict(idx)).gap
    gap = spectral_gap(kern).gap
    bound = alpha1 * lam1 / (b1 + alpha1)
    return GapBoundReport(
        drift_ok=True, worst_state=worst, worst_violation=worst_violation,
        alpha1=alpha1, gap=gap, bound=bound, passed=gap >= bound - tol,
    )


@dataclass
class TVBoundReport:
    """Verdict of the total-variation contraction bound for lazy chains.

    ``applicable`` is False when the kernel has negative eigenvalues
    (the bound assumes a non-negative definite chain); the inequality is
    then reported as inapplicable rather than asserted.
    """

    applicable: bool
    passed: bool
    max_violation: float
    m_max: int
    gap: float
    chi_l2: float
    lhs: np.ndarray = field(repr=False, default=None)
    rhs: np.ndarray = field(repr=False, default=None)


def tv_corollary_check(kern: GridKernel, nu0, m_max, tol=1e-9) -> TVBoundReport:
    """Check ``TV(nu0 P^m, pi) <= (1/2)(1-gap)^m ||dnu0/dpi - 1||_L2(pi)``.

    Evaluates both sides exactly for ``m = 1..m_max`` by matrix-vector
    products.  Requires a non-negative definite (e.g. lazy) kernel;
    otherwise returns ``applicable=False`` without asserting.

    Raises
    ------
    ValueError
        ``nu0`` is not a probability vector, or ``m_max < 1``.
    """
    nu0 = np.asarray(nu0, dtype=np.float64)
    if nu0.shape != (kern.m_total,):
        raise ValueError("nu0 must assign one mass per state")
    if np.any(nu0 < 0) or abs(float(nu0.sum()) - 1.0) > 1e-9:
        raise ValueError("nu0 must be a probability vector")
    m_max = int(m_max)
    if m_max < 1:
        raise ValueError("m_max must be at least 1")

    A = _symmetrized(kern)
    n = kern.m_total
    if n <= _DENSE_CAP:
        Ad = A.toarray() if scipy.sparse.issparse(A) else A
        lam_min = float(scipy.linalg.eigh(Ad, subset_by_index=(0, 0),
                                          eigvals_only=True)[0])
    else:
        lam_min = float(
            scipy.sparse.linalg.eigsh(A, k=1, which="SA",
                                      return_eigenvectors=False)[0]
        )
    if lam_min < -1e-10:
        return TVBoundReport(
            applicable=False, passed=False, max_violation=math.nan,
            m_max=m_max, gap=math.nan, chi_l2=math.nan,
        )

    gap = spectral_gap(kern).gap
    f = nu0 / kern.pi - 1.0
    chi = float(math.sqrt(np.sum(kern.pi * f * f)))
    P = kern.P
    nu = nu0.copy()
    lhs = np.empty(m_max)
    rhs = np.empty(m_max)
    for m in range(1, m_max + 1):
        nu = (P.T @ nu) if scipy.sparse.issparse(P) else (nu @ P)
        lhs[m - 1] = 0.5 * float(np.abs(nu - kern.pi).sum())
        rhs[m - 1] = 0.5 * (1.0 - gap) ** m * chi
    max_violation = float((lhs - rhs).max())
    return TVBoundReport(
        applicable=True, passed=max_violation <= tol,
        max_violation=max_violation, m_max=m_max, gap=gap, chi_l2=chi,
        lhs=lhs, rhs=rhs,
    )


# ---------------------------------------------------------------------
# Tempering overlap quantities
# ---------------------------------------------------------------------

@dataclass
class OverlapReport:
    """Tempering overlap quantities with their theoretical lower bounds.

    ``gamma_pt`` multiplies the adjacent-level basin-mass ratios along
    the ladder; ``delta_pt`` is the worst normalized overlap of
    adjacent-temperature Gibbs densities within one basin.  The bounds
    are ``exp(-c_m^2 c_bv_hat)`` and ``exp(-nu_bar * u_inf)``.
    """

    gamma_pt: float
    delta_pt: float
    c_bv_hat: float
    bound_gamma: float
    bound_delta: float
    c_m: float
    nu_bar: float
    u_inf: float
    m_quad: int


def _quadrature_grid(pot, geom, m_quad):
    """Cell centers, energies, and basin labels for overlap quadrature."""
    if pot.dim == 1:
        xs = (np.arange(m_quad) + 0.5) / m_quad
        u = pot.u_many(xs[:, None])
        labels = _grid_basin_labels(geom, xs)
        return u, labels
    from .basins import _cell_centers

    cache = geom.cache(m_quad)
    centers = _cell_centers(2, m_quad)
    u = pot.u_many(centers)
    return u, cache.labels.ravel().astype(np.int64)


def _basin_masses(u, labels, eps):
    logw = -u / eps
    w = np.exp(logw - logw.max())
    w /= w.sum()
    m1 = float(w[labels == 1].sum())
    return m1, 1.0 - m1


def overlap_quantities(pot, geom, ladder, m_quad=512, c_m=None,
                       n_eps_bv=64) -> OverlapReport:
    """Compute tempering overlap quantities and their lower bounds.

    All masses and overlaps use one midpoint quadrature at ``m_quad``
    points per axis (exact basin labels in d=1, cached flow labels in
    d=2).  The mass-variation constant integrates ``|d pi_eps(basin)/
    d eps|`` by central finite differences on ``n_eps_bv`` temperatures
    spanning the ladder range.  When ``c_m`` is omitted it is measured
    over the same range via :func:`tempergap.potentials
    .validate_assumptions`.

    Warns ResolutionWarning below 128 quadrature points per axis.
    """
    if pot.dim not in (1, 2):
        raise ValueError("overlap quadrature supports d in {1, 2}")
    m_quad = int(m_quad)
    if m_quad < 128:
        warnings.warn(
            "quadrature resolution %d is below 128 points per axis" % m_quad,
            ResolutionWarning,
            stacklevel=2,
        )
    u, labels = _quadrature_grid(pot, geom, m_quad)
    eps = np.asarray(ladder.eps, dtype=np.float64)
    n_lev = len(eps)

    # Normalized per-level weights on the common grid (n_lev, n_points).
    logw = -u[None, :] / eps[:, None]
    Wn = np.exp(logw - logw.max(axis=1)[:, None])
    Wn /= Wn.sum(axis=1)[:, None]
    in1 = labels == 1
    masses = np.stack([Wn[:, in1].sum(axis=1), Wn[:, ~in1].sum(axis=1)], axis=1)

    gamma_pt = 1.0
    for i in (0, 1):
        prod = 1.0
        for k in range(1, n_lev):
            prod *= min(1.0, masses[k - 1, i] / masses[k, i])
        gamma_pt = min(gamma_pt, prod) if i else prod

    delta_pt = 1.0
    for k in range(n_lev - 1):
        overlap = np.minimum(Wn[k], Wn[k + 1])
        for i, mask in ((0, in1), (1, ~in1)):
            o = float(overlap[mask].sum())
            delta_pt = min(delta_pt, o / masses[k, i], o / masses[k + 1, i])

    eps_lo, eps_hi = float(eps.min()), float(eps.max())
    if eps_hi <= eps_lo:
        eps_hi = eps_lo * (1.0 + 1e-6)
    grid = np.linspace(eps_lo, eps_hi, int(n_eps_bv))
    m1 = np.array([_basin_masses(u, labels, e)[0] for e in grid])
    c_bv = float(np.trapezoid(np.abs(np.gradient(m1, grid)), grid))

    if c_m is None:
        from .potentials import validate_assumptions

        c_m = validate_assumptions(pot, eps_lo, eps_hi, geom=geom).mass_ratio_constant
    u_inf = float(np.abs(u).max())
    nu_bar = float(ladder.nu_bar)
    return OverlapReport(
        gamma_pt=float(gamma_pt), delta_pt=float(delta_pt), c_bv_hat=c_bv,
        bound_gamma=math.exp(-c_m * c_m * c_bv),
        bound_delta=math.exp(-nu_bar * u_inf),
        c_m=float(c_m), nu_bar=nu_bar, u_inf=u_inf, m_quad=m_quad,
    )


# ---------------------------------------------------------------------
# Hot-level gap normalization
# ---------------------------------------------------------------------

@dataclass
class FirstLevelReport:
    """Normalized hot-level gaps ``gap * exp(2 u_inf / eps) / h^2``.

    The lazy walk's gap carries a factor ``h^2`` and an Arrhenius factor
    ``exp(-2 ||U||_inf / eps)``; after removing both, the remainder
    should be positive and stable (within a factor 5) across mild
    temperatures.
    """

    eps_grid: np.ndarray
    h_values: np.ndarray
    gaps: np.ndarray
    normalized: np.ndarray
    min_normalized: float
    max_normalized: float
    stability_ratio: float
    passed: bool


def first_level_gap_check(pot, eps0, h0, M,
                          eps_grid=(0.5, 0.75, 1.0, 1.5, 2.0)) -> FirstLevelReport:
    """Check the step-size-squared lower bound on hot-level gaps.

    The step-size rule ``h = min(eta eps^2, 1)`` with ``eta = h0 /
    eps0^2`` fixes h at each temperature of ``eps_grid``; the exact gap
    of the lazy discretized walk is computed and normalized by
    ``exp(-2 ||U||_inf / eps) h^2``.  Passes when every normalized value
    is positive and max/min <= 5.
    """
    if pot.dim != 1:
        raise ValueError("first_level_gap_check needs a 1-d potential")
    if eps0 <= 0 or not (0.0 < h0 <= 1.0):
        raise ValueError("need eps0 > 0 and 0 < h0 <= 1")
    eta = float(h0) / float(eps0) ** 2
    xs = np.arange(int(M)) / int(M)
    u_inf = float(np.abs(pot.u_many(xs[:, None])).max())

    eps_arr = np.asarray(sorted(eps_grid), dtype=np.float64)
    hs = np.minimum(eta * eps_arr**2, 1.0)
    gaps = np.empty(len(eps_arr))
    normalized = np.empty(len(eps_arr))
    for i, (e, h) in enumerate(zip(eps_arr, hs)):
        kern = discretize_mrw_1d(pot, float(e), float(h), M, lazy=True)
        gaps[i] = spectral_gap(kern).gap
        normalized[i] = gaps[i] * math.exp(2.0 * u_inf / e) / (h * h)
    lo, hi = float(normalized.min()), float(normalized.max())
    ratio = hi / lo if lo > 0 else math.inf
    return FirstLevelReport(
        eps_grid=eps_arr, h_values=hs, gaps=gaps, normalized=normalized,
        min_normalized=lo, max_normalized=hi, stability_ratio=ratio,
        passed=(lo > 0.0) and (ratio <= 5.0),
    )
