"""Tests for grid discretizations, exact gaps, and comparison checks."""

import math
import warnings

import numpy as np
import pytest

from tempergap.errors import ResolutionWarning, SizeError
from tempergap.kernels import TemperatureLadder, build_ladder
from tempergap.kernels.driver import Trace
from tempergap.potentials import from_callables
from tempergap.spectral import (
    GridKernel,
    discretize_mrw_1d,
    discretize_st,
    empirical_gap,
    first_level_gap_check,
    holley_stroock_check,
    lyapunov_gap_bound_check,
    overlap_quantities,
    spectral_gap,
    tv_corollary_check,
)


def flat_potential():
    return from_callables(1, lambda x: 0.0, name="flat")


def random_metropolis(rng, n, scale=1.0):
    """Metropolis kernel from random symmetric conductances (test oracle)."""
    W = rng.random((n, n))
    W = 0.5 * (W + W.T)
    np.fill_diagonal(W, 0.0)
    Q = W / (W.sum(axis=1).max() * 1.05)
    np.fill_diagonal(Q, 1.0 - Q.sum(axis=1))
    logp = scale * rng.normal(size=n)
    A = np.exp(np.minimum(logp[None, :], logp[:, None]) - logp[:, None])
    P = Q * A
    np.fill_diagonal(P, P.diagonal() + 1.0 - P.sum(axis=1))
    pi = np.exp(logp - logp.max())
    pi /= pi.sum()
    return GridKernel(P, pi, label="random-%d" % n), Q, np.exp(logp)


def grid_labels(geom, xs):
    """Basin label of each grid point from the sorted boundary arcs."""
    pts, labels = geom.arc_table()
    k = np.searchsorted(pts, xs, side="right")
    return np.asarray(labels)[(k - 1) % len(pts)]


def series_trace(x, name="f"):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    return Trace(
        descriptor={"kind": "synthetic"}, seed=0, stream_id=0,
        steps=arr.shape[0], thin=1, observables=(name,), backend="python",
        data={name: arr}, counters={}, wall_time_s=0.0,
    )


TWO_STATE_LAZY = np.array([[0.75, 0.25], [0.25, 0.75]])


# ---------------------------------------------------------------------
# GridKernel construction and restriction
# ---------------------------------------------------------------------

class TestGridKernel:
    def test_accepts_valid_kernel(self):
        k = GridKernel(TWO_STATE_LAZY, np.array([0.5, 0.5]), label="two")
        assert k.m_total == 2
        assert not k.is_sparse
        assert k.balance_error() <= 1e-12

    def test_rejects_bad_row_sums(self):
        P = np.array([[0.8, 0.1], [0.25, 0.75]])
        with pytest.raises(ValueError, match="row sums"):
            GridKernel(P, np.array([0.5, 0.5]))

    def test_rejects_negative_entries(self):
        P = np.array([[1.1, -0.1], [0.25, 0.75]])
        with pytest.raises(ValueError, match="negative"):
            GridKernel(P, np.array([0.5, 0.5]))

    def test_rejects_detailed_balance_violation(self):
        P = np.array([[0.5, 0.5], [0.9, 0.1]])
        with pytest.raises(ValueError, match="detailed balance"):
            GridKernel(P, np.array([0.5, 0.5]))

    def test_rejects_bad_stationary_weights(self):
        with pytest.raises(ValueError, match="positive"):
            GridKernel(TWO_STATE_LAZY, np.array([1.0, 0.0]))
        with pytest.raises(ValueError, match="sum to 1"):
            GridKernel(TWO_STATE_LAZY, np.array([0.6, 0.6]))
        with pytest.raises(ValueError, match="one weight per state"):
            GridKernel(TWO_STATE_LAZY, np.array([0.2, 0.3, 0.5]))

    def test_restrict_conditions_the_measure(self):
        rng = np.random.default_rng(42)
        k, _, _ = random_metropolis(rng, 12)
        idx = np.array([1, 3, 4, 7, 9])
        sub = k.restrict(idx)
        assert sub.m_total == 5
        expected = k.pi[idx] / k.pi[idx].sum()
        np.testing.assert_allclose(sub.pi, expected, rtol=1e-14)
        np.testing.assert_allclose(sub.P.sum(axis=1), 1.0, atol=1e-13)
        # off-diagonal entries are unchanged from the parent kernel
        for a, i in enumerate(idx):
            for b, j in enumerate(idx):
                if a != b:
                    assert sub.P[a, b] == k.P[i, j]

    def test_restrict_rejects_bad_index_sets(self):
        k = GridKernel(TWO_STATE_LAZY, np.array([0.5, 0.5]))
        with pytest.raises(ValueError):
            k.restrict(np.array([0, 0]))
        with pytest.raises(ValueError):
            k.restrict(np.array([5]))
        with pytest.raises(ValueError):
            k.restrict(np.array([], dtype=int))


# ---------------------------------------------------------------------
# MRW discretization
# ---------------------------------------------------------------------

class TestDiscretizeMrw:
    def test_three_state_flat_hand_oracle(self):
        # w=1 walk on three flat states: eigenvalues 1, -1/2, -1/2.
        P = np.array([[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]])
        pi = np.full(3, 1.0 / 3)
        assert spectral_gap(GridKernel(P, pi)).gap == pytest.approx(1.5, abs=1e-12)
        lazy = 0.5 * (np.eye(3) + P)
        assert spectral_gap(GridKernel(lazy, pi)).gap == pytest.approx(
            0.75, abs=1e-12
        )

    def test_flat_circulant_cosine_oracle(self):
        M, w = 64, 5
        kern = discretize_mrw_1d(flat_potential(), 1.0, (w + 0.5) / M, M)
        np.testing.assert_allclose(kern.pi, 1.0 / M, rtol=1e-14)
        modes = np.arange(1, M)[:, None]
        eigs = np.cos(2 * np.pi * modes * np.arange(1, w + 1) / M).sum(axis=1) / w
        oracle = 1.0 - eigs.max()
        assert spectral_gap(kern).gap == pytest.approx(oracle, abs=1e-12)

    def test_flat_circulant_oracle_sparse_path(self):
        M, w = 2048, 102
        kern = discretize_mrw_1d(flat_potential(), 1.0, (w + 0.5) / M, M)
        assert kern.is_sparse
        modes = np.arange(1, M)[:, None]
        eigs = np.cos(2 * np.pi * modes * np.arange(1, w + 1) / M).sum(axis=1) / w
        oracle = 1.0 - eigs.max()
        rep = spectral_gap(kern)
        assert rep.method == "iterative"
        assert rep.gap == pytest.approx(oracle, abs=1e-10)

    def test_stationary_vector_is_gibbs(self, dw1_asym):
        M, eps = 128, 0.31
        kern = discretize_mrw_1d(dw1_asym, eps, 0.06, M)
        u = dw1_asym.u_many((np.arange(M) / M)[:, None])
        w = np.exp(-u / eps)
        np.testing.assert_allclose(kern.pi, w / w.sum(), rtol=1e-13)

    def test_construction_battery_detailed_balance(self, dw1_sym, dw1_asym):
        kernels = []
        for pot in (dw1_sym, dw1_asym):
            for eps, h, M in [(0.5, 0.1, 64), (0.3, 0.045, 128),
                              (0.2, 0.02, 256)]:
                for lazy in (False, True):
                    kernels.append(discretize_mrw_1d(pot, eps, h, M, lazy=lazy))
        kernels.append(discretize_mrw_1d(flat_potential(), 1.0, 0.2, 64))
        for kern in kernels:
            assert kern.balance_error() <= 1e-12
            rows = kern.P.sum(axis=1)
            assert np.abs(rows - 1.0).max() <= 1e-12

    def test_restriction_conditions_gibbs(self, dw1_sym, geom_dw1_sym):
        M, eps, h = 128, 0.4, 0.07
        kern = discretize_mrw_1d(dw1_sym, eps, h, M, restriction=1,
                                 geom=geom_dw1_sym)
        xs = np.arange(M) / M
        labels = grid_labels(geom_dw1_sym, xs)
        idx = np.flatnonzero(labels == 1)
        assert kern.m_total == idx.size
        u = dw1_sym.u_many(xs[idx][:, None])
        w = np.exp(-u / eps)
        np.testing.assert_allclose(kern.pi, w / w.sum(), rtol=1e-13)
        assert kern.balance_error() <= 1e-12
        assert spectral_gap(kern).gap > 0

    def test_restriction_other_basin_and_lazy(self, dw1_asym, geom_dw1_asym):
        for label in (1, 2):
            kern = discretize_mrw_1d(dw1_asym, 0.3, 0.05, 128,
                                     restriction=label, lazy=True,
                                     geom=geom_dw1_asym)
            assert kern.balance_error() <= 1e-12
            assert 0 < kern.m_total < 128

    def test_lazy_halves_the_gap(self, dw1_sym):
        for eps, h, M in [(0.5, 0.1, 64), (0.3, 0.05, 128), (0.25, 0.03, 96),
                          (0.7, 0.2, 64)]:
            plain = spectral_gap(discretize_mrw_1d(dw1_sym, eps, h, M)).gap
            lazy = spectral_gap(
                discretize_mrw_1d(dw1_sym, eps, h, M, lazy=True)
            ).gap
            assert lazy == pytest.approx(0.5 * plain, abs=1e-12)

    def test_lazy_halves_gap_on_random_kernels(self):
        rng = np.random.default_rng(123)
        for _ in range(20):
            n = int(rng.integers(10, 40))
            k, _, _ = random_metropolis(rng, n)
            lazy = GridKernel(0.5 * (np.eye(n) + k.P), k.pi)
            g = spectral_gap(k).gap
            gl = spectral_gap(lazy).gap
            assert gl == pytest.approx(0.5 * g, abs=1e-12)

    def test_marginal_resolution_warns(self, dw1_sym):
        with pytest.warns(ResolutionWarning):
            discretize_mrw_1d(dw1_sym, 0.2, 1.5 / 128, 128)

    def test_unreachable_neighbor_raises(self, dw1_sym):
        with pytest.raises(ValueError, match="reaches no grid neighbor"):
            discretize_mrw_1d(dw1_sym, 0.2, 0.5 / 128, 128)

    def test_argument_validation(self, dw1_sym, dw2):
        with pytest.raises(ValueError, match="one-dimensional"):
            discretize_mrw_1d(dw2, 0.3, 0.1, 64)
        with pytest.raises(ValueError, match="at least 32"):
            discretize_mrw_1d(dw1_sym, 0.3, 0.1, 16)
        with pytest.raises(ValueError, match="eps"):
            discretize_mrw_1d(dw1_sym, -0.3, 0.1, 64)
        with pytest.raises(ValueError, match="eps"):
            discretize_mrw_1d(dw1_sym, 0.3, 1.5, 64)
        with pytest.raises(ValueError, match="basin label"):
            discretize_mrw_1d(dw1_sym, 0.3, 0.1, 64, restriction=3)


# ---------------------------------------------------------------------
# ST discretization
# ---------------------------------------------------------------------

class TestDiscretizeSt:
    def test_single_level_equals_lazy_mrw(self, dw1_sym):
        one = TemperatureLadder(eps=np.array([0.7]), h=np.array([0.1]),
                                betas=np.array([1.0 / 0.7]), nu_bar=1.0,
                                eta=0.5)
        k_st = discretize_st(dw1_sym, one, 64)
        k_mrw = discretize_mrw_1d(dw1_sym, 0.7, 0.1, 64, lazy=True)
        assert np.array_equal(k_st.dense(), k_mrw.dense())
        assert np.array_equal(k_st.pi, k_mrw.pi)

    def test_stationary_weights_per_level(self, dw1_sym):
        lad = build_ladder(1.0, 0.5, 1.0, 0.5)
        M = 64
        kern = discretize_st(dw1_sym, lad, M)
        assert kern.m_total == M * lad.n_levels
        u = dw1_sym.u_many((np.arange(M) / M)[:, None])
        w = np.exp(-u[None, :] / lad.eps[:, None]).ravel()
        np.testing.assert_allclose(kern.pi, w / w.sum(), rtol=1e-12)
        assert kern.balance_error() <= 1e-12

    def test_tempering_beats_cold_walk(self, dw1_sym):
        # Regression fixture: the tempering chain's exact gap exceeds the
        # cold lazy walk's by orders of magnitude at eps=0.2.
        lad = build_ladder(1.0, 0.2, 1.0, 0.5)
        gap_st = spectral_gap(discretize_st(dw1_sym, lad, 128)).gap
        gap_cold = spectral_gap(
            discretize_mrw_1d(dw1_sym, 0.2, 0.02, 128, lazy=True)
        ).gap
        assert gap_st > gap_cold
        assert gap_st > 100 * gap_cold
        assert gap_st == pytest.approx(7.420041e-02, rel=1e-4)

    def test_size_cap_without_iterative_flag(self, dw1_sym):
        lad = build_ladder(1.0, 0.1, 1.0, 0.5)  # 11 levels
        with pytest.raises(SizeError):
            discretize_st(dw1_sym, lad, 2048)

    def test_cold_level_with_unreachable_neighbor_raises(self, dw1_sym):
        lad = TemperatureLadder(eps=np.array([1.0, 0.1]),
                                h=np.array([0.5, 0.003]),
                                betas=np.array([1.0, 10.0]), nu_bar=1.0,
                                eta=0.5)
        with pytest.raises(ValueError, match="reaches no grid neighbor"):
            discretize_st(dw1_sym, lad, 64)

    def test_dimension_check(self, dw2):
        lad = build_ladder(1.0, 0.5, 1.0, 0.5)
        with pytest.raises(ValueError, match="one-dimensional"):
            discretize_st(dw2, lad, 64)


# ---------------------------------------------------------------------
# Exact spectral gap
# ---------------------------------------------------------------------

class TestSpectralGap:
    def test_two_state_gap_is_2p(self):
        for p in (0.05, 0.1, 0.3, 0.45):
            P = np.array([[1 - p, p], [p, 1 - p]])
            rep = spectral_gap(GridKernel(P, np.array([0.5, 0.5])))
            assert rep.gap == pytest.approx(2 * p, abs=1e-13)

    def test_identity_kernel_gap_zero(self):
        k = GridKernel(np.eye(5), np.full(5, 0.2))
        assert spectral_gap(k).gap == pytest.approx(0.0, abs=1e-13)

    def test_dense_and_iterative_agree(self):
        rng = np.random.default_rng(3)
        k, _, _ = random_metropolis(rng, 50)
        gd = spectral_gap(k, method="dense")
        gi = spectral_gap(k, method="iterative")
        assert gd.method == "dense"
        assert gi.method == "iterative"
        assert abs(gd.gap - gi.gap) <= 1e-9
        assert gi.residual <= 1e-10

    def test_iterative_handles_negative_second_eigenvalue(self):
        P = np.array([[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]])
        rep = spectral_gap(GridKernel(P, np.full(3, 1.0 / 3)),
                           method="iterative")
        assert rep.gap == pytest.approx(1.5, abs=1e-10)

    def test_validation(self):
        k = GridKernel(TWO_STATE_LAZY, np.array([0.5, 0.5]))
        with pytest.raises(ValueError, match="method"):
            spectral_gap(k, method="magic")
        with pytest.raises(ValueError, match="two states"):
            spectral_gap(GridKernel(np.array([[1.0]]), np.array([1.0])))


# ---------------------------------------------------------------------
# Empirical gap from autocorrelation decay
# ---------------------------------------------------------------------

def simulate_grid_chain(kern, steps, seed, start=0):
    """Direct simulation of a dense GridKernel (cumulative-row sampling)."""
    cum = np.cumsum(kern.dense(), axis=1)
    us = np.random.default_rng(seed).random(steps)
    pos = np.empty(steps, dtype=np.int64)
    j = start
    n_max = kern.m_total - 1
    for t in range(steps):
        j = int(np.searchsorted(cum[j], us[t]))
        if j > n_max:
            j = n_max
        pos[t] = j
    return pos


class TestEmpiricalGap:
    def test_white_noise_flag(self):
        x = np.random.default_rng(0).normal(size=20000)
        rep = empirical_gap(series_trace(x), "f")
        assert rep.white_noise
        assert rep.gap == pytest.approx(0.95)

    def test_two_state_chain_recovers_gap(self):
        rng = np.random.default_rng(11)
        flips = rng.random(10**6) < 0.1
        x = (np.cumsum(flips) % 2).astype(np.float64)
        rep = empirical_gap(series_trace(x), "f", n_boot=60)
        assert not rep.white_noise
        assert rep.gap == pytest.approx(0.2, abs=0.02)
        assert rep.ci_low <= 0.2 <= rep.ci_high

    def test_matches_exact_gap_within_factor_two(self, dw1_sym, geom_dw1_sym):
        eps = 0.3
        kern = discretize_mrw_1d(dw1_sym, eps, 0.1, 64)
        exact = spectral_gap(kern).gap
        pos = simulate_grid_chain(kern, 400000, seed=5)
        labels = grid_labels(geom_dw1_sym, np.arange(64) / 64)
        f = (labels[pos] == 1).astype(np.float64)
        rep = empirical_gap(series_trace(f, "basin"), "basin", n_boot=50)
        assert not rep.white_noise
        assert 0.5 * exact <= rep.gap <= 2.0 * exact

    def test_rejects_vector_observable(self):
        arr = np.random.default_rng(1).normal(size=(20000, 3))
        tr = Trace(descriptor={}, seed=0, stream_id=0, steps=20000, thin=1,
                   observables=("v",), backend="python", data={"v": arr},
                   counters={}, wall_time_s=0.0)
        with pytest.raises(ValueError, match="scalar"):
            empirical_gap(tr, "v")

    def test_rejects_short_series(self):
        x = np.random.default_rng(2).normal(size=12000)
        with pytest.raises(ValueError, match="10\\^4"):
            empirical_gap(series_trace(x), "f", burn_in=4000)

    def test_rejects_constant_series(self):
        with pytest.raises(ValueError, match="constant"):
            empirical_gap(series_trace(np.ones(20000)), "f")


# ---------------------------------------------------------------------
# Gap comparison for densities with bounded ratio
# ---------------------------------------------------------------------

def metropolis_oracle(p, Q):
    """Independent Metropolis construction used to cross-check kernels."""
    P = Q * np.minimum(1.0, p[None, :] / p[:, None])
    np.fill_diagonal(P, P.diagonal() + 1.0 - P.sum(axis=1))
    return P


class TestHolleyStroock:
    def test_random_instances(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            n = int(rng.integers(20, 51))
            _, Q, _ = random_metropolis(rng, n)
            p1 = np.exp(rng.normal(size=n))
            p2 = np.exp(rng.normal(size=n))
            rep = holley_stroock_check(p1, p2, Q)
            assert rep.passed
            assert rep.gap1 > 0 and rep.gap2 > 0
            assert rep.lower <= rep.upper

    def test_equal_densities_collapse_bounds(self):
        rng = np.random.default_rng(8)
        _, Q, p = random_metropolis(rng, 30)
        rep = holley_stroock_check(p, p, Q)
        assert rep.ratio_min == rep.ratio_max == 1.0
        assert rep.lower == rep.upper == rep.gap2
        assert rep.passed
        assert rep.gap1 == pytest.approx(rep.gap2, abs=1e-12)

    def test_scaled_density_gives_identical_kernel(self):
        rng = np.random.default_rng(9)
        _, Q, p = random_metropolis(rng, 25)
        c = 37.5
        np.testing.assert_allclose(
            metropolis_oracle(p, Q), metropolis_oracle(c * p, Q), rtol=1e-13
        )
        rep = holley_stroock_check(p, c * p, Q)
        assert rep.passed
        assert rep.gap1 == pytest.approx(rep.gap2, abs=1e-12)

    def test_validation(self):
        Q = np.array([[0.5, 0.5], [0.5, 0.5]])
        good = np.array([1.0, 2.0])
        with pytest.raises(ValueError, match="positive"):
            holley_stroock_check(np.array([1.0, 0.0]), good, Q)
        with pytest.raises(ValueError, match="one state space"):
            holley_stroock_check(np.array([1.0, 2.0, 3.0]), good, Q)
        with pytest.raises(ValueError, match="symmetric"):
            holley_stroock_check(good, good,
                                 np.array([[0.2, 0.8], [0.5, 0.5]]))
        with pytest.raises(ValueError, match="row-stochastic"):
            holley_stroock_check(good, good,
                                 np.array([[0.5, 0.4], [0.4, 0.5]]))


# ---------------------------------------------------------------------
# Drift-based gap lower bound
# ---------------------------------------------------------------------

def drift_certificate(kern, V, mask, margin=0.9):
    """Extract a valid (lam1, b1) for a given V and small set (test helper)."""
    pv = kern.P @ V
    lam1 = margin * float((1.0 - pv[~mask] / V[~mask]).min())
    b1 = float((pv - (1.0 - lam1) * V)[mask].max()) * 1.1 + 1e-9
    return lam1, b1


class TestLyapunovBound:
    def test_whole_space_small_set(self):
        rng = np.random.default_rng(10)
        k, _, _ = random_metropolis(rng, 20)
        rep = lyapunov_gap_bound_check(k, np.ones(20), np.arange(20),
                                       lam1=0.3, b1=0.5)
        assert rep.drift_ok
        assert rep.alpha1 == pytest.approx(rep.gap, abs=1e-12)
        assert rep.passed

    def test_discretized_basin_instance(self, dw1_sym, geom_dw1_sym):
        eps, M = 0.25, 256
        kern = discretize_mrw_1d(dw1_sym, eps, 0.5 * eps * eps, M,
                                 restriction=1, geom=geom_dw1_sym)
        xs = np.arange(M) / M
        idx = np.flatnonzero(grid_labels(geom_dw1_sym, xs) == 1)
        x1 = xs[idx]
        u1 = dw1_sym.u_many(x1[:, None])
        V = np.maximum(np.exp((u1 - u1.min()) / (2 * eps)), 1.0)
        m1 = geom_dw1_sym.minima[0][0]
        dist = np.abs((x1 - m1 + 0.5) % 1.0 - 0.5)
        mask = dist <= 0.25 * math.sqrt(eps)
        lam1, b1 = drift_certificate(kern, V, mask)
        assert lam1 > 0
        rep = lyapunov_gap_bound_check(kern, V, np.flatnonzero(mask), lam1, b1)
        assert rep.drift_ok
        assert rep.worst_violation <= 1e-12
        assert rep.bound > 0
        assert rep.passed

    def test_random_instances(self):
        rng = np.random.default_rng(12)
        for _ in range(30):
            n = int(rng.integers(15, 31))
            k, _, _ = random_metropolis(rng, n)
            V = 1.0 / np.sqrt(k.pi)
            V = V / V.min()
            mask = np.zeros(n, dtype=bool)
            mask[np.argsort(k.pi)[-(n // 2):]] = True
            lam1, b1 = drift_certificate(k, V, mask)
            if lam1 <= 0:
                continue
            rep = lyapunov_gap_bound_check(k, V, mask, lam1, b1)
            assert rep.drift_ok
            assert rep.passed

    def test_drift_violation_reports_worst_state(self):
        rng = np.random.default_rng(13)
        k, _, _ = random_metropolis(rng, 20)
        V = 1.0 / np.sqrt(k.pi)
        V = V / V.min()
        rep = lyapunov_gap_bound_check(k, V, np.arange(5), lam1=0.99, b1=1e-6)
        assert not rep.drift_ok
        assert not rep.passed
        assert 0 <= rep.worst_state < 20
        assert rep.worst_violation > 0
        assert math.isnan(rep.bound)

    def test_validation(self):
        k = GridKernel(TWO_STATE_LAZY, np.array([0.5, 0.5]))
        ok = np.ones(2)
        with pytest.raises(ValueError, match=">= 1"):
            lyapunov_gap_bound_check(k, np.array([0.5, 1.0]), [0, 1], 0.1, 1.0)
        with pytest.raises(ValueError, match="lam1"):
            lyapunov_gap_bound_check(k, ok, [0, 1], -0.1, 1.0)
        with pytest.raises(ValueError, match="at least two states"):
            lyapunov_gap_bound_check(k, ok, [0], 0.1, 1.0)
        with pytest.raises(ValueError, match="one value per state"):
            lyapunov_gap_bound_check(k, np.ones(3), [0, 1], 0.1, 1.0)


# ---------------------------------------------------------------------
# Total-variation contraction bound
# ---------------------------------------------------------------------

class TestTvContraction:
    def test_stationary_start_stays_at_zero(self):
        k = GridKernel(TWO_STATE_LAZY, np.array([0.5, 0.5]))
        rep = tv_corollary_check(k, k.pi, 20)
        assert rep.applicable
        assert rep.passed
        assert rep.lhs.max() <= 1e-12

    def test_two_state_lazy_is_the_equality_case(self):
        k = GridKernel(TWO_STATE_LAZY, np.array([0.5, 0.5]))
        rep = tv_corollary_check(k, np.array([1.0, 0.0]), 30)
        assert rep.applicable
        assert rep.passed
        assert rep.chi_l2 == pytest.approx(1.0, abs=1e-14)
        np.testing.assert_allclose(rep.lhs, rep.rhs, rtol=1e-12, atol=1e-15)

    def test_negative_eigenvalue_is_inapplicable(self):
        p = 0.9
        P = np.array([[1 - p, p], [p, 1 - p]])
        rep = tv_corollary_check(GridKernel(P, np.array([0.5, 0.5])),
                                 np.array([1.0, 0.0]), 10)
        assert not rep.applicable
        assert not rep.passed

    def test_tempering_chain_point_mass(self, dw1_sym, geom_dw1_sym):
        kern = discretize_st(dw1_sym, build_ladder(1.0, 0.25, 1.0, 0.5), 64)
        m1 = geom_dw1_sym.minima[0][0]
        cold_start = (kern.m_total // 64 - 1) * 64 + int(round(m1 * 64)) % 64
        nu0 = np.zeros(kern.m_total)
        nu0[cold_start] = 1.0
        rep = tv_corollary_check(kern, nu0, 200)
        assert rep.applicable
        assert rep.passed
        assert rep.max_violation <= 1e-9

    def test_validation(self):
        k = GridKernel(TWO_STATE_LAZY, np.array([0.5, 0.5]))
        with pytest.raises(ValueError, match="probability"):
            tv_corollary_check(k, np.array([0.7, 0.7]), 5)
        with pytest.raises(ValueError, match="probability"):
            tv_corollary_check(k, np.array([1.5, -0.5]), 5)
        with pytest.raises(ValueError, match="m_max"):
            tv_corollary_check(k, np.array([0.5, 0.5]), 0)


# ---------------------------------------------------------------------
# Tempering overlap quantities
# ---------------------------------------------------------------------

class TestOverlap:
    def test_symmetric_wells_have_full_overlap(self, dw1_sym, geom_dw1_sym):
        lad = build_ladder(1.0, 0.2, 1.0, 0.5)
        rep = overlap_quantities(dw1_sym, geom_dw1_sym, lad)
        assert rep.gamma_pt == pytest.approx(1.0, abs=1e-9)
        assert rep.c_bv_hat == pytest.approx(0.0, abs=1e-9)
        assert rep.bound_gamma == pytest.approx(1.0, abs=1e-8)
        assert rep.delta_pt >= rep.bound_delta - 1e-4
        assert rep.delta_pt <= 1.0
        assert rep.u_inf == pytest.approx(1.0, abs=1e-3)

    def test_asymmetric_wells(self, dw1_asym, geom_dw1_asym):
        lad = build_ladder(1.0, 0.2, 1.0, 0.5)
        rep = overlap_quantities(dw1_asym, geom_dw1_asym, lad)
        assert rep.gamma_pt < 1.0
        assert rep.c_bv_hat > 0.01
        assert rep.gamma_pt >= rep.bound_gamma - 1e-3
        assert rep.delta_pt >= rep.bound_delta - 1e-4
        assert 0 < rep.bound_gamma < 1

    def test_coarse_quadrature_warns(self, dw1_sym, geom_dw1_sym):
        lad = build_ladder(1.0, 0.25, 1.0, 0.5)
        with pytest.warns(ResolutionWarning):
            overlap_quantities(dw1_sym, geom_dw1_sym, lad, m_quad=64)

    def test_two_dimensional_quadrature(self, dw2, geom_dw2):
        lad = build_ladder(0.5, 0.2, 2.0, 0.5)
        rep = overlap_quantities(dw2, geom_dw2, lad)
        assert 0 < rep.gamma_pt <= 1.0
        assert 0 < rep.delta_pt <= 1.0
        assert rep.gamma_pt >= rep.bound_gamma - 1e-3
        assert rep.delta_pt >= rep.bound_delta - 1e-3


# ---------------------------------------------------------------------
# Hot-level gap normalization
# ---------------------------------------------------------------------

class TestFirstLevel:
    def test_flat_is_stable_and_positive(self):
        rep = first_level_gap_check(flat_potential(), 1.0, 0.1, 256)
        assert rep.min_normalized > 0
        assert rep.stability_ratio <= 5.0
        assert rep.passed

    def test_double_well_is_positive_everywhere(self, dw1_sym):
        rep = first_level_gap_check(dw1_sym, 1.0, 0.1, 256)
        assert rep.min_normalized > 0
        assert np.all(rep.gaps > 0)
        assert np.all(rep.normalized > 0)

    def test_doubling_h_increases_flat_gap(self):
        flat = flat_potential()
        g1 = spectral_gap(discretize_mrw_1d(flat, 1.0, 0.05, 256)).gap
        g2 = spectral_gap(discretize_mrw_1d(flat, 1.0, 0.1, 256)).gap
        assert g2 > g1

    def test_validation(self, dw2):
        with pytest.raises(ValueError, match="1-d"):
            first_level_gap_check(dw2, 1.0, 0.5, 64)
        with pytest.raises(ValueError, match="eps0"):
            first_level_gap_check(flat_potential(), -1.0, 0.5, 64)
