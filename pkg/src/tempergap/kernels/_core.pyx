# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled chain driver for the builtin potentials.

Consumes uniforms from the chain's bit generator in exactly the order
documented in ``tempergap.kernels.steps`` and evaluates the closed-form
energies with the same operation order as the scalar Python evaluators,
so traces match the pure-Python driver bit for bit (the extension is
compiled with -ffp-contract=off to keep that true).
"""

import numpy as np

from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport M_PI, cos, exp, floor, sin
from numpy.random cimport bitgen_t

cdef const char* _CAPSULE_NAME = "BitGenerator"

# Counter slots (shared contract with the Python driver):
# 0 met_proposals, 1 met_accepts, 2 met_holds, 3 swap_attempts,
# 4 swap_accepts, 5 swap_holds, 6 temp_resamples, 7 temp_holds,
# 8 restricted_rejections.

# Observable opcodes: 0 x, 1 U, 2 basin, 3 level, 4 cold_x, 5 cold_U,
# 6 cold_basin, 7 levels_x, 8 levels_U.


cdef bitgen_t* _bitgen(object capsule) except NULL:
    if not PyCapsule_IsValid(capsule, _CAPSULE_NAME):
        raise ValueError("invalid bit-generator capsule")
    return <bitgen_t*> PyCapsule_GetPointer(capsule, _CAPSULE_NAME)


cdef inline double _u(int pot_id, double p0, double p1, double offset,
                      double* x) noexcept nogil:
    cdef double t, s
    if pot_id == 1:
        t = 2.0 * M_PI * x[0]
        return (0.5 * (1.0 - cos(2.0 * t))
                + 0.5 * p0 * (1.0 - cos(t))
                + 0.5 * p1 * (1.0 + sin(t))
                - offset)
    t = 2.0 * M_PI * x[0]
    s = 2.0 * M_PI * x[1]
    return (0.5 * (1.0 - cos(2.0 * t))
            + 0.5 * p0 * (1.0 - cos(s))
            + 0.5 * p1 * (1.0 + sin(t))
            - offset)


cdef inline void _ball(bitgen_t* bg, double* x, double h, int d,
                       double* y) noexcept nogil:
    cdef double v[4]
    cdef double vv, vi, t
    cdef int i
    while True:
        vv = 0.0
        for i in range(d):
            vi = 2.0 * bg.next_double(bg.state) - 1.0
            v[i] = vi
            vv += vi * vi
        if vv <= 1.0:
            break
    for i in range(d):
        t = x[i] + h * v[i]
        t -= floor(t)
        if t >= 1.0:
            t = 0.0
        y[i] = t


cdef inline bint _accept(bitgen_t* bg, double ux, double uy,
                         double eps) noexcept nogil:
    cdef double u = bg.next_double(bg.state)
    cdef double logr = -(uy - ux) / eps
    return logr >= 0.0 or u < exp(logr)


cdef inline long _arc(double x, double[::1] pts, long[::1] labels) noexcept nogil:
    cdef long nb = pts.shape[0]
    cdef long idx = 0
    if nb == 0:
        return 0
    while idx < nb and pts[idx] <= x:
        idx += 1
    return labels[(idx - 1 + nb) % nb]


cdef inline long _resample(bitgen_t* bg, double uval, double[::1] betas,
                           double[::1] scratch) noexcept nogil:
    cdef long n = betas.shape[0]
    cdef long k
    cdef double m, p, total, c, acc
    for k in range(n):
        scratch[k] = -betas[k] * uval
    m = scratch[0]
    for k in range(1, n):
        if scratch[k] > m:
            m = scratch[k]
    total = 0.0
    for k in range(n):
        p = exp(scratch[k] - m)
        scratch[k] = p
        total += p
    c = bg.next_double(bg.state) * total
    acc = 0.0
    for k in range(n):
        acc += scratch[k]
        if c < acc:
            return k
    return n - 1


def energy_probe(int pot_id, double p0, double p1, double offset, x):
    """Evaluate the compiled closed-form energy at one point (parity tests)."""
    cdef double xs[4]
    cdef int i
    xs[0] = xs[1] = xs[2] = xs[3] = 0.0
    for i in range(min(len(x), 4)):
        xs[i] = x[i]
    return _u(pot_id, p0, p1, offset, xs)


def run_mrw(object capsule, int pot_id, double p0, double p1, double offset,
            double eps, double h, int lazy, long basin_label,
            double[::1] arc_pts, long[::1] arc_labels,
            double[::1] x0, long steps, long thin,
            long[::1] codes, long[::1] col_off,
            double[:, ::1] out, long[::1] counters):
    """Metropolis random walk (optionally lazy or basin-restricted, d=1)."""
    cdef bitgen_t* bg = _bitgen(capsule)
    cdef int d = <int> x0.shape[0]
    if d > 4:
        raise ValueError("compiled driver supports dim <= 4")
    cdef double xs[4]
    cdef double y[4]
    cdef int i
    for i in range(d):
        xs[i] = x0[i]
    cdef double ux = _u(pot_id, p0, p1, offset, xs)
    cdef double uy
    cdef bint restricted = basin_label > 0
    cdef long step, rec = 0, kk, c, w
    cdef long met_p = 0, met_a = 0, met_h = 0, res_r = 0
    cdef long n_codes = codes.shape[0]

    with nogil:
        for step in range(1, steps + 1):
            if lazy and bg.next_double(bg.state) < 0.5:
                met_h += 1
            else:
                _ball(bg, xs, h, d, y)
                uy = _u(pot_id, p0, p1, offset, y)
                met_p += 1
                if _accept(bg, ux, uy, eps):
                    if restricted and _arc(y[0], arc_pts, arc_labels) != basin_label:
                        res_r += 1
                    else:
                        for i in range(d):
                            xs[i] = y[i]
                        ux = uy
                        met_a += 1
            if step % thin == 0:
                for kk in range(n_codes):
                    c = col_off[kk]
                    if codes[kk] == 0:
                        for i in range(d):
                            out[rec, c + i] = xs[i]
                    elif codes[kk] == 1:
                        out[rec, c] = ux
                    else:  # basin
                        if restricted:
                            out[rec, c] = <double> basin_label
                        else:
                            out[rec, c] = <double> _arc(xs[0], arc_pts, arc_labels)
                rec += 1

    counters[0] += met_p
    counters[1] += met_a
    counters[2] += met_h
    counters[8] += res_r


def run_pt(object capsule, int pot_id, double p0, double p1, double offset,
           double[::1] betas, double[::1] eps, double[::1] hs,
           double[::1] arc_pts, long[::1] arc_labels,
           double[:, ::1] x0, long steps, long thin,
           long[::1] codes, long[::1] col_off,
           double[:, ::1] out, long[::1] counters):
    """Parallel tempering: swap sweep, lazy replica update, swap sweep."""
    cdef bitgen_t* bg = _bitgen(capsule)
    cdef long n_lev = x0.shape[0]
    cdef int d = <int> x0.shape[1]
    if d > 4:
        raise ValueError("compiled driver supports dim <= 4")
    xarr = np.array(x0, dtype=np.float64, copy=True)
    uarr = np.empty(n_lev, dtype=np.float64)
    cdef double[:, ::1] X = xarr
    cdef double[::1] U = uarr
    cdef double y[4]
    cdef double uu, draw, log_a, uy, tmp
    cdef int i, phase
    cdef long step, rec = 0, kk, c, k, j, ii
    cdef long n_pairs = n_lev - 1
    cdef long met_p = 0, met_a = 0, met_h = 0
    cdef long sw_at = 0, sw_ac = 0, sw_h = 0
    cdef long n_codes = codes.shape[0]

    with nogil:
        for k in range(n_lev):
            U[k] = _u(pot_id, p0, p1, offset, &X[k, 0])
        for step in range(1, steps + 1):
            for phase in range(3):
                if phase != 1:
                    if n_pairs == 0:
                        continue
                    if bg.next_double(bg.state) < 0.5:
                        sw_h += 1
                        continue
                    uu = bg.next_double(bg.state)
                    ii = <long> (uu * n_pairs)
                    if ii >= n_pairs:
                        ii = n_pairs - 1
                    draw = bg.next_double(bg.state)
                    log_a = (betas[ii + 1] - betas[ii]) * (U[ii + 1] - U[ii])
                    sw_at += 1
                    if log_a >= 0.0 or draw < exp(log_a):
                        for i in range(d):
                            tmp = X[ii, i]
                            X[ii, i] = X[ii + 1, i]
                            X[ii + 1, i] = tmp
                        tmp = U[ii]
                        U[ii] = U[ii + 1]
                        U[ii + 1] = tmp
                        sw_ac += 1
                else:
                    if bg.next_double(bg.state) < 0.5:
                        met_h += 1
                        continue
                    uu = bg.next_double(bg.state)
                    j = <long> (uu * n_lev)
                    if j >= n_lev:
                        j = n_lev - 1
                    _ball(bg, &X[j, 0], hs[j], d, y)
                    uy = _u(pot_id, p0, p1, offset, y)
                    met_p += 1
                    if _accept(bg, U[j], uy, eps[j]):
                        for i in range(d):
                            X[j, i] = y[i]
                        U[j] = uy
                        met_a += 1
            if step % thin == 0:
                for kk in range(n_codes):
                    c = col_off[kk]
                    if codes[kk] == 4:  # cold_x
                        for i in range(d):
                            out[rec, c + i] = X[n_lev - 1, i]
                    elif codes[kk] == 5:  # cold_U
                        out[rec, c] = U[n_lev - 1]
                    elif codes[kk] == 6:  # cold_basin
                        out[rec, c] = <double> _arc(X[n_lev - 1, 0], arc_pts, arc_labels)
                    elif codes[kk] == 7:  # levels_x
                        for k in range(n_lev):
                            for i in range(d):
                                out[rec, c + k * d + i] = X[k, i]
                    else:  # levels_U
                        for k in range(n_lev):
                            out[rec, c + k] = U[k]
                rec += 1

    counters[0] += met_p
    counters[1] += met_a
    counters[2] += met_h
    counters[3] += sw_at
    counters[4] += sw_ac
    counters[5] += sw_h


def run_st(object capsule, int pot_id, double p0, double p1, double offset,
           double[::1] betas, double[::1] eps, double[::1] hs,
           double[::1] arc_pts, long[::1] arc_labels,
           double[::1] x0, long level0, long steps, long thin,
           long[::1] codes, long[::1] col_off,
           double[:, ::1] out, long[::1] counters):
    """Simulated tempering: level update, lazy move, level update."""
    cdef bitgen_t* bg = _bitgen(capsule)
    cdef long n_lev = betas.shape[0]
    cdef int d = <int> x0.shape[0]
    if d > 4:
        raise ValueError("compiled driver supports dim <= 4")
    scratch_arr = np.empty(n_lev, dtype=np.float64)
    cdef double[::1] scratch = scratch_arr
    cdef double xs[4]
    cdef double y[4]
    cdef int i, phase
    for i in range(d):
        xs[i] = x0[i]
    cdef double ux = _u(pot_id, p0, p1, offset, xs)
    cdef double uy
    cdef long lev = level0
    cdef long step, rec = 0, kk, c
    cdef long met_p = 0, met_a = 0, met_h = 0, t_res = 0, t_hold = 0
    cdef long n_codes = codes.shape[0]

    with nogil:
        for step in range(1, steps + 1):
            for phase in range(3):
                if phase != 1:
                    if bg.next_double(bg.state) < 0.5:
                        t_hold += 1
                    else:
                        lev = _resample(bg, ux, betas, scratch)
                        t_res += 1
                else:
                    if bg.next_double(bg.state) < 0.5:
                        met_h += 1
                        continue
                    _ball(bg, xs, hs[lev], d, y)
                    uy = _u(pot_id, p0, p1, offset, y)
                    met_p += 1
                    if _accept(bg, ux, uy, eps[lev]):
                        for i in range(d):
                            xs[i] = y[i]
                        ux = uy
                        met_a += 1
            if step % thin == 0:
                for kk in range(n_codes):
                    c = col_off[kk]
                    if codes[kk] == 0:
                        for i in range(d):
                            out[rec, c + i] = xs[i]
                    elif codes[kk] == 1:
                        out[rec, c] = ux
                    elif codes[kk] == 3:
                        out[rec, c] = <double> lev
                    else:  # basin
                        out[rec, c] = <double> _arc(xs[0], arc_pts, arc_labels)
                rec += 1

    counters[0] += met_p
    counters[1] += met_a
    counters[2] += met_h
    counters[6] += t_res
    counters[7] += t_hold
