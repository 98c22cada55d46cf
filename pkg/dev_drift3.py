"""Feasibility sweep: max interior drift predictor along the boundary tangent.

D(y) = -lam_u + Uhat_t''(y) - Uhat_t'(y)^2/eps must be < 0 for all y
outside the K-ball (the saddle strata are far from m1, so effectively
for all y in [0, beyond-support]).  Uhat_t(y) = g(y) - Phat_t(y),
g(y) = (c_y/2)(1-cos 2 pi y), Phat_t(y) = 0.5*(lam_t-kappa)*y^2*chi(y^2/(a^2 eps)).
"""
import numpy as np

LAM_U = 7.8 * np.pi**2            # 76.977
C_Y = 6.0
LAM_T = 2.0 * C_Y * np.pi**2      # 118.435
KAPPA_FRAC = 0.5                  # kappa = 0.5 * kappa_max
W_BALL = 0.25 / 2.0               # sigma^2/2, d=2
C_D = W_BALL / 2.0
KAPPA = KAPPA_FRAC * min(C_D, 1.0) * LAM_U
R0 = 0.25


def g(y):
    return 0.5 * C_Y * (1.0 - np.cos(2 * np.pi * y))


class ExpCutoff:
    name = "exp-partition"

    def __init__(self):
        xs = np.linspace(0.5, 1.0, 200001)[1:-1]
        a = np.exp(-1.0 / (1.0 - xs))
        b = np.exp(-1.0 / (xs - 0.5))
        da = -a / (1.0 - xs) ** 2
        db = b / (xs - 0.5) ** 2
        der = (da * b - a * db) / (a + b) ** 2
        self.sup_abs_derivative = float(np.max(np.abs(der)) * 1.01)

    def __call__(self, s):
        s = np.asarray(s, dtype=np.float64)
        out = np.ones_like(s)
        hi = s >= 1.0
        mid = (s > 0.5) & ~hi
        a = np.exp(-1.0 / np.where(1.0 - s[mid] > 0, 1.0 - s[mid], 1.0))
        b = np.exp(-1.0 / np.where(s[mid] - 0.5 > 0, s[mid] - 0.5, 1.0))
        out[hi] = 0.0
        out[mid] = a / (a + b)
        return out


class SmoothstepCutoff:
    name = "smoothstep"
    sup_abs_derivative = 3.75

    def __call__(self, s):
        s = np.asarray(s, dtype=np.float64)
        u = np.clip(2.0 * s - 1.0, 0.0, 1.0)
        return 1.0 - u**3 * (10.0 - 15.0 * u + 6.0 * u**2)


def dmax_profile(eps, a, chi):
    a2eps = a * a * eps
    supp = a * np.sqrt(eps)
    ystar = np.sqrt((LAM_T - LAM_U) * eps) / LAM_T
    yhi = max(1.1 * supp, 1.2 * ystar)
    ys = np.linspace(1e-5, yhi, 4000)
    fd = 1e-7

    def uhat(y):
        return g(y) - 0.5 * (LAM_T - KAPPA) * y * y * chi(y * y / a2eps)

    up = (uhat(ys + fd) - uhat(ys - fd)) / (2 * fd)
    upp = (uhat(ys + fd) - 2 * uhat(ys) + uhat(ys - fd)) / fd**2
    d = -LAM_U + upp - up * up / eps
    i = int(np.argmax(d))
    return float(d[i]), float(ys[i])


for chi in (ExpCutoff(), SmoothstepCutoff()):
    abar = np.sqrt(2.0 * (LAM_T / LAM_U) * chi.sup_abs_derivative)
    rho = 2.0 * (1.0 + abar)
    print("== %s: sup|chi'|=%.3f abar=%.3f rho=%.3f ==" % (
        chi.name, chi.sup_abs_derivative, abar, rho))
    for eps in (0.05, 0.025, 0.01, 0.005, 0.002, 0.001, 5e-4, 2e-4, 1e-4):
        amax = R0 / 2.0 / (rho * np.sqrt(eps)) * 0.999
        best = (np.inf, None, None)
        for a in np.linspace(0.02, amax, 60):
            dm, ym = dmax_profile(eps, a, chi)
            if dm < best[0]:
                best = (dm, a, ym)
        dm, a, ym = best
        tag = "PASS-able" if dm < -1.0 else ("marginal" if dm < 0 else "fail")
        print("  eps=%-8g amax=%.4f  best a=%.4f  Dmax=%+9.2f at y=%.5f  %s"
              % (eps, amax, a, dm, ym, tag))
