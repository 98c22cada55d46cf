import time

import numpy as np

from tempergap.basins import extract_boundary, project_boundary, project_boundary_many
from tempergap.drift import DriftParams, drift_at
from tempergap.perturbation import build_perturbation
from tempergap.potentials import builtin_potential
from tempergap.torus import torus_displacement, wrap

pot = builtin_potential("DW2", {"c_y": 6.0, "mu": 0.1})
geom = extract_boundary(pot)
geom.cache()
rng = np.random.default_rng(3)

# random tube points: near either boundary line
pts = []
while len(pts) < 4000:
    p = rng.uniform(size=2)
    d = min(abs(p[0] - 0.25), abs(p[0] - 0.75), abs(p[0] - 1.25) % 1.0)
    if d < 0.24:
        pts.append(p)
pts = np.array(pts)

xi_b, d_b = project_boundary_many(geom, pts)
worst_xi, worst_d = 0.0, 0.0
for i in range(len(pts)):
    xi, d = project_boundary(geom, pts[i])
    dd = xi - xi_b[i]
    dd -= np.round(dd)
    worst_xi = max(worst_xi, float(np.abs(dd).max()))
    worst_d = max(worst_d, abs(d - d_b[i]))
print("parity: max|xi diff|=%.2e  max|dist diff|=%.2e" % (worst_xi, worst_d))

# p_hat_many parity vs per-row reference
eps, a = 0.05, 0.03
pert = build_perturbation(pot, geom, eps, a=a)
s = pert.frame.saddle
near_pts = wrap(s[None, :] + 0.07 * (rng.uniform(size=(3000, 2)) - 0.5))
vals = pert.p_hat_many(near_pts)
a2eps = a * a * eps
ref = np.zeros(len(near_pts))
for i, p in enumerate(near_pts):
    d2 = p - s
    d2 -= np.round(d2)
    if d2 @ d2 >= pert.support_radius**2:
        continue
    xi, _ = project_boundary(geom, p)
    z = torus_displacement(xi, p)
    y = torus_displacement(s, xi)
    quad = 0.5 * float(y @ pert._k_matrix @ y)
    cy = pert.cutoff(float(y @ y) / a2eps)
    cz = pert.cutoff(float(z @ z) / (pert.abar**2 * a2eps))
    ref[i] = quad * cy * cz
print("p_hat parity: max|diff|=%.2e  nonzero=%d" % (
    np.abs(vals - ref).max(), int(np.count_nonzero(ref))))

# timing: near-saddle drift_at
params = DriftParams.for_temperature(eps, eta=0.05, gamma=0.5, a=0.2)
x_nsb = wrap(s + np.array([-0.5 * params.h, 0.02]))
t0 = time.time()
d1, e1 = drift_at(pert, geom, params, x_nsb)
t1 = time.time() - t0
print("near-saddle drift_at: %.3f s  (drift=%+.3e err=%.1e)" % (t1, d1, e1))
