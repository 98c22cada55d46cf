import time

import numpy as np

from tempergap.basins import extract_boundary, frame, project_boundary
from tempergap.drift import DriftParams, drift_at
from tempergap.perturbation import build_perturbation, identity_perturbation
from tempergap.potentials import builtin_potential
from tempergap.torus import wrap

t0 = time.time()
pot = builtin_potential("DW2", {"c_y": 6.0, "mu": 0.1})
geom = extract_boundary(pot)
print("geom: %.2fs r0=%.4f comps=%d verts=%s" % (
    time.time() - t0, geom.r0, len(geom.components),
    [c.shape[0] for c in geom.components]))
t0 = time.time()
cache = geom.cache()
print("cache: %.2fs" % (time.time() - t0))

eps, a = 0.05, 0.03
pert = build_perturbation(pot, geom, eps, a=a)
print("pert: rho=%.3f abar=%.3f support=%.4f kappa=%.3f lam_u=%.3f" % (
    pert.rho, pert.abar, pert.support_radius, pert.kappa, pert.frame.lambda_u))
s = pert.frame.saddle
m1 = np.asarray(geom.minima[0], float)
print("saddle:", s, "m1:", m1, "hess trace at s:", np.trace(pot.hess(s)))

params = DriftParams.for_temperature(eps, eta=0.05, gamma=0.5, a=a)
print("h =", params.h)

# --- single drift_at timings per representative point ---
# near-saddle boundary point: project a point near s onto boundary, offset in
fr = frame(geom, s)
x_nsb = wrap(s - 0.5 * params.h * fr.normal)
t0 = time.time()
v, e = drift_at(pert, geom, params, x_nsb)
print("nsb drift %.3e err %.1e  [%.2fs]  lam=%.3f" % (
    v, e, time.time() - t0, -v / (params.gamma * params.h**2)))

# near-saddle interior (dist ~ half support)
x_nsi = wrap(s + np.array([0.0, 0.0]) - 0.04 * fr.normal)
print("nsi label", cache.lookup(x_nsi))
t0 = time.time()
v, e = drift_at(pert, geom, params, x_nsi)
print("nsi drift %.3e err %.1e  [%.2fs]  lam=%.3f" % (
    v, e, time.time() - t0, -v / (params.gamma * params.h**2)))

# far boundary: vertex far from saddle
verts = np.concatenate([np.atleast_2d(c) for c in geom.components])
dvs = verts - s
dvs -= np.round(dvs)
far_v = verts[np.argmax(np.einsum("ij,ij->i", dvs, dvs))]
frf = frame(geom, far_v)
x_fb = wrap(far_v - 0.5 * params.h * frf.normal)
t0 = time.time()
v, e = drift_at(pert, geom, params, x_fb)
print("fb  drift %.3e err %.1e  [%.2fs]  lam=%.3f" % (
    v, e, time.time() - t0, -v / (params.gamma * params.h**2)))

# far interior: near but not at m1
x_fi = wrap(m1 + np.array([0.05, 0.07]))
print("fi label", cache.lookup(x_fi))
t0 = time.time()
v, e = drift_at(pert, geom, params, x_fi)
print("fi  drift %.3e err %.1e  [%.2fs]  lam=%.3f" % (
    v, e, time.time() - t0, -v / (params.gamma * params.h**2)))

# ball edge (worst |grad|): dist a*sqrt(eps) from m1
r_ball = a * np.sqrt(eps)
x_be = wrap(m1 + np.array([r_ball, 0.0]))
t0 = time.time()
v, e = drift_at(pert, geom, params, x_be)
print("ball-edge drift %.3e err %.1e [%.2fs] lam=%.3f" % (
    v, e, time.time() - t0, -v / (params.gamma * params.h**2)))

# minimum itself
t0 = time.time()
v, e = drift_at(pert, geom, params, m1)
print("m1  drift %.3e err %.1e  [%.2fs]" % (v, e, time.time() - t0))

# unperturbed at the near-saddle boundary point: expect drift >= 0
ident = identity_perturbation(pot, geom, eps)
t0 = time.time()
v, e = drift_at(ident, geom, params, x_nsb)
print("UNPERT nsb drift %.3e err %.1e [%.2fs]" % (v, e, time.time() - t0))
v, e = drift_at(ident, geom, params, x_nsi)
print("UNPERT nsi drift %.3e err %.1e" % (v, e))
