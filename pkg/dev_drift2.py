import time

import numpy as np

from tempergap.basins import extract_boundary
from tempergap.drift import DriftParams, drift_at, drift_scan
from tempergap.perturbation import build_perturbation, identity_perturbation
from tempergap.potentials import builtin_potential
from tempergap.torus import wrap

pot = builtin_potential("DW2", {"c_y": 6.0, "mu": 0.1})
geom = extract_boundary(pot)
geom.cache()
eps, a_pert = 0.05, 0.03
pert = build_perturbation(pot, geom, eps, a=a_pert)
m1 = np.asarray(geom.minima[0], float)
params = DriftParams.for_temperature(eps, eta=0.05, gamma=0.5, a=0.2)
gh2 = params.gamma * params.h ** 2

print("== lambda at points just outside the a=0.2 ball (edge %.5f) ==" %
      (0.2 * np.sqrt(eps)))
for r in (0.0452, 0.047, 0.050, 0.060, 0.080):
    d, e = drift_at(pert, geom, params, wrap(m1 + np.array([r, 0.0])))
    print("  +x r=%.4f  drift=%+.3e  err=%.1e  lam=%.3f" % (r, d, e, -d / gh2))

print("== full perturbed scan, budget=500 ==")
t0 = time.time()
rep = drift_scan(pert, geom, params, 500)
dt = time.time() - t0
print("verdict=%s lam=%.4f b=%.4e  n=%d  %.1fs" % (
    rep.verdict, rep.lambda_emp, rep.b_emp, len(rep.points), dt))
print("region_counts:", rep.region_counts)
worst = sorted(rep.points, key=lambda p: p.drift)[-3:]
for p in worst:
    print("  worst drift %+.3e err %.1e region=%s loc=%s" % (
        p.drift, p.err, p.region, np.round(p.location, 4)))
out = [p for p in rep.points if p.region != "inside-minimum-ball"]
lo = sorted(out, key=lambda p: -p.drift / gh2)[:3]
for p in lo:
    print("  lowest lam %.3f region=%s loc=%s drift=%+.3e err=%.1e" % (
        -p.drift / gh2, p.region, np.round(p.location, 4), p.drift, p.err))

print("== identity perturbation scan (expect FAIL) ==")
ident = identity_perturbation(pot, geom, eps)
t0 = time.time()
rep2 = drift_scan(ident, geom, params, 500)
print("verdict=%s lam=%.4f b=%.4e  %.1fs" % (
    rep2.verdict, rep2.lambda_emp, rep2.b_emp, time.time() - t0))
bad = [p for p in rep2.points
       if p.region != "inside-minimum-ball" and p.drift + p.err > -params.tolerance * gh2]
print("violating points: %d (first few)" % len(bad))
for p in bad[:4]:
    print("   region=%s loc=%s drift=%+.3e" % (p.region, np.round(p.location, 4), p.drift))

print("== gamma=0 scan (expect FAIL, lam=0) ==")
p0 = DriftParams(eps=eps, h=params.h, gamma=0.0, a=0.2)
rep3 = drift_scan(pert, geom, p0, 500)
print("verdict=%s lam=%.4f b=%.4e" % (rep3.verdict, rep3.lambda_emp, rep3.b_emp))
