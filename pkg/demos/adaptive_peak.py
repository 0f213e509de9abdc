"""Adaptive PHT-spline solution of the peak problem on an exact quadratic annulus.

Only the solution space is refined; the geometry data are checked to be
bit-identical at the end of the run. The uniform cubic B-spline curve on the
same geometry is printed for comparison.

    python3 demos/adaptive_peak.py
"""

from giftiga.geometry import build_named_geometry
from giftiga.harness import error_at_ndof, run_adaptive, run_convergence, uniform_cubic_space

result = run_adaptive("annulus-peak", steps=5)
geo = build_named_geometry("annulus_pht")
uniform = run_convergence("annulus-peak", geo, uniform_cubic_space(geo), 5)

print("step  ndof  cells  est_err      l2_rel_err   uniform_at_ndof")
for h in result.history:
    try:
        ref = "%.3e" % error_at_ndof(uniform, h.ndof)
    except ValueError:
        ref = "-"
    print("%4d %5d %6d  %.3e  %.3e    %s" % (h.step, h.ndof, h.ncells, h.est_err_sq**0.5, h.l2_rel_err, ref))

# the last T-mesh, one leaf per line
print(result.history[-1].tmesh.splitlines()[0])
