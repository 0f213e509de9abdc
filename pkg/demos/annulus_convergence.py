"""Uniform refinement on the quarter annulus with geometry and solution bases chosen independently.

The geometry stays on its coarse exact NURBS map while the solution basis is
refined. Equivalent parameterizations give identical errors, and a basis
that cannot represent the geometry's own functions still converges at the
optimal rate.

    python3 demos/annulus_convergence.py
"""

from giftiga.harness import records_to_csv, run_convergence

for geometry, solution in [("Q0", "A2"), ("B1", "A2"), ("C1", "A1"), ("A1", "D0")]:
    records = run_convergence("annulus-laplace", geometry, solution, levels=4, start=1)
    print("# geometry %s, solution %s" % (geometry, solution))
    print(records_to_csv(records))
