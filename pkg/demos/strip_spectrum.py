"""
Eigenvalues of a flat interface
===============================

A Newton critical point with a vertical interface in the unit square.  Its
linearized operator, divided by ε, approaches the Jacobi operator of the
segment, whose Neumann eigenvalues are ((k-1)π)².
"""
import numpy as np

from sharplab.critical_points import solve_critical
from sharplab.domain_geometry import build_domain, build_interface
from sharplab.energies import ModelParams
from sharplab.spectra import assemble_linearized, eigenpairs, jacobi_operator

segment_spec = {"kind": "segment", "x": 0.5}
fine = build_interface(build_domain({"shape": "rectangle", "L": [1, 1], "n": [65, 65]}), segment_spec, ds=1 / 512)
sharp = eigenpairs(jacobi_operator(fine), 4).eigenvalues
print("sharp:", np.round(sharp, 4))

for eps in (0.08, 0.04):
    n = int(np.ceil(4 / eps)) + 1
    domain = build_domain({"shape": "rectangle", "L": [1.0, 1.0], "n": [n, n]})
    segment = build_interface(domain, segment_spec)
    p = ModelParams(eps)
    sol = solve_critical(domain, p, curve=segment, symmetry="odd_across_interface")
    lam = eigenpairs(assemble_linearized(sol.u, p), 4).eigenvalues / eps
    print(f"eps={eps}: lambda/eps = {np.round(lam, 4)}  margins = {np.round(sharp - lam, 4)}")
