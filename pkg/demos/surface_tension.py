"""
Energy of a diffuse interface and its sharp limit
=================================================

The one-dimensional profile tanh(x/ε) carries energy 4/3 per unit length of
interface, and the energy density splits evenly between the gradient and
the double-well parts.
"""
import numpy as np

from sharplab.critical_points import profile_field
from sharplab.domain_geometry import build_domain, build_interface
from sharplab.energies import ModelParams, allen_cahn_energy, discrepancy_report
from sharplab.fields_calculus import ScalarField

# %%
# A straight interface across the unit square, resolved with 8 nodes per ε.
eps = 0.02
domain = build_domain({"shape": "rectangle", "L": [1.0, 1.0], "n": [401, 17]})
X, _ = domain.coords
u = np.tanh((X - 0.5) / eps)
E = allen_cahn_energy(ScalarField(domain, u), ModelParams(eps))
print(f"E_eps(tanh) = {E:.6f}   4/3 = {4 / 3:.6f}")

# %%
# A circle of radius 1/4: energy, total variation of Φ(u) and the
# equipartition defect as ε shrinks (grid refined with ε).
for eps in (0.08, 0.04, 0.02):
    n = int(np.ceil(4 / eps)) + 1
    domain = build_domain({"shape": "rectangle", "L": [1.0, 1.0], "n": [n, n]})
    circle = build_interface(domain, {"kind": "circle", "center": [0.5, 0.5], "r": 0.25})
    u = profile_field(domain, circle, eps, profile="level_set")
    rep = discrepancy_report(u, ModelParams(eps))
    limit = 4 / 3 * circle.length
    print(f"eps={eps:<5} E={rep.ac_energy:.4f} TV={rep.phi_total_variation:.4f} "
          f"(4/3)L={limit:.4f} discrepancy={rep.discrepancy_L1:.4f}")
