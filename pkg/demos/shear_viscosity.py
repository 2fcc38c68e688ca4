"""A drop in simple shear: surface viscosity resists deformation.

Three runs differ only in the surface shear and dilatational viscosities.
The Taylor deformation number ``(L - B) / (L + B)`` of the final shape
drops as the interface gets more viscous.

    python demos/shear_viscosity.py
"""

from dataclasses import replace

from bsflow import harness as hs

base = hs.preset("shear2d")
for visc in (0.01, 1.0, 10.0):
    res = hs.simulate(replace(base, mu_gamma_bar=visc, lambda_gamma_bar=visc), keep_history=False)
    print(f"mu_gamma = lambda_gamma = {visc:5g}: Taylor deformation {res.summary['taylor_deformation']:.4f}")
