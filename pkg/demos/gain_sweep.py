"""Locate the smallest p1 that certifies the equilibrium, then sweep (p1, p2).

    python3 demos/gain_sweep.py
"""

from idapbc import maglev, shape_energy
from idapbc.pipeline import load_config, run_sweep
from idapbc.shaping import hessian_certificate


def certified(p1: float) -> bool:
    d = maglev.build(gains=maglev.MaglevGains(p1=p1))
    energy, _ = shape_energy(d.system, d.target, d.coords, d.M1, M2=0.0)
    return hessian_certificate(energy).positive


lo, hi = 100.0, 400.0
while hi - lo > 0.05:
    mid = 0.5 * (lo + hi)
    lo, hi = (lo, mid) if certified(mid) else (mid, hi)
print(f"certificate boundary in p1: ({lo:.2f}, {hi:.2f}]")

cfg = load_config(None, {"sweep.values1": "300,350,400,500", "sweep.values2": "5,20", "sweep.workers": "4"})
for row in run_sweep(cfg):
    print(
        f"p1 = {row['gain1']:5.0f}  p2 = {row['gain2']:4.0f}  certificate {row['certificate']!s:5}  "
        f"converged {row['converged']!s:5}  |x(T)| = {row['final_err']:.2e}"
    )
