"""Design the levitation controller, certify it and simulate a 2 mm lift.

    python3 demos/maglev_design.py
"""

import numpy as np

from idapbc import maglev, shape_energy, simulate, synthesize
from idapbc.shaping import hessian_certificate
from idapbc.sim import SimConfig, lyapunov_audit

d = maglev.build()
energy, sel = shape_energy(d.system, d.target, d.coords, d.M1, M2=0.0)
cert = hessian_certificate(energy)
print(f"B = diag({sel.B[0, 0]:.4f}, {sel.B[1, 1]:.4f}), C = ({sel.C[0, 0]:.4f}, {sel.C[1, 0]:.4f})")
print(f"lambda_max(C^T B^-1 C) = {sel.schur_max:.3f}, p1 = {d.gains.p1}")
print(f"Hessian lambda_min at equilibrium: {cert.lam_min_x:.4f} (positive: {cert.positive})")

ctrl = synthesize(d.system, d.target, d.coords, energy)
print(f"equilibrium voltage u(x*) = {ctrl.u(np.zeros(3))[0]:.6f} V")

traj = simulate(ctrl, SimConfig(dt=1e-4, t_end=2.0, x0=(0.0, -d.params.y2_star, 0.0), record_every=100))
y = traj.x + d.params.y_star
increase, violation = lyapunov_audit(traj)
for t, yt, ut in zip(traj.t[::20], y[::20], traj.u[::20, 0]):
    print(f"t = {t:5.2f} s   y2 = {1e3 * yt[1]:8.5f} mm   u = {ut:7.4f} V")
print(f"events: {traj.events or 'none'}; largest energy increase {increase:.1e}")
