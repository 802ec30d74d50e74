"""Run the shapeability tests on the nominal design and on two broken variants.

    python3 demos/shapeability_checks.py
"""

from idapbc import assess, maglev, make_grid, validate_system
from idapbc.shapeability import check_constant_route

base = maglev.build()
grid = make_grid(base.system, 256, seed=1)

for label, gains in [
    ("nominal", maglev.MaglevGains()),
    ("v11 = 1 (coupled flux row)", maglev.MaglevGains(v11=1.0)),
    ("v12 = +2 (energy injected)", maglev.MaglevGains(v12=2.0)),
]:
    d = maglev.build(gains=gains)
    val = validate_system(d.system, d.target, grid)
    rep = assess(d.system, d.target, d.coords, grid)
    lie = check_constant_route(d.system, d.target, grid)
    print(f"== {label}")
    print(f"   structural checks pass: {val.passed} (failures: {val.failures() or 'none'})")
    print(f"   Lie-derivative residual: {lie.lie_residual:.3e}")
    print("   " + rep.summary().replace("\n", "\n   "))
