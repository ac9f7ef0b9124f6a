"""Single-qubit sweep X -> Z: linear against boundary-flattened schedules.

Printed is the Fubini-Study distance to the final ground state, which ignores
the global phase.  A linear ramp leaves a distance falling like 1/T; flattened
endpoints make it fall much faster.
"""

import numpy as np

from adiabound import hamiltonians as hm
from adiabound import schedules as sch
from adiabound.metrics import error_report
from adiabound.propagator import evolve

schedules = {"linear": sch.linear(), "smooth_poly(1)": sch.smooth_poly(1), "smooth_poly(3)": sch.smooth_poly(3)}
Ts = [10.0, 20.0, 40.0, 80.0, 160.0]

print("JT      " + "".join(f"{name:>16}" for name in schedules))
table = {name: [] for name in schedules}
for T in Ts:
    line = f"{T:<8g}"
    for name, s in schedules.items():
        d = error_report(evolve(hm.x_to_z(1, s), T, tol=1e-11)).fs_distance
        table[name].append(d)
        line += f"{d:>16.3e}"
    print(line)
for name, ds in table.items():
    # distances below double resolution print as 0 and are left out of the fit
    keep = [(T, d) for T, d in zip(Ts, ds) if d > 0]
    slope = np.polyfit(*np.log(np.array(keep)).T, 1)[0]
    print(f"{name}: log-log slope {slope:.2f}")
