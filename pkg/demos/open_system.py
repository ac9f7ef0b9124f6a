"""One system qubit weakly coupled to a one-qubit bath.

The reduced distance is never larger than the joint distance, and both sit
below the bound evaluated with the joint gap.
"""

from adiabound import hamiltonians as hm
from adiabound import schedules as sch
from adiabound.opensys import default_joint_spec, theorem2_report

for g in (0.0, 0.01, 0.05):
    spec = default_joint_spec(hm.x_to_z(1, sch.smooth_poly(2)), n_bath=1, g=g, seed=1)
    rep = theorem2_report(spec, N=2)
    print(f"g={g:<5} JT={rep.T:9.1f}  delta_S={rep.delta_S:.3e}  delta_SB={rep.delta_SB:.3e}  bound={rep.bound:.3f}")
