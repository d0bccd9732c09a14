"""
Stability regions
=================

The largest arrival rate each workload can sustain.
"""
from msjlab.analysis import MsfqParams, stability_general, stability_one_or_all
from msjlab.workload import ClassSpec, WorkloadSpec

# one-or-all: small jobs load k servers together, large jobs load them alone
spec = WorkloadSpec.one_or_all(32, 1.0, 0.9)
v = stability_one_or_all(MsfqParams.from_workload(spec, 31))
print(f"one-or-all k=32, p1=0.9: lambda < {v.boundary:.4f}")

# four classes whose needs divide k=15: static quickswap reaches the bound
four = WorkloadSpec.from_fractions(15, [1, 3, 5, 15], [0.5, 0.25, 0.2, 0.05], [1, 1, 1, 1], 1.0)
g = stability_general(four)
print(f"four classes on 15 servers: sufficient {g.sufficient_boundary:.4f}, "
      f"necessary {g.necessary_boundary:.4f}")

# a need that does not divide k wastes servers, and the two bounds split
odd = WorkloadSpec(3, (ClassSpec(2, 1.0, 1.0),))
g = stability_general(odd)
print(f"need 2 on 3 servers: sufficient {g.sufficient_boundary:.4f}, "
      f"necessary {g.necessary_boundary:.4f}")
