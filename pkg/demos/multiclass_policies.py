"""
Quickswap on a four-class workload
==================================

Needs 1, 3, 5 and 15 on fifteen servers at arrival rate 4.5 (the system
is stable below 5).  Every policy sees the same jobs.
"""
from msjlab.metrics import aggregate
from msjlab.simulator import run
from msjlab.workload import WorkloadSpec, generate_arrivals

spec = WorkloadSpec.from_fractions(15, [1, 3, 5, 15], [0.5, 0.25, 0.2, 0.05], [1, 1, 1, 1], 4.5)
horizon = 50_000.0
jobs = generate_arrivals(spec, horizon, 7)

print(f"{'policy':>20s}  {'E[T]':>8s}  {'E[T^w]':>8s}  per-class means")
for policy in ("first_fit", "msf", "static_quickswap", "adaptive_quickswap"):
    s = aggregate(run(spec, policy, horizon, seed=7, jobs=jobs))
    per_class = "  ".join(f"{c.need}:{c.mean:.2f}" for c in s.classes)
    print(f"{policy:>20s}  {s.mean:8.3f}  {s.weighted:8.3f}  {per_class}")
