"""
MSF versus MSFQ under heavy load
================================

Thirty-two servers, 90% of jobs need one server and 10% need all of them,
jobs arrive at rate 7.5.  Both policies see exactly the same job stream.
"""
import numpy as np

from msjlab.simulator import couple, measure_phase_stats
from msjlab.workload import WorkloadSpec

spec = WorkloadSpec.one_or_all(32, 7.5, 0.9)
pair = couple(spec, "msf", "msfq:31", horizon=20_000.0, seed=1, record_series=True,
              series_every=20)

# population over time, averaged over ten equal windows
for name, log in (("MSF", pair.a), ("MSFQ(31)", pair.b)):
    t, n = log.series_t, log.series_n.sum(axis=1)
    windows = np.array_split(np.arange(len(t)), 10)
    print(f"{name:>9s}  n(t) by window:", " ".join(f"{n[w].mean():7.1f}" for w in windows))

print(f"\nmean response  MSF {pair.mean_response_a:.2f}   MSFQ(31) {pair.mean_response_b:.2f}")

# where the time goes: phase fractions of each policy
for name, log in (("MSF", pair.a), ("MSFQ(31)", pair.b)):
    stats = measure_phase_stats(log)
    print(f"{name:>9s}  phase fractions:",
          "  ".join(f"{tag}={s.fraction:.3f}" for tag, s in sorted(stats.items())))
