"""Multiserver-job scheduling: simulation of non-preemptive policies and
analysis of MSF with Quickswap."""
from msjlab.errors import ConfigurationError, ConvergenceError, InstabilityError
from msjlab.workload import (
    ClassSpec,
    Job,
    JobStream,
    WorkloadSpec,
    generate_arrivals,
    load_share,
    load_workload,
)

__version__ = "0.1.0"
