"""Analytic engine for MSFQ in the one-or-all system."""
from msjlab.analysis.jets import Jet, MomentJet
from msjlab.analysis.phases import (
    CycleTransforms,
    MsfqParams,
    PhaseMoments,
    solve_phase_moments,
)
from msjlab.analysis.response import (
    MsfqAnalysis,
    analyze_msfq,
    efs_empty_prob,
    efs_mean_work,
    t1_large,
    t2_small,
    t3_small,
    t_excess,
    visit_counts,
)
from msjlab.analysis.stability import (
    GeneralStability,
    StabilityVerdict,
    stability_general,
    stability_one_or_all,
)
from msjlab.analysis.transforms import (
    Transform,
    busy_period,
    busy_period_lst,
    h3_step_transforms,
    h3_transform,
    h4_transform,
    large_busy_period,
    small_busy_period,
)

__all__ = [
    "CycleTransforms", "GeneralStability", "Jet", "MomentJet", "MsfqAnalysis", "MsfqParams",
    "PhaseMoments", "StabilityVerdict", "Transform", "analyze_msfq", "busy_period",
    "busy_period_lst", "efs_empty_prob", "efs_mean_work", "h3_step_transforms", "h3_transform",
    "h4_transform", "large_busy_period", "small_busy_period", "solve_phase_moments",
    "stability_general", "stability_one_or_all", "t1_large", "t2_small", "t3_small", "t_excess",
    "visit_counts",
]
