"""Random walks on Z^d with local impurities and unbounded jumps."""
from .engine import (
    AssumptionReport,
    CoupledSummary,
    ImpuritySet,
    PathSummary,
    RecordMode,
    WalkSpec,
    batch_run,
    check_assumptions,
    simulate,
    simulate_coupled,
    simulate_path,
)
from .lattice import (
    JumpLaw,
    ScalingSequence,
    compute_scaling,
    domain_of_attraction_check,
    lazy_srw,
    make_axis_power_tail_law,
    make_product_lazy_law,
    make_table_law,
    one_lattice_check,
    simple_srw,
)
from .oracle import LatticePmf, n_step_pmf, survival_by_renewal, taboo_survival_dp

__version__ = "0.1.0"

__all__ = [
    "AssumptionReport",
    "CoupledSummary",
    "ImpuritySet",
    "JumpLaw",
    "LatticePmf",
    "PathSummary",
    "RecordMode",
    "ScalingSequence",
    "WalkSpec",
    "batch_run",
    "check_assumptions",
    "compute_scaling",
    "domain_of_attraction_check",
    "lazy_srw",
    "make_axis_power_tail_law",
    "make_product_lazy_law",
    "make_table_law",
    "n_step_pmf",
    "one_lattice_check",
    "simple_srw",
    "simulate",
    "simulate_coupled",
    "simulate_path",
    "survival_by_renewal",
    "taboo_survival_dp",
]
