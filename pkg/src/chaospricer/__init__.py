"""Monte Carlo Bermudan pricing with truncated Wiener chaos regressions.

Policy iteration where every conditional expectation is a truncated
chaos expansion.  Coefficients are either plain Monte Carlo means
(embarrassingly parallel, one deterministic reduction per exercise date)
or a least-squares fit on the same basis; the in-the-money variants of
the two differ because masking breaks the basis orthogonality the mean
formula relies on.
"""

from .basis import (
    BasisCatalog,
    BasisSizeError,
    MultiIndex,
    catalog_size,
    enumerate_basis,
    eval_basis_matrix,
    eval_basis_row,
    hermite_eval,
    monomial_powers,
)
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .models import (
    SIM_BLOCK,
    BlackScholesParams,
    HestonParams,
    SimulatedPaths,
    TimeGrid,
    draw_increment,
    simulate,
    simulate_black_scholes,
    simulate_heston,
    standard_normal_increments,
)
from .parallel import (
    WORKERS_ENV,
    ExecutionOptions,
    ReductionRecord,
    ScalabilityRow,
    WorkerPlan,
    build_worker_plan,
    default_workers,
    measure_scalability,
    run_induction,
    write_scalability_csv,
    write_timing_csv,
)
from .payoffs import PayoffSpec, compute_payoff_matrix
from .pricer import (
    PricingResult,
    RunStats,
    StoppingState,
    backward_induction,
    build_batch,
    longstaff_schwartz_baseline,
    longstaff_schwartz_price,
    make_state_extractor,
    price_bermudan,
)
from .regression import (
    ChaosCoefficients,
    PathBatch,
    estimate_coefficients,
    estimate_coefficients_ls,
    eval_conditional_expectation,
    evaluate_expansion,
    project_truncate,
)

__version__ = "0.1.0"

__all__ = [
    "BasisCatalog", "BasisSizeError", "MultiIndex", "catalog_size",
    "enumerate_basis", "eval_basis_matrix", "eval_basis_row", "hermite_eval",
    "monomial_powers",
    "ConfigError", "ExperimentConfig", "load_config", "parse_config",
    "SIM_BLOCK", "BlackScholesParams", "HestonParams", "SimulatedPaths",
    "TimeGrid", "draw_increment", "simulate", "simulate_black_scholes",
    "simulate_heston", "standard_normal_increments",
    "WORKERS_ENV", "ExecutionOptions", "ReductionRecord", "ScalabilityRow",
    "WorkerPlan", "build_worker_plan", "default_workers",
    "measure_scalability", "run_induction", "write_scalability_csv",
    "write_timing_csv",
    "PayoffSpec", "compute_payoff_matrix",
    "PricingResult", "RunStats", "StoppingState", "backward_induction",
    "build_batch", "longstaff_schwartz_baseline", "longstaff_schwartz_price",
    "make_state_extractor", "price_bermudan",
    "ChaosCoefficients", "PathBatch", "estimate_coefficients",
    "estimate_coefficients_ls", "eval_conditional_expectation",
    "evaluate_expansion", "project_truncate",
]
