"""Minimal initial capital for a defined-benefit pension pool.

Monte Carlo asset-liability engine combining a logistic survival model,
a seven-factor linear scenario generator, index-linked claims and convex
risk measures to find the smallest initial capital whose terminal wealth
is acceptable, separating systematic from pool-size-dependent mortality
risk.
"""

from .calibration import (
    MarketDataset,
    MortalityDataset,
    VarFitSpec,
    build_state_series,
    fit_factor_series,
    fit_var,
    load_market_csv,
    load_mortality_csv,
    load_parameters,
    save_parameters,
)
from .mortality import (
    AGE_MAX,
    AGE_MIN,
    CohortState,
    EstimationError,
    MortalityObservation,
    PiecewiseLinearBasis,
    evolve_binomial,
    evolve_deterministic,
    fit_year_mle,
    log_likelihood,
    stable_sigmoid,
    survival_probability,
)
from .parameters import (
    DEFAULT_A,
    DEFAULT_B,
    DEFAULT_SIGMA,
    DEFAULT_X0,
    STATE_FIELDS,
    default_economy_params,
)
from .plan import (
    Cohort,
    PensionPlan,
    STRATEGIES,
    Strategy,
    homogeneous_plan,
    make_nonhomogeneous_plan,
    simulate_cashflows,
    simulate_claims,
)
from .scenarios import (
    EconomyParams,
    InnovationBlock,
    Scenario,
    ScenarioSet,
    bond_return,
    equity_return,
    generate_scenarios,
    index_ratio_path,
    load_scenarios_csv,
    portfolio_return,
    sample_innovations,
    save_scenarios_csv,
    step_state,
)
from .valuation import (
    RiskSpec,
    ValuationResult,
    acceptable,
    best_estimate_value,
    entropic_rho,
    risk_neutral_value,
    solve_min_capital,
    terminal_wealth,
    wealth_coefficients,
)

__version__ = "0.1.0"
