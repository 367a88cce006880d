"""Minimal acceptable capital in finite scenario-tree markets.

Primal and dual linear programs for the smallest initial capital that can be
traded into an acceptable position, the hedged risk measure, and the
efficient-hedging seller's price on a two-factor tree.
"""
__version__ = "0.1.0"

from .acceptability import (
    CapitalReport,
    Status,
    capital_report,
    certificate_M,
    classify,
    is_acceptable,
    min_capital_dual,
    min_capital_primal,
)
from .errors import CapreqError
from .geometry import ConvexPolytope, ProjectionOperator, dp_distance, lp_norm, nearest_point, project
from .hedging import (
    HedgeProblem,
    TwoFactorModel,
    alpha_sweep,
    build_two_factor_tree,
    efficient_hedge,
    efficient_hedge_price,
    girsanov_density,
    superhedge_price,
)
from .market import (
    FiniteFilteredSpace,
    Market,
    PriceProcess,
    TradingStrategy,
    binomial_market,
    build_space,
    is_martingale,
    load_market,
    make_market,
)
from .risk import RiskSpec, capital_identity_check, rho, rho_G
from .scenarios import ScenarioSet, f_tilde, load_scenarios, martingale_polytope, sup_f_tilde_over_Z
