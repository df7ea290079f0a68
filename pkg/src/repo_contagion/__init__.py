"""Artificial repo market contagion simulator with SIS risk spread on the
funding exposure network."""

from .assets import (AssetId, DividendState, Order, OrderBook, PriceState,
                     Rates, Side, accrue_interest, apply_fire_sale_discount,
                     clear_orders_fifo, step_dividend, total_order_imbalance,
                     update_stock_price)
from .core import (Agent, AgentKind, BalanceSheet, RiskLimits, SolvencyState,
                   apply_trade, compute_leverage, compute_nav,
                   transition_solvency)
from .engine import (MarkToMarketRecord, RiskCheck, RunResult, Shock,
                     StepReport, apply_mark_to_market, check_risk_limits,
                     inject_shock, run_simulation, simulation_step)
from .funding import (LoanContract, RenewalDecision, RenewalKind, RepoContract,
                      evaluate_repo_renewal, open_repo, request_interbank_loan,
                      settle_overnight_obligations)
from .market import MarketState, build_market
from .risk import (LiquidityParams, LoanDenied, VarParams, compute_haircut,
                   delta_normal_var, interbank_spread, selling_probability)
from .scenario import Scenario, ScenarioError, load_scenario, write_scenario
from .sis import (InfectionCriterion, SisState, WeightedNetwork,
                  epidemic_threshold, extract_exposure_network, infected_nodes,
                  integrate_sis, read_edge_list, sis_rhs, steady_state_density,
                  write_edge_list)
from .strategies import (FundamentalTrader, Indicator, NoiseTrader,
                         StrategyAssignment, TechnicalRuleParams,
                         TechnicalTrader, compute_indicator,
                         fundamental_decision, noise_decision,
                         select_liquidation_order, technical_decision)

__all__ = [name for name in dir() if not name.startswith("_")]
