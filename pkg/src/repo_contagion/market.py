"""Market state: agents, prices, books, funding registry, and initial construction."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .assets import AssetId, DividendState, OrderBook, Side
from .core import Agent, AgentKind, BalanceSheet, RiskLimits, SolvencyState, total_assets
from .funding import LoanContract, RepoContract
from .risk import selling_probability
from .scenario import Scenario
from .strategies import (FundamentalTrader, NoiseTrader, TechnicalRuleParams,
                         TechnicalTrader)

# fixed stream labels so adding agents never perturbs unrelated draws
_STREAM_NAV = 1
_STREAM_DEPOSIT = 2
_STREAM_LEVERAGE = 3
_STREAM_STRATEGY = 4
_STREAM_TAU = 5
_STREAM_REPO = 6
_STREAM_DIVIDEND = 7
_STREAM_NOISE = 8


@dataclass
class FlowTally:
    """Per-step external cash and unit flows, for the conservation audit."""

    interest: float = 0.0
    dividends: float = 0.0
    payouts: float = 0.0
    bond_cash: float = 0.0    # net cash entering via the external bond desk
    risky_cash: float = 0.0   # net cash entering via risky origination (negative)
    bond_units: float = 0.0
    risky_units: float = 0.0

    def net_cash(self) -> float:
        return (self.interest + self.dividends - self.payouts
                + self.bond_cash + self.risky_cash)


@dataclass
class QueuedOrder:
    agent: int
    asset: AssetId
    side: Side
    quantity: float
    fire_sale: bool = False


@dataclass
class MarketState:
    scenario: Scenario
    agents: list
    prices: dict
    dividend: DividendState
    books: dict
    repos: dict = field(default_factory=dict)
    loans: dict = field(default_factory=dict)
    step: int = 0
    shock_applied: bool = False
    pre_shock_risky_price: float = 1.0
    risky_liquidity_cap: float = 1.0
    pending_orders: list = field(default_factory=list)
    stock_price_history: list = field(default_factory=list)
    flows: FlowTally = field(default_factory=FlowTally)
    last_dividend: float = 0.0
    insolvency_nav_floor: float = 0.0
    seed: int = 0
    _next_contract_id: int = 0
    _noise_rngs: dict = field(default_factory=dict)
    _dividend_rng: object = None

    def __post_init__(self):
        self.agents_by_id = {a.id: a for a in self.agents}
        self._reindex_contracts()

    def _reindex_contracts(self) -> None:
        self.repos_by_borrower = {}
        self.repos_by_lender = {}
        for repo in self.repos.values():
            self.repos_by_borrower.setdefault(repo.borrower, []).append(repo)
            self.repos_by_lender.setdefault(repo.lender, []).append(repo)
        self.loans_by_borrower = {}
        for loan in self.loans.values():
            self.loans_by_borrower.setdefault(loan.borrower, []).append(loan)

    # -- registry helpers ---------------------------------------------------

    def new_contract_id(self) -> int:
        cid = self._next_contract_id
        self._next_contract_id += 1
        return cid

    def register_repo(self, repo: RepoContract) -> None:
        self.repos[repo.id] = repo
        self.repos_by_borrower.setdefault(repo.borrower, []).append(repo)
        self.repos_by_lender.setdefault(repo.lender, []).append(repo)

    def register_loan(self, loan: LoanContract) -> None:
        self.loans[loan.id] = loan
        self.loans_by_borrower.setdefault(loan.borrower, []).append(loan)

    def open_repos_of(self, borrower_id: int):
        return [r for r in self.repos_by_borrower.get(borrower_id, []) if r.active]

    def open_loans_of(self, borrower_id: int):
        return [l for l in self.loans_by_borrower.get(borrower_id, []) if l.active]

    def agents_of_kind(self, kind: AgentKind):
        return [a for a in self.agents if a.kind is kind]

    # -- liquidity ----------------------------------------------------------

    def raw_p_sell(self, asset: AssetId) -> float:
        if asset is AssetId.GOV_BOND:
            return 1.0
        book = self.books[asset]
        return selling_probability(book.sell_buy_history(),
                                   self.scenario.liquidity.horizon_n)

    def effective_p_sell(self, asset: AssetId) -> float:
        p = self.raw_p_sell(asset)
        if asset is AssetId.RISKY:
            return min(p, self.risky_liquidity_cap)
        return p

    def required_haircut(self, asset: AssetId) -> float:
        return 1.0 - self.effective_p_sell(asset)

    # -- obligations and liquidity of one agent ------------------------------

    def unmet_obligations(self, agent: Agent) -> float:
        due = agent.sheet.arrears_total()
        for repo in self.repos_by_borrower.get(agent.id, []):
            if repo.active and repo.terminating:
                due += repo.principal
        return due

    def liquidation_value(self, agent: Agent) -> float:
        """Liquidity-weighted market value of unencumbered holdings."""
        value = 0.0
        for asset in AssetId:
            qty = agent.available(asset)
            if qty > 0.0:
                value += qty * self.prices[asset] * self.effective_p_sell(asset)
        return value

    def leverage_of(self, agent: Agent) -> float | None:
        ta = total_assets(agent.sheet, self.prices)
        nav = ta - agent.sheet.liabilities()
        if nav <= 0.0:
            return None
        return ta / nav

    def noise_rng(self, agent_id: int):
        rng = self._noise_rngs.get(agent_id)
        if rng is None:
            rng = np.random.default_rng(
                np.random.SeedSequence((self.seed, _STREAM_NOISE, agent_id)))
            self._noise_rngs[agent_id] = rng
        return rng

    @property
    def dividend_rng(self):
        if self._dividend_rng is None:
            self._dividend_rng = np.random.default_rng(
                np.random.SeedSequence((self.seed, _STREAM_DIVIDEND)))
        return self._dividend_rng


def _pareto(rng, shape: float, minimum: float) -> float:
    return minimum * (1.0 + rng.pareto(shape))


def _assign_strategy(rng, tau_rng, scenario: Scenario):
    mix = scenario.traders
    u = rng.random()
    if u < mix.noise:
        n = scenario.noise
        return NoiseTrader(n.p_buy, n.p_sell, n.p_hold)
    if u < mix.noise + mix.fundamental:
        tau = tau_rng.uniform(scenario.tau.min, scenario.tau.max)
        return FundamentalTrader(float(tau))
    params = TechnicalRuleParams(window=scenario.orders.technical_window,
                                 buy_threshold=scenario.orders.technical_threshold,
                                 sell_threshold=-scenario.orders.technical_threshold)
    return TechnicalTrader(params)


def build_market(scenario: Scenario, seed: int | None = None) -> MarketState:
    """Construct the initial market per the scenario distributions.

    Banks lever through deposits and randomly assigned repos with MMFs,
    investing the borrowed funds in the risky asset; MMFs hold bonds, cash
    reserves and the repo book; hedge funds hold stock and bonds. Balance
    sheets are materialized directly so every identity holds at step 0.
    """
    if seed is None:
        seed = scenario.run.seed
    s = scenario
    rng_nav = np.random.default_rng(np.random.SeedSequence((seed, _STREAM_NAV)))
    rng_dep = np.random.default_rng(np.random.SeedSequence((seed, _STREAM_DEPOSIT)))
    rng_lev = np.random.default_rng(np.random.SeedSequence((seed, _STREAM_LEVERAGE)))
    rng_strat = np.random.default_rng(np.random.SeedSequence((seed, _STREAM_STRATEGY)))
    rng_tau = np.random.default_rng(np.random.SeedSequence((seed, _STREAM_TAU)))
    rng_repo = np.random.default_rng(np.random.SeedSequence((seed, _STREAM_REPO)))

    r_f = s.market.r_f
    stock_price = s.market.dividend_mean / r_f if r_f > 0 else 10.0 * s.market.dividend_mean
    prices = {AssetId.GOV_BOND: 1.0, AssetId.STOCK: stock_price, AssetId.RISKY: 1.0}

    limits = RiskLimits(var_limit_fraction=s.var.limit_fraction,
                        liquidity_floor=s.liquidity.floor)

    agents: list[Agent] = []
    next_id = 0

    # banks -------------------------------------------------------------
    bank_rows = []
    for _ in range(s.counts.banks):
        nav = _pareto(rng_nav, s.nav_pareto.a, s.nav_pareto.m_banks)
        if s.leverage_limit.dist == "uniform":
            max_lev = rng_lev.uniform(s.leverage_limit.a, s.leverage_limit.b)
        else:
            max_lev = _pareto(rng_lev, s.leverage_limit.a, s.leverage_limit.b)
        x = _pareto(rng_dep, s.deposit_pareto.a, s.deposit_pareto.m)
        x = min(x, max(0.0, s.deposit_pareto.cap_fraction * max_lev - 1.0))
        target = max(s.portfolio.target_leverage_fraction * max_lev, 1.0 + x + 0.05)
        target = min(target, 0.95 * max_lev)
        agent = Agent(id=next_id, kind=AgentKind.BANK, sheet=BalanceSheet(),
                      limits=RiskLimits(max_lev, s.var.limit_fraction,
                                        s.liquidity.floor),
                      strategy=_assign_strategy(rng_strat, rng_tau, s),
                      target_leverage=target,
                      cash_target_fraction=s.portfolio.cash_fraction)
        agents.append(agent)
        bank_rows.append((agent, nav, x, target))
        next_id += 1

    # hedge funds --------------------------------------------------------
    hedge_rows = []
    for _ in range(s.counts.hedge_funds):
        nav = _pareto(rng_nav, s.nav_pareto.a, s.nav_pareto.m_hedge)
        agent = Agent(id=next_id, kind=AgentKind.HEDGE_FUND, sheet=BalanceSheet(),
                      limits=RiskLimits(1.0, s.var.limit_fraction, s.liquidity.floor),
                      strategy=_assign_strategy(rng_strat, rng_tau, s),
                      cash_target_fraction=s.portfolio.cash_fraction)
        agents.append(agent)
        hedge_rows.append((agent, nav))
        next_id += 1

    # money market funds ---------------------------------------------------
    mmf_rows = []
    for _ in range(s.counts.mmfs):
        nav = _pareto(rng_nav, s.nav_pareto.a, s.nav_pareto.m_mmf)
        agent = Agent(id=next_id, kind=AgentKind.MMF, sheet=BalanceSheet(),
                      limits=RiskLimits(1.0, s.var.limit_fraction, s.liquidity.floor),
                      cash_target_fraction=s.portfolio.mmf_reserve_fraction)
        agents.append(agent)
        mmf_rows.append((agent, nav))
        next_id += 1

    # repo assignment: banks draw funding from uniformly random MMFs ------
    capacity = {a.id: s.portfolio.mmf_lend_cap * nav for a, nav in mmf_rows}
    assignments: dict[int, list[tuple[Agent, float]]] = {a.id: [] for a, *_ in bank_rows}
    assigned: dict[int, float] = {}
    for agent, nav, x, target in bank_rows:
        need = max(0.0, (target - 1.0 - x) * nav)
        got = 0.0
        while need > 1e-6:
            candidates = [m for m, _ in mmf_rows if capacity[m.id] > 1e-6]
            if not candidates:
                break
            mmf = candidates[int(rng_repo.integers(0, len(candidates)))]
            amount = min(need, capacity[mmf.id])
            capacity[mmf.id] -= amount
            assignments[agent.id].append((mmf, amount))
            got += amount
            need -= amount
        assigned[agent.id] = got

    # stock float split across banks and hedge funds, proportional to NAV --
    phi = s.market.shares_outstanding
    bank_nav_total = sum(nav for _, nav, *_ in bank_rows) or 1.0
    hedge_nav_total = sum(nav for _, nav in hedge_rows) or 1.0

    market = MarketState(
        scenario=s, agents=agents, prices=prices,
        dividend=DividendState(d_prev=s.market.dividend_mean,
                               d_bar=s.market.dividend_mean,
                               rho_ar=s.market.dividend_rho,
                               sigma_mu=s.market.dividend_sigma),
        books={asset: OrderBook(asset, s.liquidity.horizon_n) for asset in AssetId},
        insolvency_nav_floor=s.run.insolvency_nav_floor,
        seed=seed)

    # materialize bank sheets and contracts ---------------------------------
    for agent, nav, x, target in bank_rows:
        repo_total = assigned[agent.id]
        deposits = x * nav
        ta = nav + deposits + repo_total
        cash = s.portfolio.cash_fraction * ta
        stock_value = (s.portfolio.bank_stock_share * phi * stock_price
                       * nav / bank_nav_total) if s.counts.banks else 0.0
        risky_value = repo_total + s.portfolio.risky_deposit_share * deposits
        bonds = ta - cash - stock_value - risky_value
        if bonds < 0.0:
            risky_value = max(repo_total, risky_value + bonds)
            bonds = ta - cash - stock_value - risky_value
            if bonds < 0.0:
                stock_value += bonds
                bonds = 0.0
        sheet = agent.sheet
        sheet.cash = cash
        sheet.deposits = deposits
        sheet.holdings[AssetId.RISKY] = risky_value / prices[AssetId.RISKY]
        sheet.holdings[AssetId.STOCK] = stock_value / stock_price
        sheet.holdings[AssetId.GOV_BOND] = bonds
        for mmf, amount in assignments[agent.id]:
            quantity = amount / prices[AssetId.RISKY]
            repo = RepoContract(market.new_contract_id(), mmf.id, agent.id,
                                AssetId.RISKY, quantity, amount, 0.0, opened_at=0)
            market.register_repo(repo)
            sheet.repo_borrowed += amount
            mmf.sheet.repo_lent += amount
            agent.encumber(AssetId.RISKY, quantity)

    for agent, nav in hedge_rows:
        cash = s.portfolio.cash_fraction * nav
        stock_value = (s.portfolio.hedge_stock_share * phi * stock_price
                       * nav / hedge_nav_total) if s.counts.hedge_funds else 0.0
        stock_value = min(stock_value, nav - cash)
        agent.sheet.cash = cash
        agent.sheet.holdings[AssetId.STOCK] = stock_value / stock_price
        agent.sheet.holdings[AssetId.GOV_BOND] = nav - cash - stock_value

    for agent, nav in mmf_rows:
        lent = agent.sheet.repo_lent
        reserve = s.portfolio.mmf_reserve_fraction * nav
        bonds = max(0.0, nav - reserve - lent)
        agent.sheet.cash = nav - lent - bonds
        agent.sheet.holdings[AssetId.GOV_BOND] = bonds
        agent.sheet.holdings[AssetId.STOCK] = 0.0
        agent.sheet.holdings[AssetId.RISKY] = 0.0

    window = s.var.window
    for agent in agents:
        agent.initial_nav = total_assets(agent.sheet, prices) - agent.sheet.liabilities()
        agent.nav_history = deque([agent.initial_nav], maxlen=window + 1)
    market.stock_price_history.append(stock_price)
    return market
