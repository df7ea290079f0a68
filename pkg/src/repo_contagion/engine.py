"""Simulation loop: shock injection, crisis propagation, fire sales, run driver."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .assets import (AssetId, Side, StepVolumes, apply_fire_sale_discount,
                     match_orders_fifo, step_dividend, total_order_imbalance,
                     update_stock_price)
from .core import (Agent, AgentKind, SolvencyState, total_assets,
                   transition_solvency)
from .funding import (RepoContract, request_interbank_loan,
                      settle_overnight_obligations)
from .market import FlowTally, MarketState, QueuedOrder, build_market
from .risk import delta_normal_var, portfolio_change_stats
from .scenario import Scenario, ScenarioError, validate_scenario
from .strategies import (BUY, HOLD, SELL, FundamentalTrader, Indicator,
                         InsufficientHistory, NoiseTrader, TechnicalTrader,
                         compute_indicator, fundamental_decision,
                         noise_decision, select_liquidation_order,
                         technical_decision)


class ShockAlreadyApplied(RuntimeError):
    """The one-off shock was injected twice."""


@dataclass(frozen=True)
class Shock:
    price_fraction: float
    liquidity_fraction: float
    at_step: int = 0


@dataclass(frozen=True)
class MarkToMarketRecord:
    agent: int
    loss: float
    margin_calls: tuple


class RiskCheck(Enum):
    WITHIN_LIMITS = "within_limits"
    FLY_TO_LIQUIDITY = "fly_to_liquidity"


@dataclass
class StepReport:
    step: int
    n_solvent: int
    n_defaulted: int
    n_bankrupt: int
    avg_leverage: float
    avg_haircut: float
    stock_price: float
    risky_price: float
    risky_p_sell: float
    fire_sale_volume: float
    # diagnostics beyond the CSV schema
    n_solvent_banks: int = 0
    n_defaulted_banks: int = 0
    n_bankrupt_banks: int = 0
    n_fly_to_liquidity: int = 0
    n_transitions: int = 0
    total_repo_principal: float = 0.0
    cash_error: float = 0.0
    unit_errors: tuple = (0.0, 0.0, 0.0)


@dataclass
class RunSummary:
    seed: int
    bank_count: int
    final_solvent: int
    final_defaulted: int
    final_bankrupt: int
    final_bankrupt_banks: int
    peak_haircut: float
    pre_shock_avg_leverage: float
    final_avg_leverage: float
    equilibrium_step: int | None


@dataclass
class RunResult:
    scenario: Scenario
    seed: int
    reports: list
    summary: RunSummary
    market: MarketState
    mark_to_market: list = field(default_factory=list)


def inject_shock(market: MarketState, shock: Shock) -> None:
    """Collapse the risky asset's price and liquidity, exactly once per run.

    The liquidity cut is written into the order-history window so the selling
    probability reflects it immediately, and is kept as a cap on the metric
    for the rest of the run.
    """
    if market.shock_applied:
        raise ShockAlreadyApplied("shock already applied to this market")
    if not 0.0 <= shock.price_fraction <= 1.0 or not 0.0 <= shock.liquidity_fraction <= 1.0:
        raise ValueError("shock fractions must lie in [0, 1]")
    market.shock_applied = True
    market.pre_shock_risky_price = market.prices[AssetId.RISKY]
    market.prices[AssetId.RISKY] *= shock.price_fraction
    target = (1.0 - shock.liquidity_fraction) * market.effective_p_sell(AssetId.RISKY)
    book = market.books[AssetId.RISKY]
    total_units = sum(a.sheet.holdings.get(AssetId.RISKY, 0.0)
                      for a in market.agents)
    vol = max(1.0, 0.05 * total_units)
    book.history.clear()
    for _ in range(market.scenario.liquidity.horizon_n):
        book.history.append(StepVolumes(buy=target * vol, sell=vol))
    market.risky_liquidity_cap = target


def apply_mark_to_market(market: MarketState, shock: Shock) -> list[MarkToMarketRecord]:
    """Book the shock's write-downs and repo consequences.

    Every holder of the risky asset loses its pre-shock value times (1 - p);
    every repo backed by it carries a margin call of (1 - p) times principal
    and a haircut raised by the liquidity fraction q. Cash collection happens
    through the regular renewal pass; this records and re-marks contracts.
    """
    if not market.shock_applied:
        raise ValueError("shock must be injected before marking to market")
    p = shock.price_fraction
    q = shock.liquidity_fraction
    pre = market.pre_shock_risky_price
    records = []
    for agent in market.agents:
        if not agent.alive:
            continue
        qty = agent.sheet.holdings.get(AssetId.RISKY, 0.0)
        loss = qty * pre * (1.0 - p)
        calls = []
        for repo in market.open_repos_of(agent.id):
            if repo.collateral_asset is AssetId.RISKY and not repo.terminating:
                calls.append((repo.id, (1.0 - p) * repo.principal))
                repo.haircut = min(1.0, 1.0 - (1.0 - q) * (1.0 - repo.haircut))
        if loss > 0.0 or calls:
            records.append(MarkToMarketRecord(agent.id, loss, tuple(calls)))
    return records


def check_risk_limits(agent: Agent, market: MarketState) -> RiskCheck:
    """Flag an agent whose leverage, VaR, or portfolio liquidity breaches its
    limits; the flag switches it to selling risky and illiquid assets."""
    lev = market.leverage_of(agent)
    breach = lev is None or lev > agent.limits.max_leverage
    ta = total_assets(agent.sheet, market.prices)
    nav = ta - agent.sheet.liabilities()
    if not breach and nav > 0.0 and len(agent.nav_history) >= 6:
        mu, sigma = portfolio_change_stats(agent.nav_history)
        var = delta_normal_var(mu, sigma, market.scenario.var.confidence_x)
        breach = var > agent.limits.var_limit_fraction * nav
    if not breach and ta > 0.0:
        liquid = agent.sheet.cash + agent.sheet.repo_lent + agent.sheet.loans_lent
        for asset in AssetId:
            qty = agent.available(asset)
            if qty > 0.0:
                liquid += qty * market.prices[asset] * market.effective_p_sell(asset)
        breach = liquid / ta < agent.limits.liquidity_floor
    agent.fly_to_liquidity = breach
    return RiskCheck.FLY_TO_LIQUIDITY if breach else RiskCheck.WITHIN_LIMITS


def _technical_signal(market: MarketState, params) -> int:
    """Shared per-step technical vote; identical rule parameters collapse to
    one evaluation on the common price history."""
    history = market.stock_price_history
    values = {}
    try:
        for kind in params.indicators:
            values[kind] = compute_indicator(kind, params.window, history)
    except InsufficientHistory:
        return HOLD
    return technical_decision(values, params)


def _stock_decision(agent: Agent, market: MarketState, signal_cache: dict) -> int:
    strategy = agent.strategy
    if strategy is None:
        return HOLD
    if isinstance(strategy, NoiseTrader):
        return noise_decision(strategy, market.noise_rng(agent.id))
    if isinstance(strategy, FundamentalTrader):
        return fundamental_decision(market.prices[AssetId.STOCK],
                                    market.dividend.d_prev,
                                    market.scenario.market.r_f, strategy.tau)
    if isinstance(strategy, TechnicalTrader):
        key = strategy.params
        if key not in signal_cache:
            signal_cache[key] = _technical_signal(market, key)
        return signal_cache[key]
    return HOLD


def _submit_pending(market: MarketState) -> float:
    """Queued fire-sale orders enter the books at the start of the next step."""
    fire_sale_value = 0.0
    for queued in market.pending_orders:
        agent = market.agents_by_id[queued.agent]
        if not agent.alive:
            continue
        qty = min(queued.quantity, agent.available(queued.asset))
        if qty <= 0.0:
            continue
        market.books[queued.asset].submit(agent.id, queued.side, qty,
                                          fire_sale=queued.fire_sale)
        if queued.fire_sale:
            fire_sale_value += qty * market.prices[queued.asset]
    market.pending_orders = []
    return fire_sale_value


def _place_decisions(market: MarketState) -> None:
    s = market.scenario
    sell_frac = s.orders.sell_fraction
    buy_frac = s.orders.buy_fraction
    signal_cache: dict = {}
    stock_book = market.books[AssetId.STOCK]
    risky_book = market.books[AssetId.RISKY]
    bond_book = market.books[AssetId.GOV_BOND]
    stock_price = market.prices[AssetId.STOCK]
    for agent in market.agents:
        if agent.state is not SolvencyState.SOLVENT:
            continue
        sheet = agent.sheet
        if agent.kind is AgentKind.MMF:
            # MMFs hold liquid assets only; anything else is unwound at once
            for asset in (AssetId.RISKY, AssetId.STOCK):
                qty = agent.available(asset)
                if qty > 1e-12:
                    market.books[asset].submit(agent.id, Side.SELL, qty)
            continue
        if agent.fly_to_liquidity:
            for asset, qty in select_liquidation_order(agent, market):
                if asset is AssetId.GOV_BOND:
                    continue
                amount = sell_frac * qty
                if amount > 1e-12:
                    market.books[asset].submit(agent.id, Side.SELL, amount)
        else:
            decision = _stock_decision(agent, market, signal_cache)
            held = agent.available(AssetId.STOCK)
            if decision == SELL and held > 1e-12:
                stock_book.submit(agent.id, Side.SELL, sell_frac * held)
            elif decision == BUY and stock_price > 0.0:
                qty = min(buy_frac * sheet.cash / stock_price, sell_frac * held)
                if qty > 1e-12:
                    stock_book.submit(agent.id, Side.BUY, qty)
        if agent.kind is AgentKind.BANK:
            ta = total_assets(sheet, market.prices)
            cash_target = agent.cash_target_fraction * ta
            if sheet.cash < cash_target:
                qty = min(agent.available(AssetId.GOV_BOND),
                          cash_target - sheet.cash)
                if qty > 1e-12:
                    bond_book.submit(agent.id, Side.SELL, qty)


def _clear_markets(market: MarketState) -> None:
    s = market.scenario
    agents = market.agents_by_id
    # stock: imbalance moves the price, then FIFO clearing at the new price
    stock_book = market.books[AssetId.STOCK]
    q = total_order_imbalance(stock_book, s.market.shares_outstanding)
    market.prices[AssetId.STOCK] = update_stock_price(
        market.prices[AssetId.STOCK], q, s.market.impact_kappa)
    match_orders_fifo(stock_book, market.prices[AssetId.STOCK], agents)
    stock_book.record_step()

    # risky: fire sales mark the price down, sells cross resident buy interest,
    # leftover buys are originated externally, leftover sells go unfilled
    risky_book = market.books[AssetId.RISKY]
    fire_sellers = {o.agent for o in risky_book.orders
                    if o.side is Side.SELL and o.fire_sale}
    alive = sum(1 for a in market.agents if a.alive)
    if fire_sellers and alive > 0:
        fraction = min(1.0, len(fire_sellers) / alive)
        market.prices[AssetId.RISKY] = apply_fire_sale_discount(
            market.prices[AssetId.RISKY], fraction, s.market.fire_sale_discount)
    risky_price = market.prices[AssetId.RISKY]
    _, residual_buys, _ = match_orders_fifo(risky_book, risky_price, agents)
    if risky_price > 0.0:
        for order, remaining in residual_buys:
            buyer = agents[order.agent]
            qty = min(remaining, buyer.sheet.cash / risky_price)
            if qty <= 0.0:
                continue
            cost = qty * risky_price
            buyer.sheet.cash -= cost
            buyer.sheet.holdings[AssetId.RISKY] = (
                buyer.sheet.holdings.get(AssetId.RISKY, 0.0) + qty)
            market.flows.risky_cash -= cost
            market.flows.risky_units += qty
    risky_book.record_step()

    # government bonds: infinitely liquid at par against the external desk
    bond_book = market.books[AssetId.GOV_BOND]
    for order in bond_book.orders:
        holder = agents[order.agent]
        if order.side is Side.SELL:
            qty = min(order.quantity, holder.available(AssetId.GOV_BOND))
            if qty <= 0.0:
                continue
            holder.sheet.cash += qty
            holder.sheet.holdings[AssetId.GOV_BOND] = (
                holder.sheet.holdings.get(AssetId.GOV_BOND, 0.0) - qty)
            market.flows.bond_cash += qty
            market.flows.bond_units -= qty
        else:
            qty = min(order.quantity, holder.sheet.cash)
            if qty <= 0.0:
                continue
            holder.sheet.cash -= qty
            holder.sheet.holdings[AssetId.GOV_BOND] = (
                holder.sheet.holdings.get(AssetId.GOV_BOND, 0.0) + qty)
            market.flows.bond_cash -= qty
            market.flows.bond_units += qty
    bond_book.record_step()
    market.stock_price_history.append(market.prices[AssetId.STOCK])


def _relever_banks(market: MarketState, step: int) -> None:
    """Banks below their leverage target borrow against the risky asset and
    reinvest the proceeds, provided the collateral is liquid enough.

    Funding is drawn from existing repo counterparties first, then from other
    MMFs in id order; the purchase happens in the same pass so borrowed cash
    never leaks out as a profit distribution.
    """
    s = market.scenario
    price = market.prices[AssetId.RISKY]
    haircut = market.required_haircut(AssetId.RISKY)
    p_sell = market.effective_p_sell(AssetId.RISKY)
    if price <= 0.0 or haircut >= 1.0 or p_sell < s.liquidity.buy_threshold:
        return
    mmfs = market.agents_of_kind(AgentKind.MMF)
    for agent in market.agents_of_kind(AgentKind.BANK):
        if (agent.state is not SolvencyState.SOLVENT or agent.fly_to_liquidity
                or market.unmet_obligations(agent) > 0.0):
            continue
        lev = market.leverage_of(agent)
        if lev is None or lev >= agent.target_leverage - 0.1:
            continue
        ta = total_assets(agent.sheet, market.prices)
        nav = ta - agent.sheet.liabilities()
        # aim at the post-payout balance sheet: retained cash above target will
        # be distributed later this step, shrinking both TA and NAV
        payout_est = max(0.0, agent.sheet.cash - agent.cash_target_fraction * ta)
        nav_est = nav - payout_est
        if nav_est <= 0.0:
            continue
        needed = agent.target_leverage * nav_est - (ta - payout_est)
        capacity = agent.available(AssetId.RISKY) * price * (1.0 - haircut)
        remaining = min(needed, capacity)
        if remaining <= 1e-6:
            continue
        partners = [r for r in market.open_repos_of(agent.id)
                    if not r.terminating and r.collateral_asset is AssetId.RISKY]
        lender_order = [market.agents_by_id[r.lender] for r in partners]
        lender_order += [m for m in mmfs if m not in lender_order]
        borrowed = 0.0
        for lender in lender_order:
            if remaining <= 1e-6:
                break
            if not lender.alive:
                continue
            reserve = lender.cash_target_fraction * total_assets(lender.sheet,
                                                                 market.prices)
            spare = lender.sheet.cash - reserve
            amount = min(remaining, spare)
            if amount <= 1e-6:
                continue
            quantity = amount / ((1.0 - haircut) * price)
            existing = next((r for r in partners if r.lender == lender.id), None)
            lender.sheet.cash -= amount
            agent.sheet.cash += amount
            lender.sheet.repo_lent += amount
            agent.sheet.repo_borrowed += amount
            agent.encumber(AssetId.RISKY, quantity)
            if existing is not None:
                existing.principal += amount
                existing.collateral_quantity += quantity
                existing.haircut = haircut
            else:
                repo = RepoContract(market.new_contract_id(), lender.id,
                                    agent.id, AssetId.RISKY, quantity, amount,
                                    haircut, opened_at=step)
                market.register_repo(repo)
                partners.append(repo)
            borrowed += amount
            remaining -= amount
        if borrowed > 0.0:
            # reinvest immediately: new risky exposure via origination
            qty = borrowed / price
            agent.sheet.cash -= borrowed
            agent.sheet.holdings[AssetId.RISKY] = (
                agent.sheet.holdings.get(AssetId.RISKY, 0.0) + qty)
            market.flows.risky_cash -= borrowed
            market.flows.risky_units += qty


def _request_liquidity(market: MarketState, step: int) -> None:
    """Banks short of cash for due obligations tap the interbank market."""
    banks = market.agents_of_kind(AgentKind.BANK)
    s = market.scenario

    class _PSell:
        def price(self, asset):
            return market.prices[asset]

        def eff(self, asset):
            return market.effective_p_sell(asset)

    adapter = _PSell()
    for agent in banks:
        if not agent.alive:
            continue
        need = market.unmet_obligations(agent) - agent.sheet.cash
        if need <= 1e-9:
            continue
        outstanding = (sum(l.principal for l in market.open_loans_of(agent.id))
                       + agent.sheet.arrears_total())
        loan = request_interbank_loan(
            agent, need, banks, r_f=s.market.r_f, p_sell=adapter,
            outstanding_loans=outstanding, opened_at=step,
            contract_id=market.new_contract_id(),
            reserve_fraction=lambda lender: (
                lender.cash_target_fraction
                * total_assets(lender.sheet, market.prices)))
        if loan is not None:
            market.register_loan(loan)
            from .funding import pay_arrears, pay_down_repo
            pay_arrears(agent, market.agents_by_id)
            for repo in market.open_repos_of(agent.id):
                if repo.terminating and agent.sheet.cash > 0.0:
                    pay_down_repo(repo, market.agents_by_id[repo.lender], agent,
                                  agent.sheet.cash,
                                  market.prices[repo.collateral_asset],
                                  release_excess=False)


def _queue_fire_sales(market: MarketState, agent: Agent) -> None:
    shortfall = market.unmet_obligations(agent) - agent.sheet.cash
    if shortfall <= 0.0:
        return
    for asset, qty in select_liquidation_order(agent, market):
        price = market.prices[asset]
        if price <= 0.0:
            continue
        take = min(qty, shortfall / price)
        if take > 1e-12:
            market.pending_orders.append(
                QueuedOrder(agent.id, asset, Side.SELL, take, fire_sale=True))
            shortfall -= take * price
        if shortfall <= 0.0:
            break


def _resolve_bankruptcy(market: MarketState, agent: Agent) -> None:
    """Distribute a bankrupt agent's estate and tombstone the row.

    Repo lenders seize pledged collateral at market value (capped at what
    they are owed); unsecured creditors split the remaining cash and
    unencumbered holdings pro rata, in kind. Whatever is left stays frozen
    on the dead balance sheet.
    """
    agents = market.agents_by_id
    sheet = agent.sheet
    unsecured: dict[int, float] = {}

    for creditor_id, owed in sheet.arrears.items():
        unsecured[creditor_id] = unsecured.get(creditor_id, 0.0) + owed
    sheet.arrears = {}

    for loan in market.open_loans_of(agent.id):
        lender = agents[loan.lender]
        unsecured[loan.lender] = unsecured.get(loan.lender, 0.0) + loan.repayment
        lender.sheet.loans_lent -= loan.principal
        sheet.loans_borrowed -= loan.principal
        loan.active = False

    for repo in market.open_repos_of(agent.id):
        lender = agents[repo.lender]
        price = market.prices[repo.collateral_asset]
        value = repo.collateral_quantity * price
        if value > repo.principal and price > 0.0:
            seized_qty = repo.principal / price
        else:
            seized_qty = repo.collateral_quantity
        recovered = seized_qty * price
        sheet.holdings[repo.collateral_asset] = (
            sheet.holdings.get(repo.collateral_asset, 0.0) - seized_qty)
        lender.sheet.holdings[repo.collateral_asset] = (
            lender.sheet.holdings.get(repo.collateral_asset, 0.0) + seized_qty)
        agent.release(repo.collateral_asset, repo.collateral_quantity)
        shortfall = repo.principal - recovered
        if shortfall > 1e-9:
            unsecured[repo.lender] = unsecured.get(repo.lender, 0.0) + shortfall
        lender.sheet.repo_lent -= repo.principal
        sheet.repo_borrowed -= repo.principal
        repo.collateral_quantity = 0.0
        repo.active = False

    total_claims = sum(unsecured.values())
    if total_claims > 0.0:
        estate_cash = sheet.cash
        estate_units = {asset: max(0.0, sheet.holdings.get(asset, 0.0))
                        for asset in AssetId}
        estate_value = estate_cash + sum(
            qty * market.prices[asset] for asset, qty in estate_units.items())
        ratio = min(1.0, estate_value / total_claims) if estate_value > 0.0 else 0.0
        if ratio > 0.0:
            for creditor_id in sorted(unsecured):
                share = unsecured[creditor_id] * ratio / estate_value
                creditor = agents[creditor_id]
                creditor.sheet.cash += share * estate_cash
                sheet.cash -= share * estate_cash
                for asset, qty in estate_units.items():
                    moved = share * qty
                    if moved <= 0.0:
                        continue
                    creditor.sheet.holdings[asset] = (
                        creditor.sheet.holdings.get(asset, 0.0) + moved)
                    sheet.holdings[asset] = sheet.holdings.get(asset, 0.0) - moved
    sheet.deposits = 0.0
    agent.state = SolvencyState.BANKRUPT
    agent.fly_to_liquidity = False


def _distribute_payouts(market: MarketState) -> None:
    """Healthy agents stream excess cash to outside investors, which pins
    balance-sheet scale despite per-step interest income."""
    for agent in market.agents:
        if not agent.alive or agent.state is not SolvencyState.SOLVENT:
            continue
        if agent.fly_to_liquidity or market.unmet_obligations(agent) > 0.0:
            continue
        ta = total_assets(agent.sheet, market.prices)
        if agent.kind is AgentKind.BANK:
            lev = market.leverage_of(agent)
            if lev is None or lev > agent.target_leverage + 1e-9:
                continue
        payout = agent.sheet.cash - agent.cash_target_fraction * ta
        if payout > 1e-9:
            agent.sheet.cash -= payout
            market.flows.payouts += payout


def _avg_bank_leverage(market: MarketState) -> float:
    levs = []
    for agent in market.agents_of_kind(AgentKind.BANK):
        if not agent.alive:
            continue
        lev = market.leverage_of(agent)
        if lev is not None:
            levs.append(lev)
    return sum(levs) / len(levs) if levs else 0.0


def _avg_required_haircut(market: MarketState) -> float:
    haircuts = [market.required_haircut(r.collateral_asset)
                for r in market.repos.values() if r.active]
    if not haircuts:
        return market.required_haircut(AssetId.RISKY)
    return sum(haircuts) / len(haircuts)


def _make_report(market: MarketState, fire_sale_volume: float,
                 n_transitions: int, cash_error: float,
                 unit_errors: tuple) -> StepReport:
    counts = {state: 0 for state in SolvencyState}
    bank_counts = {state: 0 for state in SolvencyState}
    n_fly = 0
    for agent in market.agents:
        counts[agent.state] += 1
        if agent.kind is AgentKind.BANK:
            bank_counts[agent.state] += 1
        if agent.fly_to_liquidity and agent.alive:
            n_fly += 1
    return StepReport(
        step=market.step,
        n_solvent=counts[SolvencyState.SOLVENT],
        n_defaulted=counts[SolvencyState.DEFAULTED],
        n_bankrupt=counts[SolvencyState.BANKRUPT],
        avg_leverage=_avg_bank_leverage(market),
        avg_haircut=_avg_required_haircut(market),
        stock_price=market.prices[AssetId.STOCK],
        risky_price=market.prices[AssetId.RISKY],
        risky_p_sell=market.effective_p_sell(AssetId.RISKY),
        fire_sale_volume=fire_sale_volume,
        n_solvent_banks=bank_counts[SolvencyState.SOLVENT],
        n_defaulted_banks=bank_counts[SolvencyState.DEFAULTED],
        n_bankrupt_banks=bank_counts[SolvencyState.BANKRUPT],
        n_fly_to_liquidity=n_fly,
        n_transitions=n_transitions,
        total_repo_principal=sum(r.principal for r in market.repos.values()
                                 if r.active),
        cash_error=cash_error,
        unit_errors=unit_errors)


def simulation_step(market: MarketState) -> StepReport:
    """Advance the market one step through the fixed phase order:
    accrual, decisions, clearing, liquidity metrics, funding settlement,
    interbank liquidity, solvency transitions with fire sales, payouts,
    reporting. Deterministic given the market and its RNG state.
    """
    s = market.scenario
    market.step += 1
    step = market.step
    market.flows = FlowTally()
    cash_before = sum(a.sheet.cash for a in market.agents)
    units_before = {asset: sum(a.sheet.holdings.get(asset, 0.0)
                               for a in market.agents) for asset in AssetId}

    # 1. dividend draw and interest accrual
    dividend = step_dividend(market.dividend,
                             float(market.dividend_rng.normal(0.0, market.dividend.sigma_mu)))
    market.last_dividend = dividend
    bond_price = market.prices[AssetId.GOV_BOND]
    risky_price = market.prices[AssetId.RISKY]
    for agent in market.agents:
        if not agent.alive:
            continue
        sheet = agent.sheet
        interest = (sheet.holdings.get(AssetId.GOV_BOND, 0.0) * bond_price * s.market.r_f
                    + sheet.holdings.get(AssetId.RISKY, 0.0) * risky_price * s.market.r_r)
        divs = sheet.holdings.get(AssetId.STOCK, 0.0) * dividend
        sheet.cash += interest + divs
        market.flows.interest += interest
        market.flows.dividends += divs

    # 2. order placement from an immutable snapshot
    fire_sale_volume = _submit_pending(market)
    _place_decisions(market)

    # 3. clearing and price formation
    _clear_markets(market)

    # 4./5. liquidity metrics feed the funding settlement
    settle_overnight_obligations(market, step)
    _relever_banks(market, step)

    # 6. interbank loans for remaining cash needs
    _request_liquidity(market, step)

    # 7. solvency transitions, fire sales, risk-limit flags
    n_transitions = 0
    new_bankrupt: list[Agent] = []
    for agent in market.agents:
        if not agent.alive:
            continue
        new_state = transition_solvency(agent, market)
        if new_state is not agent.state:
            n_transitions += 1
        agent.state = new_state
        if new_state is SolvencyState.DEFAULTED:
            _queue_fire_sales(market, agent)
        elif new_state is SolvencyState.BANKRUPT:
            new_bankrupt.append(agent)
    for agent in new_bankrupt:
        _resolve_bankruptcy(market, agent)
    for agent in market.agents:
        if agent.alive and agent.state is SolvencyState.SOLVENT:
            check_risk_limits(agent, market)

    # 7b. profit distribution by healthy agents
    _distribute_payouts(market)

    # 8. audit and report
    cash_after = sum(a.sheet.cash for a in market.agents)
    expected = cash_before + market.flows.net_cash()
    scale = max(1.0, abs(cash_after), abs(expected))
    cash_error = abs(cash_after - expected) / scale
    unit_errors = []
    flows_units = {AssetId.GOV_BOND: market.flows.bond_units,
                   AssetId.STOCK: 0.0,
                   AssetId.RISKY: market.flows.risky_units}
    for asset in AssetId:
        after = sum(a.sheet.holdings.get(asset, 0.0) for a in market.agents)
        exp_units = units_before[asset] + flows_units[asset]
        u_scale = max(1.0, abs(after), abs(exp_units))
        unit_errors.append(abs(after - exp_units) / u_scale)
    for agent in market.agents:
        if agent.alive:
            agent.nav_history.append(
                total_assets(agent.sheet, market.prices) - agent.sheet.liabilities())
    return _make_report(market, fire_sale_volume, n_transitions,
                        cash_error, tuple(unit_errors))


def run_simulation(scenario: Scenario, seed: int | None = None) -> RunResult:
    """Build the market, run warmup, inject the shock, run to the horizon."""
    problems = validate_scenario(scenario)
    if problems:
        raise ScenarioError("; ".join(problems))
    if seed is None:
        seed = scenario.run.seed
    market = build_market(scenario, seed)
    reports = [_make_report(market, 0.0, 0, 0.0, (0.0, 0.0, 0.0))]
    shock = Shock(scenario.shock.p, scenario.shock.q, scenario.shock_step)
    mtm: list[MarkToMarketRecord] = []
    for step in range(1, scenario.total_steps + 1):
        if step == shock.at_step and not market.shock_applied:
            inject_shock(market, shock)
            mtm = apply_mark_to_market(market, shock)
        reports.append(simulation_step(market))

    banks = market.agents_of_kind(AgentKind.BANK)
    pre_idx = min(max(0, shock.at_step - 1), len(reports) - 1)
    equilibrium_step = None
    quiet = 0
    for report in reports[1:]:
        quiet = quiet + 1 if report.n_transitions == 0 else 0
        if quiet >= 20 and equilibrium_step is None and report.step > shock.at_step:
            equilibrium_step = report.step
    last = reports[-1]
    summary = RunSummary(
        seed=seed,
        bank_count=len(banks),
        final_solvent=last.n_solvent,
        final_defaulted=last.n_defaulted,
        final_bankrupt=last.n_bankrupt,
        final_bankrupt_banks=last.n_bankrupt_banks,
        peak_haircut=max(r.avg_haircut for r in reports),
        pre_shock_avg_leverage=reports[pre_idx].avg_leverage,
        final_avg_leverage=last.avg_leverage,
        equilibrium_step=equilibrium_step)
    return RunResult(scenario, seed, reports, summary, market, mtm)
