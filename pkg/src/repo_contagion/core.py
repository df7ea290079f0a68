"""Balance-sheet accounting, agent identity and state, trade settlement."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum


class AgentKind(Enum):
    BANK = "bank"
    MMF = "mmf"
    HEDGE_FUND = "hedge_fund"


class SolvencyState(Enum):
    SOLVENT = "solvent"
    DEFAULTED = "defaulted"
    BANKRUPT = "bankrupt"


class ConfigurationError(ValueError):
    """A held asset has no finite positive quoted price."""


class InsolventLeverage(ArithmeticError):
    """Leverage is undefined when NAV is not strictly positive."""


@dataclass
class RiskLimits:
    max_leverage: float = 7.0
    var_limit_fraction: float = 0.05
    liquidity_floor: float = 0.3


@dataclass
class BalanceSheet:
    """Cash, asset holdings and funding positions of one agent.

    Funding receivables (principal lent through repos and interbank loans)
    count as assets so that opening a contract is NAV-neutral on both sides.
    ``arrears`` holds unpaid past-due amounts keyed by creditor id; they stay
    on the book as liabilities until paid or written off in bankruptcy.
    """

    cash: float = 0.0
    holdings: dict = field(default_factory=dict)
    deposits: float = 0.0
    repo_borrowed: float = 0.0
    loans_borrowed: float = 0.0
    repo_lent: float = 0.0
    loans_lent: float = 0.0
    arrears: dict = field(default_factory=dict)

    def arrears_total(self) -> float:
        return sum(self.arrears.values())

    def liabilities(self) -> float:
        return (self.deposits + self.repo_borrowed + self.loans_borrowed
                + self.arrears_total())

    def add_arrears(self, creditor: int, amount: float) -> None:
        if amount <= 0.0:
            return
        self.arrears[creditor] = self.arrears.get(creditor, 0.0) + amount


def total_assets(sheet: BalanceSheet, prices: dict) -> float:
    """Cash plus marked holdings plus funding receivables."""
    ta = sheet.cash + sheet.repo_lent + sheet.loans_lent
    for asset, qty in sheet.holdings.items():
        if qty == 0.0:
            continue
        price = prices.get(asset)
        if price is None or not math.isfinite(price) or price < 0.0:
            raise ConfigurationError(f"no usable price for held asset {asset!r}")
        ta += qty * price
    return ta


def compute_nav(sheet: BalanceSheet, prices: dict) -> float:
    """Net asset value: total assets minus total liabilities; may be negative."""
    return total_assets(sheet, prices) - sheet.liabilities()


def compute_leverage(sheet: BalanceSheet, prices: dict) -> float:
    """Total assets over NAV. Raises InsolventLeverage when NAV <= 0."""
    ta = total_assets(sheet, prices)
    nav = ta - sheet.liabilities()
    if nav <= 0.0:
        raise InsolventLeverage(f"NAV {nav} is not positive")
    return ta / nav


@dataclass
class Agent:
    id: int
    kind: AgentKind
    sheet: BalanceSheet
    limits: RiskLimits = field(default_factory=RiskLimits)
    strategy: object | None = None
    state: SolvencyState = SolvencyState.SOLVENT
    fly_to_liquidity: bool = False
    encumbered: dict = field(default_factory=dict)
    target_leverage: float = 1.0
    cash_target_fraction: float = 0.05
    initial_nav: float = 0.0
    nav_history: deque = field(default_factory=lambda: deque(maxlen=64))

    def available(self, asset) -> float:
        """Quantity free to sell: holdings net of pledged collateral."""
        held = self.sheet.holdings.get(asset, 0.0)
        return max(0.0, held - self.encumbered.get(asset, 0.0))

    def encumber(self, asset, quantity: float) -> None:
        self.encumbered[asset] = self.encumbered.get(asset, 0.0) + quantity

    def release(self, asset, quantity: float) -> None:
        left = self.encumbered.get(asset, 0.0) - quantity
        self.encumbered[asset] = max(0.0, left)

    @property
    def alive(self) -> bool:
        return self.state is not SolvencyState.BANKRUPT


@dataclass(frozen=True)
class Settlement:
    buyer: int
    seller: int
    asset: object
    requested: float
    filled: float
    price: float

    @property
    def rejected(self) -> float:
        return self.requested - self.filled

    @property
    def value(self) -> float:
        return self.filled * self.price


def apply_trade(buyer: Agent, seller: Agent, asset, quantity: float,
                price: float) -> Settlement:
    """Settle a trade between two agents, clamped to what is feasible.

    The fill never exceeds the seller's unencumbered holdings or what the
    buyer's cash can pay for; the infeasible remainder is dropped. Cash and
    quantity move symmetrically so system totals are conserved exactly.
    """
    if quantity < 0.0:
        raise ValueError("trade quantity must be non-negative")
    fill = min(quantity, seller.available(asset))
    if price > 0.0:
        fill = min(fill, buyer.sheet.cash / price)
    fill = max(0.0, fill)
    if fill > 0.0:
        value = fill * price
        buyer.sheet.cash -= value
        seller.sheet.cash += value
        buyer.sheet.holdings[asset] = buyer.sheet.holdings.get(asset, 0.0) + fill
        seller.sheet.holdings[asset] = seller.sheet.holdings.get(asset, 0.0) - fill
        if buyer.sheet.cash < 0.0:  # guard against float residue only
            buyer.sheet.cash = 0.0 if buyer.sheet.cash > -1e-9 else buyer.sheet.cash
    return Settlement(buyer.id, seller.id, asset, quantity, fill, price)


def transition_solvency(agent: Agent, market) -> SolvencyState:
    """Evaluate the solvency state an agent should move to.

    Rules: an unpayable due obligation moves Solvent to Defaulted; a Defaulted
    agent with everything paid and positive NAV recovers; a Defaulted agent
    whose assets cannot cover its obligations, or that cannot turn assets into
    cash, goes Bankrupt. Bankrupt is absorbing and never re-entered here.
    """
    if agent.state is SolvencyState.BANKRUPT:
        raise ValueError("transition_solvency called on a bankrupt agent")
    nav = compute_nav(agent.sheet, market.prices)
    floor = market.insolvency_nav_floor
    due = market.unmet_obligations(agent)
    if due <= 0.0:
        if nav >= floor:
            return SolvencyState.SOLVENT
        # insolvent on value alone: first strike defaults, second bankrupts
        return (SolvencyState.BANKRUPT if agent.state is SolvencyState.DEFAULTED
                else SolvencyState.DEFAULTED)
    if agent.state is SolvencyState.DEFAULTED:
        liquid = agent.sheet.cash + market.liquidation_value(agent)
        if nav < floor or liquid < due:
            return SolvencyState.BANKRUPT
    return SolvencyState.DEFAULTED


def total_cash(agents) -> float:
    return sum(a.sheet.cash for a in agents)


def total_holdings(agents, asset) -> float:
    return sum(a.sheet.holdings.get(asset, 0.0) for a in agents)
