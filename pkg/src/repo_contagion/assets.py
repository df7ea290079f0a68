"""Asset processes, order books, price formation, FIFO clearing, fire-sale discounts."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from .core import Agent, Settlement, apply_trade


class AssetId(Enum):
    GOV_BOND = "gov_bond"
    STOCK = "stock"
    RISKY = "risky"


class Side(Enum):
    BUY = 1
    SELL = -1


@dataclass
class Rates:
    r_f: float = 0.10
    r_r: float = 0.11


@dataclass
class DividendState:
    """AR(1) dividend process state; d_prev carries the last paid dividend."""

    d_prev: float = 10.0
    d_bar: float = 10.0
    rho_ar: float = 0.95
    sigma_mu: float = 0.5


def step_dividend(state: DividendState, noise: float) -> float:
    """Advance the dividend one step given the gaussian innovation, clamped at 0."""
    d = state.d_bar + state.rho_ar * (state.d_prev - state.d_bar) + noise
    d = max(0.0, d)
    state.d_prev = d
    return d


def accrue_interest(holding_value: float, rate: float) -> float:
    """Simple per-period interest on a holding value."""
    if rate < 0.0:
        raise ValueError("interest rate must be non-negative")
    return holding_value * rate


@dataclass
class Order:
    agent: int
    asset: AssetId
    side: Side
    quantity: float
    arrival_seq: int
    fire_sale: bool = False


@dataclass(frozen=True)
class StepVolumes:
    buy: float
    sell: float


@dataclass
class OrderBook:
    """Market orders for one asset at one step plus a short volume history."""

    asset: AssetId
    history_window: int = 3
    orders: list = field(default_factory=list)
    history: deque = field(init=False)
    _seq: int = field(default=0, repr=False)

    def __post_init__(self):
        self.history = deque(maxlen=self.history_window)

    def submit(self, agent_id: int, side: Side, quantity: float,
               fire_sale: bool = False) -> Order:
        if quantity < 0.0 or not math.isfinite(quantity):
            raise ValueError("order quantity must be finite and non-negative")
        order = Order(agent_id, self.asset, side, quantity, self._seq, fire_sale)
        self._seq += 1
        self.orders.append(order)
        return order

    def submitted_volumes(self) -> StepVolumes:
        buy = sum(o.quantity for o in self.orders if o.side is Side.BUY)
        sell = sum(o.quantity for o in self.orders if o.side is Side.SELL)
        return StepVolumes(buy, sell)

    def record_step(self) -> StepVolumes:
        """Push this step's totals into the history window and reset the book."""
        vols = self.submitted_volumes()
        self.history.append(vols)
        self.orders = []
        return vols

    def add_buy_volume(self, quantity: float) -> None:
        """Fold late buy interest (e.g. primary-market orders) into the most
        recent history entry so liquidity metrics see it."""
        if not self.history:
            self.history.append(StepVolumes(0.0, 0.0))
        last = self.history[-1]
        self.history[-1] = StepVolumes(last.buy + quantity, last.sell)

    def sell_buy_history(self) -> list[tuple[float, float]]:
        return [(v.sell, v.buy) for v in self.history]


@dataclass
class PriceState:
    prices: dict
    shares_outstanding_stock: float = 1e6
    impact_coefficient: float = 1.0
    fire_sale_discount: float = 0.3


def total_order_imbalance(book: OrderBook, phi: float) -> float:
    """Net submitted order volume normalized by shares outstanding."""
    if phi <= 0.0:
        raise ValueError("shares outstanding must be positive")
    vols = book.submitted_volumes()
    return (vols.buy - vols.sell) / phi


def update_stock_price(price: float, q_imbalance: float, kappa: float) -> float:
    """Multiplicative exponential impact: positive, monotone, symmetric."""
    if price <= 0.0:
        raise ValueError("price must be positive")
    return price * math.exp(kappa * q_imbalance)


def match_orders_fifo(book: OrderBook, price: float, agents: dict):
    """FIFO match; returns (settlements, residual buys, residual sells).

    Residual lists hold (order, remaining quantity) pairs in arrival order,
    including orders dropped at their feasibility clamp.
    """
    buys = [[o, o.quantity] for o in book.orders if o.side is Side.BUY]
    sells = [[o, o.quantity] for o in book.orders if o.side is Side.SELL]
    buys.sort(key=lambda e: e[0].arrival_seq)
    sells.sort(key=lambda e: e[0].arrival_seq)
    settlements: list[Settlement] = []
    bi = si = 0
    while bi < len(buys) and si < len(sells):
        border, brem = buys[bi]
        sorder, srem = sells[si]
        want = min(brem, srem)
        if want <= 0.0:
            if brem <= 0.0:
                bi += 1
            if srem <= 0.0:
                si += 1
            continue
        buyer = agents[border.agent]
        seller = agents[sorder.agent]
        sett = apply_trade(buyer, seller, book.asset, want, price)
        if sett.filled > 0.0:
            settlements.append(sett)
        buys[bi][1] -= sett.filled
        sells[si][1] -= sett.filled
        if sett.filled < want:
            # one side hit its feasibility clamp; drop the exhausted order(s)
            seller_dry = seller.available(book.asset) <= 1e-12
            buyer_dry = price <= 0.0 or buyer.sheet.cash < price * 1e-12
            if seller_dry:
                si += 1
            if buyer_dry:
                bi += 1
            if not seller_dry and not buyer_dry:
                bi += 1
    residual_buys = [(o, rem) for o, rem in buys if rem > 0.0]
    residual_sells = [(o, rem) for o, rem in sells if rem > 0.0]
    return settlements, residual_buys, residual_sells


def clear_orders_fifo(book: OrderBook, price: float, agents: dict) -> list[Settlement]:
    """Match buys against sells in arrival order at the step's price.

    Every fill is routed through apply_trade, so infeasible remainders are
    dropped and conservation holds. The residual of the heavier side stays
    unfilled; callers read volumes from the book history for liquidity stats.
    """
    settlements, _, _ = match_orders_fifo(book, price, agents)
    return settlements


def apply_fire_sale_discount(price: float, fire_selling_fraction: float,
                             d: float) -> float:
    """Linear markdown in the fraction of agents fire-selling; floored at 0."""
    if not 0.0 <= fire_selling_fraction <= 1.0:
        raise ValueError("fire_selling_fraction must lie in [0, 1]")
    if not 0.0 <= d < 1.0:
        raise ValueError("discount d must lie in [0, 1)")
    return max(0.0, price * (1.0 - d * fire_selling_fraction))
