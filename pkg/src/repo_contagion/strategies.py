"""Per-agent trading decisions: noise, fundamental and technical stock traders,
plus the liquidation ordering used for fire sales and fly-to-liquidity."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Union

from .assets import AssetId
from .core import Agent

BUY, SELL, HOLD = 1, -1, 0


class InsufficientHistory(ValueError):
    """The price series is too short for the requested indicator window."""


@dataclass(frozen=True)
class NoiseTrader:
    p_buy: float = 0.4
    p_sell: float = 0.4
    p_hold: float = 0.2

    def __post_init__(self):
        total = self.p_buy + self.p_sell + self.p_hold
        if min(self.p_buy, self.p_sell, self.p_hold) < 0.0 or abs(total - 1.0) > 1e-9:
            raise ValueError("noise probabilities must be non-negative and sum to 1")


@dataclass(frozen=True)
class FundamentalTrader:
    tau: float = 0.3


class Indicator(Enum):
    MA = "ma"
    TRB = "trb"
    FILTER = "filter"
    VOL = "vol"
    MOM = "mom"
    MOM_MA = "mom_ma"


@dataclass(frozen=True)
class TechnicalRuleParams:
    window: int = 10
    buy_threshold: float = 0.05
    sell_threshold: float = -0.05
    indicators: tuple = tuple(Indicator)


@dataclass(frozen=True)
class TechnicalTrader:
    params: TechnicalRuleParams = field(default_factory=TechnicalRuleParams)


StrategyAssignment = Union[NoiseTrader, FundamentalTrader, TechnicalTrader]


def noise_decision(trader: NoiseTrader, rng) -> int:
    """Buy with p_buy, sell with p_sell, otherwise hold."""
    u = rng.random()
    if u < trader.p_buy:
        return BUY
    if u < trader.p_buy + trader.p_sell:
        return SELL
    return HOLD


def fundamental_decision(price: float, dividend: float, r_f: float,
                         tau: float) -> int:
    """Compare price with the perpetuity value of the current dividend.

    Buys when price is below value by more than the tolerance band tau,
    sells when above it, holds inside the band.
    """
    if price <= 0.0 or r_f <= 0.0:
        raise ValueError("price and r_f must be positive")
    value = dividend / r_f
    if price < value * (1.0 - tau):
        return BUY
    if price > value * (1.0 + tau):
        return SELL
    return HOLD


def compute_indicator(kind: Indicator, window: int, price_history) -> float:
    """Evaluate one technical indicator on a price series ending at the
    current price (last element)."""
    prices = list(price_history)
    if window < 1:
        raise ValueError("window must be at least 1")
    needed = 2 * window + 1 if kind is Indicator.MOM_MA else window + 1
    if len(prices) < needed:
        raise InsufficientHistory(
            f"{kind.value} needs {needed} prices, got {len(prices)}")
    current = prices[-1]
    prev = prices[-1 - window:-1]  # the window prices before the current one
    if kind is Indicator.MA:
        mean = sum(prev) / window
        return (current - mean) / mean
    if kind is Indicator.TRB:
        top = max(prev)
        return (current - top) / top
    if kind is Indicator.FILTER:
        low = min(prev)
        return (current - low) / low
    if kind is Indicator.VOL:
        # dispersion of the window ending one step back, on the window mean
        recent = prices[-window:-1] if window > 1 else prices[-2:-1]
        mean_r = sum(recent) / len(recent)
        var = sum((p - mean_r) ** 2 for p in recent) / len(recent)
        mean = sum(prev) / window
        return math.sqrt(var) / mean
    if kind is Indicator.MOM:
        return current - prices[-1 - window]
    if kind is Indicator.MOM_MA:
        total = 0.0
        for i in range(1, window + 1):
            total += prices[-1 - i] - prices[-1 - i - window]
        return total / window
    raise ValueError(f"unknown indicator {kind!r}")


def technical_decision(indicators: dict, params: TechnicalRuleParams) -> int:
    """Majority vote over per-indicator signals; ties hold."""
    votes = 0
    for value in indicators.values():
        if value > params.buy_threshold:
            votes += 1
        elif value < params.sell_threshold:
            votes -= 1
    if votes > 0:
        return BUY
    if votes < 0:
        return SELL
    return HOLD


LIQUIDATION_PRIORITY = (AssetId.RISKY, AssetId.STOCK, AssetId.GOV_BOND)


def select_liquidation_order(agent: Agent, market=None) -> list[tuple[AssetId, float]]:
    """Unencumbered positions ordered most illiquid and risky first.

    Fire sales and fly-to-liquidity walk the same ordering; only the
    fire-sale flag on the resulting orders differs (fly-to-liquidity sells
    at normal volume and contributes no price discount).
    """
    out = []
    for asset in LIQUIDATION_PRIORITY:
        qty = agent.available(asset)
        if qty > 0.0:
            out.append((asset, qty))
    return out
