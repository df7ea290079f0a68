"""Quantitative risk formulas: delta-normal VaR, selling probability, haircut, interbank spread."""

from __future__ import annotations

import math
from dataclasses import dataclass


class LoanDenied(Exception):
    """Risk premium is unbounded: no liquid assets back the outstanding loans."""


@dataclass
class VarParams:
    confidence_x: float = 1.645
    horizon: int = 1
    window: int = 20


@dataclass
class LiquidityParams:
    horizon_n: int = 3


def delta_normal_var(mu: float, sigma_p: float, x: float) -> float:
    """VaR as x*sigma - mu; negative when the expected gain dominates."""
    if sigma_p < 0.0:
        raise ValueError("sigma_p must be non-negative")
    return x * sigma_p - mu


def selling_probability(history, n: int) -> float:
    """Probability a seller finds a buyer, from order-flow imbalance.

    ``history`` holds (sell_volume, buy_volume) pairs for the most recent
    steps; only the last ``n`` entries are used. With no sell volume in the
    window the result is 1 by convention: absence of selling pressure is not
    evidence of illiquidity.
    """
    if n < 1:
        raise ValueError("horizon n must be at least 1")
    window = list(history)[-n:]
    sells = sum(s for s, _ in window)
    buys = sum(b for _, b in window)
    if sells < 0.0 or buys < 0.0:
        raise ValueError("volumes must be non-negative")
    if sells <= 0.0:
        return 1.0
    p = 1.0 - max(0.0, sells - buys) / sells
    return min(1.0, max(0.0, p))


def compute_haircut(p_sell: float) -> float:
    """Required haircut is one minus the selling probability."""
    if not 0.0 <= p_sell <= 1.0:
        raise ValueError("p_sell must lie in [0, 1]")
    return 1.0 - p_sell


def interbank_spread(outstanding_loans: float, portfolio) -> float:
    """Risk premium: outstanding loan total over liquidity-weighted asset value.

    ``portfolio`` is an iterable of (asset_value, p_sell) pairs. Raises
    LoanDenied when loans are outstanding but no liquidity-weighted value
    backs them (the premium would be infinite).
    """
    if outstanding_loans < 0.0:
        raise ValueError("outstanding loans must be non-negative")
    weighted = 0.0
    for value, p_sell in portfolio:
        if value < 0.0:
            raise ValueError("asset values must be non-negative")
        weighted += value * p_sell
    if outstanding_loans == 0.0:
        return 0.0
    if weighted <= 0.0:
        raise LoanDenied("no liquid assets back the outstanding loans")
    return outstanding_loans / weighted


def portfolio_change_stats(values) -> tuple[float, float]:
    """Mean and sample std of one-step changes in a portfolio value series."""
    vals = list(values)
    if len(vals) < 2:
        return 0.0, 0.0
    changes = [b - a for a, b in zip(vals, vals[1:])]
    mu = sum(changes) / len(changes)
    if len(changes) < 2:
        return mu, 0.0
    var = sum((c - mu) ** 2 for c in changes) / (len(changes) - 1)
    return mu, math.sqrt(max(0.0, var))
