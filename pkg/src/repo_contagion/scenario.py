"""Run configuration: dataclasses, defaults, dotted-key file format, validation."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace


class ScenarioError(ValueError):
    """Configuration file or value problem; message names the offending keys."""


@dataclass
class AgentCounts:
    banks: int = 100
    hedge_funds: int = 200
    mmfs: int = 200


@dataclass
class NavPareto:
    a: float = 3.0
    m_banks: float = 1e8
    m_hedge: float = 1e7
    m_mmf: float = 2e8


@dataclass
class DepositPareto:
    a: float = 3.0
    m: float = 1.0
    # deposits alone may not push leverage past this share of the bank's limit
    cap_fraction: float = 0.9


@dataclass
class LeverageLimit:
    dist: str = "uniform"  # "uniform" or "pareto"
    a: float = 4.0
    b: float = 7.0


@dataclass
class TraderMix:
    noise: float = 1.0 / 3.0
    fundamental: float = 1.0 / 3.0
    technical: float = 1.0 / 3.0


@dataclass
class NoiseProbs:
    p_buy: float = 0.4
    p_sell: float = 0.4
    p_hold: float = 0.2


@dataclass
class TauRange:
    min: float = 0.1
    max: float = 0.5


@dataclass
class VarConfig:
    confidence_x: float = 1.645
    window: int = 20
    limit_fraction: float = 0.05


@dataclass
class LiquidityConfig:
    horizon_n: int = 3
    # banks only lever into the risky asset while it is at least this liquid
    buy_threshold: float = 0.9
    floor: float = 0.3


@dataclass
class ShockConfig:
    p: float = 0.8
    q: float = 0.3
    at_step: int = -1  # -1 resolves to warmup + 1


@dataclass
class MarketParams:
    r_f: float = 0.10
    r_r: float = 0.11
    dividend_mean: float = 10.0
    dividend_rho: float = 0.95
    dividend_sigma: float = 0.5
    impact_kappa: float = 1.0
    fire_sale_discount: float = 0.3
    shares_outstanding: float = 1e6


@dataclass
class PortfolioParams:
    cash_fraction: float = 0.05
    risky_deposit_share: float = 0.7
    target_leverage_fraction: float = 0.7
    bank_stock_share: float = 0.3
    hedge_stock_share: float = 0.7
    mmf_reserve_fraction: float = 0.1
    mmf_lend_cap: float = 0.6


@dataclass
class OrderParams:
    sell_fraction: float = 0.1
    buy_fraction: float = 0.1
    technical_window: int = 10
    technical_threshold: float = 0.05


@dataclass
class RunParams:
    warmup: int = 50
    horizon: int = 200
    seed: int = 0
    insolvency_nav_floor: float = 0.0


@dataclass
class Scenario:
    counts: AgentCounts = field(default_factory=AgentCounts)
    nav_pareto: NavPareto = field(default_factory=NavPareto)
    deposit_pareto: DepositPareto = field(default_factory=DepositPareto)
    leverage_limit: LeverageLimit = field(default_factory=LeverageLimit)
    traders: TraderMix = field(default_factory=TraderMix)
    noise: NoiseProbs = field(default_factory=NoiseProbs)
    tau: TauRange = field(default_factory=TauRange)
    var: VarConfig = field(default_factory=VarConfig)
    liquidity: LiquidityConfig = field(default_factory=LiquidityConfig)
    shock: ShockConfig = field(default_factory=ShockConfig)
    market: MarketParams = field(default_factory=MarketParams)
    portfolio: PortfolioParams = field(default_factory=PortfolioParams)
    orders: OrderParams = field(default_factory=OrderParams)
    run: RunParams = field(default_factory=RunParams)

    @property
    def total_steps(self) -> int:
        return self.run.warmup + self.run.horizon

    @property
    def shock_step(self) -> int:
        return self.run.warmup + 1 if self.shock.at_step < 0 else self.shock.at_step


def _key_table() -> dict:
    """dotted key -> (section attr, field attr, type)."""
    table = {}
    for section in fields(Scenario):
        sub = section.default_factory()  # type: ignore[misc]
        for f in fields(sub):
            table[f"{section.name}.{f.name}"] = (section.name, f.name, f.type)
    return table


KEY_TABLE = _key_table()

_TYPES = {"int": int, "float": float, "str": str}


def _parse_value(raw: str, type_name: str, key: str, line_no: int):
    typ = _TYPES[type_name]
    try:
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw
    except ValueError:
        raise ScenarioError(
            f"line {line_no}: key '{key}' expects {type_name}, got {raw!r}")


def set_scenario_value(scenario: Scenario, key: str, value) -> Scenario:
    """Return a scenario with one dotted key replaced (sections are copied)."""
    if key not in KEY_TABLE:
        raise ScenarioError(f"unknown key '{key}'")
    section_name, field_name, type_name = KEY_TABLE[key]
    typ = _TYPES[type_name]
    section = getattr(scenario, section_name)
    new_section = replace(section, **{field_name: typ(value)})
    return replace(scenario, **{section_name: new_section})


def get_scenario_value(scenario: Scenario, key: str):
    if key not in KEY_TABLE:
        raise ScenarioError(f"unknown key '{key}'")
    section_name, field_name, _ = KEY_TABLE[key]
    return getattr(getattr(scenario, section_name), field_name)


def load_scenario(path) -> Scenario:
    """Parse a dotted-key scenario file; unset keys take the defaults."""
    scenario = Scenario()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ScenarioError(
                    f"line {line_no}: expected 'key = value', got {line.rstrip()!r}")
            key, raw = (part.strip() for part in stripped.split("=", 1))
            if key not in KEY_TABLE:
                raise ScenarioError(f"line {line_no}: unknown key '{key}'")
            section_name, field_name, type_name = KEY_TABLE[key]
            value = _parse_value(raw, type_name, key, line_no)
            section = getattr(scenario, section_name)
            setattr(section, field_name, value)
    problems = validate_scenario(scenario)
    if problems:
        raise ScenarioError("; ".join(problems))
    return scenario


def write_scenario(scenario: Scenario, path) -> None:
    """Write every key so that load_scenario round-trips exactly."""
    lines = []
    for key in KEY_TABLE:
        value = get_scenario_value(scenario, key)
        text = value if isinstance(value, str) else repr(value)
        lines.append(f"{key} = {text}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def validate_scenario(scenario: Scenario) -> list[str]:
    """Return a list of human-readable problems; empty when valid."""
    s = scenario
    problems: list[str] = []

    def check(cond: bool, key: str, msg: str) -> None:
        if not cond:
            problems.append(f"{key}: {msg}")

    check(s.counts.banks >= 0, "counts.banks", "must be non-negative")
    check(s.counts.hedge_funds >= 0, "counts.hedge_funds", "must be non-negative")
    check(s.counts.mmfs >= 0, "counts.mmfs", "must be non-negative")
    check(s.nav_pareto.a > 0, "nav_pareto.a", "must be positive")
    for key in ("m_banks", "m_hedge", "m_mmf"):
        check(getattr(s.nav_pareto, key) > 0, f"nav_pareto.{key}", "must be positive")
    check(s.deposit_pareto.a > 0, "deposit_pareto.a", "must be positive")
    check(s.deposit_pareto.m > 0, "deposit_pareto.m", "must be positive")
    check(0 < s.deposit_pareto.cap_fraction <= 1,
          "deposit_pareto.cap_fraction", "must lie in (0, 1]")
    check(s.leverage_limit.dist in ("uniform", "pareto"),
          "leverage_limit.dist", "must be 'uniform' or 'pareto'")
    check(s.leverage_limit.a >= 1, "leverage_limit.a", "must be at least 1")
    if s.leverage_limit.dist == "uniform":
        check(s.leverage_limit.b >= s.leverage_limit.a,
              "leverage_limit.b", "must be >= leverage_limit.a")
    mix = (s.traders.noise, s.traders.fundamental, s.traders.technical)
    check(min(mix) >= 0 and abs(sum(mix) - 1.0) < 1e-9,
          "traders.*", "fractions must be non-negative and sum to 1")
    probs = (s.noise.p_buy, s.noise.p_sell, s.noise.p_hold)
    check(min(probs) >= 0 and abs(sum(probs) - 1.0) < 1e-9,
          "noise.*", "probabilities must be non-negative and sum to 1")
    check(0 <= s.tau.min <= s.tau.max, "tau.min", "need 0 <= min <= max")
    check(s.var.confidence_x > 0, "var.confidence_x", "must be positive")
    check(s.var.window >= 2, "var.window", "must be at least 2")
    check(s.var.limit_fraction > 0, "var.limit_fraction", "must be positive")
    check(s.liquidity.horizon_n >= 1, "liquidity.horizon_n", "must be at least 1")
    check(0 <= s.liquidity.buy_threshold <= 1,
          "liquidity.buy_threshold", "must lie in [0, 1]")
    check(0 <= s.liquidity.floor <= 1, "liquidity.floor", "must lie in [0, 1]")
    check(0 <= s.shock.p <= 1, "shock.p", "must lie in [0, 1]")
    check(0 <= s.shock.q <= 1, "shock.q", "must lie in [0, 1]")
    check(s.run.warmup >= 0, "run.warmup", "must be non-negative")
    check(s.run.horizon >= 0, "run.horizon", "must be non-negative")
    if s.shock.at_step >= 0 and s.total_steps > 0:
        check(1 <= s.shock.at_step <= s.total_steps,
              "shock.at_step", "must fall inside the run")
    check(s.market.r_f >= 0, "market.r_f", "must be non-negative")
    check(s.market.r_r >= 0, "market.r_r", "must be non-negative")
    check(0 <= s.market.dividend_rho < 1, "market.dividend_rho", "must lie in [0, 1)")
    check(s.market.dividend_sigma >= 0, "market.dividend_sigma", "must be non-negative")
    check(s.market.dividend_mean > 0, "market.dividend_mean", "must be positive")
    check(s.market.impact_kappa > 0, "market.impact_kappa", "must be positive")
    check(0 <= s.market.fire_sale_discount < 1,
          "market.fire_sale_discount", "must lie in [0, 1)")
    check(s.market.shares_outstanding > 0,
          "market.shares_outstanding", "must be positive")
    check(0 < s.portfolio.cash_fraction < 1,
          "portfolio.cash_fraction", "must lie in (0, 1)")
    check(0 <= s.portfolio.risky_deposit_share <= 1,
          "portfolio.risky_deposit_share", "must lie in [0, 1]")
    check(0 < s.portfolio.target_leverage_fraction <= 1,
          "portfolio.target_leverage_fraction", "must lie in (0, 1]")
    check(0 <= s.portfolio.bank_stock_share <= 1,
          "portfolio.bank_stock_share", "must lie in [0, 1]")
    check(0 <= s.portfolio.hedge_stock_share <= 1,
          "portfolio.hedge_stock_share", "must lie in [0, 1]")
    check(s.portfolio.bank_stock_share + s.portfolio.hedge_stock_share <= 1.0 + 1e-9,
          "portfolio.*_stock_share", "shares of the float must sum to at most 1")
    check(0 <= s.portfolio.mmf_reserve_fraction < 1,
          "portfolio.mmf_reserve_fraction", "must lie in [0, 1)")
    check(0 < s.portfolio.mmf_lend_cap <= 1, "portfolio.mmf_lend_cap",
          "must lie in (0, 1]")
    check(s.portfolio.mmf_reserve_fraction + s.portfolio.mmf_lend_cap <= 1.0,
          "portfolio.mmf_lend_cap", "reserve plus lend cap must not exceed 1")
    check(0 < s.orders.sell_fraction <= 1, "orders.sell_fraction", "must lie in (0, 1]")
    check(0 < s.orders.buy_fraction <= 1, "orders.buy_fraction", "must lie in (0, 1]")
    check(s.orders.technical_window >= 1, "orders.technical_window",
          "must be at least 1")
    check(s.orders.technical_threshold > 0, "orders.technical_threshold",
          "must be positive")
    return problems
