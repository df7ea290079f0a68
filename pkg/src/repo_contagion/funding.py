"""Repo and interbank loan lifecycle: open, renew, margin calls, settlement."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .assets import AssetId
from .core import Agent, AgentKind, SolvencyState, total_assets
from .risk import LoanDenied, interbank_spread


class CollateralUnacceptable(ValueError):
    """A 100% haircut means the asset cannot back a repo."""


class RepoRejected(ValueError):
    """Lender cash or borrower collateral cannot support the contract."""


@dataclass
class RepoContract:
    id: int
    lender: int
    borrower: int
    collateral_asset: AssetId
    collateral_quantity: float
    principal: float
    haircut: float
    opened_at: int
    terminating: bool = False
    active: bool = True


@dataclass
class LoanContract:
    id: int
    lender: int
    borrower: int
    principal: float
    rate: float
    opened_at: int
    active: bool = True

    @property
    def repayment(self) -> float:
        return self.principal * (1.0 + self.rate)


class RenewalKind(Enum):
    RENEWED = "renewed"
    MARGIN_CALL = "margin_call"
    TERMINATED = "terminated"


@dataclass(frozen=True)
class RenewalDecision:
    kind: RenewalKind
    amount: float = 0.0


def open_repo(lender: Agent, borrower: Agent, asset: AssetId,
              collateral_value: float, haircut: float, *, price: float = 1.0,
              opened_at: int = 0, contract_id: int = 0) -> RepoContract:
    """Open an overnight repo: cash moves lender to borrower, collateral is pledged.

    Principal is collateral value times (1 - haircut). NAV of both parties is
    unchanged at the instant of opening.
    """
    if not 0.0 <= haircut <= 1.0:
        raise ValueError("haircut must lie in [0, 1]")
    if haircut >= 1.0:
        raise CollateralUnacceptable("100% haircut: asset not acceptable as collateral")
    if asset not in (AssetId.GOV_BOND, AssetId.RISKY):
        raise ValueError("repos are backed by government bonds or the risky asset")
    if price <= 0.0 or collateral_value < 0.0:
        raise ValueError("collateral value and price must be positive")
    quantity = collateral_value / price
    principal = collateral_value * (1.0 - haircut)
    if borrower.available(asset) + 1e-9 < quantity:
        raise RepoRejected("borrower does not hold the collateral")
    if lender.sheet.cash + 1e-9 < principal:
        raise RepoRejected("lender cash cannot cover the principal")
    lender.sheet.cash -= principal
    borrower.sheet.cash += principal
    lender.sheet.repo_lent += principal
    borrower.sheet.repo_borrowed += principal
    borrower.encumber(asset, quantity)
    return RepoContract(contract_id, lender.id, borrower.id, asset, quantity,
                        principal, haircut, opened_at)


def evaluate_repo_renewal(repo: RepoContract, collateral_price: float,
                          current_haircut: float,
                          borrower_cash: float) -> RenewalDecision:
    """Decide the fate of a repo at the daily roll.

    The supportable principal is collateral value times (1 - current haircut).
    A shortfall against the outstanding principal is a margin call, payable in
    cash only; an unpayable call (or an unacceptable collateral haircut)
    terminates the repo and the full outstanding principal falls due.
    """
    if not repo.active or repo.terminating:
        raise ValueError("renewal evaluated on a closed or terminating repo")
    required = repo.collateral_quantity * collateral_price * (1.0 - current_haircut)
    if current_haircut >= 1.0:
        return RenewalDecision(RenewalKind.TERMINATED, repo.principal)
    margin = repo.principal - required
    if margin <= 1e-12:
        return RenewalDecision(RenewalKind.RENEWED)
    if margin <= borrower_cash:
        return RenewalDecision(RenewalKind.MARGIN_CALL, margin)
    return RenewalDecision(RenewalKind.TERMINATED, repo.principal)


def pay_down_repo(repo: RepoContract, lender: Agent, borrower: Agent,
                  amount: float, collateral_price: float,
                  release_excess: bool = True) -> float:
    """Repay part of a repo's principal in cash; returns the amount paid.

    Excess collateral above what the remaining principal requires is released
    back to the borrower (never while the contract is terminating: the lender
    keeps the full pledge until the obligation clears).
    """
    paid = min(amount, borrower.sheet.cash, repo.principal)
    if paid <= 0.0:
        return 0.0
    borrower.sheet.cash -= paid
    lender.sheet.cash += paid
    borrower.sheet.repo_borrowed -= paid
    lender.sheet.repo_lent -= paid
    repo.principal -= paid
    if repo.principal <= 1e-9:
        repo.principal = 0.0
        close_repo(repo, borrower)
    elif release_excess and not repo.terminating and repo.haircut < 1.0 \
            and collateral_price > 0.0:
        needed = repo.principal / ((1.0 - repo.haircut) * collateral_price)
        excess = repo.collateral_quantity - needed
        if excess > 1e-12:
            repo.collateral_quantity = needed
            borrower.release(repo.collateral_asset, excess)
    return paid


def close_repo(repo: RepoContract, borrower: Agent) -> None:
    """Release all collateral and deactivate the contract."""
    if repo.collateral_quantity > 0.0:
        borrower.release(repo.collateral_asset, repo.collateral_quantity)
        repo.collateral_quantity = 0.0
    repo.active = False


def pay_arrears(agent: Agent, agents_by_id: dict) -> float:
    """Pay outstanding arrears from cash, creditors in booking order."""
    paid_total = 0.0
    for creditor_id in list(agent.sheet.arrears):
        owed = agent.sheet.arrears[creditor_id]
        pay = min(owed, agent.sheet.cash)
        if pay <= 0.0:
            continue
        agent.sheet.cash -= pay
        agents_by_id[creditor_id].sheet.cash += pay
        left = owed - pay
        if left <= 1e-9:
            del agent.sheet.arrears[creditor_id]
        else:
            agent.sheet.arrears[creditor_id] = left
        paid_total += pay
    return paid_total


def settle_overnight_obligations(market, step: int) -> list[tuple[int, float, str]]:
    """Run one settlement round: arrears, loan repayments, repo interest,
    renewals with margin calls, and forced deleveraging above the hard limit.

    Obligations drain each borrower's cash in a fixed priority; whatever
    cannot be paid is booked as arrears (or leaves the repo terminating with
    its principal due) and routes the agent into the solvency transition.
    Returns (agent id, amount, outcome) records for reporting.
    """
    agents = market.agents_by_id
    outcomes: list[tuple[int, float, str]] = []
    r_f = market.scenario.market.r_f

    # prior unpaid obligations first
    for agent in market.agents:
        if not agent.alive:
            continue
        if agent.sheet.arrears:
            paid = pay_arrears(agent, agents)
            if paid > 0.0:
                outcomes.append((agent.id, paid, "arrears_paid"))
        for repo in market.open_repos_of(agent.id):
            if repo.terminating and agent.sheet.cash > 0.0:
                paid = pay_down_repo(repo, agents[repo.lender], agent,
                                     agent.sheet.cash,
                                     market.prices[repo.collateral_asset],
                                     release_excess=False)
                if paid > 0.0:
                    outcomes.append((agent.id, paid, "terminated_repo_paydown"))

    # overnight loans from the previous step fall due with interest
    for loan in sorted(market.loans.values(), key=lambda l: l.id):
        if not loan.active or loan.opened_at >= step:
            continue
        borrower = agents[loan.borrower]
        lender = agents[loan.lender]
        amount = loan.repayment
        pay = min(amount, borrower.sheet.cash) if borrower.alive else 0.0
        borrower.sheet.cash -= pay
        lender.sheet.cash += pay
        borrower.sheet.loans_borrowed -= loan.principal
        lender.sheet.loans_lent -= loan.principal
        shortfall = amount - pay
        if shortfall > 1e-9:
            borrower.sheet.add_arrears(lender.id, shortfall)
            outcomes.append((borrower.id, amount, "loan_shortfall"))
        else:
            outcomes.append((borrower.id, amount, "loan_repaid"))
        loan.active = False

    # repo interest, then renewal of every open repo
    live_repos = [r for r in sorted(market.repos.values(), key=lambda r: r.id)
                  if r.active and not r.terminating]
    for repo in live_repos:
        borrower = agents[repo.borrower]
        lender = agents[repo.lender]
        if not borrower.alive:
            continue
        interest = r_f * repo.principal
        pay = min(interest, borrower.sheet.cash)
        borrower.sheet.cash -= pay
        lender.sheet.cash += pay
        if interest - pay > 1e-9:
            borrower.sheet.add_arrears(lender.id, interest - pay)
            outcomes.append((borrower.id, interest, "repo_interest_shortfall"))

    for repo in live_repos:
        if not repo.active or repo.terminating:
            continue
        borrower = agents[repo.borrower]
        lender = agents[repo.lender]
        if not borrower.alive:
            continue
        price = market.prices[repo.collateral_asset]
        haircut_now = market.required_haircut(repo.collateral_asset)
        decision = evaluate_repo_renewal(repo, price, haircut_now,
                                         borrower.sheet.cash)
        if decision.kind is RenewalKind.RENEWED:
            repo.haircut = haircut_now
        elif decision.kind is RenewalKind.MARGIN_CALL:
            pay_down_repo(repo, lender, borrower, decision.amount, price,
                          release_excess=False)
            repo.haircut = haircut_now
            outcomes.append((borrower.id, decision.amount, "margin_call_paid"))
        else:
            repo.terminating = True
            repo.haircut = min(1.0, haircut_now)
            outcomes.append((borrower.id, decision.amount, "repo_terminated"))
            if borrower.sheet.cash > 0.0:
                pay_down_repo(repo, lender, borrower, borrower.sheet.cash,
                              price, release_excess=False)

    # hard leverage breaches deleverage by repaying repo principal early
    for agent in market.agents:
        if not agent.alive or agent.kind is not AgentKind.BANK:
            continue
        if agent.state is not SolvencyState.SOLVENT:
            continue
        lev = market.leverage_of(agent)
        if lev is None or lev <= agent.limits.max_leverage:
            continue
        ta = total_assets(agent.sheet, market.prices)
        nav = ta - agent.sheet.liabilities()
        excess_cash = agent.sheet.cash - agent.cash_target_fraction * ta
        cut_needed = ta - agent.target_leverage * nav
        budget = min(excess_cash, cut_needed)
        if budget <= 0.0:
            continue
        for repo in market.open_repos_of(agent.id):
            if budget <= 0.0:
                break
            if repo.terminating:
                continue
            paid = pay_down_repo(repo, agents[repo.lender], agent,
                                 min(budget, repo.principal),
                                 market.prices[repo.collateral_asset])
            budget -= paid
            if paid > 0.0:
                outcomes.append((agent.id, paid, "deleverage_paydown"))
    return outcomes


def request_interbank_loan(borrower: Agent, amount: float, lenders, *,
                           r_f: float, p_sell, outstanding_loans: float,
                           opened_at: int, contract_id: int,
                           reserve_fraction=None) -> LoanContract | None:
    """Price and place an overnight unsecured loan, or return None when denied.

    The rate is r_f plus the borrower's risk premium. The lender is the
    solvent bank with the most spare cash (ties break on the lowest id); spare
    cash is whatever exceeds the lender's own cash reserve. A partial loan is
    extended when no lender covers the full amount.
    """
    if amount <= 0.0:
        raise ValueError("loan amount must be positive")
    portfolio = [(borrower.sheet.cash, 1.0)]
    for asset, qty in borrower.sheet.holdings.items():
        if qty > 0.0:
            portfolio.append((qty * p_sell.price(asset), p_sell.eff(asset)))
    try:
        delta = interbank_spread(outstanding_loans, portfolio)
    except LoanDenied:
        return None
    best = None
    best_spare = 0.0
    for lender in lenders:
        if lender.id == borrower.id or lender.state is not SolvencyState.SOLVENT:
            continue
        if lender.kind is not AgentKind.BANK:
            continue
        reserve = reserve_fraction(lender) if reserve_fraction else 0.0
        spare = lender.sheet.cash - reserve
        if spare > best_spare + 1e-12 or (best is None and spare > 1e-12):
            best = lender
            best_spare = spare
    if best is None or best_spare <= 0.0:
        return None
    principal = min(amount, best_spare)
    rate = r_f + delta
    best.sheet.cash -= principal
    borrower.sheet.cash += principal
    best.sheet.loans_lent += principal
    borrower.sheet.loans_borrowed += principal
    return LoanContract(contract_id, best.id, borrower.id, principal, rate, opened_at)
