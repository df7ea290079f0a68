"""Weighted-network SIS risk spread: exposure extraction, mean-field ODE,
fixed-step integration, epidemic threshold, steady state, edge-list format."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import AgentKind, compute_nav


class IntegrationDiverged(RuntimeError):
    def __init__(self, time: float):
        super().__init__(f"non-finite state at t={time}")
        self.time = time


class NoConvergence(RuntimeError):
    pass


@dataclass
class WeightedNetwork:
    """Directed weighted adjacency; omega[i, j] carries the rate at which
    node j's infection presses on node i."""

    omega: np.ndarray
    clamped_nodes: tuple = ()

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float)
        if self.omega.ndim != 2 or self.omega.shape[0] != self.omega.shape[1]:
            raise ValueError("omega must be a square matrix")
        if not np.all(np.isfinite(self.omega)) or np.any(self.omega < 0.0):
            raise ValueError("weights must be finite and non-negative")
        if np.any(np.diag(self.omega) != 0.0):
            raise ValueError("self-loops are not allowed")

    @property
    def size(self) -> int:
        return self.omega.shape[0]


@dataclass
class SisState:
    rho: np.ndarray
    lam: float

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        if np.any(self.rho < 0.0) or np.any(self.rho > 1.0):
            raise ValueError("infection probabilities must lie in [0, 1]")
        if self.lam < 0.0:
            raise ValueError("effective transmission rate must be non-negative")


@dataclass(frozen=True)
class InfectionCriterion:
    value_drop_threshold: float = 0.9

    def __post_init__(self):
        if not 0.0 < self.value_drop_threshold <= 1.0:
            raise ValueError("threshold must lie in (0, 1]")


def extract_exposure_network(market, gross: bool = False) -> WeightedNetwork:
    """Build the inter-agent exposure network from the funding registry.

    The weight on edge j -> i is lender i's exposure to borrower j divided by
    i's NAV: interbank loan principal plus repo principal net of the current
    collateral value (gross of collateral with ``gross=True``). Non-positive
    NAVs are clamped to a small epsilon and flagged.
    """
    n = len(market.agents)
    omega = np.zeros((n, n))
    navs = np.array([compute_nav(a.sheet, market.prices) for a in market.agents])
    positive = navs[navs > 0.0]
    eps = 1e-6 * (positive.mean() if positive.size else 1.0)
    clamped = tuple(int(i) for i in np.nonzero(navs <= 0.0)[0])
    safe_nav = np.maximum(navs, eps)
    for loan in market.loans.values():
        if loan.active:
            omega[loan.lender, loan.borrower] += loan.principal
    for repo in market.repos.values():
        if not repo.active:
            continue
        exposure = repo.principal
        if not gross:
            collateral = repo.collateral_quantity * market.prices[repo.collateral_asset]
            exposure = max(0.0, exposure - collateral)
        omega[repo.lender, repo.borrower] += exposure
    omega /= safe_nav[:, None]
    np.fill_diagonal(omega, 0.0)
    return WeightedNetwork(omega, clamped)


def infected_nodes(market, criterion: InfectionCriterion) -> np.ndarray:
    """Mark agents whose value has dropped below the threshold share of its
    starting level (bankrupt rows count as infected)."""
    flags = np.zeros(len(market.agents), dtype=bool)
    for i, agent in enumerate(market.agents):
        if not agent.alive:
            flags[i] = True
            continue
        if agent.initial_nav <= 0.0:
            continue
        nav = compute_nav(agent.sheet, market.prices)
        flags[i] = nav < criterion.value_drop_threshold * agent.initial_nav
    return flags


def sis_rhs(state: SisState, network: WeightedNetwork) -> np.ndarray:
    """Mean-field rate of change: -rho_i + lam * (1 - rho_i) * sum_j W_ij rho_j."""
    rho = state.rho
    return -rho + state.lam * (1.0 - rho) * (network.omega @ rho)


def integrate_sis(rho0, lam: float, network: WeightedNetwork, dt: float = 0.01,
                  t_end: float = 10.0, stride: int = 1):
    """Classic fixed-step 4th-order integration of the SIS equations.

    Returns (times, states) with states sampled every ``stride`` steps and
    every stored entry clamped to [0, 1]. Raises IntegrationDiverged on a
    non-finite state.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if stride < 1:
        raise ValueError("stride must be at least 1")
    rho = np.asarray(rho0, dtype=float).copy()
    if np.any(rho < 0.0) or np.any(rho > 1.0):
        raise ValueError("rho0 entries must lie in [0, 1]")
    omega = network.omega

    def rhs(r):
        return -r + lam * (1.0 - r) * (omega @ r)

    n_steps = int(round(t_end / dt))
    times = [0.0]
    states = [np.clip(rho, 0.0, 1.0).copy()]
    t = 0.0
    for k in range(1, n_steps + 1):
        k1 = rhs(rho)
        k2 = rhs(rho + 0.5 * dt * k1)
        k3 = rhs(rho + 0.5 * dt * k2)
        k4 = rhs(rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = k * dt
        if not np.all(np.isfinite(rho)):
            raise IntegrationDiverged(t)
        if k % stride == 0 or k == n_steps:
            times.append(t)
            states.append(np.clip(rho, 0.0, 1.0).copy())
    return np.array(times), np.array(states)


def epidemic_threshold(network: WeightedNetwork, tol: float = 1e-10,
                       max_iter: int = 10_000) -> float:
    """Inverse dominant eigenvalue of the weight matrix, by power iteration.

    Iterates on omega + I so that bipartite-like spectra (eigenvalue pairs of
    equal magnitude and opposite sign) still converge to the dominant
    non-negative eigenvector. Returns infinity when the dominant eigenvalue
    is zero: no epidemic is possible at any finite rate.
    """
    omega = network.omega
    n = network.size
    if n == 0 or not omega.any():
        return float("inf")
    x = np.full(n, 1.0 / np.sqrt(n))
    shifted = omega + np.eye(n)
    estimate = 0.0
    for _ in range(max_iter):
        y = shifted @ x
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return float("inf")
        x_new = y / norm
        new_estimate = float(x_new @ (omega @ x_new))
        if abs(new_estimate - estimate) <= tol * max(1.0, abs(new_estimate)):
            x = x_new
            estimate = new_estimate
            break
        x = x_new
        estimate = new_estimate
    else:
        raise NoConvergence(f"power iteration did not converge in {max_iter} iterations")
    if estimate <= 0.0:
        return float("inf")
    return 1.0 / estimate


def steady_state_density(lam: float, network: WeightedNetwork,
                         tol: float = 1e-10, max_iter: int = 100_000) -> np.ndarray:
    """Long-run infection probabilities by damped-free fixed-point iteration.

    Iterates rho_i <- lam * S_i / (1 + lam * S_i) with S = omega @ rho from a
    uniform 0.5 start until the largest change drops below ``tol``. A
    converged vector that is uniformly tiny collapses to exact zeros, which
    is the answer below the epidemic threshold.
    """
    if lam < 0.0:
        raise ValueError("lambda must be non-negative")
    n = network.size
    rho = np.full(n, 0.5)
    if lam == 0.0:
        return np.zeros(n)
    omega = network.omega
    for _ in range(max_iter):
        s = omega @ rho
        new_rho = lam * s / (1.0 + lam * s)
        change = float(np.max(np.abs(new_rho - rho))) if n else 0.0
        rho = new_rho
        if change <= tol:
            break
    else:
        raise NoConvergence(f"fixed point did not converge in {max_iter} iterations")
    if float(rho.max(initial=0.0)) < 1e3 * tol:
        return np.zeros(n)
    return rho


def write_edge_list(network: WeightedNetwork, path) -> None:
    """Plain-text edge list with an `N <count>` header; exact round-trip."""
    lines = [f"N {network.size}"]
    omega = network.omega
    for i in range(network.size):
        for j in range(network.size):
            w = omega[i, j]
            if w != 0.0:
                lines.append(f"{i} {j} {w!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_edge_list(path) -> WeightedNetwork:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2 or header[0] != "N":
            raise ValueError("edge list must start with a 'N <count>' header")
        n = int(header[1])
        omega = np.zeros((n, n))
        for line_no, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 3:
                raise ValueError(f"line {line_no}: expected 'i j weight'")
            i, j, w = int(parts[0]), int(parts[1]), float(parts[2])
            if not 0 <= i < n or not 0 <= j < n:
                raise ValueError(f"line {line_no}: node index out of range")
            omega[i, j] = w
    return WeightedNetwork(omega)
