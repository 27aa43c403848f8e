"""AF achievable rate model: exact and concave upper-bound forms, closed-form
gradients, per-user surplus/payoff, and the weighted sum-rate objective.

Power matrix convention: p[j, i] is the power node j spends on user i's
traffic; the diagonal p[i, i] is user i's own transmit power. For user i,
with f = internode_gain and g = node_to_dest_gain,

    x_j = p[i, i] * f[i, j],   y_j = p[j, i] * g[j, i]

and the relay contribution of node j is T_j = x_j * y_j / (x_j + y_j)
(continuity extension T_j = 0 when the denominator vanishes). The rate is

    R_i = 1/2 * log2(1 + p[i, i] * g[i, i] + sum_{j != i} T_j)

in bits per channel use; the 1/2 is the half-duplex two-phase prefactor.
"""

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization

_TWO_LN2 = 2.0 * np.log(2.0)


@dataclass(frozen=True)
class Budgets:
    """Per-node peak powers (linear watts) and strictly positive priorities."""

    p_bar: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        p_bar = np.asarray(self.p_bar, dtype=float)
        w = np.asarray(self.w, dtype=float)
        object.__setattr__(self, "p_bar", p_bar)
        object.__setattr__(self, "w", w)
        if p_bar.ndim != 1 or w.shape != p_bar.shape:
            raise ValueError("p_bar and w must be 1-D vectors of equal length")
        if np.any(p_bar <= 0) or np.any(w <= 0):
            raise ValueError("p_bar and w must be strictly positive")

    @property
    def num_users(self) -> int:
        return self.p_bar.shape[0]

    @classmethod
    def uniform(cls, K: int, p_bar: float, w: float = 1.0) -> "Budgets":
        return cls(p_bar=np.full(K, float(p_bar)), w=np.full(K, float(w)))


@dataclass(frozen=True)
class RateGradient:
    """Partial derivatives of one user's rate w.r.t. its power column."""

    d_own: float          # dR_i / dp[i, i]
    d_relay: np.ndarray   # entry j = dR_i / dp[j, i]; entry i unused, 0


def check_power_matrix(p: np.ndarray, K: int) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (K, K):
        raise ValueError(f"power matrix must have shape ({K}, {K})")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("power entries must be nonnegative and finite")
    return p


def _relay_terms(p: np.ndarray, ch: ChannelRealization):
    """Vectorized per-(user, relay) quantities shared by rates and gradients.

    Returns (X, Y, S, T, D) where X[i, j] = p[i, i] f[i, j],
    Y[i, j] = p[j, i] g[j, i], S = X + Y, T = X Y / S (0 at S = 0) and
    D[i] = 1 + p[i, i] g[i, i] + sum_j T[i, j].
    """
    f = ch.internode_gain
    g = ch.node_to_dest_gain
    own = np.diag(p)
    X = own[:, None] * f                 # diagonal 0 since diag(f) = 0
    Y = (p * g).T.copy()
    np.fill_diagonal(Y, 0.0)
    S = X + Y
    with np.errstate(invalid="ignore", divide="ignore"):
        T = np.where(S > 0, X * Y / np.where(S > 0, S, 1.0), 0.0)
    D = 1.0 + own * np.diag(g) + T.sum(axis=1)
    return X, Y, S, T, D


def rate_vector(p: np.ndarray, ch: ChannelRealization) -> np.ndarray:
    """All K users' upper-bound rates at once (bits per channel use)."""
    _, _, _, _, D = _relay_terms(p, ch)
    return 0.5 * np.log2(D)


def rate_approx(i: int, p: np.ndarray, ch: ChannelRealization) -> float:
    """Concave upper-bound AF rate of user i."""
    return float(rate_vector(p, ch)[i])


def rate_exact(i: int, p: np.ndarray, ch: ChannelRealization) -> float:
    """Pre-approximation AF rate (denominator 1 + x + y); reporting only."""
    f = ch.internode_gain
    g = ch.node_to_dest_gain
    own = p[i, i]
    x = own * f[i, :]
    y = p[:, i] * g[:, i]
    T = x * y / (1.0 + x + y)
    T[i] = 0.0
    return float(0.5 * np.log2(1.0 + own * g[i, i] + T.sum()))


def marginal_matrix(p: np.ndarray, ch: ChannelRealization,
                    w: np.ndarray) -> np.ndarray:
    """Weighted marginal rates M[j, i] = w_i * dR_i / dp[j, i], aligned with p.

    This is also the gradient of the weighted sum-rate objective. Boundary
    rules (one-sided right limits): the relay derivative is
    g[j, i] / (2 ln 2 * D_i) when y_j = 0 < x_j and 0 when x_j = 0; the own
    derivative uses the symmetric rules on each f[i, j] * (y/(x+y))^2 term.
    """
    M, _ = marginals_and_rates(p, ch, w)
    return M


def marginals_and_rates(p: np.ndarray, ch: ChannelRealization, w: np.ndarray):
    """(M, R): weighted marginal matrix and per-user rates, sharing one pass."""
    f = ch.internode_gain
    g = ch.node_to_dest_gain
    X, Y, S, T, D = _relay_terms(p, ch)
    pos = S > 0
    Ssafe = np.where(pos, S, 1.0)
    A = np.where(pos, (X / Ssafe) ** 2, 0.0)   # (x/(x+y))^2, 0 at x = y = 0
    B = np.where(pos, (Y / Ssafe) ** 2, 0.0)
    # relay derivatives: d R_i / d p[j, i] = g[j, i] * A[i, j] / (2 ln 2 D_i)
    Grelay = g.T * A / (_TWO_LN2 * D[:, None])
    own = (np.diag(g) + (f * B).sum(axis=1)) / (_TWO_LN2 * D)
    M = (w[:, None] * Grelay).T
    np.fill_diagonal(M, w * own)
    return M, 0.5 * np.log2(D)


def rate_gradient(i: int, p: np.ndarray, ch: ChannelRealization) -> RateGradient:
    """Closed-form gradient of user i's upper-bound rate."""
    M = marginal_matrix(p, ch, np.ones(ch.num_users))
    d_relay = M[:, i].copy()
    d_own = float(d_relay[i])
    d_relay[i] = 0.0
    return RateGradient(d_own=d_own, d_relay=d_relay)


def weighted_sum_rate(p: np.ndarray, ch: ChannelRealization,
                      budgets: Budgets) -> float:
    """Objective of the global power-allocation problem."""
    return float(budgets.w @ rate_vector(p, ch))


def direct_power_matrix(budgets: Budgets) -> np.ndarray:
    """Direct-transmission allocation: every node spends its full budget on
    its own link."""
    return np.diag(budgets.p_bar.copy())


def surplus(i: int, p: np.ndarray, ch: ChannelRealization,
            prices: np.ndarray, budgets: Budgets) -> float:
    """Bidder i's utility: weighted rate minus payments to all sellers."""
    prices = np.asarray(prices, dtype=float)
    if np.any(prices < 0):
        raise ValueError("prices must be nonnegative")
    return float(budgets.w[i] * rate_approx(i, p, ch) - prices @ p[:, i])


def payoff(i: int, p: np.ndarray, ch: ChannelRealization,
           prices: np.ndarray) -> float:
    """Combined seller+buyer profit of node i (unweighted rate):
    R_i - sum_j p[j, i] * price_j + price_i * sum_j p[i, j]."""
    prices = np.asarray(prices, dtype=float)
    if np.any(prices < 0):
        raise ValueError("prices must be nonnegative")
    r = rate_approx(i, p, ch)
    return float(r - prices @ p[:, i] + prices[i] * p[i, :].sum())


def payoff_vector(p: np.ndarray, rates: np.ndarray,
                  prices: np.ndarray) -> np.ndarray:
    """All nodes' payoffs from precomputed rates."""
    return rates - prices @ p + prices * p.sum(axis=1)
