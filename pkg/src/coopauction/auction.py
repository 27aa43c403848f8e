"""Multi-auctioneer multi-bidder power auction.

Every node plays both roles: as an auctioneer it sells its power budget at a
price lambda_j, as a bidder it submits bids b[j, i] (including a virtual
self-bid b[i, i]). One iteration, in dependency order:

    allocate   from b and lambda of the previous round (see allocate_power)
    bid        b[j, i] = p[j, i] * w_i R'_i  if w_i R'_i > lambda_j else 0
    price      lambda_j = max(floor, lambda_j + eps_j * (row_j(p) - p_bar_j))

The raw Kelly allocation p = b / lambda composed with the bid rule is a
unit step in log space (p <- p * wR'/lambda) and oscillates or diverges for
realistic channels, so allocate_power applies the same update damped and
rate-limited in log space; fixed points are identical (there p = b / lambda
holds exactly). Two further guards keep the discrete dynamics out of the
absorbing states the continuous-time analysis never visits: a withdrawn
entry re-enters from a tiny probe power when its marginal value exceeds the
price again, and the virtual self-bid keeps a vanishing ember of own power
alive so that the relay marginals for that user's traffic (which all vanish
at an exactly-zero own power) stay informative.

Under an asynchronous schedule a node skips whole iterations, freezing its
price, its supply row of p, and its bid column of b; the other nodes read
the stale values.
"""

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelRealization
from .rates import Budgets, marginals_and_rates, payoff_vector


@dataclass(frozen=True)
class StepConfig:
    epsilon: float = 1e-3            # scalar or length-K price step sizes
    price_floor: float = 1e-9
    lambda_init_range: tuple = (0.5, 1.5)
    max_iterations: int = 1_000_000
    convergence_tol: float = 1e-6    # delta on per-iteration price movement
    convergence_window: int = 10
    damping: float = 0.5             # log-space step fraction of p <- b/lambda
    ratio_clip: float = 2.0          # per-iteration bound on p growth/decay
    probe_fraction: float = 1e-9     # re-entry seed and self-bid ember, of p_bar
    prune_fraction: float = 1e-12    # below this fraction of p_bar, snap to 0
    stationarity_tol: float = 5e-5   # fixed-point gap |wR' - lambda| to stop

    def __post_init__(self):
        if np.any(np.asarray(self.epsilon) <= 0):
            raise ValueError("epsilon must be > 0")
        if self.price_floor <= 0:
            raise ValueError("price_floor must be > 0")
        if self.convergence_tol <= 0 or self.convergence_window < 1:
            raise ValueError("invalid convergence settings")
        if not 0 < self.damping <= 1 or self.ratio_clip <= 1:
            raise ValueError("need 0 < damping <= 1 and ratio_clip > 1")
        lo, hi = self.lambda_init_range
        if not 0 < lo <= hi:
            raise ValueError("lambda_init_range must be positive")

    def epsilon_vector(self, K: int) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.epsilon, dtype=float), (K,)).copy()


@dataclass(frozen=True)
class Schedule:
    """Node u acts only on iterations t with t % update_period[u] == 0."""

    update_period: np.ndarray

    def __post_init__(self):
        per = np.asarray(self.update_period, dtype=int)
        object.__setattr__(self, "update_period", per)
        if np.any(per < 1):
            raise ValueError("update periods must be >= 1")

    @property
    def kind(self) -> str:
        return "synchronous" if np.all(self.update_period == 1) else "asynchronous"

    @classmethod
    def synchronous(cls, K: int) -> "Schedule":
        return cls(update_period=np.ones(K, dtype=int))

    @classmethod
    def slowed_node(cls, K: int, node: int, period: int) -> "Schedule":
        per = np.ones(K, dtype=int)
        per[node] = period
        return cls(update_period=per)


@dataclass
class AuctionState:
    p: np.ndarray       # (K, K) power allocation
    b: np.ndarray       # (K, K) bids, b[j, i] = bidder i's bid to seller j
    lam: np.ndarray     # (K,) prices
    t: int = 0


@dataclass
class RunRecord:
    lambdas: np.ndarray     # (T, K) price trace
    payoffs: np.ndarray     # (T, K) per-node seller+buyer payoff trace
    residuals: np.ndarray   # (T, K) per-row supply residual row_j(p) - p_bar_j
    final_state: AuctionState = field(repr=False, default=None)
    converged: bool = False
    iterations_used: int = 0


def init_state(channels: ChannelRealization, budgets: Budgets,
               cfg: StepConfig, seed) -> AuctionState:
    """Direct transmission start: p = diag(p_bar), random bids and prices.

    Draw order: bid matrix uniform on [0, 1), then prices uniform on
    lambda_init_range.
    """
    rng = np.random.default_rng(seed)
    K = budgets.num_users
    p = np.diag(budgets.p_bar.copy())
    b = rng.uniform(0.0, 1.0, size=(K, K))
    lo, hi = cfg.lambda_init_range
    lam = rng.uniform(lo, hi, size=K)
    return AuctionState(p=p, b=b, lam=lam, t=0)


def bid_update(state: AuctionState, channels: ChannelRealization,
               budgets: Budgets, cfg: StepConfig = StepConfig()) -> np.ndarray:
    """Bids from the current (post-allocation) powers and previous prices.

    An entry holding power bids b[j, i] = p[j, i] * w_i R'_i; a zero entry
    bids from the probe seed probe_fraction * p_bar_j when its marginal
    value exceeds the seller's price (so withdrawal is not absorbing) and
    stays out otherwise. Unprofitable entries are not hard-withdrawn while
    they still hold power: their bid undershoots the price, so the
    allocation shrinks them geometrically until they hit the prune
    threshold, which avoids the relaxation oscillation an abrupt b = 0
    would cause for entries hovering at w_i R'_i ~ lambda_j. At a fixed
    point only entries with w_i R'_i = lambda_j hold power and the rest
    satisfy w_i R'_i <= lambda_j with b = 0.
    """
    M, _ = marginals_and_rates(state.p, channels, budgets.w)
    seed = cfg.probe_fraction * budgets.p_bar[:, None]
    live = (state.p > 0) | (M > state.lam[:, None])
    return np.where(live, np.maximum(state.p, seed) * M, 0.0)


def allocate_power(state: AuctionState, budgets: Budgets,
                   cfg: StepConfig = StepConfig()) -> np.ndarray:
    """Damped Kelly allocation.

    The target is the proportional rule p_target = b[j, i] / lambda_j; the
    auctioneer moves each entry toward it by a bounded geometric step,

        p_new = p * clip(p_target / p, 1/ratio_clip, ratio_clip) ** damping.

    No per-entry cap is applied: transient over-demand must show up in the
    row residual, otherwise the price has no signal to rise on (a row
    saturated by a single capped buyer would deadlock below its clearing
    price). Entries whose bid undershoots the price decay geometrically
    and snap to exactly 0 below prune_fraction * p_bar_j; zero entries
    with a (probe) bid restart from the probe power.
    The diagonal never decays below the probe power: the virtual self-bid
    keeps an ember of own power alive because every relay marginal for user
    i's traffic vanishes identically at p[i, i] = 0, which would otherwise
    make a jointly profitable column invisible to the per-entry rule. At a
    fixed point no guard is active and p = b / lambda holds exactly.
    """
    p_bar = budgets.p_bar[:, None]
    probe = cfg.probe_fraction * p_bar
    base = np.where(state.p > 0, state.p, np.where(state.b > 0, probe, 0.0))
    target = state.b / state.lam[:, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.clip(np.where(base > 0, target / np.where(base > 0, base, 1.0),
                                 0.0),
                        1.0 / cfg.ratio_clip, cfg.ratio_clip)
    p_new = np.where(base > 0, base * ratio ** cfg.damping, 0.0)
    p_new[p_new < cfg.prune_fraction * p_bar] = 0.0
    diag = np.arange(budgets.num_users)
    p_new[diag, diag] = np.maximum(p_new[diag, diag],
                                   cfg.probe_fraction * budgets.p_bar)
    return p_new


def price_update(state: AuctionState, budgets: Budgets,
                 cfg: StepConfig) -> np.ndarray:
    """Projected subgradient step on each seller's budget residual."""
    eps = cfg.epsilon_vector(budgets.num_users)
    resid = state.p.sum(axis=1) - budgets.p_bar
    return np.maximum(cfg.price_floor, state.lam + eps * resid)


def run_auction(channels: ChannelRealization, budgets: Budgets,
                cfg: StepConfig = StepConfig(),
                schedule: Schedule = None, seed=0) -> RunRecord:
    """Iterate the auction until the prices and allocation settle.

    Convergence requires, jointly: max_j |lambda_j step| < tol for `window`
    consecutive iterations; every economically active row (lambda_j above
    the price floor) has |supply - budget| < tol; and the state is a
    fixed point of the bid rule, i.e. |w_i R'_i - lambda_j| is within
    stationarity_tol on entries carrying power and w_i R'_i does not exceed
    lambda_j by more than stationarity_tol on (effectively) zero entries.
    Unconverged runs return their record with converged=False rather than
    raising.
    """
    K = budgets.num_users
    if schedule is None:
        schedule = Schedule.synchronous(K)
    eps = cfg.epsilon_vector(K)
    state = init_state(channels, budgets, cfg, seed)
    p_bar = budgets.p_bar
    tol = cfg.convergence_tol
    # entries below this are "zero" for the fixed-point test; must not be
    # looser than the threshold kkt_residual uses, or a still-draining
    # entry could pass here yet count as a stationarity violation there
    zero_level = 1e-6

    lam_trace, payoff_trace, resid_trace = [], [], []
    stable = 0
    converged = False
    t = 0
    for t in range(1, cfg.max_iterations + 1):
        active = (t % schedule.update_period) == 0
        new_p = allocate_power(state, budgets, cfg)
        state.p[active, :] = new_p[active, :]
        M, rates = marginals_and_rates(state.p, channels, budgets.w)
        seed_b = cfg.probe_fraction * p_bar[:, None]
        live = (state.p > 0) | (M > state.lam[:, None])
        new_b = np.where(live, np.maximum(state.p, seed_b) * M, 0.0)
        state.b[:, active] = new_b[:, active]
        resid = state.p.sum(axis=1) - p_bar
        new_lam = np.maximum(cfg.price_floor, state.lam + eps * resid)
        step = np.where(active, np.abs(new_lam - state.lam), 0.0)
        state.lam = np.where(active, new_lam, state.lam)
        state.t = t

        lam_trace.append(state.lam.copy())
        payoff_trace.append(payoff_vector(state.p, rates, state.lam))
        resid_trace.append(resid.copy())

        stable = stable + 1 if step.max() < tol else 0
        if stable >= cfg.convergence_window:
            rows_active = state.lam > cfg.price_floor + tol
            if np.all(np.abs(resid[rows_active]) < tol):
                gap = M - state.lam[:, None]
                scale = np.maximum(state.lam, 1.0)[:, None]
                carrying = state.p > zero_level
                stat = np.where(carrying, np.abs(gap), np.maximum(gap, 0.0))
                if np.all(stat < cfg.stationarity_tol * scale):
                    converged = True
                    break

    return RunRecord(lambdas=np.array(lam_trace), payoffs=np.array(payoff_trace),
                     residuals=np.array(resid_trace), final_state=state,
                     converged=converged, iterations_used=t)


def lyapunov_value(lam: np.ndarray, lambda_star: np.ndarray) -> float:
    """Squared price distance to the optimum: V = 1/2 sum (lam - lam*)^2."""
    d = np.asarray(lam, dtype=float) - np.asarray(lambda_star, dtype=float)
    return float(0.5 * d @ d)


def node_convergence_iterations(record: RunRecord, tol: float) -> np.ndarray:
    """Per-node settling time: last iteration whose price step was >= tol,
    plus one (1 if a node's price never moved that much)."""
    lam = record.lambdas
    steps = np.abs(np.diff(lam, axis=0))
    K = lam.shape[1]
    out = np.ones(K, dtype=int)
    for j in range(K):
        big = np.nonzero(steps[:, j] >= tol)[0]
        out[j] = int(big[-1]) + 2 if big.size else 1
    return out


def write_trace_csv(record: RunRecord, path) -> None:
    """Deterministic CSV export: t, lambda_*, payoff_*, residual_* at 12
    significant digits."""
    K = record.lambdas.shape[1] if record.lambdas.size else 0
    cols = (["t"] + [f"lambda_{j + 1}" for j in range(K)]
            + [f"payoff_{j + 1}" for j in range(K)]
            + [f"residual_{j + 1}" for j in range(K)])
    with open(path, "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for t in range(record.iterations_used):
            row = [str(t + 1)]
            for arr in (record.lambdas, record.payoffs, record.residuals):
                row.extend(f"{v:.12g}" for v in arr[t])
            fh.write(",".join(row) + "\n")
