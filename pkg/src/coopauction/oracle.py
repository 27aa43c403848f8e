"""Centralized ground truth for the weighted sum-rate power allocation.

Independent of the auction dynamics: projected-gradient ascent with exact
row-wise projection onto {x >= 0, sum(x) <= p_bar_j}, plus an exhaustive
grid certifier for K <= 2, and a KKT residual evaluator usable on any
(p, lambda) pair.
"""

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .channel import ChannelRealization
from .rates import Budgets, marginal_matrix, weighted_sum_rate

LN2 = np.log(2.0)
POSITIVE_POWER_TOL = 1e-6


@dataclass
class OracleSolution:
    p_star: np.ndarray
    lambda_star: np.ndarray
    objective: float
    kkt_residual: float
    method: str                 # "projected_gradient" or "grid_search"
    iterations: int = 0
    converged: bool = True

    def to_json_dict(self) -> dict:
        return {
            "p_star": [[float(v) for v in row] for row in self.p_star],
            "lambda_star": [float(v) for v in self.lambda_star],
            "objective": float(self.objective),
            "kkt_residual": float(self.kkt_residual),
            "method": self.method,
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2)


def project_capped_simplex(v: np.ndarray, cap: float) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum(x) <= cap} (sort-based, exact)."""
    clipped = np.maximum(v, 0.0)
    if clipped.sum() <= cap:
        return clipped
    # project onto the full simplex {x >= 0, sum(x) = cap}
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - cap
    idx = np.arange(1, v.size + 1)
    rho = idx[u - css / idx > 0][-1]
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


def _project_rows(p: np.ndarray, p_bar: np.ndarray) -> np.ndarray:
    return np.vstack([project_capped_simplex(p[j], p_bar[j])
                      for j in range(p.shape[0])])


def recover_duals(p: np.ndarray, channels: ChannelRealization,
                  budgets: Budgets, active_tol: float = 1e-6) -> np.ndarray:
    """lambda_j = max_i w_i R'_i over row j if the budget is active, else 0."""
    M = marginal_matrix(p, channels, budgets.w)
    lam = M.max(axis=1)
    inactive = p.sum(axis=1) < budgets.p_bar * (1.0 - active_tol)
    lam[inactive] = 0.0
    return lam


def kkt_residual(p: np.ndarray, lam: np.ndarray,
                 channels: ChannelRealization, budgets: Budgets) -> float:
    """Max violation of the first-order optimality system of the global
    problem: stationarity, primal feasibility, complementary slackness."""
    p = np.asarray(p, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if np.any(p < 0) or np.any(lam < 0):
        raise ValueError("p and lambda must be nonnegative")
    M = marginal_matrix(p, channels, budgets.w)
    gap = M - lam[:, None]
    stationarity = np.where(p > POSITIVE_POWER_TOL, np.abs(gap),
                            np.maximum(gap, 0.0)).max()
    resid = p.sum(axis=1) - budgets.p_bar
    feasibility = np.maximum(resid, 0.0).max()
    slackness = np.abs(lam * resid).max()
    return float(max(stationarity, feasibility, slackness))


def _ascend(p: np.ndarray, channels: ChannelRealization, budgets: Budgets,
            tol: float, max_iterations: int, eta0: float):
    """Projected-gradient ascent with backtracking line search from p."""
    obj = weighted_sum_rate(p, channels, budgets)
    eta = eta0
    iters = 0
    for iters in range(1, max_iterations + 1):
        grad = marginal_matrix(p, channels, budgets.w)
        # backtracking: shrink until the ascent step improves, grow on
        # success so the step adapts to local curvature
        stepped = False
        for _ in range(60):
            cand = _project_rows(p + eta * grad, budgets.p_bar)
            cand_obj = weighted_sum_rate(cand, channels, budgets)
            if cand_obj >= obj - 1e-15:
                stepped = True
                break
            eta *= 0.5
        if not stepped:
            break
        moved = np.abs(cand - p).max()
        p, obj = cand, cand_obj
        eta = min(eta * 1.3, 1e6 * eta0)
        if moved < 1e-14:
            break
        if iters % 10 == 0:
            lam = recover_duals(p, channels, budgets)
            if kkt_residual(p, lam, channels, budgets) < tol:
                break
    return p, obj, iters


def _polish(p: np.ndarray, channels: ChannelRealization,
            budgets: Budgets) -> np.ndarray:
    """Sequential-quadratic refinement of an ascent iterate.

    First-order ascent crawls on ill-conditioned instances (many nearly
    active constraints); a constrained quadratic solver started from the
    ascent iterate closes the last few digits cheaply.
    """
    K = budgets.num_users

    def neg_obj(x):
        return -weighted_sum_rate(x.reshape(K, K), channels, budgets)

    def neg_grad(x):
        return -marginal_matrix(x.reshape(K, K), channels, budgets.w).ravel()

    constraints = [
        {"type": "ineq",
         "fun": lambda x, j=j: budgets.p_bar[j] - x.reshape(K, K)[j].sum(),
         "jac": lambda x, j=j: -np.kron(np.eye(K)[j], np.ones(K))}
        for j in range(K)
    ]
    res = minimize(neg_obj, p.ravel(), jac=neg_grad, method="SLSQP",
                   bounds=[(0.0, None)] * (K * K), constraints=constraints,
                   options={"maxiter": 500, "ftol": 1e-14})
    cand = _project_rows(np.maximum(res.x.reshape(K, K), 0.0), budgets.p_bar)
    if weighted_sum_rate(cand, channels, budgets) \
            >= weighted_sum_rate(p, channels, budgets):
        return cand
    return p


def _column_reentry_directions(p: np.ndarray, lam: np.ndarray,
                               channels: ChannelRealization,
                               budgets: Budgets) -> dict:
    """Joint-ascent test for power columns parked at zero.

    The per-entry optimality conditions are blind at a zero column: with no
    own power every relay marginal for that user vanishes, and with no relay
    power the own marginal omits all relay benefit, so a column can satisfy
    them while a *joint* increase of own and relay power is still
    profitable. For a unit of own power, the best bundle adds d_j units
    from relay j; maximizing the relayed-term gain minus the price
    lambda_j * d_j in closed form gives, with a = f[i, j], c = g[j, i] and
    kappa = w_i / (2 ln2 * D_i),

        d_j = (a / c) * (sqrt(kappa c / lambda_j) - 1)   if kappa c > lambda_j
        net gain h_j = (lambda_j * a / c) * (sqrt(kappa c / lambda_j) - 1)^2

    Returns {user: (gap, d)} for every dead column whose bundle value
    kappa * g_ii + sum_j h_j exceeds lambda_i, with d the per-relay bundle
    direction (d_i = 1).
    """
    K = budgets.num_users
    f = channels.internode_gain
    g = channels.node_to_dest_gain
    out = {}
    for i in range(K):
        if p[i, i] > POSITIVE_POWER_TOL:
            continue
        kappa = budgets.w[i] / (2.0 * LN2)  # dead column: D_i = 1
        d = np.zeros(K)
        d[i] = 1.0
        gain = kappa * g[i, i]
        for j in range(K):
            if j == i:
                continue
            a, c = f[i, j], g[j, i]
            if a <= 0 or c <= 0:
                continue
            if lam[j] <= 0:
                # free relay power: the relayed term saturates at kappa * a
                gain += kappa * a
                d[j] = budgets.p_bar[j]
            elif kappa * c > lam[j]:
                s = np.sqrt(kappa * c / lam[j])
                d[j] = (a / c) * (s - 1.0)
                gain += lam[j] * (a / c) * (s - 1.0) ** 2
        gap = gain - lam[i]
        if gap > 0:
            out[i] = (float(gap), d)
    return out


def solve_p1(channels: ChannelRealization, budgets: Budgets,
             tol: float = 1e-7, max_iterations: int = 20_000,
             n_starts: int = 3, seed: int = 0) -> OracleSolution:
    """Projected-gradient ascent with backtracking line search.

    Iterates that stall short of the KKT tolerance are refined with a
    constrained sequential-quadratic step (see _polish); plain first-order
    ascent can need tens of thousands of iterations on ill-conditioned
    instances. Runs from n_starts initial points (direct transmission, then random
    feasible) and keeps the best; multi-start agreement is the uniqueness
    check for this convex problem. After each start converges, any zero
    column that still admits a profitable joint (own + relay) re-entry
    bundle is reseeded along that bundle and ascent continues, since the
    per-entry KKT conditions cannot see such directions. Flags
    converged=False if no start meets the KKT tolerance.
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    K = budgets.num_users
    rng = np.random.default_rng(seed)
    eta0 = 0.1 * budgets.p_bar.min()
    best = None
    for start in range(n_starts):
        if start == 0:
            p = np.diag(budgets.p_bar.copy())
        else:
            raw = rng.uniform(0.0, 1.0, size=(K, K)) * budgets.p_bar[:, None]
            p = _project_rows(raw, budgets.p_bar)
        def refine(q):
            q, q_obj, used = _ascend(q, channels, budgets, tol,
                                     min(max_iterations, 500), eta0)
            lam_q = recover_duals(q, channels, budgets)
            if kkt_residual(q, lam_q, channels, budgets) >= tol:
                q = _polish(q, channels, budgets)
                q_obj = weighted_sum_rate(q, channels, budgets)
            return q, q_obj, used

        p, obj, iters = refine(p)
        for _ in range(3):
            lam = recover_duals(p, channels, budgets)
            reentry = _column_reentry_directions(p, lam, channels, budgets)
            reentry = {i: gd for i, gd in reentry.items()
                       if gd[0] > 10.0 * tol}
            if not reentry:
                break
            for i, (_, d) in reentry.items():
                scale = 1e-3 * budgets.p_bar.min() / max(d.max(), 1.0)
                p[np.arange(K), i] += scale * d
            p = _project_rows(p, budgets.p_bar)
            p, obj, more = refine(p)
            iters += more
        lam = recover_duals(p, channels, budgets)
        residual = kkt_residual(p, lam, channels, budgets)
        sol = OracleSolution(p_star=p, lambda_star=lam, objective=obj,
                             kkt_residual=residual, method="projected_gradient",
                             iterations=iters, converged=residual < tol)
        if best is None or sol.objective > best.objective:
            best = sol
    return best


def _row_candidates(p_bar_j: float, step: float) -> np.ndarray:
    """K=2 row grid: lattice points with sum <= budget plus the exact
    full-budget face, lexicographically sorted (deterministic tie-break)."""
    axis = np.arange(0.0, p_bar_j + step / 2, step)
    if axis[-1] < p_bar_j:
        axis = np.append(axis, p_bar_j)
    a, bb = np.meshgrid(axis, axis, indexing="ij")
    pts = np.column_stack([a.ravel(), bb.ravel()])
    pts = pts[pts.sum(axis=1) <= p_bar_j + 1e-12]
    face = np.column_stack([axis, p_bar_j - axis])
    pts = np.vstack([pts, face[face[:, 1] >= 0]])
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]
    keep = np.ones(len(pts), dtype=bool)
    keep[1:] = np.any(np.abs(np.diff(pts, axis=0)) > 1e-12, axis=1)
    return pts[keep]


def grid_search(channels: ChannelRealization, budgets: Budgets,
                resolution: float = 0.02) -> OracleSolution:
    """Brute-force certifier over a feasible grid (K <= 2 only).

    Grid step is resolution * min(p_bar); ties break to the lowest
    lexicographic candidate index, so degenerate instances return the
    all-zeros point.
    """
    K = budgets.num_users
    if K > 2:
        raise ValueError("grid_search supports K <= 2")
    step = resolution * budgets.p_bar.min()
    if K == 1:
        axis = _row_candidates(budgets.p_bar[0], step)[:, :1]
        g = channels.node_to_dest_gain[0, 0]
        obj = budgets.w[0] * 0.5 * np.log2(1.0 + axis[:, 0] * g)
        k = int(np.argmax(obj))
        p = axis[k].reshape(1, 1)
    else:
        rows0 = _row_candidates(budgets.p_bar[0], step)
        rows1 = _row_candidates(budgets.p_bar[1], step)
        f = channels.internode_gain
        g = channels.node_to_dest_gain
        w = budgets.w
        # R_1 depends on (p11, p21), R_2 on (p22, p12); evaluated in blocks
        # of rows0 so fine resolutions stay within memory
        p21 = rows1[:, 0][None, :]
        p22 = rows1[:, 1][None, :]
        best_obj, i0, i1 = -np.inf, 0, 0
        block = max(1, 10_000_000 // rows1.shape[0])
        for lo in range(0, rows0.shape[0], block):
            p11 = rows0[lo:lo + block, 0][:, None]
            p12 = rows0[lo:lo + block, 1][:, None]
            obj = (w[0] * _pair_rate(p11, p21, g[0, 0], f[0, 1], g[1, 0])
                   + w[1] * _pair_rate(p22, p12, g[1, 1], f[1, 0], g[0, 1]))
            k = int(np.argmax(obj))      # first max = lowest (i0, i1) pair
            b0, b1 = divmod(k, rows1.shape[0])
            if obj[b0, b1] > best_obj:
                best_obj, i0, i1 = float(obj[b0, b1]), lo + b0, b1
        p = np.array([[rows0[i0, 0], rows0[i0, 1]],
                      [rows1[i1, 0], rows1[i1, 1]]])
    lam = recover_duals(p, channels, budgets)
    return OracleSolution(p_star=p, lambda_star=lam,
                          objective=weighted_sum_rate(p, channels, budgets),
                          kkt_residual=kkt_residual(p, lam, channels, budgets),
                          method="grid_search", iterations=0, converged=True)


def _pair_rate(p_own, p_relay, g_direct, f_hop, g_relay):
    """Single-relay upper-bound rate, broadcast over candidate arrays."""
    x = p_own * f_hop
    y = p_relay * g_relay
    s = x + y
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(s > 0, x * y / np.where(s > 0, s, 1.0), 0.0)
    return 0.5 * np.log2(1.0 + p_own * g_direct + t)


def check_bid_consistency(sol: OracleSolution, channels: ChannelRealization,
                          budgets: Budgets, rel_tol: float = 1e-6) -> dict:
    """Verify the seller-side fixed-point identity at the optimum.

    Constructs b* = p* . (w R') entrywise and checks p* = b* / lambda* on
    rows with lambda* > 0; rows with lambda* = 0 (inactive budgets) are
    skipped. An inconsistency signals a solver or model bug.
    """
    M = marginal_matrix(sol.p_star, channels, budgets.w)
    b_star = sol.p_star * M
    skipped = []
    max_rel_err = 0.0
    for j in range(budgets.num_users):
        if sol.lambda_star[j] <= 0:
            skipped.append(j)
            continue
        implied = b_star[j] / sol.lambda_star[j]
        mask = sol.p_star[j] > POSITIVE_POWER_TOL
        if np.any(mask):
            err = np.abs(implied[mask] - sol.p_star[j][mask]) / sol.p_star[j][mask]
            max_rel_err = max(max_rel_err, float(err.max()))
    return {
        "consistent": max_rel_err < rel_tol,
        "max_rel_error": max_rel_err,
        "skipped_inactive_rows": skipped,
        "b_star": b_star,
    }
