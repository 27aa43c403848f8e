"""End-to-end acceptance suite.

Each test implements one acceptance criterion at its stated tolerance:

 1. auction/oracle equivalence on 100 random instances (0.1% objective,
    KKT < 1e-4, under 2 minutes)
 2. closed-form gradient vs central finite differences (< 1e-5 relative)
 3. concavity of the upper-bound rate and exact <= upper bound (1e4 points)
 4. single-user analytic optimum (lambda* = 1/(22 ln 2) within 1e-6)
 5. feasibility and complementary slackness at convergence
 6. dominance over direct transmission and cooperative gain growing with K
 7. asynchronous schedules: same objective, more iterations
 8. initialization independence (50 instances, two seeds, 1e-4 relative)
 9. Lyapunov descent of the price error at epsilon = 1e-5 (1e-10 slack)
10. monotone-gradient inequality against the oracle optimum (1e-10)
11. byte-identical CLI reruns
"""

import time

import numpy as np
import pytest

from coopauction.auction import Schedule, StepConfig, lyapunov_value, run_auction
from coopauction.channel import (ChannelRealization, PropagationParams,
                                 paper_toy_topology, random_topology,
                                 sample_realization)
from coopauction.cli import main as cli_main
from coopauction.oracle import kkt_residual, solve_p1
from coopauction.rates import (Budgets, direct_power_matrix, marginal_matrix,
                               rate_approx, rate_exact, rate_gradient,
                               rate_vector, weighted_sum_rate)

PROPAGATION = PropagationParams()


def random_instance(K, index, shared=(0.0, 0.0)):
    topo = random_topology(K, 1.0, seed=np.random.SeedSequence([90, K, index, 0]),
                           shared_destination=shared)
    ch = sample_realization(topo, PROPAGATION,
                            seed=np.random.SeedSequence([90, K, index, 1]))
    return ch, Budgets.uniform(K, 10.0)


def toy_instance(seed):
    ch = sample_realization(paper_toy_topology(), PROPAGATION, seed=seed)
    return ch, Budgets.uniform(4, 10.0)


def random_feasible(rng, budgets):
    K = budgets.num_users
    p = rng.uniform(0.0, 1.0, size=(K, K))
    scale = rng.uniform(0.0, 1.0, size=K)
    return p * (scale * budgets.p_bar / p.sum(axis=1))[:, None]


@pytest.fixture(scope="module")
def equivalence_runs():
    """Criterion 1/5 workload: 100 random instances, auction vs oracle."""
    records = []
    start = time.perf_counter()
    index = 0
    for K, count in ((2, 34), (3, 33), (4, 33)):
        for r in range(count):
            ch, bud = random_instance(K, r)
            rec = run_auction(ch, bud,
                              StepConfig(epsilon=1e-4, max_iterations=300_000),
                              seed=np.random.SeedSequence([90, K, r, 2]))
            sol = solve_p1(ch, bud, seed=np.random.SeedSequence([90, K, r, 3]))
            records.append({
                "channels": ch, "budgets": bud, "record": rec, "oracle": sol,
                "objective": weighted_sum_rate(rec.final_state.p, ch, bud),
                "kkt": kkt_residual(rec.final_state.p, rec.final_state.lam,
                                    ch, bud),
            })
            index += 1
    elapsed = time.perf_counter() - start
    return records, elapsed


def test_criterion_01_oracle_equivalence(equivalence_runs):
    records, elapsed = equivalence_runs
    assert len(records) == 100
    assert all(r["record"].converged for r in records)
    worst_gap = max(abs(r["objective"] - r["oracle"].objective)
                    / r["oracle"].objective for r in records)
    worst_kkt = max(r["kkt"] for r in records)
    assert worst_gap < 1e-3
    assert worst_kkt < 1e-4
    assert elapsed < 120.0


def test_criterion_02_gradient_finite_differences():
    rng = np.random.default_rng(23)
    ch, bud = toy_instance(0)
    # central-difference step of 1e-6 times the power scale; a smaller step
    # lets round-off dominate the relative error on near-zero marginals
    h = 1e-6 * float(np.max(bud.p_bar))
    worst = 0.0
    for _ in range(250):                      # 250 points x 4 columns = 1e3
        p = random_feasible(rng, bud) + 0.05  # interior
        for i in range(4):
            grad = rate_gradient(i, p, ch)
            for j in range(4):
                up, dn = p.copy(), p.copy()
                up[j, i] += h
                dn[j, i] -= h
                fd = (rate_approx(i, up, ch) - rate_approx(i, dn, ch)) / (2 * h)
                analytic = grad.d_own if j == i else grad.d_relay[j]
                worst = max(worst, abs(analytic - fd) / max(abs(fd), 1e-9))
    assert worst < 1e-5
    # boundary one-sided limits against directional differences
    p = np.diag(bud.p_bar.copy())
    grad = rate_gradient(0, p, ch)
    hb = 1e-8
    up = p.copy()
    up[1, 0] += hb
    fd = (rate_approx(0, up, ch) - rate_approx(0, p, ch)) / hb
    assert abs(grad.d_relay[1] - fd) / fd < 1e-3
    p0 = np.zeros((4, 4))
    p0[1, 0] = 5.0
    up0 = p0.copy()
    up0[1, 0] += hb
    assert rate_gradient(0, p0, ch).d_relay[1] == 0.0
    assert rate_approx(0, up0, ch) == pytest.approx(rate_approx(0, p0, ch),
                                                    abs=1e-12)


def test_criterion_03_concavity_and_upper_bound():
    rng = np.random.default_rng(31)
    ch, bud = toy_instance(1)
    for _ in range(10_000):
        p, q = random_feasible(rng, bud), random_feasible(rng, bud)
        a = rng.uniform()
        mid = rate_vector(a * p + (1 - a) * q, ch)
        chord = a * rate_vector(p, ch) + (1 - a) * rate_vector(q, ch)
        assert np.all(mid >= chord - 1e-10)
    for _ in range(10_000):
        p = random_feasible(rng, bud)
        i = rng.integers(4)
        assert rate_exact(i, p, ch) <= rate_approx(i, p, ch) + 1e-12


def test_criterion_04_single_user_analytic():
    ch = ChannelRealization(internode_gain=np.zeros((1, 1)),
                            node_to_dest_gain=np.ones((1, 1)))
    bud = Budgets.uniform(1, 10.0)
    rec = run_auction(ch, bud, StepConfig(epsilon=1e-3), seed=0)
    assert rec.converged
    assert rec.final_state.p[0, 0] == pytest.approx(10.0, abs=1e-5)
    assert abs(rec.final_state.lam[0] - 1.0 / (22 * np.log(2))) < 1e-6


def test_criterion_05_feasibility_and_slackness(equivalence_runs):
    records, _ = equivalence_runs
    cfg = StepConfig()
    for r in records:
        st = r["record"].final_state
        resid = st.p.sum(axis=1) - r["budgets"].p_bar
        assert np.all(resid <= 1e-6)
        active = st.lam > cfg.price_floor + cfg.convergence_tol
        assert np.all(np.abs(resid[active]) < 1e-5)


def test_criterion_06_baseline_dominance_and_gain_growth():
    # dominance on every toy realization
    for seed in range(100):
        ch, bud = toy_instance(seed)
        rec = run_auction(ch, bud, StepConfig(epsilon=1e-3), seed=1000 + seed)
        assert rec.converged
        direct = weighted_sum_rate(direct_power_matrix(bud), ch, bud)
        assert weighted_sum_rate(rec.final_state.p, ch, bud) >= direct - 1e-9
    # mean cooperative gain grows with network size (central destination)
    means = []
    for K in range(2, 9):
        gains = []
        for r in range(100):
            topo = random_topology(
                K, 1.0, seed=np.random.SeedSequence([777, K, r, 0]),
                shared_destination=(0.5, 0.5))
            ch = sample_realization(
                topo, PROPAGATION, seed=np.random.SeedSequence([777, K, r, 1]))
            bud = Budgets.uniform(K, 10.0)
            rec = run_auction(ch, bud,
                              StepConfig(epsilon=1e-3, max_iterations=200_000),
                              seed=np.random.SeedSequence([777, K, r, 2]))
            assert rec.converged
            a = weighted_sum_rate(rec.final_state.p, ch, bud)
            d = weighted_sum_rate(direct_power_matrix(bud), ch, bud)
            gains.append(a / d - 1.0)
        means.append(float(np.mean(gains)))
    assert all(m > 0 for m in means)
    assert all(means[i] < means[i + 1] for i in range(len(means) - 1))


def test_criterion_07_asynchronous_robustness():
    ch, bud = toy_instance(0)
    objs, iters = [], []
    for period in (1, 4, 20):
        rec = run_auction(ch, bud,
                          StepConfig(epsilon=1e-3, max_iterations=300_000),
                          schedule=Schedule.slowed_node(4, 3, period), seed=42)
        assert rec.converged
        objs.append(weighted_sum_rate(rec.final_state.p, ch, bud))
        iters.append(rec.iterations_used)
    assert max(objs) - min(objs) < 1e-4 * objs[0]
    assert iters[0] < iters[1] < iters[2]


def test_criterion_08_initialization_independence():
    worst = 0.0
    for K, count in ((2, 17), (3, 17), (4, 16)):
        for r in range(count):
            ch, bud = random_instance(K, 500 + r)
            objs = []
            for s in (1, 2):
                rec = run_auction(
                    ch, bud, StepConfig(epsilon=1e-3, max_iterations=300_000),
                    seed=np.random.SeedSequence([91, K, r, s]))
                assert rec.converged
                objs.append(weighted_sum_rate(rec.final_state.p, ch, bud))
            worst = max(worst, abs(objs[0] - objs[1]) / objs[0])
    assert worst < 1e-4


def test_criterion_09_lyapunov_descent():
    ch, bud = toy_instance(0)
    sol = solve_p1(ch, bud, seed=7)
    rec = run_auction(ch, bud,
                      StepConfig(epsilon=1e-5, max_iterations=500_000), seed=3)
    assert rec.converged
    V = np.array([lyapunov_value(lam, sol.lambda_star)
                  for lam in rec.lambdas])
    assert np.all(np.diff(V[1:]) <= 1e-10)


def test_criterion_10_monotone_gradient_inequality():
    ch, bud = toy_instance(2)
    sol = solve_p1(ch, bud, seed=9)
    M_star = marginal_matrix(sol.p_star, ch, bud.w)
    rng = np.random.default_rng(10)
    for _ in range(1_000):
        p = random_feasible(rng, bud)
        lhs = np.sum((marginal_matrix(p, ch, bud.w) - M_star)
                     * (p - sol.p_star))
        assert lhs <= 1e-10


def test_criterion_11_cli_determinism(tmp_path):
    dirs = (tmp_path / "a", tmp_path / "b")
    commands = (
        ["toy4", "--seed", "4"],
        ["cdf", "--epsilons", "1e-3", "--realizations", "3", "--seed", "4"],
        ["async", "--periods", "1,4", "--seed", "4"],
        ["throughput", "--num-users", "2,3", "--realizations", "2",
         "--seed", "4"],
        ["verify", "--num-users", "2", "--realizations", "2", "--seed", "4"],
    )
    for out in dirs:
        for cmd in commands:
            assert cli_main(cmd + ["--out", str(out), "--quiet"]) == 0
    names = sorted(p.name for p in dirs[0].iterdir())
    assert names == sorted(p.name for p in dirs[1].iterdir())
    for name in names:
        assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes()
