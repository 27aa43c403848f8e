"""Experiment driver: seeded, file-driven runs of the auction and oracle.

Subcommands
-----------
toy4        one 4-user benchmark realization: topology/link lists, power
            tables, price/payoff/residual trace, oracle comparison
cdf         per-node empirical CDF of price-convergence iterations over a
            list of step sizes
async       same realization under several update periods for one node
throughput  auction vs direct-transmission baseline over user counts and
            budget levels
verify      auction/oracle agreement report over random instances

All outputs are CSV/JSON with fixed 12-significant-digit formatting and
sorted keys, so a rerun with the same config and seed is byte-identical.
Unconverged runs are data (reported as such), not process failures; the
exit code is nonzero only for I/O or configuration errors.
"""

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .auction import (Schedule, StepConfig, node_convergence_iterations,
                      run_auction, write_trace_csv)
from .channel import (PropagationParams, paper_toy_topology, random_topology,
                      sample_realization)
from .oracle import kkt_residual, solve_p1
from .rates import Budgets, direct_power_matrix, weighted_sum_rate

FMT = "%.12g"


@dataclass
class ScenarioConfig:
    """Everything a run depends on, loadable from a JSON object.

    Budgets are given in dB and converted as p_bar = 10^(dB/10) (noise
    power normalized to 1). carrier_frequency_ghz is recorded for
    documentation only; nothing in the normalized model uses it.
    """

    topology: str = "paper_toy"          # "paper_toy" | "random"
    num_users: int = 4
    destination_mode: str = "shared"     # "shared" | "per_user"
    area_side: float = 1.0
    path_loss_exponent: float = 3.5
    shadowing_std_db: float = 5.8
    fading: str = "rayleigh"
    budgets_db: float = 10.0             # scalar or per-user list
    weights: list = None                 # None = all ones
    epsilon: float = 1e-3
    price_floor: float = 1e-9
    max_iterations: int = 200_000
    convergence_tol: float = 1e-6
    convergence_window: int = 10
    update_periods: list = None          # None = synchronous
    realizations: int = 100
    base_seed: int = 0
    out_dir: str = "out"
    carrier_frequency_ghz: float = 5.0

    @classmethod
    def from_file(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            data = json.load(fh)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def propagation(self) -> PropagationParams:
        return PropagationParams(path_loss_exponent=self.path_loss_exponent,
                                 shadowing_std_db=self.shadowing_std_db,
                                 fading=self.fading)

    def budgets(self, K: int = None) -> Budgets:
        K = self.num_users if K is None else K
        p_bar = 10.0 ** (np.broadcast_to(
            np.asarray(self.budgets_db, dtype=float), (K,)) / 10.0)
        w = (np.ones(K) if self.weights is None
             else np.asarray(self.weights, dtype=float))
        return Budgets(p_bar=p_bar.copy(), w=w)

    def step_config(self, epsilon: float = None) -> StepConfig:
        return StepConfig(epsilon=self.epsilon if epsilon is None else epsilon,
                          price_floor=self.price_floor,
                          max_iterations=self.max_iterations,
                          convergence_tol=self.convergence_tol,
                          convergence_window=self.convergence_window)

    def schedule(self, K: int = None) -> Schedule:
        K = self.num_users if K is None else K
        if self.update_periods is None:
            return Schedule.synchronous(K)
        return Schedule(update_period=np.asarray(self.update_periods))

    def make_topology(self, K: int = None, index: int = 0):
        K = self.num_users if K is None else K
        if self.topology == "paper_toy":
            return paper_toy_topology()
        if self.topology == "random":
            shared = (0.0, 0.0) if self.destination_mode == "shared" else None
            return random_topology(K, self.area_side,
                                   seed=self.realization_seed(index, "topology"),
                                   shared_destination=shared)
        raise ValueError(f"unknown topology kind: {self.topology!r}")

    def realization_seed(self, index: int, stream: str = "channel"):
        """Documented seed mixing: SeedSequence([base, index, stream tag]),
        so any subset of a sweep is independently reproducible."""
        tag = {"topology": 0, "channel": 1, "auction": 2, "oracle": 3,
               "auction_alt": 4}[stream]
        return np.random.SeedSequence([self.base_seed, index, tag])


def _json_ready(obj):
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_ready(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(FMT % float(obj))
    if isinstance(obj, (np.integer, np.bool_)):
        return obj.item()
    return obj


def _write_json(path: Path, payload: dict, quiet: bool) -> None:
    path.write_text(json.dumps(_json_ready(payload), sort_keys=True, indent=2)
                    + "\n")
    if not quiet:
        print(f"wrote {path}")


def _write_csv(path: Path, header, rows, quiet: bool) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(FMT % v if isinstance(v, float) else str(v)
                              for v in row) + "\n")
    if not quiet:
        print(f"wrote {path}")


def _run_instance(cfg: ScenarioConfig, index: int, K: int = None,
                  epsilon: float = None, schedule: Schedule = None,
                  seed_stream: str = "auction"):
    topo = cfg.make_topology(K, index)
    ch = sample_realization(topo, cfg.propagation(),
                            seed=cfg.realization_seed(index, "channel"))
    bud = cfg.budgets(K)
    if schedule is None:
        schedule = cfg.schedule(K)
    rec = run_auction(ch, bud, cfg.step_config(epsilon),
                      schedule=schedule,
                      seed=cfg.realization_seed(index, seed_stream))
    return topo, ch, bud, rec


def _link_list(p: np.ndarray, p_bar: np.ndarray) -> list:
    """Relay links (j, i), j != i, carrying more than 1e-6 * p_bar_j."""
    K = p.shape[0]
    return [[j, i] for j in range(K) for i in range(K)
            if j != i and p[j, i] > 1e-6 * p_bar[j]]


def cmd_toy4(cfg: ScenarioConfig, args) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    topo, ch, bud, rec = _run_instance(cfg, 0)
    p0 = direct_power_matrix(bud)
    p = rec.final_state.p
    sol = solve_p1(ch, bud, seed=cfg.realization_seed(0, "oracle"))

    _write_json(out / "toy4_topology.json", {
        "node_positions": topo.node_positions,
        "destination_positions": topo.destination_positions,
        "initial_links": _link_list(p0, bud.p_bar),
        "final_links": _link_list(p, bud.p_bar),
    }, args.quiet)
    K = bud.num_users
    header = ["stage", "seller"] + [f"to_user_{i + 1}" for i in range(K)]
    rows = [["initial", j + 1] + [float(v) for v in p0[j]] for j in range(K)]
    rows += [["final", j + 1] + [float(v) for v in p[j]] for j in range(K)]
    _write_csv(out / "toy4_powers.csv", header, rows, args.quiet)
    write_trace_csv(rec, out / "toy4_trace.csv")
    if not args.quiet:
        print(f"wrote {out / 'toy4_trace.csv'}")
    _write_json(out / "toy4_summary.json", {
        "converged": rec.converged,
        "iterations": rec.iterations_used,
        "auction_objective": weighted_sum_rate(p, ch, bud),
        "baseline_objective": weighted_sum_rate(p0, ch, bud),
        "oracle": sol.to_json_dict(),
        "auction_kkt_residual": kkt_residual(p, rec.final_state.lam, ch, bud),
        "final_prices": rec.final_state.lam,
    }, args.quiet)
    return 0


def cmd_cdf(cfg: ScenarioConfig, args) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    K = cfg.num_users
    for eps in args.epsilons:
        counts = np.zeros((cfg.realizations, K), dtype=int)
        for r in range(cfg.realizations):
            _, _, _, rec = _run_instance(cfg, r, epsilon=eps)
            counts[r] = node_convergence_iterations(rec, cfg.convergence_tol)
        grid = np.unique(counts)
        rows = [[int(n)] + [float((counts[:, j] <= n).mean())
                            for j in range(K)] for n in grid]
        _write_csv(out / f"cdf_eps{FMT % eps}.csv",
                   ["iterations"] + [f"node_{j + 1}" for j in range(K)],
                   rows, args.quiet)
    return 0


def cmd_async(cfg: ScenarioConfig, args) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    K = cfg.num_users
    rows = []
    for period in args.periods:
        sched = Schedule.slowed_node(K, args.node - 1, period)
        _, ch, bud, rec = _run_instance(cfg, 0, schedule=sched)
        rows.append([period, int(rec.converged), rec.iterations_used,
                     float(weighted_sum_rate(rec.final_state.p, ch, bud))])
    _write_csv(out / "async.csv",
               ["period", "converged", "iterations", "objective"],
               rows, args.quiet)
    return 0


def cmd_throughput(cfg: ScenarioConfig, args) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for db in args.budgets_db:
        for K in args.num_users:
            run_cfg = ScenarioConfig(**{**cfg.__dict__,
                                        "topology": "random",
                                        "num_users": K, "budgets_db": db})
            auction_objs, baseline_objs, unconverged = [], [], 0
            for r in range(cfg.realizations):
                _, ch, bud, rec = _run_instance(run_cfg, r, K=K)
                base = weighted_sum_rate(direct_power_matrix(bud), ch, bud)
                if not rec.converged:
                    unconverged += 1
                    continue
                auction_objs.append(weighted_sum_rate(rec.final_state.p,
                                                      ch, bud))
                baseline_objs.append(base)
            mean_a = float(np.mean(auction_objs)) if auction_objs else 0.0
            mean_b = float(np.mean(baseline_objs)) if baseline_objs else 0.0
            gain = mean_a / mean_b - 1.0 if mean_b > 0 else 0.0
            rows.append([float(db), K, len(auction_objs), unconverged,
                         mean_a, mean_b, float(gain)])
    _write_csv(out / "throughput.csv",
               ["budget_db", "num_users", "converged_runs", "unconverged",
                "mean_auction_rate", "mean_direct_rate", "relative_gain"],
               rows, args.quiet)
    return 0


def cmd_verify(cfg: ScenarioConfig, args) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for K in args.num_users:
        run_cfg = ScenarioConfig(**{**cfg.__dict__,
                                    "topology": "random", "num_users": K})
        for r in range(cfg.realizations):
            _, ch, bud, rec = _run_instance(run_cfg, r, K=K)
            sol = solve_p1(ch, bud,
                           seed=run_cfg.realization_seed(r, "oracle"))
            obj = weighted_sum_rate(rec.final_state.p, ch, bud)
            _, _, _, rec2 = _run_instance(run_cfg, r, K=K,
                                          seed_stream="auction_alt")
            obj2 = weighted_sum_rate(rec2.final_state.p, ch, bud)
            records.append({
                "num_users": K, "realization": r,
                "converged": rec.converged,
                "iterations": rec.iterations_used,
                "auction_objective": obj,
                "oracle_objective": sol.objective,
                "relative_gap": abs(obj - sol.objective)
                                / max(sol.objective, 1e-300),
                "kkt_residual": kkt_residual(rec.final_state.p,
                                             rec.final_state.lam, ch, bud),
                "reinit_relative_diff": abs(obj - obj2)
                                        / max(sol.objective, 1e-300),
            })
    converged = [r for r in records if r["converged"]]
    summary = {
        "records": records,
        "num_instances": len(records),
        "unconverged_fraction": 1.0 - len(converged) / len(records),
        "max_relative_gap": max((r["relative_gap"] for r in converged),
                                default=0.0),
        "max_kkt_residual": max((r["kkt_residual"] for r in converged),
                                default=0.0),
        "max_reinit_relative_diff": max((r["reinit_relative_diff"]
                                         for r in converged), default=0.0),
    }
    _write_json(out / "verify.json", summary, args.quiet)
    if not args.quiet:
        print(f"instances={summary['num_instances']} "
              f"max_gap={summary['max_relative_gap']:.3g} "
              f"max_kkt={summary['max_kkt_residual']:.3g}")
    return 0


def _float_list(text: str):
    return [float(v) for v in text.split(",") if v]


def _int_list(text: str):
    return [int(v) for v in text.split(",") if v]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None,
                        help="JSON scenario config file")
    common.add_argument("--seed", type=int, default=None,
                        help="override base seed")
    common.add_argument("--out", type=str, default=None,
                        help="override output directory")
    common.add_argument("--realizations", type=int, default=None,
                        help="override realization count")
    common.add_argument("--epsilon", type=float, default=None,
                        help="override price step size")
    common.add_argument("--quiet", action="store_true",
                        help="suppress progress output")

    parser = argparse.ArgumentParser(
        prog="coopauction",
        description="Distributed power-auction experiments for cooperative "
                    "relay networks")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("toy4", parents=[common],
                   help="single 4-user benchmark realization")

    p_cdf = sub.add_parser("cdf", parents=[common],
                           help="convergence-iteration CDFs over step sizes")
    p_cdf.add_argument("--epsilons", type=_float_list,
                       default=[1e-3, 1e-4, 1e-5],
                       help="comma-separated price step sizes")

    p_async = sub.add_parser("async", parents=[common],
                             help="asynchronous-update study")
    p_async.add_argument("--periods", type=_int_list, default=[1, 4, 20],
                         help="comma-separated update periods")
    p_async.add_argument("--node", type=int, default=4,
                         help="1-based index of the slowed node")

    p_tp = sub.add_parser("throughput", parents=[common],
                          help="auction vs direct-transmission sweep")
    p_tp.add_argument("--num-users", type=_int_list,
                      default=[2, 3, 4, 5, 6, 7, 8],
                      help="comma-separated user counts")
    p_tp.add_argument("--budgets-db", type=_float_list, default=[10.0],
                      help="comma-separated budget levels in dB")

    p_ver = sub.add_parser("verify", parents=[common],
                           help="auction/oracle agreement report")
    p_ver.add_argument("--num-users", type=_int_list, default=[2, 3, 4],
                       help="comma-separated user counts")
    return parser


COMMANDS = {"toy4": cmd_toy4, "cdf": cmd_cdf, "async": cmd_async,
            "throughput": cmd_throughput, "verify": cmd_verify}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = (ScenarioConfig.from_file(args.config) if args.config
               else ScenarioConfig())
        if args.seed is not None:
            cfg.base_seed = args.seed
        if args.out is not None:
            cfg.out_dir = args.out
        if args.realizations is not None:
            cfg.realizations = args.realizations
        if args.epsilon is not None:
            cfg.epsilon = args.epsilon
        return COMMANDS[args.command](cfg, args)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
