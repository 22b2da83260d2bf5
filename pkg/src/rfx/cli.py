"""Command-line entry point: ``rfx <subcommand> ...``.

Exit status is 0 on success, 1 when an input violates an invariant and 2 on
I/O errors.  Step indices in every file are positional (entry 0 is step 1).
"""
from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import instances
from .dp import optimal_value, policy_value
from .explorer import PolicyCover, rf_explore
from .harness import ExperimentConfig, run_baseline_comparison, run_e2e, theoretical_budgets
from .io import (_dump, _load, load_dataset, load_mdp, load_policy, load_reward, save_dataset,
                 save_mdp, save_policy, save_reward)
from .learners import RegretLearnerConfig
from .mdp import EpisodeDataset, Environment, StochasticPolicy, make_rng
from .planner import NpgConfig, empirical_initial_dist, estimate_model, get_solver, npg
from .rmax import snapshots_from_episodes, zero_rmax_plan, zero_rmax_run


def cover_to_dict(cover: PolicyCover) -> dict:
    return {"goals": [list(g) for g in cover.goals], "weights": list(cover.weights),
            "policies": [p.probs.tolist() for p in cover.policies]}


def cover_from_dict(d: dict) -> PolicyCover:
    cover = PolicyCover()
    for g, w, p in zip(d["goals"], d["weights"], d["policies"]):
        cover.policies.append(StochasticPolicy(np.array(p, dtype=float)))
        cover.weights.append(int(w))
        cover.goals.append((int(g[0]), int(g[1])))
        key = cover.goals[-1]
        cover.per_goal_counts[key] = cover.per_goal_counts.get(key, 0) + int(w)
    return cover


def _dims(text: str) -> tuple[int, int, int]:
    parts = [int(x) for x in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected S,A,H")
    return parts[0], parts[1], parts[2]


def _print(obj) -> None:
    print(json.dumps(obj, indent=2))


# ---------------------------------------------------------------- commands

def cmd_gen(args) -> None:
    rng = make_rng(args.seed)
    if args.family == "toy":
        mdp = instances.toy_significance_mdp()
    elif args.family == "random":
        mdp = instances.random_mdp(args.S, args.A, args.H, args.concentration, rng)
    elif args.family == "chain":
        mdp = instances.deterministic_chain(args.S, args.A, args.H)
    elif args.family == "single-hard":
        mdp = instances.single_state_hard_instance(args.n, args.A, args.eps, rng=rng)
    elif args.family == "tree-hard":
        mdp = instances.embedded_tree_instance(args.n, args.A, args.H, args.eps,
                                               rng=rng, num_states=args.num_states)
    elif args.family == "reward":
        save_reward(instances.random_reward(args.S, args.A, args.H, rng), args.out)
        return
    else:  # packing
        pack = instances.sample_uncorrelated_packing(
            args.n, args.A, args.M, args.gamma, rng, args.max_retries,
            require_condition=not args.skip_condition)
        _dump({"gamma": pack.gamma, "vectors": pack.vectors.tolist()}, args.out)
        return
    save_mdp(mdp, args.out)


def cmd_explore(args) -> None:
    env = Environment(load_mdp(args.mdp))
    cfg = RegretLearnerConfig(kind=args.learner, bonus_scale=args.bonus_scale)
    cover, data = rf_explore(env, args.n0, args.n, cfg, args.seed)
    save_dataset(data, args.out_dataset)
    if args.out_cover:
        _dump(cover_to_dict(cover), args.out_cover)
    _print({"episodes": env.episodes_used, "cover_policies": len(cover.policies)})


def cmd_plan(args) -> None:
    S, A, H = args.mdp_dims
    reward = load_reward(args.reward)
    if (reward.S, reward.A, reward.H) != (S, A, H):
        raise ValueError("reward shape does not match --mdp-dims")
    data = load_dataset(args.dataset, H)
    mdp = estimate_model(data, S, A, H).to_mdp(empirical_initial_dist(data, S))
    if args.solver == "npg" and args.emit_trace:
        sched = NpgConfig.for_accuracy(H, A, args.eps)
        T = args.iters if args.iters is not None else sched.iterations
        eta = args.eta if args.eta is not None else float(np.sqrt(np.log(A) / (H * T)))
        policy, trace = npg(mdp, reward, NpgConfig(eta, T, record_trace=True))
        with open(args.emit_trace, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["t", "value"])
            w.writerows(enumerate(trace.tolist()))
    else:
        policy = get_solver(args.solver, args.eta, args.iters)(mdp, reward, args.eps)
    save_policy(policy, args.out_policy, solver=args.solver)


def cmd_eval(args) -> None:
    mdp = load_mdp(args.mdp)
    reward = load_reward(args.reward)
    policy = load_policy(args.policy)
    v = policy_value(mdp, reward, policy)
    v_star = optimal_value(mdp, reward)
    _print({"value": v, "optimal_value": v_star, "gap": v_star - v})


def cmd_e2e(args) -> None:
    cfg = ExperimentConfig.load(args.config)
    if args.out is not None:
        cfg.output_dir = args.out
    if args.trials is not None:
        cfg.trials = args.trials
    if args.seed is not None:
        cfg.seed = args.seed
    results = run_e2e(cfg)
    gaps = [g for r in results for _, g in r.gaps]
    _print({"trials": len(results), "max_gap": max(gaps) if gaps else 0.0,
            "coverage_ratio": [r.coverage_ratio for r in results]})


def cmd_rmax(args) -> None:
    mdp = load_mdp(args.mdp)
    env = Environment(mdp)
    snaps, data = zero_rmax_run(env, args.episodes, args.m, args.seed, mdp.initial_dist)
    # the episodes determine every snapshot, so they are what is stored
    _dump({"S": mdp.S, "A": mdp.A, "H": mdp.H, "m": args.m, "p1": mdp.initial_dist.tolist(),
           "states": data.states.tolist(), "actions": data.actions.tolist()},
          args.out_snapshots)
    _print({"episodes": env.episodes_used,
            "known_pairs_at_last_snapshot": int(snaps[-1].known_set.known.sum())})


def cmd_rmax_plan(args) -> None:
    d = _load(args.snapshots)
    data = EpisodeDataset(np.array(d["states"], dtype=np.int64).reshape(-1, d["H"] + 1),
                          np.array(d["actions"], dtype=np.int64).reshape(-1, d["H"]), d["H"])
    snaps = snapshots_from_episodes(data, d["S"], d["A"], d["m"], np.array(d["p1"]))
    reward = load_reward(args.reward)
    policy = zero_rmax_plan(snaps, reward, make_rng(args.seed), args.snapshot)
    save_policy(policy, args.out_policy, snapshot=args.snapshot)


def cmd_compare(args) -> None:
    cfg = ExperimentConfig.load(args.config)
    if args.out is not None:
        cfg.output_dir = args.out
    budgets = [int(b) for b in args.budgets.split(",")]
    rows = run_baseline_comparison(cfg, budgets, args.m, args.snapshot)
    _print(rows)


def cmd_budgets(args) -> None:
    _print(theoretical_budgets(args.S, args.A, args.H, args.eps, args.p))


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rfx", description="Reward-free exploration toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate an instance")
    g.add_argument("family", choices=["toy", "random", "chain", "single-hard", "tree-hard", "packing", "reward"])
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--S", type=int, default=3)
    g.add_argument("--A", type=int, default=2)
    g.add_argument("--H", type=int, default=3)
    g.add_argument("--concentration", type=float, default=1.0)
    g.add_argument("--n", type=int, default=4)
    g.add_argument("--eps", type=float, default=0.1, help="eps (single-hard) or eps0 (tree-hard)")
    g.add_argument("--num-states", type=int, default=None)
    g.add_argument("--M", type=int, default=2)
    g.add_argument("--gamma", type=float, default=0.5)
    g.add_argument("--max-retries", type=int, default=1000)
    g.add_argument("--skip-condition", action="store_true",
                   help="search for a packing even when the existence condition fails")
    g.set_defaults(func=cmd_gen)

    e = sub.add_parser("explore", help="reward-free exploration")
    e.add_argument("--mdp", required=True)
    e.add_argument("--n0", type=int, required=True)
    e.add_argument("--n", type=int, required=True)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--learner", choices=["bernstein", "hoeffding"], default="bernstein")
    e.add_argument("--bonus-scale", type=float, default=1.0)
    e.add_argument("--out-dataset", required=True)
    e.add_argument("--out-cover")
    e.set_defaults(func=cmd_explore)

    p = sub.add_parser("plan", help="plan from a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--mdp-dims", type=_dims, required=True)
    p.add_argument("--reward", required=True)
    p.add_argument("--solver", choices=["vi", "npg"], default="vi")
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--eta", type=float)
    p.add_argument("--iters", type=int)
    p.add_argument("--out-policy", required=True)
    p.add_argument("--emit-trace")
    p.set_defaults(func=cmd_plan)

    v = sub.add_parser("eval", help="exact value and gap of a policy")
    v.add_argument("--mdp", required=True)
    v.add_argument("--reward", required=True)
    v.add_argument("--policy", required=True)
    v.set_defaults(func=cmd_eval)

    x = sub.add_parser("e2e", help="end-to-end experiment from a JSON config")
    x.add_argument("--config", required=True)
    x.add_argument("--out")
    x.add_argument("--trials", type=int)
    x.add_argument("--seed", type=int)
    x.set_defaults(func=cmd_e2e)

    r = sub.add_parser("rmax", help="Zero-RMax exploration")
    r.add_argument("--mdp", required=True)
    r.add_argument("--episodes", type=int, required=True)
    r.add_argument("--m", type=int, default=10)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out-snapshots", required=True)
    r.set_defaults(func=cmd_rmax)

    rp = sub.add_parser("rmax-plan", help="plan from Zero-RMax snapshots")
    rp.add_argument("--snapshots", required=True)
    rp.add_argument("--reward", required=True)
    rp.add_argument("--snapshot", choices=["random", "last"], default="random")
    rp.add_argument("--seed", type=int, default=0)
    rp.add_argument("--out-policy", required=True)
    rp.set_defaults(func=cmd_rmax_plan)

    c = sub.add_parser("compare", help="matched-budget comparison with Zero-RMax")
    c.add_argument("--config", required=True)
    c.add_argument("--budgets", required=True, help="comma separated episode budgets")
    c.add_argument("--m", type=int, default=10)
    c.add_argument("--snapshot", choices=["random", "last"], default="last")
    c.add_argument("--out")
    c.set_defaults(func=cmd_compare)

    b = sub.add_parser("budgets", help="theoretical budgets")
    for name in ("S", "A", "H"):
        b.add_argument(f"--{name}", type=int, required=True)
    b.add_argument("--eps", type=float, required=True)
    b.add_argument("--p", type=float, default=0.1)
    b.set_defaults(func=cmd_budgets)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
