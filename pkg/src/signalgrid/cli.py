"""Command-line entry point.

Subcommands:
  simulate   one seeded episode under a chosen controller; streams metrics
  train      learn the policy controllers; writes logs and checkpoints
  evaluate   the 20-episode seeded protocol for any controller
  gradcheck  finite-difference verification of the differentiable core
  report     aggregate run directories into tables and figures
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, apply_override, dump_config, load_config, save_config
from .marl.evaluator import evaluate, run_episode
from .marl.trainer import train
from .nn.gradcheck import grad_check, make_two_agent_harness
from .report import report as build_report
from .rngstreams import derive_seed
from . import runtime


def _load_cfg(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    for assignment in args.set or []:
        cfg = apply_override(cfg, assignment)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None):
        cfg.output.dir = args.out
    return cfg


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML experiment config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key, e.g. train.gamma=0.95")
    p.add_argument("--seed", type=int, help="override the base seed")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--print-config", action="store_true",
                   help="print the fully resolved config and exit")


def cmd_simulate(args) -> int:
    cfg = _load_cfg(args)
    if args.print_config:
        print(dump_config(cfg), end="")
        return 0
    net = runtime.make_network(cfg)
    op = runtime.make_operator(cfg, net)
    sim = runtime.make_sim(cfg, net)
    controller = runtime.make_controller(cfg, net, op, args.controller,
                                         mode=args.action_mode,
                                         checkpoint_dir=args.checkpoint)
    episode_seed = derive_seed(cfg.seed, "eval-episode", 0)
    rows, trips, summary = run_episode(sim, controller, episode_seed)
    out = Path(cfg.output.dir)
    runtime.write_metrics_csv(out / "metrics.csv", rows)
    runtime.write_trips_csv(out / "trips.csv", trips)
    runtime.write_episodes_csv(out / "episodes.csv", [summary])
    with open(out / "summary.json", "w") as fh:
        json.dump({"controller": controller.name,
                   "mean_reward": summary.mean_reward,
                   "mean_queue": summary.mean_queue,
                   "completed_trips": summary.completed_trips}, fh,
                  indent=2, sort_keys=True)
    save_config(cfg, out / "config.yaml")
    print(f"simulate[{controller.name}] seed={cfg.seed} "
          f"mean_queue={summary.mean_queue:.3f} mean_reward={summary.mean_reward:.3f} "
          f"trips={summary.completed_trips} -> {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    if args.print_config:
        print(dump_config(cfg), end="")
        return 0
    if args.controller not in runtime.LEARNED_CONTROLLERS:
        print(f"error: cannot train controller {args.controller!r}", file=sys.stderr)
        return 2
    net = runtime.make_network(cfg)
    op = runtime.make_operator(cfg, net)
    sim = runtime.make_sim(cfg, net)
    controller = runtime.make_policy_controller(cfg, net, op, args.controller,
                                                mode="sample")
    tcfg = runtime.train_config(cfg)
    out = Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)

    def on_episode(log):
        if args.quiet:
            return
        print(f"episode {log.episode:4d}  steps {log.steps:4d}  "
              f"reward {log.mean_episode_reward:9.3f}  actor {log.actor_loss:8.4f}  "
              f"critic {log.critic_loss:8.4f}  entropy {log.entropy:6.4f}")

    from .marl.trainer import Trainer

    trainer = Trainer(sim, controller.models, controller, tcfg)
    logs = trainer.run(on_episode=on_episode) if tcfg.total_steps > 0 else []
    runtime.write_train_log_csv(out / "train_log.csv", logs)
    trainer.save_checkpoints(out / "checkpoints")
    save_config(cfg, out / "config.yaml")
    print(f"train[{controller.name}] {tcfg.total_steps} steps, "
          f"{len(logs)} episodes -> {out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_cfg(args)
    if args.print_config:
        print(dump_config(cfg), end="")
        return 0
    net = runtime.make_network(cfg)
    op = runtime.make_operator(cfg, net)
    sim = runtime.make_sim(cfg, net)
    controller = runtime.make_controller(cfg, net, op, args.controller,
                                         mode=args.action_mode,
                                         checkpoint_dir=args.checkpoint)
    episodes = args.episodes or cfg.train.eval_episodes
    result = evaluate(sim, controller, episodes=episodes, base_seed=cfg.seed)
    out = Path(cfg.output.dir)
    runtime.write_eval_outputs(out, cfg, result)
    mq, sq = result.metric_mean_std("mean_queue")
    mr, sr = result.metric_mean_std("mean_reward")
    print(f"evaluate[{controller.name}] episodes={episodes} "
          f"queue={mq:.3f}±{sq:.3f} reward={mr:.3f}±{sr:.3f} -> {out}")
    return 0


def cmd_gradcheck(args) -> int:
    worst = 0.0
    for trial in range(args.trials):
        model, loss_fn = make_two_agent_harness(seed=args.seed + trial)
        res = grad_check(model, loss_fn, h=args.h, mode=args.mode,
                         rng=__import__("numpy").random.default_rng(args.seed + trial))
        worst = max(worst, res.max_rel_err)
        if not res.passed:
            print(f"trial {trial}: FAIL max rel err {res.max_rel_err:.3e} "
                  f"({res.worst_param})")
    status = "PASS" if worst < args.threshold else "FAIL"
    print(f"gradcheck[{args.mode}] trials={args.trials} "
          f"max_rel_err={worst:.3e} threshold={args.threshold:g} {status}")
    return 0 if status == "PASS" else 1


def cmd_report(args) -> int:
    summary = build_report(args.run_dirs, args.out)
    print((Path(args.out) / "summary.txt").read_text(), end="")
    print(f"report -> {args.out}")
    return 0 if summary["controllers"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="signalgrid",
        description="Decentralized traffic-signal-control testbed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one episode under a controller")
    _add_common(p)
    p.add_argument("--controller", default="fixed-time",
                   choices=runtime.CONTROLLER_KINDS)
    p.add_argument("--checkpoint", help="checkpoint directory for learned controllers")
    p.add_argument("--action-mode", default="greedy", choices=("greedy", "sample"))
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train the learned controllers")
    _add_common(p)
    p.add_argument("--controller", default="graph-a2c",
                   choices=runtime.LEARNED_CONTROLLERS)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="multi-episode evaluation protocol")
    _add_common(p)
    p.add_argument("--controller", default="fixed-time",
                   choices=runtime.CONTROLLER_KINDS)
    p.add_argument("--checkpoint", help="checkpoint directory for learned controllers")
    p.add_argument("--episodes", type=int, help="episode count (default from config)")
    p.add_argument("--action-mode", default="greedy", choices=("greedy", "sample"))
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--mode", default="directional",
                   choices=("directional", "entrywise"))
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--threshold", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("report", help="summaries and figures from run directories")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
