"""Command-line front end.

Subcommands: ``gen`` materializes a scenario file from a TOML config,
``train`` runs the learner and writes a checkpoint plus a training curve,
``eval`` scores a checkpoint on seeded episodes, and ``compare`` scores it
side by side with the baseline policies on the same episode seeds.

Every command is deterministic given its flags, and no output file is
overwritten without --force.  Exit codes: 0 success, 2 for configuration
or input-file problems, 3 for runtime failures.
"""

import argparse
import contextlib
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

from .a3c import (
    Hyperparams,
    evaluate,
    greedy_traces,
    summarize_traces,
    train,
    write_training_csv,
)
from .baselines import RandomPolicy, greedy_decide, local_decide, rollout
from .env import OffloadEnv, write_trace_csv
from .errors import (
    CheckpointError,
    ConfigError,
    DomainError,
    LifecycleError,
    PlacementError,
)
from .nn import load_checkpoint, save_checkpoint
from .scenario import (
    Scenario,
    build_scenario,
    load_config,
    scenario_from_json,
    scenario_to_json,
)

CHECKPOINT_SCHEMA = "vecoffload.checkpoint/1"
EVAL_SCHEMA = "vecoffload.eval/1"
COMPARE_SCHEMA = "vecoffload.compare/1"

BASELINE_NAMES = ("greedy", "local", "random")

_CONFIG_ERRORS = (ConfigError, CheckpointError)
_RUNTIME_ERRORS = (DomainError, PlacementError, LifecycleError, OSError)


# --------------------------------------------------------------------------
# output plumbing


def _prepare_out(path, force: bool) -> Path:
    out = Path(path)
    if out.exists() and not force:
        raise ConfigError(f"{out} already exists; pass --force to overwrite")
    if out.parent != Path("."):
        out.parent.mkdir(parents=True, exist_ok=True)
    return out


@contextlib.contextmanager
def _staged_write(out: Path):
    # stage next to the target so os.replace stays on one filesystem; a
    # failure mid-write leaves no partial output behind
    tmp = out.with_name(out.name + ".partial")
    try:
        yield tmp
        os.replace(tmp, out)
    finally:
        if tmp.exists():
            tmp.unlink()


def _dump_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


# --------------------------------------------------------------------------
# shared input handling


def _load_scenario(args) -> Scenario:
    if getattr(args, "scenario", None):
        path = Path(args.scenario)
        if not path.exists():
            raise ConfigError(f"scenario file {path} does not exist")
        try:
            return scenario_from_json(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not a scenario file: {exc}") from exc
    return build_scenario(load_config(args.config))


def _load_actor(path, scenario: Scenario) -> tuple:
    nets, meta = load_checkpoint(path)
    if "actor" not in nets:
        raise CheckpointError(f"{path} holds no actor network")
    actor = nets["actor"]
    env = OffloadEnv(scenario)
    state_dim = env.encode(env.reset(seed=0)).shape[0]
    if actor.in_size != state_dim or actor.out_size != env.action_size:
        raise CheckpointError(
            f"checkpoint expects state {actor.in_size} / actions "
            f"{actor.out_size}, scenario provides {state_dim} / "
            f"{env.action_size}"
        )
    return actor, meta


def _pick_gamma(args, meta: dict, scenario: Scenario) -> float:
    if args.gamma is not None:
        return args.gamma
    stored = meta.get("hyper", {}).get("gamma")
    if stored is not None:
        return float(stored)
    return scenario.config.train.gamma


# --------------------------------------------------------------------------
# subcommands


def cmd_gen(args) -> int:
    config = load_config(args.config)
    seed = config.seed if args.seed is None else args.seed
    scenario = build_scenario(config, seed=seed)
    text = scenario_to_json(scenario)
    out = _prepare_out(args.out, args.force)
    with _staged_write(out) as tmp:
        tmp.write_text(text)
    print(f"wrote {out}: {scenario.service.task_count} tasks, "
          f"{len(scenario.nodes)} nodes, seed {seed}")
    return 0


def cmd_train(args) -> int:
    scenario = _load_scenario(args)
    over = {}
    if args.single_thread:
        over["workers"] = 1
    elif args.workers is not None:
        over["workers"] = args.workers
    if args.gamma is not None:
        over["gamma"] = args.gamma
    if args.delta is not None:
        over["entropy_coef"] = args.delta
    if args.episodes is not None:
        over["episodes"] = args.episodes
    if args.lr is not None:
        over["lr_actor"] = args.lr
        over["lr_critic"] = args.lr
    if args.seed is not None:
        over["seed"] = args.seed
    hyper = Hyperparams.from_scenario(scenario, **over)

    out_ckpt = _prepare_out(args.out_checkpoint, args.force)
    out_csv = _prepare_out(args.out_csv, args.force) if args.out_csv else None

    report = train(scenario, hyper)

    meta = {
        "schema": CHECKPOINT_SCHEMA,
        "state_dim": report.actor.in_size,
        "action_size": report.actor.out_size,
        "hyper": asdict(hyper),
        "scenario_seed": scenario.seed,
        "episodes_trained": report.episode_count,
    }
    with _staged_write(out_ckpt) as tmp:
        save_checkpoint(tmp, {"actor": report.actor, "critic": report.critic},
                        meta)
    if out_csv is not None:
        with _staged_write(out_csv) as tmp:
            write_training_csv(tmp, report)

    line = (f"trained {report.episode_count} episodes "
            f"({hyper.workers} worker{'s' if hyper.workers != 1 else ''}) "
            f"in {report.wall_clock:.1f}s; checkpoint -> {out_ckpt}")
    if out_csv is not None:
        line += f"; curve -> {out_csv}"
    print(line)
    return 0


def cmd_eval(args) -> int:
    scenario = _load_scenario(args)
    actor, meta = _load_actor(args.checkpoint, scenario)
    gamma = _pick_gamma(args, meta, scenario)

    traces = greedy_traces(actor, scenario, args.episodes, args.seed)
    metrics = summarize_traces(traces, gamma, scenario.config.action_size,
                               as_printed=scenario.config.objective_as_printed)
    doc = {
        "schema": EVAL_SCHEMA,
        "checkpoint": str(args.checkpoint),
        "gamma": gamma,
        "seed": args.seed,
        **metrics,
    }
    text = _dump_json(doc)
    sys.stdout.write(text)
    if args.out:
        out = _prepare_out(args.out, args.force)
        with _staged_write(out) as tmp:
            tmp.write_text(text)
    if args.out_csv:
        out = _prepare_out(args.out_csv, args.force)
        with _staged_write(out) as tmp:
            write_trace_csv(tmp, traces)
    return 0


def _baseline_decider(name: str, seed: int):
    if name == "greedy":
        return greedy_decide
    if name == "local":
        return local_decide
    return RandomPolicy(seed)


def cmd_compare(args) -> int:
    scenario = _load_scenario(args)
    actor, meta = _load_actor(args.checkpoint, scenario)
    gamma = _pick_gamma(args, meta, scenario)
    as_printed = scenario.config.objective_as_printed

    names = [n.strip() for n in args.baselines.split(",") if n.strip()]
    unknown = sorted(set(names) - set(BASELINE_NAMES))
    if unknown:
        raise ConfigError(
            f"unknown baselines {unknown}; choose from {list(BASELINE_NAMES)}")

    action_size = scenario.config.action_size
    rows = []
    traces = greedy_traces(actor, scenario, args.episodes, args.seed)
    rows.append({"policy": "trained",
                 **summarize_traces(traces, gamma, action_size,
                                    as_printed=as_printed)})
    env = OffloadEnv(scenario)
    for name in names:
        decide = _baseline_decider(name, args.seed)
        traces = [rollout(env, decide, seed=args.seed + i)
                  for i in range(args.episodes)]
        rows.append({"policy": name,
                     **summarize_traces(traces, gamma, action_size,
                                        as_printed=as_printed)})

    header = ("policy", "mean_service_delay_s", "mean_task_delay_s",
              "objective")
    keys = ("mean_service_delay", "mean_task_delay", "objective")
    widths = [max(len(header[0]), *(len(r["policy"]) for r in rows))]
    widths += [max(len(h), 12) for h in header[1:]]
    print("  ".join(h.ljust(w) if i == 0 else h.rjust(w)
                    for i, (h, w) in enumerate(zip(header, widths))))
    for row in rows:
        cells = [row["policy"].ljust(widths[0])]
        cells += [f"{row[k]:.6g}".rjust(w) for k, w in zip(keys, widths[1:])]
        print("  ".join(cells))

    if args.out:
        doc = {
            "schema": COMPARE_SCHEMA,
            "checkpoint": str(args.checkpoint),
            "gamma": gamma,
            "seed": args.seed,
            "episodes": args.episodes,
            "rows": rows,
        }
        out = _prepare_out(args.out, args.force)
        with _staged_write(out) as tmp:
            tmp.write_text(_dump_json(doc))
    return 0


# --------------------------------------------------------------------------
# parser


def _add_scenario_source(sub):
    group = sub.add_mutually_exclusive_group()
    group.add_argument(
        "--config", default="reference.toml", metavar="PATH",
        help="TOML config: a filesystem path, else a bundled preset name "
             "(default: reference.toml)")
    group.add_argument(
        "--scenario", metavar="FILE",
        help="materialized scenario file produced by 'gen'")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vecoffload",
        description="Simulate and learn task placement for vehicular "
                    "services on heterogeneous edge nodes.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser(
        "gen", help="materialize a scenario (nodes + service) to a file")
    gen.add_argument("--config", default="reference.toml", metavar="PATH",
                     help="TOML config path or bundled preset name")
    gen.add_argument("--seed", type=int, default=None,
                     help="override the config's generation seed")
    gen.add_argument("--out", required=True, metavar="FILE")
    gen.add_argument("--force", action="store_true",
                     help="overwrite an existing output file")
    gen.set_defaults(func=cmd_gen)

    tr = sub.add_parser("train", help="train a placement policy")
    _add_scenario_source(tr)
    workers = tr.add_mutually_exclusive_group()
    workers.add_argument("--workers", type=int, default=None,
                         help="number of asynchronous learner threads")
    workers.add_argument("--single-thread", action="store_true",
                         help="force one worker (bit-reproducible runs)")
    tr.add_argument("--gamma", type=float, default=None,
                    help="reward discount factor")
    tr.add_argument("--delta", type=float, default=None,
                    help="entropy bonus weight")
    tr.add_argument("--episodes", type=int, default=None)
    tr.add_argument("--lr", type=float, default=None,
                    help="learning rate for both networks")
    tr.add_argument("--seed", type=int, default=None,
                    help="learning seed (init, action sampling, episodes)")
    tr.add_argument("--out-checkpoint", required=True, metavar="FILE")
    tr.add_argument("--out-csv", default=None, metavar="FILE",
                    help="also write the per-episode training curve")
    tr.add_argument("--force", action="store_true")
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="score a checkpoint on seeded episodes")
    _add_scenario_source(ev)
    ev.add_argument("--checkpoint", required=True, metavar="FILE")
    ev.add_argument("--episodes", type=int, default=100)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--gamma", type=float, default=None,
                    help="objective discount (default: the checkpoint's)")
    ev.add_argument("--out", default=None, metavar="FILE",
                    help="write the metrics JSON here as well as stdout")
    ev.add_argument("--out-csv", default=None, metavar="FILE",
                    help="write per-task placement traces as CSV")
    ev.add_argument("--force", action="store_true")
    ev.set_defaults(func=cmd_eval)

    cp = sub.add_parser(
        "compare",
        help="score a checkpoint against baselines on paired episode seeds")
    _add_scenario_source(cp)
    cp.add_argument("--checkpoint", required=True, metavar="FILE")
    cp.add_argument("--episodes", type=int, default=100)
    cp.add_argument("--seed", type=int, default=0)
    cp.add_argument("--gamma", type=float, default=None)
    cp.add_argument("--baselines", default="greedy,local,random",
                    help="comma list from: greedy, local, random")
    cp.add_argument("--out", default=None, metavar="FILE",
                    help="write the comparison JSON here")
    cp.add_argument("--force", action="store_true")
    cp.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
