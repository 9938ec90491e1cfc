"""Command-line entry point: ``stamp <command> ...``.

Exit codes: 0 success, 1 validation failure, 2 transport failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from pathlib import Path
from typing import Optional, Sequence

from .clients import HttpChatClient, TransportError, UnparseableResponse
from .engine import Engine, TranscriptWriter, UnverifiedBundle
from .evaluation import reference_memories, run_benchmark
from .harness import (
    HeuristicCritic,
    NoisyOracleAgent,
    NoopAgent,
    OracleAgent,
    OracleWorker,
    ServiceAgent,
    ServiceCritic,
    ServicePlanner,
    ServiceWorker,
    TrajectoryStore,
    align_memory,
    critic_filter,
    emit_sft,
    run_agent_episode,
    run_episode,
    scripted_planner,
    write_sft,
)
from .harness.sft import balance_counts
from .rl import (
    AdvantageConfig,
    OfflineJudge,
    RolloutBuffer,
    ServiceJudge,
    dumps_scores,
    samples_for_trajectory,
    step_grpo_advantages,
    total_reward,
)
from .seed_model import dump_document, load_document
from .synthesis import (
    EnvironmentBundle,
    RepairRejected,
    VerificationFailed,
    default_catalog,
    external_generate,
    generate_from_master_seed,
    sample_seeds,
    statically_verify,
)

log = logging.getLogger("stamp")

EXIT_OK, EXIT_INVALID, EXIT_TRANSPORT = 0, 1, 2


class ValidationFailure(Exception):
    pass


def load_bundle(path: str | Path) -> EnvironmentBundle:
    try:
        return EnvironmentBundle.from_dict(load_document(path))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ValidationFailure(f"{path}: cannot load bundle: {exc}") from exc


def load_suite(directory: str | Path) -> list[EnvironmentBundle]:
    paths = sorted(Path(directory).glob("*.bundle.json"))
    if not paths:
        raise ValidationFailure(f"no *.bundle.json files in {directory}")
    return [load_bundle(p) for p in paths]


def service(url_var: str, key_var: Optional[str] = None, audit: Optional[str] = None) -> HttpChatClient:
    return HttpChatClient.from_env(url_var, key_var, audit_dir=audit)


# ---------------------------------------------------------------------------


def cmd_synth(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    catalog = default_catalog()
    client = service("STAMP_GENERATOR_URL", "STAMP_GENERATOR_KEY", args.audit_dir) if args.external else None
    for seed in range(args.master_seed, args.master_seed + args.count):
        try:
            if client is not None:
                platform, task = sample_seeds(seed, catalog)
                bundle = external_generate(platform, task, client, rng_seed=seed, master_seed=seed,
                                           noise=args.noise, fallback=args.fallback)
            else:
                bundle = generate_from_master_seed(seed, catalog, args.noise)
        except (VerificationFailed, RepairRejected) as exc:
            raise ValidationFailure(f"seed {seed}: {exc}") from exc
        except UnparseableResponse as exc:
            raise TransportError(f"seed {seed}: {exc}") from exc
        dump_document(bundle.to_dict(), out / bundle.file_name())
        print(f"{bundle.file_name()}\t{bundle.digest()}\trepairs={bundle.provenance.get('repair_rounds', 0)}")
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    failed = 0
    for path in args.bundles:
        bundle = load_bundle(path)
        report = statically_verify(bundle)
        print(json.dumps({"bundle": str(path), **report.to_dict()}, ensure_ascii=False))
        failed += not report.ok
    return EXIT_INVALID if failed else EXIT_OK


def _planner_worker(args: argparse.Namespace, bundle: EnvironmentBundle):
    if args.planner == "service":
        return (ServicePlanner(service("STAMP_PLANNER_URL", "STAMP_PLANNER_KEY", args.audit_dir), bundle),
                ServiceWorker(service("STAMP_WORKER_URL", "STAMP_WORKER_KEY", args.audit_dir)))
    return scripted_planner(bundle), OracleWorker()


def cmd_run(args: argparse.Namespace) -> int:
    bundle = load_bundle(args.bundle)
    if not statically_verify(bundle).ok:
        raise ValidationFailure(f"{args.bundle} fails static verification")
    planner, worker = _planner_worker(args, bundle)
    engine = Engine(bundle)
    traj = run_episode(bundle, planner, worker, args.max_steps, engine=engine)
    if args.transcript:
        _replay_transcript(bundle, traj, args.transcript, args.max_steps)
    if args.out:
        TrajectoryStore(args.out).append(traj)
    print(json.dumps({"bundle": bundle.bundle_id, "success": traj.success, "steps": len(traj.steps),
                      "submitted": traj.outcome.submitted if traj.outcome else None}))
    return EXIT_OK


def _replay_transcript(bundle, traj, path, max_steps) -> None:
    from .protocol import ToolAction

    engine = Engine(bundle)
    state, _ = engine.reset(max_steps)
    with open(path, "w", encoding="utf-8") as fh:
        writer = TranscriptWriter(fh)
        for s in traj.steps:
            action = ToolAction.from_dict({"name": "mobile_use", "arguments": s.action}).to_engine_action() \
                if s.action.get("action") != "invalid" else None
            if action is None or state.terminal is not None:
                break
            state, _, effect = engine.step(state, action)
            writer.record(state, action, effect)


def _critic(args: argparse.Namespace):
    if args.critic == "service":
        return ServiceCritic(service("STAMP_CRITIC_URL", "STAMP_CRITIC_KEY", args.audit_dir))
    return HeuristicCritic()


def cmd_collect(args: argparse.Namespace) -> int:
    bundles = load_suite(args.bundles)
    store = TrajectoryStore(args.out)
    critic = _critic(args)
    ok = 0
    for bundle in bundles:
        planner, worker = _planner_worker(args, bundle)
        traj = run_episode(bundle, planner, worker, args.max_steps or 3 * (bundle.required_steps + 6))
        traj = critic_filter(align_memory(traj, bundle.task_spec), critic)
        store.append(traj)
        ok += traj.success
    print(json.dumps({"trajectories": len(bundles), "successful": ok, "out": str(args.out)}))
    return EXIT_OK


def cmd_emit_sft(args: argparse.Namespace) -> int:
    trajs = list(TrajectoryStore(args.traj))
    try:
        records = list(emit_sft(trajs, args.ratio, w_a=args.w_a, w_m=args.w_m, n=args.n))
    except ValueError as exc:
        raise ValidationFailure(str(exc)) from exc
    out = Path(args.out)
    if out.exists():
        out.unlink()
    write_sft(out, records)
    mem, ordinary = balance_counts(records)
    print(json.dumps({"records": len(records), "memory": mem, "ordinary": ordinary}))
    return EXIT_OK


def cmd_rollout(args: argparse.Namespace) -> int:
    bundles = load_suite(args.bundles)
    judge = _judge(args)
    cfg = AdvantageConfig(args.mode, args.beta)
    buffer = RolloutBuffer(capacity=max(1, len(bundles)))
    version = 0
    for bundle in bundles:
        refs = reference_memories(bundle)
        batch = []
        for j in range(args.group_size):
            rng = random.Random(f"{args.seed}:{bundle.bundle_id}:{j}")
            agent = NoisyOracleAgent(rng, p_misclick=0.15 * j / max(1, args.group_size - 1),
                                     p_forget=0.5 * j / max(1, args.group_size - 1))
            budget = bundle.required_steps + len(bundle.memory_items) + 3 + args.slack
            traj = align_memory(run_agent_episode(bundle, agent, budget, variant=args.variant, traj_id=str(j)),
                                bundle.task_spec)
            reward = total_reward(traj, refs, judge)
            batch.extend(samples_for_trajectory(bundle.bundle_id, str(j), max(1, len(traj.steps)), reward.total,
                                                args.mode))
        buffer.push(batch, version)
    samples = [s for b in buffer.drain(version) for s in b]
    adv = step_grpo_advantages(samples, cfg)
    Path(args.out).write_text(dumps_scores(samples, adv), encoding="utf-8")
    print(json.dumps({"samples": len(samples), "tasks": len(bundles), "out": str(args.out)}))
    return EXIT_OK


def _judge(args: argparse.Namespace):
    if getattr(args, "judge", "offline") == "service":
        return ServiceJudge(service("STAMP_JUDGE_URL", "STAMP_JUDGE_KEY", args.audit_dir),
                            fallback=OfflineJudge() if args.judge_fallback else None)
    return OfflineJudge()


def cmd_bench(args: argparse.Namespace) -> int:
    bundles = load_suite(args.suite)
    if args.agent == "service":
        client = service("STAMP_AGENT_URL", "STAMP_AGENT_KEY", args.audit_dir)
        factory = lambda: ServiceAgent(client)  # noqa: E731
    elif args.agent == "noop":
        factory = NoopAgent
    else:
        factory = lambda: OracleAgent(emit_memory=not args.suppress_memory)  # noqa: E731
    report = run_benchmark(bundles, factory, args.k, args.variant, judge=_judge(args), scoring=args.scoring,
                           max_steps=args.max_steps, workers=args.workers)
    dump_document(report.to_dict(), args.report)
    print(json.dumps(report.aggregate))
    if all(r.error == "TransportError" for r in report.runs):
        print("transport failure: every attempt lost its agent connection", file=sys.stderr)
        return EXIT_TRANSPORT
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stamp", description="Synthesize, run and score memory-intensive GUI tasks.")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--audit", "--audit-dir", dest="audit_dir", help="write every service request/response here")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate verified environment bundles")
    s.add_argument("--master-seed", type=int, required=True)
    s.add_argument("--count", type=int, default=1)
    s.add_argument("--out", required=True)
    s.add_argument("--noise", choices=("low", "high"), default="low")
    s.add_argument("--external", action="store_true", help="author documents with STAMP_GENERATOR_URL")
    s.add_argument("--fallback", action="store_true", help="fall back to procedural generation on failure")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("verify", help="statically verify bundles")
    s.add_argument("bundles", nargs="+")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("run", help="run one planner/worker episode")
    s.add_argument("--bundle", required=True)
    s.add_argument("--planner", choices=("scripted", "service"), default="scripted")
    s.add_argument("--max-steps", type=int, default=30)
    s.add_argument("--transcript", help="write a per-step JSONL session transcript")
    s.add_argument("--out", help="append the trajectory to this JSONL file")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("collect", help="collect aligned, critic-filtered trajectories")
    s.add_argument("--bundles", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--planner", choices=("scripted", "service"), default="scripted")
    s.add_argument("--critic", choices=("heuristic", "service"), default="heuristic")
    s.add_argument("--max-steps", type=int, default=None)
    s.set_defaults(func=cmd_collect)

    s = sub.add_parser("emit-sft", help="emit step-balanced SFT records")
    s.add_argument("--traj", required=True)
    s.add_argument("--ratio", default="vanilla", help="memory:ordinary target such as 3:1, or 'vanilla'")
    s.add_argument("--n", type=float, default=1.0, help="w_bal on memory steps")
    s.add_argument("--w-a", type=float, default=1.0)
    s.add_argument("--w-m", type=float, default=1.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_emit_sft)

    s = sub.add_parser("rollout", help="score grouped rollouts and compute step-GRPO advantages")
    s.add_argument("--bundles", required=True)
    s.add_argument("--group-size", type=int, default=4)
    s.add_argument("--mode", choices=("last_step", "each_step"), default="last_step")
    s.add_argument("--beta", type=float, default=1.0)
    s.add_argument("--variant", choices=("guided", "natural"), default="natural")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--slack", type=int, default=3, help="extra steps beyond the oracle bound")
    s.add_argument("--judge", choices=("offline", "service"), default="offline")
    s.add_argument("--judge-fallback", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_rollout)

    s = sub.add_parser("bench", help="benchmark an agent over a suite")
    s.add_argument("--suite", required=True)
    s.add_argument("--agent", choices=("scripted", "service", "noop"), default="scripted")
    s.add_argument("--suppress-memory", action="store_true", help="scripted agent never writes memory")
    s.add_argument("--k", type=int, default=1)
    s.add_argument("--variant", choices=("guided", "natural"), default="natural")
    s.add_argument("--scoring", choices=("memory", "hrp"), default="memory")
    s.add_argument("--judge", choices=("offline", "service"), default="offline")
    s.add_argument("--judge-fallback", action="store_true")
    s.add_argument("--max-steps", type=int, default=None)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--report", required=True)
    s.set_defaults(func=cmd_bench)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (TransportError, UnparseableResponse) as exc:
        print(f"transport failure: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (ValidationFailure, UnverifiedBundle) as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
