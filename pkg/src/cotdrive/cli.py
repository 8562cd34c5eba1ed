"""Command-line entry point: simulate / evaluate / make-vqa / replay-show."""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .agents import AGENT_IDS, CoTAgent, make_agent
from .baselines import MpcParams
from .harness import (aggregate, emit_report, results_to_jsonl, run_episode,
                      run_suite)
from .llmclient import ReplayCache
from .scenario import KINDS, ScenarioConfig, default_config
from .vqa import build_vqa_records, export_jsonl


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_common(sp, with_agent=True):
    sp.add_argument("--scenario", choices=KINDS + ("all",), default="highway")
    if with_agent:
        sp.add_argument("--agent", choices=AGENT_IDS, default="cot-scripted")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--config", help="scenario JSON file (fields of ScenarioConfig, "
                                     "optional 'mpc' key)")
    sp.add_argument("--background", type=int, help="override background vehicle count")
    sp.add_argument("--max-time", type=float, help="override max simulation time (s)")
    sp.add_argument("--conditions", default="",
                    help="comma-separated condition flags (wet,snow,low_visibility)")
    sp.add_argument("--replay-cache", help="transcript cache directory")
    sp.add_argument("--replay-mode", choices=("record", "replay"))


def build_parser() -> _Parser:
    p = _Parser(prog="cotdrive")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="run one episode, JSON result to stdout")
    _add_common(sim)

    ev = sub.add_parser("evaluate", help="seed sweep, CSV/Markdown/JSONL report")
    _add_common(ev)
    ev.add_argument("--episodes", type=int, default=50)
    ev.add_argument("--out", required=True, help="CSV output path (.md and .jsonl "
                                                 "siblings are written next to it)")
    ev.add_argument("--jobs", type=int, default=1)

    mv = sub.add_parser("make-vqa", help="run episodes, export VQA records as JSONL")
    _add_common(mv)
    mv.add_argument("--episodes", type=int, default=10)
    mv.add_argument("--out", required=True)

    rs = sub.add_parser("replay-show", help="dump cached transcripts")
    rs.add_argument("--cache", required=True)
    rs.add_argument("--key", help="show only this cache key")
    return p


def _resolve_config(args, kind: str):
    if args.config:
        text = Path(args.config).read_text(encoding="utf-8")
        return ScenarioConfig.from_json(text), MpcParams.from_scenario_json(text)
    overrides = {}
    if args.background is not None:
        overrides["n_background"] = args.background
    if args.max_time is not None:
        overrides["max_sim_time"] = args.max_time
    if args.conditions:
        overrides["condition_flags"] = tuple(
            f.strip() for f in args.conditions.split(",") if f.strip())
    return default_config(kind, seed=args.seed, **overrides), None


def _make_agent(args, mpc_params):
    return make_agent(args.agent, mpc_params=mpc_params,
                      replay_dir=args.replay_cache, replay_mode=args.replay_mode)


def _episode_worker(payload):
    config = ScenarioConfig.from_json(payload["config"])
    mpc = MpcParams(**payload["mpc"]) if payload["mpc"] else None
    agent = make_agent(payload["agent"], mpc_params=mpc,
                       replay_dir=payload["replay_cache"],
                       replay_mode=payload["replay_mode"])
    return run_episode(config, agent, payload["seed"])


def _result_dict(r):
    return {
        "scenario": r.scenario,
        "seed": r.seed,
        "outcome": r.outcome,
        "sim_time_elapsed": r.sim_time_elapsed,
        "decisions": [[d.sim_time, d.action.name, d.fallback_used, repr(d.min_ttc)]
                      for d in r.decisions],
    }


def _cmd_simulate(args) -> int:
    kind = args.scenario if args.scenario != "all" else "highway"
    config, mpc = _resolve_config(args, kind)
    agent = _make_agent(args, mpc)
    result = run_episode(config, agent, args.seed)
    print(json.dumps(_result_dict(result), indent=2))
    return 0


def _cmd_evaluate(args) -> int:
    kinds = KINDS if args.scenario == "all" else (args.scenario,)
    summaries = {}
    all_results = []
    for kind in kinds:
        config, mpc = _resolve_config(args, kind)
        if args.jobs > 1:
            payloads = [{
                "config": config.to_json(), "agent": args.agent,
                "mpc": mpc.__dict__ if mpc else None,
                "replay_cache": args.replay_cache, "replay_mode": args.replay_mode,
                "seed": args.seed + i,
            } for i in range(args.episodes)]
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                results = list(pool.map(_episode_worker, payloads))
        else:
            agent = _make_agent(args, mpc)
            results = run_suite(config, agent, args.seed, args.episodes)
        all_results.extend(results)
        summaries[(kind, args.agent)] = aggregate(results)
    csv_text, md_text = emit_report(summaries)
    out = Path(args.out)
    out.write_text(csv_text, encoding="utf-8")
    out.with_suffix(".md").write_text(md_text, encoding="utf-8")
    out.with_suffix(".jsonl").write_text(results_to_jsonl(all_results),
                                         encoding="utf-8")
    sys.stdout.write(md_text)
    return 0


def _cmd_make_vqa(args) -> int:
    if not args.agent.startswith("cot-"):
        raise ValueError("make-vqa needs a cot-* agent")
    kind = args.scenario if args.scenario != "all" else "highway"
    config, mpc = _resolve_config(args, kind)
    agent = _make_agent(args, mpc)
    assert isinstance(agent, CoTAgent)
    records = []
    for i in range(args.episodes):
        agent.exchanges.clear()
        run_episode(config, agent, args.seed + i)
        for k, exchange in enumerate(agent.exchanges):
            visual = f"scene://{kind}/{args.seed + i}/{k}"
            records.extend(build_vqa_records(exchange, visual, len(records)))
    Path(args.out).write_bytes(export_jsonl(records))
    print(f"wrote {len(records)} records to {args.out}")
    return 0


def _cmd_replay_show(args) -> int:
    cache = ReplayCache(None, args.cache, "replay")
    entries = cache.entries()
    if args.key:
        entries = [e for e in entries if e.get("key") == args.key]
    print(json.dumps(entries, indent=2, ensure_ascii=False))
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "evaluate": _cmd_evaluate,
    "make-vqa": _cmd_make_vqa,
    "replay-show": _cmd_replay_show,
}


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:  # runtime failure -> exit 2
        print(f"cotdrive: {exc}", file=sys.stderr)
        return 2


def main(argv=None) -> int:
    return run_cli(argv)


if __name__ == "__main__":
    sys.exit(main())
