"""Operator command line.

Subcommands: ``tune`` (run tuning on a simulated subsystem or a trace),
``cache`` (inspect or clear the policy cache), ``lockbench`` (contention
benchmarks of the mixed lock), ``replay`` (trace replay), ``report``
(render a report CSV as text).  Exit codes: 0 ok, 1 runtime error, 2
usage or parse error.  The ``EOS_CACHE`` environment variable overrides
the default cache path.
"""

import argparse
import os
import sys
import time

from .cache import PolicyCache
from .clock import VirtualClock, WallClock
from .errors import EosError, OverlapError, ParseError
from .mixedlock import (
    PROTOCOL_IDS,
    PROTOCOL_NAMES,
    ContentionHarness,
    LockWorkload,
    MixedLock,
    as_lock_subsystem,
)
from .params import Registry, load_spec_file
from .search import (
    CSV_HEADER,
    TunerConfig,
    orthogonal_search,
    reports_to_csv,
    reports_to_text,
    run_tuning,
)
from .sim import DISK_ARCHETYPES, LOCK_ARCHETYPES, default_workload, make_sim
from .trace import load_trace, replay

DEFAULT_CACHE_PATH = "./eos-cache"


def _cache_path(args) -> str:
    if getattr(args, "cache", None):
        return args.cache
    return os.environ.get("EOS_CACHE", DEFAULT_CACHE_PATH)


def _load_cache(path: str) -> PolicyCache:
    if not os.path.exists(path):
        return PolicyCache()
    cache, warning = PolicyCache.load(path)
    if warning:
        print(f"warning: {warning}", file=sys.stderr)
    return cache


def _make_config(args) -> TunerConfig:
    clock = WallClock() if getattr(args, "wall", False) else VirtualClock()
    return TunerConfig(clock=clock, dwell=args.dwell, period=args.period)


def _write_reports(episodes, out_prefix: str, echo: str) -> None:
    csv_text = reports_to_csv(episodes)
    text = reports_to_text(episodes)
    with open(out_prefix + ".csv", "w", encoding="utf-8") as fh:
        fh.write(csv_text)
    with open(out_prefix + ".txt", "w", encoding="utf-8") as fh:
        fh.write(text)
    sys.stdout.write(csv_text if echo == "csv" else text)


def cmd_tune(args) -> int:
    cache_path = _cache_path(args)
    cache = _load_cache(cache_path)
    cfg = _make_config(args)
    registry = Registry()
    if args.spec:
        registry = load_spec_file(args.spec)
    if args.trace:
        episodes = load_trace(args.trace)
        results = replay(episodes, cache, cfg)
    elif args.sim:
        known = DISK_ARCHETYPES if args.sim == "disk" else LOCK_ARCHETYPES
        name = args.workload or known[0]
        if name not in known:
            print(
                f"error: --sim {args.sim} expects a workload in {', '.join(known)}",
                file=sys.stderr,
            )
            return 2
        workload = default_workload(args.sim, name, args.demand, args.seed)
        env = make_sim(workload, registry, cfg.clock)
        until = cfg.clock.now() + args.duration
        reports = run_tuning(registry, cache, cfg, until, envs={env.subsystem_id: env})
        results = [reports]
    else:
        print("error: tune needs --sim or --trace", file=sys.stderr)
        return 2
    _write_reports(results, args.out, args.format)
    cache.persist(cache_path)
    return 0


def cmd_replay(args) -> int:
    cache_path = _cache_path(args)
    cache = _load_cache(cache_path)
    cfg = _make_config(args)
    episodes = load_trace(args.trace)
    results = replay(episodes, cache, cfg)
    _write_reports(results, args.out, args.format)
    cache.persist(cache_path)
    return 0


def cmd_cache(args) -> int:
    path = _cache_path(args)
    if args.action == "clear":
        if not args.yes:
            print("error: cache clear requires --yes", file=sys.stderr)
            return 2
        PolicyCache().persist(path)
        print(f"cleared {path}")
        return 0
    if not os.path.exists(path):
        print(f"error: no cache file at {path}", file=sys.stderr)
        return 1
    cache, warning = PolicyCache.load(path)
    if warning:
        print(f"warning: {warning}", file=sys.stderr)
    entries = cache.entries()
    ranked = sorted(range(len(entries)), key=lambda i: entries[i].last_used)
    rank_of = {i: r for r, i in enumerate(ranked)}
    if args.action == "ls":
        print(f"{len(entries)} entries in {path}")
        for i, e in enumerate(entries):
            values = ",".join(str(v) for v in e.signature.values)
            print(
                f"[{i}] {e.signature.subsystem} sig=({values}) "
                f"complete={'yes' if e.complete else 'no'} lru_rank={rank_of[i]}"
            )
        return 0
    # show
    if args.index is None or not (0 <= args.index < len(entries)):
        print("error: show requires a valid --index", file=sys.stderr)
        return 2
    e = entries[args.index]
    print(f"subsystem: {e.signature.subsystem}")
    print(f"signature values: {list(e.signature.values)}")
    print(f"similarity thresholds: {list(e.signature.thresholds)}")
    print(f"setting: {e.setting}")
    print(f"complete: {'yes' if e.complete else 'no'}")
    print(f"resume state: {'present' if e.resume_state is not None else 'absent'}")
    if e.resume_state is not None:
        st = e.resume_state
        print(
            f"  phase={st.phase.value} cursor={st.cursor} "
            f"candidate_cursor={st.candidate_cursor} best_score={st.best_score}"
        )
    print(f"lru rank: {rank_of[args.index]}")
    return 0


def _bench_row(protocol, args, rate, selected="") -> str:
    return f"{protocol},{args.threads},{args.cs_units},{args.idle_units},{rate},{selected}"


def cmd_lockbench(args) -> int:
    cpus = os.cpu_count() or 1
    if args.threads > 2 * cpus:
        print(
            f"warning: {args.threads} threads on {cpus} CPUs; results may be noisy",
            file=sys.stderr,
        )
    rows = ["protocol,threads,cs_units,idle_units,acqs_per_sec,selected"]
    if args.pin:
        lock = MixedLock()
        lock.method_tuner = PROTOCOL_IDS[args.pin]
        harness = ContentionHarness(
            lock, LockWorkload(args.threads, args.cs_units, args.idle_units)
        )
        harness.start()
        try:
            time.sleep(args.settle)
            harness.reset_window()
            time.sleep(args.duration)
            rate, _, _ = harness.measure()
        finally:
            harness.stop()
        rows.append(_bench_row(args.pin, args, rate))
    else:  # tuned
        lock = MixedLock()
        harness = ContentionHarness(
            lock, LockWorkload(args.threads, args.cs_units, args.idle_units)
        )
        harness.start()
        try:
            registry = Registry()
            env = as_lock_subsystem(lock, harness, registry)
            cfg = TunerConfig(clock=WallClock(), dwell=args.dwell, period=max(args.dwell, 1.0))
            time.sleep(args.settle)
            env.on_activate()
            setting, _, _ = orthogonal_search(registry, env.subsystem_id, cfg, env=env)
            time.sleep(args.settle)
            harness.reset_window()
            time.sleep(args.duration)
            rate, _, _ = harness.measure()
        finally:
            harness.stop()
        selected = PROTOCOL_NAMES[setting["method_tuner"]]
        rows.append(_bench_row("tuned", args, rate, selected))
    table = "\n".join(rows) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(table)
    sys.stdout.write(table)
    return 0


def cmd_report(args) -> int:
    with open(args.file, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CSV_HEADER:
        print("error: not a report CSV", file=sys.stderr)
        return 2
    for line in lines[1:]:
        episode, tick, sub, event, step, param, value, score, t = line.split(",")
        if step == "":
            print(f"episode {episode} tick {tick} t={t} subsystem={sub or '-'} event={event}")
        else:
            print(
                f"episode {episode} tick {tick} t={t} subsystem={sub} event={event} "
                f"step {step}: {param}={value or '-'} score={score}"
            )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eostune")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--cache", help="cache file path (default $EOS_CACHE or ./eos-cache)")
        p.add_argument("--out", default="eos-report", help="report file prefix")
        p.add_argument("--format", choices=("text", "csv"), default="text")
        p.add_argument("--dwell", type=float, default=5.0)
        p.add_argument("--period", type=float, default=900.0)
        clock = p.add_mutually_exclusive_group()
        clock.add_argument("--virtual", dest="wall", action="store_false")
        clock.add_argument("--wall", dest="wall", action="store_true")
        p.set_defaults(wall=False)

    tune = sub.add_parser("tune", help="run the tuning loop")
    tune.add_argument("--spec", help="spec file declaring extra subsystems")
    tune.add_argument("--sim", choices=("disk", "lock"))
    tune.add_argument(
        "--workload",
        choices=DISK_ARCHETYPES + LOCK_ARCHETYPES,
        help="defaults to the first archetype of the chosen sim",
    )
    tune.add_argument("--demand", type=int)
    tune.add_argument("--seed", type=int, default=0)
    tune.add_argument("--trace")
    tune.add_argument("--duration", type=float, default=3600.0)
    add_common(tune)

    rep = sub.add_parser("replay", help="replay a workload trace")
    rep.add_argument("--trace", required=True)
    add_common(rep)

    cache = sub.add_parser("cache", help="inspect or clear the policy cache")
    cache.add_argument("action", choices=("ls", "show", "clear"))
    cache.add_argument("--cache")
    cache.add_argument("--index", type=int)
    cache.add_argument("--yes", action="store_true")

    bench = sub.add_parser("lockbench", help="mixed-lock contention benchmark")
    bench.add_argument("--threads", type=int, required=True)
    group = bench.add_mutually_exclusive_group(required=True)
    group.add_argument("--pin", choices=tuple(PROTOCOL_IDS))
    group.add_argument("--tuned", action="store_true")
    bench.add_argument("--duration", type=float, default=1.0)
    bench.add_argument("--settle", type=float, default=0.1)
    bench.add_argument("--dwell", type=float, default=0.25)
    bench.add_argument("--cs-units", type=int, default=0)
    bench.add_argument("--idle-units", type=int, default=0)
    bench.add_argument("--out")

    report = sub.add_parser("report", help="render a report CSV as text")
    report.add_argument("file")

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {
        "tune": cmd_tune,
        "replay": cmd_replay,
        "cache": cmd_cache,
        "lockbench": cmd_lockbench,
        "report": cmd_report,
    }[args.command]
    try:
        return handler(args)
    except (ParseError, OverlapError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EosError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
