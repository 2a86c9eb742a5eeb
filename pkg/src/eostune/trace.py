"""Workload trace ingestion and replay.

A trace is a CSV of workload episodes, one per line:

    start_sec,duration_sec,archetype_or_contention,demand,seed

``#`` starts a comment.  Episodes must not overlap; they are replayed in
start order against fresh simulated environments while the policy cache
persists across episodes, which is what makes repeated workloads cheap.
Replay requires a virtual clock and is fully deterministic.
"""

from dataclasses import dataclass

from .cache import PolicyCache
from .errors import OverlapError, ParseError
from .params import Registry
from .search import SessionReport, TunerConfig, run_tuning
from .sim import DISK_ARCHETYPES, LOCK_ARCHETYPES, SimWorkload, make_sim


@dataclass(frozen=True)
class TraceEpisode:
    start: float
    duration: float
    workload: SimWorkload

    @property
    def end(self) -> float:
        return self.start + self.duration


def _workload_kind(archetype: str) -> str:
    if archetype in DISK_ARCHETYPES:
        return "disk"
    if archetype in LOCK_ARCHETYPES:
        return "lock"
    raise ParseError(f"unknown archetype or contention level {archetype!r}")


def parse_trace_text(text: str) -> list[TraceEpisode]:
    episodes = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 5:
            raise ParseError("expected start,duration,archetype,demand,seed").at_line(line_no)
        try:
            start = float(parts[0])
            duration = float(parts[1])
            demand = int(parts[3])
            seed = int(parts[4])
        except ValueError as exc:
            raise ParseError(str(exc)).at_line(line_no) from None
        if start < 0 or duration <= 0:
            raise ParseError("start must be >= 0 and duration > 0").at_line(line_no)
        try:
            kind = _workload_kind(parts[2])
            workload = SimWorkload(kind, parts[2], demand, seed)
        except (ParseError, ValueError) as exc:
            raise ParseError(str(exc)).at_line(line_no) from None
        episodes.append(TraceEpisode(start, duration, workload))
    episodes.sort(key=lambda e: e.start)
    for prev, cur in zip(episodes, episodes[1:]):
        if cur.start < prev.end:
            raise OverlapError(
                f"episode starting at {cur.start} overlaps episode "
                f"[{prev.start}, {prev.end})"
            )
    return episodes


def load_trace(path: str) -> list[TraceEpisode]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_trace_text(fh.read())


def replay(
    episodes: list[TraceEpisode],
    cache: PolicyCache,
    cfg: TunerConfig,
    noise_permille: int = 0,
) -> list[list[SessionReport]]:
    """Drive the tuning loop through every episode; returns reports per episode."""
    if not getattr(cfg.clock, "virtual", False):
        raise ValueError("trace replay requires a virtual clock")
    results = []
    for episode in episodes:
        registry = Registry()
        env = make_sim(
            episode.workload, registry, cfg.clock, noise_permille=noise_permille
        )
        cfg.clock.advance_to(episode.start)
        reports = run_tuning(
            registry,
            cache,
            cfg,
            until=episode.end,
            envs={env.subsystem_id: env},
        )
        results.append(reports)
    return results
