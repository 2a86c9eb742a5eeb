"""Hierarchical tuner.

The top level finds the bottlenecked subsystem (first registered subsystem
whose bottleneck probe fires).  Within a subsystem the tuner runs a modified
orthogonal search: parameters are swept one at a time in ascending order of
candidate-set size (most limited first, ties by registration order), each
candidate is activated, allowed to stabilize for the dwell time, and scored
through the target probe.  Guarded parameters are skipped while inactive,
and guards are re-evaluated after every parameter is fixed, so choosing a
policy value early activates its dependent parameters later in the same
pass.  On equal scores the smaller parameter value wins.

The search is resumable: its cursor state can be stored in the policy cache
when a workload ends mid-search and continued on the next similar workload,
performing exactly the remaining measurements.
"""

from dataclasses import dataclass, field

from .cache import CacheEntry, PolicyCache, WorkloadSignature
from .clock import VirtualClock
from .errors import EosError, ProbeFailure
from .params import Registry, Setting, candidate_values, is_active
from .state import SearchPhase, SearchState

BASELINE = "baseline"  # param label of the initial current-setting measurement


@dataclass
class TunerConfig:
    clock: object = field(default_factory=VirtualClock)
    dwell: float = 5.0
    period: float = 900.0
    measurements_per_candidate: int = 1  # >1 averages repeated probes

    def __post_init__(self):
        if self.dwell <= 0:
            raise ValueError("dwell must be positive")
        if self.period < self.dwell:
            raise ValueError("period must be at least the dwell")
        if self.measurements_per_candidate < 1:
            raise ValueError("measurements_per_candidate must be >= 1")


@dataclass
class StepRecord:
    step: int
    param: str  # parameter being varied, or "baseline"
    value: int | None
    setting: Setting
    score: int
    timestamp: float


@dataclass
class SessionReport:
    tick_time: float
    subsystem: str | None
    cache_event: str  # "none" | "miss" | "hit" | "resume" | "error"
    steps: list[StepRecord] = field(default_factory=list)
    chosen: Setting | None = None
    completed: bool = False
    error: str | None = None

    @property
    def total_measurements(self) -> int:
        return len(self.steps)


def detect_bottleneck(registry: Registry) -> str | None:
    """First registered subsystem whose bottleneck probe returns true."""
    for spec in registry.subsystems():
        if spec.bottleneck_probe is None:
            continue
        try:
            hit = bool(spec.bottleneck_probe())
        except Exception as exc:  # noqa: BLE001 - probe is caller code
            raise ProbeFailure(spec.id, exc) from exc
        if hit:
            return spec.id
    return None


def order_params(param_names: list[str], registry: Registry) -> list[str]:
    """Most limited parameters first; ties keep registration order."""
    return sorted(
        param_names,
        key=lambda n: (len(candidate_values(registry.param(n))), registry.registration_index(n)),
    )


class _Budget:
    """Stop conditions shared by the sweep loop."""

    def __init__(self, clock, dwell_per_candidate, deadline, max_measurements):
        self.clock = clock
        self.dwell = dwell_per_candidate
        self.deadline = deadline
        self.remaining = max_measurements
        self.used = 0

    def allows_measurement(self) -> bool:
        if self.remaining is not None and self.used >= self.remaining:
            return False
        if self.deadline is not None and self.clock.now() + self.dwell > self.deadline:
            return False
        return True

    def count(self) -> None:
        self.used += 1


def orthogonal_search(
    registry: Registry,
    subsystem_id: str,
    cfg: TunerConfig,
    resume: SearchState | None = None,
    deadline: float | None = None,
    max_measurements: int | None = None,
    env=None,
) -> tuple[Setting, SearchState, list[StepRecord]]:
    """Run (or continue) the sweep; returns (best setting, state, steps).

    The returned state has phase DONE when the sweep finished, in which case
    the best setting is activated; otherwise the state resumes a later call
    at exactly the next unmeasured candidate.  ``deadline`` bounds virtual
    time (no measurement starts unless a full dwell fits before it);
    ``max_measurements`` bounds the number of measurements in this call.
    """
    spec = registry.subsystem(subsystem_id)
    clock = cfg.clock
    budget = _Budget(
        clock, cfg.dwell * cfg.measurements_per_candidate, deadline, max_measurements
    )
    steps: list[StepRecord] = []

    if resume is not None:
        state = resume
    else:
        state = SearchState(
            ordering=order_params(list(spec.params), registry),
            best_setting=registry.read_setting(subsystem_id),
            phase=SearchPhase.BASELINE,
        )

    def measure(trial: Setting, param_label: str, value: int | None) -> int:
        registry.activate(subsystem_id, trial)
        if env is not None:
            env.on_activate()
        total = 0
        for _ in range(cfg.measurements_per_candidate):
            clock.sleep(cfg.dwell)
            try:
                total += int(spec.target_probe())
            except EosError:
                raise
            except Exception as exc:  # noqa: BLE001 - probe is caller code
                raise ProbeFailure(subsystem_id, exc) from exc
        score = total // cfg.measurements_per_candidate
        budget.count()
        steps.append(
            StepRecord(
                step=len(steps),
                param=param_label,
                value=value,
                setting=dict(trial),
                score=score,
                timestamp=clock.now(),
            )
        )
        return score

    if state.phase is SearchPhase.BASELINE:
        if not budget.allows_measurement():
            return dict(state.best_setting), state, steps
        state.best_score = measure(state.best_setting, BASELINE, None)
        state.phase = SearchPhase.SWEEPING

    while state.phase is SearchPhase.SWEEPING:
        if state.cursor >= len(state.ordering):
            state.phase = SearchPhase.DONE
            break
        param = registry.param(state.ordering[state.cursor])
        if not is_active(param, state.best_setting):
            state.cursor += 1
            state.candidate_cursor = 0
            continue
        candidates = candidate_values(param)
        if state.candidate_cursor >= len(candidates):
            state.cursor += 1
            state.candidate_cursor = 0
            continue
        if not budget.allows_measurement():
            return dict(state.best_setting), state, steps
        value = candidates[state.candidate_cursor]
        trial = dict(state.best_setting)
        trial[param.name] = value
        score = measure(trial, param.name, value)
        if score > state.best_score or (
            score == state.best_score and value < state.best_setting[param.name]
        ):
            state.best_setting = trial
            state.best_score = score
        state.candidate_cursor += 1

    registry.activate(subsystem_id, state.best_setting)
    if env is not None:
        env.on_activate()
    return dict(state.best_setting), state, steps


def tune_once(
    registry: Registry,
    cache: PolicyCache,
    cfg: TunerConfig,
    deadline: float | None = None,
    envs: dict[str, object] | None = None,
) -> SessionReport:
    """One periodic tick: bottleneck check, cache consult, search or reuse."""
    tick_time = cfg.clock.now()
    try:
        subsystem_id = detect_bottleneck(registry)
    except ProbeFailure as exc:
        return SessionReport(tick_time, exc.subsystem, "error", error=str(exc))
    if subsystem_id is None:
        return SessionReport(tick_time, None, "none")

    spec = registry.subsystem(subsystem_id)
    env = (envs or {}).get(subsystem_id)
    try:
        values, thresholds = spec.sensor_probe()
    except Exception as exc:  # noqa: BLE001
        failure = ProbeFailure(subsystem_id, exc)
        return SessionReport(tick_time, subsystem_id, "error", error=str(failure))
    signature = WorkloadSignature(subsystem_id, tuple(values), tuple(thresholds))

    entry = cache.lookup(signature)
    try:
        if entry is not None and entry.complete:
            registry.activate(subsystem_id, entry.setting)
            if env is not None:
                env.on_activate()
            return SessionReport(
                tick_time, subsystem_id, "hit", chosen=dict(entry.setting), completed=True
            )
        if entry is not None:
            event = "resume"
            setting, state, steps = orthogonal_search(
                registry, subsystem_id, cfg, resume=entry.resume_state, deadline=deadline, env=env
            )
            if state.phase is SearchPhase.DONE:
                entry.setting = dict(setting)
                entry.complete = True
                entry.resume_state = None
            else:
                entry.resume_state = state
        else:
            event = "miss"
            setting, state, steps = orthogonal_search(
                registry, subsystem_id, cfg, deadline=deadline, env=env
            )
            cache.insert(
                CacheEntry(
                    signature=signature,
                    setting=dict(setting),
                    complete=state.phase is SearchPhase.DONE,
                    resume_state=None if state.phase is SearchPhase.DONE else state,
                )
            )
    except EosError as exc:
        return SessionReport(tick_time, subsystem_id, "error", error=str(exc))
    return SessionReport(
        tick_time,
        subsystem_id,
        event,
        steps=steps,
        chosen=dict(setting),
        completed=state.phase is SearchPhase.DONE,
    )


def run_tuning(
    registry: Registry,
    cache: PolicyCache,
    cfg: TunerConfig,
    until: float,
    envs: dict[str, object] | None = None,
) -> list[SessionReport]:
    """Drive periodic ticks from the clock's current time up to ``until``.

    Each tick tunes at most one subsystem; searches never measure past
    ``until`` (the workload's end), storing resumable state instead.
    """
    reports = []
    clock = cfg.clock
    next_tick = clock.now()
    while next_tick < until:
        if hasattr(clock, "advance_to"):
            clock.advance_to(next_tick)
        elif clock.now() < next_tick:
            clock.sleep(next_tick - clock.now())
        reports.append(tune_once(registry, cache, cfg, deadline=until, envs=envs))
        while next_tick <= clock.now():
            next_tick += cfg.period
    return reports


# -- report output --------------------------------------------------------------

CSV_HEADER = "episode,tick,subsystem,cache_event,step,param,value,score,t"


def report_rows(reports: list[SessionReport], episode: int = 0) -> list[str]:
    rows = []
    for tick, report in enumerate(reports):
        sub = report.subsystem or ""
        if not report.steps:
            rows.append(
                f"{episode},{tick},{sub},{report.cache_event},,,,,{report.tick_time:.3f}"
            )
            continue
        for step in report.steps:
            value = "" if step.value is None else str(step.value)
            rows.append(
                f"{episode},{tick},{sub},{report.cache_event},{step.step},"
                f"{step.param},{value},{step.score},{step.timestamp:.3f}"
            )
    return rows


def reports_to_csv(episodes: list[list[SessionReport]]) -> str:
    lines = [CSV_HEADER]
    for episode, reports in enumerate(episodes):
        lines.extend(report_rows(reports, episode))
    return "\n".join(lines) + "\n"


def _format_setting(setting: Setting | None) -> str:
    if not setting:
        return "-"
    return ",".join(f"{k}={v}" for k, v in setting.items())


def reports_to_text(episodes: list[list[SessionReport]]) -> str:
    out = []
    for episode, reports in enumerate(episodes):
        for tick, report in enumerate(reports):
            head = (
                f"episode {episode} tick {tick} t={report.tick_time:.3f} "
                f"subsystem={report.subsystem or '-'} event={report.cache_event}"
            )
            out.append(head)
            if report.error:
                out.append(f"  error: {report.error}")
            for step in report.steps:
                value = "-" if step.value is None else str(step.value)
                out.append(
                    f"  step {step.step}: {step.param}={value} score={step.score} "
                    f"t={step.timestamp:.3f}"
                )
            if report.chosen is not None:
                out.append(
                    f"  chosen: {_format_setting(report.chosen)} "
                    f"complete={'yes' if report.completed else 'no'} "
                    f"measurements={report.total_measurements}"
                )
    return "\n".join(out) + "\n"
