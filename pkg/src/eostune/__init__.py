"""In-vivo policy auto-tuning framework.

Evolves policy and parameter settings of pluggable subsystems on running
workloads: a guard-aware, limited-parameter-first orthogonal search finds
good settings for the bottlenecked subsystem, and a persistent policy cache
memoizes them per workload signature so repeated workloads skip the search.
Ships deterministic simulated subsystems for oracle-verified testing plus a
real adaptive mixed spin lock as a live tunable subsystem.
"""

from .cache import CacheEntry, PolicyCache, WorkloadSignature
from .clock import VirtualClock, WallClock
from .errors import EosError
from .mixedlock import (
    BACKOFF_TICKET,
    MCS,
    PLAIN,
    TTAS,
    ContentionHarness,
    LockWorkload,
    MixedLock,
    WaiterNode,
    as_lock_subsystem,
)
from .params import (
    Guard,
    ParamSpec,
    Registry,
    StepMode,
    SubsystemSpec,
    candidate_values,
    is_active,
    load_spec_file,
    parse_spec_text,
)
from .search import (
    SessionReport,
    StepRecord,
    TunerConfig,
    detect_bottleneck,
    order_params,
    orthogonal_search,
    run_tuning,
    tune_once,
)
from .sim import SimModel, SimWorkload, default_workload, make_disk_sim, make_lock_sim
from .state import SearchPhase, SearchState
from .trace import TraceEpisode, load_trace, parse_trace_text, replay

__version__ = "0.1.0"

__all__ = [
    "BACKOFF_TICKET",
    "CacheEntry",
    "ContentionHarness",
    "EosError",
    "Guard",
    "LockWorkload",
    "MCS",
    "MixedLock",
    "PLAIN",
    "ParamSpec",
    "PolicyCache",
    "Registry",
    "SearchPhase",
    "SearchState",
    "SessionReport",
    "SimModel",
    "SimWorkload",
    "StepMode",
    "StepRecord",
    "SubsystemSpec",
    "TTAS",
    "TraceEpisode",
    "TunerConfig",
    "VirtualClock",
    "WaiterNode",
    "WallClock",
    "WorkloadSignature",
    "as_lock_subsystem",
    "candidate_values",
    "default_workload",
    "detect_bottleneck",
    "is_active",
    "load_spec_file",
    "load_trace",
    "make_disk_sim",
    "make_lock_sim",
    "order_params",
    "orthogonal_search",
    "parse_spec_text",
    "parse_trace_text",
    "replay",
    "run_tuning",
    "tune_once",
]
