#!/usr/bin/env python3
"""Tune every simulated workload archetype, cold then warm.

Runs the full tuning loop against each disk and lock sim under a virtual
clock, prints the chosen setting, the measurement count, and the search
time in virtual seconds, then repeats each workload to show the policy
cache eliminating the search.
"""

import argparse

from eostune.cache import PolicyCache
from eostune.clock import VirtualClock
from eostune.search import TunerConfig, run_tuning
from eostune.sim import DISK_ARCHETYPES, LOCK_ARCHETYPES, default_workload, make_sim


def episode(cache, cfg, kind, arch, duration=3600.0):
    start = cfg.clock.now()
    env = make_sim(default_workload(kind, arch), clock=cfg.clock)
    reports = run_tuning(
        env.registry, cache, cfg, until=start + duration, envs={env.subsystem_id: env}
    )
    cfg.clock.advance_to(start + duration)
    active = [r for r in reports if r.cache_event != "none"]
    head = active[0] if active else reports[0]
    measurements = sum(r.total_measurements for r in reports)
    search_time = measurements * cfg.dwell
    setting = ",".join(f"{k}={v}" for k, v in (head.chosen or {}).items())
    return head.cache_event, measurements, search_time, setting


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dwell", type=float, default=5.0)
    parser.add_argument("--period", type=float, default=900.0)
    args = parser.parse_args()

    cache = PolicyCache()
    cfg = TunerConfig(clock=VirtualClock(), dwell=args.dwell, period=args.period)
    workloads = [("disk", a) for a in DISK_ARCHETYPES] + [
        ("lock", a) for a in LOCK_ARCHETYPES
    ]
    print(f"{'workload':18s} {'pass':6s} {'event':7s} {'meas':>5s} {'search_s':>9s}  setting")
    for kind, arch in workloads:
        for label in ("cold", "warm"):
            event, measurements, search_time, setting = episode(cache, cfg, kind, arch)
            print(
                f"{kind + '/' + arch:18s} {label:6s} {event:7s} "
                f"{measurements:5d} {search_time:9.1f}  {setting}"
            )


if __name__ == "__main__":
    main()
