"""Adaptive mixed spin lock.

One mutual-exclusion facade over three protocols: test-and-test-and-set
(cheap under low contention), a ticket lock whose waiters pause C*N spin
units between polls (C = ``val_tuner``, N = outstanding requesters), and an
MCS queue lock where each waiter spins on its own node (scalable under high
contention).  ``acquire`` routes through the lock's current ``mode``; after
winning, it checks the ``method_tuner`` directive once and, if the directive
names a different protocol, returns a switch request that the caller must
thread into ``release``.  A switching release acquires the target protocol
(free, because the releaser still holds overall mutual exclusion), flips
``mode``, invalidates the old protocol, and finally releases the target.
Waiters stranded on an invalidated protocol observe the invalidation, back
out, and re-enter through the new protocol.

Correctness machinery
---------------------

Each protocol's state lives in a replaceable object paired with a generation
counter and a validity flag.  Validating a protocol installs a *fresh* state
object, then bumps the generation and raises the flag; threads capture the
generation before reading the state object (the opposite order), so a thread
can never observe a new generation with a stale state object.  Any thread
whose post-win check sees a changed generation or a lowered flag gives its
slot back (releases the word, or hands the MCS queue slot to its successor)
and retries through ``mode``.  Stale ticket waiters cannot corrupt a new era
because ticket issuance is an atomic block that re-checks validity, and
orphaned state objects are never reused.  MCS waiters park on their own
node and are only woken by handoff, so a switch away from MCS kicks a drain
handoff down the dead queue; each stranded waiter passes the baton along and
re-routes.

Plain loads and stores of ints/bools/references rely on the CPython GIL for
atomicity; the compound updates that need more (ticket issuance, MCS tail
swap) run under a per-state internal lock.

Waiting discipline
------------------

On this runtime the interpreter lock plays the role of the memory
interconnect: a thread that polls shared state without yielding consumes
everyone's execution time, exactly as a shared-word spinner loads the
coherence fabric.  The protocols therefore wait the way they do on real
hardware.  TTAS and the C=0 ticket lock poll the shared word/counter in hot
bursts longer than the interpreter switch interval (they must watch shared
state closely to win), which is also what makes them collapse under heavy
contention.  A C>0 backoff waiter pauses C*N calibrated spin units and
yields between polls.  An MCS waiter waits on its own node, realized as a
park on the node's private lock so that waiting disturbs nobody; the
releaser wakes exactly its successor.  The workload harness shortens the
interpreter switch interval while running so that handoffs stay responsive.
"""

import sys
import threading
import time
from dataclasses import dataclass

from .params import FnAccessor, Guard, ParamSpec, Registry, StepMode

TTAS = 0
BACKOFF_TICKET = 1
MCS = 2
PROTOCOL_NAMES = {TTAS: "ttas", BACKOFF_TICKET: "ticket", MCS: "mcs"}
PROTOCOL_IDS = {name: pid for pid, name in PROTOCOL_NAMES.items()}

PLAIN = -1  # release mode: no protocol switch requested

DEFAULT_METHOD_TUNER = TTAS

# Hot spinners poll this many times between yields; sized to outlast the
# harness switch interval so that busy-waiting on shared state costs what
# it costs on real hardware.
_POLL_BURST = 4096


def _spin(units: int) -> None:
    """Calibrated busy-wait; one loop iteration is the spin unit."""
    for _ in range(units):
        pass


class WaiterNode:
    """Per-acquire MCS queue node; owned by exactly one in-flight acquire.

    ``parked`` stays locked while the node is idle; a waiter with a
    predecessor blocks on it and the handoff releases it, so each wake
    re-establishes the invariant.
    """

    __slots__ = ("next", "wait", "parked")

    def __init__(self):
        self.next = None
        self.wait = False
        self.parked = threading.Lock()
        self.parked.acquire()


class _TtasState:
    __slots__ = ("word",)

    def __init__(self):
        # threading.Lock.acquire(blocking=False) is the atomic test-and-set.
        self.word = threading.Lock()


class _TicketState:
    __slots__ = ("lock", "next_ticket", "current")

    def __init__(self, held: bool = False):
        self.lock = threading.Lock()
        # held=True: the creator implicitly owns ticket 0.
        self.next_ticket = 1 if held else 0
        self.current = 0


class _McsState:
    __slots__ = ("lock", "tail")

    def __init__(self):
        self.lock = threading.Lock()
        self.tail = None


class MixedLock:
    """Adaptive mutual-exclusion lock with release-time protocol switching.

    ``mode`` is stored apart from the protocol state objects (separate
    attributes, not a packed struct) since it is read constantly but written
    only when a switch commits.  ``method_tuner`` is per-lock, seeded from
    the module default.
    """

    __slots__ = ("mode", "method_tuner", "val_tuner", "_state", "_gen", "_valid",
                 "_debug", "_owner")

    def __init__(self, debug: bool = False):
        self._debug = debug
        self.init()

    def init(self) -> None:
        """(Re)initialize: TTAS mode, other protocols invalid, lock free."""
        self.mode = TTAS
        self.method_tuner = DEFAULT_METHOD_TUNER
        self.val_tuner = 0
        self._state = [_TtasState(), _TicketState(), _McsState()]
        self._gen = [0, 0, 0]
        self._valid = [True, False, False]
        self._owner = None

    # -- protocol-specific waits ------------------------------------------

    def _acquire_ttas(self) -> bool:
        gen = self._gen[TTAS]
        st = self._state[TTAS]
        word = st.word
        spins = 0
        while True:
            if self._gen[TTAS] != gen or not self._valid[TTAS]:
                return False
            if not word.locked() and word.acquire(False):
                if self._gen[TTAS] != gen or not self._valid[TTAS]:
                    # Won a stale or not-yet-opened word; give it back.
                    word.release()
                    return False
                return True
            spins += 1
            if spins >= _POLL_BURST:
                spins = 0
                time.sleep(0)

    def _ticket_issue(self, gen: int, st: _TicketState) -> int | None:
        # Issuance re-checks validity atomically so a dying era can never
        # leak an orphaned ticket into a live counter.
        with st.lock:
            if (
                self._gen[BACKOFF_TICKET] != gen
                or not self._valid[BACKOFF_TICKET]
                or self._state[BACKOFF_TICKET] is not st
            ):
                return None
            ticket = st.next_ticket
            st.next_ticket = ticket + 1
            return ticket

    def _acquire_ticket(self) -> bool:
        gen = self._gen[BACKOFF_TICKET]
        st = self._state[BACKOFF_TICKET]
        if self._gen[BACKOFF_TICKET] != gen or not self._valid[BACKOFF_TICKET]:
            return False
        ticket = self._ticket_issue(gen, st)
        if ticket is None:
            return False
        spins = 0
        while True:
            if st.current == ticket:
                # current reached my era-valid ticket: I am the holder, and
                # the era cannot die underneath a holder.
                return True
            if self._gen[BACKOFF_TICKET] != gen or not self._valid[BACKOFF_TICKET]:
                return False
            pause = self.val_tuner * (st.next_ticket - st.current)
            if pause > 0:
                _spin(pause)
                time.sleep(0)
            else:
                spins += 1
                if spins >= _POLL_BURST:
                    spins = 0
                    time.sleep(0)

    def _acquire_mcs(self, node: WaiterNode) -> bool:
        gen = self._gen[MCS]
        st = self._state[MCS]
        node.next = None
        node.wait = True
        with st.lock:
            pred = st.tail
            st.tail = node
        if pred is not None:
            pred.next = node
            node.parked.acquire()  # woken by exactly one handoff
        # Queue slot owned.  On a dead or superseded era, pass the slot on.
        if self._gen[MCS] != gen or not self._valid[MCS]:
            self._mcs_pass_slot(st, node)
            return False
        return True

    @staticmethod
    def _mcs_pass_slot(st: _McsState, node: WaiterNode) -> None:
        """Standard MCS release mechanics on whichever queue ``node`` is in."""
        if node.next is None:
            with st.lock:
                if st.tail is node:
                    st.tail = None
                    return
            while node.next is None:
                # Successor swapped the tail but has not linked yet.
                time.sleep(0)
        nxt = node.next
        nxt.wait = False
        nxt.parked.release()

    # -- public interface ---------------------------------------------------

    def acquire(self, node: WaiterNode) -> int:
        """Block until held; returns PLAIN or the protocol to switch to."""
        while True:
            proto = self.mode
            if proto == TTAS:
                ok = self._acquire_ttas()
            elif proto == BACKOFF_TICKET:
                ok = self._acquire_ticket()
            else:
                ok = self._acquire_mcs(node)
            if ok:
                break
            # Protocol invalidated or replaced mid-wait; re-route via mode.
            time.sleep(0)
        if self._debug:
            self._owner = threading.get_ident()
        want = self.method_tuner
        if want != self.mode and 0 <= want <= 2:
            return want
        return PLAIN

    def try_acquire(self, node: WaiterNode) -> int | None:
        """Non-blocking acquire; returns None when busy."""
        proto = self.mode
        if proto == TTAS:
            gen = self._gen[TTAS]
            st = self._state[TTAS]
            if self._gen[TTAS] != gen or not self._valid[TTAS]:
                return None
            if not st.word.acquire(False):
                return None
            if self._gen[TTAS] != gen or not self._valid[TTAS]:
                st.word.release()
                return None
        elif proto == BACKOFF_TICKET:
            gen = self._gen[BACKOFF_TICKET]
            st = self._state[BACKOFF_TICKET]
            with st.lock:
                if (
                    self._gen[BACKOFF_TICKET] != gen
                    or not self._valid[BACKOFF_TICKET]
                    or self._state[BACKOFF_TICKET] is not st
                    or st.current != st.next_ticket
                ):
                    return None
                st.next_ticket += 1
        else:
            gen = self._gen[MCS]
            st = self._state[MCS]
            node.next = None
            node.wait = False
            with st.lock:
                if st.tail is not None:
                    return None
                st.tail = node
            if self._gen[MCS] != gen or not self._valid[MCS]:
                self._mcs_pass_slot(st, node)
                return None
        if self._debug:
            self._owner = threading.get_ident()
        want = self.method_tuner
        if want != self.mode and 0 <= want <= 2:
            return want
        return PLAIN

    def release(self, node: WaiterNode, release_mode: int = PLAIN) -> None:
        """Release; ``release_mode`` must be the matching acquire's result."""
        if self._debug:
            holder = self._owner
            if holder != threading.get_ident():
                raise AssertionError("release() by a thread that does not hold the lock")
            self._owner = None
        if release_mode == PLAIN or release_mode == self.mode:
            self._release_current(node)
        else:
            self._switch_and_release(node, release_mode)

    def _release_current(self, node: WaiterNode) -> None:
        proto = self.mode
        if proto == TTAS:
            self._state[TTAS].word.release()
        elif proto == BACKOFF_TICKET:
            # Only the holder writes current; plain increment is safe.
            self._state[BACKOFF_TICKET].current += 1
        else:
            self._mcs_pass_slot(self._state[MCS], node)

    def _switch_and_release(self, node: WaiterNode, target: int) -> None:
        old = self.mode
        old_state = self._state[old]
        # Install fresh target state and acquire its arbitration.  The state
        # object is published before the generation bump (readers capture the
        # generation first), and the validity flag stays down, so any stale
        # winner gives the slot straight back.
        if target == TTAS:
            st = _TtasState()
            self._state[TTAS] = st
            st.word.acquire()
            tmp = None
        elif target == BACKOFF_TICKET:
            st = _TicketState(held=True)
            self._state[BACKOFF_TICKET] = st
            tmp = None
        else:
            st = _McsState()
            self._state[MCS] = st
            tmp = WaiterNode()
            tmp.wait = True
            with st.lock:
                pred = st.tail
                st.tail = tmp
            if pred is not None:
                # A stale racer slipped into the fresh queue; it will fail
                # its era check and pass the slot here.
                pred.next = tmp
                tmp.parked.acquire()
        # Commit: invalidate the old protocol, re-route arrivals, open the era.
        self._valid[old] = False
        self.mode = target
        self._gen[target] += 1
        self._valid[target] = True
        # MCS waiters are woken only by handoff; start the dead-queue drain.
        if old == MCS:
            self._mcs_pass_slot(old_state, node)
        # Finally release the target protocol.
        if target == TTAS:
            st.word.release()
        elif target == BACKOFF_TICKET:
            st.current += 1
        else:
            self._mcs_pass_slot(st, tmp)

    # -- introspection (tests, reporting) ------------------------------------

    def holder_count(self) -> int:
        """Best-effort: 1 if some protocol arbitration is currently held."""
        proto = self.mode
        st = self._state[proto]
        if proto == TTAS:
            return int(st.word.locked())
        if proto == BACKOFF_TICKET:
            return int(st.current < st.next_ticket)
        return int(st.tail is not None)


@dataclass
class LockWorkload:
    """Shape of the synthetic contention generator."""

    threads: int
    cs_units: int = 0  # spin units inside the critical section
    idle_units: int = 0  # spin units between critical sections
    switch_interval: float = 0.0005

    def __post_init__(self):
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


class _ThreadStats:
    __slots__ = ("count", "wait_time", "wait_since")

    def __init__(self):
        self.count = 0
        self.wait_time = 0.0
        self.wait_since = 0.0  # nonzero while inside acquire()


class ContentionHarness:
    """Runs ``threads`` workers looping acquire / critical section / release.

    Worker counters are plain per-thread fields; readers see a consistent
    enough snapshot for rate and latency estimates.
    """

    def __init__(self, lock: MixedLock, workload: LockWorkload):
        self.lock = lock
        self.workload = workload
        self.stats = [_ThreadStats() for _ in range(workload.threads)]
        self._stop = False
        self._threads: list[threading.Thread] = []
        self._saved_switch_interval = None
        self._window_counts = [0] * workload.threads
        self._window_waits = [0.0] * workload.threads
        self._window_start = 0.0

    def _worker(self, stats: _ThreadStats) -> None:
        lock = self.lock
        node = WaiterNode()
        cs = self.workload.cs_units
        idle = self.workload.idle_units
        clock = time.perf_counter
        while not self._stop:
            t0 = clock()
            stats.wait_since = t0
            rm = lock.acquire(node)
            stats.wait_time += clock() - t0
            stats.wait_since = 0.0
            if cs:
                _spin(cs)
            stats.count += 1
            lock.release(node, rm)
            if idle:
                _spin(idle)

    def start(self) -> None:
        self._saved_switch_interval = sys.getswitchinterval()
        sys.setswitchinterval(self.workload.switch_interval)
        self._stop = False
        self._threads = [
            threading.Thread(target=self._worker, args=(s,), daemon=True) for s in self.stats
        ]
        for t in self._threads:
            t.start()
        self.reset_window()

    def stop(self, timeout: float = 30.0) -> None:
        self._stop = True
        for t in self._threads:
            t.join(timeout=timeout)
        stuck = [t for t in self._threads if t.is_alive()]
        if self._saved_switch_interval is not None:
            sys.setswitchinterval(self._saved_switch_interval)
        if stuck:
            raise RuntimeError(f"{len(stuck)} workers failed to stop (possible deadlock)")

    def totals(self) -> tuple[int, float]:
        return sum(s.count for s in self.stats), sum(s.wait_time for s in self.stats)

    def reset_window(self) -> None:
        for i, s in enumerate(self.stats):
            self._window_counts[i] = s.count
            self._window_waits[i] = s.wait_time
        self._window_start = time.perf_counter()

    def measure(self) -> tuple[int, int, float]:
        """Returns (acquisitions/sec, mean wait in microseconds, busy fraction)
        over the window since the last reset; resets the window."""
        now = time.perf_counter()
        window_start = self._window_start
        elapsed = now - window_start
        count = sum(s.count - c0 for s, c0 in zip(self.stats, self._window_counts))
        waited = sum(s.wait_time - w0 for s, w0 in zip(self.stats, self._window_waits))
        # Waits still in flight would otherwise be invisible until they finish.
        for s in self.stats:
            since = s.wait_since
            if since:
                waited += now - max(since, window_start)
        self.reset_window()
        if elapsed <= 0:
            return 0, 0, 0.0
        rate = int(count / elapsed)
        mean_wait_us = int(waited / count * 1e6) if count else 0
        busy = min(1.0, waited / (self.workload.threads * elapsed))
        return rate, mean_wait_us, busy


class LiveLockEnv:
    """Registers a running mixed lock as a tunable subsystem.

    Exposes ``method_tuner`` (protocol selector) and ``val_tuner`` (polling
    weight, active only under the backoff ticket protocol), acquisitions per
    second as the optimization target, and the mean acquisition latency as
    the single workload sensor.
    """

    SENSOR_THRESHOLD = 50  # percent; live latency is noisy

    def __init__(
        self,
        lock: MixedLock,
        harness: ContentionHarness,
        registry: Registry,
        subsystem: str = "lock",
        busy_threshold: int = 80,
    ):
        self.lock = lock
        self.harness = harness
        self.registry = registry
        self.subsystem_id = subsystem
        registry.register_subsystem(subsystem, busy_threshold=busy_threshold)
        registry.register_param(
            ParamSpec(
                "method_tuner",
                subsystem,
                0,
                2,
                StepMode.LINEAR,
                accessor=FnAccessor(
                    lambda: lock.method_tuner, lambda v: setattr(lock, "method_tuner", v)
                ),
            )
        )
        registry.register_param(
            ParamSpec(
                "val_tuner",
                subsystem,
                0,
                16,
                StepMode.EXPONENTIAL,
                guard=Guard("method_tuner", 1),
                accessor=FnAccessor(
                    lambda: lock.val_tuner, lambda v: setattr(lock, "val_tuner", v)
                ),
            )
        )
        registry.attach_probes(
            subsystem,
            sensor_probe=self._sensors,
            target_probe=self._target,
            bottleneck_probe=self._bottleneck,
            sensor_count=1,
        )

    def on_activate(self) -> None:
        self.harness.reset_window()

    def _sensors(self):
        _, mean_wait_us, _ = self.harness.measure()
        return (mean_wait_us,), (self.SENSOR_THRESHOLD,)

    def _target(self) -> int:
        rate, _, _ = self.harness.measure()
        return rate

    def _bottleneck(self) -> bool:
        _, _, busy = self.harness.measure()
        threshold = self.registry.subsystem(self.subsystem_id).busy_threshold
        return busy >= threshold / 100.0


def as_lock_subsystem(
    lock: MixedLock,
    harness: ContentionHarness,
    registry: Registry | None = None,
    subsystem: str = "lock",
) -> LiveLockEnv:
    return LiveLockEnv(lock, harness, registry if registry is not None else Registry(), subsystem)
