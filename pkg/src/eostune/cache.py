"""Policy cache: memoizes good settings per workload signature.

Each subsystem owns a list of entries in insertion order.  Lookup scans the
list and returns the first entry whose stored signature is field-wise similar
to the probe: a probe value matches a cached value when it lies within the
entry's stored percentage threshold of the cached value (a cached zero
matches only zero).  Recency stamps feed eviction only; list order, and
therefore which of several matching entries wins, never changes.

The cache holds at most ``capacity`` entries across all subsystems (default
1000) and evicts the least recently used one.  It persists to a versioned,
CRC-checked text file so tuning results survive restarts.
"""

import zlib
from dataclasses import dataclass, field

from .errors import CorruptCacheFile, FieldCountMismatch
from .state import SearchState

DEFAULT_CAPACITY = 1000

_MAGIC = "EOSCACHE"
_VERSION = "v1"


@dataclass(frozen=True)
class WorkloadSignature:
    """Sensor vector plus per-field similarity thresholds (percent)."""

    subsystem: str
    values: tuple[int, ...]
    thresholds: tuple[int, ...]

    def __post_init__(self):
        if len(self.values) != len(self.thresholds):
            raise FieldCountMismatch(
                f"signature has {len(self.values)} values but "
                f"{len(self.thresholds)} thresholds"
            )


@dataclass
class CacheEntry:
    signature: WorkloadSignature
    setting: dict[str, int]
    complete: bool
    resume_state: SearchState | None = None
    last_used: int = 0

    def validate(self) -> None:
        if self.complete and self.resume_state is not None:
            raise ValueError("complete entry must not carry resume state")
        if not self.complete and self.resume_state is None:
            raise ValueError("incomplete entry must carry resume state")


def similar(probe: tuple[int, ...], entry_sig: WorkloadSignature) -> bool:
    """Field-wise similarity against the entry's stored thresholds.

    Uses exact integer arithmetic: |probe - cached| * 100 <= threshold * cached.
    The denominator is the cached value, so a cached zero matches only zero.
    """
    for p, c, t in zip(probe, entry_sig.values, entry_sig.thresholds):
        if 100 * abs(p - c) > t * c:
            return False
    return True


class PolicyCache:
    def __init__(self, capacity: int = DEFAULT_CAPACITY):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._entries: dict[str, list[CacheEntry]] = {}
        self._field_counts: dict[str, int] = {}
        self._tick = 0

    def __len__(self) -> int:
        return sum(len(v) for v in self._entries.values())

    def _stamp(self) -> int:
        self._tick += 1
        return self._tick

    def lookup(self, signature: WorkloadSignature) -> CacheEntry | None:
        """First similar entry in insertion order; bumps its recency."""
        expected = self._field_counts.get(signature.subsystem)
        if expected is not None and expected != len(signature.values):
            raise FieldCountMismatch(
                f"subsystem {signature.subsystem!r} caches {expected}-field "
                f"signatures, probe has {len(signature.values)}"
            )
        for entry in self._entries.get(signature.subsystem, ()):
            if similar(signature.values, entry.signature):
                entry.last_used = self._stamp()
                return entry
        return None

    def insert(self, entry: CacheEntry) -> CacheEntry:
        entry.validate()
        sid = entry.signature.subsystem
        expected = self._field_counts.get(sid)
        if expected is None:
            self._field_counts[sid] = len(entry.signature.values)
        elif expected != len(entry.signature.values):
            raise FieldCountMismatch(
                f"subsystem {sid!r} caches {expected}-field signatures, "
                f"entry has {len(entry.signature.values)}"
            )
        entry.last_used = self._stamp()
        self._entries.setdefault(sid, []).append(entry)
        while len(self) > self.capacity:
            self._evict_lru()
        return entry

    def _evict_lru(self) -> None:
        victim_sid, victim_idx, victim_stamp = None, None, None
        for sid, entries in self._entries.items():
            for idx, entry in enumerate(entries):
                if victim_stamp is None or entry.last_used < victim_stamp:
                    victim_sid, victim_idx, victim_stamp = sid, idx, entry.last_used
        if victim_sid is not None:
            del self._entries[victim_sid][victim_idx]

    def entries(self, subsystem: str | None = None) -> list[CacheEntry]:
        """Copy-on-read snapshot, safe to hand to other threads."""
        if subsystem is not None:
            pool = list(self._entries.get(subsystem, ()))
        else:
            pool = [e for lst in self._entries.values() for e in lst]
        return [
            CacheEntry(
                signature=e.signature,
                setting=dict(e.setting),
                complete=e.complete,
                resume_state=e.resume_state,
                last_used=e.last_used,
            )
            for e in pool
        ]

    def clear(self) -> None:
        self._entries.clear()
        self._field_counts.clear()
        self._tick = 0

    # -- persistence ---------------------------------------------------------
    #
    # Header line:  EOSCACHE v1 <entry-count> <crc32-of-body>
    # Entry line:   <subsys> | v1,v2 | t1,t2 | p=v;q=w | <0|1> | <blob|-> | <rank>
    #
    # The CRC runs over the raw body bytes; any mismatch or malformed line
    # makes load() return an empty cache plus a warning string.

    def _body_lines(self) -> list[str]:
        ranked = sorted(
            (e for lst in self._entries.values() for e in lst),
            key=lambda e: e.last_used,
        )
        rank_of = {id(e): rank for rank, e in enumerate(ranked)}
        lines = []
        for sid, entries in self._entries.items():
            for e in entries:
                values = ",".join(str(v) for v in e.signature.values)
                thresholds = ",".join(str(t) for t in e.signature.thresholds)
                setting = (
                    ";".join(f"{k}={v}" for k, v in e.setting.items()) if e.setting else "-"
                )
                blob = e.resume_state.to_blob() if e.resume_state is not None else "-"
                lines.append(
                    f"{sid} | {values} | {thresholds} | {setting} | "
                    f"{1 if e.complete else 0} | {blob} | {rank_of[id(e)]}"
                )
        return lines

    def persist(self, path: str) -> None:
        body = "".join(line + "\n" for line in self._body_lines())
        body_bytes = body.encode("utf-8")
        crc = zlib.crc32(body_bytes) & 0xFFFFFFFF
        header = f"{_MAGIC} {_VERSION} {len(self)} {crc}\n"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(header)
            fh.write(body)

    @classmethod
    def load(
        cls, path: str, capacity: int = DEFAULT_CAPACITY
    ) -> tuple["PolicyCache", str | None]:
        """Read a cache file.

        Returns ``(cache, warning)``.  A corrupt file yields an empty cache
        and a warning string instead of raising; I/O errors propagate.
        """
        with open(path, "rb") as fh:
            raw = fh.read()
        cache = cls(capacity=capacity)
        if not raw.strip():
            return cache, None
        try:
            cls._parse_into(cache, raw)
        except CorruptCacheFile as exc:
            return cls(capacity=capacity), f"corrupt cache file {path!r}: {exc}"
        return cache, None

    @staticmethod
    def _parse_into(cache: "PolicyCache", raw: bytes) -> None:
        newline = raw.find(b"\n")
        if newline < 0:
            raise CorruptCacheFile("missing header line")
        header = raw[:newline].decode("utf-8", errors="replace").split()
        body_bytes = raw[newline + 1 :]
        if len(header) != 4 or header[0] != _MAGIC or header[1] != _VERSION:
            raise CorruptCacheFile("bad header")
        try:
            count, crc = int(header[2]), int(header[3])
        except ValueError:
            raise CorruptCacheFile("bad header") from None
        if zlib.crc32(body_bytes) & 0xFFFFFFFF != crc:
            raise CorruptCacheFile("checksum mismatch")
        parsed: list[tuple[int, CacheEntry]] = []
        lines = body_bytes.decode("utf-8").splitlines()
        if len(lines) != count:
            raise CorruptCacheFile(f"expected {count} entries, found {len(lines)}")
        for line in lines:
            parts = [p.strip() for p in line.split("|")]
            if len(parts) != 7:
                raise CorruptCacheFile(f"malformed entry line {line!r}")
            sid, values_s, thresholds_s, setting_s, complete_s, blob, rank_s = parts
            try:
                values = tuple(int(v) for v in values_s.split(",")) if values_s else ()
                thresholds = (
                    tuple(int(t) for t in thresholds_s.split(",")) if thresholds_s else ()
                )
                setting = {}
                if setting_s != "-":
                    for pair in setting_s.split(";"):
                        key, _, val = pair.partition("=")
                        setting[key] = int(val)
                complete = complete_s == "1"
                resume = None if blob == "-" else SearchState.from_blob(blob)
                rank = int(rank_s)
                entry = CacheEntry(
                    signature=WorkloadSignature(sid, values, thresholds),
                    setting=setting,
                    complete=complete,
                    resume_state=resume,
                )
                entry.validate()
            except (ValueError, KeyError, FieldCountMismatch) as exc:
                raise CorruptCacheFile(f"malformed entry line {line!r}: {exc}") from exc
            parsed.append((rank, entry))
        # Re-base recency stamps from the stored ranks, preserving relative
        # order, while keeping list order equal to file (= insertion) order.
        for rank, entry in parsed:
            sid = entry.signature.subsystem
            expected = cache._field_counts.setdefault(sid, len(entry.signature.values))
            if expected != len(entry.signature.values):
                raise CorruptCacheFile("inconsistent field counts within a subsystem")
            entry.last_used = rank + 1
            cache._entries.setdefault(sid, []).append(entry)
        cache._tick = len(parsed) + 1
        if len(cache) > cache.capacity:
            raise CorruptCacheFile("entry count exceeds capacity")
