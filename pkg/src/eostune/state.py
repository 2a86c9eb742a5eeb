"""Resumable search state.

When a workload ends before the tuner finishes, this is the state the cache
stores so that the next similar workload continues the sweep at exactly the
point it stopped.
"""

import base64
import json
from dataclasses import dataclass, field
from enum import Enum


class SearchPhase(str, Enum):
    BASELINE = "baseline"
    SWEEPING = "sweeping"
    DONE = "done"


@dataclass
class SearchState:
    ordering: list[str]
    cursor: int = 0
    candidate_cursor: int = 0
    best_setting: dict[str, int] = field(default_factory=dict)
    best_score: int = 0
    phase: SearchPhase = SearchPhase.BASELINE

    def to_blob(self) -> str:
        """Opaque single-token encoding used by the cache file format."""
        payload = {
            "ordering": self.ordering,
            "cursor": self.cursor,
            "candidate_cursor": self.candidate_cursor,
            "best_setting": self.best_setting,
            "best_score": self.best_score,
            "phase": self.phase.value,
        }
        raw = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return base64.urlsafe_b64encode(raw.encode("utf-8")).decode("ascii")

    @classmethod
    def from_blob(cls, blob: str) -> "SearchState":
        raw = base64.urlsafe_b64decode(blob.encode("ascii")).decode("utf-8")
        payload = json.loads(raw)
        return cls(
            ordering=list(payload["ordering"]),
            cursor=int(payload["cursor"]),
            candidate_cursor=int(payload["candidate_cursor"]),
            best_setting={str(k): int(v) for k, v in payload["best_setting"].items()},
            best_score=int(payload["best_score"]),
            phase=SearchPhase(payload["phase"]),
        )
