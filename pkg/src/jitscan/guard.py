"""Per-user flood guard for the snapshot pipeline.

Each uid gets a pending counter: +1 per admitted snapshot, -1 per
delivered one.  Pushing the counter past the threshold starts a penalty
window during which every admission for that uid is denied, whatever
pid it comes from (a fork bomb churning through pids still shares the
uid).  Entries that sit at zero long enough are evicted so setuid churn
cannot grow the table without bound.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field


@dataclass
class GuardConfig:
    threshold: int = 256
    penalty_action: str = "kill"  # "kill" | "block"
    ttl_penalty: int = 1000  # ticks a penalty lasts
    ttl_evict: int = 5000  # ticks at pending==0 before the entry is dropped

    def __post_init__(self) -> None:
        if self.threshold < 1:
            raise ValueError("threshold must be >= 1")
        if self.penalty_action not in ("kill", "block"):
            raise ValueError("penalty_action must be 'kill' or 'block'")
        if self.ttl_penalty < 1 or self.ttl_evict < 1:
            raise ValueError("TTLs must be >= 1")


@dataclass
class ThrottleEntry:
    pending: int = 0
    penalized_until: int | None = None
    zero_since: int | None = None  # tick pending last reached 0


@dataclass
class Admission:
    admitted: bool
    action: str | None = None  # penalty action when denied


class DosGuard:
    def __init__(self, config: GuardConfig | None = None):
        self.config = config or GuardConfig()
        self.entries: dict[int, ThrottleEntry] = {}
        self._lock = threading.Lock()
        self.admits = 0
        self.denials = 0
        self.evictions = 0
        self.unknown_deliveries = 0

    def admit(self, uid: int, pid: int, now: int) -> Admission:
        """Decide one snapshot emission for (uid, pid) at tick `now`."""
        cfg = self.config
        with self._lock:
            entry = self.entries.get(uid)
            if entry is None:
                entry = self.entries[uid] = ThrottleEntry(zero_since=now)
            if entry.penalized_until is not None and now >= entry.penalized_until:
                entry.penalized_until = None
            if entry.penalized_until is not None:
                self.denials += 1
                return Admission(False, cfg.penalty_action)
            if entry.pending + 1 > cfg.threshold:
                # denied requests never enqueue, so pending stays put
                entry.penalized_until = now + cfg.ttl_penalty
                self.denials += 1
                return Admission(False, cfg.penalty_action)
            entry.pending += 1
            entry.zero_since = None
            self.admits += 1
            return Admission(True)

    def on_delivered(self, uid: int, now: int) -> None:
        """A snapshot for uid left the pipeline (scanned or dropped)."""
        with self._lock:
            entry = self.entries.get(uid)
            if entry is None:
                self.unknown_deliveries += 1
                return
            if entry.pending > 0:
                entry.pending -= 1
                if entry.pending == 0:
                    entry.zero_since = now
            else:
                self.unknown_deliveries += 1

    def tick(self, now: int) -> list[int]:
        """Expire penalties, evict entries idle at zero. Returns evicted uids."""
        evicted: list[int] = []
        with self._lock:
            for uid, entry in list(self.entries.items()):
                if entry.penalized_until is not None and now >= entry.penalized_until:
                    entry.penalized_until = None
                if (
                    entry.pending == 0
                    and entry.zero_since is not None
                    and now - entry.zero_since >= self.config.ttl_evict
                ):
                    del self.entries[uid]
                    evicted.append(uid)
            self.evictions += len(evicted)
        return evicted

    def pending(self, uid: int) -> int:
        with self._lock:
            entry = self.entries.get(uid)
            return 0 if entry is None else entry.pending
