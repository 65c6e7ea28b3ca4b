"""W^X shadow paging engine, and the plain baseline it replaces.

A writable-and-executable page never exposes both permissions at once.
Its physical bits alternate between two modes:

    write mode:  W=1 XD=1 orig_exe=1    (fetches trap)
    exec mode:   W=0 XD=0 orig_write=1  (writes trap)

The spare orig_* bits mark a trapped access as shadow-induced -- the
masked permission was originally granted -- rather than a genuine
violation.  On a shadow write trap the page flips to write mode and the
write proceeds.  On a shadow fetch trap the page content is checked
(synchronous signature check, then flood-guard admission, then a
snapshot for the asynchronous scanner) before the page flips to exec
mode and the fetch proceeds.  Every flag edit is followed by a
cross-CPU flush of that page's TLB entry; without it a stale entry on
another CPU would let writes land on a page that is currently
executable.

Pages that are executable but never writable get one content check on
the fetch that materializes them and are otherwise left alone; pages
without execute rights never interact with any of this.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

from .guard import DosGuard
from .mmu import AccessKind, FaultCause, FaultEvent, Machine, VmArea
from .pipeline import PageSnapshot, SnapshotTable
from .report import ActionTaken, Detection, Report
from .signatures import RuleSet, sync_check


class VerdictAction(str, enum.Enum):
    ALLOW = "allow"
    DELIVER_SEGV = "deliver_segv"
    SIGKILL = "sigkill"
    BLOCK = "block"


@dataclass
class ShadowVerdict:
    action: VerdictAction
    snapshot_emitted: bool = False

    def allows(self) -> bool:
        return self.action is VerdictAction.ALLOW

    def delivers_segv(self) -> bool:
        return self.action is VerdictAction.DELIVER_SEGV

    def kills(self) -> bool:
        return self.action is VerdictAction.SIGKILL


_ALLOW = ShadowVerdict(VerdictAction.ALLOW)
_SEGV = ShadowVerdict(VerdictAction.DELIVER_SEGV)


class ShadowEngine:
    """Fault hooks implementing the shadow state machine."""

    def __init__(
        self,
        machine: Machine,
        rules: RuleSet | None = None,
        pipeline: SnapshotTable | None = None,
        guard: DosGuard | None = None,
        *,
        sync_check_enabled: bool = True,
        detection_action: str = "kill",
        report: Report | None = None,
    ):
        if detection_action not in ("kill", "block", "alert"):
            raise ValueError(f"bad detection action {detection_action!r}")
        self.machine = machine
        self.rules = rules
        self.pipeline = pipeline
        self.guard = guard
        self.sync_check_enabled = sync_check_enabled
        self.detection_action = detection_action
        self.report = report if report is not None else Report()

    # ---- fault hooks ---------------------------------------------------

    def on_materialize(self, fault: FaultEvent, area: VmArea | None) -> ShadowVerdict:
        """Not-present fault: materialize the page per its area class."""
        if area is None or not area.permits(fault.kind):
            return _SEGV  # nothing materializes for an illegitimate access
        machine = self.machine
        space = machine.space(fault.pid)
        if area.logical_x and area.logical_w:
            # fetches must trap until the content has been checked
            machine.install_page(
                space, area, fault.vpage,
                writable=True, exec_disabled=True, orig_exe=True,
            )
            if fault.kind is AccessKind.FETCH:
                # materialize-then-check in one step: a single snapshot
                return self.handle_exec_fault(
                    replace(fault, cause=FaultCause.EXEC_VIOLATION)
                )
            return _ALLOW
        if area.logical_x:
            machine.install_page(
                space, area, fault.vpage, writable=False, exec_disabled=False,
            )
            if fault.kind is AccessKind.FETCH:
                return self._checked_fetch(fault, space.uid)
            return _ALLOW
        machine.install_page(
            space, area, fault.vpage,
            writable=area.logical_w, exec_disabled=True,
        )
        return _ALLOW

    def handle_write_fault(self, fault: FaultEvent) -> ShadowVerdict:
        """Write trap: shadow-induced ones flip the page to write mode."""
        machine = self.machine
        space = machine.space(fault.pid)
        area = space.find_area(fault.vpage)
        if area is None or not area.logical_w or not space.alive:
            return _SEGV
        pte = space.ptes[fault.vpage]
        if not pte.orig_write:
            return _SEGV
        pte.exec_disabled = True
        pte.writable = True
        pte.orig_exe = True
        pte.orig_write = False
        machine.tlb_flush_one(fault.pid, fault.vpage)
        return _ALLOW

    def handle_exec_fault(self, fault: FaultEvent) -> ShadowVerdict:
        """Fetch trap: check content, snapshot it, flip to exec mode."""
        machine = self.machine
        space = machine.space(fault.pid)
        pte = space.ptes[fault.vpage]
        if not pte.orig_exe:
            return _SEGV
        verdict = self._checked_fetch(fault, space.uid)
        if not verdict.allows():
            return verdict
        area = space.find_area(fault.vpage)
        pte.exec_disabled = False
        pte.writable = False
        pte.orig_exe = False
        # orig_write names the masked write permission; only W^X areas
        # stay under the machine once rechecked
        pte.orig_write = bool(area is not None and area.logical_w and area.logical_x)
        machine.tlb_flush_one(fault.pid, fault.vpage)
        return verdict

    def on_mprotect(self, pid: int, start_vpage: int, n_pages: int, perms: str) -> None:
        """Update logical permissions; force rechecks where X appears."""
        machine = self.machine
        space = machine.space(pid)
        pieces = space.carve(start_vpage, n_pages, machine.page_size)
        for piece in pieces:
            old_w, old_x = piece.logical_w, piece.logical_x
            piece.logical_r = "r" in perms
            piece.logical_w = "w" in perms
            piece.logical_x = "x" in perms
            for vpage in range(piece.start_vpage, piece.end_vpage):
                pte = space.ptes.get(vpage)
                if pte is None or not pte.present:
                    continue
                if piece.logical_x:
                    gained_x = not old_x
                    gained_w = piece.logical_w and not old_w
                    if gained_x or gained_w:
                        # next fetch must re-run the content check
                        pte.exec_disabled = True
                        pte.writable = piece.logical_w
                        pte.orig_exe = True
                        pte.orig_write = False
                    elif pte.orig_exe:
                        pte.writable = piece.logical_w  # recheck still pending
                    elif pte.orig_write:
                        pte.writable = False
                        if not piece.logical_w:
                            pte.orig_write = False  # leaves the machine
                else:
                    pte.exec_disabled = True
                    pte.writable = piece.logical_w
                    pte.orig_write = False
                    pte.orig_exe = False
                machine.tlb_flush_one(pid, vpage)

    # ---- the exec-side content check ------------------------------------

    def _checked_fetch(self, fault: FaultEvent, uid: int) -> ShadowVerdict:
        """Sync check, flood-guard admission, snapshot emission."""
        machine = self.machine
        content = machine.read_page(fault.pid, fault.vpage)
        if self.sync_check_enabled and self.rules is not None:
            hit = sync_check(content, self.rules)
            if hit is not None:
                rule = self.rules.by_name[hit.rule]
                self.report.record_detection(
                    Detection(
                        pid=fault.pid, uid=uid, vpage=fault.vpage,
                        offset=hit.offset, vaddr=fault.vaddr,
                        rule=rule.name, family=rule.family, severity=rule.severity,
                        path="sync", action=self.detection_action,
                    )
                )
                if self.detection_action == "kill":
                    self.report.record_action(
                        ActionTaken(fault.pid, uid, "kill", "signature",
                                    rule=rule.name, path="sync")
                    )
                    return ShadowVerdict(VerdictAction.SIGKILL)
                if self.detection_action == "block":
                    self.report.record_action(
                        ActionTaken(fault.pid, uid, "block", "signature",
                                    rule=rule.name, path="sync")
                    )
                    return ShadowVerdict(VerdictAction.BLOCK)
                # alert: record only, the fetch goes on
        if self.guard is not None:
            admission = self.guard.admit(uid, fault.pid, machine.now)
            if not admission.admitted:
                self.report.record_action(
                    ActionTaken(fault.pid, uid, admission.action, "throttle")
                )
                if admission.action == "kill":
                    return ShadowVerdict(VerdictAction.SIGKILL)
                return ShadowVerdict(VerdictAction.BLOCK)
        emitted = False
        if self.pipeline is not None:
            self.pipeline.enqueue(
                PageSnapshot(
                    content=content,
                    offset=fault.vaddr % machine.page_size,
                    vaddr=fault.vaddr,
                    vpage=fault.vpage,
                    pid=fault.pid,
                    tid=fault.tid,
                    uid=uid,
                )
            )
            emitted = True
        return ShadowVerdict(VerdictAction.ALLOW, snapshot_emitted=emitted)


class BaselineEngine:
    """Plain demand paging: logical permissions applied verbatim.

    No shadow bits, no checks, no snapshots; violations are genuine and
    deliver a segv.  Used to show the shadow engine changes nothing a
    well-behaved program can observe.
    """

    def __init__(self, machine: Machine):
        self.machine = machine

    def on_materialize(self, fault: FaultEvent, area: VmArea | None) -> ShadowVerdict:
        if area is None or not area.permits(fault.kind):
            return _SEGV
        space = self.machine.space(fault.pid)
        self.machine.install_page(
            space, area, fault.vpage,
            writable=area.logical_w, exec_disabled=not area.logical_x,
        )
        return _ALLOW

    def handle_write_fault(self, fault: FaultEvent) -> ShadowVerdict:
        return _SEGV

    def handle_exec_fault(self, fault: FaultEvent) -> ShadowVerdict:
        return _SEGV

    def on_mprotect(self, pid: int, start_vpage: int, n_pages: int, perms: str) -> None:
        machine = self.machine
        space = machine.space(pid)
        pieces = space.carve(start_vpage, n_pages, machine.page_size)
        for piece in pieces:
            piece.logical_r = "r" in perms
            piece.logical_w = "w" in perms
            piece.logical_x = "x" in perms
            for vpage in range(piece.start_vpage, piece.end_vpage):
                pte = space.ptes.get(vpage)
                if pte is None or not pte.present:
                    continue
                pte.writable = piece.logical_w
                pte.exec_disabled = not piece.logical_x
                machine.tlb_flush_one(pid, vpage)
