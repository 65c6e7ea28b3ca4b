"""Per-uid flood guard: thresholds, penalties, eviction."""

from __future__ import annotations

import pytest

from jitscan.guard import DosGuard, GuardConfig


def guard(threshold=3, action="kill", ttl_penalty=100, ttl_evict=500) -> DosGuard:
    return DosGuard(GuardConfig(
        threshold=threshold, penalty_action=action,
        ttl_penalty=ttl_penalty, ttl_evict=ttl_evict,
    ))


class TestAdmit:
    def test_admits_up_to_threshold_then_denies(self):
        g = guard(threshold=3)
        results = [g.admit(uid=5, pid=1, now=t) for t in range(1, 6)]
        assert [r.admitted for r in results] == [True, True, True, False, False]
        assert results[3].action == "kill"
        assert (g.admits, g.denials) == (3, 2)

    def test_denial_leaves_pending_unchanged(self):
        g = guard(threshold=2)
        g.admit(5, 1, 1)
        g.admit(5, 1, 2)
        g.admit(5, 1, 3)  # denied
        assert g.pending(5) == 2

    def test_penalty_applies_to_every_pid_of_the_uid(self):
        g = guard(threshold=1, ttl_penalty=50)
        assert g.admit(5, 1, now=10).admitted
        assert not g.admit(5, 1, now=11).admitted  # starts penalty until 61
        assert not g.admit(5, 2, now=12).admitted  # different pid, same uid
        assert g.admit(6, 3, now=12).admitted  # other uid unaffected

    def test_penalty_expires_after_ttl(self):
        g = guard(threshold=1, ttl_penalty=50)
        g.admit(5, 1, now=10)
        g.admit(5, 1, now=11)  # penalty until 61
        assert not g.admit(5, 1, now=60).admitted
        g.on_delivered(5, now=60)  # pending back to 0
        assert g.admit(5, 1, now=61).admitted

    def test_block_action_reported_on_denial(self):
        g = guard(threshold=1, action="block")
        g.admit(5, 1, 1)
        denied = g.admit(5, 1, 2)
        assert (denied.admitted, denied.action) == (False, "block")


class TestDelivery:
    def test_delivery_decrements_pending(self):
        g = guard(threshold=10)
        for t in range(3):
            g.admit(5, 1, now=t)
        g.on_delivered(5, now=5)
        assert g.pending(5) == 2

    def test_pending_is_admits_minus_deliveries(self):
        g = guard(threshold=100)
        for t in range(40):
            g.admit(5, 1, now=t)
        for t in range(25):
            g.on_delivered(5, now=100 + t)
        assert g.pending(5) == 15
        assert g.pending(5) == g.admits - 25

    def test_delivery_for_unknown_uid_is_counted_not_fatal(self):
        g = guard()
        g.on_delivered(42, now=1)
        assert g.unknown_deliveries == 1

    def test_delivery_below_zero_is_clamped(self):
        g = guard()
        g.admit(5, 1, 1)
        g.on_delivered(5, 2)
        g.on_delivered(5, 3)
        assert g.pending(5) == 0
        assert g.unknown_deliveries == 1


class TestTick:
    def test_entry_evicted_after_idle_ttl(self):
        g = guard(ttl_evict=500)
        g.admit(5, 1, now=10)
        g.on_delivered(5, now=20)  # zero since 20
        assert g.tick(now=519) == []
        assert g.tick(now=520) == [5]
        assert 5 not in g.entries
        assert g.evictions == 1

    def test_fresh_entry_with_no_admissions_ages_out(self):
        g = guard(threshold=1, ttl_penalty=10, ttl_evict=100)
        g.admit(5, 1, now=0)
        g.on_delivered(5, now=1)
        g.admit(5, 1, now=2)
        g.on_delivered(5, now=3)
        assert g.tick(now=102) == []  # zero only since 3
        assert g.tick(now=103) == [5]

    def test_nonzero_pending_is_never_evicted(self):
        g = guard(ttl_evict=50)
        g.admit(5, 1, now=0)
        assert g.tick(now=10_000) == []
        assert 5 in g.entries

    def test_readmission_recreates_the_entry(self):
        g = guard(ttl_evict=50)
        g.admit(5, 1, now=0)
        g.on_delivered(5, now=1)
        g.tick(now=51)
        assert 5 not in g.entries
        assert g.admit(5, 2, now=60).admitted
        assert g.pending(5) == 1

    def test_tick_clears_expired_penalties(self):
        g = guard(threshold=1, ttl_penalty=30)
        g.admit(5, 1, now=0)
        g.admit(5, 1, now=1)  # penalty until 31
        g.tick(now=31)
        assert g.entries[5].penalized_until is None


class TestConfig:
    def test_defaults(self):
        cfg = GuardConfig()
        assert (cfg.threshold, cfg.ttl_penalty, cfg.ttl_evict) == (256, 1000, 5000)
        assert cfg.penalty_action == "kill"

    def test_bad_values_rejected(self):
        with pytest.raises(ValueError):
            GuardConfig(threshold=0)
        with pytest.raises(ValueError):
            GuardConfig(penalty_action="shame")
        with pytest.raises(ValueError):
            GuardConfig(ttl_penalty=0)
