"""CSMA/CA state machine driven through a scripted airlink."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coexsim.channel import mw_to_dbm
from coexsim.mac_itsg5 import CsmaConfig, CsmaMac, Phase, airtime_us, cca_busy
from coexsim.traffic import Cam

CFG = CsmaConfig()


class FakeAirlink:
    """Records timer arms and transmissions; busy state is set by the test."""

    def __init__(self, busy=False):
        self.busy = busy
        self.timers = []
        self.txs = []

    def is_busy(self, node):
        return self.busy

    def arm_timer(self, node, due_us, token):
        self.timers.append((due_us, token))

    def start_tx(self, node, cam, now_us):
        self.txs.append((now_us, cam))


class ScriptedRng:
    def __init__(self, backoffs=()):
        self.backoffs = list(backoffs)

    def integers(self, lo, hi):
        assert self.backoffs, "unexpected backoff draw"
        v = self.backoffs.pop(0)
        assert lo <= v < hi
        return v


def cam(seq=0):
    return Cam(0, seq, 0, 350)


def test_airtime_values():
    assert airtime_us(350, CFG) == 512
    assert airtime_us(1, CFG) == 48


@given(a=st.integers(1, 2000), b=st.integers(1, 2000))
def test_airtime_monotone_in_payload(a, b):
    lo, hi = sorted([a, b])
    assert airtime_us(lo, CFG) <= airtime_us(hi, CFG)


def test_cca_energy_threshold():
    assert cca_busy(-60.0, CFG)
    assert not cca_busy(-90.0, CFG)
    # Two simultaneous -68 dBm arrivals sum to about -65.0 dBm: busy.
    total = mw_to_dbm(2 * 10 ** (-6.8))
    assert total == pytest.approx(-64.99, abs=0.01)
    assert cca_busy(float(total), CFG)


def test_config_validation():
    assert CFG.validate() == []
    assert CsmaConfig(aifs_us=0).validate()
    assert CsmaConfig(slot_us=0).validate()
    assert CsmaConfig(cw_max_slots=-1).validate()
    # Preamble detection must be the more sensitive of the two tiers.
    assert CsmaConfig(preamble_threshold_dbm=-60.0).validate()
    assert CsmaConfig(preamble_threshold_dbm=None).validate() == []


def test_idle_channel_transmits_after_aifs_without_backoff():
    air = FakeAirlink(busy=False)
    mac = CsmaMac(0, CFG, ScriptedRng(), air)  # any backoff draw would raise
    mac.on_packet_ready(cam(), 0)
    due, token = air.timers[-1]
    assert due == 110
    mac.on_timer(110, token)
    assert air.txs == [(110, cam())]
    assert mac.phase is Phase.TX


def test_busy_arrival_defers_then_counts_down_with_freeze():
    air = FakeAirlink(busy=True)
    mac = CsmaMac(0, CFG, ScriptedRng([5]), air)
    mac.on_packet_ready(cam(), 0)
    assert mac.phase is Phase.DEFER
    assert air.timers == []

    # Busy -> idle: the backoff counter is drawn once, then AIFS restarts.
    air.busy = False
    mac.on_idle(1000)
    assert mac.backoff_slots == 5
    due, t1 = air.timers[-1]
    assert due == 1110

    mac.on_timer(1110, t1)
    assert mac.phase is Phase.COUNT
    due, t2 = air.timers[-1]
    assert due == 1110 + 5 * 13

    # Freeze mid-slot: only whole elapsed slots are consumed.
    air.busy = True
    mac.on_busy(1136)
    assert mac.phase is Phase.DEFER
    assert mac.backoff_slots == 3  # 26 us elapsed -> 2 whole slots
    mac.on_timer(1175, t2)  # stale timer fires harmlessly
    assert air.txs == []

    # Resume: AIFS again, then the remaining three slots.
    air.busy = False
    mac.on_idle(2000)
    assert mac.backoff_slots == 3
    due, t3 = air.timers[-1]
    assert due == 2110
    mac.on_timer(2110, t3)
    due, t4 = air.timers[-1]
    assert due == 2110 + 3 * 13
    mac.on_timer(due, t4)
    assert air.txs == [(2149, cam())]


def test_busy_starting_exactly_at_window_end_does_not_cancel():
    air = FakeAirlink(busy=False)
    mac = CsmaMac(0, CFG, ScriptedRng(), air)
    mac.on_packet_ready(cam(), 0)
    due, token = air.timers[-1]
    air.busy = True
    mac.on_busy(due)  # onset at the exact AIFS completion instant
    assert mac.phase is Phase.AIFS
    mac.on_timer(due, token)
    assert air.txs == [(110, cam())]


def test_busy_during_aifs_restarts_sensing():
    air = FakeAirlink(busy=False)
    mac = CsmaMac(0, CFG, ScriptedRng([0]), air)
    mac.on_packet_ready(cam(), 0)
    _, t1 = air.timers[-1]
    air.busy = True
    mac.on_busy(50)
    assert mac.phase is Phase.DEFER
    mac.on_timer(110, t1)  # stale
    assert air.txs == []
    air.busy = False
    mac.on_idle(200)
    due, t2 = air.timers[-1]
    assert due == 310
    # Zero drawn backoff: AIFS completion transmits directly.
    mac.on_timer(310, t2)
    assert air.txs == [(310, cam())]


def test_queue_depth_one_replaces_and_counts_drop():
    air = FakeAirlink(busy=False)
    mac = CsmaMac(0, CFG, ScriptedRng(), air)
    mac.on_packet_ready(cam(0), 0)
    mac.on_packet_ready(cam(1), 50)
    assert mac.drops == 1
    due, token = air.timers[-1]
    mac.on_timer(due, token)
    assert air.txs == [(110, cam(1))]


def test_packet_queued_during_tx_starts_after_completion():
    air = FakeAirlink(busy=False)
    mac = CsmaMac(0, CFG, ScriptedRng(), air)
    mac.on_packet_ready(cam(0), 0)
    due, token = air.timers[-1]
    mac.on_timer(due, token)
    assert mac.phase is Phase.TX
    mac.on_packet_ready(cam(1), 300)
    assert mac.drops == 0
    mac.on_tx_complete(622)
    due, token = air.timers[-1]
    assert due == 622 + 110
    mac.on_timer(due, token)
    assert air.txs[-1] == (732, cam(1))


def test_tx_complete_with_empty_queue_goes_idle():
    air = FakeAirlink(busy=False)
    mac = CsmaMac(0, CFG, ScriptedRng(), air)
    mac.on_packet_ready(cam(), 0)
    due, token = air.timers[-1]
    mac.on_timer(due, token)
    mac.on_tx_complete(622)
    assert mac.phase is Phase.IDLE
    assert len(air.timers) == 1


def test_backoff_draw_range(rng):
    for _ in range(200):
        air = FakeAirlink(busy=True)
        mac = CsmaMac(0, CFG, rng, air)
        mac.on_packet_ready(cam(), 0)
        air.busy = False
        mac.on_idle(1000)
        assert 0 <= mac.backoff_slots <= 15


def test_idle_notification_without_packet_is_ignored():
    air = FakeAirlink(busy=False)
    mac = CsmaMac(0, CFG, ScriptedRng(), air)
    mac.on_idle(100)
    assert mac.phase is Phase.IDLE
    assert air.timers == []
