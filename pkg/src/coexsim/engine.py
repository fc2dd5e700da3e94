"""Deterministic discrete-event core coupling traffic, MACs, channel and metrics.

Time is integer microseconds. The event heap orders by (time, kind, sequence);
the kind codes double as same-instant priorities: geometry updates first, then
transmission ends (half-open busy intervals: at its end instant a signal is
already gone), TTI boundary work, CAM generations, MAC timers, and run end.
"""

from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass, field
from itertools import count

import numpy as np

from .channel import (
    LinkBudgetConfig,
    PerCurve,
    ShadowingConfig,
    ShadowingField,
    default_itsg5_curve,
    default_ltev2x_curve,
    noise_floor_dbm,
    path_loss_db,
)
from .mac_itsg5 import CsmaConfig, CsmaMac, airtime_us
from .mac_ltev2x import OCCUPIED_US, TTI_US, SensingHistory, SpsConfig, SpsScheduler
from .results import TECH_INDEX, PrrHistogram
from .scenario import RoadConfig, Tech, Vehicle, advance_positions, distance_matrix, spawn
from .traffic import Cam, CamSource, TrafficConfig

EV_MOBILITY = 0
EV_TXEND = 1
EV_TTI = 2
EV_CAM = 3
EV_MACTIMER = 4
EV_RUNEND = 5

SUBSTREAMS = ("placement", "traffic", "backoff", "sps", "reception", "shadowing")


@dataclass
class EngineConfig:
    road: RoadConfig = field(default_factory=RoadConfig)
    link: LinkBudgetConfig = field(default_factory=LinkBudgetConfig)
    shadowing: ShadowingConfig = field(default_factory=ShadowingConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    csma: CsmaConfig = field(default_factory=CsmaConfig)
    sps: SpsConfig = field(default_factory=SpsConfig)
    itsg5_fraction: float = 1.0
    warm_up_s: float = 1.0
    measure_s: float = 10.0
    mobility_update_ms: int = 100
    relevance_margin_db: float = 10.0
    max_distance_m: float = 500.0
    bin_width_m: float = 10.0
    itsg5_per_curve: PerCurve | None = None
    ltev2x_per_curve: PerCurve | None = None
    # Sensitivity switch for the sidelink decoder abstraction: when False,
    # 802.11p bursts do not degrade sidelink packet decoding (the subframe PER
    # curve is treated as characterized against in-system interference only),
    # reproducing simulators whose cellular reception chain ignores foreign
    # waveforms. Sidelink-on-sidelink interference, all interference at 802.11p
    # receptions, and 802.11p energy in the SPS sensing averages are always
    # counted regardless.
    lte_rx_counts_itsg5_interference: bool = True
    # Validation scenario: every LTE node transmits in every TTI, bypassing SPS.
    lte_continuous_tx: bool = False
    record_cca_trace: bool = False
    record_selections: bool = False

    def validate(self) -> list[str]:
        errors = []
        errors += self.road.validate()
        errors += self.link.validate()
        errors += self.shadowing.validate()
        errors += self.traffic.validate()
        errors += self.csma.validate()
        errors += self.sps.validate()
        if not 0.0 <= self.itsg5_fraction <= 1.0:
            errors.append("itsg5_fraction must be in [0,1]")
        if self.warm_up_s < 0:
            errors.append("warm_up_s must be >= 0")
        if self.measure_s <= 0:
            errors.append("measure_s must be > 0")
        if self.mobility_update_ms <= 0:
            errors.append("mobility_update_ms must be > 0")
        if self.max_distance_m <= 0:
            errors.append("max_distance_m must be > 0")
        if self.bin_width_m <= 0:
            errors.append("bin_width_m must be > 0")
        return errors


@dataclass
class RunLog:
    histogram: PrrHistogram
    counters: dict[str, int]
    n_vehicles: int
    cca_trace: dict[int, list[tuple[int, bool]]] | None = None
    tx_starts: list[tuple[int, int]] | None = None
    selections: dict[int, list] | None = None

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.histogram.opportunities.tobytes())
        h.update(self.histogram.successes.tobytes())
        h.update(repr(sorted(self.counters.items())).encode())
        return h.hexdigest()


class TxRec:
    """One on-air transmission with its receive-side snapshots.

    rx power and distance rows are frozen at transmission start; interference
    is accumulated per receiver in mW*us as overlapping transmissions end.
    """

    __slots__ = ("tx", "lte", "cam", "start_us", "end_us", "rx_mw", "dist_m",
                 "interf_mw_us", "halfdup")

    def __init__(self, tx: int, lte: bool, cam: Cam, start_us: int, end_us: int,
                 rx_mw: np.ndarray, dist_m: np.ndarray, n: int):
        self.tx = tx
        self.lte = lte
        self.cam = cam
        self.start_us = start_us
        self.end_us = end_us
        self.rx_mw = rx_mw
        self.dist_m = dist_m
        self.interf_mw_us = np.zeros(n)
        self.halfdup = np.zeros(n, dtype=bool)


class Simulation:
    def __init__(self, config: EngineConfig, seed, vehicles: list[Vehicle] | None = None):
        errors = config.validate()
        if errors:
            raise ValueError("invalid configuration: " + "; ".join(errors))
        self.cfg = config
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        streams = ss.spawn(len(SUBSTREAMS))
        self.rng = {name: np.random.default_rng(s) for name, s in zip(SUBSTREAMS, streams)}

        if vehicles is None:
            vehicles = spawn(config.road, config.itsg5_fraction, self.rng["placement"])
        self.vehicles = vehicles
        n = len(vehicles)
        self.n = n
        self.pos = np.array([v.pos_m for v in vehicles])
        self.lane = np.array([v.lane_index for v in vehicles], dtype=int)
        self.dirsign = np.array([v.direction.value for v in vehicles], dtype=int)
        self.is_lte = np.array([v.tech is Tech.LTEV2X for v in vehicles], dtype=bool)
        self.lte_ids = np.nonzero(self.is_lte)[0]
        self.g5_ids = np.nonzero(~self.is_lte)[0]

        self.noise_dbm = noise_floor_dbm(config.link)
        self.noise_mw = 10.0 ** (self.noise_dbm / 10.0)
        self.relevance_mw = 10.0 ** ((self.noise_dbm - config.relevance_margin_db) / 10.0)
        self.cca_mw = 10.0 ** (config.csma.cca_threshold_dbm / 10.0)
        pre = config.csma.preamble_threshold_dbm
        self.preamble_mw = None if pre is None else 10.0 ** (pre / 10.0)
        self.decode_mw = 10.0 ** (config.sps.decode_threshold_dbm / 10.0)
        self.curve = {
            False: config.itsg5_per_curve or default_itsg5_curve(),
            True: config.ltev2x_per_curve or default_ltev2x_curve(),
        }

        self.shadow = ShadowingField(n, config.shadowing.sigma_db,
                                     config.shadowing.decorr_m, self.rng["shadowing"])
        self._rebuild_geometry()

        self.power_mw = np.zeros(n)
        self.busy = np.zeros(n, dtype=bool)
        # per node: how many on-air same-technology frames are preamble-detectable
        self._preamble_count = np.zeros(n, dtype=int)
        self.active: dict[int, TxRec] = {}

        self.macs: list[CsmaMac | None] = [
            CsmaMac(i, config.csma, self.rng["backoff"], self)
            if v.tech is Tech.ITSG5 else None
            for i, v in enumerate(vehicles)
        ]
        self.history = SensingHistory(n, self.noise_mw, config.sps.sensing_window_ttis)
        self.sps: dict[int, SpsScheduler] = {
            int(i): SpsScheduler(int(i), config.sps, self.history, self.rng["sps"])
            for i in self.lte_ids
        }
        if config.record_selections:
            for sched in self.sps.values():
                sched.selection_log = []
        self.sources = [CamSource(i, v.tech, config.traffic, self.rng["traffic"])
                        for i, v in enumerate(vehicles)]

        self.lte_pending: dict[int, Cam] = {}
        self.lte_sched: dict[int, list[tuple[int, int]]] = {}

        self.hist = PrrHistogram(config.bin_width_m, config.max_distance_m)
        self.counters = {
            "cams_generated": 0, "cams_dropped": 0, "tx_itsg5": 0, "tx_ltev2x": 0,
            "counted_tx": 0, "rx_opportunities": 0, "rx_success": 0,
            "rx_halfduplex": 0, "lte_silent_periods": 0,
        }
        self.cca_trace: dict[int, list[tuple[int, bool]]] | None = (
            {int(i): [] for i in self.g5_ids} if config.record_cca_trace else None)
        self.tx_starts: list[tuple[int, int]] | None = (
            [] if config.record_cca_trace else None)

        self.now = 0
        self.end_us = round((config.warm_up_s + config.measure_s) * 1e6)
        self.warmup_us = round(config.warm_up_s * 1e6)
        self._seq = count()
        self.heap: list = []
        self._rssi_acc = np.zeros(n)
        self._blind_now = np.zeros(n, dtype=bool)
        self._cur_tti = 0
        self._last_int_us = 0

        self._push(0, EV_TTI, 0)
        self._push(config.mobility_update_ms * 1000, EV_MOBILITY, None)
        for i, src in enumerate(self.sources):
            if config.lte_continuous_tx and self.is_lte[i]:
                continue
            self._push(src.next_time_us, EV_CAM, i)
        self._push(self.end_us, EV_RUNEND, None)

    # -- airlink interface used by the CSMA MACs -----------------------------

    def is_busy(self, node: int) -> bool:
        return bool(self.busy[node])

    def arm_timer(self, node: int, due_us: int, token: int) -> None:
        self._push(due_us, EV_MACTIMER, (node, token))

    def start_tx(self, node: int, cam: Cam, now_us: int) -> None:
        self._begin_tx(node, cam, now_us, lte=False)

    # -- internals -----------------------------------------------------------

    def _push(self, t_us: int, kind: int, payload) -> None:
        heapq.heappush(self.heap, (t_us, kind, next(self._seq), payload))

    def _rebuild_geometry(self) -> None:
        cfg = self.cfg
        self.dist = distance_matrix(self.pos, self.lane, cfg.road.lane_width_m)
        pl = path_loss_db(self.dist, cfg.link)
        rx_dbm = (cfg.link.tx_power_dbm + cfg.link.tx_gain_db + cfg.link.rx_gain_db
                  - pl - self.shadow.values_db)
        rx_mw = 10.0 ** (rx_dbm / 10.0)
        np.fill_diagonal(rx_mw, 0.0)
        self.rx_mw = rx_mw

    def _integrate_rssi(self, t_us: int) -> None:
        if t_us <= self._last_int_us:
            return
        occ_end = self._cur_tti * TTI_US + OCCUPIED_US
        hi = min(t_us, occ_end)
        if hi > self._last_int_us:
            self._rssi_acc += self.power_mw * (hi - self._last_int_us)
        self._last_int_us = t_us

    def _update_busy(self, t_us: int) -> None:
        busy_new = (self.power_mw + self.noise_mw) >= self.cca_mw
        if self.preamble_mw is not None:
            busy_new |= self._preamble_count > 0
        changed = np.nonzero(busy_new != self.busy)[0]
        if changed.size == 0:
            return
        self.busy = busy_new
        for i in changed:
            mac = self.macs[i]
            if mac is None:
                continue
            if self.cca_trace is not None:
                self.cca_trace[int(i)].append((t_us, bool(busy_new[i])))
            if busy_new[i]:
                mac.on_busy(t_us)
            else:
                mac.on_idle(t_us)

    def _begin_tx(self, node: int, cam: Cam, t_us: int, lte: bool) -> None:
        assert node not in self.active, "node already transmitting"
        self._integrate_rssi(t_us)
        dur = OCCUPIED_US if lte else airtime_us(cam.payload_bytes, self.cfg.csma)
        rec = TxRec(node, lte, cam, t_us, t_us + dur,
                    self.rx_mw[node], self.dist[node], self.n)
        for other in self.active.values():
            other.halfdup[node] = True
            rec.halfdup[other.tx] = True
        self.active[node] = rec
        self.power_mw = self.power_mw + rec.rx_mw
        if not lte and self.preamble_mw is not None:
            self._preamble_count += rec.rx_mw >= self.preamble_mw
        self._update_busy(t_us)
        self._push(rec.end_us, EV_TXEND, rec)
        if lte:
            self._blind_now[node] = True
            self.counters["tx_ltev2x"] += 1
        else:
            self.counters["tx_itsg5"] += 1
            if self.tx_starts is not None:
                self.tx_starts.append((t_us, node))

    def _end_tx(self, rec: TxRec, t_us: int) -> None:
        self._integrate_rssi(t_us)
        del self.active[rec.tx]
        count_at_lte = self.cfg.lte_rx_counts_itsg5_interference
        for other in self.active.values():
            w = t_us - max(rec.start_us, other.start_us)
            if w > 0:
                if rec.lte or not other.lte or count_at_lte:
                    other.interf_mw_us += rec.rx_mw * w
                if other.lte or not rec.lte or count_at_lte:
                    rec.interf_mw_us += other.rx_mw * w
        if self.active:
            power = np.zeros(self.n)
            for other in self.active.values():
                power += other.rx_mw
            self.power_mw = power
        else:
            self.power_mw = np.zeros(self.n)
        if not rec.lte and self.preamble_mw is not None:
            self._preamble_count -= rec.rx_mw >= self.preamble_mw
        self._update_busy(t_us)
        self._deliver(rec, t_us)
        mac = self.macs[rec.tx]
        if mac is not None:
            mac.on_tx_complete(t_us)

    def _deliver(self, rec: TxRec, t_us: int) -> None:
        if rec.lte and self.sps:
            offset = (rec.start_us // TTI_US) % self.cfg.sps.selection_window_ttis
            now_tti = t_us // TTI_US
            cand = self.lte_ids[(rec.rx_mw[self.lte_ids] >= self.decode_mw)
                                & ~rec.halfdup[self.lte_ids]]
            for i in cand:
                if int(i) != rec.tx:
                    self.sps[int(i)].note_decode(
                        rec.tx, offset, 10.0 * np.log10(rec.rx_mw[i]), now_tti)

        if rec.cam.t_gen_us < self.warmup_us:
            return
        self.counters["counted_tx"] += 1
        mask = (rec.rx_mw >= self.relevance_mw) & (rec.dist_m < self.cfg.max_distance_m)
        mask[rec.tx] = False
        idx = np.nonzero(mask)[0]
        if idx.size == 0:
            return
        dur = rec.end_us - rec.start_us
        denom = self.noise_mw + rec.interf_mw_us[idx] / dur
        sinr_db = 10.0 * np.log10(rec.rx_mw[idx] / denom)
        per = self.curve[rec.lte].lookup(sinr_db)
        draws = self.rng["reception"].random(idx.size)
        halfdup = rec.halfdup[idx]
        success = (draws < 1.0 - per) & ~halfdup
        self.hist.record_many(TECH_INDEX[Tech.LTEV2X if rec.lte else Tech.ITSG5],
                              rec.dist_m[idx], success)
        self.counters["rx_opportunities"] += int(idx.size)
        self.counters["rx_success"] += int(success.sum())
        self.counters["rx_halfduplex"] += int(halfdup.sum())

    def _on_tti(self, tti: int, t_us: int) -> None:
        self._integrate_rssi(t_us)
        if tti > 0:
            avg_mw = self._rssi_acc / OCCUPIED_US + self.noise_mw
            self.history.finalize(tti - 1, avg_mw, self._blind_now.copy())
        self._rssi_acc.fill(0.0)
        self._blind_now.fill(False)
        self._cur_tti = tti
        self._last_int_us = t_us

        if self.cfg.lte_continuous_tx:
            for i in self.lte_ids:
                cam = Cam(int(i), tti, t_us, self.cfg.traffic.payload_bytes)
                self._begin_tx(int(i), cam, t_us, lte=True)
        else:
            for node, seq in self.lte_sched.pop(tti, ()):
                cam = self.lte_pending.get(node)
                if cam is None or cam.seq != seq:
                    self.counters["lte_silent_periods"] += 1
                    continue
                del self.lte_pending[node]
                self._begin_tx(node, cam, t_us, lte=True)

        if (tti + 1) * TTI_US <= self.end_us:
            self._push((tti + 1) * TTI_US, EV_TTI, tti + 1)

    def _on_cam(self, node: int, t_us: int) -> None:
        src = self.sources[node]
        cam = src.generate(t_us)
        self.counters["cams_generated"] += 1
        if src.next_time_us < self.end_us:
            self._push(src.next_time_us, EV_CAM, node)
        mac = self.macs[node]
        if mac is not None:
            mac.on_packet_ready(cam, t_us)
            return
        sched = self.sps[node]
        tx_tti = sched.on_generation(t_us // TTI_US)
        if node in self.lte_pending:
            self.counters["cams_dropped"] += 1
        self.lte_pending[node] = cam
        self.lte_sched.setdefault(tx_tti, []).append((node, cam.seq))

    def _on_mobility(self, t_us: int) -> None:
        cfg = self.cfg
        dt_s = cfg.mobility_update_ms / 1000.0
        self.pos = advance_positions(self.pos, self.dirsign, cfg.road.speed_mps,
                                     dt_s, cfg.road.length_m)
        moved = 2.0 * cfg.road.speed_mps * dt_s
        self.shadow.step(moved, self.rng["shadowing"])
        self._rebuild_geometry()
        nxt = t_us + cfg.mobility_update_ms * 1000
        if nxt <= self.end_us:
            self._push(nxt, EV_MOBILITY, None)

    def run(self) -> RunLog:
        heap = self.heap
        while heap:
            t, kind, _, payload = heapq.heappop(heap)
            assert t >= self.now, "event processed out of time order"
            self.now = t
            if kind == EV_RUNEND:
                break
            if kind == EV_TXEND:
                self._end_tx(payload, t)
            elif kind == EV_MACTIMER:
                node, token = payload
                mac = self.macs[node]
                if mac is not None:
                    mac.on_timer(t, token)
            elif kind == EV_CAM:
                self._on_cam(payload, t)
            elif kind == EV_TTI:
                self._on_tti(payload, t)
            elif kind == EV_MOBILITY:
                self._on_mobility(t)
        drops = sum(m.drops for m in self.macs if m is not None)
        self.counters["cams_dropped"] += drops
        return RunLog(
            histogram=self.hist,
            counters=dict(self.counters),
            n_vehicles=self.n,
            cca_trace=self.cca_trace,
            tx_starts=self.tx_starts,
            selections=({int(i): s.selection_log for i, s in self.sps.items()}
                        if self.cfg.record_selections else None),
        )


def run(config: EngineConfig, seed, vehicles: list[Vehicle] | None = None) -> RunLog:
    """Simulate warm-up plus measurement time; same (config, seed) gives an
    identical RunLog."""
    return Simulation(config, seed, vehicles).run()
