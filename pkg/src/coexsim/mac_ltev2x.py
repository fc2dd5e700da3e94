"""Sidelink Mode 4 scheduler: TTI grid, RSSI sensing history, SPS resource selection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TTI_US = 1000
OCCUPIED_US = 929
GUARD_US = 71


@dataclass(frozen=True)
class TtiGrid:
    """Globally synchronized 1 ms scheduling grid; the last OFDM symbol of
    every TTI (71 us) is an unused guard."""

    tti_us: int = TTI_US
    occupied_us: int = OCCUPIED_US
    guard_us: int = GUARD_US

    def index(self, time_us: int) -> int:
        return time_us // self.tti_us

    def start_us(self, tti: int) -> int:
        return tti * self.tti_us


@dataclass
class SpsConfig:
    keep_probability: float = 0.5
    counter_min: int = 5
    counter_max: int = 15
    sensing_window_ttis: int = 1000
    selection_window_ttis: int = 100
    best_fraction: float = 0.2
    decode_threshold_dbm: float = -110.0
    reservation_expiry_ttis: int = 1000

    def validate(self) -> list[str]:
        errors = []
        if not 0.0 <= self.keep_probability <= 1.0:
            errors.append("keep_probability must be in [0,1]")
        if not 1 <= self.counter_min <= self.counter_max:
            errors.append("reselection counter range must satisfy 1 <= min <= max")
        if self.sensing_window_ttis < self.selection_window_ttis:
            errors.append("sensing_window_ttis must cover the selection window")
        if not 0.0 < self.best_fraction <= 1.0:
            errors.append("best_fraction must be in (0,1]")
        return errors


class SensingHistory:
    """Per-node average RSSI (mW) per TTI over the trailing sensing window.

    Rows are a ring buffer keyed by tti % window. Unwritten or not yet
    finalized TTIs read back as the noise floor and non-blind, which doubles
    as the cold-start prior. Blind rows mark TTIs the node spent transmitting.
    """

    def __init__(self, n_nodes: int, noise_mw: float, window_ttis: int = 1000):
        self.window = window_ttis
        self.noise_mw = noise_mw
        self.rssi_mw = np.full((window_ttis, n_nodes), noise_mw)
        self.blind = np.zeros((window_ttis, n_nodes), dtype=bool)
        self.last_finalized_tti = -1

    def finalize(self, tti: int, avg_mw: np.ndarray, blind: np.ndarray) -> None:
        row = tti % self.window
        self.rssi_mw[row] = avg_mw
        self.blind[row] = blind
        self.last_finalized_tti = tti

    def lag_views(self, candidates: np.ndarray, node: int,
                  n_lags: int, lag_step: int) -> tuple[np.ndarray, np.ndarray]:
        """RSSI values and blind flags at candidate - k*lag_step for k=1..n_lags."""
        lags = lag_step * np.arange(1, n_lags + 1)
        ttis = candidates[:, None] - lags[None, :]
        valid = (ttis >= 0) & (ttis <= self.last_finalized_tti)
        rows = ttis % self.window
        vals = np.where(valid, self.rssi_mw[rows, node], self.noise_mw)
        blind = np.where(valid, self.blind[rows, node], False)
        return vals, blind


@dataclass
class SelectionResult:
    chosen_tti: int
    best_ttis: np.ndarray
    pool_ttis: np.ndarray


class SpsScheduler:
    """Semi-persistent scheduling state machine for one LTE node.

    A resource is one whole TTI; the selected offset repeats every
    selection-window (100 TTIs = one beacon period). The reselection counter
    decrements at each CAM generation; on expiry the offset is kept with the
    keep probability, otherwise reselected from the sensed best candidates.
    """

    def __init__(self, node_id: int, cfg: SpsConfig, history: SensingHistory,
                 rng: np.random.Generator):
        self.node = node_id
        self.cfg = cfg
        self.history = history
        self.rng = rng
        self.selected_offset: int | None = None
        self.counter = 0
        self.reservations: dict[int, tuple[int, float, int]] = {}
        self.next_tx_tti: int | None = None
        self.expiries = 0
        self.reselections = 0
        self.last_selection: SelectionResult | None = None
        self.selection_log: list[SelectionResult] | None = None

    def _draw_counter(self) -> int:
        return int(self.rng.integers(self.cfg.counter_min, self.cfg.counter_max + 1))

    def _next_occurrence(self, now_tti: int) -> int:
        """Smallest TTI strictly after now matching the selected offset."""
        period = self.cfg.selection_window_ttis
        return now_tti + 1 + (self.selected_offset - now_tti - 1) % period

    def reserved_offset_mask(self, now_tti: int) -> np.ndarray:
        period = self.cfg.selection_window_ttis
        mask = np.zeros(period, dtype=bool)
        expired = [n for n, (_, _, seen) in self.reservations.items()
                   if now_tti - seen > self.cfg.reservation_expiry_ttis]
        for n in expired:
            del self.reservations[n]
        for offset, power_dbm, _ in self.reservations.values():
            if power_dbm >= self.cfg.decode_threshold_dbm:
                mask[offset] = True
        return mask

    def select_resource(self, now_tti: int) -> SelectionResult:
        """Pick a TTI among the least-utilized fifth of the next period.

        Candidates with any blind lag or a live decoded reservation are
        excluded first; survivors are ranked by linear-mean RSSI across the
        period-spaced lags (blind entries skipped), ties broken by a uniform
        shuffle before a stable sort. If exclusion removes everything, ranking
        falls back to all candidates that are not fully blind.
        """
        cfg = self.cfg
        period = cfg.selection_window_ttis
        candidates = np.arange(now_tti + 1, now_tti + 1 + period)
        vals, blind = self.history.lag_views(
            candidates, self.node, cfg.sensing_window_ttis // period, period)
        any_blind = blind.any(axis=1)
        fully_blind = blind.all(axis=1)
        n_heard = np.maximum((~blind).sum(axis=1), 1)
        scores = np.where(blind, 0.0, vals).sum(axis=1) / n_heard

        reserved = self.reserved_offset_mask(now_tti)[candidates % period]
        keep = ~any_blind & ~reserved
        if not keep.any():
            keep = ~fully_blind
        if not keep.any():
            keep = np.ones_like(fully_blind)

        pool = candidates[keep]
        pool_scores = scores[keep]
        perm = self.rng.permutation(pool.size)
        order = np.argsort(pool_scores[perm], kind="stable")
        best_n = min(max(1, round(cfg.best_fraction * period)), pool.size)
        best = pool[perm[order[:best_n]]]
        chosen = int(best[self.rng.integers(best_n)])

        self.selected_offset = chosen % period
        self.next_tx_tti = chosen
        self.reselections += 1
        self.last_selection = SelectionResult(chosen, np.sort(best), pool)
        if self.selection_log is not None:
            self.selection_log.append(self.last_selection)
        return self.last_selection

    def on_generation(self, now_tti: int) -> int:
        """Advance the SPS counter at a CAM generation; returns the TTI that
        will carry this packet."""
        if self.selected_offset is None:
            self.select_resource(now_tti)
            self.counter = self._draw_counter()
        else:
            self.counter -= 1
            if self.counter <= 0:
                self.expiries += 1
                if self.rng.random() < self.cfg.keep_probability:
                    self.next_tx_tti = self._next_occurrence(now_tti)
                else:
                    self.select_resource(now_tti)
                self.counter = self._draw_counter()
            else:
                self.next_tx_tti = self._next_occurrence(now_tti)
        return self.next_tx_tti

    def note_decode(self, tx_node: int, offset: int, power_dbm: float,
                    now_tti: int) -> None:
        """Record a decoded reservation from a received control message."""
        if power_dbm >= self.cfg.decode_threshold_dbm:
            self.reservations[tx_node] = (offset, power_dbm, now_tti)
