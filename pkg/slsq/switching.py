"""
Switching signals on an integer tick grid.

A signal is an initial mode plus a strictly increasing list of
``(tick, new_mode)`` events; ``sigma(t)`` is the mode of the last event at
or before ``t`` (right-continuous). Every time argument of this module is
an integer tick count; ``base_tick`` converts ticks to time units.
"""

from __future__ import annotations

import logging
from collections import namedtuple
from dataclasses import dataclass
from typing import Mapping

import numpy as np
import pandas as pd

from .util import ConfigError, ceil_ticks, to_ticks

logger = logging.getLogger(__name__)

# slack on the ADT inequality (in switches)
ADT_TOL = 1e-9

AdtCheck = namedtuple("AdtCheck", ["admissible", "excess", "window"])
MismatchFlags = namedtuple("MismatchFlags", ["flags", "nstar"])


@dataclass(frozen=True)
class AdtBudget:
    """Average dwell time ``tau_a`` and chatter bound ``N0``."""
    tau_a: float
    N0: float

    def __post_init__(self):
        if not self.tau_a > 0:
            raise ValueError(f"tau_a must be positive, got {self.tau_a}")
        if not self.N0 >= 0:
            raise ValueError(f"N0 must be non-negative, got {self.N0}")

    @property
    def effective_N0(self) -> float:
        # a budget with N0 < 1 forbids every switch; generators use 1 instead
        return max(self.N0, 1.0)

    def admits(self, switches: int, duration: float) -> bool:
        return switches <= self.N0 + duration / self.tau_a + ADT_TOL


@dataclass(frozen=True, eq=False)
class SwitchingSignal:
    """
    Piecewise-constant, right-continuous mode trajectory.

    Parameters
    ----------
    initial_mode : int
        Mode on ``[0, first event)``.
    event_ticks : array of int
        Strictly increasing switch times in ``(0, horizon]``.
    event_modes : array of int
        Mode entered at each switch; differs from the preceding mode.
    horizon : int
        Last tick covered by the signal.
    base_tick : float
        Duration of one tick.
    """
    initial_mode: int
    event_ticks: np.ndarray
    event_modes: np.ndarray
    horizon: int
    base_tick: float

    def __post_init__(self):
        ticks = np.asarray(self.event_ticks, dtype=np.int64).reshape(-1)
        modes = np.asarray(self.event_modes, dtype=np.int64).reshape(-1)
        if ticks.shape != modes.shape:
            raise ValueError("event_ticks and event_modes must have equal length")
        if self.horizon < 0:
            raise ValueError(f"horizon must be non-negative, got {self.horizon}")
        if not self.base_tick > 0:
            raise ValueError(f"base_tick must be positive, got {self.base_tick}")
        if len(ticks):
            if np.any(np.diff(ticks) <= 0):
                raise ValueError("event ticks must be strictly increasing")
            if ticks[0] <= 0 or ticks[-1] > self.horizon:
                raise ValueError("event ticks must lie in (0, horizon]")
            prev = np.concatenate([[self.initial_mode], modes[:-1]])
            if np.any(prev == modes):
                raise ValueError("every event must change the mode")
        if self.initial_mode < 0 or np.any(modes < 0):
            raise ValueError("mode indices must be non-negative")
        ticks.flags.writeable = False
        modes.flags.writeable = False
        object.__setattr__(self, "event_ticks", ticks)
        object.__setattr__(self, "event_modes", modes)
        object.__setattr__(self, "initial_mode", int(self.initial_mode))
        object.__setattr__(self, "horizon", int(self.horizon))

    @classmethod
    def constant(cls, mode: int, horizon: int, base_tick: float) -> "SwitchingSignal":
        return cls(mode, np.zeros(0, np.int64), np.zeros(0, np.int64), horizon, base_tick)

    @classmethod
    def from_times(cls, initial_mode, events, horizon: float, base_tick: float) -> "SwitchingSignal":
        """Build from ``[(time, mode), ...]`` with times in time units."""
        ticks = [to_ticks(t, base_tick, "switch time") for t, _ in events]
        modes = [m for _, m in events]
        return cls(initial_mode, np.array(ticks, np.int64), np.array(modes, np.int64),
                   to_ticks(horizon, base_tick, "horizon"), base_tick)

    def __len__(self):
        return len(self.event_ticks)

    def mode_at(self, tick) -> np.ndarray:
        """sigma at the given tick(s)."""
        idx = np.searchsorted(self.event_ticks, tick, side="right") - 1
        modes = np.concatenate([[self.initial_mode], self.event_modes])
        return modes[idx + 1]

    def switch_ticks_in(self, start: int, stop: int) -> np.ndarray:
        """Event ticks e with start < e < stop."""
        lo = np.searchsorted(self.event_ticks, start, side="right")
        hi = np.searchsorted(self.event_ticks, stop, side="left")
        return self.event_ticks[lo:hi]

    def same_events(self, other: "SwitchingSignal") -> bool:
        return (self.initial_mode == other.initial_mode
                and np.array_equal(self.event_ticks, other.event_ticks)
                and np.array_equal(self.event_modes, other.event_modes))


def count_switches(sig: SwitchingSignal, s: int, t: int) -> int:
    """Number of switches of ``sig`` in the half-open window ``[s, t)``."""
    if s > t:
        raise ValueError(f"count_switches needs s <= t, got s={s}, t={t}")
    lo = np.searchsorted(sig.event_ticks, s, side="left")
    hi = np.searchsorted(sig.event_ticks, t, side="left")
    return int(hi - lo)


def is_adt_admissible(sig: SwitchingSignal, budget: AdtBudget) -> AdtCheck:
    """
    Check ``N(t, s) <= N0 + (t - s) / tau_a`` on every window.

    The excess ``N(t, s) - N0 - (t - s)/tau_a`` is maximized with ``s`` at a
    switch time and ``t`` just after a later (or the same) switch, so only
    those O(k^2) windows are evaluated.

    Returns
    -------
    AdtCheck
        ``admissible``; ``excess`` of the worst window; ``window`` as
        ``(s_tick, t_tick)`` meaning ``[s, t]`` (i.e. t taken just above the
        last switch), or None for a constant signal.
    """
    k = len(sig.event_ticks)
    if k == 0:
        return AdtCheck(True, -float(budget.N0), None)
    T = sig.event_ticks * sig.base_tick
    i, j = np.triu_indices(k)
    excess = (j - i + 1) - budget.N0 - (T[j] - T[i]) / budget.tau_a
    w = int(np.argmax(excess))
    worst = float(excess[w])
    window = (int(sig.event_ticks[i[w]]), int(sig.event_ticks[j[w]]))
    return AdtCheck(worst <= ADT_TOL, worst, window)


def generate_adt_signal(budget: AdtBudget, horizon: int, mode_count: int, seed,
                        base_tick: float) -> SwitchingSignal:
    """
    Random ADT-admissible signal from a token bucket.

    The bucket holds at most ``budget.effective_N0`` tokens, starts full and
    refills at ``1/tau_a`` tokens per time unit; a switch spends one full
    token. Candidate gaps are exponential with mean ``tau_a``, snapped up to
    the tick grid and delayed until a token is available. The new mode is
    uniform among the other modes.

    In any window [s, t) the number of switches is at most the tokens held
    at s plus the refill, i.e. ``effective_N0 + (t - s)/tau_a``.
    """
    rng = np.random.default_rng(seed)
    if mode_count < 1:
        raise ValueError(f"mode_count must be >= 1, got {mode_count}")
    mode = int(rng.integers(mode_count))
    if mode_count == 1:
        return SwitchingSignal.constant(mode, horizon, base_tick)

    initial = mode
    capacity = budget.effective_N0
    tau_a = budget.tau_a
    tokens, t_fill = capacity, 0.0
    last = 0
    ticks, modes = [], []
    while True:
        cand = max(last + 1, ceil_ticks(last * base_tick + rng.exponential(tau_a), base_tick))
        avail = tokens + (cand * base_tick - t_fill) / tau_a
        if avail < 1.0:
            cand = max(cand, ceil_ticks(t_fill + (1.0 - tokens) * tau_a, base_tick))
        if cand > horizon:
            break
        tokens = min(capacity, tokens + (cand * base_tick - t_fill) / tau_a) - 1.0
        t_fill = cand * base_tick
        mode = (mode + 1 + int(rng.integers(mode_count - 1))) % mode_count
        ticks.append(cand)
        modes.append(mode)
        last = cand

    return SwitchingSignal(initial, np.array(ticks, np.int64), np.array(modes, np.int64), horizon, base_tick)


def generate_sigma_n(n: int, horizon: int, base_tick: float) -> SwitchingSignal:
    """
    The fast-oscillating signal sigma_n: mode 0 on [0, 1/n) + 2N/n and mode
    1 on [1/n, 2/n) + 2N/n, i.e. a switch at every k/n, k >= 1.

    ``1/n`` must be a whole number of ticks.
    """
    if n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    half = to_ticks(1.0 / n, base_tick, f"1/n (n={n})")
    ticks = np.arange(half, horizon + 1, half, dtype=np.int64)
    modes = np.arange(1, len(ticks) + 1, dtype=np.int64) % 2
    return SwitchingSignal(0, ticks, modes, horizon, base_tick)


def sample_and_hold(sig: SwitchingSignal, tau_s: int) -> SwitchingSignal:
    """sigma_hat(t) = sigma(j tau_s) for t in [j tau_s, (j+1) tau_s)."""
    if tau_s < 1:
        raise ValueError(f"tau_s must be a positive tick count, got {tau_s}")
    samples = np.arange(0, sig.horizon + 1, tau_s, dtype=np.int64)
    modes = sig.mode_at(samples)
    change = np.flatnonzero(modes[1:] != modes[:-1]) + 1
    return SwitchingSignal(int(modes[0]), samples[change], modes[change], sig.horizon, sig.base_tick)


def _check_block(sig: SwitchingSignal, tau_s: int, n: int, k: int):
    if tau_s < 1 or n < 1 or k < 0:
        raise ValueError(f"invalid block parameters tau_s={tau_s}, n={n}, k={k}")
    if (k + 1) * n * tau_s > sig.horizon:
        raise ValueError(f"block {k} ends after the signal horizon {sig.horizon}")


def mismatch_flags(sig: SwitchingSignal, tau_s: int, n: int, k: int) -> MismatchFlags:
    """
    Per-interval switch flags of block ``k`` and their sum.

    ``flags[j] = 1`` iff sigma switches at least once in
    ``[(kn+j) tau_s, (kn+j+1) tau_s)``; ``nstar = sum(flags)``.
    """
    _check_block(sig, tau_s, n, k)
    starts = (k * n + np.arange(n + 1, dtype=np.int64)) * tau_s
    pos = np.searchsorted(sig.event_ticks, starts, side="left")
    flags = np.diff(pos) >= 1
    return MismatchFlags(flags, int(flags.sum()))


def mismatch_time(sig: SwitchingSignal, tau_s: int, n: int, k: int) -> float:
    """Measure of {t in block k : sigma_hat(t) != sigma(t)}, in time units."""
    _check_block(sig, tau_s, n, k)
    total = 0
    for j in range(k * n, (k + 1) * n):
        start, stop = j * tau_s, (j + 1) * tau_s
        inner = sig.switch_ticks_in(start, stop)
        if len(inner) == 0:
            continue
        held = sig.mode_at(start)
        edges = np.concatenate([inner, [stop]])
        modes = sig.mode_at(inner)
        total += int(np.sum(np.diff(edges)[modes != held]))
    return total * sig.base_tick


###
### Serialization
###

def signal_to_document(sig: SwitchingSignal) -> dict:
    return {
        "base_tick": sig.base_tick,
        "horizon": sig.horizon,
        "initial_mode": sig.initial_mode,
        "events": [[int(t), int(m)] for t, m in zip(sig.event_ticks, sig.event_modes)],
    }


def signal_from_document(doc: Mapping) -> SwitchingSignal:
    try:
        events = doc.get("events", [])
        ticks = np.array([e[0] for e in events], dtype=np.int64)
        modes = np.array([e[1] for e in events], dtype=np.int64)
        horizon = doc.get("horizon", int(ticks[-1]) if len(ticks) else 0)
        return SwitchingSignal(int(doc["initial_mode"]), ticks, modes, int(horizon), float(doc["base_tick"]))
    except (KeyError, IndexError, TypeError, ValueError) as e:
        raise ConfigError(f"Invalid switching signal document: {e}") from e


def signal_to_csv(sig: SwitchingSignal, path: str) -> None:
    """Write the step function as ``t,sigma`` rows (one per constant piece,
    plus a closing row at the horizon)."""
    ticks = np.concatenate([[0], sig.event_ticks, [sig.horizon]])
    modes = np.concatenate([[sig.initial_mode], sig.event_modes, [sig.mode_at(sig.horizon)]])
    pd.DataFrame({"t": ticks * sig.base_tick, "sigma": modes}).to_csv(path, index=False)
