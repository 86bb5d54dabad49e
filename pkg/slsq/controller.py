"""
The controller: decodes symbols and drives the plant between them.

The controller mirrors the coder's radius bookkeeping from the transmitted
b_k alone, reconstructs ``xi_{kn} = r_k eta_k`` at block boundaries and
runs the closed-loop model

    xhat' = (A_i + B_i K_i) xhat,   i = last received mode,

over each sampling interval, applying ``u(t) = K_i xhat(t)``. At each
intermediate instant the model state carries over:
``xi_{kn+j} = xhat_{kn+j-1}((kn+j) tau_s)``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import expm

from . import quantizer as qmod
from .design import CoderControllerConfig, DerivedConstants, beta_k, derived_constants
from .quantizer import BallQuantizer
from .symbols import BlockSymbol, ModeSymbol
from .system import FeedbackLaw, FlowCache, SwitchedLinearSystem, closed_loop_matrix
from .util import ProtocolError


@dataclass(frozen=True, eq=False)
class InputSegment:
    """
    The input on ``[tick_start, tick_end)``: ``u(t) = K xhat(t)`` with
    ``xhat' = G xhat``, ``xhat(tick_start) = xhat0`` and ``G = A_i + B_i K_i``.
    """
    tick_start: int
    tick_end: int
    mode: int
    xhat0: np.ndarray
    K: np.ndarray
    G: np.ndarray
    base_tick: float

    @property
    def t_start(self) -> float:
        return self.tick_start * self.base_tick

    @property
    def t_end(self) -> float:
        return self.tick_end * self.base_tick

    def xhat_at(self, t: float) -> np.ndarray:
        """Model state at time ``t`` in ``[t_start, t_end]``."""
        if not self.t_start <= t <= self.t_end:
            raise ValueError(f"t={t} outside segment [{self.t_start}, {self.t_end}]")
        return expm(self.G * (t - self.t_start)) @ self.xhat0


def input_at(segment: InputSegment, t: float) -> np.ndarray:
    """u(t) = K_i xhat(t) for t in ``[t_start, t_end)``."""
    if not segment.t_start <= t < segment.t_end:
        raise ValueError(f"t={t} outside segment [{segment.t_start}, {segment.t_end})")
    if t == segment.t_start:
        return segment.K @ segment.xhat0
    return segment.K @ segment.xhat_at(t)


@dataclass(frozen=True, eq=False)
class ControllerState:
    """
    ``k`` counts block symbols received, ``j`` is the index of the current
    sampling interval inside the block (-1 before the first symbol).
    """
    config: CoderControllerConfig
    dc: DerivedConstants
    quantizer: BallQuantizer
    sys: SwitchedLinearSystem
    fb: FeedbackLaw
    cache: FlowCache
    k: int
    j: int
    r_prev: float
    r_k: float
    beta: float
    xi: Optional[np.ndarray]
    segment: Optional[InputSegment]

    @property
    def next_tick(self) -> int:
        cfg = self.config
        if self.k == 0:
            return 0
        return ((self.k - 1) * cfg.n + self.j + 1) * cfg.tau_s_ticks

    @property
    def expects_block(self) -> bool:
        return self.k == 0 or self.j == self.config.n - 1


def controller_init(cfg: CoderControllerConfig, sys: SwitchedLinearSystem, fb: FeedbackLaw,
                    cache: Optional[FlowCache] = None) -> ControllerState:
    if sys.d != cfg.d or sys.N != cfg.mode_count:
        raise ValueError(
            f"system (d={sys.d}, N={sys.N}) does not match config (d={cfg.d}, N={cfg.mode_count})"
        )
    return ControllerState(
        config=cfg, dc=derived_constants(cfg), quantizer=qmod.build(cfg.d, cfg.alpha),
        sys=sys, fb=fb, cache=cache if cache is not None else FlowCache(cfg.base_tick),
        k=0, j=-1, r_prev=cfg.r0, r_k=cfg.r0, beta=1.0, xi=None, segment=None,
    )


def _check_cadence(state: ControllerState, sym, block: bool):
    if block != state.expects_block:
        want = "a block" if state.expects_block else "a mode-only"
        raise ProtocolError(f"expected {want} symbol at tick {state.next_tick}, got {sym!r}")
    if sym.tick != state.next_tick:
        raise ProtocolError(f"symbol timestamp {sym.tick} != expected {state.next_tick}")
    if not 0 <= sym.mode < state.sys.N:
        raise ProtocolError(f"mode {sym.mode} out of range at tick {sym.tick}")


def _segment(state: ControllerState, tick: int, mode: int, xhat0: np.ndarray) -> InputSegment:
    return InputSegment(
        tick_start=tick, tick_end=tick + state.config.tau_s_ticks, mode=mode, xhat0=xhat0,
        K=state.fb.K(mode), G=closed_loop_matrix(state.sys, state.fb, mode),
        base_tick=state.config.base_tick,
    )


def controller_block_step(state: ControllerState, sym: BlockSymbol):
    """
    Decode a block symbol: update r_k from the transmitted b_k (block 0
    keeps r_0), reconstruct ``xi = r_k point(eta)`` and start a segment in
    the decoded mode.

    Returns
    -------
    (InputSegment, ControllerState)
    """
    if not isinstance(sym, BlockSymbol):
        raise ProtocolError(f"expected a block symbol, got {sym!r}")
    _check_cadence(state, sym, block=True)
    cfg = state.config
    if not 0 <= sym.nmissed <= cfg.n:
        raise ProtocolError(f"nmissed={sym.nmissed} out of range [0, {cfg.n}] at tick {sym.tick}")

    if state.k == 0:
        if sym.nmissed != 0:
            raise ProtocolError(f"block 0 must carry nmissed=0, got {sym.nmissed}")
        beta, r_prev, r_k = 1.0, cfg.r0, cfg.r0
    else:
        r_prev = state.r_k
        beta = beta_k(sym.nmissed, state.dc, cfg.cert.mu1)
        r_k = beta * r_prev

    xi = r_k * state.quantizer.point(sym.eta)
    seg = _segment(state, sym.tick, sym.mode, xi)
    return seg, dataclasses.replace(state, k=state.k + 1, j=0, r_prev=r_prev, r_k=r_k,
                                    beta=beta, xi=xi, segment=seg)


def controller_mode_step(state: ControllerState, sym: ModeSymbol):
    """
    Carry the model state over to the next sampling interval and start a
    segment in the newly received mode.

    Returns
    -------
    (InputSegment, ControllerState)
    """
    if not isinstance(sym, ModeSymbol):
        raise ProtocolError(f"expected a mode-only symbol, got {sym!r}")
    _check_cadence(state, sym, block=False)
    prev = state.segment
    E = state.cache.get(("model", prev.mode), prev.G, prev.tick_end - prev.tick_start)
    xi = E @ prev.xhat0
    seg = _segment(state, sym.tick, sym.mode, xi)
    return seg, dataclasses.replace(state, j=state.j + 1, xi=xi, segment=seg)


def controller_step(state: ControllerState, sym):
    """Dispatch on the symbol kind."""
    if isinstance(sym, BlockSymbol):
        return controller_block_step(state, sym)
    return controller_mode_step(state, sym)
