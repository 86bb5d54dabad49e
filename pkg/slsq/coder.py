"""
The coder: observes the plant at sampling instants and emits symbols.

At t_k = k n tau_s the coder picks the smallest b in {0..n} with
``||x(t_k)|| <= beta(b) r_{k-1}``, sets ``r_k = beta(b) r_{k-1}`` and sends
``(Q(x / r_k), sigma(t_k), b)``. At the n-1 sampling instants inside the
block it sends the current mode only. Block 0 uses ``b_0 = 0`` and the
configured ``r_0``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from . import quantizer as qmod
from . import symbols
from .design import CoderControllerConfig, DerivedConstants, beta_k, derived_constants
from .quantizer import BallQuantizer
from .symbols import BlockSymbol, ModeSymbol


class SoundnessViolation(RuntimeError):
    """No b in {0..n} bounds the observed state: the radius bookkeeping broke."""

    def __init__(self, k, x_norm, r_prev, beta_max):
        super().__init__(
            f"block {k}: ||x|| = {x_norm:.6g} exceeds beta(n) r_prev = {beta_max:.6g} * {r_prev:.6g}"
        )
        self.k = k
        self.x_norm = x_norm
        self.r_prev = r_prev
        self.beta_max = beta_max


@dataclass(frozen=True)
class CoderState:
    """
    k is the index of the next block symbol; ``r_k`` and ``beta`` are the
    values of the last block sent (``r_0`` and 1 before block 0).
    """
    config: CoderControllerConfig
    dc: DerivedConstants
    quantizer: BallQuantizer
    k: int
    r_prev: float
    r_k: float
    beta: float
    nmissed: int


def coder_init(cfg: CoderControllerConfig) -> CoderState:
    return CoderState(
        config=cfg, dc=derived_constants(cfg), quantizer=qmod.build(cfg.d, cfg.alpha),
        k=0, r_prev=cfg.r0, r_k=cfg.r0, beta=1.0, nmissed=0,
    )


def coder_block_step(state: CoderState, x_obs, mode_obs: int):
    """
    Emit the block symbol of block ``state.k``.

    Returns
    -------
    (BlockSymbol, CoderState)

    Raises
    ------
    SoundnessViolation
        If no b in {0..n} satisfies ``||x_obs|| <= beta(b) r_{k-1}``
        (for k = 0: if ``||x_obs|| > r_0``).
    """
    cfg, dc = state.config, state.dc
    x_obs = np.asarray(x_obs, dtype=float)
    x_norm = float(np.linalg.norm(x_obs))
    k = state.k

    if k == 0:
        if x_norm > cfg.r0:
            raise SoundnessViolation(0, x_norm, cfg.r0, 1.0)
        b, beta, r_prev, r_k = 0, 1.0, cfg.r0, cfg.r0
    else:
        r_prev = state.r_k
        for b in range(cfg.n + 1):
            beta = beta_k(b, dc, cfg.cert.mu1)
            if x_norm <= beta * r_prev:
                break
        else:
            raise SoundnessViolation(k, x_norm, r_prev, beta)
        r_k = beta * r_prev

    eta, _ = state.quantizer.quantize(x_obs / r_k)
    sym = BlockSymbol(tick=k * cfg.block_ticks, eta=eta, mode=int(mode_obs), nmissed=b)
    return sym, dataclasses.replace(state, k=k + 1, r_prev=r_prev, r_k=r_k, beta=beta, nmissed=b)


def coder_mode_step(state: CoderState, mode_obs: int, j: int) -> ModeSymbol:
    """Mode-only symbol at ``(k n + j) tau_s`` of the last block sent, 1 <= j <= n-1."""
    cfg = state.config
    if state.k == 0:
        raise ValueError("no block symbol has been sent yet")
    if not 1 <= j <= cfg.n - 1:
        raise ValueError(f"j must be in [1, {cfg.n - 1}], got {j}")
    return ModeSymbol(tick=((state.k - 1) * cfg.n + j) * cfg.tau_s_ticks, mode=int(mode_obs))


def bit_cost(sym, cfg: CoderControllerConfig, mode_count: int = None) -> float:
    """Information content of a symbol: log2 of its alphabet size."""
    N = cfg.mode_count if mode_count is None else mode_count
    if isinstance(sym, BlockSymbol):
        return math.log2(cfg.m_hat) + math.log2(cfg.n + 1) + math.log2(N)
    return math.log2(N)


def wire_bits(sym, cfg: CoderControllerConfig, m: int = None) -> int:
    """Bits of the fixed-width wire encoding (``m`` defaults to the built quantizer's size)."""
    if m is None:
        m = qmod.build(cfg.d, cfg.alpha).m
    return len(symbols.pack(sym, m, cfg.n, cfg.mode_count))
