"""
Closed-loop simulation of plant, coder and controller, and trace checks.

The timeline is the sampling grid ``j tau_s`` merged with the switch times
of the true signal. Between consecutive events the true mode and the
controller's model mode are constant, so the pair (x, xhat) is advanced
exactly by one matrix exponential of the augmented generator. At every
sampling instant the coder observes ``(x, sigma)`` and the controller
turns the resulting symbol into the next input segment; the model state
is reset to the controller's value there.

The run covers ``K = horizon // (n tau_s)`` full blocks plus the block
observation at ``t_K``.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import symbols as symmod
from .coder import SoundnessViolation, bit_cost, coder_block_step, coder_init, coder_mode_step, wire_bits
from .controller import InputSegment, controller_block_step, controller_init, controller_mode_step
from .design import CoderControllerConfig, DecayRates, decay_rates, derived_constants, InvalidState
from .schema import block_dtype, segment_dtype, trace_dtype
from .switching import (AdtBudget, AdtCheck, SwitchingSignal, count_switches, is_adt_admissible,
                        mismatch_flags, mismatch_time)
from .system import FeedbackLaw, FlowCache, SwitchedLinearSystem, augmented_matrix
from .util import struct_to_csv, struct_to_parquet

logger = logging.getLogger(__name__)

# slack on the per-block checks of verify_trace
TRACE_RTOL = 1e-12


@dataclass(eq=False)
class ClosedLoopTrace:
    """
    Everything recorded during one closed-loop run.

    ``samples`` has one row per sampling instant and per switch inside a
    sampling interval; ``blocks`` one row per block boundary; ``segments``
    one row per input segment. ``symbols`` is the symbol stream in order.
    """
    config: CoderControllerConfig
    x0: np.ndarray
    samples: np.ndarray
    blocks: np.ndarray
    segments: np.ndarray
    symbols: list
    admissibility: Optional[AdtCheck] = None
    violation: Optional[SoundnessViolation] = None
    rates: Optional[DecayRates] = None

    @property
    def full_blocks(self) -> int:
        """Number of blocks whose n intervals were all simulated."""
        return max(0, len(self.blocks) - 1)

    def total_bits(self, until_tick: Optional[int] = None) -> float:
        return sum(bit_cost(s, self.config) for s in self.symbols
                   if until_tick is None or s.tick < until_tick)

    def total_wire_bits(self) -> int:
        return sum(wire_bits(s, self.config) for s in self.symbols)

    def empirical_rate(self) -> float:
        """Bits sent during the full blocks, per time unit."""
        K = self.full_blocks
        if K == 0:
            return float("nan")
        cfg = self.config
        return self.total_bits(until_tick=K * cfg.block_ticks) / (K * cfg.block_time)

    def write(self, outdir: str, parquet: bool = False) -> list:
        """
        Write ``samples.csv``, ``blocks.csv``, ``segments.jsonl``,
        ``symbols.bin`` and ``symbols.jsonl`` (plus ``.parquet`` copies of the
        tables if requested). Returns the paths written.
        """
        os.makedirs(outdir, exist_ok=True)
        paths = []
        for name, arr in (("samples", self.samples), ("blocks", self.blocks)):
            p = os.path.join(outdir, f"{name}.csv")
            struct_to_csv(arr, p)
            paths.append(p)
            if parquet:
                p = os.path.join(outdir, f"{name}.parquet")
                struct_to_parquet(arr, p)
                paths.append(p)
        p = os.path.join(outdir, "segments.jsonl")
        write_segments_jsonl(self.segments, p)
        paths.append(p)
        for name, writer in (("symbols.bin", symmod.write_binary), ("symbols.jsonl", symmod.write_jsonl)):
            p = os.path.join(outdir, name)
            writer(self.symbols, p)
            paths.append(p)
        return paths


def segments_to_array(segments: List[InputSegment], d: int) -> np.ndarray:
    out = np.zeros(len(segments), dtype=segment_dtype(d))
    if segments:
        out["tick_start"] = [s.tick_start for s in segments]
        out["tick_end"] = [s.tick_end for s in segments]
        out["mode"] = [s.mode for s in segments]
        out["xhat0"] = np.array([s.xhat0 for s in segments])
    return out


def write_segments_jsonl(segments: np.ndarray, path: str) -> None:
    with open(path, "w") as f:
        for s in segments:
            f.write(json.dumps({
                "tick_start": int(s["tick_start"]), "tick_end": int(s["tick_end"]),
                "mode": int(s["mode"]), "xhat0": [float(v) for v in s["xhat0"]],
            }))
            f.write("\n")


def read_segments_jsonl(path: str, d: int) -> np.ndarray:
    with open(path) as f:
        rows = [json.loads(line) for line in f if line.strip()]
    out = np.zeros(len(rows), dtype=segment_dtype(d))
    for i, r in enumerate(rows):
        out["tick_start"][i] = r["tick_start"]
        out["tick_end"][i] = r["tick_end"]
        out["mode"][i] = r["mode"]
        out["xhat0"][i] = r["xhat0"]
    return out


class _Recorder:
    """Row accumulator for the samples table."""

    def __init__(self, d, c):
        self.d, self.c = d, c
        self.rows = []

    def add(self, tick, x, xhat, u, sigma, sigma_hat, block, r_k, beta, b):
        self.rows.append((tick, x.copy(), xhat.copy(), u, sigma, sigma_hat, block, r_k, beta, b))

    def to_array(self, base_tick) -> np.ndarray:
        out = np.zeros(len(self.rows), dtype=trace_dtype(self.d, self.c))
        if not self.rows:
            return out
        cols = list(zip(*self.rows))
        out["tick"] = cols[0]
        out["t"] = np.asarray(cols[0], dtype=float) * base_tick
        out["x"] = np.array(cols[1])
        out["xhat"] = np.array(cols[2])
        out["u"] = np.array(cols[3]).reshape(-1, self.c)
        out["sigma"] = cols[4]
        out["sigma_hat"] = cols[5]
        out["block"] = cols[6]
        out["r_k"] = cols[7]
        out["beta_k"] = cols[8]
        out["b_k"] = cols[9]
        return out


def run_closed_loop(cfg: CoderControllerConfig, sys: SwitchedLinearSystem, fb: FeedbackLaw,
                    sig: SwitchingSignal, x0, budget: Optional[AdtBudget] = None,
                    on_violation: str = "raise", cache: Optional[FlowCache] = None) -> ClosedLoopTrace:
    """
    Simulate the closed loop under ``sig`` from ``x0``.

    Parameters
    ----------
    budget : AdtBudget, optional
        If given, the signal is checked against it; an inadmissible signal
        is simulated anyway and logged.
    on_violation : {"raise", "record"}
        What to do when the coder finds no admissible b_k: re-raise the
        `SoundnessViolation`, or stop the run and keep it in the trace.
    """
    if on_violation not in ("raise", "record"):
        raise ValueError(f"on_violation must be 'raise' or 'record', got {on_violation!r}")
    if not math.isclose(sig.base_tick, cfg.base_tick, rel_tol=1e-12):
        raise ValueError(f"signal base_tick {sig.base_tick} != config base_tick {cfg.base_tick}")
    x = np.array(x0, dtype=float).reshape(-1)
    if x.shape != (sys.d,):
        raise ValueError(f"x0 must be a {sys.d}-vector, got shape {x.shape}")
    K = sig.horizon // cfg.block_ticks
    if K < 1:
        raise ValueError(f"horizon {sig.horizon} ticks is shorter than one block ({cfg.block_ticks} ticks)")

    admissibility = None
    if budget is not None:
        admissibility = is_adt_admissible(sig, budget)
        if not admissibility.admissible:
            logger.warning("switching signal violates ADT budget %s (excess %.3g on window %s)",
                           budget, admissibility.excess, admissibility.window)

    cache = cache if cache is not None else FlowCache(cfg.base_tick)
    dc = derived_constants(cfg)
    d, n, ts = sys.d, cfg.n, cfg.tau_s_ticks
    coder = coder_init(cfg)
    ctrl = controller_init(cfg, sys, fb, cache)
    rec = _Recorder(d, sys.c)
    blocks = np.zeros(K + 1, dtype=block_dtype(d))
    syms, segs = [], []
    generators = {}
    violation = None
    nblocks = 0

    for idx in range(K * n + 1):
        k, j = divmod(idx, n)
        tick = idx * ts
        mode = int(sig.mode_at(tick))

        if j == 0:
            row = blocks[k:k + 1]
            row["k"] = k
            row["tick"] = tick
            row["t"] = tick * cfg.base_tick
            row["x"] = x
            row["x_norm"] = np.linalg.norm(x)
            row["mode"] = mode
            if k > 0:
                prev, cur = (k - 1) * cfg.block_ticks, k * cfg.block_ticks
                row["nstar_prev"] = mismatch_flags(sig, ts, n, k - 1).nstar
                row["nswitch_prev"] = count_switches(sig, prev, cur)
                row["mismatch_prev"] = mismatch_time(sig, ts, n, k - 1)
                row["rho_k"] = dc.psi + dc.alpha_bar + count_switches(sig, 0, cur) * dc.eps_bar / k
            else:
                row["nstar_prev"] = row["nswitch_prev"] = -1
                row["mismatch_prev"] = row["rho_k"] = np.nan
            nblocks = k + 1
            try:
                sym, coder = coder_block_step(coder, x, mode)
            except SoundnessViolation as e:
                if on_violation == "raise":
                    raise
                logger.warning("run stopped: %s", e)
                violation = e
                row["r_prev"] = e.r_prev
                row["r_k"] = row["beta_k"] = row["beta_star"] = np.nan
                row["b_k"] = -1
                row["eta"] = -1
                row["xi"] = np.nan
                row["sound"] = False
                break
            seg, ctrl = controller_block_step(ctrl, sym)
            row["r_prev"] = coder.r_prev
            row["r_k"] = coder.r_k
            row["beta_k"] = coder.beta
            row["beta_star"] = coder.r_k / cfg.r0
            row["b_k"] = coder.nmissed
            row["eta"] = sym.eta
            row["xi"] = ctrl.xi
            row["sound"] = row["x_norm"] <= coder.r_k
        else:
            sym = coder_mode_step(coder, mode, j)
            seg, ctrl = controller_mode_step(ctrl, sym)
        syms.append(sym)
        segs.append(seg)

        block_info = (k, coder.r_k, coder.beta, coder.nmissed)
        xhat = seg.xhat0
        if idx == K * n:
            rec.add(tick, x, xhat, seg.K @ xhat, mode, seg.mode, *block_info)
            break

        cursor = tick
        for stop in [*sig.switch_ticks_in(tick, seg.tick_end), seg.tick_end]:
            true = int(sig.mode_at(cursor))
            rec.add(cursor, x, xhat, seg.K @ xhat, true, seg.mode, *block_info)
            key = (true, seg.mode)
            G = generators.get(key)
            if G is None:
                G = augmented_matrix(sys.A(true), sys.B(true), sys.A(seg.mode), sys.B(seg.mode), seg.K)
                generators[key] = G
            z = cache.get(("aug",) + key, G, stop - cursor) @ np.concatenate([x, xhat])
            x, xhat = z[:d], z[d:]
            cursor = stop

    rates = None
    try:
        rates = decay_rates(cfg)
    except InvalidState:
        logger.warning("configuration does not satisfy the parameter condition; no decay rate guaranteed")

    return ClosedLoopTrace(
        config=cfg, x0=np.array(x0, dtype=float).reshape(-1), samples=rec.to_array(cfg.base_tick),
        blocks=blocks[:nblocks], segments=segments_to_array(segs, d), symbols=syms,
        admissibility=admissibility, violation=violation, rates=rates,
    )


@dataclass
class TraceReport:
    """Outcome of `verify_trace`; the ``*_violations`` lists hold block indices."""
    blocks: int
    soundness_violations: list = field(default_factory=list)
    nmissed_violations: list = field(default_factory=list)
    nstar_violations: list = field(default_factory=list)
    product_violations: list = field(default_factory=list)
    mismatch_violations: list = field(default_factory=list)
    rho_bar: float = float("nan")
    trailing_rho: float = float("nan")
    lam: Optional[float] = None
    decay_rate_r: Optional[float] = None
    decay_rate_x: Optional[float] = None
    admissible: Optional[bool] = None
    violation: Optional[str] = None

    @property
    def decay_ok(self) -> Optional[bool]:
        if self.lam is None or self.decay_rate_r is None:
            return None
        return self.decay_rate_r >= self.lam

    @property
    def ok(self) -> bool:
        """All per-block checks pass and the run was not stopped."""
        return (self.violation is None and not self.soundness_violations and not self.nmissed_violations
                and not self.nstar_violations and not self.product_violations
                and not self.mismatch_violations)

    def summary(self) -> str:
        lines = [
            f"blocks checked:        {self.blocks}",
            f"soundness violations:  {len(self.soundness_violations)}",
            f"b_k bound violations:  {len(self.nmissed_violations)}",
            f"N*_k above switches:   {len(self.nstar_violations)}",
            f"r_k product mismatch:  {len(self.product_violations)}",
            f"mismatch-time excess:  {len(self.mismatch_violations)}",
            f"rho_bar / trailing rho_k: {self.rho_bar:.6g} / {self.trailing_rho:.6g}",
        ]
        if self.decay_rate_r is not None:
            lam = "n/a" if self.lam is None else f"{self.lam:.6g}"
            lines.append(f"decay rate of r_k:     {self.decay_rate_r:.6g} (lambda = {lam})")
        if self.decay_rate_x is not None:
            lines.append(f"decay rate of ||x||:   {self.decay_rate_x:.6g}")
        if self.admissible is not None:
            lines.append(f"ADT admissible:        {self.admissible}")
        if self.violation:
            lines.append(f"run stopped:           {self.violation}")
        return "\n".join(lines)


def verify_trace(trace: ClosedLoopTrace, sig: SwitchingSignal,
                 cfg: Optional[CoderControllerConfig] = None) -> TraceReport:
    """
    Check a trace block by block and estimate its decay rate.

    Per block: ``||x(t_k)|| <= r_k``; ``b_k <= N*_{k-1} <= n``;
    ``N*_{k-1} <= N_sigma(t_k, t_{k-1})``;
    ``r_k = r_0 prod beta_q``; the time spent with ``sigma_hat != sigma`` in
    block k-1 is at most ``N*_{k-1} tau_s``. The decay rate of r_k is the
    endpoint slope of ``-log r_k`` over the trailing half of the blocks; the
    decay rate of ||x|| is a least-squares slope over the same blocks.
    """
    cfg = trace.config if cfg is None else cfg
    b = trace.blocks
    rep = TraceReport(blocks=len(b))
    rep.rho_bar = derived_constants(cfg).rho_bar
    if trace.rates is not None:
        rep.lam = trace.rates.lam
    if trace.admissibility is not None:
        rep.admissible = bool(trace.admissibility.admissible)
    if trace.violation is not None:
        rep.violation = str(trace.violation)

    for row in b:
        k = int(row["k"])
        if not row["sound"]:
            rep.soundness_violations.append(k)
        if k == 0:
            continue
        if not 0 <= row["b_k"] <= row["nstar_prev"] <= cfg.n:
            rep.nmissed_violations.append(k)
        if row["nstar_prev"] > row["nswitch_prev"]:
            rep.nstar_violations.append(k)
        if row["mismatch_prev"] > row["nstar_prev"] * cfg.tau_s * (1 + TRACE_RTOL) + TRACE_RTOL:
            rep.mismatch_violations.append(k)

    done = b[np.isfinite(b["r_k"])]
    if len(done):
        # same multiplication order as the coder: r_k = beta_k * r_{k-1}
        expected = np.cumprod(np.concatenate([[cfg.r0], done["beta_k"][1:]]))
        bad = np.abs(done["r_k"] - expected) > TRACE_RTOL * expected
        rep.product_violations.extend(int(k) for k in done["k"][bad])
        if len(done) > 1:
            rep.trailing_rho = float(done["rho_k"][-1])

    if len(done) >= 3:
        tail = done[len(done) // 2:]
        t = tail["t"]
        rep.decay_rate_r = float(-(math.log(tail["r_k"][-1]) - math.log(tail["r_k"][0])) / (t[-1] - t[0]))
        nz = tail["x_norm"] > 0
        if nz.sum() >= 2:
            slope, _ = np.polyfit(t[nz], np.log(tail["x_norm"][nz]), 1)
            rep.decay_rate_x = float(-slope)
        else:
            rep.decay_rate_x = math.inf
    return rep


###
### Replay
###

def replay_controller(cfg: CoderControllerConfig, sys: SwitchedLinearSystem, fb: FeedbackLaw,
                      symbols: list, cache: Optional[FlowCache] = None):
    """
    Run a fresh controller over a recorded symbol stream.

    Returns
    -------
    (radii, xis, segments) : the r_k sequence, the reconstruction after
    every symbol, and the segment table.
    """
    ctrl = controller_init(cfg, sys, fb, cache)
    radii, xis, segs = [], [], []
    for sym in symbols:
        if isinstance(sym, symmod.BlockSymbol):
            seg, ctrl = controller_block_step(ctrl, sym)
            radii.append(ctrl.r_k)
        else:
            seg, ctrl = controller_mode_step(ctrl, sym)
        xis.append(ctrl.xi)
        segs.append(seg)
    return np.array(radii), np.array(xis).reshape(-1, sys.d), segments_to_array(segs, sys.d)
