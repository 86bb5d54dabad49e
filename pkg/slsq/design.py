"""
Parameter selection and rate/decay arithmetic for the coder-controller.

Given the system constants (nu, Delta1, Delta2, L), a certificate
(D, mu1, mu2) and an average dwell time tau_a, a choice of sampling period
tau_s, block length n and quantizer accuracy alpha is valid when

    D e^{-mu2 n tau_s} + e^{nu n tau_s} alpha + eps(n, tau_s) < e^{-mu1 n tau_s / tau_a}

with eps(n, tau_s) = e^{nu n tau_s} tau_s (n tau_s / tau_a) D (Delta1 + Delta2 L).
A valid configuration stabilizes the loop at an average rate of

    R = (1/tau_s) [ log2(m_hat)/n + log2(n+1)/n + log2 N ]  bits per time unit.
"""

from __future__ import annotations

import logging
import math
from collections import namedtuple
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from . import quantizer
from .schema import SweepDtype
from .system import StabilizabilityCertificate, SystemConstants
from .util import ConfigError, ceil_ticks, to_ticks

logger = logging.getLogger(__name__)

DEFAULT_BASE_TICK = 1e-3
DEFAULT_MARGIN = 0.05
DEFAULT_ALPHA_START = 0.5
DEFAULT_ALPHA_RATIO = 0.5
DEFAULT_ALPHA_STEPS = 12
DEFAULT_N_VALUES = tuple(2**k for k in range(13))


class InfeasibleDesign(ValueError):
    """mu1 / tau_a >= mu2: no block length can satisfy the condition."""


class SearchExhausted(ValueError):
    """No (alpha, n) in the search grid satisfies the condition."""

    def __init__(self, message, best_lhs=None, rhs=None):
        super().__init__(message)
        self.best_lhs = best_lhs
        self.rhs = rhs


class InvalidState(RuntimeError):
    """An operation needs a configuration that satisfies the condition."""


ConditionCheck = namedtuple("ConditionCheck", ["lhs", "rhs", "satisfied"])
DecayRates = namedtuple("DecayRates", ["mu", "lam"])

DerivedConstants = namedtuple(
    "DerivedConstants",
    [
        "n",           # block length
        "psi",         # D e^{-mu2 n tau_s}
        "alpha_bar",   # e^{nu n tau_s} alpha
        "eps_bar",     # e^{nu n tau_s} tau_s D (Delta1 + Delta2 L)
        "eps_n",       # eps_bar (n tau_s / tau_a)
        "rho_bar",     # psi + alpha_bar + eps_n
        "rhs",         # e^{-mu1 n tau_s / tau_a}
        "m_hat",       # quantizer alphabet bound
        "rate",        # bits per time unit
        "mu",          # guaranteed decay rate (None if the condition fails)
        "lam",         # reported decay rate, mu / 2 (None if the condition fails)
    ],
)


@dataclass(frozen=True)
class CoderControllerConfig:
    """
    Shared parameters of the coder and the controller.

    Parameters
    ----------
    tau_s : float
        Sampling period; a whole number of ``base_tick``.
    n : int
        Block length (sampling intervals per state symbol).
    alpha : float
        Quantizer accuracy.
    r0 : float
        Initial radius; initial states lie in the ball of this radius.
    tau_a : float
        Average dwell time the design assumes.
    cert : StabilizabilityCertificate
    consts : SystemConstants
    d : int
        State dimension.
    mode_count : int
        Number of modes N.
    base_tick : float
        Time quantum of the tick grid.
    """
    tau_s: float
    n: int
    alpha: float
    r0: float
    tau_a: float
    cert: StabilizabilityCertificate
    consts: SystemConstants
    d: int
    mode_count: int
    base_tick: float = DEFAULT_BASE_TICK

    def __post_init__(self):
        for name in ("tau_s", "alpha", "r0", "tau_a", "base_tick"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        if self.d < 1 or self.mode_count < 1:
            raise ValueError("d and mode_count must be positive")
        object.__setattr__(self, "n", int(self.n))
        to_ticks(self.tau_s, self.base_tick, "tau_s")

    @property
    def tau_s_ticks(self) -> int:
        return to_ticks(self.tau_s, self.base_tick, "tau_s")

    @property
    def block_ticks(self) -> int:
        return self.n * self.tau_s_ticks

    @property
    def block_time(self) -> float:
        return self.n * self.tau_s

    @property
    def m_hat(self) -> int:
        return quantizer.mhat(self.d, self.alpha)


@dataclass(frozen=True)
class SearchTargets:
    """
    Knobs of `search_parameters`.

    T_s = n tau_s is the smallest tick-aligned value with
    ``D e^{(mu1/tau_a - mu2) T_s} <= 1 - margin``. For every n in
    ``n_values`` the first alpha (largest first) of the geometric sequence
    ``alpha_start * alpha_ratio**k``, k < alpha_steps, that satisfies the
    condition is kept; the kept pair of smallest rate wins, ties going to
    the smaller n.
    """
    d: int
    mode_count: int
    r0: float
    base_tick: float = DEFAULT_BASE_TICK
    margin: float = DEFAULT_MARGIN
    alpha_start: float = DEFAULT_ALPHA_START
    alpha_ratio: float = DEFAULT_ALPHA_RATIO
    alpha_steps: int = DEFAULT_ALPHA_STEPS
    n_values: Sequence[int] = field(default=DEFAULT_N_VALUES)

    def __post_init__(self):
        if not 0 < self.margin < 1:
            raise ValueError(f"margin must be in (0, 1), got {self.margin}")
        if not 0 < self.alpha_ratio < 1:
            raise ValueError(f"alpha_ratio must be in (0, 1), got {self.alpha_ratio}")
        if any(int(n) < 1 for n in self.n_values):
            raise ValueError("n_values must be positive integers")


def _terms(cfg: CoderControllerConfig):
    c, cert = cfg.consts, cfg.cert
    T = cfg.n * cfg.tau_s
    grow = math.exp(c.nu * T)
    psi = cert.D * math.exp(-cert.mu2 * T)
    alpha_bar = grow * cfg.alpha
    eps_bar = grow * cfg.tau_s * cert.D * (c.delta1 + c.delta2 * c.L)
    eps_n = eps_bar * (T / cfg.tau_a)
    rhs = math.exp(-cert.mu1 * T / cfg.tau_a)
    return psi, alpha_bar, eps_bar, eps_n, rhs


def check_condition(cfg: CoderControllerConfig) -> ConditionCheck:
    """Evaluate both sides of the parameter condition (strict inequality)."""
    psi, alpha_bar, _, eps_n, rhs = _terms(cfg)
    lhs = psi + alpha_bar + eps_n
    return ConditionCheck(lhs, rhs, lhs < rhs)


def data_rate(cfg: CoderControllerConfig, mode_count: Optional[int] = None,
              m_hat: Optional[int] = None) -> float:
    """
    Average bits per time unit.

    Evaluated with the alphabet bound ``m_hat`` (not the deduplicated m).
    """
    mode_count = cfg.mode_count if mode_count is None else mode_count
    m_hat = cfg.m_hat if m_hat is None else m_hat
    if m_hat < 1 or mode_count < 1:
        raise ValueError("m_hat and mode_count must be >= 1")
    n = cfg.n
    return (math.log2(m_hat) / n + math.log2(n + 1) / n + math.log2(mode_count)) / cfg.tau_s


def decay_rates(cfg: CoderControllerConfig) -> DecayRates:
    """
    mu = mu1 / tau_a - ln(rho_bar) / (n tau_s), lambda = mu / 2.

    Raises
    ------
    InvalidState
        If the condition is not satisfied.
    """
    chk = check_condition(cfg)
    if not chk.satisfied:
        raise InvalidState(f"condition not satisfied (lhs={chk.lhs:.6g} >= rhs={chk.rhs:.6g})")
    mu = cfg.cert.mu1 / cfg.tau_a - math.log(chk.lhs) / cfg.block_time
    return DecayRates(mu, mu / 2)


def derived_constants(cfg: CoderControllerConfig) -> DerivedConstants:
    psi, alpha_bar, eps_bar, eps_n, rhs = _terms(cfg)
    rho_bar = psi + alpha_bar + eps_n
    mu = lam = None
    if rho_bar < rhs:
        mu, lam = decay_rates(cfg)
    return DerivedConstants(
        n=cfg.n, psi=psi, alpha_bar=alpha_bar, eps_bar=eps_bar, eps_n=eps_n,
        rho_bar=rho_bar, rhs=rhs, m_hat=cfg.m_hat, rate=data_rate(cfg), mu=mu, lam=lam,
    )


def beta_k(nmissed: int, dc: DerivedConstants, mu1: float) -> float:
    """
    Contraction factor for a block after ``nmissed`` missed mode intervals:

        e^{mu1 b} psi + alpha_bar + e^{mu1 b} b eps_bar

    Coder and controller both call this; they must agree bit for bit.
    """
    if not 0 <= nmissed <= dc.n:
        raise ValueError(f"nmissed must be in [0, {dc.n}], got {nmissed}")
    jump = math.exp(mu1 * nmissed)
    return jump * dc.psi + dc.alpha_bar + jump * nmissed * dc.eps_bar


def search_parameters(consts: SystemConstants, cert: StabilizabilityCertificate, tau_a: float,
                      targets: SearchTargets) -> CoderControllerConfig:
    """
    Two-phase search for a valid configuration.

    Raises
    ------
    InfeasibleDesign
        If ``mu1 / tau_a >= mu2``.
    SearchExhausted
        If no candidate satisfies the condition; carries the smallest lhs seen.
    """
    if not tau_a > 0:
        raise ValueError(f"tau_a must be positive, got {tau_a}")
    if not cert.admissible(tau_a):
        raise InfeasibleDesign(f"mu1/tau_a = {cert.mu1 / tau_a:.6g} >= mu2 = {cert.mu2:.6g}")

    base_tick = targets.base_tick
    slope = cert.mu2 - cert.mu1 / tau_a
    T_min = math.log(cert.D / (1.0 - targets.margin)) / slope
    T_min_ticks = max(1, ceil_ticks(T_min, base_tick))
    logger.debug("search: tau_a=%g, T_s >= %g (%d ticks)", tau_a, T_min, T_min_ticks)

    best, best_key = None, None
    best_lhs, best_rhs = math.inf, None
    for n in targets.n_values:
        n = int(n)
        tau_s_ticks = max(1, -(-T_min_ticks // n))
        for k in range(targets.alpha_steps):
            alpha = targets.alpha_start * targets.alpha_ratio**k
            if quantizer.mhat(targets.d, alpha) > quantizer.MHAT_LIMIT:
                break
            cfg = CoderControllerConfig(
                tau_s=tau_s_ticks * base_tick, n=n, alpha=alpha, r0=targets.r0, tau_a=tau_a,
                cert=cert, consts=consts, d=targets.d, mode_count=targets.mode_count,
                base_tick=base_tick,
            )
            chk = check_condition(cfg)
            if chk.lhs < best_lhs:
                best_lhs, best_rhs = chk.lhs, chk.rhs
            if not chk.satisfied:
                continue
            key = (data_rate(cfg), n)
            logger.debug("search: n=%d tau_s=%g alpha=%g satisfies (rate %.6g)", n, cfg.tau_s, alpha, key[0])
            if best_key is None or key < best_key:
                best, best_key = cfg, key
            break

    if best is None:
        raise SearchExhausted(
            f"no (alpha, n) in the search grid satisfies the condition for tau_a={tau_a} "
            f"(best lhs {best_lhs:.6g} vs rhs {best_rhs:.6g})",
            best_lhs=best_lhs, rhs=best_rhs,
        )
    return best


def rate_sweep(consts: SystemConstants, cert: StabilizabilityCertificate, tau_a_values,
               targets: SearchTargets) -> np.ndarray:
    """
    `search_parameters` for each tau_a.

    Returns
    -------
    ndarray of SweepDtype
        One row per tau_a; ``feasible`` is False (and the numbers NaN) when
        the design is infeasible or the search comes up empty.
    """
    out = np.zeros(len(tau_a_values), dtype=SweepDtype)
    for i, tau_a in enumerate(tau_a_values):
        row = out[i:i + 1]
        row["tau_a"] = tau_a
        try:
            cfg = search_parameters(consts, cert, tau_a, targets)
        except (InfeasibleDesign, SearchExhausted) as e:
            logger.info("tau_a=%g: %s", tau_a, e)
            row["feasible"] = False
            for name in ("tau_s", "alpha", "rate", "lhs", "mu"):
                row[name] = np.nan
            continue
        dc = derived_constants(cfg)
        row["feasible"] = True
        row["tau_s"] = cfg.tau_s
        row["n"] = cfg.n
        row["alpha"] = cfg.alpha
        row["rate"] = dc.rate
        row["lhs"] = dc.rho_bar
        row["mu"] = dc.mu
    return out


###
### Documents
###

def config_to_document(cfg: CoderControllerConfig, system_doc: Optional[Mapping] = None) -> dict:
    """
    The config document: primary parameters, certificate, system constants,
    derived constants and rate. ``system_doc`` (a system document) is
    embedded when given so that the file is self-contained.
    """
    dc = derived_constants(cfg)
    doc = {
        "base_tick": cfg.base_tick,
        "tau_s": cfg.tau_s,
        "n": cfg.n,
        "alpha": cfg.alpha,
        "r0": cfg.r0,
        "tau_a": cfg.tau_a,
        "d": cfg.d,
        "mode_count": cfg.mode_count,
        "certificate": {"D": cfg.cert.D, "mu1": cfg.cert.mu1, "mu2": cfg.cert.mu2},
        "system_constants": dict(cfg.consts._asdict()),
        "derived": {k: v for k, v in dc._asdict().items()},
        "rate": dc.rate,
    }
    if system_doc is not None:
        doc["system"] = dict(system_doc)
    return doc


def config_from_document(doc: Mapping) -> CoderControllerConfig:
    """Rebuild a config from its document; the derived block is ignored."""
    try:
        c = doc["certificate"]
        cert = StabilizabilityCertificate(D=float(c["D"]), mu1=float(c["mu1"]), mu2=float(c["mu2"]))
        k = doc["system_constants"]
        consts = SystemConstants(nu=float(k["nu"]), delta1=float(k["delta1"]),
                                 delta2=float(k["delta2"]), L=float(k["L"]))
        return CoderControllerConfig(
            tau_s=float(doc["tau_s"]), n=int(doc["n"]), alpha=float(doc["alpha"]),
            r0=float(doc["r0"]), tau_a=float(doc["tau_a"]), cert=cert, consts=consts,
            d=int(doc["d"]), mode_count=int(doc["mode_count"]),
            base_tick=float(doc.get("base_tick", DEFAULT_BASE_TICK)),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"Invalid coder-controller config: {e}") from e
