"""
Experiments and randomized property suites.

* `ExperimentConfig` / `run_experiment`: closed-loop runs driven by random
  ADT-admissible signals;
* `prop1_experiment`: inputs integrated against the fast-oscillating
  signal sigma_n, showing the effect of any bounded input vanishes as n grows;
* `gronwall_check`: the perturbation bound
  ``||x1(t) - x2(t)|| <= e^{nu t} ||x1(0) - x2(0)|| + int_0^t e^{nu(t-s)} ||dA(s) x2(s) + du(s)|| ds``
  for two mode-driven affine systems;
* ``*_suite`` functions: the property checks run by ``slsq verify``, each
  returning one `SuiteDtype` row.
"""

from __future__ import annotations

import logging
import math
import os
from collections import namedtuple
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.interpolate import PPoly
from scipy.linalg import expm
from tqdm import tqdm

from .design import CoderControllerConfig
from .quantizer import TIE_TOL, BallQuantizer, build
from .schema import Prop1Dtype, SuiteDtype
from .simulate import replay_controller, run_closed_loop, verify_trace
from .switching import (AdtBudget, SwitchingSignal, count_switches, generate_adt_signal,
                        is_adt_admissible)
from .system import (FeedbackLaw, StabilizabilityCertificate, SwitchedLinearSystem, closed_loop_matrix,
                     log_norm, system_constants, system_from_document, verify_certificate_lognorm)
from .util import ConfigError, load_document, to_ticks

logger = logging.getLogger(__name__)

DEFAULT_PROP1_T = 2.0
DEFAULT_PROP1_N = (1, 10, 100, 1000)
DEFAULT_PROP1_RANDOM_INPUTS = 5
# relative slack on the perturbation bound
GRONWALL_RTOL = 1e-6
BOUND_RTOL = 1e-6


###
### Closed-loop experiments
###

@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """
    A closed-loop experiment: system, coder-controller parameters, the ADT
    budget of the random signals, horizon (ticks), initial-state radius
    ``r_K`` (initial states are uniform on that sphere), run count, seed and
    output directory.
    """
    sys: SwitchedLinearSystem
    fb: FeedbackLaw
    cert: StabilizabilityCertificate
    cfg: CoderControllerConfig
    budget: AdtBudget
    horizon: int
    r_K: float
    runs: int = 1
    seed: int = 0
    out: str = "out"
    system_doc: Optional[dict] = None

    def __post_init__(self):
        if not 0 < self.r_K <= self.cfg.r0:
            raise ValueError(f"r_K must be in (0, r0={self.cfg.r0}], got {self.r_K}")
        if self.horizon < self.cfg.block_ticks:
            raise ValueError("horizon is shorter than one block")


def _resolve_system(ref, base_dir: str):
    if isinstance(ref, str):
        path = ref if os.path.isabs(ref) else os.path.join(base_dir, ref)
        return load_document(path)
    if isinstance(ref, Mapping):
        return dict(ref)
    raise ConfigError("'system' must be a path or an inline system document")


def experiment_from_document(doc: Mapping, base_dir: str = ".") -> ExperimentConfig:
    """
    Build an experiment from its document::

        {"system": "sectionV_system.json" | {...},
         "base_tick": 0.001, "tau_s": 0.008, "n": 100, "alpha": 0.05, "r0": 1.0,
         "adt": {"tau_a": 1.0, "N0": 2}, "horizon": 40, "r_K": 1.0,
         "runs": 1, "seed": 7, "out": "out/case1"}

    ``system`` paths are relative to ``base_dir``.
    """
    if not isinstance(doc, Mapping) or "system" not in doc:
        raise ConfigError("Experiment document must be a mapping with a 'system' entry")
    system_doc = _resolve_system(doc["system"], base_dir)
    sys, fb, cert = system_from_document(system_doc)
    if cert is None:
        raise ConfigError("the system document needs a 'certificate' for closed-loop experiments")
    try:
        adt = doc["adt"]
        budget = AdtBudget(tau_a=float(adt["tau_a"]), N0=float(adt.get("N0", 1.0)))
        base_tick = float(doc.get("base_tick", 1e-3))
        cfg = CoderControllerConfig(
            tau_s=float(doc["tau_s"]), n=int(doc["n"]), alpha=float(doc["alpha"]), r0=float(doc["r0"]),
            tau_a=budget.tau_a, cert=cert, consts=system_constants(sys, fb), d=sys.d, mode_count=sys.N,
            base_tick=base_tick,
        )
        return ExperimentConfig(
            sys=sys, fb=fb, cert=cert, cfg=cfg, budget=budget,
            horizon=to_ticks(float(doc["horizon"]), base_tick, "horizon"),
            r_K=float(doc.get("r_K", cfg.r0)), runs=int(doc.get("runs", 1)), seed=int(doc.get("seed", 0)),
            out=str(doc.get("out", "out")), system_doc=system_doc,
        )
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"Invalid experiment document: {e}") from e


def load_experiment(path: str) -> ExperimentConfig:
    return experiment_from_document(load_document(path), base_dir=os.path.dirname(os.path.abspath(path)))


def sample_initial_state(rng, d: int, radius: float) -> np.ndarray:
    """Uniform on the sphere of the given radius."""
    v = rng.standard_normal(d)
    return radius * v / np.linalg.norm(v)


def run_experiment(exp: ExperimentConfig, seed, on_violation: str = "record"):
    """
    One randomized run. ``seed`` is an int or a `numpy.random.SeedSequence`.

    Returns
    -------
    (SwitchingSignal, ClosedLoopTrace, TraceReport)
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    sig_seed, x_seed = ss.spawn(2)
    sig = generate_adt_signal(exp.budget, exp.horizon, exp.sys.N, sig_seed, exp.cfg.base_tick)
    x0 = sample_initial_state(np.random.default_rng(x_seed), exp.sys.d, exp.r_K)
    trace = run_closed_loop(exp.cfg, exp.sys, exp.fb, sig, x0, budget=exp.budget, on_violation=on_violation)
    return sig, trace, verify_trace(trace, sig)


###
### Fast switching
###

def default_prop1_inputs(T: float = DEFAULT_PROP1_T, random_inputs: int = DEFAULT_PROP1_RANDOM_INPUTS,
                         seed=0, max_pieces: int = 4) -> list:
    """
    Input set of the fast-switching experiment, as piecewise polynomials on
    [0, T]: u = 1, u = t, the indicator of [0, min(1, T/2)), and
    ``random_inputs`` piecewise-constant inputs with at most ``max_pieces``
    pieces and values in [-1, 1].
    """
    rng = np.random.default_rng(seed)
    inputs = [
        PPoly(np.array([[1.0]]), np.array([0.0, T])),
        PPoly(np.array([[1.0], [0.0]]), np.array([0.0, T])),
        PPoly(np.array([[1.0, 0.0]]), np.array([0.0, min(1.0, T / 2), T])),
    ]
    for _ in range(random_inputs):
        pieces = int(rng.integers(1, max_pieces + 1))
        cuts = np.sort(rng.uniform(0, T, pieces - 1))
        edges = np.concatenate([[0.0], cuts, [T]])
        values = rng.uniform(-1.0, 1.0, pieces)
        inputs.append(PPoly(values[None, :], edges))
    return inputs


def switched_integral(u: PPoly, n: int, T: float, B=(-1.0, 1.0)) -> float:
    """
    ``int_0^T B_{sigma_n(t)} u(t) dt`` for scalar B, by exact integration of
    the polynomial pieces between the switch times k/n.
    """
    F = u.antiderivative()
    m = int(math.floor(T * n + 1e-12))
    edges = np.arange(m + 1, dtype=float) / n
    if edges[-1] < T:
        edges = np.append(edges, T)
    signs = np.where(np.arange(len(edges) - 1) % 2 == 0, B[0], B[1])
    return float(np.sum(signs * np.diff(F(edges))))


def prop1_experiment(n_values: Sequence[int] = DEFAULT_PROP1_N, inputs=None, T: float = DEFAULT_PROP1_T,
                     B=(-1.0, 1.0), x0: float = 1.0) -> np.ndarray:
    """
    Sup over the input set of ``|int_0^T B_{sigma_n} u|`` for each n.

    With ``x' = B_sigma u`` and ``x(0) = x0``, ``x(T) = x0 + int B_sigma u``,
    so ``min |x(T)| >= |x0| - sup``: no input from the set steers the state
    to 0 once n is large.

    Returns
    -------
    ndarray of Prop1Dtype
    """
    if inputs is None:
        inputs = default_prop1_inputs(T)
    out = np.zeros(len(n_values), dtype=Prop1Dtype)
    for i, n in enumerate(n_values):
        vals = np.array([switched_integral(u, int(n), T, B) for u in inputs])
        best = int(np.argmax(np.abs(vals)))
        out["n"][i] = n
        out["sup_integral"][i] = abs(vals[best])
        out["argmax_input"][i] = best
        out["min_abs_x"][i] = np.min(np.abs(x0 + vals))
        out["linear_reference"][i] = T / (2 * n)
    return out


def scalar_input_gains(sys: SwitchedLinearSystem):
    """B values of a scalar two-mode system with A = 0, for `prop1_experiment`."""
    if sys.d != 1 or sys.c != 1 or sys.N != 2:
        raise ConfigError(
            f"the fast-switching experiment needs a scalar 2-mode system, got d={sys.d}, c={sys.c}, N={sys.N}"
        )
    if any(np.any(sys.A(i) != 0) for i in range(sys.N)):
        raise ConfigError("the fast-switching experiment needs A = 0 in every mode")
    return (float(sys.B(0)[0, 0]), float(sys.B(1)[0, 0]))


###
### Perturbation bound
###

GronwallResult = namedtuple("GronwallResult", ["t", "lhs", "rhs", "holds"])


@dataclass(frozen=True, eq=False)
class DrivenSystem:
    """``x' = A[sigma(t)] x + w[sigma(t)]``: piecewise-constant matrix and input."""
    signal: SwitchingSignal
    A: tuple
    w: tuple


def _affine_flow(ds: DrivenSystem, x0) -> np.ndarray:
    """Exact states at every tick (rows 0..horizon)."""
    d = len(x0)
    steps = {}
    for i, (A, w) in enumerate(zip(ds.A, ds.w)):
        G = np.zeros((d + 1, d + 1))
        G[:d, :d] = A
        G[:d, d] = w
        steps[i] = expm(G * ds.signal.base_tick)
    modes = ds.signal.mode_at(np.arange(ds.signal.horizon))
    X = np.empty((ds.signal.horizon + 1, d))
    z = np.append(np.asarray(x0, dtype=float), 1.0)
    X[0] = z[:d]
    for i, m in enumerate(modes):
        z = steps[int(m)] @ z
        X[i + 1] = z[:d]
    return X


def _tick_moments(nu: float, h: float):
    """``int_0^h e^{-nu s} ds`` and ``int_0^h s e^{-nu s} ds``."""
    x = nu * h
    if abs(x) < 1e-4:
        return h * (1 - x / 2 + x * x / 6), h * h * (0.5 - x / 3 + x * x / 8)
    return -math.expm1(-x) / nu, (-math.expm1(-x) - x * math.exp(-x)) / nu ** 2


def gronwall_check(sys1: DrivenSystem, sys2: DrivenSystem, x10, x20, nu: Optional[float] = None,
                   rtol: float = GRONWALL_RTOL) -> GronwallResult:
    """
    Evaluate both sides of the perturbation bound at every tick.

    Both trajectories are exact (matrix exponential of the affine
    generator). On each tick both modes are constant and the integrand
    ``e^{-nu s} ||v(s)||``, ``v = dA x2 + dw``, is replaced by an upper
    bound integrated in closed form: the chord of ``||v||`` between the tick
    endpoints (the norm is convex) plus ``M h^2 / 8``, where ``M`` bounds
    ``||v''|| = ||dA A2 (A2 x2 + w2)||`` on the tick. The rhs is therefore
    never below the exact integral.

    Raises
    ------
    ValueError
        If ``nu`` is below the log-norm of some matrix, or the two signals
        live on different grids.
    """
    s1, s2 = sys1.signal, sys2.signal
    if s1.horizon != s2.horizon or not math.isclose(s1.base_tick, s2.base_tick):
        raise ValueError("both systems must share horizon and base_tick")
    if s1.horizon < 1:
        raise ValueError("horizon must be at least one tick")
    lognorms = [log_norm(A) for A in (*sys1.A, *sys2.A)]
    if nu is None:
        nu = max(lognorms)
    elif nu < max(lognorms) - 1e-12:
        raise ValueError(f"nu={nu} is below the log-norm {max(lognorms)} of a system matrix")

    X1 = _affine_flow(sys1, x10)
    X2 = _affine_flow(sys2, x20)
    h = s1.base_tick
    t = np.arange(s1.horizon + 1) * h

    ticks = np.arange(s1.horizon)
    m1, m2 = s1.mode_at(ticks), s2.mode_at(ticks)
    dA = np.stack([sys1.A[a] - sys2.A[b] for a, b in zip(m1, m2)])
    dw = np.stack([np.asarray(sys1.w[a]) - np.asarray(sys2.w[b]) for a, b in zip(m1, m2)])
    A2 = np.stack([np.asarray(sys2.A[b], dtype=float) for b in m2])
    w2 = np.stack([np.asarray(sys2.w[b], dtype=float) for b in m2])

    p = np.linalg.norm(np.einsum("kij,kj->ki", dA, X2[:-1]) + dw, axis=1)
    q = np.linalg.norm(np.einsum("kij,kj->ki", dA, X2[1:]) + dw, axis=1)
    # ||x2'|| grows by at most e^{max(nu, 0) h} within a tick
    speed = np.linalg.norm(np.einsum("kij,kj->ki", A2, X2[:-1]) + w2, axis=1) * math.exp(max(nu, 0.0) * h)
    M = np.linalg.norm(np.einsum("kij,kjl->kil", dA, A2), ord=2, axis=(1, 2)) * speed
    I0, I1 = _tick_moments(nu, h)
    per_tick = np.exp(-nu * t[:-1]) * ((p + M * h * h / 8) * I0 + (q - p) * I1 / h)
    J = np.concatenate([[0.0], np.cumsum(per_tick)])

    lhs = np.linalg.norm(X1 - X2, axis=1)
    rhs = np.exp(nu * t) * (np.linalg.norm(np.asarray(x10, float) - np.asarray(x20, float)) + J)
    holds = bool(np.all(lhs <= rhs * (1 + rtol) + 1e-12))
    return GronwallResult(t, lhs, rhs, holds)


def random_driven_pair(rng, d: int, horizon: int, base_tick: float, mode_count: int = 2):
    """Two random mode-driven affine systems on random ADT signals."""
    budget = AdtBudget(tau_a=0.2, N0=2)
    pair = []
    for _ in range(2):
        sig = generate_adt_signal(budget, horizon, mode_count, rng.integers(2**63), base_tick)
        A = tuple(rng.standard_normal((d, d)) for _ in range(mode_count))
        w = tuple(rng.standard_normal(d) for _ in range(mode_count))
        pair.append(DrivenSystem(sig, A, w))
    return pair


###
### Property suites
###

def _suite_row(name: str, runs: int, violations: int) -> np.ndarray:
    row = np.zeros(1, dtype=SuiteDtype)
    row["suite"] = name
    row["runs"] = runs
    row["violations"] = violations
    row["passed"] = violations == 0
    return row


def _progress(iterable, silent: bool, desc: str, total=None):
    return tqdm(iterable, desc=desc, total=total, disable=silent, leave=False)


def certificate_suite(sys, fb, cert, budget: AdtBudget, runs: int = 100, horizon: float = 20.0,
                      base_tick: float = 1e-3, seed=0, silent: bool = True) -> np.ndarray:
    """
    Autonomous closed loop (perfect state, no quantization) on random
    ADT-admissible signals against ``D ||x0|| e^{mu1 N(t,0) - mu2 t}``,
    evaluated at every switch and on a 0.1-time-unit grid. The log-norm
    certificate test itself counts as one run.
    """
    rng = np.random.default_rng(seed)
    check = verify_certificate_lognorm(sys, fb, cert)
    violations = int(check.status is False)
    H = to_ticks(horizon, base_tick, "horizon")
    grid_step = max(1, int(round(0.1 / base_tick)))
    gens = [closed_loop_matrix(sys, fb, i) for i in range(sys.N)]
    for _ in _progress(range(runs), silent, "certificate"):
        sig = generate_adt_signal(budget, H, sys.N, rng.integers(2**63), base_tick)
        x = sample_initial_state(rng, sys.d, 1.0)
        ticks = np.union1d(np.arange(0, H + 1, grid_step), sig.event_ticks)
        bad = False
        for a, b in zip(ticks[:-1], ticks[1:]):
            x = expm(gens[int(sig.mode_at(a))] * ((b - a) * base_tick)) @ x
            bound = cert.D * math.exp(cert.mu1 * count_switches(sig, 0, int(b)) - cert.mu2 * b * base_tick)
            if np.linalg.norm(x) > bound * (1 + BOUND_RTOL):
                bad = True
                break
        violations += bad
    return _suite_row("certificate", runs + 1, violations)


def _brute_force_index(points: np.ndarray, xi: np.ndarray) -> np.ndarray:
    d2 = np.sum((xi[:, None, :] - points[None, :, :]) ** 2, axis=2)
    dist = np.sqrt(d2)
    best = dist.min(axis=1, keepdims=True)
    return np.argmax(dist <= best + TIE_TOL, axis=1)


def sample_unit_ball(rng, count: int, d: int, radius: float = 1.0) -> np.ndarray:
    v = rng.standard_normal((count, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return radius * v * rng.uniform(0, 1, (count, 1)) ** (1.0 / d)


def quantizer_suite(d_values=(1, 2, 3), alpha_values=(0.5, 0.1, 0.05), samples: int = 10_000,
                    seed=0, chunk: int = 32, silent: bool = True) -> np.ndarray:
    """
    Accuracy, zero-region and alphabet-size properties of the quantizer,
    with the nearest point cross-checked against a brute-force scan.
    """
    rng = np.random.default_rng(seed)
    runs = violations = 0
    configs = [(d, a) for d in d_values for a in alpha_values]
    for d, alpha in _progress(configs, silent, "quantizer"):
        q: BallQuantizer = build(d, alpha)
        runs += 1
        violations += q.m > q.m_hat
        xi = sample_unit_ball(rng, samples, d)
        small = sample_unit_ball(rng, samples, d, radius=alpha / math.sqrt(d) * (1 - 1e-9))
        for start in range(0, samples, chunk):
            block = xi[start:start + chunk]
            idx = q.quantize_many(block)
            err = np.linalg.norm(block - q.points[idx], axis=1)
            violations += int(np.sum(err > alpha + 1e-12))
            violations += int(np.sum(idx != _brute_force_index(q.points, block)))
            violations += int(np.sum(q.quantize_many(small[start:start + chunk]) != q.zero_index))
            runs += 2 * len(block)
    return _suite_row("quantizer", runs, violations)


def adt_suite(budgets: Sequence[AdtBudget], runs: int = 1000, horizon: int = 20_000, mode_count: int = 3,
              base_tick: float = 1e-3, seed=0, silent: bool = True) -> np.ndarray:
    """Token-bucket signals against the ADT check of their own (effective) budget."""
    violations = 0
    seeds = np.random.SeedSequence(seed).spawn(runs * len(budgets))
    cases = [(b, s) for b in budgets for s in range(runs)]
    for (budget, _), ss in _progress(list(zip(cases, seeds)), silent, "adt"):
        sig = generate_adt_signal(budget, horizon, mode_count, ss, base_tick)
        eff = AdtBudget(budget.tau_a, budget.effective_N0)
        violations += not is_adt_admissible(sig, eff).admissible
    return _suite_row("adt", len(cases), violations)


def closed_loop_suite(experiments: Sequence[ExperimentConfig], runs: int = 100, seed=0,
                      check_decay: bool = True, silent: bool = True):
    """
    Soundness and b_k bounds over randomized runs of each experiment.

    Returns
    -------
    (soundness_row, decay_row) : ndarray of SuiteDtype each
    """
    violations = decay_failures = total = 0
    seeds = np.random.SeedSequence(seed).spawn(runs * len(experiments))
    cases = [(exp, seeds[i * runs + r]) for i, exp in enumerate(experiments) for r in range(runs)]
    for exp, ss in _progress(cases, silent, "closed loop"):
        _, trace, rep = run_experiment(exp, ss)
        total += 1
        if not rep.ok:
            violations += 1
            logger.info("run failed:\n%s", rep.summary())
        if check_decay and rep.decay_ok is False:
            decay_failures += 1
    return _suite_row("closed_loop", total, violations), _suite_row("decay", total, decay_failures)


def replica_suite(exp: ExperimentConfig, runs: int = 100, seed=0, silent: bool = True) -> np.ndarray:
    """Re-running a fresh controller over the recorded symbols reproduces it bit for bit."""
    violations = 0
    seeds = np.random.SeedSequence(seed).spawn(runs)
    for ss in _progress(seeds, silent, "replica"):
        _, trace, _ = run_experiment(exp, ss)
        radii, _, segs = replay_controller(exp.cfg, exp.sys, exp.fb, trace.symbols)
        same = (np.array_equal(radii, trace.blocks["r_k"][:len(radii)])
                and all(np.array_equal(segs[f], trace.segments[f]) for f in segs.dtype.names))
        violations += not same
    return _suite_row("replica", runs, violations)


def gronwall_suite(runs: int = 100, d_max: int = 3, horizon: float = 1.0, base_tick: float = 1e-3,
                   seed=0, silent: bool = True) -> np.ndarray:
    rng = np.random.default_rng(seed)
    H = to_ticks(horizon, base_tick, "horizon")
    violations = 0
    for _ in _progress(range(runs), silent, "gronwall"):
        d = int(rng.integers(1, d_max + 1))
        s1, s2 = random_driven_pair(rng, d, H, base_tick)
        res = gronwall_check(s1, s2, rng.standard_normal(d), rng.standard_normal(d))
        violations += not res.holds
    return _suite_row("gronwall", runs, violations)


def prop1_suite(n_values=DEFAULT_PROP1_N, T: float = DEFAULT_PROP1_T, B=(-1.0, 1.0), tol: float = 1e-2,
                seed=0) -> np.ndarray:
    """Sup is non-increasing in n and below ``tol`` at the largest n."""
    table = prop1_experiment(n_values, default_prop1_inputs(T, seed=seed), T, B)
    sup = table["sup_integral"]
    violations = int(np.sum(np.diff(sup) > 0)) + int(sup[-1] >= tol) + int(table["min_abs_x"][-1] < 1 - tol)
    return _suite_row("prop1", len(n_values), violations)
