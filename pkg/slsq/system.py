"""Switched linear systems, per-mode linear feedback and exact propagation.

The plant is

    x'(t) = A_{sigma(t)} x(t) + B_{sigma(t)} u(t)

with modes ``0 .. N-1``. Feedback laws are linear per-mode gains,
``phi(xi, i) = K_i xi``. All norms are spectral (operator-2) norms.
"""

from __future__ import annotations

from collections import namedtuple
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import expm

from .util import ConfigError

# tolerance of the log-norm certificate test
CERTIFICATE_TOL = 1e-9

SystemConstants = namedtuple("SystemConstants", ["nu", "delta1", "delta2", "L"])

CertificateCheck = namedtuple("CertificateCheck", ["status", "margins"])


def _as_matrix(M, name="matrix") -> np.ndarray:
    M = np.array(M, dtype=float, ndmin=2)
    if M.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


@dataclass(frozen=True, eq=False)
class Mode:
    """One subsystem (A_i, B_i)."""
    A: np.ndarray
    B: np.ndarray


@dataclass(frozen=True, eq=False)
class SwitchedLinearSystem:
    """
    A continuous-time switched linear system with ``N`` modes.

    Parameters
    ----------
    modes : sequence of Mode
        Mode matrices; all ``A`` are d x d, all ``B`` are d x c.
    """
    modes: tuple

    def __post_init__(self):
        modes = tuple(Mode(_as_matrix(m.A, f"A[{i}]"), _as_matrix(m.B, f"B[{i}]"))
                      for i, m in enumerate(self.modes))
        if not modes:
            raise ValueError("A switched system needs at least one mode")
        d, c = modes[0].B.shape
        for i, m in enumerate(modes):
            if m.A.shape != (d, d):
                raise ValueError(f"A[{i}] has shape {m.A.shape}, expected {(d, d)}")
            if m.B.shape != (d, c):
                raise ValueError(f"B[{i}] has shape {m.B.shape}, expected {(d, c)}")
        object.__setattr__(self, "modes", modes)

    @classmethod
    def from_matrices(cls, As: Sequence, Bs: Sequence) -> "SwitchedLinearSystem":
        if len(As) != len(Bs):
            raise ValueError(f"{len(As)} A matrices but {len(Bs)} B matrices")
        return cls(tuple(Mode(A, B) for A, B in zip(As, Bs)))

    @property
    def d(self) -> int:
        return self.modes[0].A.shape[0]

    @property
    def c(self) -> int:
        return self.modes[0].B.shape[1]

    @property
    def N(self) -> int:
        return len(self.modes)

    def A(self, i: int) -> np.ndarray:
        return self.modes[i].A

    def B(self, i: int) -> np.ndarray:
        return self.modes[i].B


@dataclass(frozen=True, eq=False)
class FeedbackLaw:
    """
    Per-mode linear feedback ``phi(xi, i) = K_i xi``.

    General positively homogeneous laws would subclass this and override
    `apply` and `gain_bound`; only the linear case is provided.
    """
    gains: tuple

    def __post_init__(self):
        gains = tuple(_as_matrix(K, f"K[{i}]") for i, K in enumerate(self.gains))
        if not gains:
            raise ValueError("A feedback law needs at least one gain")
        shape = gains[0].shape
        for i, K in enumerate(gains):
            if K.shape != shape:
                raise ValueError(f"K[{i}] has shape {K.shape}, expected {shape}")
        object.__setattr__(self, "gains", gains)

    def K(self, i: int) -> np.ndarray:
        return self.gains[i]

    def apply(self, xi, i: int) -> np.ndarray:
        return self.gains[i] @ np.asarray(xi, dtype=float)

    def gain_bound(self) -> float:
        """L = max over modes of the largest singular value of K_i."""
        return max(float(np.linalg.norm(K, 2)) for K in self.gains)

    def check_homogeneity(self, rng=None, samples: int = 8) -> bool:
        """Assert phi(0, i) = 0 and phi(s xi, i) = s phi(xi, i) on samples."""
        rng = np.random.default_rng(rng)
        d = self.gains[0].shape[1]
        for i in range(len(self.gains)):
            if np.any(self.apply(np.zeros(d), i) != 0):
                return False
            for _ in range(samples):
                xi = rng.standard_normal(d)
                s = rng.uniform(0, 10)
                if not np.allclose(self.apply(s * xi, i), s * self.apply(xi, i), rtol=1e-12, atol=1e-12):
                    return False
        return True


@dataclass(frozen=True)
class StabilizabilityCertificate:
    """
    Constants of the closed-loop decay bound

        ||x(t)|| <= D ||x(0)|| exp(mu1 N_sigma(t, 0) - mu2 t).

    ``D >= 1`` is enforced: at t = 0 the bound reads ||x(0)|| <= D ||x(0)||.
    """
    D: float
    mu1: float
    mu2: float

    def __post_init__(self):
        for name in ("D", "mu1", "mu2"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"certificate {name} must be finite")
        if self.D < 1:
            raise ValueError(f"certificate D must be >= 1, got {self.D}")
        if self.mu1 < 0:
            raise ValueError(f"certificate mu1 must be >= 0, got {self.mu1}")
        if self.mu2 <= 0:
            raise ValueError(f"certificate mu2 must be > 0, got {self.mu2}")

    def admissible(self, tau_a: float) -> bool:
        """True iff mu1 / tau_a < mu2."""
        return self.mu1 / tau_a < self.mu2


def _check_compatible(sys: SwitchedLinearSystem, fb: FeedbackLaw):
    if len(fb.gains) != sys.N:
        raise ValueError(f"{len(fb.gains)} gains for a {sys.N}-mode system")
    if fb.gains[0].shape != (sys.c, sys.d):
        raise ValueError(f"gains have shape {fb.gains[0].shape}, expected {(sys.c, sys.d)}")


def log_norm(M) -> float:
    """
    Logarithmic 2-norm (matrix measure) of a square matrix.

    Returns ``0.5 * lambda_max(M + M^T)``.
    """
    M = _as_matrix(M)
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"log_norm needs a square matrix, got shape {M.shape}")
    return float(0.5 * np.linalg.eigvalsh(M + M.T)[-1])


def _max_pairwise_norm(mats) -> float:
    best = 0.0
    for i in range(len(mats)):
        for j in range(i + 1, len(mats)):
            best = max(best, float(np.linalg.norm(mats[i] - mats[j], 2)))
    return best


def system_constants(sys: SwitchedLinearSystem, fb: FeedbackLaw) -> SystemConstants:
    """
    Constants nu, Delta1, Delta2 and L used by the parameter condition.

    Returns
    -------
    SystemConstants
        ``nu`` = max_i log_norm(A_i); ``delta1`` = max_ij ||A_i - A_j||;
        ``delta2`` = max_ij ||B_i - B_j||; ``L`` = max_i ||K_i||.
    """
    _check_compatible(sys, fb)
    nu = max(log_norm(m.A) for m in sys.modes)
    delta1 = _max_pairwise_norm([m.A for m in sys.modes])
    delta2 = _max_pairwise_norm([m.B for m in sys.modes])
    return SystemConstants(nu=nu, delta1=delta1, delta2=delta2, L=fb.gain_bound())


def closed_loop_matrix(sys: SwitchedLinearSystem, fb: FeedbackLaw, i: int) -> np.ndarray:
    return sys.A(i) + sys.B(i) @ fb.K(i)


def verify_certificate_lognorm(sys, fb, cert, tol=CERTIFICATE_TOL) -> CertificateCheck:
    """
    Sufficient test of the certificate for D = 1, mu1 = 0.

    If log_norm(A_i + B_i K_i) <= -mu2 for every mode, ||x|| decays at least
    at rate mu2 under any switching, so the bound holds with D = 1, mu1 = 0.

    Returns
    -------
    CertificateCheck
        ``status`` is True, False, or ``"inconclusive"`` when the
        certificate is not of the (D = 1, mu1 = 0) form. ``margins[i]`` is
        ``-mu2 - log_norm(A_i + B_i K_i)`` (>= -tol means mode i passes).
    """
    _check_compatible(sys, fb)
    margins = np.array([-cert.mu2 - log_norm(closed_loop_matrix(sys, fb, i)) for i in range(sys.N)])
    if cert.D != 1 or cert.mu1 != 0:
        return CertificateCheck("inconclusive", margins)
    return CertificateCheck(bool(np.all(margins >= -tol)), margins)


def augmented_matrix(A_true, B_true, A_model, B_model, K_model) -> np.ndarray:
    """Generator of z = (x, xhat) under u = K_model xhat."""
    d = A_true.shape[0]
    G = np.zeros((2 * d, 2 * d))
    G[:d, :d] = A_true
    G[:d, d:] = B_true @ K_model
    G[d:, d:] = A_model + B_model @ K_model
    return G


def propagate_segment(A_true, B_true, A_model, B_model, K_model, x0, xhat0, dt):
    """
    Exact joint propagation of the plant and the controller's model.

    Over a segment where the true mode and the model mode are constant, the
    plant runs under u(t) = K_model xhat(t) while xhat follows the model's
    closed loop. Both are advanced by the matrix exponential of the
    augmented generator.

    Returns
    -------
    (x1, xhat1) : tuple of ndarray
    """
    if dt < 0:
        raise ValueError(f"dt must be non-negative, got {dt}")
    x0 = np.asarray(x0, dtype=float)
    xhat0 = np.asarray(xhat0, dtype=float)
    if dt == 0:
        return x0.copy(), xhat0.copy()
    G = augmented_matrix(np.asarray(A_true, float), np.asarray(B_true, float),
                         np.asarray(A_model, float), np.asarray(B_model, float),
                         np.asarray(K_model, float))
    z = expm(G * dt) @ np.concatenate([x0, xhat0])
    d = x0.shape[0]
    return z[:d], z[d:]


class FlowCache:
    """
    Memoized exponentials keyed by (tag, tick count).

    The simulator and controller evaluate the same handful of generators at
    the same few durations over and over; `expm` is the cost center.
    """

    def __init__(self, base_tick: float):
        self.base_tick = float(base_tick)
        self._cache = {}

    def get(self, key, generator: np.ndarray, ticks: int) -> np.ndarray:
        k = (key, int(ticks))
        E = self._cache.get(k)
        if E is None:
            E = expm(generator * (ticks * self.base_tick))
            self._cache[k] = E
        return E

    def __len__(self):
        return len(self._cache)


###
### Loading
###

def system_from_document(doc: Mapping):
    """
    Build (system, feedback, certificate) from a parsed system document.

    The schema is::

        {"modes": [{"A": [[..]], "B": [[..]], "K": [[..]]}, ...],
         "certificate": {"D": .., "mu1": .., "mu2": ..}}

    The certificate is optional (None if absent).
    """
    if not isinstance(doc, Mapping) or "modes" not in doc:
        raise ConfigError("System document must be a mapping with a 'modes' list")
    modes = doc["modes"]
    if not isinstance(modes, list) or not modes:
        raise ConfigError("'modes' must be a non-empty list")
    As, Bs, Ks = [], [], []
    for i, m in enumerate(modes):
        for key in ("A", "B", "K"):
            if key not in m:
                raise ConfigError(f"Mode {i} is missing key {key!r}")
        As.append(m["A"])
        Bs.append(m["B"])
        Ks.append(m["K"])
    try:
        sys = SwitchedLinearSystem.from_matrices(As, Bs)
        fb = FeedbackLaw(tuple(Ks))
        _check_compatible(sys, fb)
        cert = None
        if doc.get("certificate") is not None:
            c = doc["certificate"]
            cert = StabilizabilityCertificate(D=float(c["D"]), mu1=float(c["mu1"]), mu2=float(c["mu2"]))
    except (ValueError, KeyError, TypeError) as e:
        raise ConfigError(f"Invalid system document: {e}") from e
    return sys, fb, cert


def system_to_document(sys: SwitchedLinearSystem, fb: FeedbackLaw, cert=None) -> dict:
    doc = {
        "modes": [
            {"A": m.A.tolist(), "B": m.B.tolist(), "K": K.tolist()}
            for m, K in zip(sys.modes, fb.gains)
        ]
    }
    if cert is not None:
        doc["certificate"] = {"D": cert.D, "mu1": cert.mu1, "mu2": cert.mu2}
    return doc
