"""
The m-point ball quantizer.

The point set is the grid ``beta * S^d`` with ``beta = 2 alpha / sqrt(d)``
and ``S = {-h, .., h}``, ``h = round(sqrt(d) / (2 alpha))``, projected onto
the closed unit ball. For every ``||xi|| <= 1`` the nearest point is within
``alpha`` of ``xi``, and every ``||xi|| <= alpha / sqrt(d)`` maps to 0.

Rounding uses round-half-to-even (Python's `round`). Points are indexed in
lexicographic order of their grid coordinates; the point set is rebuilt
from ``(d, alpha)`` wherever it is needed and never serialized.
"""

from __future__ import annotations

import functools
import logging
import math
from typing import Mapping

import numpy as np
from scipy.spatial import cKDTree

from .util import ConfigError, ProtocolError

logger = logging.getLogger(__name__)

# refuse to build quantizers with more grid points than this
MHAT_LIMIT = 2**40

# projections closer than this are the same point
DEDUP_DECIMALS = 12

# distances within this of the minimum count as ties
TIE_TOL = 1e-12


def half_width(d: int, alpha: float) -> int:
    """h = round(sqrt(d) / (2 alpha)), ties to even."""
    return int(round(math.sqrt(d) / (2.0 * alpha)))


def mhat(d: int, alpha: float) -> int:
    """Alphabet size bound (2 h + 1)^d."""
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    return (2 * half_width(d, alpha) + 1) ** d


def index_bits(m: int) -> int:
    """ceil(log2 m): width of a fixed-width code for m symbols."""
    return (int(m) - 1).bit_length()


class BallQuantizer:
    """
    Nearest-point quantizer onto a finite subset of the unit ball.

    Parameters
    ----------
    d : int
        Dimension.
    alpha : float
        Accuracy parameter (> 0).

    Attributes
    ----------
    beta : float
        Grid pitch ``2 alpha / sqrt(d)``.
    coords : ndarray of int, shape (m, d)
        Pre-projection grid coordinates of each point.
    points : ndarray, shape (m, d)
        The point set (norm <= 1), in index order.
    m, m_hat : int
        Number of distinct points and its upper bound.
    """

    def __init__(self, d: int, alpha: float):
        self.d = int(d)
        self.alpha = float(alpha)
        self.m_hat = mhat(self.d, self.alpha)
        if self.m_hat > MHAT_LIMIT:
            raise ConfigError(
                f"Quantizer with d={d}, alpha={alpha} needs {self.m_hat} grid points "
                f"(limit {MHAT_LIMIT}); increase alpha"
            )
        self.beta = 2.0 * self.alpha / math.sqrt(self.d)

        h = half_width(self.d, self.alpha)
        axis = np.arange(-h, h + 1, dtype=np.int64)
        coords = np.stack(np.meshgrid(*([axis] * self.d), indexing="ij"), axis=-1).reshape(-1, self.d)

        # project onto the unit ball (radial scaling of exterior points)
        points = self.beta * coords.astype(float)
        norms = np.linalg.norm(points, axis=1)
        outside = norms > 1.0
        points[outside] /= norms[outside, None]

        # drop coincident projections, keeping the first in grid order
        _, first = np.unique(np.round(points, DEDUP_DECIMALS), axis=0, return_index=True)
        keep = np.sort(first)
        self.coords = coords[keep]
        self.points = points[keep]
        self.points.flags.writeable = False
        self.coords.flags.writeable = False
        self.m = len(self.points)
        self.zero_index = int(np.flatnonzero(np.all(self.coords == 0, axis=1))[0])
        self._tree = cKDTree(self.points)

        if self.m == 1:
            logger.warning("alpha=%g >= sqrt(d)=%g: the quantizer has a single point", alpha, math.sqrt(d))
        logger.debug("built quantizer d=%d alpha=%g: m=%d, m_hat=%d", self.d, self.alpha, self.m, self.m_hat)

    def __repr__(self):
        return f"BallQuantizer(d={self.d}, alpha={self.alpha}, m={self.m})"

    @property
    def bits(self) -> int:
        return index_bits(self.m)

    def quantize(self, xi) -> tuple:
        """
        Nearest point to ``xi``.

        Ties (distances within TIE_TOL of the minimum) go to the smallest
        index.

        Returns
        -------
        (index, point) : tuple of (int, ndarray)
        """
        xi = np.asarray(xi, dtype=float).reshape(-1)
        if xi.shape != (self.d,):
            raise ValueError(f"expected a {self.d}-vector, got shape {xi.shape}")
        if not np.all(np.isfinite(xi)):
            raise ValueError("cannot quantize a non-finite vector")
        dist, idx = self._tree.query(xi)
        cand = self._tree.query_ball_point(xi, dist + TIE_TOL)
        if cand:
            idx = min(cand)
        idx = int(idx)
        return idx, self.points[idx]

    def quantize_many(self, xis) -> np.ndarray:
        """Indices of the nearest points to each row of ``xis``."""
        xis = np.asarray(xis, dtype=float).reshape(-1, self.d)
        if not np.all(np.isfinite(xis)):
            raise ValueError("cannot quantize non-finite vectors")
        dist, idx = self._tree.query(xis)
        balls = self._tree.query_ball_point(xis, dist + TIE_TOL)
        return np.array([min(b) if b else i for b, i in zip(balls, idx)], dtype=np.int64)

    def point(self, index: int) -> np.ndarray:
        if not 0 <= index < self.m:
            raise ProtocolError(f"quantizer index {index} out of range [0, {self.m})")
        return self.points[index]

    def encode_index(self, index: int) -> str:
        """Fixed-width binary code of ``index`` (``bits`` characters)."""
        if not 0 <= index < self.m:
            raise ProtocolError(f"quantizer index {index} out of range [0, {self.m})")
        return format(index, f"0{self.bits}b") if self.bits else ""

    def decode_index(self, code: str) -> int:
        if len(code) != self.bits or any(ch not in "01" for ch in code):
            raise ProtocolError(f"expected a {self.bits}-bit code, got {code!r}")
        index = int(code, 2) if code else 0
        if index >= self.m:
            raise ProtocolError(f"code {code!r} decodes to index {index} >= m={self.m}")
        return index

    def to_document(self) -> dict:
        return {"d": self.d, "alpha": self.alpha}


@functools.lru_cache(maxsize=32)
def build(d: int, alpha: float) -> BallQuantizer:
    """Cached `BallQuantizer` for ``(d, alpha)``; coder and controller share it."""
    return BallQuantizer(d, alpha)


def from_document(doc: Mapping) -> BallQuantizer:
    try:
        return build(int(doc["d"]), float(doc["alpha"]))
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"Invalid quantizer document: {e}") from e
