"""Generalized coordinates: block shift operators, Kronecker lifts, and
Taylor-polynomial embedding of sampled signals into derivative stacks.

A generalized vector stacks a quantity and its first ``order`` time
derivatives, ``[x; x'; x''; ...]``, with each derivative occupying a
contiguous block of ``base_dim`` entries.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

# Factorials and Vandermonde conditioning degrade quickly past this order.
ORDER_CAP = 12

# Condition number above which the embedding matrix is considered suspect.
CONDITION_WARN = 1e12


@dataclass(frozen=True)
class GeneralizedVector:
    """A quantity and its first ``order`` derivatives, stacked block-wise."""

    base_dim: int
    order: int
    data: np.ndarray

    def __post_init__(self):
        if self.base_dim < 1:
            raise ValueError("base_dim must be positive")
        if self.order < 0:
            raise ValueError("order must be non-negative")
        data = np.asarray(self.data, dtype=float).reshape(-1)
        if data.size != self.base_dim * (self.order + 1):
            raise ValueError(
                f"data length {data.size} != base_dim*(order+1) = "
                f"{self.base_dim * (self.order + 1)}"
            )
        object.__setattr__(self, "data", data)

    def block(self, j: int) -> np.ndarray:
        """The j-th derivative block."""
        if not 0 <= j <= self.order:
            raise IndexError(f"derivative index {j} out of range 0..{self.order}")
        return self.data[j * self.base_dim:(j + 1) * self.base_dim]

    @classmethod
    def from_blocks(cls, blocks) -> "GeneralizedVector":
        blocks = [np.atleast_1d(np.asarray(b, dtype=float)) for b in blocks]
        base_dim = blocks[0].size
        return cls(base_dim=base_dim, order=len(blocks) - 1,
                   data=np.concatenate(blocks))


def centered_offsets(order: int) -> tuple[int, ...]:
    """Sample offsets of the default embedding window around its nominal time.

    The window spans ``order + 1`` samples; for odd orders it sits half a
    sample toward the past so that the nominal time is never extrapolated.
    """
    lead = -math.ceil(order / 2)
    return tuple(range(lead, lead + order + 1))


@dataclass(frozen=True)
class EmbeddingWindow:
    """A window of ``order + 1`` uniformly spaced measurement samples."""

    samples: np.ndarray  # (order+1, m)
    dt: float
    order: int
    offsets: tuple[int, ...] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[:, None]
        if samples.shape[0] != self.order + 1:
            raise ValueError(
                f"window needs exactly {self.order + 1} samples, "
                f"got {samples.shape[0]}"
            )
        object.__setattr__(self, "samples", samples)
        offsets = self.offsets
        if offsets is None:
            offsets = centered_offsets(self.order)
        offsets = tuple(int(k) for k in offsets)
        if len(offsets) != self.order + 1 or len(set(offsets)) != len(offsets):
            raise ValueError("offsets must be order+1 distinct integers")
        object.__setattr__(self, "offsets", offsets)


def shift_matrix(order: int, base_dim: int) -> np.ndarray:
    """Block derivative operator on generalized vectors.

    Returns the superdiagonal-ones matrix of size ``order + 1`` Kronecker the
    identity of size ``base_dim``: each derivative block moves up one slot and
    the last block is zeroed.
    """
    if order < 0:
        raise ValueError("order must be non-negative")
    if base_dim < 1:
        raise ValueError("base_dim must be positive")
    return np.kron(np.eye(order + 1, k=1), np.eye(base_dim))


def lift_matrix(m: np.ndarray, order: int, col_order: int | None = None) -> np.ndarray:
    """Lift a system matrix to generalized coordinates.

    With only ``order`` given this is ``I_{order+1} kron m`` (block diagonal
    copies of ``m``). A smaller ``col_order`` produces the rectangular lift
    used when the column quantity carries fewer derivatives than the row
    quantity: copies of ``m`` sit on the main block diagonal and the extra
    row blocks are zero.
    """
    if order < 0:
        raise ValueError("order must be non-negative")
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if col_order is None:
        col_order = order
    if col_order > order:
        raise ValueError("col_order must not exceed order")
    return np.kron(np.eye(order + 1, col_order + 1), m)


def taylor_embedding_matrix(order: int, dt: float,
                            offsets: tuple[int, ...] | None = None) -> np.ndarray:
    """Matrix mapping a generalized scalar to the window samples.

    Entry (i, j) is ``(offsets[i] * dt) ** j / j!``; row i evaluates the
    degree-``order`` Taylor polynomial at the i-th sample time, so the matrix
    sends ``[y; y'; ...; y^(order)]`` at the window's nominal time to the
    ``order + 1`` samples.
    """
    if order < 0:
        raise ValueError("order must be non-negative")
    if order > ORDER_CAP:
        raise ValueError(f"embedding order {order} exceeds cap {ORDER_CAP}")
    if dt <= 0:
        raise ValueError("dt must be positive")
    if offsets is None:
        offsets = centered_offsets(order)
    times = np.asarray(offsets, dtype=float) * dt
    cols = [times ** j / math.factorial(j) for j in range(order + 1)]
    return np.stack(cols, axis=1)


@lru_cache(maxsize=None)
def _embedding_inverse(order: int, dt: float,
                       offsets: tuple[int, ...]) -> np.ndarray:
    # Cached per (order, dt, offsets); safe under concurrent use because
    # lru_cache insertion is idempotent and the array is frozen read-only.
    #
    # The Taylor matrix factors as V @ D with V the integer-node Vandermonde
    # and D = diag(dt^j / j!). Inverting V (LU) and applying D^-1 as an exact
    # row scaling keeps the inverse accurate even though T itself mixes
    # column scales spanning many orders of magnitude.
    t = taylor_embedding_matrix(order, dt, offsets)
    cond = np.linalg.cond(t)
    if cond > CONDITION_WARN:
        warnings.warn(
            f"embedding matrix badly conditioned (cond={cond:.2e}) for "
            f"order={order}, dt={dt}",
            RuntimeWarning,
        )
    nodes = np.asarray(offsets, dtype=float)
    vander = np.stack([nodes ** j for j in range(order + 1)], axis=1)
    row_scale = np.array([math.factorial(j) / dt ** j
                          for j in range(order + 1)])
    inv = np.linalg.inv(vander) * row_scale[:, None]
    inv.flags.writeable = False
    return inv


def embedding_inverse(order: int, dt: float,
                      offsets: tuple[int, ...] | None = None) -> np.ndarray:
    """Inverse of :func:`taylor_embedding_matrix`, cached per configuration."""
    if offsets is None:
        offsets = centered_offsets(order)
    return _embedding_inverse(order, float(dt), tuple(int(k) for k in offsets))


def embed_measurements(window: EmbeddingWindow) -> GeneralizedVector:
    """Estimate the derivative stack at the window's nominal time.

    Solves the Taylor system for the window samples; exact for signals that
    are polynomials of degree <= order over the window.
    """
    inv = embedding_inverse(window.order, window.dt, window.offsets)
    stacked = inv @ window.samples
    return GeneralizedVector(base_dim=window.samples.shape[1],
                             order=window.order,
                             data=stacked.reshape(-1))


def embed_series(series: np.ndarray, dt: float, order: int) -> np.ndarray:
    """Embed every sample of a uniformly sampled series.

    Returns a (T, m*(order+1)) array whose row t holds the generalized vector
    at sample t. Interior rows use the centered window; near the series
    boundaries the window is shifted to stay inside the data and an
    off-center Taylor matrix keeps the estimate anchored at sample t.
    """
    series = np.asarray(series, dtype=float)
    if series.ndim == 1:
        series = series[:, None]
    if series.ndim != 2:
        raise ValueError("series must be 1-D or 2-D")
    n_samples, m = series.shape
    if n_samples < order + 1:
        raise ValueError(
            f"series length {n_samples} shorter than window size {order + 1}"
        )
    lead = -math.ceil(order / 2)
    out = np.empty((n_samples, m * (order + 1)))
    for t in range(n_samples):
        lo = min(max(t + lead, 0), n_samples - order - 1)
        offsets = tuple(range(lo - t, lo - t + order + 1))
        inv = embedding_inverse(order, dt, offsets)
        out[t] = (inv @ series[lo:lo + order + 1]).reshape(-1)
    return out
