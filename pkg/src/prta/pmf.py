"""Discrete probability mass functions on the integer tick grid.

A :class:`Pmf` stores ``probs[i] = P[X = i * gamma]`` densely from tick 0.
Total mass may fall short of 1 once tail mass has been truncated away;
the shortfall is what the WCDFP estimators report.

Transform-based convolution follows the classical recipe: zero-pad both
operands to a power-of-two length, multiply the real FFTs, invert.  Tiny
negative entries produced by rounding are clamped to zero and their summed
magnitude is reported on the result as ``lost_mass``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np
import scipy.fft as sp_fft

from .errors import (
    DuplicateSupportPoint,
    MassExceedsOne,
    NegativeProbability,
    PrtaError,
    TransformSizeOverflow,
    UnnormalizedInput,
    ZeroRepetitions,
)

MASS_TOL = 1e-9

# 2**27 doubles is 1 GiB per real buffer; the complex spectra double that.
DEFAULT_MAX_TRANSFORM = 1 << 27


def _trim(arr: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(arr)
    if nz.size == 0:
        return arr[:0]
    last = nz[-1] + 1
    return arr if last == arr.size else arr[:last]


class Pmf:
    """Dense PMF indexed by tick, trailing zeros trimmed.

    Instances are immutable; the backing array is flagged read-only.
    ``lost_mass`` is the magnitude clamped away by the operation that produced
    this value (0 for constructed PMFs).
    """

    __slots__ = ("probs", "total_mass", "lost_mass")

    def __init__(self, probs: Iterable[float] | np.ndarray, lost_mass: float = 0.0):
        arr = np.array(probs, dtype=np.float64, copy=True).reshape(-1)
        if not np.all(np.isfinite(arr)):
            raise PrtaError("probabilities must be finite")
        if arr.size and arr.min() < 0.0:
            raise NegativeProbability(f"negative entry {arr.min()!r}")
        arr = _trim(arr)
        mass = float(arr.sum())
        if mass > 1.0 + MASS_TOL:
            raise MassExceedsOne(f"total mass {mass!r} exceeds 1")
        arr.setflags(write=False)
        self.probs = arr
        self.total_mass = mass
        self.lost_mass = float(lost_mass)

    @classmethod
    def _wrap(cls, arr: np.ndarray, lost_mass: float = 0.0) -> "Pmf":
        # Trusted fast path for arrays produced internally (non-negative, finite).
        obj = cls.__new__(cls)
        arr = _trim(arr)
        arr.setflags(write=False)
        obj.probs = arr
        obj.total_mass = float(arr.sum())
        obj.lost_mass = float(lost_mass)
        return obj

    @classmethod
    def delta(cls, tick: int, mass: float = 1.0) -> "Pmf":
        if tick < 0:
            raise PrtaError("support points must be non-negative")
        arr = np.zeros(tick + 1)
        arr[tick] = mass
        return cls(arr)

    @classmethod
    def empty(cls) -> "Pmf":
        return cls._wrap(np.zeros(0))

    def __len__(self) -> int:
        return self.probs.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, Pmf):
            return NotImplemented
        return np.array_equal(self.probs, other.probs)

    __hash__ = None

    @property
    def max_tick(self) -> int:
        """Largest tick with positive mass (-1 for the empty PMF)."""
        return self.probs.size - 1

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.probs)

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probs)

    def pairs(self) -> list[tuple[int, float]]:
        return [(int(i), float(self.probs[i])) for i in self.support()]

    def __repr__(self) -> str:
        if self.probs.size <= 8:
            body = ", ".join(f"{i}: {p:.6g}" for i, p in self.pairs())
            return f"Pmf({{{body}}})"
        return f"Pmf(len={self.probs.size}, mass={self.total_mass:.12g})"


def pmf_from_pairs(pairs: Iterable[tuple[int, float]]) -> Pmf:
    """Build a dense PMF from ``(tick, probability)`` pairs."""
    pairs = list(pairs)
    if not pairs:
        return Pmf.empty()
    ticks = [int(t) for t, _ in pairs]
    if min(ticks) < 0:
        raise PrtaError("support points must be non-negative")
    if len(set(ticks)) != len(ticks):
        raise DuplicateSupportPoint("support points must be distinct")
    arr = np.zeros(max(ticks) + 1)
    for t, p in pairs:
        if p < 0:
            raise NegativeProbability(f"P[X={t}] = {p!r} is negative")
        arr[int(t)] = p
    return Pmf(arr)


def cdf_at(p: Pmf, t: int) -> float:
    """``P[X <= t]`` for integer tick ``t``."""
    if t < 0:
        return 0.0
    if t >= p.max_tick:
        return p.total_mass
    # correctly rounded partial sums keep the CDF monotone in t
    return min(math.fsum(p.probs[: t + 1].tolist()), p.total_mass)


def _require_normalized(*pmfs: Pmf) -> None:
    for p in pmfs:
        if abs(p.total_mass - 1.0) > MASS_TOL:
            raise UnnormalizedInput(f"total mass {p.total_mass!r} is not 1")


def stochastically_dominated_by(x: Pmf, y: Pmf, atol: float = 1e-12) -> bool:
    """True iff ``x`` precedes ``y`` in distribution (F_x >= F_y everywhere)."""
    _require_normalized(x, y)
    n = max(len(x), len(y))
    fx = np.cumsum(np.pad(x.probs, (0, n - len(x))))
    fy = np.cumsum(np.pad(y.probs, (0, n - len(y))))
    return bool(np.all(fx >= fy - atol))


def convolve_direct(a: Pmf, b: Pmf) -> Pmf:
    """Exact linear convolution, O(len(a) * len(b))."""
    if not len(a) or not len(b):
        return Pmf.empty()
    return Pmf._wrap(np.convolve(a.probs, b.probs))


def transform_length(n: int) -> int:
    """Smallest power of two >= n."""
    return 1 << max(0, (n - 1).bit_length())


def convolve_fft(a: Pmf, b: Pmf, max_length: int = DEFAULT_MAX_TRANSFORM) -> Pmf:
    """Linear convolution through zero-padded real FFTs.

    The result's ``lost_mass`` holds the magnitude of negative round-off
    entries that were clamped to zero.
    """
    if not len(a) or not len(b):
        return Pmf.empty()
    n = len(a) + len(b) - 1
    size = transform_length(n)
    if size > max_length:
        raise TransformSizeOverflow(f"transform length {size} exceeds ceiling {max_length}")
    fa = sp_fft.rfft(a.probs, size)
    if b is a:
        spec = fa * fa
    else:
        spec = fa * sp_fft.rfft(b.probs, size)
    out = sp_fft.irfft(spec, size, overwrite_x=True)[:n]
    neg = out < 0.0
    lost = 0.0
    if neg.any():
        lost = float(-out[neg].sum())
        out[neg] = 0.0
    return Pmf._wrap(out, lost)


def truncate_and_sum(p: Pmf, bound: int) -> tuple[Pmf, float]:
    """Keep ticks in ``[0, bound)``; return the kept PMF and the removed mass."""
    if bound < 0:
        raise PrtaError("truncation bound must be non-negative")
    if bound >= len(p):
        return p, 0.0
    removed = float(p.probs[bound:].sum())
    kept = Pmf._wrap(p.probs[:bound].copy(), p.lost_mass)
    return kept, removed


class PowerPieces(NamedTuple):
    """Binary-decomposition addends of a k-fold self-convolution."""

    pieces: list[Pmf]  # ascending powers of two, one per set bit of k
    powers: list[int]
    lost_mass: float
    squarings: int


def power_pieces(p: Pmf, k: int, truncation: int | None = None) -> PowerPieces:
    """Square ``p`` repeatedly, keeping the powers selected by the bits of ``k``.

    With ``truncation`` the operand and every square are cut to
    ``[0, truncation)``; that is exact for the kept mass because all addends
    are non-negative.
    """
    if k < 1:
        raise ZeroRepetitions("k must be >= 1")
    cur = p
    if truncation is not None:
        cur, _ = truncate_and_sum(cur, truncation)
    pieces, powers = [], []
    lost = 0.0
    squarings = 0
    power = 1
    while True:
        if k & 1:
            pieces.append(cur)
            powers.append(power)
        k >>= 1
        if not k:
            break
        cur = convolve_fft(cur, cur)
        lost += cur.lost_mass
        squarings += 1
        power *= 2
        if truncation is not None:
            cur, _ = truncate_and_sum(cur, truncation)
    return PowerPieces(pieces, powers, lost, squarings)


def self_conv_power(p: Pmf, k: int, truncation: int | None = None) -> tuple[Pmf, float]:
    """Distribution of the sum of ``k`` independent copies of ``p``.

    Returns ``(pmf, removed_mass)`` where ``removed_mass`` is
    ``total_mass(p) ** k - total_mass(pmf)``.
    """
    pp = power_pieces(p, k, truncation)
    acc = pp.pieces[0]
    lost = pp.lost_mass
    for piece in pp.pieces[1:]:
        acc = convolve_fft(acc, piece)
        lost += acc.lost_mass
        if truncation is not None:
            acc, _ = truncate_and_sum(acc, truncation)
    if lost and acc is not p:
        acc = Pmf._wrap(acc.probs, lost)
    return acc, p.total_mass**k - acc.total_mass


@dataclass(frozen=True)
class Moments:
    mean: float
    variance: float
    rho3: float  # third absolute central moment


def moments(p: Pmf, gamma: float = 1.0) -> Moments:
    """Mean, variance and third absolute central moment, in units of ``gamma``."""
    _require_normalized(p)
    ticks = np.arange(len(p), dtype=np.float64)
    w = p.probs
    mean = float(np.dot(ticks, w))
    dev = np.abs(ticks - mean)
    var = float(np.dot(dev * dev, w))
    rho3 = float(np.dot(dev * dev * dev, w))
    return Moments(mean * gamma, var * gamma**2, rho3 * gamma**3)
