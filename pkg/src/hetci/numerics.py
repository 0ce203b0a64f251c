"""Deterministic numerical primitives.

Three independent facilities live here:

* ``normal_quantile`` -- the standard normal quantile function, computed by
  the AS 241 rational approximation (double-precision branch), with an
  optional Halley polish step against an erfc-based CDF.
* ``RandomStream`` / ``derive_stream`` -- counter-based uniform streams built
  on the SplitMix64 finalizer.  Output ``i`` of a stream is a pure function
  of ``(base_seed, substream_id, i)``, so streams are reproducible across
  runs, platforms and degrees of parallelism, and can be generated in bulk
  with numpy without changing any value.
* ``find_root_increasing`` -- plain bisection for monotone nondecreasing
  functions, converging to the leftmost solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import erfc as _erfc

from .errors import BracketingError, DomainError

__all__ = [
    "RandomStream",
    "derive_stream",
    "uniform_matrix",
    "normal_cdf",
    "normal_quantile",
    "find_root_increasing",
]

_MASK64 = (1 << 64) - 1
# 2**64 / golden ratio, the SplitMix64 increment.
_GOLDEN = 0x9E3779B97F4A7C15
_MIX_M1 = 0xBF58476D1CE4E5B9
_MIX_M2 = 0x94D049BB133111EB
_TWO_NEG53 = 2.0 ** -53
_SQRT2 = math.sqrt(2.0)


# ---------------------------------------------------------------------------
# SplitMix64-based counter streams
# ---------------------------------------------------------------------------

def _mix64(x: int) -> int:
    """SplitMix64 finalizer: a bijective avalanche mix on 64-bit words."""
    x &= _MASK64
    x = ((x ^ (x >> 30)) * _MIX_M1) & _MASK64
    x = ((x ^ (x >> 27)) * _MIX_M2) & _MASK64
    return x ^ (x >> 31)


def _mix64_array(x: np.ndarray) -> np.ndarray:
    """Vectorized SplitMix64 finalizer (uint64 arithmetic wraps mod 2**64)."""
    x = x.astype(np.uint64, copy=True)
    x ^= x >> np.uint64(30)
    x *= np.uint64(_MIX_M1)
    x ^= x >> np.uint64(27)
    x *= np.uint64(_MIX_M2)
    x ^= x >> np.uint64(31)
    return x


def _stream_key(base_seed: int, substream_id: int) -> int:
    """Mix a (seed, substream) pair into one 64-bit stream key.

    key = mix64( mix64(seed) XOR ((substream_id + 1) * GOLDEN) ).  Distinct
    substream ids give distinct keys, and two distinct keys produce streams
    that differ at every position (the word at position i is a bijection of
    key + (i+1)*GOLDEN).
    """
    s = _mix64(base_seed & _MASK64)
    t = ((substream_id + 1) * _GOLDEN) & _MASK64
    return _mix64(s ^ t)


def _word_to_unit(word: int) -> float:
    # Top 53 bits -> multiple of 2**-53 in [0, 1).  The all-zero word
    # (probability 2**-53) is remapped to 2**-53 so inverse-CDF transforms
    # never see u == 0.
    k = word >> 11
    return (k if k else 1) * _TWO_NEG53


@dataclass
class RandomStream:
    """Deterministic uniform substream.

    Word ``i`` of the stream is ``mix64(key + (i+1)*GOLDEN)`` where ``key``
    is derived from ``(base_seed, substream_id)``; see :func:`_stream_key`.
    The stream owns a position counter and is not safe for concurrent use;
    give each worker its own substream instead.
    """

    base_seed: int
    substream_id: int
    _key: int = field(init=False, repr=False)
    _pos: int = field(default=0, init=False, repr=False)

    def __post_init__(self) -> None:
        if self.substream_id < 0:
            raise DomainError(
                f"substream_id must be >= 0, got {self.substream_id}"
            )
        self._key = _stream_key(self.base_seed, self.substream_id)

    def uniform01(self) -> float:
        """Next uniform variate in [0, 1) with 53-bit resolution."""
        i = self._pos
        self._pos += 1
        return _word_to_unit(_mix64((self._key + (i + 1) * _GOLDEN) & _MASK64))

    def uniforms(self, count: int) -> np.ndarray:
        """Next ``count`` uniforms as a float64 array; advances the stream."""
        if count < 0:
            raise DomainError(f"count must be >= 0, got {count}")
        idx = np.arange(self._pos + 1, self._pos + count + 1, dtype=np.uint64)
        self._pos += count
        words = _mix64_array(np.uint64(self._key) + idx * np.uint64(_GOLDEN))
        return _words_to_units(words)


def _words_to_units(words: np.ndarray) -> np.ndarray:
    k = words >> np.uint64(11)
    np.maximum(k, np.uint64(1), out=k)
    return k.astype(np.float64) * _TWO_NEG53


def derive_stream(base_seed: int, substream_id: int) -> RandomStream:
    """Create the substream identified by ``(base_seed, substream_id)``."""
    return RandomStream(base_seed, substream_id)


def uniform_matrix(base_seed: int, substream_ids: Sequence[int], count: int) -> np.ndarray:
    """First ``count`` uniforms of many substreams at once.

    Returns an array of shape ``(len(substream_ids), count)`` whose row ``r``
    equals ``derive_stream(base_seed, substream_ids[r]).uniforms(count)``
    exactly.  This is the bulk path used by the Monte Carlo engine.
    """
    ids = np.asarray(substream_ids, dtype=np.int64)
    if ids.size and ids.min() < 0:
        raise DomainError("substream ids must be >= 0")
    s = np.uint64(_mix64(base_seed & _MASK64))
    t = (ids.astype(np.uint64) + np.uint64(1)) * np.uint64(_GOLDEN)
    keys = _mix64_array(s ^ t)
    ctr = np.arange(1, count + 1, dtype=np.uint64) * np.uint64(_GOLDEN)
    words = _mix64_array(keys[:, None] + ctr[None, :])
    return _words_to_units(words)


# ---------------------------------------------------------------------------
# Standard normal CDF and quantile
# ---------------------------------------------------------------------------

def normal_cdf(x):
    """Standard normal CDF, accurate in both tails (erfc-based)."""
    arr = np.asarray(x, dtype=np.float64)
    res = 0.5 * _erfc(-arr / _SQRT2)
    return float(res) if arr.ndim == 0 else res


# AS 241 (PPND16) coefficients, double-precision branch.
_AS241_A = (
    3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
    1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
    3.3430575583588128105e4, 2.5090809287301226727e3,
)
_AS241_B = (
    1.0, 4.2313330701600911252e1, 6.8718700749205790830e2,
    5.3941960214247511077e3, 2.1213794301586595867e4, 3.9307895800092710610e4,
    2.8729085735721942674e4, 5.2264952788528545610e3,
)
_AS241_C = (
    1.42343711074968357734e0, 4.63033784615654529590e0,
    5.76949722146069140550e0, 3.64784832476320460504e0,
    1.27045825245236838258e0, 2.41780725177450611770e-1,
    2.27238449892691845833e-2, 7.74545014278341407640e-4,
)
_AS241_D = (
    1.0, 2.05319162663775882187e0, 1.67638483018380384940e0,
    6.89767334985100004550e-1, 1.48103976427480074590e-1,
    1.51986665636164571966e-2, 5.47593808499534494600e-4,
    1.05075007164441684324e-9,
)
_AS241_E = (
    6.65790464350110377720e0, 5.46378491116411436990e0,
    1.78482653991729133580e0, 2.96560571828504891230e-1,
    2.65321895265761230930e-2, 1.24266094738807843860e-3,
    2.71155556874348757815e-5, 2.01033439929228813265e-7,
)
_AS241_F = (
    1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1,
    1.48753612908506148525e-2, 7.86869131145613259100e-4,
    1.84631831751005468180e-5, 1.42151175831644588870e-7,
    2.04426310338993978564e-15,
)


def _horner(coeffs, r):
    acc = np.full_like(r, coeffs[-1])
    for c in reversed(coeffs[:-1]):
        acc = acc * r + c
    return acc


def _ndtri_as241(p: np.ndarray) -> np.ndarray:
    """AS 241 rational approximation on a strictly-interior float64 array."""
    out = np.empty_like(p)
    q = p - 0.5
    central = np.abs(q) <= 0.425
    if central.any():
        qc = q[central]
        r = 0.180625 - qc * qc
        out[central] = qc * _horner(_AS241_A, r) / _horner(_AS241_B, r)
    tails = ~central
    if tails.any():
        qt = q[tails]
        r = np.where(qt < 0.0, p[tails], 1.0 - p[tails])
        r = np.sqrt(-np.log(r))
        val = np.empty_like(r)
        near = r <= 5.0
        if near.any():
            rn = r[near] - 1.6
            val[near] = _horner(_AS241_C, rn) / _horner(_AS241_D, rn)
        far = ~near
        if far.any():
            rf = r[far] - 5.0
            val[far] = _horner(_AS241_E, rf) / _horner(_AS241_F, rf)
        out[tails] = np.where(qt < 0.0, -val, val)
    return out


def normal_quantile(p, *, refine: bool = False):
    """Standard normal quantile function on (0, 1).

    Accepts a float or an ndarray.  The AS 241 approximation alone is
    accurate to about 1e-15 relative error in z; ``refine=True`` applies one
    Halley step against the erfc-based CDF, pushing the result to within an
    ulp or two of correct rounding (at the cost of determinism being tied to
    the platform's erfc).
    """
    arr = np.asarray(p, dtype=np.float64)
    flat = np.atleast_1d(arr)
    if flat.size == 0:
        return arr.copy()
    if not np.all((flat > 0.0) & (flat < 1.0)):
        raise DomainError("normal_quantile requires 0 < p < 1")
    z = _ndtri_as241(flat)
    if refine:
        # Halley's method for Phi(z) = p: near-exact with one step because
        # the starting point is already correct to ~1e-15.
        err = 0.5 * _erfc(-z / _SQRT2) - flat
        u = err * np.sqrt(2.0 * np.pi) * np.exp(0.5 * z * z)
        z = z - u / (1.0 + 0.5 * z * u)
    return float(z[0]) if arr.ndim == 0 else z.reshape(arr.shape)


# ---------------------------------------------------------------------------
# Bisection root finding
# ---------------------------------------------------------------------------

_MAX_BISECT = 600


def find_root_increasing(
    f: Callable[[float], float],
    target: float,
    bracket_lo: float,
    bracket_hi: float,
    *,
    xtol_rel: float = 1e-12,
    max_expand: int = 200,
) -> float:
    """Leftmost x with f(x) >= target, for monotone nondecreasing f.

    If the initial bracket does not satisfy f(lo) <= target <= f(hi) it is
    expanded outward by doubling steps, at most ``max_expand`` times per
    side, before raising :class:`BracketingError`.  Bisection then runs until
    the bracket width is at most ``xtol_rel * max(1, |x|)``; on a plateau
    where f equals the target this converges to the left edge.
    """
    lo = float(bracket_lo)
    hi = float(bracket_hi)
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
        raise DomainError(f"invalid bracket [{bracket_lo}, {bracket_hi}]")

    step = max(hi - lo, 1.0)
    for _ in range(max_expand):
        if f(lo) <= target:
            break
        lo -= step
        step *= 2.0
    else:
        raise BracketingError(
            f"could not bracket target {target} from below after "
            f"{max_expand} expansions"
        )
    step = max(hi - lo, 1.0)
    for _ in range(max_expand):
        if f(hi) >= target:
            break
        hi += step
        step *= 2.0
    else:
        raise BracketingError(
            f"could not bracket target {target} from above after "
            f"{max_expand} expansions"
        )

    if hi - lo <= xtol_rel * max(1.0, abs(hi)):
        return hi
    for _ in range(_MAX_BISECT):
        mid = 0.5 * (lo + hi)
        if f(mid) >= target:
            hi = mid
        else:
            lo = mid
        if hi - lo <= xtol_rel * max(1.0, abs(mid)):
            break
    return hi
