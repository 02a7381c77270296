"""Planck and Rosseland spectra for multigroup emission.

Frequencies and temperatures are both in eV (h*nu -> nu, k*T -> T).
Energy in erg, length in cm, time in ns.

The normalized Planck integral

    P(x) = 15/pi^4 * int_0^x t^3 / (e^t - 1) dt

is evaluated with a Bernoulli (Taylor) expansion for small x and the
exponential (polylogarithm) series of the complement for large x.  The
Rosseland integral follows from P by integration by parts:

    R(x) = 15/(4 pi^4) * int_0^x t^4 e^t / (e^t - 1)^2 dt
         = P(x) - 15/(4 pi^4) * x^4 / (e^x - 1)

so that dB_g/dT = 4 a c T^3 r_g holds exactly.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from math import factorial

import numba
import numpy as np
from scipy.special import bernoulli

A_RAD = 137.0  # erg / cm^3 / eV^4
C_LIGHT = 29.9792458  # cm / ns

_PLANCK_NORM = 15.0 / np.pi**4
_ROSS_NORM = 15.0 / (4.0 * np.pi**4)
_SPLIT = 2.0
_REL_TRUNC = 1e-15

# t^3/(e^t - 1) = sum_k B_k t^(k+2) / k!  ->  int_0^x = sum_k B_k x^(k+3) / (k! (k+3))
_NTAYLOR = 60
_BERN = bernoulli(_NTAYLOR)
_TAYLOR_COEF = np.array(
    [_BERN[k] / (factorial(k) * (k + 3)) for k in range(_NTAYLOR + 1)]
)


@dataclass(frozen=True)
class SpectralConstants:
    """Radiation constant ``a`` (erg/cm^3/eV^4) and light speed ``c`` (cm/ns)."""

    a: float = A_RAD
    c: float = C_LIGHT

    def __post_init__(self):
        if not (self.a > 0 and self.c > 0):
            raise ValueError("radiation constant and speed of light must be positive")


DEFAULT_CONSTANTS = SpectralConstants()


@dataclass(frozen=True)
class GroupStructure:
    """Multigroup frequency boundaries (eV), ``G + 1`` strictly increasing values.

    The lowest group absorbs the spectrum below ``bounds[0]``; the mass above
    ``bounds[-1]`` is reported by :func:`planck_tail` and is not redistributed.
    """

    bounds: tuple

    def __post_init__(self):
        b = np.asarray(self.bounds, dtype=float)
        if b.ndim != 1 or b.size < 2:
            raise ValueError("a group structure needs at least two bounds")
        if b[0] < 0:
            raise ValueError("group bounds must be nonnegative")
        if np.any(np.diff(b) <= 0):
            raise ValueError("group bounds must be strictly increasing")
        object.__setattr__(self, "bounds", tuple(float(v) for v in b))

    @property
    def G(self) -> int:
        return len(self.bounds) - 1

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.bounds)

    @classmethod
    def gray(cls) -> "GroupStructure":
        return cls((0.0, np.inf))

    @classmethod
    def logarithmic(cls, lo: float, hi: float, G: int) -> "GroupStructure":
        return cls(tuple(np.geomspace(lo, hi, G + 1)))


def _check_x(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise ValueError("scaled frequency must be nonnegative")
    return x


@numba.njit(cache=True)
def _cdf_pair_kernel(x, coef, p, q):
    """P(x) and 1 - P(x) per entry, each summed on its accurate side."""
    for i in range(x.size):
        xi = x[i]
        if xi < _SPLIT:
            total = 0.0
            pw = xi * xi * xi
            for k in range(coef.size):
                if coef[k] != 0.0:
                    term = coef[k] * pw
                    total += term
                    if abs(term) <= _REL_TRUNC * abs(total):
                        break
                pw *= xi
            p[i] = _PLANCK_NORM * total
            q[i] = 1.0 - p[i]
        elif xi == np.inf:
            p[i] = 1.0
            q[i] = 0.0
        else:
            x2 = xi * xi
            x3 = x2 * xi
            e1 = np.exp(-xi)
            en = 1.0
            total = 0.0
            for n in range(1, 202):
                en *= e1
                inv = 1.0 / n
                term = en * inv * (x3 + inv * (3.0 * x2 + inv * (6.0 * xi + 6.0 * inv)))
                total += term
                if term <= _REL_TRUNC * total:
                    break
            q[i] = _PLANCK_NORM * total
            p[i] = 1.0 - q[i]


def _cdf_and_complement(x):
    """Return (P(x), 1 - P(x)) each computed on its accurate side."""
    x = _check_x(x)
    flat = np.ascontiguousarray(x).ravel()
    p = np.empty(flat.size)
    q = np.empty(flat.size)
    _cdf_pair_kernel(flat, _TAYLOR_COEF, p, q)
    return p.reshape(x.shape), q.reshape(x.shape)


def planck_cdf(x):
    """Fraction of the Planck spectrum below scaled frequency ``x = nu/T``."""
    p, _ = _cdf_and_complement(x)
    return p if p.ndim else float(p)


def _x4_over_expm1(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = (x > 0) & np.isfinite(x)
    xp = x[pos]
    em = np.exp(-xp)
    out[pos] = xp**4 * em / (-np.expm1(-xp))
    return out


def rosseland_cdf(x):
    """Fraction of the normalized Rosseland spectrum below ``x``."""
    p, _ = _cdf_and_complement(x)
    r = p - _ROSS_NORM * _x4_over_expm1(x)
    return r if r.ndim else float(r)


def _scaled_bounds(T, groups: GroupStructure):
    T = np.asarray(T, dtype=float)
    if np.any(~(T > 0)):
        raise ValueError("temperature must be positive")
    with np.errstate(divide="ignore", invalid="ignore"):
        x = groups.array / T[..., None]
    x[..., 0] = 0.0
    return T, x


def _differences(lo_hi_p, lo_hi_q, x):
    p, q = lo_hi_p, lo_hi_q
    use_tail = x[..., :-1] >= _SPLIT
    return np.where(use_tail, q[..., :-1] - q[..., 1:], p[..., 1:] - p[..., :-1])


# emission and the Planck-mean collapse are evaluated at the same temperature
# every iteration; remembering the last few results halves the spectral work
_FRACTION_CACHE: OrderedDict = OrderedDict()
_FRACTION_CACHE_SIZE = 8


def planck_fractions(T, groups: GroupStructure) -> np.ndarray:
    """Group fractions b_g(T) of the normalized Planck spectrum.

    Returns a read-only array of shape ``T.shape + (G,)``.
    """
    T = np.asarray(T, dtype=float)
    key = (groups.bounds, T.shape, T.tobytes())
    hit = _FRACTION_CACHE.get(key)
    if hit is not None:
        _FRACTION_CACHE.move_to_end(key)
        return hit
    T, x = _scaled_bounds(T, groups)
    p, q = _cdf_and_complement(x)
    out = np.clip(_differences(p, q, x), 0.0, 1.0)
    out.flags.writeable = False
    _FRACTION_CACHE[key] = out
    if len(_FRACTION_CACHE) > _FRACTION_CACHE_SIZE:
        _FRACTION_CACHE.popitem(last=False)
    return out


def rosseland_fractions(T, groups: GroupStructure) -> np.ndarray:
    """Group fractions r_g(T) of the normalized Rosseland spectrum (sum to 1 over all nu)."""
    T, x = _scaled_bounds(T, groups)
    p, q = _cdf_and_complement(x)
    corr = _ROSS_NORM * _x4_over_expm1(x)
    return np.clip(_differences(p - corr, q + corr, x), 0.0, None)


def planck_tail(T, groups: GroupStructure):
    """Planck mass above the top group bound, 1 - P(bounds[-1]/T)."""
    T = np.asarray(T, dtype=float)
    if np.any(~(T > 0)):
        raise ValueError("temperature must be positive")
    _, q = _cdf_and_complement(groups.bounds[-1] / T)
    return q if q.ndim else float(q)


def planck_total(T, const: SpectralConstants = DEFAULT_CONSTANTS):
    """Frequency-integrated emission B(T) = a c T^4."""
    T = np.asarray(T, dtype=float)
    out = const.a * const.c * T**4
    return out if out.ndim else float(out)


def planck_dT(T, const: SpectralConstants = DEFAULT_CONSTANTS):
    """dB/dT = 4 a c T^3."""
    T = np.asarray(T, dtype=float)
    out = 4.0 * const.a * const.c * T**3
    return out if out.ndim else float(out)


def group_emission(T, groups: GroupStructure, const: SpectralConstants = DEFAULT_CONSTANTS):
    """B_g(T) = B(T) b_g(T), shape ``T.shape + (G,)``."""
    T = np.asarray(T, dtype=float)
    return np.asarray(planck_total(T, const))[..., None] * planck_fractions(T, groups)


def group_emission_dT(T, groups: GroupStructure, const: SpectralConstants = DEFAULT_CONSTANTS):
    """dB_g/dT = 4 a c T^3 r_g(T)."""
    T = np.asarray(T, dtype=float)
    return np.asarray(planck_dT(T, const))[..., None] * rosseland_fractions(T, groups)
