"""Moments of box-truncated Gaussians and the bivariate normal CDF.

Everything here works on standardized coordinates internally; the public
entry points accept arbitrary means and (co)variances and shift/scale as
needed.  Bounds may be infinite, which encodes one-sided or absent
truncation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import InfeasibleBoxError

__all__ = [
    "BoxBounds",
    "TruncatedMoments",
    "bivariate_normal_mass",
    "std_normal_cdf",
    "std_normal_pdf",
    "truncated_moments_1d",
    "truncated_moments_2d",
]

_SQRT_2 = math.sqrt(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)

# correlations closer to +-1 than this get the degenerate 1-D treatment
RHO_DEGENERATE_TOL = 1e-9
# 2-D boxes with less mass than this are rejected as infeasible
MIN_BOX_MASS_2D = 1e-12
# 1-D intervals with less mass than this trigger the midpoint surrogate
MIN_MASS_1D = 1e-300


def std_normal_pdf(x):
    """Density of the standard normal at ``x`` (scalar or array)."""
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) / _SQRT_2PI
    return float(out) if out.ndim == 0 else out


def std_normal_cdf(x):
    """Standard normal CDF, evaluated through the complementary error
    function so the absolute error stays near machine precision."""
    out = special.ndtr(np.asarray(x, dtype=float))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class BoxBounds:
    """Axis-aligned truncation box, one (lower, upper) pair per coordinate.

    Entries may be infinite.  Each lower bound must lie strictly below its
    upper bound; degenerate intervals are rejected.
    """

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float)).copy()
        up = np.atleast_1d(np.asarray(self.upper, dtype=float)).copy()
        if lo.ndim != 1 or lo.shape != up.shape:
            raise ValueError("bounds must be two equal-length vectors")
        if np.any(np.isnan(lo)) or np.any(np.isnan(up)):
            raise ValueError("bounds must not contain NaN")
        if not np.all(lo < up):
            raise ValueError("every lower bound must lie strictly below its upper bound")
        lo.flags.writeable = False
        up.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @property
    def dim(self) -> int:
        return self.lower.size


@dataclass(frozen=True)
class TruncatedMoments:
    """Moment-matched Gaussian for a box-truncated bivariate normal."""

    mean: np.ndarray        # (m10, m01)
    covariance: np.ndarray  # assembled from (m20, m02, m11)
    mass: float             # probability of the box


# ---------------------------------------------------------------------------
# bivariate normal CDF (transformed Gauss-Legendre scheme of Genz)

_GL6_W = np.array([0.1713244923791705, 0.3607615730481384, 0.4679139345726904])
_GL6_X = np.array([0.9324695142031522, 0.6612093864662647, 0.2386191860831970])
_GL12_W = np.array([0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                    0.2031674267230659, 0.2334925365383547, 0.2491470458134029])
_GL12_X = np.array([0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
                    0.5873179542866171, 0.3678314989981802, 0.1252334085114692])
_GL20_W = np.array([0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
                    0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
                    0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
                    0.1527533871307259])
_GL20_X = np.array([0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
                    0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
                    0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
                    0.07652652113349733])


def _bvn_upper(dh: float, dk: float, r: float) -> float:
    """P(X > dh, Y > dk) for a standard bivariate normal pair with
    correlation ``r``.  Absolute error below ~5e-16 away from |r| = 1."""
    if dh == math.inf or dk == math.inf:
        return 0.0
    if dh == -math.inf:
        return 1.0 if dk == -math.inf else float(special.ndtr(-dk))
    if dk == -math.inf:
        return float(special.ndtr(-dh))
    if r == 0.0:
        return float(special.ndtr(-dh) * special.ndtr(-dk))

    h = dh
    k = dk
    hk = h * k
    if abs(r) < 0.3:
        x, w = _GL6_X, _GL6_W
    elif abs(r) < 0.75:
        x, w = _GL12_X, _GL12_W
    else:
        x, w = _GL20_X, _GL20_W

    if abs(r) < 0.925:
        hs = 0.5 * (h * h + k * k)
        asr = math.asin(r)
        sn1 = np.sin(asr * (1.0 - x) / 2.0)
        sn2 = np.sin(asr * (1.0 + x) / 2.0)
        bvn = np.dot(w, np.exp((sn1 * hk - hs) / (1.0 - sn1 * sn1))
                     + np.exp((sn2 * hk - hs) / (1.0 - sn2 * sn2)))
        bvn = bvn * asr / (4.0 * math.pi) + special.ndtr(-h) * special.ndtr(-k)
        return float(min(1.0, max(0.0, bvn)))

    # |r| >= 0.925: expansion around the singular limit
    if r < 0.0:
        k = -k
        hk = -hk
    bvn = 0.0
    if abs(r) < 1.0:
        a2 = (1.0 - r) * (1.0 + r)
        a = math.sqrt(a2)
        bs = (h - k) ** 2
        c = (4.0 - hk) / 8.0
        d = (12.0 - hk) / 16.0
        asr = -0.5 * (bs / a2 + hk)
        if asr > -100.0:
            bvn = a * math.exp(asr) * (1.0 - c * (bs - a2) * (1.0 - d * bs / 5.0) / 3.0
                                       + c * d * a2 * a2 / 5.0)
        if -hk < 100.0:
            b = math.sqrt(bs)
            sp = _SQRT_2PI * special.ndtr(-b / a)
            bvn -= math.exp(-0.5 * hk) * sp * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0)
        a *= 0.5
        for sign in (-1.0, 1.0):
            xs = (a * (sign * x + 1.0)) ** 2
            rs = np.sqrt(1.0 - xs)
            asr_v = -0.5 * (bs / xs + hk)
            keep = asr_v > -100.0
            if np.any(keep):
                xs_k = xs[keep]
                rs_k = rs[keep]
                sp_v = 1.0 + c * xs_k * (1.0 + d * xs_k)
                ep_v = np.exp(-hk * (1.0 - rs_k) / (2.0 * (1.0 + rs_k))) / rs_k
                bvn += a * np.dot(w[keep], np.exp(asr_v[keep]) * (ep_v - sp_v))
        bvn = -bvn / (2.0 * math.pi)
    if r > 0.0:
        bvn += special.ndtr(-max(h, k))
    else:
        bvn = -bvn
        if k > h:
            bvn += special.ndtr(k) - special.ndtr(h)
    return float(min(1.0, max(0.0, bvn)))


def _degenerate_interval(bounds: BoxBounds, rho: float):
    """Intersection of the two coordinate constraints when the pair is
    perfectly (anti-)correlated, expressed on coordinate 1."""
    l1, l2 = bounds.lower
    u1, u2 = bounds.upper
    if rho > 0.0:
        return max(l1, l2), min(u1, u2)
    return max(l1, -u2), min(u1, -l2)


def bivariate_normal_mass(bounds: BoxBounds, rho: float) -> float:
    """Probability that a standardized bivariate normal pair with
    correlation ``rho`` falls inside the 2-D box ``bounds``."""
    if bounds.dim != 2:
        raise ValueError("bivariate mass needs a 2-D box")
    if not -1.0 <= rho <= 1.0:
        raise ValueError("correlation must lie in [-1, 1]")
    if abs(rho) >= 1.0 - RHO_DEGENERATE_TOL:
        lo, up = _degenerate_interval(bounds, rho)
        if not lo < up:
            return 0.0
        return float(max(0.0, special.ndtr(up) - special.ndtr(lo)))
    l1, l2 = bounds.lower
    u1, u2 = bounds.upper
    p = (_bvn_upper(l1, l2, rho) - _bvn_upper(l1, u2, rho)
         - _bvn_upper(u1, l2, rho) + _bvn_upper(u1, u2, rho))
    return float(min(1.0, max(0.0, p)))


# ---------------------------------------------------------------------------
# univariate truncated moments

def _npdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / _SQRT_2PI


def _hazard(a: float) -> float:
    """phi(a) / (1 - Phi(a)), stable for large positive a."""
    with np.errstate(over="ignore"):
        e = special.erfcx(a / _SQRT_2)
    if not np.isfinite(e):
        return 0.0
    return math.sqrt(2.0 / math.pi) / float(e)


def _std_trunc_moments(a: float, b: float):
    """Mean, variance and mass of a standard normal conditioned to [a, b].

    Tail boxes are evaluated through scaled complementary error functions,
    so the conditional moments stay accurate even when the interval mass
    underflows.
    """
    if a == -math.inf and b == math.inf:
        return 0.0, 1.0, 1.0
    if a == -math.inf:
        h = _hazard(-b)
        return -h, _var_floor(1.0 - b * h - h * h), float(special.ndtr(b))
    if b == math.inf:
        h = _hazard(a)
        return h, _var_floor(1.0 + a * h - h * h), float(special.ndtr(-a))
    if b - a < 1e-7:
        mid = 0.5 * (a + b)
        return mid, (b - a) ** 2 / 12.0, _npdf(mid) * (b - a)
    sign = 1.0
    if a + b > 0.0:
        # reflect so the bulk side is the lower tail; moments map back by sign
        a, b = -b, -a
        sign = -1.0
    if b <= 0.0:
        # both endpoints in one tail: scaled form avoids 0/0
        aa, bb = -b, -a
        delta = 0.5 * (bb - aa) * (bb + aa)
        edelta = math.exp(-delta)
        ea = float(special.erfcx(aa / _SQRT_2))
        denom = ea - float(special.erfcx(bb / _SQRT_2)) * edelta
        if denom <= 0.0:
            return _midpoint_surrogate(sign * a, sign * b)
        f1 = math.sqrt(2.0 / math.pi) * (1.0 - edelta) / denom
        f2 = math.sqrt(2.0 / math.pi) * (aa - bb * edelta) / denom
        mass = 0.5 * math.exp(-0.5 * aa * aa) * denom
        mean = -f1
    else:
        z = float(special.ndtr(b) - special.ndtr(a))
        if z < MIN_MASS_1D:
            return _midpoint_surrogate(sign * a, sign * b)
        f1 = (_npdf(a) - _npdf(b)) / z
        f2 = (a * _npdf(a) - b * _npdf(b)) / z
        mass = z
        mean = f1
    var = 1.0 + f2 - mean * mean
    return sign * mean, _var_floor(var), mass


def _var_floor(var: float) -> float:
    """Cancellation guard: standardized truncated variances live in (0, 1]."""
    if not math.isfinite(var) or var <= 0.0:
        return 1e-16
    return min(var, 1.0)


def _midpoint_surrogate(a: float, b: float):
    warnings.warn("truncation interval mass underflow; using midpoint surrogate",
                  RuntimeWarning, stacklevel=3)
    lo, hi = min(a, b), max(a, b)
    return 0.5 * (lo + hi), max((hi - lo) ** 2 * 1e-12, 1e-300), 0.0


def truncated_moments_1d(mean: float, var: float, lower: float, upper: float):
    """Mean, variance and probability mass of N(mean, var) restricted to
    the interval [lower, upper].

    Returns ``(mean', var', mass)`` with ``var' <= var``.  If the interval
    mass underflows entirely the midpoint surrogate is returned with mass
    0 and a warning.
    """
    if not var > 0.0:
        raise ValueError("variance must be positive")
    if not lower < upper:
        raise ValueError("lower bound must lie strictly below upper bound")
    sd = math.sqrt(var)
    a = (lower - mean) / sd if lower != -math.inf else -math.inf
    b = (upper - mean) / sd if upper != math.inf else math.inf
    m, v, mass = _std_trunc_moments(a, b)
    return mean + sd * m, min(var * v, var), mass


# ---------------------------------------------------------------------------
# bivariate doubly truncated moments

def _edge(t: float, lo: float, up: float, rho: float, sq: float) -> float:
    """phi(t) * P(lo <= other <= up | this = t); zero for infinite t."""
    if not math.isfinite(t):
        return 0.0
    return _npdf(t) * float(special.ndtr((up - rho * t) / sq)
                            - special.ndtr((lo - rho * t) / sq))


def _psi(p: float, q: float, lo: float, up: float, rho: float, sq: float) -> float:
    return _edge(p, lo, up, rho, sq) - _edge(q, lo, up, rho, sq)


def _upsilon(lo: float, up: float, t: float, rho: float, sq: float) -> float:
    if not math.isfinite(t):
        return 0.0
    return t * _edge(t, lo, up, rho, sq)


def _cross_pdf(c: float, t: float, rho: float, sq: float) -> float:
    if not (math.isfinite(c) and math.isfinite(t)):
        return 0.0
    q = max(c * c - 2.0 * rho * c * t + t * t, 0.0)
    return _npdf(math.sqrt(q) / sq)


def _lam(lo: float, up: float, t: float, rho: float, sq: float) -> float:
    return sq / _SQRT_2PI * (_cross_pdf(lo, t, rho, sq) - _cross_pdf(up, t, rho, sq))


def _chi(lo: float, up: float, t: float, rho: float, sq: float) -> float:
    return _upsilon(lo, up, t, rho, sq) + rho / (1.0 + rho * rho) * _lam(lo, up, t, rho, sq)


def _std_moments_2d(l1, u1, l2, u2, rho):
    """First and second moments of a standardized bivariate normal with
    correlation ``rho`` conditioned to the box [l1,u1] x [l2,u2]."""
    mass = bivariate_normal_mass(BoxBounds(np.array([l1, l2]), np.array([u1, u2])), rho)
    if mass < MIN_BOX_MASS_2D:
        raise InfeasibleBoxError(
            f"2-D truncation box mass {mass:.3e} below {MIN_BOX_MASS_2D:.0e}")
    sq = math.sqrt((1.0 - rho) * (1.0 + rho))
    rho2 = rho * rho

    m10 = (_psi(l1, u1, l2, u2, rho, sq) + rho * _psi(l2, u2, l1, u1, rho, sq)) / mass
    m01 = (_psi(l2, u2, l1, u1, rho, sq) + rho * _psi(l1, u1, l2, u2, rho, sq)) / mass
    m20 = (mass
           + _chi(l2, u2, l1, rho, sq) - _chi(l2, u2, u1, rho, sq)
           + rho2 * (_chi(l1, u1, l2, rho, sq) - _chi(l1, u1, u2, rho, sq))) / mass
    m02 = (mass
           + _chi(l1, u1, l2, rho, sq) - _chi(l1, u1, u2, rho, sq)
           + rho2 * (_chi(l2, u2, l1, rho, sq) - _chi(l2, u2, u1, rho, sq))) / mass
    m11 = (rho * mass
           + rho * (_upsilon(l1, u1, l2, rho, sq) - _upsilon(l1, u1, u2, rho, sq)
                    + _upsilon(l2, u2, l1, rho, sq) - _upsilon(l2, u2, u1, rho, sq))
           + _lam(l1, u1, l2, rho, sq) - _lam(l1, u1, u2, rho, sq)) / mass
    return m10, m01, m20, m02, m11, mass


def _degenerate_moments_2d(l1, u1, l2, u2, rho):
    """|rho| ~ 1: the pair is a single variable seen twice (up to sign)."""
    sgn = 1.0 if rho > 0.0 else -1.0
    lo, up = _degenerate_interval(
        BoxBounds(np.array([l1, l2]), np.array([u1, u2])), rho)
    if not lo < up:
        raise InfeasibleBoxError("degenerate truncation interval is empty")
    m, v, mass = _std_trunc_moments(lo, up)
    if mass < MIN_BOX_MASS_2D:
        raise InfeasibleBoxError(
            f"degenerate truncation interval mass {mass:.3e} below {MIN_BOX_MASS_2D:.0e}")
    return m, sgn * m, v + m * m, v + m * m, sgn * (v + m * m), mass


def truncated_moments_2d(mean, cov, bounds: BoxBounds) -> TruncatedMoments:
    """Moment-matched Gaussian of N(mean, cov) restricted to a 2-D box.

    The inputs are standardized, the closed-form standardized moments are
    evaluated (second coordinate by the interchange rule), and the matched
    mean and covariance are mapped back to the original scale.

    Raises :class:`InfeasibleBoxError` when the box mass falls below
    ``MIN_BOX_MASS_2D``.
    """
    mean = np.asarray(mean, dtype=float).reshape(2)
    cov = np.asarray(cov, dtype=float).reshape(2, 2)
    if bounds.dim != 2:
        raise ValueError("truncated_moments_2d needs a 2-D box")
    s1 = math.sqrt(cov[0, 0])
    s2 = math.sqrt(cov[1, 1])
    if not (s1 > 0.0 and s2 > 0.0):
        raise ValueError("covariance diagonal must be positive")
    rho = float(cov[0, 1]) / (s1 * s2)
    if abs(rho) > 1.0 + 1e-8:
        raise ValueError("covariance is not positive semidefinite")
    rho = min(1.0, max(-1.0, rho))

    scale = np.array([s1, s2])
    lo = (bounds.lower - mean) / scale
    up = (bounds.upper - mean) / scale
    if np.any(lo >= up):
        # a strictly ordered box can still round to zero width when it is
        # many standard deviations out; its mass underflows either way
        raise InfeasibleBoxError("box has zero width after standardization")
    if abs(rho) >= 1.0 - RHO_DEGENERATE_TOL:
        m10, m01, m20, m02, m11, mass = _degenerate_moments_2d(
            lo[0], up[0], lo[1], up[1], rho)
    else:
        m10, m01, m20, m02, m11, mass = _std_moments_2d(
            lo[0], up[0], lo[1], up[1], rho)

    sm = np.array([m10, m01])
    scov = np.array([[m20 - m10 * m10, m11 - m10 * m01],
                     [m11 - m10 * m01, m02 - m01 * m01]])
    out_mean = mean + scale * sm
    out_cov = scov * np.outer(scale, scale)
    # evaluation-order noise can leave a tiny negative variance behind
    for i in (0, 1):
        if out_cov[i, i] < 0.0:
            out_cov[i, i] = 0.0
    return TruncatedMoments(mean=out_mean, covariance=out_cov, mass=mass)
