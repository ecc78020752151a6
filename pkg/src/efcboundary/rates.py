"""Rate functionals of the block-counting chain.

From n blocks, k of them merge at rate ``C(n,k) lambda_{n,k}`` and the total
rate of block-number reduction is ``Phi(n) = sum_k (k-1) C(n,k) lambda_{n,k}``.
The splitting side is summarised by ``ell(n) = sum_{k<=n} mu-bar(k)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, interpolate, special

from .measures import (
    TOL_QUAD,
    CoalescenceMeasure,
    LogPowerDensity,
    ParameterError,
    PowerDensity,
    SplittingMeasure,
    integrate_weighted,
)

__all__ = [
    "RateTable",
    "ThetaEstimate",
    "lambda_nk",
    "merge_rates",
    "rate_table",
    "total_coalescence_rate",
    "phi",
    "phi_sum",
    "phi_array",
    "psi",
    "ell",
    "ell_fubini",
    "ell_array",
    "big_I",
    "big_I_quad",
    "i_alpha",
    "i_alpha_closed",
    "j_alpha",
    "theta_estimates",
    "PhiCurve",
    "phi_curve",
    "ROW_CACHE_SIZE",
]

ROW_CACHE_SIZE = 4096
# rows above this size are recomputed rather than cached
_ROW_CACHE_MAX_N = 1 << 16


# ---------------------------------------------------------------------------
# stable integrand pieces


def _phi_kernel(n, x):
    """``(1-x)**n + n x - 1``, with the small-x cancellation removed."""
    x = np.asarray(x, dtype=float)
    nx = n * x
    direct = np.expm1(n * np.log1p(-np.minimum(x, 1.0 - 1e-300))) + nx
    c2 = 0.5 * n * (n - 1.0)
    c3 = c2 * (n - 2.0) / 3.0
    c4 = c3 * (n - 3.0) / 4.0
    series = x * x * (c2 - x * (c3 - x * c4))
    return np.where(nx < 1e-3, series, direct)


def _psi_kernel(n, x):
    """``exp(-n x) - 1 + n x`` with the same treatment."""
    y = n * np.asarray(x, dtype=float)
    series = y * y * (0.5 - y * (1.0 / 6.0 - y / 24.0))
    return np.where(y < 1e-3, series, np.expm1(-y) + y)


def _at_least_two(n, x):
    """``P(Bin(n, x) >= 2) = 1 - (1-x)**n - n x (1-x)**(n-1)``."""
    x = np.asarray(x, dtype=float)
    nx = n * x
    xm = np.minimum(x, 1.0 - 1e-300)
    m = (n - 1.0) * np.log1p(-xm) + np.log1p((n - 1.0) * xm)
    direct = -np.expm1(m)
    c2 = 0.5 * n * (n - 1.0)
    c3 = c2 * (n - 2.0) / 3.0
    c4 = c3 * (n - 3.0) / 4.0
    c5 = c4 * (n - 4.0) / 5.0
    series = x * x * (c2 - x * (2.0 * c3 - x * (3.0 * c4 - x * 4.0 * c5)))
    return np.where(nx < 1e-3, series, direct)


def _has_moments(dens) -> bool:
    """Beta moments cheap enough to evaluate millions of times."""
    return dens is not None and getattr(dens, "cheap_moments", False)


def _any_moments(dens) -> bool:
    return dens is not None and dens.log_beta_moment(2.0, 2.0) is not None


# rows longer than this are evaluated on sparse k and interpolated unless the
# density has cheap moments
_DENSE_ROW_MAX = 2048


# ---------------------------------------------------------------------------
# lambda_{n,k} and merge rows


def lambda_nk(lam: CoalescenceMeasure, n: int, k: int, *, tol: float = TOL_QUAD) -> float:
    """``integral x**(k-2) (1-x)**(n-k) Lambda(dx)``; the Kingman atom counts at k = 2."""
    if not 2 <= k <= n:
        raise ParameterError(f"need 2 <= k <= n, got n={n}, k={k}")
    total = lam.kingman if k == 2 else 0.0
    for x, w in lam.atoms:
        total += w * x ** (k - 2) * (1.0 - x) ** (n - k)
    dens = lam.density
    if dens is not None and dens.mass() > 0:
        if _any_moments(dens):
            total += float(np.exp(dens.log_beta_moment(k - 1.0, n - k + 1.0)))
        else:
            h = lambda x: x ** k * (1.0 - x) ** (n - k)
            total += integrate_weighted(CoalescenceMeasure(density=dens), h, tol=tol,
                                        scale=k / n)
    return total


def _log_binom(n, k):
    return special.gammaln(n + 1.0) - special.gammaln(k + 1.0) - special.gammaln(n - k + 1.0)


def _density_row(dens, n: int, k: np.ndarray) -> np.ndarray:
    """``C(n,k) integral x**(k-2) (1-x)**(n-k) f(x) dx`` at the given k."""
    lb = _log_binom(float(n), k)
    if _any_moments(dens):
        return np.exp(lb + dens.log_beta_moment(k - 1.0, n - k + 1.0))
    sub = CoalescenceMeasure(density=dens)
    out = []
    for kk, l in zip(k, lb):
        h = lambda x, kk=kk, l=l: np.exp(l + kk * np.log(x) + (n - kk) * np.log1p(-x))
        out.append(integrate_weighted(sub, h, scale=kk / n))
    return np.array(out)


def _sparse_row(dens, n: int) -> np.ndarray:
    """Row from values on a sparse k set, interpolated in log-log coordinates.

    The lower half is splined in ``log k`` and the upper half in
    ``log(n - k + 1)``, each with 48 knots per octave beyond 256.
    """
    half = n // 2
    dense = np.arange(2, 258, dtype=float)
    geo = np.unique(np.round(np.exp(np.arange(math.log(258), math.log(half + 2),
                                              math.log(2) / 48))))
    low_k = np.unique(np.concatenate((dense, geo, [half])))
    low_k = low_k[low_k <= half]
    j = np.unique(np.concatenate((dense - 1, geo, [n - half - 1])))  # j = n - k + 1
    j = j[(j >= 1) & (j <= n - half)]
    high_k = n + 1 - j
    vals_lo = _density_row(dens, n, low_k)
    vals_hi = _density_row(dens, n, high_k)
    kk = np.arange(2, n + 1, dtype=float)
    out = np.empty(n - 1)
    lo = kk <= half
    out[lo] = np.exp(interpolate.CubicSpline(np.log(low_k), np.log(vals_lo))(np.log(kk[lo])))
    jj = n + 1 - kk[~lo]
    order = np.argsort(j)
    spl = interpolate.CubicSpline(np.log(j[order]), np.log(vals_hi[order]))
    out[~lo] = np.exp(spl(np.log(jj)))
    return out


def _merge_row_uncached(lam: CoalescenceMeasure, n: int) -> np.ndarray:
    k = np.arange(2, n + 1, dtype=float)
    lb = _log_binom(float(n), k)
    row = np.zeros(n - 1)
    for x, w in lam.atoms:
        row += np.exp(lb + (k - 2.0) * math.log(x) + (n - k) * math.log1p(-x) + math.log(w))
    dens = lam.density
    if dens is not None and dens.mass() > 0:
        if _has_moments(dens) or n <= _DENSE_ROW_MAX:
            row += _density_row(dens, n, k)
        else:
            row += _sparse_row(dens, n)
    row[0] += lam.kingman * 0.5 * n * (n - 1.0)
    return row


@lru_cache(maxsize=ROW_CACHE_SIZE)
def _merge_row_cached(lam: CoalescenceMeasure, n: int) -> np.ndarray:
    row = _merge_row_uncached(lam, n)
    row.setflags(write=False)
    return row


@lru_cache(maxsize=12)
def _merge_row_big(lam: CoalescenceMeasure, n: int) -> np.ndarray:
    row = _merge_row_uncached(lam, n)
    row.setflags(write=False)
    return row


def merge_rates(lam: CoalescenceMeasure, n: int) -> np.ndarray:
    """Vector ``C(n,k) lambda_{n,k}`` for ``k = 2..n`` (index 0 is k = 2).

    Rows up to 2**16 entries are kept in an LRU cache, and the last few
    larger rows in a second one; returned arrays are read-only.
    """
    if n < 2:
        return np.zeros(0)
    if n <= _ROW_CACHE_MAX_N:
        return _merge_row_cached(lam, int(n))
    return _merge_row_big(lam, int(n))


@dataclass(frozen=True)
class RateTable:
    """Everything the exact categorical step needs from one state."""

    n: int
    merge_rates: np.ndarray
    total_coal_rate: float
    total_frag_rate: float
    phi: float
    ell: float

    @property
    def total_rate(self) -> float:
        return self.total_coal_rate + self.total_frag_rate


def rate_table(lam: CoalescenceMeasure, mu: SplittingMeasure | None, n: int) -> RateTable:
    row = merge_rates(lam, n)
    k = np.arange(2, n + 1)
    frag = n * mu.total_mass if mu is not None else 0.0
    return RateTable(
        n=int(n),
        merge_rates=row,
        total_coal_rate=math.fsum(row),
        total_frag_rate=frag,
        phi=math.fsum((k - 1) * row),
        ell=ell(mu, n) if mu is not None else 0.0,
    )


# ---------------------------------------------------------------------------
# closed forms for the power density c x**-beta


def _bern(t):
    return (t * t - t + 1.0 / 6.0,
            t ** 3 - 1.5 * t * t + 0.5 * t,
            t ** 4 - 2.0 * t ** 3 + t * t - 1.0 / 30.0)


def _log_gamma_ratio(x, a, b):
    """``log Gamma(x+a) - log Gamma(x+b)``, stable for huge x."""
    x = np.asarray(x, dtype=float)
    small = x < 1e5
    xs = np.where(small, x, 1e5)
    direct = special.gammaln(xs + a) - special.gammaln(xs + b)
    ba, bb = _bern(a), _bern(b)
    xl = np.where(small, 1e5, x)
    series = ((a - b) * np.log(xl) + (ba[0] - bb[0]) / (2.0 * xl)
              - (ba[1] - bb[1]) / (6.0 * xl * xl) + (ba[2] - bb[2]) / (12.0 * xl ** 3))
    return np.where(small, direct, series)


def _power_total(c, beta, n):
    """``sum_k C(n,k) lambda_{n,k}`` for ``c x**-beta``."""
    n = np.asarray(n, dtype=float)
    if beta == 0.0:
        return c * (n - 1.0)
    g = math.gamma(1.0 - beta) * np.exp(_log_gamma_ratio(n, 1.0, -beta))
    return c * ((g + beta) / (1.0 + beta) - 1.0)


def _power_phi(c, beta, n):
    n = np.asarray(n, dtype=float)
    if beta == 0.0:
        # sum_{j<n} H_j = n H_{n-1} - (n-1)
        h = special.digamma(n) + np.euler_gamma
        return c * (n * h - (n - 1.0))
    g = math.gamma(1.0 - beta) * np.exp(_log_gamma_ratio(n, 1.0, -beta))
    return c / beta * ((g + beta) / (1.0 + beta) - n)


def _power_psi(c, beta, n):
    n = np.asarray(n, dtype=float)
    if beta == 0.0:
        ein = np.euler_gamma + np.log(n) + special.exp1(n)
        return c * n * (-(np.expm1(-n) + n) / n + ein)
    j = (-(-np.expm1(-n)) * n ** -beta / beta
         + math.gamma(1.0 - beta) * special.gammainc(1.0 - beta, n) / beta)
    inner = (-(np.expm1(-n) + n) * n ** (-1.0 - beta) + j) / (1.0 + beta)
    return c * n ** (1.0 + beta) * inner


def _moment_sums(dens, n):
    """``sum_{i=0}^{n-2} (n-1-i) m_i`` with ``m_i = integral (1-x)**i f(x) dx``."""
    i = np.arange(0, n - 1, dtype=float)
    m = np.exp(dens.log_beta_moment(1.0, i + 1.0))
    return math.fsum((n - 1.0 - i) * m)


def _atoms_phi(lam, n):
    n = np.asarray(n, dtype=float)
    out = np.zeros(np.shape(n))
    for x, w in lam.atoms:
        out = out + w * _phi_kernel(n, np.full(np.shape(n), x)) / (x * x)
    return out


# ---------------------------------------------------------------------------
# total rate, Phi, Psi


def total_coalescence_rate(lam: CoalescenceMeasure, n: int, *, tol: float = TOL_QUAD) -> float:
    """``sum_{k=2}^n C(n,k) lambda_{n,k}`` from a single integral."""
    if n < 2:
        return 0.0
    total = lam.kingman * 0.5 * n * (n - 1.0)
    for x, w in lam.atoms:
        total += w * float(_at_least_two(n, x)) / (x * x)
    dens = lam.density
    if dens is not None and dens.mass() > 0:
        if isinstance(dens, PowerDensity):
            total += float(_power_total(dens.c, dens.beta, n))
        else:
            total += integrate_weighted(CoalescenceMeasure(density=dens),
                                        lambda x: _at_least_two(n, x), tol=tol, scale=1.0 / n)
    return total


def phi(lam: CoalescenceMeasure, n: int, *, method: str = "auto", tol: float = TOL_QUAD) -> float:
    """``Phi(n) = (c_k/2) n(n-1) + integral ((1-x)**n + n x - 1) x**-2 Lambda(dx)``.

    ``method``: ``"auto"`` (closed form where known, else quadrature),
    ``"quad"`` (always quadrature) or ``"sum"`` (the k-sum over the merge row).
    """
    if n < 2:
        return 0.0
    if method == "sum":
        return phi_sum(lam, n)
    total = lam.kingman * 0.5 * n * (n - 1.0) + float(_atoms_phi(lam, n))
    dens = lam.density
    if dens is None or dens.mass() == 0:
        return total
    if method == "auto" and isinstance(dens, PowerDensity):
        return total + float(_power_phi(dens.c, dens.beta, n))
    if method == "auto" and _has_moments(dens) and n <= 1 << 22:
        return total + _moment_sums(dens, n)
    return total + integrate_weighted(CoalescenceMeasure(density=dens),
                                      lambda x: _phi_kernel(n, x), tol=tol, scale=1.0 / n)


def phi_sum(lam: CoalescenceMeasure, n: int) -> float:
    """``sum_k (k-1) C(n,k) lambda_{n,k}`` straight from the merge row."""
    if n < 2:
        return 0.0
    row = merge_rates(lam, n)
    return math.fsum((np.arange(1, n) * row))


def phi_array(lam: CoalescenceMeasure, ns) -> np.ndarray:
    """Vectorised Phi; closed form for power densities, a loop otherwise."""
    ns = np.asarray(ns, dtype=float)
    dens = lam.density
    if dens is None or dens.mass() == 0 or isinstance(dens, PowerDensity):
        out = lam.kingman * 0.5 * ns * (ns - 1.0) + _atoms_phi(lam, ns)
        if dens is not None and dens.mass() > 0:
            out = out + _power_phi(dens.c, dens.beta, ns)
        return np.where(ns >= 2, out, 0.0)
    top = int(ns.max()) if ns.size else 0
    if _has_moments(dens) and 2 <= top <= 1 << 22:
        # Phi(n) - atoms - Kingman = sum_{j<n} sum_{i<j} m_i
        i = np.arange(0, top - 1, dtype=float)
        m = np.exp(dens.log_beta_moment(1.0, i + 1.0))
        cum = np.concatenate(([0.0, 0.0], np.cumsum(np.cumsum(m))))
        base = lam.kingman * 0.5 * ns * (ns - 1.0) + _atoms_phi(lam, ns)
        idx = np.clip(ns.astype(np.int64), 0, top)
        return np.where(ns >= 2, base + cum[idx], 0.0)
    return np.array([phi(lam, int(n)) for n in ns.ravel()]).reshape(ns.shape)


def psi(lam: CoalescenceMeasure, n: int, *, method: str = "auto", tol: float = TOL_QUAD) -> float:
    """``Psi(n) = (c_k/2) n**2 + integral (exp(-n x) - 1 + n x) x**-2 Lambda(dx)``."""
    total = lam.kingman * 0.5 * n * n
    for x, w in lam.atoms:
        total += w * float(_psi_kernel(n, x)) / (x * x)
    dens = lam.density
    if dens is None or dens.mass() == 0:
        return total
    if method == "auto" and isinstance(dens, PowerDensity):
        return total + float(_power_psi(dens.c, dens.beta, n))
    return total + integrate_weighted(CoalescenceMeasure(density=dens),
                                      lambda x: _psi_kernel(n, x), tol=tol, scale=1.0 / n)


class PhiCurve:
    """Phi on the integers, exact up to ``exact_upto`` and log-spline beyond.

    Used where Phi is needed at very many or very large arguments (theta sums).
    Power densities bypass the spline.
    """

    def __init__(self, lam: CoalescenceMeasure, exact_upto: int = 4096, top: float = 2.0 ** 62,
                 per_octave: int = 24):
        self.lam = lam
        dens = lam.density
        self._closed = dens is None or dens.mass() == 0 or isinstance(dens, PowerDensity)
        if self._closed:
            return
        if not _has_moments(dens):
            exact_upto = min(exact_upto, 256)
        self.exact_upto = exact_upto
        self._exact = np.concatenate(([0.0, 0.0], phi_array(lam, np.arange(2, exact_upto + 1))))
        lo = math.log(exact_upto / 2)
        mid = math.log(float(1 << 22)) if _has_moments(dens) else lo
        hi = math.log(top)
        # dense where moment sums are cheap, sparser (log-log Phi is smooth) beyond
        g1 = np.exp(np.linspace(lo, mid, max(int((mid - lo) / math.log(2) * per_octave), 1) + 1))
        g2 = np.exp(np.linspace(mid, hi, int((hi - mid) / math.log(2) * 6) + 1))[1:]
        grid = np.unique(np.round(np.concatenate((g1, g2))))
        v1 = phi_array(lam, grid[grid <= 1 << 22])
        v2 = np.array([phi(lam, int(g), method="quad") for g in grid[grid > 1 << 22]])
        vals = np.concatenate((v1, v2))
        self._spline = interpolate.CubicSpline(np.log(grid), np.log(vals))

    def __call__(self, ns) -> np.ndarray:
        ns = np.asarray(ns, dtype=float)
        if self._closed:
            return phi_array(self.lam, ns)
        out = np.empty(ns.shape)
        small = ns <= self.exact_upto
        out[small] = self._exact[ns[small].astype(np.int64)]
        out[~small] = np.exp(self._spline(np.log(ns[~small])))
        return out


@lru_cache(maxsize=16)
def phi_curve(lam: CoalescenceMeasure) -> PhiCurve:
    """Cached default ``PhiCurve``."""
    return PhiCurve(lam)


# ---------------------------------------------------------------------------
# ell


def ell(mu: SplittingMeasure, n: int) -> float:
    """``ell(n) = sum_{k<=n} mu-bar(k)``."""
    if n < 1:
        raise ParameterError("ell needs n >= 1")
    return math.fsum(np.atleast_1d(mu.tail(np.arange(1, n + 1))))


def ell_fubini(mu: SplittingMeasure, n: int) -> float:
    """``ell(n) = sum_k min(k, n) mu(k) = sum_{k<=n} k mu(k) + n mu-bar(n+1)``."""
    if n < 1:
        raise ParameterError("ell needs n >= 1")
    return math.fsum([mu.first_moment_upto(n), n * float(mu.tail(n + 1))])


def ell_array(mu: SplittingMeasure, ns) -> np.ndarray:
    """Vectorised ``ell`` via one cumulative pass up to ``max(ns)``."""
    ns = np.asarray(ns, dtype=np.int64)
    if ns.size == 0:
        return np.zeros(0)
    if ns.min() < 1:
        raise ParameterError("ell needs n >= 1")
    top = int(ns.max())
    k = np.arange(1, top + 1)
    first = np.cumsum(k * np.asarray(mu.pmf(k), dtype=float))
    return first[ns - 1] + ns * np.asarray(mu.tail(ns + 1), dtype=float)


# ---------------------------------------------------------------------------
# constants


def _mellin_quad(h, alpha: float, tol: float = 1e-13) -> float:
    """``integral_0^inf h(u) u**-(1+alpha) du`` via u = e**v on both halves."""
    def lo(v):
        u = math.exp(-v)
        return h(u) / u * math.exp(-(1.0 - alpha) * v) if u > 0.0 else 0.0

    hi = lambda v: h(math.exp(v)) * math.exp(-alpha * v) if v < 700.0 else 0.0
    a, _ = integrate.quad(lo, 0.0, np.inf, epsabs=0.0, epsrel=tol, limit=400)
    b, _ = integrate.quad(hi, 0.0, np.inf, epsabs=0.0, epsrel=tol, limit=400)
    return a + b


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise ParameterError("alpha must lie in (0, 1)")


def big_I(alpha: float) -> float:
    """``integral log(1+u) u**-(1+alpha) du = pi / (alpha sin(pi alpha))``."""
    _check_alpha(alpha)
    return math.pi / (alpha * math.sin(math.pi * alpha))


def big_I_quad(alpha: float) -> float:
    _check_alpha(alpha)
    return _mellin_quad(math.log1p, alpha)


def i_alpha(a: float, alpha: float) -> float:
    """``integral (1 - (1+u)**(1-a)) u**-(1+alpha) du`` for a > 1, by quadrature."""
    _check_alpha(alpha)
    if a <= 1.0:
        raise ParameterError("i_alpha needs a > 1")
    return _mellin_quad(lambda u: -math.expm1((1.0 - a) * math.log1p(u)), alpha)


def i_alpha_closed(a: float, alpha: float) -> float:
    """Closed form ``(rho/alpha) B(1-alpha, rho+alpha)`` with ``rho = a - 1``."""
    rho = a - 1.0
    return rho / alpha * float(special.beta(1.0 - alpha, rho + alpha))


def j_alpha(a: float, alpha: float) -> float:
    """``integral ((1+u)**(1-a) - 1) u**-(1+alpha) du`` for ``1-alpha < a < 1``."""
    _check_alpha(alpha)
    if not 1.0 - alpha < a < 1.0:
        raise ParameterError("j_alpha needs 1 - alpha < a < 1")
    return _mellin_quad(lambda u: math.expm1((1.0 - a) * math.log1p(u)), alpha)


# ---------------------------------------------------------------------------
# theta bracket


@dataclass
class ThetaEstimate:
    grid: np.ndarray
    values: np.ndarray
    theta_low: float
    theta_high: float
    converged: bool
    divergent: bool = False
    threshold: float = 0.05
    notes: list = field(default_factory=list)

    def __post_init__(self):
        if self.theta_low > self.theta_high:
            raise ValueError("theta_low > theta_high")


def _tail_weights(k_from: int, per_octave: int, top: float):
    """Integer strata covering ``[k_from, top)``: (representative k, count)."""
    edges = np.unique(np.round(k_from * 2.0 ** (np.arange(0, math.log2(top / k_from) * per_octave + 1)
                                                 / per_octave)).astype(np.int64))
    edges = edges[edges >= k_from]
    lo = edges[:-1]
    hi = edges[1:]
    mid = np.sqrt(lo * (hi - 1.0).clip(min=lo))
    return mid, (hi - lo).astype(float), lo, hi


def _theta_sum(mu: SplittingMeasure, curve: PhiCurve, n: int, exact_k: int, per_octave: int,
               top: float) -> tuple[float, float]:
    """``S(n) = sum_k n mu-bar(k) / Phi(n+k)`` and a monotone bracket width for the tail."""
    k = np.arange(1, exact_k + 1, dtype=float)
    head = math.fsum(n * np.asarray(mu.tail(k.astype(np.int64))) / curve(n + k))
    if mu.support_max < math.inf and mu.support_max <= exact_k:
        return head, 0.0
    mid, cnt, lo, hi = _tail_weights(exact_k + 1, per_octave, top)
    f_mid = n * np.asarray(mu.tail(np.round(mid).astype(np.int64))) / curve(n + np.round(mid))
    f_lo = n * np.asarray(mu.tail(lo)) / curve(n + lo.astype(float))
    f_hi = n * np.asarray(mu.tail(hi - 1)) / curve(n + (hi - 1).astype(float))
    tail = math.fsum(cnt * f_mid)
    width = math.fsum(cnt * (f_lo - f_hi))
    # what lies beyond top is bounded by the last stratum's decay
    last = cnt[-1] * f_mid[-1]
    prev = cnt[-2] * f_mid[-2] if len(cnt) > 1 else last
    r = last / prev if prev > 0 else 0.0
    beyond = last * r / (1.0 - r) if r < 1.0 else math.inf
    return head + tail + beyond, width + beyond


def theta_estimates(lam: CoalescenceMeasure, mu: SplittingMeasure, grid=None, *,
                    threshold: float = 0.05, exact_k: int = 1 << 12, per_octave: int = 48,
                    top: float = 2.0 ** 62, curve: PhiCurve | None = None) -> ThetaEstimate:
    """Bracket ``liminf/limsup S(n)`` over the last half of a geometric grid."""
    if grid is None:
        grid = 2 ** np.arange(4, 21)
    grid = np.asarray(grid, dtype=np.int64)
    curve = curve or phi_curve(lam)
    vals = []
    notes = []
    for n in grid:
        s, width = _theta_sum(mu, curve, int(n), exact_k, per_octave, top)
        if width > 1e-3 * max(s, 1e-300):
            notes.append(f"n={int(n)}: tail strata bracket {width:.3g}")
        vals.append(s)
    vals = np.array(vals)
    upper = vals[len(vals) // 2:]
    lo, hi = float(np.min(upper)), float(np.max(upper))
    converged = (hi - lo) < threshold * max(1.0, hi)
    # steady geometric growth with no sign of levelling off
    steps = np.diff(np.log(upper))
    divergent = bool(len(steps) > 1 and np.all(steps > 0.02) and not converged)
    return ThetaEstimate(grid, vals, lo, hi, bool(converged), divergent, threshold, notes)
