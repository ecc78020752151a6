"""Coalescence and splitting measures.

A simple EFC block-counting chain is driven by two measures:

* ``Lambda`` on [0, 1): a Kingman atom at 0, finitely many atoms in (0, 1) and
  an optional density.  k of n blocks merge at rate
  ``C(n, k) * integral x**k (1-x)**(n-k) x**-2 Lambda(dx)``.
* ``mu`` on the positive integers: each block splits into k + 1 blocks at
  rate ``mu(k)``.

Both are immutable after construction.  Everything expensive (rate rows,
samplers) is cached elsewhere and keyed by object identity.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

__all__ = [
    "QuadratureError",
    "ParameterError",
    "PowerDensity",
    "LogPowerDensity",
    "TableDensity",
    "CoalescenceMeasure",
    "SplittingMeasure",
    "PowerLawSplitting",
    "LogSplitting",
    "GeometricSplitting",
    "FiniteSplitting",
    "CompositeSplitting",
    "Check",
    "ValidationReport",
    "validate_coalescence",
    "validate_splitting",
    "integrate_weighted",
    "splitting_tail",
    "JumpSampler",
    "build_jump_sampler",
    "TOL_QUAD",
    "TOL_TAIL",
]

TOL_QUAD = 1e-10
TOL_TAIL = 1e-12


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message: str, estimate: float, error: float):
        super().__init__(f"{message} (estimate={estimate!r}, error bound={error!r})")
        self.estimate = estimate
        self.error = error


class ParameterError(ValueError):
    """A parameter lies outside the range where a quantity is defined."""


# ---------------------------------------------------------------------------
# densities of Lambda on (0, 1)


@dataclass(frozen=True, eq=False)
class PowerDensity:
    """``f(x) = c * x**(-beta)`` on (0, 1); ``beta = 0`` is the uniform law."""

    c: float
    beta: float = 0.0

    def __post_init__(self):
        if self.c < 0:
            raise ParameterError("density constant must be nonnegative")
        if not 0.0 <= self.beta < 1.0:
            raise ParameterError("power density needs 0 <= beta < 1")

    kind = "power_beta"
    cheap_moments = True

    def __call__(self, x):
        return self.c * np.power(x, -self.beta)

    @property
    def singularity(self) -> float:
        return self.beta

    @property
    def envelope(self) -> tuple[float, float]:
        return self.c, self.beta

    def mass(self) -> float:
        return self.c / (1.0 - self.beta)

    def log_beta_moment(self, a, b):
        """log of ``integral x**(a-1) (1-x)**(b-1) f(x) dx``."""
        return math.log(self.c) + special.betaln(a - self.beta, b) if self.c > 0 else -np.inf

    def params(self) -> dict:
        return {"c": self.c, "beta": self.beta}


def _log_derivs(a, b, m):
    """``e_j = (-1)**j d^j/dt^j log B(a+t, b)`` at t = 0 for j = 1..m (all positive)."""
    out = []
    for j in range(1, m + 1):
        if j == 1:
            d = special.digamma(a + b) - special.digamma(a)
        else:
            d = (-1.0) ** j * (special.polygamma(j - 1, a) - special.polygamma(j - 1, a + b))
        out.append(d)
    return out


def _bell(e):
    """Complete Bell polynomial ``Y_m(e_1, ..., e_m)``."""
    Y = [np.ones_like(e[0])]
    for m in range(len(e)):
        Y.append(sum(math.comb(m, i) * Y[m - i] * e[i] for i in range(m + 1)))
    return Y[-1]


def _log_moment_fractional(a, b, gamma, h: float = 0.2, chunk: int = 2048):
    """log of ``integral x**(a-1) (1-x)**(b-1) (-log x)**gamma dx`` for fractional gamma.

    With ``m = ceil(gamma) + 1`` and ``s = m - gamma``,
    ``(-log x)**gamma = (-log x)**m / Gamma(s) * integral t**(s-1) x**t dt``,
    so the moment is ``integral t**(s-1) (-d/dt)**m B(a+t, b) dt / Gamma(s)``.
    The t-integral is a trapezoid rule in ``u = log t``, whose integrand is
    smooth and decays exponentially at both ends.
    """
    m = math.ceil(gamma) + 1
    s = m - gamma
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    shape = a.shape
    a, b = a.ravel(), b.ravel()
    out = np.empty(a.size)
    for lo in range(0, a.size, chunk):
        aa, bb = a[lo:lo + chunk, None], b[lo:lo + chunk, None]
        umax = math.log(float(np.max(aa + bb)) + 1.0) + 40.0
        u = np.arange(-40.0, umax + h, h)[None, :]
        A = aa + np.exp(u)
        with np.errstate(divide="ignore"):
            logint = s * u + special.betaln(A, bb) + np.log(_bell(_log_derivs(A, bb, m)))
        out[lo:lo + chunk] = special.logsumexp(logint, axis=1) + math.log(h)
    return (out - special.gammaln(s)).reshape(shape)


@dataclass(frozen=True, eq=False)
class LogPowerDensity:
    """``f(x) = c * (-log x)**gamma`` on (0, 1).

    With ``gamma = beta - 1`` this gives ``Phi(n) ~ (c / beta) n (log n)**beta``,
    the slow-coalescence regime.
    """

    c: float
    gamma: float

    kind = "log_power"

    def __post_init__(self):
        if self.c < 0 or self.gamma < 0:
            raise ParameterError("log-power density needs c >= 0 and gamma >= 0")

    def __call__(self, x):
        return self.c * np.power(-np.log(x), self.gamma)

    @property
    def singularity(self) -> float:
        return 0.0

    @property
    def envelope(self) -> tuple[float, float]:
        # (-log x)**g <= (g/eps)**g e**-g x**-eps
        eps = 0.25
        if self.gamma == 0:
            return self.c, 0.0
        k = (self.gamma / eps) ** self.gamma * math.exp(-self.gamma)
        return self.c * k, eps

    def mass(self) -> float:
        return self.c * math.gamma(self.gamma + 1.0)

    @property
    def cheap_moments(self) -> bool:
        return float(self.gamma).is_integer()

    def log_beta_moment(self, a, b):
        """log of ``integral x**(a-1) (1-x)**(b-1) f(x) dx``.

        Integer gamma: the Beta moment times a complete Bell polynomial in
        polygamma differences.  Fractional gamma: a one-dimensional integral
        over the same closed form (see ``_log_moment_fractional``).
        """
        if self.c == 0:
            return -np.inf
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if self.cheap_moments:
            m = int(self.gamma)
            lb = special.betaln(a, b)
            if m == 0:
                return math.log(self.c) + lb
            return math.log(self.c) + lb + np.log(_bell(_log_derivs(a, b, m)))
        return math.log(self.c) + _log_moment_fractional(a, b, self.gamma)

    def params(self) -> dict:
        return {"c": self.c, "gamma": self.gamma}


@dataclass(frozen=True, eq=False)
class TableDensity:
    """Piecewise-linear density through the points ``(xs[i], ys[i])``.

    Constant extrapolation outside the table.
    """

    xs: tuple
    ys: tuple

    kind = "custom_table"
    cheap_moments = False

    def __post_init__(self):
        if len(self.xs) != len(self.ys) or len(self.xs) < 2:
            raise ParameterError("table density needs two equal-length columns")
        if any(np.diff(self.xs) <= 0):
            raise ParameterError("table abscissae must be increasing")

    @classmethod
    def from_file(cls, path) -> "TableDensity":
        data = np.loadtxt(path, ndmin=2)
        return cls(tuple(map(float, data[:, 0])), tuple(map(float, data[:, 1])))

    def __call__(self, x):
        return np.interp(x, self.xs, self.ys)

    @property
    def singularity(self) -> float:
        return 0.0

    @property
    def envelope(self) -> tuple[float, float]:
        return max(max(self.ys), 0.0), 0.0

    def mass(self) -> float:
        xs = np.concatenate(([0.0], self.xs, [1.0]))
        ys = self(xs)
        keep = (xs >= 0) & (xs <= 1)
        return float(np.trapezoid(ys[keep], xs[keep]))

    def log_beta_moment(self, a, b):
        return None

    def params(self) -> dict:
        return {"xs": list(self.xs), "ys": list(self.ys)}


Density = PowerDensity | LogPowerDensity | TableDensity


@dataclass(frozen=True, eq=False)
class CoalescenceMeasure:
    """The finite measure Lambda on [0, 1).

    ``kingman`` is the mass at 0, ``atoms`` a tuple of ``(x, w)`` pairs and
    ``density`` an optional absolutely continuous part.
    """

    kingman: float = 0.0
    atoms: tuple = ()
    density: Density | None = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple((float(x), float(w)) for x, w in self.atoms))

    @classmethod
    def kingman_only(cls, c: float = 1.0) -> "CoalescenceMeasure":
        return cls(kingman=c, name=f"kingman(c={c})")

    @classmethod
    def uniform(cls, c: float = 1.0) -> "CoalescenceMeasure":
        return cls(density=PowerDensity(c, 0.0), name="uniform")

    @classmethod
    def power(cls, c: float, beta: float) -> "CoalescenceMeasure":
        return cls(density=PowerDensity(c, beta), name=f"power(c={c},beta={beta})")

    @classmethod
    def zero(cls) -> "CoalescenceMeasure":
        return cls(name="zero")

    @property
    def is_zero(self) -> bool:
        dens_zero = self.density is None or self.density.mass() == 0
        return self.kingman == 0 and not self.atoms and dens_zero

    def total_mass(self) -> float:
        m = self.kingman + sum(w for _, w in self.atoms)
        if self.density is not None:
            m += self.density.mass()
        return m

    def density_mass(self, tol: float = TOL_QUAD) -> float:
        """Mass of the density part by quadrature (independent of ``mass()``)."""
        if self.density is None:
            return 0.0
        return _quad_density(self.density, lambda x: np.ones_like(x), tol=tol)


# ---------------------------------------------------------------------------
# quadrature against x**-2 Lambda(dx)


X_CUT = 1e-5  # below this, g/x**2 is extrapolated instead of evaluated


def _breakpoints(scale: float | None, lo: float = 0.0, hi: float = 1.0) -> list[float]:
    pts = []
    if scale is not None and 0 < scale < 1:
        x = scale * 2.0 ** -30
        while x < 1.0:
            pts.append(x)
            x *= 2.0
    else:
        pts.extend(10.0 ** np.arange(-12, 0))
    return [lo] + [x for x in pts if lo < x < hi] + [hi]


def _quad_density(dens, h: Callable, *, tol: float = TOL_QUAD,
                  scale: float | None = None, max_refine: int = 400,
                  lo: float = 0.0, hi: float = 1.0) -> float:
    """``integral_0^1 h(x) f(x) dx`` with an endpoint substitution at 0.

    ``h`` must be vectorised.  When the density carries a singularity hint
    beta > 0 the substitution x = u**(1/(1-beta)) removes the x**-beta blow-up.
    """
    beta = dens.singularity
    p = 1.0 / (1.0 - beta) if beta > 0 else 1.0

    def integrand(u):
        x = u ** p
        if x <= 0.0:
            x = np.finfo(float).tiny
        jac = p * u ** (p - 1.0) if p != 1.0 else 1.0
        return float(h(np.array([x]))[0] * dens(x) * jac)

    xs = _breakpoints(scale, lo, hi)
    us = [x ** (1.0 / p) for x in xs]
    total = 0.0
    err = 0.0
    pieces = []
    for lo, hi in zip(us[:-1], us[1:]):
        if hi <= lo:
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            val, e, *rest = integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=tol * 0.1,
                                           limit=max_refine, full_output=1)
        pieces.append(val)
        total += val
        err += e
    if not math.isfinite(total) or err > tol * max(abs(total), 1e-300) * 10:
        raise QuadratureError("quadrature did not converge", total, err)
    return math.fsum(pieces)


def integrate_weighted(lam: CoalescenceMeasure, g: Callable, *, tol: float = TOL_QUAD,
                       scale: float | None = None) -> float:
    """``integral_(0,1) g(x) x**-2 Lambda(dx)``; the Kingman atom is left to callers.

    Atoms are summed exactly.  ``g`` must be vectorised and O(x**2) at 0.
    ``scale`` is a hint for where g changes (1/n for n-block kernels) and puts
    geometric breakpoints around it.
    """
    total = 0.0
    for x, w in lam.atoms:
        total += float(g(np.array([x]))[0]) * w / (x * x)
    if lam.density is not None and lam.density.mass() > 0:
        # Near 0 a generic g(x) ~ C x**2 loses all digits to cancellation, so
        # g/x**2 is replaced on (0, xc) by its quadratic through xc, 2xc, 3xc.
        xc = min(X_CUT, 1e-3 * scale) if scale is not None and scale > 0 else X_CUT
        q = g(np.array([xc, 2 * xc, 3 * xc])) / np.array([xc, 2 * xc, 3 * xc]) ** 2
        c0 = 3 * q[0] - 3 * q[1] + q[2]
        c1 = (-2.5 * q[0] + 4 * q[1] - 1.5 * q[2]) / xc
        c2 = (0.5 * q[0] - q[1] + 0.5 * q[2]) / (xc * xc)
        total += _quad_density(lam.density, lambda x: c0 + x * (c1 + x * c2), tol=tol,
                               lo=0.0, hi=xc)
        total += _quad_density(lam.density, lambda x: g(x) / (x * x), tol=tol, scale=scale,
                               lo=xc, hi=1.0)
    return total


# ---------------------------------------------------------------------------
# splitting measures


class SplittingMeasure:
    """Finite measure on {1, 2, ...}; subclasses give pmf and tail."""

    kind = "abstract"

    def pmf(self, k):
        raise NotImplementedError

    def tail(self, k):
        """``mu({k, k+1, ...})``, vectorised over k >= 1."""
        raise NotImplementedError

    @property
    def total_mass(self) -> float:
        return float(self.tail(1))

    def first_moment_upto(self, n: int) -> float:
        """``sum_{k<=n} k mu(k)``."""
        k = np.arange(1, n + 1)
        return math.fsum(k * self.pmf(k))

    def power_tail_sum(self, k0: int, s: float) -> float:
        """``sum_{k>=k0} k**s mu(k)``; inf when divergent."""
        raise NotImplementedError

    @property
    def support_max(self) -> float:
        return math.inf

    def params(self) -> dict:
        return {}

    def _tail_by_summation(self, k0, s, K, tail_integral):
        ks = np.arange(k0, max(K, k0))
        head = math.fsum(ks.astype(float) ** s * self.pmf(ks)) if len(ks) else 0.0
        return head + tail_integral(max(K, k0))


@dataclass(frozen=True, eq=False)
class PowerLawSplitting(SplittingMeasure):
    """``mu(k) = b * k**-(1+alpha)``; tails via the Hurwitz zeta function."""

    b: float
    alpha: float
    kind = "power"

    def __post_init__(self):
        if self.b <= 0 or self.alpha <= 0:
            raise ParameterError("power splitting needs b > 0 and alpha > 0")

    def pmf(self, k):
        k = np.asarray(k, dtype=float)
        return self.b * k ** -(1.0 + self.alpha)

    def tail(self, k):
        k = np.asarray(k, dtype=float)
        return self.b * special.zeta(1.0 + self.alpha, k)

    def power_tail_sum(self, k0, s):
        e = 1.0 + self.alpha - s
        if e <= 1.0:
            return math.inf
        return float(self.b * special.zeta(e, k0))

    def params(self):
        return {"b": self.b, "alpha": self.alpha}


@dataclass(frozen=True, eq=False)
class LogSplitting(SplittingMeasure):
    """``mu(k) = b * (log k)**alpha / k**2`` (mu(1) = 0).

    Tails are an explicit sum up to ``cutoff`` plus an Euler-Maclaurin
    remainder built on the incomplete gamma function.
    """

    b: float
    alpha: float
    cutoff: int = 1 << 16
    kind = "log"

    def __post_init__(self):
        if self.b <= 0 or self.alpha < 0:
            raise ParameterError("log splitting needs b > 0 and alpha >= 0")

    def pmf(self, k):
        k = np.asarray(k, dtype=float)
        return self.b * np.log(k) ** self.alpha / (k * k)

    def _integral_tail(self, K, s=0.0):
        # integral_K^inf (log x)**alpha x**(s-2) dx, x = e**t
        r = 1.0 - s
        if r <= 0:
            return math.inf
        t0 = math.log(K)
        return self.b * special.gamma(self.alpha + 1) * special.gammaincc(self.alpha + 1, r * t0) / r ** (self.alpha + 1)

    def _em_tail(self, K, s=0.0):
        # sum_{j>=K} f(j) ~ int_K^inf f + f(K)/2 - f'(K)/12
        f = lambda x: self.b * math.log(x) ** self.alpha * x ** (s - 2.0)
        h = 1e-3 * K
        fp = (f(K + h) - f(K - h)) / (2 * h)
        return self._integral_tail(K, s) + 0.5 * f(K) - fp / 12.0

    @cached_property
    def _cum(self):
        ks = np.arange(1, self.cutoff + 1, dtype=float)
        p = self.pmf(ks)
        tail_beyond = self._em_tail(self.cutoff + 1)
        # tails[k-1] = mu({k..}); accumulate from the top to keep precision
        rev = np.cumsum(p[::-1])[::-1]
        return rev + tail_beyond

    def tail(self, k):
        k = np.asarray(k)
        scalar = k.ndim == 0
        k = np.atleast_1d(k).astype(np.int64)
        out = np.empty(k.shape, dtype=float)
        small = k <= self.cutoff
        out[small] = self._cum[k[small] - 1]
        for i in np.nonzero(~small)[0]:
            out[i] = self._em_tail(int(k[i]))
        return float(out[0]) if scalar else out

    def power_tail_sum(self, k0, s):
        if s >= 1.0:
            return math.inf
        K = max(int(k0), 1 << 12)
        ks = np.arange(max(k0, 1), K, dtype=float)
        head = math.fsum(ks ** s * self.pmf(ks)) if len(ks) else 0.0
        return head + self._em_tail(K, s)

    def params(self):
        return {"b": self.b, "alpha": self.alpha}


@dataclass(frozen=True, eq=False)
class GeometricSplitting(SplittingMeasure):
    """``mu(k) = mass * (1-q) * q**(k-1)``."""

    mass: float
    q: float
    kind = "geometric"

    def __post_init__(self):
        if self.mass <= 0 or not 0 <= self.q < 1:
            raise ParameterError("geometric splitting needs mass > 0 and 0 <= q < 1")

    def pmf(self, k):
        k = np.asarray(k, dtype=float)
        return self.mass * (1 - self.q) * self.q ** (k - 1)

    def tail(self, k):
        k = np.asarray(k, dtype=float)
        return self.mass * self.q ** (k - 1)

    def power_tail_sum(self, k0, s):
        if self.q == 0:
            return float(self.mass) if k0 <= 1 else 0.0
        K = int(k0) + int(60 / max(-math.log(self.q), 1e-3)) + 64
        ks = np.arange(k0, K, dtype=float)
        return math.fsum(ks ** s * self.pmf(ks))

    def params(self):
        return {"mass": self.mass, "q": self.q}


@dataclass(frozen=True, eq=False)
class FiniteSplitting(SplittingMeasure):
    """Finite-support splitting measure from an explicit pmf ``{k: mu(k)}``."""

    weights: tuple  # ((k, w), ...)
    kind = "finite"

    def __post_init__(self):
        items = tuple(sorted((int(k), float(w)) for k, w in dict(self.weights).items()))
        if not items or any(k < 1 or w < 0 for k, w in items):
            raise ParameterError("finite splitting needs k >= 1 and w >= 0")
        object.__setattr__(self, "weights", items)

    @classmethod
    def point(cls, k: int = 1, mass: float = 1.0) -> "FiniteSplitting":
        return cls(((k, mass),))

    @cached_property
    def _arr(self):
        K = self.weights[-1][0]
        a = np.zeros(K + 2)
        for k, w in self.weights:
            a[k] = w
        return a

    @property
    def support_max(self):
        return self.weights[-1][0]

    def pmf(self, k):
        k = np.asarray(k, dtype=np.int64)
        a = self._arr
        return np.where((k >= 1) & (k < len(a)), a[np.clip(k, 0, len(a) - 1)], 0.0)

    def tail(self, k):
        k = np.asarray(k, dtype=np.int64)
        rev = np.cumsum(self._arr[::-1])[::-1]
        return np.where(k < len(rev), rev[np.clip(k, 0, len(rev) - 1)], 0.0)

    def power_tail_sum(self, k0, s):
        return math.fsum(k ** s * w for k, w in self.weights if k >= k0)

    def params(self):
        return {"pmf": [[k, w] for k, w in self.weights]}


@dataclass(frozen=True, eq=False)
class CompositeSplitting(SplittingMeasure):
    """Explicit pmf prefix for ``k <= len(prefix)``, a parametric tail beyond."""

    prefix: tuple
    tail_model: SplittingMeasure
    kind = "composite"

    def __post_init__(self):
        object.__setattr__(self, "prefix", tuple(float(w) for w in self.prefix))
        if any(w < 0 for w in self.prefix):
            raise ParameterError("negative pmf entry")

    @property
    def K(self) -> int:
        return len(self.prefix)

    def pmf(self, k):
        k = np.asarray(k, dtype=np.int64)
        pre = np.asarray(self.prefix + (0.0,))
        head = pre[np.clip(k - 1, 0, self.K)]
        return np.where(k <= self.K, head, self.tail_model.pmf(np.maximum(k, 1)))

    def tail(self, k):
        k = np.asarray(k, dtype=np.int64)
        pre = np.asarray(self.prefix)
        rev = np.concatenate((np.cumsum(pre[::-1])[::-1], [0.0]))
        beyond = float(self.tail_model.tail(self.K + 1))
        head = rev[np.clip(k - 1, 0, self.K)] + beyond
        return np.where(k <= self.K, head, self.tail_model.tail(np.maximum(k, 1)))

    def power_tail_sum(self, k0, s):
        head = math.fsum((k ** s) * w for k, w in enumerate(self.prefix, 1) if k >= k0)
        return head + self.tail_model.power_tail_sum(max(k0, self.K + 1), s)

    def params(self):
        return {"prefix": list(self.prefix), "tail": {"family": self.tail_model.kind,
                                                      **self.tail_model.params()}}


def splitting_tail(mu: SplittingMeasure, k) -> float:
    """``mu-bar(k) = mu({k, k+1, ...})`` for k >= 1."""
    if np.any(np.asarray(k) < 1):
        raise ParameterError("splitting_tail needs k >= 1")
    out = mu.tail(k)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# validation


@dataclass
class Check:
    name: str
    passed: bool
    value: object = None
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)

    @property
    def overall(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list:
        return [c for c in self.checks if not c.passed]

    def __str__(self):
        lines = [f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.value} {c.detail}".rstrip()
                 for c in self.checks]
        return "\n".join(lines)


def validate_coalescence(lam: CoalescenceMeasure) -> ValidationReport:
    """Standing assumptions on Lambda, gathered into a report (never raises)."""
    rep = ValidationReport()
    bad_atoms = [x for x, _ in lam.atoms if not 0.0 < x < 1.0]
    rep.checks.append(Check("no mass at 1", not any(x >= 1.0 for x in bad_atoms),
                            bad_atoms or None))
    rep.checks.append(Check("atoms inside (0,1)", not bad_atoms, bad_atoms or None))
    rep.checks.append(Check("nonnegative weights",
                            lam.kingman >= 0 and all(w > 0 for _, w in lam.atoms)))
    try:
        dm = lam.density_mass()
        total = lam.kingman + sum(w for _, w in lam.atoms) + dm
        rep.checks.append(Check("finite total mass", math.isfinite(total), total))
    except QuadratureError as exc:
        rep.checks.append(Check("finite total mass", False, exc.estimate, str(exc)))
    if lam.density is not None:
        grid = np.logspace(-12, math.log10(1 - 1e-9), 200)
        vals = lam.density(grid)
        ok = bool(np.all(np.isfinite(vals)) and np.all(vals >= 0))
        rep.checks.append(Check("density nonnegative", ok, float(np.min(vals))))
    return rep


def validate_splitting(mu: SplittingMeasure) -> ValidationReport:
    rep = ValidationReport()
    ks = np.unique(np.logspace(0, 6, 300).astype(np.int64))
    p = mu.pmf(ks)
    rep.checks.append(Check("pmf nonnegative", bool(np.all(p >= 0)), float(np.min(p))))
    m = mu.total_mass
    rep.checks.append(Check("finite positive mass", math.isfinite(m) and m > 0, m))
    t = mu.tail(ks)
    rep.checks.append(Check("tail nonincreasing", bool(np.all(np.diff(t) <= 1e-15 * m)), None))
    return rep


# ---------------------------------------------------------------------------
# fragmentation jump sampler


@dataclass(frozen=True, eq=False)
class JumpSampler:
    """Alias table over jump sizes ``1 .. ceiling-1`` plus a tail bucket.

    Jump value ``ceiling`` is the tail bucket: a draw there stands for any
    jump ``>= ceiling``.  The table stops at the last bucket with positive
    probability.
    """

    ceiling: int
    prob: np.ndarray
    alias: np.ndarray
    probabilities: np.ndarray  # exact bucket probabilities, last one is the tail
    total_mass: float

    @property
    def tail_probability(self) -> float:
        return float(self.probabilities[-1])

    def sample(self, rng: np.random.Generator, size=None):
        """Jump sizes; the value ``ceiling`` marks the tail bucket.

        One uniform per draw: its integer part picks the column, the
        fractional part decides between the column and its alias.
        """
        m = len(self.prob)
        v = rng.random(size=size) * m
        i = np.minimum(np.floor(v).astype(np.int64), m - 1)
        out = np.where(v - i < self.prob[i], i, self.alias[i]) + 1
        return out


def _vose(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    from ._kernels import build_alias

    return build_alias(np.ascontiguousarray(p, dtype=np.float64))


def build_jump_sampler(mu: SplittingMeasure, ceiling: int) -> JumpSampler:
    if ceiling < 2:
        raise ParameterError("ceiling must be >= 2")
    M = mu.total_mass
    ks = np.arange(1, ceiling)
    p = np.empty(ceiling)
    p[:-1] = mu.pmf(ks) / M
    p[-1] = float(mu.tail(ceiling)) / M
    # trailing zero buckets (finite support) are dropped from the table
    top = int(np.flatnonzero(p)[-1]) + 1
    prob, alias = _vose(p[:top])
    return JumpSampler(int(ceiling), prob, alias, p, M)
