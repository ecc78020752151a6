"""Lyapunov functionals for explosion and non-explosion.

With ``g_a(n) = n**(1-a)`` and generator L, ``G_a(n) = -n**(a-1) L g_a(n)``
splits into an upward part ``G_a^+`` (fragmentation) and a downward part
``G_a^-`` (coalescence).  For ``a > 1`` the upward part is nonnegative and
the downward part nonpositive; for ``a < 1`` the signs flip.  Explosion is
certified when ``G_a`` grows fast enough with ``-G_a^- / G_a^+`` bounded
below 1, and non-explosion when ``-G_a^+ / G_a^-`` stays below 1 for some
``a < 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .measures import TOL_TAIL, CoalescenceMeasure, FiniteSplitting, ParameterError, SplittingMeasure
from .rates import merge_rates, phi_array

__all__ = [
    "GeneralKernel",
    "GaProfile",
    "GFamily",
    "G_CATALOGUE",
    "Verdict",
    "efc_kernel",
    "ga_frag",
    "ga_coal",
    "ga_coal_stopped",
    "ga_general",
    "ga_profile_efc",
    "explosion_criterion",
    "nonexplosion_criterion",
    "drift_gaining",
    "h_a_product",
    "exit_bound_below",
    "exit_bound_late",
    "exit_bound_slow",
    "default_a_candidates",
    "MARGIN",
    "series_converges",
]

MARGIN = 0.05

# exact summation below this many terms, log-scale quadrature of the pmf above
_EXACT_K = 1 << 16
_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def default_a_candidates(side: str = "both", depth: int = 10) -> list[float]:
    """``1 +- 2**-j`` for ``j = 1..depth``."""
    up = [1.0 + 2.0 ** -j for j in range(1, depth + 1)]
    down = [1.0 - 2.0 ** -j for j in range(1, depth + 1)]
    return {"up": up, "down": down, "both": up + down}[side]


# ---------------------------------------------------------------------------
# series against mu


def _smooth_pmf(mu: SplittingMeasure) -> bool:
    return not isinstance(mu, FiniteSplitting) and math.isinf(mu.support_max)


def _mu_series(mu: SplittingMeasure, h: Callable, decay: float) -> float:
    """``sum_{k>=1} mu(k) h(k)`` for a smooth h.

    The first ``_EXACT_K`` terms are summed directly; the rest is integrated
    octave by octave in log scale (Euler-Maclaurin midpoint form, whose error
    is O(k**-2) relative there).  ``decay`` is a lower bound on the exponent
    of octave-to-octave decay, used to stop and to bound the remainder.
    """
    if not _smooth_pmf(mu):
        kmax = int(mu.support_max) if math.isfinite(mu.support_max) else _EXACT_K
        k = np.arange(1, kmax + 1, dtype=float)
        return math.fsum(mu.pmf(k) * h(k))
    k = np.arange(1, _EXACT_K, dtype=float)
    total = [math.fsum(mu.pmf(k) * h(k))]
    lo = _EXACT_K - 0.5
    last = math.inf
    for _ in range(200):
        hi = 2.0 * lo
        a, b = math.log(lo), math.log(hi)
        v = 0.5 * (b - a) * _GL_X + 0.5 * (a + b)
        x = np.exp(v)
        piece = 0.5 * (b - a) * float(np.sum(_GL_W * mu.pmf(x) * h(x) * x))
        total.append(piece)
        lo = hi
        if not math.isfinite(piece):
            return math.inf
        if abs(piece) <= TOL_TAIL * abs(math.fsum(total)) or piece == 0.0:
            break
        if last < math.inf and decay > 0:
            r = 2.0 ** -decay
            if abs(piece) * r / (1.0 - r) <= TOL_TAIL * abs(math.fsum(total)):
                total.append(piece * r / (1.0 - r))
                break
        last = piece
    return math.fsum(total)


def _tail_exponent(mu: SplittingMeasure) -> float:
    """Exponent e with mu(k) = O(k**-e) (geometric tails report a large value)."""
    kind = getattr(mu, "kind", "")
    if kind == "power":
        return 1.0 + mu.alpha
    if kind == "log":
        return 2.0 - 1e-3
    if kind == "composite":
        return _tail_exponent(mu.tail_model)
    return 50.0


def ga_frag(mu: SplittingMeasure, a: float, n: int) -> float:
    """``G_a^f(n) = -n sum_k mu(k) [(1 + k/n)**(1-a) - 1]``."""
    if n < 1:
        raise ParameterError("ga_frag needs n >= 1")
    if a < 1.0 and not math.isfinite(mu.power_tail_sum(1, 1.0 - a)):
        raise ParameterError(
            f"sum k**(1-a) mu(k) diverges for a={a}: splitting tail too heavy")
    h = lambda k: -np.expm1((1.0 - a) * np.log1p(k / n))
    decay = _tail_exponent(mu) - 1.0 - max(0.0, 1.0 - a)
    return n * _mu_series(mu, h, decay)


def _coal_factor(a: float, n: int, k: np.ndarray) -> np.ndarray:
    return -np.expm1((1.0 - a) * np.log1p(-(k - 1.0) / n))


def ga_coal(lam: CoalescenceMeasure, a: float, n: int) -> float:
    """``G_a^c(n) = -sum_k C(n,k) lambda_{n,k} [(1 - (k-1)/n)**(1-a) - 1]``."""
    if n < 2:
        return 0.0
    row = merge_rates(lam, n)
    k = np.arange(2, n + 1, dtype=float)
    return math.fsum(row * _coal_factor(a, n, k))


def ga_coal_stopped(lam: CoalescenceMeasure, a: float, p: float, n: int) -> float:
    """As ``ga_coal`` with the sum restricted to ``k <= floor(n p)``."""
    if not 0.0 < p < 1.0:
        raise ParameterError("p must lie in (0, 1)")
    if n < 2:
        return 0.0
    kmax = int(math.floor(n * p))
    if kmax < 2:
        return 0.0
    row = merge_rates(lam, n)[: kmax - 1]
    k = np.arange(2, kmax + 1, dtype=float)
    return math.fsum(row * _coal_factor(a, n, k))


# ---------------------------------------------------------------------------
# general kernels


@dataclass(frozen=True)
class GeneralKernel:
    """Birth-death-type CTMC on the positive integers.

    ``up_rates(n, k)`` and ``down_rates(n, k)`` are vectorised in k.  Upward
    jumps are summed over ``1..up_cutoff(n)`` and the rest is controlled by
    ``up_tail_hint(n, a)``, a closed-form remainder when one is known.
    """

    up_rates: Callable
    down_rates: Callable
    up_cutoff: Callable = lambda n: 4096
    up_tail_hint: Callable | None = None
    name: str = "kernel"
    # fast paths used when the kernel wraps an EFC chain
    efc: tuple | None = None


def efc_kernel(lam: CoalescenceMeasure, mu: SplittingMeasure | None, p: float | None = None
               ) -> GeneralKernel:
    """The block-counting chain as a general kernel (optionally sigma_p-stopped)."""

    def up(n, k):
        if mu is None:
            return np.zeros(np.shape(k))
        return n * mu.pmf(k)

    def down(n, k):
        k = np.asarray(k)
        row = merge_rates(lam, n)
        # a jump of size k removes k blocks: k+1 blocks merge
        out = np.where((k >= 1) & (k <= n - 1), row[np.clip(k - 1, 0, max(n - 2, 0))], 0.0)
        if p is not None:
            out = np.where(k + 1 <= math.floor(n * p), out, 0.0)
        return out

    return GeneralKernel(up, down, name="efc", efc=(lam, mu, p))


@dataclass
class GaProfile:
    a: float
    grid: np.ndarray
    g_plus: np.ndarray
    g_minus: np.ndarray
    g_total: np.ndarray
    ratio: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.ratio is None:
            with np.errstate(divide="ignore", invalid="ignore"):
                self.ratio = np.where(self.g_plus != 0, -self.g_minus / self.g_plus, np.nan)


def _general_terms(kernel: GeneralKernel, a: float, n: int) -> tuple[float, float]:
    kd = np.arange(1, n, dtype=np.int64)
    down = math.fsum(np.asarray(kernel.down_rates(n, kd)) * -np.expm1((1.0 - a) * np.log1p(-kd / n)))
    K = int(kernel.up_cutoff(n))
    ku = np.arange(1, K + 1, dtype=np.int64)
    up_terms = np.asarray(kernel.up_rates(n, ku)) * -np.expm1((1.0 - a) * np.log1p(ku / n))
    up = math.fsum(up_terms)
    if kernel.up_tail_hint is not None:
        up += kernel.up_tail_hint(n, a)
    return up, down


def ga_general(kernel: GeneralKernel, a: float, grid) -> GaProfile:
    """``G_a`` split into ``G_a^+`` (upward jumps) and ``G_a^-`` (downward jumps)."""
    if a == 1.0:
        raise ParameterError("a = 1 is excluded")
    grid = np.asarray(grid, dtype=np.int64)
    gp, gm = [], []
    for n in grid:
        n = int(n)
        if kernel.efc is not None:
            lam, mu, p = kernel.efc
            up = ga_frag(mu, a, n) if mu is not None else 0.0
            down = ga_coal(lam, a, n) if p is None else ga_coal_stopped(lam, a, p, n)
        else:
            up, down = _general_terms(kernel, a, n)
        gp.append(up)
        gm.append(down)
    gp, gm = np.array(gp), np.array(gm)
    return GaProfile(a, grid, gp, gm, gp + gm)


def ga_profile_efc(lam, mu, a, grid, p=None) -> GaProfile:
    return ga_general(efc_kernel(lam, mu, p), a, grid)


# ---------------------------------------------------------------------------
# catalogue of g with a closed-form certificate for int^inf dx/(x g(x)) < inf


@dataclass(frozen=True)
class GFamily:
    """``g(x) = c x**(r-1) exp(s x) (log x)**q`` restricted to certified members.

    The integral ``int^inf dx / (x g(x))`` converges iff ``s > 0``, or
    ``s = 0, r > 1``, or ``s = 0, r = 1, q > 1``.
    """

    name: str
    c: float
    r: float = 1.0
    s: float = 0.0
    q: float = 0.0

    def __post_init__(self):
        ok = self.c > 0 and (self.s > 0 or (self.s == 0 and self.r > 1)
                             or (self.s == 0 and self.r == 1 and self.q > 1))
        if not ok:
            raise ParameterError(f"{self} has no integrability certificate")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = self.c * x ** (self.r - 1.0) * np.exp(self.s * x)
        if self.q:
            out = out * np.log(x) ** self.q
        return out

    def envelope(self, n):
        """``g(log n) log n``."""
        L = np.log(np.asarray(n, dtype=float))
        return self(L) * L

    def describe(self) -> dict:
        return {"family": self.name, "c": self.c, "r": self.r, "s": self.s, "q": self.q}


# shapes tried in order; constants are fitted
G_CATALOGUE = (
    ("power", lambda s: dict(r=0.0, s=s)),      # g(log n) log n = c n**s
    ("polylog", lambda r: dict(r=r)),            # = c (log n)**r
    ("iterlog", lambda q: dict(r=1.0, q=q)),     # = c log n (log log n)**q
)


def _fit_g(values: np.ndarray, grid: np.ndarray) -> GFamily | None:
    """A catalogue g with ``g(log n) log n <= values`` on the grid and a trend
    certificate: ``values / envelope`` nondecreasing on the grid."""
    if np.any(values <= 0):
        return None
    L = np.log(grid.astype(float))
    slopes = np.diff(np.log(values)) / np.diff(L)
    s = 0.9 * float(np.min(slopes))
    if s > 0.01:
        shape = GFamily("power", 1.0, r=0.0, s=s)
    else:
        lslopes = np.diff(np.log(values)) / np.diff(np.log(L))
        r = 0.9 * float(np.min(lslopes))
        if r > 1.01:
            shape = GFamily("polylog", 1.0, r=r)
        else:
            return None
    ratio = values / shape.envelope(grid)
    if np.any(np.diff(ratio) < -1e-9 * ratio[:-1]):
        return None
    return GFamily(shape.name, float(np.min(ratio)), shape.r, shape.s, shape.q)


# ---------------------------------------------------------------------------
# verdicts


@dataclass
class Verdict:
    result: str  # "Explodes" | "NonExplosive" | "Inconclusive"
    certificate: dict = field(default_factory=dict)
    profiles: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"verdict": self.result, "certificate": self.certificate}


def _default_grid(n_eval_max: float = 2 ** 22) -> np.ndarray:
    return 2 ** np.arange(4, int(math.log2(n_eval_max)) + 1)


def explosion_criterion(kernel: GeneralKernel, a_candidates=None, g_family=None, *,
                        grid=None, margin: float = MARGIN,
                        p_candidates=(None, 0.25, 0.125, 0.0625, 0.03125)) -> Verdict:
    """Search ``a > 1`` (and ``p`` for EFC kernels) for a growth certificate.

    Explodes when, on the upper half of the grid, ``G_a^+`` dominates a
    catalogue envelope ``g(log n) log n`` with a nondecreasing quotient and
    ``-G_a^- / G_a^+ < 1 - margin``; then ``G_a >= margin * g(log n) log n``.
    """
    grid = _default_grid() if grid is None else np.asarray(grid, dtype=np.int64)
    a_candidates = default_a_candidates("up") if a_candidates is None else a_candidates
    half = len(grid) // 2
    upper = grid[half:]
    ps = p_candidates if kernel.efc is not None else (None,)
    tried = []
    for p in ps:
        k = kernel if p is None else efc_kernel(kernel.efc[0], kernel.efc[1], p)
        for a in a_candidates:
            if a <= 1.0:
                continue
            prof = ga_general(k, a, upper)
            gmax = float(np.nanmax(prof.ratio)) if np.all(prof.g_plus > 0) else math.inf
            tried.append({"a": a, "p": p, "gamma_high": gmax})
            if gmax >= 1.0 - margin:
                continue
            g = g_family if g_family is not None else _fit_g(prof.g_plus, upper)
            if g is None:
                continue
            if np.any(prof.g_total < (1.0 - gmax) * g.envelope(upper) * (1 - 1e-12)):
                continue
            return Verdict("Explodes", {
                "path": "growth_and_ratio", "a": a, "p": p, "margin": margin,
                "gamma_high": gmax, "g": g.describe(),
                "grid": [int(upper[0]), int(upper[-1]), len(upper)],
                "threshold": int(upper[0])}, [prof])
    return Verdict("Inconclusive", {"tried": tried[:40], "margin": margin,
                                    "grid": [int(upper[0]), int(upper[-1]), len(upper)]})


def series_converges(terms: np.ndarray, grid: np.ndarray, eps: float = 0.05) -> tuple[bool, float]:
    """Trend test for ``sum_n t(n) < inf`` from samples on a geometric grid.

    Certified when the terms decay like ``n**-(1+eps')`` with a log-slope
    excess that does not fade like ``1/log n``, or when ``t(n) n (log n)**r``
    is nonincreasing for ``r`` in {1.5, 2}.  Returns the verdict and an
    estimate of the tail beyond the grid.
    """
    terms = np.asarray(terms, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if np.all(terms == 0) or np.any(terms[-2:] == 0):
        return True, 0.0
    if np.any(terms <= 0):
        return False, math.inf
    L = np.log(grid)
    excess = -np.diff(np.log(terms)) / np.diff(L) - 1.0
    n = float(grid[-1])
    if excess.min() > eps and excess[-1] >= 0.75 * excess[0]:
        return True, float(terms[-1] * n / excess.min())
    # r close to 1 cannot separate (log n)**-r from 1/(log n log log n) on a
    # practical grid, so only clearly faster decay is accepted
    for r in (2.0, 1.5):
        w = terms * grid * L ** r
        if np.all(np.diff(w) <= 1e-9 * w[:-1]):
            return True, float(terms[-1] * n * L[-1] / (r - 1.0))
    return False, math.inf


def drift_gaining(lam: CoalescenceMeasure, mu: SplittingMeasure | None,
                  grid: np.ndarray) -> bool:
    """Whether fragmentation drift outgrows coalescence drift along ``grid``.

    Tracks ``D(n) = n sum_{k<=n} k mu(k) / Phi(n)``.  A finite-grid
    certificate that coalescence wins is only trusted when ``D`` is
    nonincreasing or its dyadic increments decay like ``(log n)**-1.5``;
    slowly varying growth (``(log n)**eps``, ``n**eps``) fails both.
    """
    if mu is None or lam.is_zero:
        return False
    g = np.asarray(grid, dtype=np.int64)
    first = np.array([mu.first_moment_upto(int(n)) for n in g])
    d = g * first / phi_array(lam, g)
    if np.all(np.diff(d) <= 1e-12 * np.abs(d[:-1])):
        return False
    logs = np.log(g.astype(float))
    steps = np.maximum(np.diff(d), 0.0) * (0.5 * (logs[1:] + logs[:-1])) ** 1.5
    return not bool(np.all(np.diff(steps) <= 1e-12 * (1.0 + steps[:-1])))


def nonexplosion_criterion(kernel_or_measures, a_candidates=None, *, grid=None,
                           margin: float = MARGIN) -> Verdict:
    """Certificate of non-explosion by one of three paths.

    (i) ``-G_a^+ / G_a^- < 1 - margin`` for some ``a < 1`` on the upper grid;
    (ii) for EFC chains: ``n**(1+a)/Phi(n) sum_{k>=n} k**(1-a) mu(k)`` decays
    below ``margin`` and ``(n/Phi(n)) sum_{k<=n} k mu(k) < 1 - margin``;
    (iii) for EFC chains: ``sum_n n mu-bar(n) / Phi(n)`` converges.
    Paths (i) and (ii) are skipped for EFC chains whose drift ratio is still
    growing on the grid (see ``drift_gaining``).
    """
    if isinstance(kernel_or_measures, GeneralKernel):
        kernel = kernel_or_measures
    else:
        lam, mu = kernel_or_measures
        kernel = efc_kernel(lam, mu)
    grid = _default_grid() if grid is None else np.asarray(grid, dtype=np.int64)
    a_candidates = default_a_candidates("down") if a_candidates is None else a_candidates
    upper = grid[len(grid) // 2:]
    gridinfo = [int(upper[0]), int(upper[-1]), len(upper)]
    efc = kernel.efc
    if efc is not None and (efc[0].is_zero):
        return Verdict("Inconclusive", {"reason": "no coalescence", "grid": gridinfo})
    tried = []
    gaining = efc is not None and drift_gaining(efc[0], efc[1], upper)
    # (iii) first: it needs no choice of a
    if efc is not None:
        lam, mu, _ = efc
        phis = phi_array(lam, upper)
        tails = np.asarray(mu.tail(upper)) if mu is not None else np.zeros(len(upper))
        ok, bound = series_converges(upper * tails / phis, upper)
        if ok:
            return Verdict("NonExplosive", {"path": "series", "tail_bound": bound,
                                            "grid": gridinfo})
    if gaining:
        return Verdict("Inconclusive", {"reason": "fragmentation drift still gaining",
                                        "grid": gridinfo})
    # (i)
    for a in a_candidates:
        if a >= 1.0:
            continue
        try:
            prof = ga_general(kernel, a, upper)
        except ParameterError as exc:
            tried.append({"a": a, "skipped": str(exc)})
            continue
        if np.any(prof.g_minus <= 0):
            continue
        r = float(np.max(-prof.g_plus / prof.g_minus))
        tried.append({"a": a, "ratio_high": r})
        if r < 1.0 - margin:
            return Verdict("NonExplosive", {"path": "lyapunov_ratio", "a": a, "ratio_high": r,
                                            "margin": margin, "grid": gridinfo}, [prof])
    if efc is None:
        return Verdict("Inconclusive", {"tried": tried, "margin": margin, "grid": gridinfo})
    # (ii)
    if mu is not None:
        first = np.array([mu.first_moment_upto(int(n)) if n <= 1 << 22 else math.nan
                          for n in upper])
        lin = upper * first / phis
        for a in a_candidates:
            if a >= 1.0 or not math.isfinite(mu.power_tail_sum(1, 1.0 - a)):
                continue
            tails = np.array([mu.power_tail_sum(int(n), 1.0 - a) for n in upper])
            q = upper.astype(float) ** (1.0 + a) / phis * tails
            decays = bool(q[-1] < margin and np.all(np.diff(q) <= 0))
            lin_ok = bool(np.nanmax(lin) < 1.0 - margin)
            if decays and lin_ok:
                return Verdict("NonExplosive", {"path": "moment_conditions", "a": a,
                                                "tail_ratio_last": float(q[-1]),
                                                "linear_ratio_high": float(np.nanmax(lin)),
                                                "margin": margin, "grid": gridinfo})
    return Verdict("Inconclusive", {"tried": tried, "margin": margin, "grid": gridinfo})


# ---------------------------------------------------------------------------
# explicit bounds


def h_a_product(a: float, delta: float, n0: float) -> float:
    """``prod_{k>=0} (1 - (2**(a-1) + 1) n0**(-delta (a-1) (1+delta)**k))``."""
    if a <= 1.0:
        raise ParameterError("h_a_product needs a > 1")
    if not 0.0 < delta < 1.0 / (2.0 * a - 1.0):
        raise ParameterError("need 0 < delta < 1/(2a-1)")
    c = 2.0 ** (a - 1.0) + 1.0
    base = -delta * (a - 1.0) * math.log(n0)
    logp = 0.0
    k = 0
    while True:
        q = c * math.exp(base * (1.0 + delta) ** k)
        if k == 0 and q >= 1.0:
            raise ParameterError(f"n0={n0} too small: first factor is not positive")
        if q < 1e-15:
            break
        logp += math.log1p(-q)
        k += 1
    return math.exp(logp)


def exit_bound_below(n: float, n0: float, a: float) -> float:
    """``P_{n0}(tau_n^- < tau_m^+) <= (n/n0)**(a-1)``."""
    return (n / n0) ** (a - 1.0)


def exit_bound_late(n0: float, m: float, a: float, u: float, g: GFamily, n: float) -> float:
    """``P_{n0}(tau_n^- > tau_m^+ > u) <= (n0/m)**(1-a) exp(-u g(log n) log n)``."""
    return (n0 / m) ** (1.0 - a) * math.exp(-u * float(g.envelope(n)))


def exit_bound_slow(n0: float, a: float, delta: float) -> float:
    """``P_{n0}(tau_m^+ > t(n0)) <= (1 + 2**(a-1)) n0**(delta (1-a))``."""
    return (1.0 + 2.0 ** (a - 1.0)) * n0 ** (delta * (1.0 - a))
