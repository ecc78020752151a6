"""Boundary classification of infinity.

Two independent axes are filled, ``explodes`` (can the chain reach infinity)
and ``comes_down`` (can it leave infinity), and the label is derived from them:
Exit = (Yes, No), Entrance = (No, Yes), Regular = (Yes, Yes).  Critical is only
ever produced by ``classify_regular`` on the known open lines.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from scipy import special

from .ga import (MARGIN, GFamily, drift_gaining, efc_kernel, nonexplosion_criterion,
                 series_converges)
from .measures import (CoalescenceMeasure, LogPowerDensity, LogSplitting, ParameterError,
                       PowerLawSplitting, SplittingMeasure)
from .rates import ell_array, phi_array, theta_estimates

__all__ = [
    "YES",
    "NO",
    "UNKNOWN",
    "BoundaryVerdict",
    "RegularVariationSpec",
    "SeriesCheck",
    "EllModel",
    "check_schweinsberg",
    "check_doney",
    "check_condition_H",
    "classify_sufficient",
    "classify_regular",
    "derive_label",
    "poly_thresholds",
    "measures_for",
]

YES, NO, UNKNOWN = "Yes", "No", "Unknown"
LABELS = ("Exit", "Entrance", "Regular", "NeitherAccessibleNorLeavable", "Critical", "Unknown")


def derive_label(explodes: str, comes_down: str) -> str:
    if explodes == YES and comes_down == NO:
        return "Exit"
    if explodes == NO and comes_down == YES:
        return "Entrance"
    if explodes == YES and comes_down == YES:
        return "Regular"
    if explodes == NO and comes_down == NO:
        return "NeitherAccessibleNorLeavable"
    return "Unknown"


@dataclass
class BoundaryVerdict:
    explodes: str = UNKNOWN
    comes_down: str = UNKNOWN
    critical: bool = False
    fired: list = field(default_factory=list)
    notes: str = ""

    @property
    def label(self) -> str:
        return "Critical" if self.critical else derive_label(self.explodes, self.comes_down)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("critical")
        d["label"] = self.label
        return d


@dataclass(frozen=True)
class RegularVariationSpec:
    """Asymptotic parameters of Phi and mu.

    ``family="poly"``: ``Phi(n) ~ d n**(1+beta)``, ``mu(n) ~ b n**-(1+alpha)``.
    ``family="log"``: ``Phi(n) ~ d n (log n)**beta``, ``mu(n) ~ b (log n)**alpha / n**2``.
    ``coal_family`` / ``frag_family`` may differ (mixed pairings are Unknown).
    ``exact_critical_form`` marks the case where Lambda has density
    ``d beta(beta+1)/Gamma(1-beta) x**-beta h(x)`` with ``h >= 1`` and
    ``mu(n) = b n**-(1+alpha)`` exactly.
    """

    alpha: float
    beta: float
    b: float
    d: float
    family: str = "poly"
    frag_family: str | None = None
    exact_critical_form: bool = False

    def __post_init__(self):
        if self.family not in ("poly", "log") or (self.frag_family or self.family) not in ("poly", "log"):
            raise ParameterError("family must be 'poly' or 'log'")
        if self.b <= 0 or self.d <= 0:
            raise ParameterError("b and d must be positive")
        if self.family == "poly":
            if not 0.0 < self.beta <= 1.0:
                raise ParameterError("poly coalescence needs 0 < beta <= 1")
        elif self.beta <= 0:
            raise ParameterError("log coalescence needs beta > 0")
        if self.alpha <= 0 and (self.frag_family or self.family) == "poly":
            raise ParameterError("poly fragmentation needs alpha > 0")
        if self.alpha < 0:
            raise ParameterError("alpha must be nonnegative")

    @classmethod
    def parse(cls, text: str) -> "RegularVariationSpec":
        """From ``alpha=0.5,beta=0.5,b=1,d=5,family=poly``."""
        kv = dict(item.split("=", 1) for item in text.split(",") if item.strip())
        kv = {k.strip(): v.strip() for k, v in kv.items()}
        fam = kv.pop("family", "poly")
        frag = kv.pop("frag_family", None)
        exact = kv.pop("exact", "false").lower() in ("1", "true", "yes")
        return cls(float(kv["alpha"]), float(kv["beta"]), float(kv["b"]), float(kv["d"]),
                   fam, frag, exact)


def measures_for(spec: RegularVariationSpec) -> tuple[CoalescenceMeasure, SplittingMeasure]:
    """Concrete measures whose Phi and mu have the asymptotics in ``spec``.

    poly: ``Lambda(dx) = d beta(1+beta)/Gamma(1-beta) x**-beta dx`` (Kingman
    ``2d`` when beta = 1) and ``mu(k) = b k**-(1+alpha)``.
    log: ``Lambda(dx) = d beta (-log x)**(beta-1) dx`` and
    ``mu(k) = b (log k)**alpha / k**2``.
    """
    frag = spec.frag_family or spec.family
    if spec.family == "poly":
        if spec.beta == 1.0:
            lam = CoalescenceMeasure.kingman_only(2.0 * spec.d)
        else:
            c = spec.d * spec.beta * (1.0 + spec.beta) / special.gamma(1.0 - spec.beta)
            lam = CoalescenceMeasure.power(c, spec.beta)
    else:
        if spec.beta < 1.0:
            raise ParameterError("log coalescence measures need beta >= 1")
        lam = CoalescenceMeasure(0.0, (), LogPowerDensity(spec.d * spec.beta, spec.beta - 1.0))
    mu = PowerLawSplitting(spec.b, spec.alpha) if frag == "poly" else LogSplitting(spec.b, spec.alpha)
    return lam, mu


def poly_thresholds(alpha: float) -> tuple[float, float]:
    """The two critical values of b/d on the line alpha + beta = 1."""
    return alpha * math.sin(math.pi * alpha) / math.pi, alpha * (1.0 - alpha)


# ---------------------------------------------------------------------------
# series checks


@dataclass
class SeriesCheck:
    result: str
    bound: float | None = None
    evidence: dict = field(default_factory=dict)


def _grid(top_exp: int = 22) -> np.ndarray:
    return 2 ** np.arange(2, top_exp + 1)


def _nondecreasing(x: np.ndarray, rtol: float = 1e-9) -> bool:
    return bool(np.all(np.diff(x) >= -rtol * np.abs(x[:-1])))


# log-power exponents used by the trend certificates; exponents closer to 1
# cannot be told apart from iterated-log corrections on a finite grid
_LOG_POWERS = (2.0, 1.5)


def _nonincreasing(x: np.ndarray, rtol: float = 1e-9) -> bool:
    return bool(np.all(np.diff(x) <= rtol * np.abs(x[:-1])))


def check_schweinsberg(lam: CoalescenceMeasure, grid=None) -> SeriesCheck:
    """Does ``sum 1/Phi(n)`` converge?

    Converges when ``Phi(n) / n**(1+eps)`` or ``Phi(n) / (n (log n)**r)``
    (``r`` in {1.5, 2}) is nondecreasing on the upper grid; diverges when
    ``Phi(n) / (n log n)`` stays bounded there.
    """
    if lam.is_zero:
        return SeriesCheck("Diverges", None, {"reason": "no coalescence"})
    if lam.kingman > 0:
        return SeriesCheck("Converges", 2.0 / lam.kingman, {"reason": "Kingman part"})
    grid = _grid() if grid is None else np.asarray(grid)
    upper = grid[len(grid) // 2:].astype(float)
    ph = phi_array(lam, upper)
    L = np.log(upper)
    slopes = np.diff(np.log(ph)) / np.diff(L)
    # power certificate: the excess log-slope must not decay like 1/log n
    if slopes.min() > 1.0 + 1e-3 and slopes[-1] - 1.0 >= 0.75 * (slopes[0] - 1.0):
        eps = 0.9 * (float(slopes.min()) - 1.0)
        if _nondecreasing(ph / upper ** (1.0 + eps)):
            n0 = int(upper[0])
            head = math.fsum(1.0 / phi_array(lam, np.arange(2, n0)))
            bound = head + n0 / (eps * ph[0])
            return SeriesCheck("Converges", bound, {"comparison": f"n^(1+{eps:.4g})"})
    for r in _LOG_POWERS:
        if _nondecreasing(ph / (upper * L ** r)):
            return SeriesCheck("Converges", None, {"comparison": f"n (log n)^{r}"})
    ratio = ph / (upper * L)
    # bounded ratio: dyadic increments decaying like (log n)**-1.5 are summable
    steps = np.maximum(np.diff(ratio), 0.0) * (0.5 * (L[1:] + L[:-1])) ** 1.5
    if _nonincreasing(ratio) or _nonincreasing(steps):
        return SeriesCheck("Diverges", None, {"comparison": "n log n"})
    return SeriesCheck("Unknown", None, {})


def check_doney(mu: SplittingMeasure, grid=None) -> SeriesCheck:
    """Pure branching: ``sum 1/(n ell(n)) < inf`` means explosion."""
    grid = _grid() if grid is None else np.asarray(grid)
    upper = grid[len(grid) // 2:]
    el = ell_array(mu, upper)
    L = np.log(upper.astype(float))
    for r in _LOG_POWERS:
        if _nondecreasing(el / L ** r):
            return SeriesCheck("Explodes", None, {"comparison": f"(log n)^{r}"})
    if _nonincreasing(el / L):
        return SeriesCheck("DoesNotExplode", None, {"comparison": "log n"})
    return SeriesCheck("Unknown", None, {})


@dataclass(frozen=True)
class EllModel:
    """Parametric model of ell: ``c n**s (log n)**r (log log n)**q``."""

    c: float = 1.0
    s: float = 0.0
    r: float = 0.0
    q: float = 0.0

    def __call__(self, n):
        n = np.asarray(n, dtype=float)
        L = np.log(n)
        out = self.c * n ** self.s * L ** self.r
        if self.q:
            out = out * np.log(L) ** self.q
        return out


def check_condition_H(mu_or_model, grid=None) -> SeriesCheck:
    """``ell(n) >= g(log n) log n`` with g from the certified catalogue."""
    if isinstance(mu_or_model, EllModel):
        m = mu_or_model
        if m.s > 0:
            g = GFamily("power", m.c / 2.0, r=0.0, s=m.s)
        elif m.r > 1:
            g = GFamily("polylog", m.c / 2.0, r=m.r)
        elif m.r == 1 and m.q > 1:
            g = GFamily("iterlog", m.c / 2.0, r=1.0, q=m.q)
        elif m.r <= 1 and m.q <= 0 and m.s <= 0:
            return SeriesCheck("Fails", None, {"reason": "ell <= C log n"})
        else:
            return SeriesCheck("Unknown")
        return SeriesCheck("Holds", None, {"g": g.describe()})
    mu = mu_or_model
    grid = (2 ** np.arange(4, 23)) if grid is None else np.asarray(grid)
    upper = grid[len(grid) // 2:]
    el = ell_array(mu, upper)
    L = np.log(upper.astype(float))
    slopes = np.diff(np.log(el)) / np.diff(L)
    s = 0.9 * float(np.min(slopes))
    candidates = []
    if s > 0.01:
        candidates.append(GFamily("power", 1.0, r=0.0, s=s))
    for r in _LOG_POWERS:
        candidates.append(GFamily("polylog", 1.0, r=r))
    for g in candidates:
        ratio = el / g.envelope(upper)
        if _nondecreasing(ratio):
            g = GFamily(g.name, float(ratio[0]), g.r, g.s, g.q)
            return SeriesCheck("Holds", None, {"g": g.describe(), "from": int(upper[0])})
    if _nonincreasing(el / L):
        return SeriesCheck("Fails", None, {"reason": "ell(n)/log n nonincreasing"})
    return SeriesCheck("Unknown")


# ---------------------------------------------------------------------------
# classification from the measures


def classify_sufficient(lam: CoalescenceMeasure, mu: SplittingMeasure, *,
                        margin: float = MARGIN, grid=None) -> BoundaryVerdict:
    """Apply the sufficient conditions in turn and fill both axes."""
    v = BoundaryVerdict()
    grid = (2 ** np.arange(4, 23)) if grid is None else np.asarray(grid)
    upper = grid[len(grid) // 2:]
    schw = check_schweinsberg(lam)
    hcond = check_condition_H(mu)
    ph = phi_array(lam, upper)
    el = ell_array(mu, upper)
    rho = ph / (upper * el)
    rho_high = float(np.max(rho))
    # exit: H and Phi/(n ell) -> 0
    rho_slope = float(np.polyfit(np.log(upper.astype(float)), np.log(np.maximum(rho, 1e-300)), 1)[0])
    if hcond.result == "Holds" and _nonincreasing(rho) and (rho_slope < -margin or rho[-1] < 0.2 * margin):
        v.explodes, v.comes_down = YES, NO
        v.fired.append({"test": "exit_sufficient", "rho_last": float(rho[-1]), "rho_slope": rho_slope,
                        "g": hcond.evidence.get("g")})
    # rho tests
    # a limsup bracket is only trusted when rho is not trending up at all:
    # rho ~ n**eps with small eps > 0 has limsup infinity
    if v.explodes == UNKNOWN and hcond.result == "Holds" and _nonincreasing(rho):
        if rho_high < 0.5 - margin:
            v.explodes = YES
            v.fired.append({"test": "rho_explosion", "rho_high": rho_high})
        if rho_high <= 0.25:
            v.comes_down = NO
            v.fired.append({"test": "rho_exit", "rho_high": rho_high})
    # non-explosion / entrance via the series sum n mu-bar(n)/Phi(n)
    if v.explodes == UNKNOWN and not lam.is_zero:
        tails = np.asarray(mu.tail(upper))
        terms = upper * tails / ph
        ok, bound = series_converges(terms, upper)
        if ok:
            v.explodes = NO
            v.fired.append({"test": "nonexplosion_series", "tail_bound": bound})
            if schw.result == "Converges" and v.comes_down == UNKNOWN:
                v.comes_down = YES
                v.fired.append({"test": "entrance_series", "schweinsberg": schw.evidence})
    if v.explodes == UNKNOWN and not lam.is_zero:
        ne = nonexplosion_criterion(efc_kernel(lam, mu), margin=margin)
        if ne.result == "NonExplosive":
            v.explodes = NO
            v.fired.append({"test": "nonexplosion_lyapunov", **ne.certificate})
    if lam.is_zero:
        dn = check_doney(mu)
        v.comes_down = NO
        v.fired.append({"test": "no_coalescence"})
        if dn.result == "Explodes":
            v.explodes = YES
        elif dn.result == "DoesNotExplode":
            v.explodes = NO
        v.fired.append({"test": "doney", "result": dn.result})
    # coming down: theta bracket
    if v.comes_down == UNKNOWN:
        if schw.result == "Diverges":
            v.comes_down = NO
            v.fired.append({"test": "schweinsberg_diverges"})
        elif schw.result == "Converges":
            th = theta_estimates(lam, mu)
            settled = th.converged or _nonincreasing(th.values[len(th.values) // 2:])
            if th.theta_high < 1.0 - margin and settled and \
                    not drift_gaining(lam, mu, _grid()[len(_grid()) // 2:]):
                v.comes_down = YES
                v.fired.append({"test": "cdi_theta", "theta": [th.theta_low, th.theta_high]})
            elif th.converged and th.theta_low > 1.0 + margin and \
                    _nondecreasing(th.values[len(th.values) // 2:]):
                v.comes_down = NO
                v.fired.append({"test": "cdi_theta", "theta": [th.theta_low, th.theta_high]})
    return v


# ---------------------------------------------------------------------------
# closed-form phase diagrams


def classify_regular(spec: RegularVariationSpec) -> BoundaryVerdict:
    """Classification from the regular-variation exponents alone."""
    v = BoundaryVerdict()
    a, bta = spec.alpha, spec.beta
    ratio = spec.b / spec.d
    frag = spec.frag_family or spec.family
    if spec.family != frag:
        v.notes = "mixed coalescence/fragmentation families are not covered"
        return v
    if spec.family == "poly":
        tag = {"test": "stable_fragmentation_phase", "alpha": a, "beta": bta, "b_over_d": ratio}
        s = a + bta
        if bta == 1.0:
            # Phi ~ d n**2 with polynomial mu: sum mu-bar(n)/n converges
            v.explodes, v.comes_down = NO, YES
            v.fired.append({**tag, "case": "quadratic_coalescence"})
            return v
        if math.isclose(s, 1.0, rel_tol=0, abs_tol=1e-12):
            low, high = poly_thresholds(a)
            sigma = ratio * math.pi / (a * math.sin(math.pi * a))
            theta = ratio / (a * (1.0 - a))
            tag.update(sigma=sigma, theta=theta, thresholds=[low, high])
            if ratio > high:
                v.explodes, v.comes_down = YES, NO
            elif math.isclose(ratio, high, rel_tol=1e-12):
                v.critical = True
                v.notes = "b/d on the upper critical line"
            elif ratio > low:
                v.explodes, v.comes_down = YES, YES
            elif math.isclose(ratio, low, rel_tol=1e-12):
                if spec.exact_critical_form:
                    v.explodes, v.comes_down = NO, YES
                    v.fired.append({"test": "critical_entrance_family", "b_over_d": ratio})
                else:
                    v.critical = True
                    v.notes = "b/d on the lower critical line"
            else:
                v.explodes, v.comes_down = NO, YES
            v.fired.append(tag)
            return v
        if s < 1.0:
            v.explodes, v.comes_down = YES, NO
        else:
            v.explodes, v.comes_down = NO, YES
        v.fired.append(tag)
        return v
    tag = {"test": "log_coalescence_phase", "alpha": a, "beta": bta, "b_over_d": ratio}
    edge = 1.0 + a
    if math.isclose(bta, edge, rel_tol=0, abs_tol=1e-12):
        if ratio > edge:
            v.explodes, v.comes_down = YES, NO
        elif ratio < edge:
            v.explodes, v.comes_down = NO, YES
        else:
            v.critical = True
            v.notes = "b/d = 1 + alpha is open"
    elif bta < edge:
        v.explodes, v.comes_down = YES, NO
    else:
        v.explodes, v.comes_down = NO, YES
    v.fired.append(tag)
    return v
