"""Event-driven simulation of the block-counting chain below a ceiling.

The ceiling ``n_max`` stands in for infinity: a path that reaches it is an
explosion proxy and is never restarted.  A fragmentation draw from the tail
bucket of the jump sampler (a jump of at least ``n_max``) also counts as an
explosion and is flagged.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from . import _kernels as K
from .ga import GFamily, exit_bound_below, exit_bound_late, exit_bound_slow, ga_coal, ga_frag
from .measures import (CoalescenceMeasure, JumpSampler, ParameterError, SplittingMeasure,
                       build_jump_sampler)
from .rates import RateTable
from .stats import MCEstimate, mean_estimate, proportion

__all__ = [
    "SCHEMA_VERSION",
    "SimConfig",
    "PathLog",
    "SimOutcome",
    "BudgetExceeded",
    "replica_rng",
    "step",
    "run_path",
    "run_replicas",
    "round_trip",
    "RoundTrip",
    "LadderReport",
    "ladder_from_infinity",
    "EmpiricalExitReport",
    "first_passage_stats",
    "outcomes_to_jsonl",
    "martingale_profile",
]

SCHEMA_VERSION = "1"
DEFAULT_CEILING = 10 ** 6
DEFAULT_BUDGET = 10 ** 9


@dataclass(frozen=True)
class SimConfig:
    """One path: start, horizon, ceiling, floor, stopping mode and seed.

    ``mode`` is ``"free"`` or ``"stopped"``; in stopped mode the path ends the
    first time a single coalescence merges more than ``p n`` blocks.
    """

    initial_n: int
    horizon: float
    n_max: int = DEFAULT_CEILING
    floor: int = 1
    mode: str = "free"
    p: float | None = None
    seed: int = 0
    record_path: bool = False
    absorb_at_floor: bool = False
    max_jumps: int = DEFAULT_BUDGET

    def __post_init__(self):
        if not 1 <= self.floor < self.initial_n <= self.n_max:
            raise ParameterError("need 1 <= floor < initial_n <= n_max")
        if not self.horizon > 0:
            raise ParameterError("horizon must be positive")
        if self.mode not in ("free", "stopped"):
            raise ParameterError("mode must be 'free' or 'stopped'")
        if self.mode == "stopped" and not (self.p is not None and 0.0 < self.p < 1.0):
            raise ParameterError("stopped mode needs 0 < p < 1")
        if self.max_jumps < 1:
            raise ParameterError("max_jumps must be positive")

    def with_(self, **kw) -> "SimConfig":
        d = asdict(self)
        d.update(kw)
        return SimConfig(**d)


@dataclass
class PathLog:
    t: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    kind: np.ndarray  # 0 coalescence, 1 fragmentation
    k: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    def rows(self):
        for i in range(len(self)):
            yield (float(self.t[i]), int(self.src[i]), int(self.dst[i]),
                   "coal" if self.kind[i] == K.KIND_COAL else "frag", int(self.k[i]))

    def is_legal(self) -> bool:
        """Every transition is ``n -> n-k+1`` (2 <= k <= n) or ``n -> n+k`` (k >= 1),
        and consecutive events chain."""
        coal = self.kind == K.KIND_COAL
        ok_c = (self.dst == self.src - self.k + 1) & (self.k >= 2) & (self.k <= self.src)
        ok_f = (self.dst == self.src + self.k) & (self.k >= 1)
        chained = np.all(self.src[1:] == self.dst[:-1])
        return bool(np.all(np.where(coal, ok_c, ok_f)) and chained and np.all(np.diff(self.t) >= 0))

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "from", "to", "kind", "k"])
        for t, a, b, kind, k in self.rows():
            w.writerow([repr(t), a, b, kind, k])

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


@dataclass
class SimOutcome:
    """Result of one path.

    ``terminal`` is one of ExplodedProxy, HitFloor, Censored, SigmaPFired.
    ``time`` is the terminal time (the horizon when censored).  ``floor_time``
    is the first time the state was at or below the floor, if ever.
    ``jump_count`` counts accepted jumps; thinned proposals are ``n_rejected``
    and count against the budget.
    """

    terminal: str
    time: float
    via_tail: bool
    floor_time: float | None
    jump_count: int
    n_coal: int
    n_frag: int
    n_rejected: int
    max_state: int
    min_state: int
    final_state: int
    absorbed: bool = False
    budget_exhausted: bool = False
    path: PathLog | None = None
    replica: int | None = None

    @property
    def exploded(self) -> bool:
        return self.terminal == "ExplodedProxy"

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "path"}
        d["schema_version"] = SCHEMA_VERSION
        return d


class BudgetExceeded(RuntimeError):
    def __init__(self, outcome: SimOutcome):
        super().__init__(f"jump budget exhausted after {outcome.jump_count} jumps")
        self.outcome = outcome


def replica_rng(seed_root: int, index: int) -> np.random.Generator:
    """Counter-mode stream: replica ``index`` depends only on ``(seed_root, index)``."""
    ss = np.random.SeedSequence(int(seed_root), spawn_key=(int(index),))
    return np.random.Generator(np.random.PCG64(ss))


# ---------------------------------------------------------------------------
# one step from the exact categorical row


def step(n: int, rates: RateTable, sampler: JumpSampler | None, rng: np.random.Generator):
    """Waiting time, next state, kind and size of the next jump from ``n``.

    The merger size comes from the cached row ``C(n,k) lambda_{n,k}``; a
    fragmentation size equal to ``sampler.ceiling`` stands for the tail bucket.
    Returns ``(inf, n, "absorbed", 0)`` when no event can occur.
    """
    if rates.n != n:
        raise ParameterError("rate table belongs to another state")
    rc = rates.total_coal_rate
    rf = rates.total_frag_rate if sampler is not None else 0.0
    total = rc + rf
    if total <= 0.0:
        return math.inf, n, "absorbed", 0
    wait = rng.exponential(1.0 / total)
    if rng.random() * total < rf:
        k = int(sampler.sample(rng))
        return wait, n + k, "frag", k
    row = rates.merge_rates
    k = 2 + int(np.searchsorted(np.cumsum(row), rng.random() * rc, side="right"))
    k = min(k, n)
    return wait, n - k + 1, "coal", k


# ---------------------------------------------------------------------------
# compiled path


@dataclass(frozen=True)
class _Setup:
    kingman: float
    atoms_x: np.ndarray
    atoms_w: np.ndarray
    dens_kind: int
    dens_c: float
    dens_beta: float
    dens_gamma: float
    tab_x: np.ndarray
    tab_y: np.ndarray
    env_c: float
    env_beta: float
    frag_mass: float
    alias_prob: np.ndarray
    alias_idx: np.ndarray
    tail_index: int


@lru_cache(maxsize=32)
def _setup(lam: CoalescenceMeasure, mu: SplittingMeasure | None, n_max: int) -> _Setup:
    atoms_x = np.array([x for x, _ in lam.atoms], dtype=float)
    atoms_w = np.array([w for _, w in lam.atoms], dtype=float)
    dens = lam.density
    kind, c, beta, gamma = K.DENS_NONE, 0.0, 0.0, 0.0
    tab_x = tab_y = np.zeros(1)
    env_c, env_beta = 0.0, 0.0
    if dens is not None and dens.mass() > 0:
        if dens.kind == "power_beta":
            kind, c, beta = K.DENS_POWER, dens.c, dens.beta
        elif dens.kind == "log_power":
            kind, c, gamma = K.DENS_LOGPOWER, dens.c, float(dens.gamma)
        elif dens.kind == "custom_table":
            kind = K.DENS_TABLE
            tab_x = np.asarray(dens.xs, dtype=float)
            tab_y = np.asarray(dens.ys, dtype=float)
        else:
            raise ParameterError(f"density kind {dens.kind!r} cannot be simulated")
        env_c, env_beta = dens.envelope
        if env_beta >= 1.0:
            raise ParameterError("density envelope must be integrable near 0")
    if mu is not None and mu.total_mass > 0:
        sampler = build_jump_sampler(mu, n_max)
        prob, alias, mass = sampler.prob, sampler.alias, sampler.total_mass
        tail = sampler.ceiling
    else:
        prob, alias, mass, tail = np.ones(1), np.zeros(1, dtype=np.int64), 0.0, 0
    return _Setup(float(lam.kingman), atoms_x, atoms_w, kind, float(c), float(beta),
                  float(gamma), tab_x, tab_y, float(env_c), float(env_beta), float(mass),
                  np.ascontiguousarray(prob), np.ascontiguousarray(alias, dtype=np.int64),
                  int(tail))


def _kernel_call(rng, s: _Setup, n0, horizon, n_max, floor, floor_mode, return_level, p_stop,
                 max_jumps, record):
    return K.run_path_kernel(rng, int(n0), float(horizon), int(n_max), int(floor),
                             int(floor_mode), int(return_level), float(p_stop), int(max_jumps),
                             s.kingman, s.atoms_x, s.atoms_w, s.dens_kind, s.dens_c,
                             s.dens_beta, s.dens_gamma, s.tab_x, s.tab_y, s.env_c, s.env_beta,
                             s.frag_mass, s.alias_prob, s.alias_idx, s.tail_index,
                             bool(record))


def run_path(cfg: SimConfig, lam: CoalescenceMeasure, mu: SplittingMeasure | None, *,
             rng: np.random.Generator | None = None, replica: int | None = None) -> SimOutcome:
    """Simulate until the ceiling, the floor (if absorbing), sigma_p or the horizon.

    A chain that is absorbed (no events possible) after touching the floor
    reports HitFloor at its floor time; otherwise absorption is censoring.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    s = _setup(lam, mu, int(cfg.n_max))
    p_stop = cfg.p if cfg.mode == "stopped" else 0.0
    res = _kernel_call(rng, s, cfg.initial_n, cfg.horizon, cfg.n_max, cfg.floor,
                       1 if cfg.absorb_at_floor else 2, 0, p_stop, cfg.max_jumps,
                       cfg.record_path)
    (code, t, jumps, n_coal, n_frag, n_rej, mx, mn, n_fin, via_tail, floor_t, _ret_t,
     p_t, p_from, p_to, p_kind, p_k) = res
    floor_time = float(floor_t) if floor_t >= 0 else None
    absorbed = code == K.ABSORBED
    terminal = {K.EXPLODED: "ExplodedProxy", K.HIT_FLOOR: "HitFloor",
                K.SIGMA_P: "SigmaPFired"}.get(code, "Censored")
    time = float(t)
    if absorbed:
        time = cfg.horizon
        if floor_time is not None:
            terminal, time = "HitFloor", floor_time
    path = PathLog(p_t, p_from, p_to, p_kind, p_k) if cfg.record_path else None
    out = SimOutcome(terminal, time, bool(via_tail), floor_time, int(n_coal + n_frag), int(n_coal),
                     int(n_frag), int(n_rej), int(mx), int(mn), int(n_fin), absorbed,
                     code == K.BUDGET, path, replica)
    if code == K.BUDGET:
        raise BudgetExceeded(out)
    return out


def _run_chunk(args):
    cfg, lam, mu, seed_root, indices, tolerate_budget = args
    out = []
    for i in indices:
        try:
            out.append(run_path(cfg, lam, mu, rng=replica_rng(seed_root, i), replica=i))
        except BudgetExceeded as e:
            if not tolerate_budget:
                raise
            out.append(e.outcome)
    return out


def _chunks(indices, workers):
    indices = list(indices)
    size = max(1, math.ceil(len(indices) / (4 * max(workers, 1))))
    return [indices[i:i + size] for i in range(0, len(indices), size)]


def run_replicas(cfg: SimConfig, lam, mu, replicas: int, seed_root: int, *, start: int = 0,
                 workers: int = 1, tolerate_budget: bool = True) -> list[SimOutcome]:
    """Replicas ``start .. start+replicas-1``; results in replica order whatever
    the worker count."""
    chunks = _chunks(range(start, start + replicas), workers)
    jobs = [(cfg, lam, mu, seed_root, c, tolerate_budget) for c in chunks]
    if workers <= 1 or len(jobs) <= 1:
        parts = [_run_chunk(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_run_chunk, jobs))
    return [o for p in parts for o in p]


def outcomes_to_jsonl(outcomes, fh) -> None:
    for o in outcomes:
        fh.write(json.dumps(o.to_dict(), sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# round trip: down to a low level, then back up


@dataclass
class RoundTrip:
    floor_time: float | None
    return_time: float | None
    jump_count: int
    via_tail: bool

    @property
    def completed(self) -> bool:
        return self.return_time is not None


def round_trip(cfg: SimConfig, lam, mu, return_level: int, *, rng=None) -> RoundTrip:
    """First visit to ``<= cfg.floor`` followed by a visit to ``>= return_level``
    before ``cfg.horizon``."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    s = _setup(lam, mu, int(cfg.n_max))
    res = _kernel_call(rng, s, cfg.initial_n, cfg.horizon, cfg.n_max, cfg.floor, 2,
                       return_level, 0.0, cfg.max_jumps, False)
    code, t, jumps = res[0], res[1], res[2]
    floor_t, ret_t, via_tail = res[10], res[11], res[9]
    if code == K.BUDGET:
        raise BudgetExceeded(SimOutcome("Censored", float(t), bool(via_tail), None, int(jumps),
                                        int(res[3]), int(res[4]), int(res[5]), int(res[6]),
                                        int(res[7]), int(res[8]), budget_exhausted=True))
    ret = float(ret_t) if ret_t >= 0 else None
    if ret is None and code == K.EXPLODED and floor_t >= 0:
        ret = float(t)  # the ceiling is above the return level
    return RoundTrip(float(floor_t) if floor_t >= 0 else None, ret, int(res[3] + res[4]),
                     bool(via_tail))


# ---------------------------------------------------------------------------
# ladder of starting points


@dataclass
class LadderReport:
    rungs: list
    hit: list  # MCEstimate of P(hit floor by T) per rung
    hit_time: list  # MCEstimate of the mean hitting time among hits, or None
    exploded: list  # MCEstimate of P(ceiling before floor) per rung
    violations: int  # replicas whose hit indicator increases along the ladder
    evidence: str  # "comes_down", "stays_infinite" or "inconclusive"
    horizon: float
    floor: int
    n_max: int

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "rungs": list(map(int, self.rungs)),
            "hit": [h.to_dict() for h in self.hit],
            "hit_time": [h.to_dict() if h else None for h in self.hit_time],
            "exploded": [e.to_dict() for e in self.exploded],
            "violations": self.violations,
            "evidence": self.evidence,
            "horizon": self.horizon, "floor": self.floor, "n_max": self.n_max,
        }


def _ladder_chunk(args):
    cfg, lam, mu, seed_root, rungs, indices = args
    rows = []
    for i in indices:
        row = []
        for n0 in rungs:
            # common random numbers: the same stream at every rung
            o = run_path(cfg.with_(initial_n=int(n0), absorb_at_floor=True), lam, mu,
                         rng=replica_rng(seed_root, i), replica=i)
            row.append((o.terminal == "HitFloor", o.time, o.exploded))
        rows.append(row)
    return rows


def ladder_from_infinity(cfg: SimConfig, lam, mu, ladder, *, replicas: int = 1000,
                         seed_root: int | None = None, workers: int = 1) -> LadderReport:
    """``P(hit floor by T)`` from increasing starts, with common random numbers."""
    rungs = [int(x) for x in ladder]
    if any(b <= a for a, b in zip(rungs, rungs[1:])):
        raise ParameterError("ladder must be increasing")
    if rungs[0] <= cfg.floor or rungs[-1] > cfg.n_max:
        raise ParameterError("ladder must lie in (floor, n_max]")
    seed_root = cfg.seed if seed_root is None else seed_root
    jobs = [(cfg, lam, mu, seed_root, rungs, c) for c in _chunks(range(replicas), workers)]
    if workers <= 1 or len(jobs) <= 1:
        parts = [_ladder_chunk(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_ladder_chunk, jobs))
    rows = [r for p in parts for r in p]
    hits = np.array([[c[0] for c in r] for r in rows], dtype=bool)
    times = np.array([[c[1] for c in r] for r in rows], dtype=float)
    expl = np.array([[c[2] for c in r] for r in rows], dtype=bool)
    hit_est = [proportion(f"hit_floor[{n0}]", hits[:, j], seed_root) for j, n0 in enumerate(rungs)]
    time_est = [mean_estimate(f"hit_time[{n0}]", times[hits[:, j], j], seed_root)
                if hits[:, j].any() else None for j, n0 in enumerate(rungs)]
    ex_est = [proportion(f"ceiling[{n0}]", expl[:, j], seed_root) for j, n0 in enumerate(rungs)]
    violations = int(np.sum(np.any(hits[:, 1:] & ~hits[:, :-1], axis=1)))
    last = hit_est[-1]
    if len(hit_est) > 1:
        prev = hit_est[-2]
        stable = not last.separated_from(prev)
    else:
        stable = True
    if last.point >= 0.5 and stable:
        evidence = "comes_down"
    elif last.ci_high < 0.5 and (len(hit_est) == 1 or last.point <= hit_est[0].point):
        evidence = "stays_infinite"
    else:
        evidence = "inconclusive"
    return LadderReport(rungs, hit_est, time_est, ex_est, violations, evidence,
                        cfg.horizon, cfg.floor, cfg.n_max)


# ---------------------------------------------------------------------------
# first passages through a band


@dataclass
class EmpiricalExitReport:
    n: int
    n0: int
    m: int
    a: float
    u: float
    delta: float
    below_first: MCEstimate  # P(tau_n^- < tau_m^+)
    late: MCEstimate  # P(tau_n^- > tau_m^+ > u)
    neither: MCEstimate  # neither level reached by the horizon
    slow: MCEstimate | None  # P(tau_m^+ > t(n0))
    bounds: dict
    horizon: float

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items()}
        d["schema_version"] = SCHEMA_VERSION
        return d


def first_passage_stats(lam, mu, a: float, n: int, n0: int, m: int, replicas: int, *,
                        seed_root: int = 0, u: float = 1.0, delta: float | None = None,
                        g: GFamily | None = None, horizon: float = 100.0,
                        workers: int = 1) -> EmpiricalExitReport:
    """Empirical exit probabilities from ``n0`` through the band ``(n, m)``.

    The analytic bounds needing ``g`` are reported only when ``g`` is given.
    ``delta`` defaults to ``1 - log n / log n0``.
    """
    if not n < n0 < m:
        raise ParameterError("need n < n0 < m")
    if delta is None:
        delta = 1.0 - math.log(n) / math.log(n0)
    t_n0 = None
    if g is not None:
        t_n0 = 1.0 / float(g(math.log(n0 ** (1.0 - delta))))
        horizon = max(horizon, 1.01 * t_n0)
    cfg = SimConfig(initial_n=n0, horizon=horizon, n_max=m, floor=n)
    outs = run_replicas(cfg, lam, mu, replicas, seed_root, workers=workers)
    # tau_n^- is the floor time; tau_m^+ the ceiling time (inf if not reached)
    tau_minus = np.array([o.floor_time if o.floor_time is not None else math.inf for o in outs])
    tau_plus = np.array([o.time if o.exploded else math.inf for o in outs])
    below = tau_minus < tau_plus
    late = (tau_plus < tau_minus) & (tau_plus > u)
    neither = np.isinf(tau_minus) & np.isinf(tau_plus)
    bounds = {"below_first": exit_bound_below(n, n0, a)}
    slow = None
    if g is not None:
        bounds["late"] = exit_bound_late(n0, m, a, u, g, n)
        bounds["slow"] = exit_bound_slow(n0, a, delta)
        bounds["t_n0"] = t_n0
        slow = proportion("P(tau_m+ > t(n0))", tau_plus > t_n0, seed_root)
    return EmpiricalExitReport(int(n), int(n0), int(m), float(a), float(u), float(delta),
                               proportion("P(tau_n- < tau_m+)", below, seed_root),
                               proportion("P(tau_n- > tau_m+ > u)", late, seed_root),
                               proportion("P(neither by horizon)", neither, seed_root),
                               slow, bounds, float(horizon))


# ---------------------------------------------------------------------------
# Lyapunov martingale along simulated paths


def _sample_tail(mu: SplittingMeasure, k0: int, u: float) -> int:
    """Largest k with ``mu-bar(k) >= u mu-bar(k0)``: a draw of K given K >= k0."""
    target = u * float(mu.tail(k0))
    lo, hi = int(k0), int(k0)
    while float(mu.tail(hi)) >= target and hi < 1 << 62:
        lo, hi = hi, 2 * hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if float(mu.tail(mid)) >= target:
            lo = mid
        else:
            hi = mid
    return lo


def martingale_profile(lam, mu, a: float, n_low: int, n_high: int, n0: int, times,
                       replicas: int, *, seed_root: int = 0) -> list[MCEstimate]:
    """Estimates of ``E[N_{t^T}**(1-a) exp(int_0^{t^T} G_a(N_s) ds)]`` at each t.

    T is the exit time of ``(n_low, n_high)``.  The expectation is constant
    in t and equal to ``n0**(1-a)``.
    """
    times = np.asarray(sorted(times), dtype=float)
    states = np.arange(n_low, n_high)
    G = np.zeros(n_high + 1)
    for k in states[states >= 2]:
        G[k] = ga_coal(lam, a, int(k)) + (ga_frag(mu, a, int(k)) if mu is not None else 0.0)
    cfg = SimConfig(n0, float(times[-1]), n_max=n_high, floor=n_low, absorb_at_floor=True,
                    record_path=True)
    vals = np.empty((replicas, len(times)))
    for r in range(replicas):
        rng = replica_rng(seed_root, r)
        o = run_path(cfg, lam, mu, rng=rng, replica=r)
        path = o.path
        ev_t = np.concatenate(([0.0], path.t))
        ev_n = np.concatenate(([n0], path.dst)).astype(float)
        if o.via_tail:
            src = path.src[-1]
            ev_n[-1] = src + _sample_tail(mu, n_high, rng.random())
        for j, t in enumerate(times):
            i = int(np.searchsorted(ev_t, t, side="right")) - 1
            # holding intervals before t; no time is spent after exit
            integral = 0.0
            for q in range(i + 1):
                state = int(ev_n[q])
                if state <= n_low or state >= n_high:
                    break
                end = ev_t[q + 1] if q + 1 <= i else t
                integral += G[state] * (end - ev_t[q])
            vals[r, j] = ev_n[i] ** (1.0 - a) * math.exp(integral)
    return [mean_estimate(f"martingale[t={t}]", vals[:, j], seed_root)
            for j, t in enumerate(times)]
