"""Acceptance criteria: one PASS/FAIL line per criterion.

Each test records its line (shown in the terminal summary) before asserting,
so a failing criterion still reports what was measured.
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from efcboundary.classifier import RegularVariationSpec, classify_regular, measures_for
from efcboundary.ga import ga_coal, ga_coal_stopped, ga_frag
from efcboundary.harness import ExperimentConfig, run_experiment, sweep_phase_diagram
from efcboundary.measures import (CoalescenceMeasure, FiniteSplitting, GeometricSplitting,
                                  PowerLawSplitting)
from efcboundary.rates import (big_I, big_I_quad, ell, ell_fubini, i_alpha, j_alpha, lambda_nk,
                               phi, phi_array, phi_sum, psi)
from efcboundary.simulator import (SimConfig, first_passage_stats, replica_rng, round_trip,
                                   run_replicas)

KINGMAN = CoalescenceMeasure.kingman_only(1.0)
UNIFORM = CoalescenceMeasure.uniform()
SINGULAR = CoalescenceMeasure.power(1.0, 0.5)
STABLE = PowerLawSplitting(1.0, 0.5)


def report(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_1_lambda_consistency():
    t0 = time.perf_counter()
    worst = 0.0
    for lam in (KINGMAN, UNIFORM, SINGULAR):
        for n in range(2, 51):
            for k in range(2, n + 1):
                lhs = lambda_nk(lam, n, k)
                rhs = lambda_nk(lam, n + 1, k) + lambda_nk(lam, n + 1, k + 1)
                scale = max(abs(lhs), abs(rhs))
                if scale > 0:
                    worst = max(worst, abs(lhs - rhs) / scale)
    dt = time.perf_counter() - t0
    report(1, worst <= 1e-9 and dt < 10, f"max rel err {worst:.2e} (<= 1e-9), {dt:.1f}s (< 10s)")


def test_criterion_2_rate_identities():
    t0 = time.perf_counter()
    sum_err = max(abs(phi_sum(lam, n) / phi(lam, n) - 1.0)
                  for lam in (UNIFORM, SINGULAR) for n in range(2, 201))
    ns = np.arange(2, 10 ** 4 + 1)
    order_ok, mono_ok = True, True
    for lam in (KINGMAN, UNIFORM, SINGULAR):
        ph = phi_array(lam, ns)
        sample = ns[np.unique(np.geomspace(1, ns.size, 300).astype(int)) - 1]
        ps = np.array([psi(lam, int(n)) for n in sample])
        cap = lam.total_mass() * sample.astype(float) ** 2 / 2
        phs = ph[sample - 2]
        order_ok &= bool(np.all(phs <= ps * (1 + 1e-12)) and np.all(ps <= cap * (1 + 1e-12)))
        r = ph / ns
        mono_ok &= bool(np.all(np.diff(r) >= -1e-12 * r[1:]))
    fubini_ok = all(ell(mu, n) == pytest.approx(ell_fubini(mu, n), rel=1e-12)
                    for mu in (STABLE, GeometricSplitting(1.0, 0.5)) for n in (1, 10, 1000, 10 ** 5))
    fubini_ok &= all(ell(FiniteSplitting(((1, 0.25), (3, 0.5))), n) ==
                     ell_fubini(FiniteSplitting(((1, 0.25), (3, 0.5))), n) for n in range(1, 10))
    ratio = phi(SINGULAR, 10 ** 6) / 10 ** 9 / (math.gamma(0.5) / 0.75)
    dt = time.perf_counter() - t0
    ok = sum_err <= 1e-8 and order_ok and mono_ok and fubini_ok and abs(ratio - 1) <= 0.02
    report(2, ok and dt < 30,
           f"sum/integral {sum_err:.1e}, Phi<=Psi<=cap {order_ok}, Phi/n nondecreasing {mono_ok}, "
           f"Fubini {fubini_ok}, Phi(1e6) ratio {ratio:.4f}, {dt:.1f}s (< 30s)")


def test_criterion_3_I_alpha():
    t0 = time.perf_counter()
    quad_err = max(abs(big_I_quad(a) / big_I(a) - 1) for a in np.round(np.arange(0.1, 1.0, 0.1), 1))
    lim_err = max(abs(i_alpha(1.001, a) / 0.001 / big_I(a) - 1) for a in (0.1, 0.3, 0.5, 0.7, 0.9))
    dt = time.perf_counter() - t0
    report(3, quad_err <= 1e-8 and lim_err <= 0.01 and dt < 5,
           f"quadrature {quad_err:.1e} (<= 1e-8), i_alpha limit {lim_err:.4f} (<= 0.01), "
           f"{dt:.1f}s (< 5s)")


def _bound_violations(rng, points):
    lams = (KINGMAN, UNIFORM, SINGULAR)
    mus = (STABLE, GeometricSplitting(1.0, 0.5), FiniteSplitting(((1, 1.0), (4, 0.5))))
    worst = {"coal_up": 0.0, "frag_up": 0.0, "coal_down": 0.0, "frag_down": 0.0, "frag_asym": 0.0,
             "signs": 0.0}
    for _ in range(points):
        lam, mu = lams[rng.integers(3)], mus[rng.integers(3)]
        n = int(np.exp(rng.uniform(math.log(2), math.log(10 ** 4))))
        p = rng.uniform(0.01, 0.99)
        up, down = rng.uniform(1.01, 3.0), rng.uniform(0.55, 0.99)
        rate = phi(lam, n) / n
        bound = rate * (up - 1) * (1 - p) ** -up
        gcp = ga_coal_stopped(lam, up, p, n)
        worst["coal_up"] = max(worst["coal_up"], (-gcp - bound) / bound)
        low = 2 ** -up * (up - 1) * ell(mu, n)
        gfu = ga_frag(mu, up, n)
        worst["frag_up"] = max(worst["frag_up"], (low - gfu) / low)
        gcd = ga_coal(lam, down, n)
        low = (1 - down) * rate
        worst["coal_down"] = max(worst["coal_down"], (low - gcd) / low)
        head = ell(mu, n) - n * float(mu.tail(n + 1))
        cap = (1 - down) * head + n ** down * mu.power_tail_sum(n + 1, 1 - down)
        gfd = ga_frag(mu, down, n)
        worst["frag_down"] = max(worst["frag_down"], (-gfd - cap) / cap)
        gcu = ga_coal(lam, up, n)
        worst["signs"] = max(worst["signs"], gcu, -gfu, -gcd, gfd)
        # stable-tail bounds for large n with epsilon = 0.05
        big = int(np.exp(rng.uniform(math.log(10 ** 4), math.log(10 ** 6))))
        lo = i_alpha(up, 0.5) * big ** 0.5 / 1.05
        worst["frag_asym"] = max(worst["frag_asym"], (lo - ga_frag(STABLE, up, big)) / lo)
        hi = j_alpha(down, 0.5) * big ** 0.5 / 0.95
        worst["frag_asym"] = max(worst["frag_asym"], (-ga_frag(STABLE, down, big) - hi) / hi)
    return worst


def test_criterion_4_ga_inequalities():
    t0 = time.perf_counter()
    worst = _bound_violations(np.random.default_rng(4), 1000)
    dt = time.perf_counter() - t0
    ok = all(v <= 1e-10 for v in worst.values())
    detail = ", ".join(f"{k} {max(v, 0.0):.1e}" for k, v in worst.items())
    report(4, ok and dt < 60, f"max violations over 1000 points: {detail}; {dt:.1f}s (< 60s)")


def test_criterion_5_doney():
    t0 = time.perf_counter()
    cfg = SimConfig(10, 10.0, n_max=10 ** 6, floor=1)
    stable = run_replicas(cfg, CoalescenceMeasure.zero(), STABLE, 1000, seed_root=5)
    unit = run_replicas(cfg, CoalescenceMeasure.zero(), FiniteSplitting(((1, 1.0),)), 1000,
                        seed_root=5)
    f_stable = np.mean([o.exploded for o in stable])
    f_unit = np.mean([o.exploded for o in unit])
    dt = time.perf_counter() - t0
    report(5, f_stable >= 0.99 and f_unit == 0 and dt < 120,
           f"k^-1.5 fraction {f_stable:.3f} (>= 0.99), delta_1 fraction {f_unit:.3f} (= 0), "
           f"{dt:.0f}s (< 120s)")


@pytest.mark.slow
def test_criterion_6_phase_diagram():
    t0 = time.perf_counter()
    ratios = [0.05, 0.12, 0.20, 0.30]
    res = sweep_phase_diagram([0.5], ratios, replicas=1000, seed_root=6, cdi_horizon=5.0,
                              floor=10, rungs=(10 ** 2, 10 ** 3, 10 ** 4, 10 ** 5), workers=4)
    dt = time.perf_counter() - t0
    cells = res.cells
    labels = [c.label for c in cells]
    ex = [c.explosion for c in cells]
    cdi = [c.cdi.point for c in cells]
    increasing = all(b.point > a.point for a, b in zip(ex, ex[1:]))
    separated = ex[3].separated_from(ex[0]) and ex[3].separated_from(ex[1])
    cdi_ok = all(p >= 0.9 for p in cdi[:3]) and cdi[3] <= 0.1
    ok = (labels == ["Entrance", "Entrance", "Regular", "Exit"] and increasing and separated
          and cdi_ok and res.concordance >= 0.9 and dt < 1200)
    report(6, ok, f"labels {labels}, explosion {[round(e.point, 3) for e in ex]} "
                  f"(increasing {increasing}, separated {separated}), "
                  f"CDI {[round(p, 3) for p in cdi]}, concordance {res.concordance:.2f} (>= 0.9), "
                  f"{dt:.0f}s (< 1200s)")


@pytest.mark.slow
def test_criterion_7_round_trip():
    lam, mu = measures_for(RegularVariationSpec(0.5, 0.5, 0.2, 1.0))
    cfg = SimConfig(10 ** 5, 50.0, n_max=10 ** 6, floor=10 ** 2)
    done = 0
    for i in range(200):
        rt = round_trip(cfg, lam, mu, 10 ** 5, rng=replica_rng(7, i))
        done += rt.completed
    frac = done / 200
    report(7, frac >= 0.9, f"floor-then-ceiling fraction {frac:.3f} (>= 0.9) over R=200")


@pytest.mark.slow
def test_criterion_8_exit_probability():
    lam, mu = measures_for(RegularVariationSpec(0.5, 0.5, 0.2, 1.0))
    rep = first_passage_stats(lam, mu, 1.5, 10 ** 2, 10 ** 3, 10 ** 4, 1000, seed_root=8,
                              horizon=1e6)
    p = rep.below_first.point
    sigma = math.sqrt(p * (1 - p) / 1000)
    bound = (1e2 / 1e3) ** 0.5
    report(8, p <= bound + 3 * sigma,
           f"P(tau_n- < tau_m+) = {p:.3f}, bound + 3 sigma = {bound + 3 * sigma:.3f}, "
           f"undecided {rep.neither.point:.3f}")


@pytest.mark.slow
def test_criterion_9_log_regimes():
    t0 = time.perf_counter()
    out = {}
    for ratio in (3.0, 1.0):
        spec = RegularVariationSpec(1.0, 2.0, ratio, 1.0, family="log")
        lam, mu = measures_for(spec)
        cfg = SimConfig(10, 50.0, n_max=10 ** 6, floor=1)
        outs = run_replicas(cfg, lam, mu, 500, seed_root=9, workers=4)
        out[ratio] = (classify_regular(spec).label, float(np.mean([o.exploded for o in outs])))
    dt = time.perf_counter() - t0
    ok = (out[3.0][0] == "Exit" and out[3.0][1] >= 0.9 and out[1.0][0] == "Entrance"
          and out[1.0][1] <= 0.1 and dt < 900)
    report(9, ok, f"b/d=3: {out[3.0][0]} fraction {out[3.0][1]:.3f} (>= 0.9); "
                  f"b/d=1: {out[1.0][0]} fraction {out[1.0][1]:.3f} (<= 0.1); {dt:.0f}s (< 900s)")


def test_criterion_10_reproducibility(tmp_path):
    lam, mu = measures_for(RegularVariationSpec(0.5, 0.5, 0.2, 1.0))
    sim = SimConfig(100, 2.0, n_max=10 ** 5, floor=10)
    texts = []
    for workers in (1, 2, 4):
        exp = ExperimentConfig(lam, mu, sim, replicas=200, seed_root=10, name="repro")
        d = tmp_path / f"w{workers}"
        run_experiment(exp, out_dir=str(d), workers=workers)
        texts.append(((d / "repro_summary.csv").read_bytes(),
                      (d / "repro_outcomes.jsonl").read_bytes()))
    rerun = run_experiment(ExperimentConfig(lam, mu, sim, replicas=200, seed_root=10,
                                            name="repro")).summary_csv().encode()
    ok = all(t == texts[0] for t in texts) and rerun == texts[0][0]
    report(10, ok, "summary CSV and outcome JSONL byte-identical for workers 1, 2, 4 and rerun")
