import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from efcboundary.classifier import (NO, UNKNOWN, YES, BoundaryVerdict, EllModel,
                                    RegularVariationSpec, check_condition_H, check_doney,
                                    check_schweinsberg, classify_regular, classify_sufficient,
                                    derive_label, measures_for, poly_thresholds)
from efcboundary.measures import (CoalescenceMeasure, FiniteSplitting, GeometricSplitting,
                                  LogPowerDensity, LogSplitting, ParameterError,
                                  PowerLawSplitting)

AXES = (YES, NO, UNKNOWN)


class TestLabels:
    @pytest.mark.parametrize("e,c,label", [
        (YES, NO, "Exit"), (NO, YES, "Entrance"), (YES, YES, "Regular"),
        (NO, NO, "NeitherAccessibleNorLeavable"), (UNKNOWN, YES, "Unknown"),
        (YES, UNKNOWN, "Unknown"),
    ])
    def test_derive_label(self, e, c, label):
        assert derive_label(e, c) == label

    @given(e=st.sampled_from(AXES), c=st.sampled_from(AXES))
    def test_label_invariant(self, e, c):
        v = BoundaryVerdict(e, c)
        assert (v.label == "Exit") == (e == YES and c == NO)
        assert (v.label == "Entrance") == (e == NO and c == YES)
        assert (v.label == "Regular") == (e == YES and c == YES)

    def test_critical_label(self):
        assert BoundaryVerdict(critical=True).label == "Critical"


class TestSchweinsberg:
    def test_kingman(self):
        assert check_schweinsberg(CoalescenceMeasure.kingman_only(1.0)).result == "Converges"

    def test_zero(self):
        assert check_schweinsberg(CoalescenceMeasure.zero()).result == "Diverges"

    def test_singular_density(self):
        assert check_schweinsberg(CoalescenceMeasure.power(1.0, 0.5)).result == "Converges"

    def test_uniform_diverges(self):
        # Bolthausen-Sznitman: Phi(n) ~ n log n
        assert check_schweinsberg(CoalescenceMeasure.uniform()).result == "Diverges"

    @pytest.mark.parametrize("gamma", [0.0, 0.2])
    def test_slow_log_not_certified_convergent(self, gamma):
        # Phi ~ n (log n)^(1+gamma): the series diverges for gamma = 0 and
        # converges too slowly to certify for gamma = 0.2
        lam = CoalescenceMeasure(density=LogPowerDensity(1.0, gamma))
        assert check_schweinsberg(lam).result != "Converges"

    def test_log_squared_converges(self):
        lam = CoalescenceMeasure(density=LogPowerDensity(3.0, 2.0))  # Phi ~ n (log n)^3
        assert check_schweinsberg(lam).result == "Converges"


class TestDoney:
    def test_stable_explodes(self):
        assert check_doney(PowerLawSplitting(1.0, 0.5)).result == "Explodes"

    def test_unit_jumps(self):
        assert check_doney(FiniteSplitting(((1, 1.0),))).result == "DoesNotExplode"

    def test_geometric(self):
        mu = GeometricSplitting(1.0, 0.5)
        assert check_doney(mu).result == "DoesNotExplode"
        # oracle: ell is bounded, so partial sums of 1/(n ell(n)) grow like log n
        n = np.arange(1, 10 ** 5 + 1)
        ell = np.cumsum(mu.tail(n))
        partial = np.cumsum(1.0 / (n * ell))
        assert partial[-1] - partial[999] > 0.9 * math.log(100) / ell[-1]


class TestConditionH:
    def test_stable_holds(self):
        assert check_condition_H(PowerLawSplitting(1.0, 0.5)).result == "Holds"

    def test_polylog_model_holds(self):
        assert check_condition_H(EllModel(1.0, r=1.5, q=1.0)).result == "Holds"

    def test_iterated_log_model(self):
        assert check_condition_H(EllModel(1.0, r=1.0, q=2.0)).result == "Holds"

    def test_constant_fails(self):
        assert check_condition_H(EllModel(1.0)).result == "Fails"
        assert check_condition_H(FiniteSplitting(((1, 1.0),))).result == "Fails"


class TestRegular:
    @pytest.mark.parametrize("ratio,label", [(0.05, "Entrance"), (0.12, "Entrance"),
                                             (0.2, "Regular"), (0.3, "Exit")])
    def test_figure_line(self, ratio, label):
        assert classify_regular(RegularVariationSpec(0.5, 0.5, ratio, 1.0)).label == label

    def test_thresholds(self):
        low, high = poly_thresholds(0.5)
        assert high == pytest.approx(0.25)
        assert low == pytest.approx(1 / (2 * math.pi))

    @pytest.mark.parametrize("alpha,beta,label", [(0.3, 0.5, "Exit"), (0.7, 0.5, "Entrance")])
    def test_off_line(self, alpha, beta, label):
        assert classify_regular(RegularVariationSpec(alpha, beta, 1.0, 1.0)).label == label

    def test_log_exit_edge(self):
        v = classify_regular(RegularVariationSpec(1.0, 2.0, 3.0, 1.0, family="log"))
        assert v.label == "Exit"

    def test_log_entrance_edge(self):
        v = classify_regular(RegularVariationSpec(1.0, 2.0, 1.0, 1.0, family="log"))
        assert v.label == "Entrance"

    def test_log_critical(self):
        v = classify_regular(RegularVariationSpec(1.0, 2.0, 2.0, 1.0, family="log"))
        assert v.label == "Critical"

    def test_poly_critical_lines(self):
        low, high = poly_thresholds(0.4)
        assert classify_regular(RegularVariationSpec(0.4, 0.6, high, 1.0)).label == "Critical"
        assert classify_regular(RegularVariationSpec(0.4, 0.6, low, 1.0)).label == "Critical"
        special = RegularVariationSpec(0.4, 0.6, low, 1.0, exact_critical_form=True)
        assert classify_regular(special).label == "Entrance"

    def test_mixed_unknown(self):
        v = classify_regular(RegularVariationSpec(0.5, 0.5, 0.2, 1.0, frag_family="log"))
        assert v.label == "Unknown" and v.notes

    def test_fired_trail(self):
        v = classify_regular(RegularVariationSpec(0.5, 0.5, 0.2, 1.0))
        assert v.fired[0]["test"] == "stable_fragmentation_phase"
        assert v.fired[0]["sigma"] > v.fired[0]["theta"]

    @pytest.mark.parametrize("alpha", np.round(np.arange(0.05, 1.0, 0.05), 2))
    def test_sigma_exceeds_theta(self, alpha):
        ratio = 0.3
        sigma = ratio * math.pi / (alpha * math.sin(math.pi * alpha))
        theta = ratio / (alpha * (1 - alpha))
        assert sigma > theta

    @pytest.mark.parametrize("alpha", [0.2, 0.5, 0.8])
    def test_monotone_on_line(self, alpha):
        order = {"Entrance": 0, "Regular": 1, "Exit": 2}
        low, high = poly_thresholds(alpha)
        grid = np.concatenate([np.geomspace(1e-3, 10, 60), [math.sqrt(low * high)]])
        ratios = [r for r in np.sort(grid)
                  if not (math.isclose(r, low, rel_tol=1e-9) or math.isclose(r, high, rel_tol=1e-9))]
        ranks = [order[classify_regular(RegularVariationSpec(alpha, 1 - alpha, r, 1.0)).label]
                 for r in ratios]
        assert ranks == sorted(ranks)
        assert set(ranks) == {0, 1, 2}
        for r in (low, high):
            assert classify_regular(RegularVariationSpec(alpha, 1 - alpha, r, 1.0)).label == \
                "Critical"

    @pytest.mark.parametrize("kw", [dict(alpha=0.5, beta=1.5, b=1, d=1),
                                    dict(alpha=0.5, beta=0.5, b=-1, d=1),
                                    dict(alpha=0.5, beta=0.5, b=1, d=0),
                                    dict(alpha=0.5, beta=0.5, b=1, d=1, family="exp")])
    def test_bad_specs(self, kw):
        with pytest.raises(ParameterError):
            RegularVariationSpec(**kw)

    def test_parse(self):
        s = RegularVariationSpec.parse("alpha=1,beta=2,b=3,d=1,family=log")
        assert (s.alpha, s.beta, s.b, s.d, s.family) == (1.0, 2.0, 3.0, 1.0, "log")


class TestMeasuresFor:
    def test_poly_phi_constant(self):
        from efcboundary.rates import phi

        lam, mu = measures_for(RegularVariationSpec(0.5, 0.5, 0.2, 2.0))
        assert phi(lam, 10 ** 7) / (2.0 * 10 ** 10.5) == pytest.approx(1.0, abs=0.01)
        assert mu.pmf(10 ** 6) * 10 ** 9 == pytest.approx(0.2, rel=1e-12)

    def test_log_phi_constant(self):
        from efcboundary.rates import phi

        lam, mu = measures_for(RegularVariationSpec(1.0, 2.0, 3.0, 1.0, family="log"))
        n = 10 ** 8
        assert phi(lam, n) / (n * math.log(n) ** 2) == pytest.approx(1.0, abs=0.15)
        assert isinstance(mu, LogSplitting)


class TestSufficient:
    def test_log_fragmentation_exit(self):
        # Phi ~ n log n and ell(n) ~ (log n)^2 / 2 outgrows log n
        lam = CoalescenceMeasure.uniform()
        v = classify_sufficient(lam, LogSplitting(1.0, 1.0))
        assert v.label == "Exit"
        assert any(f["test"] == "exit_sufficient" for f in v.fired)

    def test_log_coalescence_entrance(self):
        # Phi ~ n (log n)^3 and mu-bar(n) ~ 1/n: sum mu-bar(n)/(log n)^3 < inf
        lam = CoalescenceMeasure(density=LogPowerDensity(3.0, 2.0))
        v = classify_sufficient(lam, PowerLawSplitting(1.0, 1.0))
        assert v.label == "Entrance"

    def test_kingman_geometric_entrance(self):
        v = classify_sufficient(CoalescenceMeasure.kingman_only(1.0), GeometricSplitting(1.0, 0.5))
        assert v.label == "Entrance"

    def test_pure_fragmentation(self):
        v = classify_sufficient(CoalescenceMeasure.zero(), PowerLawSplitting(1.0, 0.5))
        assert v.label == "Exit"


def _random_specs(count, seed):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        if i % 4:
            out.append(RegularVariationSpec(rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.95),
                                            rng.uniform(0.02, 2.0), 1.0))
        else:
            out.append(RegularVariationSpec(rng.uniform(0.3, 2.0), rng.uniform(1.0, 3.5),
                                            rng.uniform(0.2, 5.0), 1.0, family="log"))
    return out


@pytest.mark.slow
def test_sufficient_never_contradicts_regular():
    fired = 0
    for spec in _random_specs(200, 2026):
        exact = classify_regular(spec)
        lam, mu = measures_for(spec)
        suff = classify_sufficient(lam, mu)
        for axis in ("explodes", "comes_down"):
            a, b = getattr(exact, axis), getattr(suff, axis)
            if b != UNKNOWN:
                fired += 1
                assert a == UNKNOWN or a == b, (spec, axis, exact.label, suff.fired)
    assert fired > 150
