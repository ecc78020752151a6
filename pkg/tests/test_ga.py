import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from efcboundary.classifier import RegularVariationSpec, measures_for
from efcboundary.ga import (GeneralKernel, efc_kernel, exit_bound_below, explosion_criterion,
                            ga_coal, ga_coal_stopped, ga_frag, ga_general, ga_profile_efc,
                            drift_gaining, h_a_product, nonexplosion_criterion,
                            series_converges)
from efcboundary.measures import (CoalescenceMeasure, FiniteSplitting, GeometricSplitting,
                                  ParameterError, PowerLawSplitting)
from efcboundary.rates import ell, i_alpha, j_alpha, phi

# 30-digit product evaluated with mpmath for a=2, delta=0.3, n0=1e6
H_PRODUCT_ORACLE = 0.936501234280497248961370710423

KINGMAN = CoalescenceMeasure.kingman_only(1.0)
SINGULAR = CoalescenceMeasure.power(1.0, 0.5)
STABLE = PowerLawSplitting(1.0, 0.5)


def frag_upper_bound(mu, a, n):
    """(1-a) sum_{k<=n} k mu(k) + n^a sum_{k>n} k^(1-a) mu(k), for a < 1."""
    head = ell(mu, n) - n * float(mu.tail(n + 1))
    return (1 - a) * head + n ** a * mu.power_tail_sum(n + 1, 1 - a)


class TestGaFrag:
    def test_point_mass(self):
        assert ga_frag(FiniteSplitting(((1, 1.0),)), 2.0, 1) == pytest.approx(0.5, rel=1e-15)

    def test_stable_asymptotic(self):
        val = ga_frag(STABLE, 1.5, 10 ** 6) / 10 ** 3
        assert val == pytest.approx(i_alpha(1.5, 0.5), rel=0.03)

    @pytest.mark.parametrize("a", [1.1, 1.5, 2.0])
    @pytest.mark.parametrize("n", [10, 100, 1000, 10 ** 4, 10 ** 5])
    def test_lower_bound_by_ell(self, a, n):
        assert ga_frag(STABLE, a, n) >= 2 ** -a * (a - 1) * ell(STABLE, n)

    @pytest.mark.parametrize("a", [0.6, 0.8, 0.95])
    def test_upper_bound_a_below_one(self, a):
        for n in (1, 10, 1000, 10 ** 5):
            assert -ga_frag(STABLE, a, n) <= frag_upper_bound(STABLE, a, n) * (1 + 1e-12)

    @pytest.mark.parametrize("a", [1.2, 1.5, 3.0])
    def test_stable_lower_bound_ratio(self, a):
        # for n large the ratio to i_alpha(a) b n^(1-alpha) tends to 1
        r = [ga_frag(STABLE, a, n) / (i_alpha(a, 0.5) * n ** 0.5) for n in (10 ** 4, 10 ** 6)]
        assert abs(r[1] - 1) < abs(r[0] - 1) + 1e-12
        assert r[1] == pytest.approx(1.0, rel=0.03)

    @pytest.mark.parametrize("a", [0.6, 0.8])
    def test_stable_upper_bound_ratio(self, a):
        r = -ga_frag(STABLE, a, 10 ** 6) / (j_alpha(a, 0.5) * 10 ** 3)
        assert r == pytest.approx(1.0, rel=0.03)

    def test_heavy_tail_rejected(self):
        with pytest.raises(ParameterError):
            ga_frag(STABLE, 0.3, 10)


class TestGaCoal:
    def test_kingman_single_term(self):
        assert ga_coal(KINGMAN, 2.0, 2) == pytest.approx(-1.0, rel=1e-15)

    @settings(max_examples=60, deadline=None)
    @given(a=st.floats(1.01, 3.0), p=st.floats(0.01, 0.99), n=st.integers(2, 3000))
    def test_stopped_upper_bound(self, a, p, n):
        bound = phi(SINGULAR, n) / n * (a - 1) * (1 - p) ** -a
        assert -ga_coal_stopped(SINGULAR, a, p, n) <= bound * (1 + 1e-10)

    @settings(max_examples=60, deadline=None)
    @given(a=st.floats(0.05, 0.99), n=st.integers(2, 3000))
    def test_lower_bound_a_below_one(self, a, n):
        assert ga_coal(SINGULAR, a, n) >= (1 - a) * phi(SINGULAR, n) / n * (1 - 1e-10)

    def test_stopped_drops_large_mergers(self):
        # p -> 1 keeps every merger except the full one
        n = 50
        assert abs(ga_coal_stopped(SINGULAR, 1.5, 0.999, n)) <= abs(ga_coal(SINGULAR, 1.5, n))


class TestSigns:
    @pytest.mark.parametrize("lam", [KINGMAN, SINGULAR, CoalescenceMeasure.uniform()])
    @pytest.mark.parametrize("a", [0.6, 0.9, 1.1, 2.0])
    def test_sign_structure(self, lam, a):
        for n in (2, 10, 300, 5000):
            gc, gf = ga_coal(lam, a, n), ga_frag(STABLE, a, n)
            if a > 1:
                assert gf >= 0 >= gc
            else:
                assert gc >= 0 >= gf

    def test_profile_invariants(self):
        prof = ga_profile_efc(SINGULAR, STABLE, 1.5, [4, 16, 256, 4096])
        assert np.all(prof.g_plus >= 0) and np.all(prof.g_minus <= 0)
        np.testing.assert_allclose(prof.g_total, prof.g_plus + prof.g_minus, rtol=1e-14)


class TestGeneral:
    def test_efc_kernel_reproduction(self):
        grid = [3, 10, 100, 1000]
        for a in (0.7, 1.5):
            prof = ga_general(efc_kernel(SINGULAR, STABLE), a, grid)
            direct = [ga_coal(SINGULAR, a, n) + ga_frag(STABLE, a, n) for n in grid]
            np.testing.assert_allclose(prof.g_total, direct, rtol=1e-9)

    def test_pure_death(self):
        kern = GeneralKernel(up_rates=lambda n, k: np.zeros_like(k, dtype=float),
                             down_rates=lambda n, k: np.where(k == 1, float(n), 0.0),
                             up_cutoff=lambda n: 1)
        grid = np.array([2, 5, 50, 500])
        prof = ga_general(kern, 2.0, grid)
        np.testing.assert_allclose(prof.g_total, -grid / (grid - 1.0), rtol=1e-12)

    def test_pure_birth(self):
        K = 1 << 16

        def tail_hint(n, a):
            # jumps beyond K contribute n mu(k) (1 - (1+k/n)^(1-a)), with the
            # bracket close to its value at k = K
            return n * float(STABLE.tail(K + 1)) * -math.expm1((1 - a) * math.log1p(K / n))

        kern = GeneralKernel(up_rates=lambda n, k: n * STABLE.pmf(k),
                             down_rates=lambda n, k: np.zeros_like(k, dtype=float),
                             up_cutoff=lambda n: K, up_tail_hint=tail_hint)
        grid = [2, 10, 100]
        prof = ga_general(kern, 1.5, grid)
        want = np.array([ga_frag(STABLE, 1.5, n) for n in grid])
        np.testing.assert_allclose(prof.g_plus, want, rtol=1e-3)
        assert np.all(prof.g_minus == 0)


class TestCriteria:
    def test_pure_fragmentation_explodes(self):
        v = explosion_criterion(efc_kernel(CoalescenceMeasure.zero(), STABLE))
        assert v.result == "Explodes"

    def test_kingman_unit_split_inconclusive(self):
        kern = efc_kernel(KINGMAN, FiniteSplitting(((1, 1.0),)))
        assert explosion_criterion(kern).result == "Inconclusive"
        assert nonexplosion_criterion((KINGMAN, FiniteSplitting(((1, 1.0),)))).result == \
            "NonExplosive"

    def test_regular_regime_explodes(self):
        lam, mu = measures_for(RegularVariationSpec(0.5, 0.5, 0.2, 1.0))
        v = explosion_criterion(efc_kernel(lam, mu))
        assert v.result == "Explodes"
        assert 1.0 < v.certificate["a"] < 1.5

    def test_kingman_geometric_series_path(self):
        v = nonexplosion_criterion((KINGMAN, GeometricSplitting(1.0, 0.5)))
        assert v.result == "NonExplosive"
        assert v.certificate["path"] == "series"

    def test_subcritical_stable_lyapunov_path(self):
        lam, mu = measures_for(RegularVariationSpec(0.5, 0.5, 0.1, 1.0))
        v = nonexplosion_criterion((lam, mu))
        assert v.result == "NonExplosive"
        assert v.certificate["path"] == "lyapunov_ratio"

    @pytest.mark.parametrize("spec", [
        # both explode asymptotically while coalescence still dominates at n = 4e6
        RegularVariationSpec(1.8245620948483918, 2.45830011730869, 0.3930474603420834, 1.0,
                             family="log"),
        RegularVariationSpec(0.5158664594673854, 0.46271297217070495, 0.10042277250803557, 1.0),
    ])
    def test_slowly_gaining_drift_not_certified(self, spec):
        lam, mu = measures_for(spec)
        assert drift_gaining(lam, mu, 2 ** np.arange(12, 23))
        v = nonexplosion_criterion((lam, mu))
        assert v.result == "Inconclusive"

    @pytest.mark.parametrize("spec", [
        RegularVariationSpec(1.0, 2.5, 0.4, 1.0, family="log"),
        RegularVariationSpec(0.5, 0.7, 0.3, 1.0),
        RegularVariationSpec(0.5, 0.5, 0.1, 1.0),
    ])
    def test_drift_not_gaining_when_coalescence_wins(self, spec):
        lam, mu = measures_for(spec)
        assert not drift_gaining(lam, mu, 2 ** np.arange(12, 23))

    def test_drift_without_fragmentation(self):
        assert not drift_gaining(KINGMAN, None, 2 ** np.arange(12, 23))

    def test_pure_fragmentation_not_certified_nonexplosive(self):
        assert nonexplosion_criterion((CoalescenceMeasure.zero(), STABLE)).result == \
            "Inconclusive"

    def test_verdicts_carry_grid_and_margin(self):
        v = explosion_criterion(efc_kernel(CoalescenceMeasure.zero(), STABLE))
        assert "grid" in v.certificate and "margin" in v.certificate


class TestSeries:
    grid = 2.0 ** np.arange(4, 23)

    def test_convergent_power(self):
        ok, bound = series_converges(self.grid ** -1.5, self.grid)
        assert ok and bound > 0

    @pytest.mark.parametrize("terms", [
        lambda n: 1.0 / n,
        lambda n: 1.0 / (n * np.log(n)),
        lambda n: 1.0 / (n * np.log(n) * np.log(np.log(n))),
    ])
    def test_divergent_not_certified(self, terms):
        assert not series_converges(terms(self.grid), self.grid)[0]

    def test_log_power_convergent(self):
        ok, _ = series_converges(1.0 / (self.grid * np.log(self.grid) ** 2), self.grid)
        assert ok


class TestHProduct:
    def test_oracle(self):
        v = h_a_product(2.0, 0.3, 1e6)
        assert 0 < v < 1
        assert v == pytest.approx(H_PRODUCT_ORACLE, rel=1e-12)

    @pytest.mark.parametrize("a,delta", [(1.5, 0.2), (2.0, 0.3), (1.2, 0.5)])
    def test_increases_to_one(self, a, delta):
        vals = [h_a_product(a, delta, 10.0 ** e) for e in range(2, 9)
                if (2 ** (a - 1) + 1) * 10.0 ** (-e * delta * (a - 1)) < 1]
        assert len(vals) >= 2
        assert all(y > x for x, y in zip(vals, vals[1:]))
        assert h_a_product(a, delta, 1e200) == pytest.approx(1.0, abs=1e-6)

    def test_factors_increase(self):
        a, delta, n0 = 2.0, 0.3, 1e6
        f = [1 - (2 ** (a - 1) + 1) * (n0 ** (-delta * (a - 1))) ** ((1 + delta) ** k)
             for k in range(10)]
        assert all(y > x for x, y in zip(f, f[1:]))

    def test_domain(self):
        with pytest.raises(ParameterError):
            h_a_product(2.0, 0.4, 1e6)
        with pytest.raises(ParameterError):
            h_a_product(2.0, 0.3, 10.0)

    def test_exit_bound(self):
        assert exit_bound_below(100, 1000, 1.5) == pytest.approx(10 ** -0.5)
