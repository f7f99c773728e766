import numpy as np
import pytest

from mqrank import (WeightedChiSquareMixture, chisq_noncentral_upper,
                    chisq_upper, imhof_upper, mixture_quantile)

# Monte Carlo oracle values, frozen from 1e7-draw runs (helpers/oracle
# draws with numpy Philox-family generators, seed 20260809); each entry
# is (estimate, standard error).
MC_NCX2_K2_Z8_AT_5991 = (0.7175106, 0.000142)
MC_MIX_25_125_AT_05 = (0.2574601, 0.000138)
MC_MIX_25_125_Q95 = (1.157131, 0.00057)
MC_NCMIX_3Z3_15Z1_AT_2 = (0.2705645, 0.000141)


def test_chisq_upper_canonical_quantiles():
    assert chisq_upper(3.841, 1) == pytest.approx(0.05, abs=1e-3)
    assert chisq_upper(5.991, 2) == pytest.approx(0.05, abs=1e-3)
    assert chisq_upper(0.0, 3) == 1.0


def test_chisq_noncentral_zero_equals_central():
    for x in (0.5, 3.0, 10.0):
        for k in (1, 2, 5):
            assert chisq_noncentral_upper(x, k, 0.0) == chisq_upper(x, k)


def test_chisq_noncentral_monotone_in_zeta():
    grid = [0.0, 0.5, 2.0, 8.0, 20.0]
    for x in (1.0, 5.991, 12.0):
        vals = [chisq_noncentral_upper(x, 2, z) for z in grid]
        assert all(b > a for a, b in zip(vals, vals[1:]))


def test_chisq_noncentral_vs_mc_oracle():
    est, se = MC_NCX2_K2_Z8_AT_5991
    assert abs(chisq_noncentral_upper(5.991, 2, 8.0) - est) <= 3 * se


def test_imhof_equal_weights_reduces_to_chisq():
    for k in (1, 2, 5):
        for w in (1.0, 0.5, 2.0):
            mix = WeightedChiSquareMixture(weights=(w,) * k)
            for x in (0.2, 1.0, 3.0, 5.991, 12.0):
                assert imhof_upper(mix, x) == pytest.approx(
                    chisq_upper(x / w, k), abs=1e-6)


def test_imhof_single_scaled_component():
    mix = WeightedChiSquareMixture(weights=(2.0,))
    assert imhof_upper(mix, 7.682) == pytest.approx(chisq_upper(3.841, 1), abs=1e-6)


def test_imhof_vs_mc_oracle_central():
    est, se = MC_MIX_25_125_AT_05
    mix = WeightedChiSquareMixture(weights=(0.25, 0.125))
    assert abs(imhof_upper(mix, 0.5) - est) <= 3 * se


def test_imhof_vs_mc_oracle_noncentral():
    est, se = MC_NCMIX_3Z3_15Z1_AT_2
    mix = WeightedChiSquareMixture(weights=(0.3, 0.15), noncentralities=(3.0, 1.0))
    assert abs(imhof_upper(mix, 2.0) - est) <= 3 * se


def test_imhof_monotone_and_limits():
    mix = WeightedChiSquareMixture(weights=(0.7, 0.2, 0.05))
    xs = np.linspace(0.0, 25.0, 40)
    ps = [imhof_upper(mix, x) for x in xs]
    assert ps[0] == 1.0
    assert all(b <= a + 1e-9 for a, b in zip(ps, ps[1:]))
    assert ps[-1] < 1e-6
    assert imhof_upper(mix, 1e-12) >= 1.0 - 1e-6


def test_imhof_noncentral_reduction_to_ncx2():
    mix = WeightedChiSquareMixture(weights=(1.0, 1.0), noncentralities=(3.0, 5.0))
    for x in (2.0, 5.991, 15.0):
        assert imhof_upper(mix, x) == pytest.approx(
            chisq_noncentral_upper(x, 2, 8.0), abs=1e-6)


def test_mixture_quantile_chisq_cases():
    mix = WeightedChiSquareMixture(weights=(1.0, 1.0))
    assert mixture_quantile(mix, 0.05) == pytest.approx(5.991, abs=1e-3)
    single = WeightedChiSquareMixture(weights=(2.0,))
    assert mixture_quantile(single, 0.05) == pytest.approx(7.682, abs=1e-3)


def test_mixture_quantile_vs_mc_percentile():
    est, se = MC_MIX_25_125_Q95
    mix = WeightedChiSquareMixture(weights=(0.25, 0.125))
    assert abs(mixture_quantile(mix, 0.05) - est) <= 3 * se


def test_mixture_quantile_roundtrip():
    mix = WeightedChiSquareMixture(weights=(0.9, 0.3, 0.1),
                                   noncentralities=(0.0, 1.0, 2.0))
    for x in (0.8, 2.5, 6.0):
        alpha = imhof_upper(mix, x)
        assert mixture_quantile(mix, alpha) == pytest.approx(x, abs=1e-4)


def test_mixture_validation():
    with pytest.raises(ValueError):
        WeightedChiSquareMixture(weights=(1.0, -0.5))
    with pytest.raises(ValueError):
        WeightedChiSquareMixture(weights=(1.0,), noncentralities=(-1.0,))
    with pytest.raises(ValueError):
        WeightedChiSquareMixture(weights=(1.0, 2.0), noncentralities=(0.0,))
    with pytest.raises(ValueError):
        mixture_quantile(WeightedChiSquareMixture(weights=(1.0,)), 1.5)


def test_mixture_moments():
    mix = WeightedChiSquareMixture(weights=(2.0, 0.5), noncentralities=(1.0, 3.0))
    assert mix.mean() == pytest.approx(2 * 2 + 0.5 * 4)
    assert mix.variance() == pytest.approx(4 * (2 + 4) + 0.25 * (2 + 12))
