import pytest

from survnie import bonferroni_one_step, oracle_one_step
from survnie.errors import IndexError_

from conftest import SERIAL, toy_censored_dataset


class TestStructure:
    def test_single_mediator_bonferroni_equals_oracle(self):
        ds = toy_censored_dataset(n=60, p=1, seed=5, censor_rate=0.15)
        bonf = bonferroni_one_step(ds, 0.1, SERIAL)
        orc = oracle_one_step(ds, 0, 0.1, SERIAL)
        assert bonf.k_used == orc.k_used == 0
        assert bonf.estimate == orc.estimate
        assert bonf.se == orc.se
        assert bonf.p_value == orc.p_value
        assert (bonf.ci_low, bonf.ci_high) == (orc.ci_low, orc.ci_high)

    def test_correction_ordering(self):
        ds = toy_censored_dataset(n=60, p=4, seed=8, censor_rate=0.15)
        bonf = bonferroni_one_step(ds, 0.1, SERIAL, correct=True)
        naive = bonferroni_one_step(ds, 0.1, SERIAL, correct=False)
        assert bonf.k_used == naive.k_used
        assert bonf.estimate == naive.estimate
        assert bonf.p_value >= naive.p_value
        assert bonf.p_value == pytest.approx(min(1.0, ds.p * naive.p_value), abs=1e-12)
        if naive.p_value >= 1.0 / ds.p:
            assert bonf.p_value == 1.0
        # the corrected interval is wider
        assert bonf.ci_high - bonf.ci_low > naive.ci_high - naive.ci_low
        assert bonf.alpha_effective == pytest.approx(0.1 / ds.p)

    def test_estimate_is_sign_corrected(self):
        ds = toy_censored_dataset(n=80, p=3, seed=4, censor_rate=0.1)
        res = bonferroni_one_step(ds, 0.1, SERIAL)
        assert res.ci_low <= res.estimate <= res.ci_high

    def test_oracle_index_validation(self):
        ds = toy_censored_dataset(n=40, p=5)
        with pytest.raises(IndexError_):
            oracle_one_step(ds, 5, 0.1, SERIAL)
        with pytest.raises(IndexError_):
            oracle_one_step(ds, -1, 0.1, SERIAL)

    def test_alpha_validated(self):
        ds = toy_censored_dataset(n=40, p=2)
        from survnie.errors import ValidationError
        with pytest.raises(ValidationError):
            oracle_one_step(ds, 0, alpha=1.2, config=SERIAL)

    def test_standardization_of_statistic(self):
        ds = toy_censored_dataset(n=60, p=2, seed=6, censor_rate=0.1)
        res = oracle_one_step(ds, 0, 0.1, SERIAL)
        z = abs(res.estimate) / res.se
        from scipy.special import ndtr
        assert res.p_value == pytest.approx(2.0 * ndtr(-z), abs=1e-12)
        assert res.n == ds.n
