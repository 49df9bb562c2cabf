import numpy as np
import pytest
from pydantic import ValidationError
from scipy.stats import gamma, nbinom

from linkmse.analysis.diagnostics import batch_means_se
from linkmse.analysis.histories import ContingencyTable
from linkmse.analysis.mse_lcmcr import LcmcrConfig, run_lcmcr, sample_lcmcr
from linkmse.core.errors import EstimationError


def two_list_table():
    return ContingencyTable(2, {0b11: 20, 0b10: 30, 0b01: 30})


class TestLcmcrConfig:
    """Test sampler settings"""

    def test_saved_draws(self):
        """Test the kept iterations"""
        config = LcmcrConfig(iterations=100, burnin=10, thin=10)
        assert config.n_saved == 9
        assert [t for t in range(1, 101) if config.is_saved(t)] == list(range(20, 101, 10))

    def test_invalid_strata(self):
        """Test zero latent classes"""
        with pytest.raises(ValidationError, match="strata must be at least 1"):
            LcmcrConfig(strata=0)

    def test_nothing_saved(self):
        """Test a burn-in covering the whole chain"""
        with pytest.raises(ValidationError, match="no draws would be saved"):
            LcmcrConfig(iterations=10, burnin=10, thin=1)


class TestSampler:
    """Test the latent-class Gibbs sampler"""

    def test_deterministic_under_seed(self):
        """Test equal seeds give identical draws"""
        config = LcmcrConfig(strata=3, iterations=200, burnin=50, thin=5)
        first = run_lcmcr(two_list_table(), config, seed=7)
        second = run_lcmcr(two_list_table(), config, seed=7)
        assert np.array_equal(first.draws, second.draws)
        assert len(first.draws) == 30

    def test_draws_cover_observed(self):
        """Test every draw of N is at least n_obs"""
        chain = sample_lcmcr(two_list_table(), LcmcrConfig(strata=4, iterations=300, burnin=0, thin=3), seed=1)
        assert chain.n_draws.min() >= 80
        assert chain.pi.shape == (100, 4)
        assert np.allclose(chain.pi.sum(axis=1), 1.0)
        assert np.all(chain.a_sb > 0)

    def test_default_cap_recorded(self):
        """Test the size cap is reported when no n_max is given"""
        post = run_lcmcr(two_list_table(), LcmcrConfig(strata=2, iterations=50, burnin=0, thin=1), seed=3)
        # 10 * 80 observed / lowest list rate 0.625
        assert post.notes["cap"] == pytest.approx(1280, abs=1)
        assert post.notes["strata"] == 2
        assert "cap_hits" in post.notes

    def test_explicit_n_max(self):
        """Test a user truncation replaces the cap and bounds the draws"""
        config = LcmcrConfig(strata=2, iterations=100, burnin=0, thin=1, n_max=90)
        post = run_lcmcr(two_list_table(), config, seed=3)
        assert "cap" not in post.notes
        assert post.draws.max() <= 90

    def test_n_max_below_observed(self):
        """Test a truncation under the observed count"""
        config = LcmcrConfig(strata=2, iterations=10, burnin=0, thin=1, n_max=50)
        with pytest.raises(EstimationError, match="below the observed count"):
            run_lcmcr(two_list_table(), config, seed=3)

    def test_empty_table(self):
        """Test an empty table samples the prior and never augments"""
        config = LcmcrConfig(strata=3, iterations=40, burnin=0, thin=2)
        post = run_lcmcr(ContingencyTable(2, {}), config, seed=0)
        assert post.draws.tolist() == [0] * 20

    @pytest.mark.slow
    def test_concentration_prior(self):
        """Test an empty table leaves the stick-breaking concentration at its Gamma(1/4, 1/4) prior"""
        config = LcmcrConfig(strata=10, iterations=40000, burnin=1000, thin=1)
        a_sb = sample_lcmcr(ContingencyTable(3, {}), config, seed=13).a_sb
        assert abs(a_sb.mean() - 1.0) < 4 * batch_means_se(a_sb)
        median = gamma.ppf(0.5, 0.25, scale=4.0)
        assert np.mean(a_sb <= median) == pytest.approx(0.5, abs=0.05)

    def test_bad_fixed_theta(self):
        """Test pinned capture probabilities of the wrong shape"""
        with pytest.raises(EstimationError, match="S x K"):
            run_lcmcr(two_list_table(), LcmcrConfig(strata=2, iterations=10, burnin=0, thin=1),
                      seed=0, fixed_theta=np.full((1, 2), 0.5))

    def test_single_list(self):
        """Test a one-list table"""
        with pytest.raises(EstimationError, match="at least two lists"):
            run_lcmcr(ContingencyTable(1, {1: 4}), LcmcrConfig(iterations=10, burnin=0, thin=1), seed=0)

    @pytest.mark.slow
    @pytest.mark.parametrize("prior,size", [("reciprocal", 80), ("uniform", 81)])
    def test_one_class_matches_negative_binomial(self, prior, size):
        """Test S=1 with fixed capture probabilities against the exact n_0 posterior"""
        config = LcmcrConfig(strata=1, iterations=20000, burnin=0, thin=1, prior=prior)
        post = run_lcmcr(two_list_table(), config, seed=11, fixed_theta=np.array([[0.5, 0.5]]))
        missed = post.draws - 80
        # list capture 0.5 twice leaves 0.25 unobserved
        exact = nbinom(size, 0.75)
        assert abs(missed.mean() - exact.mean()) < 4 * batch_means_se(missed)
        assert missed.var() == pytest.approx(exact.var(), rel=0.1)
        support = np.arange(missed.max() + 1)
        empirical = np.bincount(missed, minlength=len(support)) / len(missed)
        assert 0.5 * np.abs(empirical - exact.pmf(support)).sum() < 0.03

    @pytest.mark.slow
    def test_homogeneous_population(self):
        """Test three independent lists with capture 0.5 recover N near 512"""
        table = ContingencyTable.from_dense([0] + [64] * 7)
        post = run_lcmcr(table, LcmcrConfig(strata=5, iterations=4000, burnin=1000, thin=5), seed=2)
        assert 0.9 * 512 < post.mean < 1.25 * 512
