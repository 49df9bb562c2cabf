import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linkmse.analysis.averaging import (
    VarianceDecomposition,
    average_closed_form,
    average_draws,
    joint_exact_check,
    variance_decomposition,
    variance_decomposition_model,
)
from linkmse.analysis.mse_graphical import parse_model, posterior_N_given_m
from linkmse.analysis.posterior import ModelLayer, SizePosterior, SizePrior
from linkmse.core.errors import EstimationError


def spread_posterior(low, probs):
    return SizePosterior(np.arange(low, low + len(probs)), np.asarray(probs) / np.sum(probs))


class TestClosedForm:
    """Test averaging posterior pmfs over partition draws"""

    def test_two_point_masses(self):
        """Test draws that pin N at 10 and at 20"""
        averaged = average_closed_form([SizePosterior.point_mass(10), SizePosterior.point_mass(20)])
        assert averaged.support.tolist() == [10, 20]
        assert averaged.probs.tolist() == [0.5, 0.5]
        assert averaged.mean == pytest.approx(15.0)
        assert averaged.var == pytest.approx(25.0)
        assert averaged.decomposition.linkage == pytest.approx(25.0)
        assert averaged.decomposition.residual == 0.0
        assert averaged.decomposition.linkage_share == pytest.approx(1.0)

    def test_single_draw_identity(self):
        """Test d=1 returns the conditional posterior"""
        post = spread_posterior(30, [1, 4, 6, 4, 1])
        averaged = average_closed_form([post])
        assert np.allclose(averaged.probs, post.probs)
        assert averaged.decomposition.linkage == 0.0
        assert averaged.n_draws == 1

    def test_total_variance_identity(self):
        """Test the two terms add up to the pooled variance on overlapping supports"""
        posts = [
            spread_posterior(20, [1, 2, 3, 2, 1]),
            spread_posterior(23, [5, 1, 1]),
            spread_posterior(18, [1, 1, 1, 1, 1, 1, 1, 1, 1, 1]),
        ]
        averaged = average_closed_form(posts)
        assert averaged.decomposition.total == pytest.approx(averaged.var)
        assert averaged.support.tolist() == list(range(18, 28))
        assert averaged.probs.sum() == pytest.approx(1.0)

    def test_layers_split_model_uncertainty(self):
        """Test per-model layers add a model term"""
        layers = [ModelLayer("[1][2]", 0.5, 10.0, 0.0), ModelLayer("[1,2]", 0.5, 30.0, 0.0)]
        post = SizePosterior(np.array([10, 30]), np.array([0.5, 0.5]), layers=layers)
        averaged = average_closed_form([post, post])
        assert averaged.decomposition.model == pytest.approx(100.0)
        assert averaged.decomposition.linkage == pytest.approx(0.0)
        assert averaged.decomposition.model_share == pytest.approx(1.0)

    def test_nothing_to_average(self):
        """Test an empty list of posteriors"""
        with pytest.raises(EstimationError, match="no per-draw posteriors"):
            average_closed_form([])


class TestDrawPooling:
    """Test averaging per-partition draw sets"""

    def test_sets_weighted_equally(self):
        """Test sets of different lengths each carry weight 1/d"""
        averaged = average_draws([[10] * 5, [20] * 3])
        assert averaged.support.tolist() == [10, 20]
        assert np.allclose(averaged.probs, [0.5, 0.5])
        assert averaged.decomposition.linkage_share == pytest.approx(1.0)

    def test_identical_sets(self):
        """Test no linkage term when every partition gives the same draws"""
        averaged = average_draws([[1, 2, 3], [1, 2, 3]])
        assert averaged.decomposition.linkage == 0.0
        assert averaged.decomposition.residual_share == pytest.approx(1.0)

    def test_empty_set(self):
        """Test a partition draw with no N draws"""
        with pytest.raises(EstimationError, match="at least one N draw"):
            average_draws([[1, 2], []])


class TestDecomposition:
    """Test variance decompositions"""

    def test_two_terms(self):
        """Test variance of means plus mean of variances"""
        split = variance_decomposition([10, 20, 30], [1, 2, 3])
        assert split.linkage == pytest.approx(200 / 3)
        assert split.residual == pytest.approx(2.0)

    def test_mismatched_lengths(self):
        """Test means and variances of different lengths"""
        with pytest.raises(EstimationError, match="one conditional mean and variance"):
            variance_decomposition([1, 2], [1])

    def test_three_terms_sum_to_mixture_variance(self):
        """Test point masses at 10, 30 and 20, 40 with equal weights"""
        means = np.array([[10.0, 30.0], [20.0, 40.0]])
        split = variance_decomposition_model(means, np.zeros((2, 2)), np.full((2, 2), 0.5))
        assert split.linkage == pytest.approx(25.0)
        assert split.model == pytest.approx(100.0)
        assert split.residual == 0.0
        # mixture of 10, 30, 20, 40 each with mass 1/4
        assert split.total == pytest.approx(np.var([10, 30, 20, 40]))

    def test_model_share_only(self):
        """Test draws that agree while models disagree"""
        means = np.array([[10.0, 30.0], [10.0, 30.0]])
        split = variance_decomposition_model(means, np.zeros((2, 2)), np.full((2, 2), 0.5))
        assert split.shares() == {"linkage": 0.0, "model": 1.0, "residual": 0.0}

    def test_weights_must_sum_to_one(self):
        """Test per-draw model weights"""
        with pytest.raises(EstimationError, match="sum to 1"):
            variance_decomposition_model(np.ones((1, 2)), np.ones((1, 2)), np.array([[0.5, 0.4]]))

    def test_zero_variance_shares(self):
        """Test a degenerate decomposition reports all residual"""
        assert VarianceDecomposition(0.0, 0.0).shares()["residual"] == 1.0

    def test_report(self):
        """Test the reported percentages"""
        report = VarianceDecomposition(linkage=3.0, residual=1.0).report()
        assert report["total_variance"] == 4.0
        assert report["shares_percent"]["linkage"] == pytest.approx(75.0)


class TestJointCheck:
    """Test the averaged posterior against the joint model on a small instance"""

    @staticmethod
    def estimate(table):
        return posterior_N_given_m(table, parse_model("[1][2]", 2), size_prior=SizePrior(n_max=60))

    def test_triangle_two_lists(self, triangle, flat_lam):
        """Test three records across two lists"""
        check = joint_exact_check(triangle, flat_lam, [1, 2, 2], self.estimate)
        assert check.max_abs_diff < 1e-12
        assert check.p_la.sum() == pytest.approx(1.0)

    def test_triangle_list_subset(self, triangle, flat_lam):
        """Test three lists estimated on the margin of lists 1 and 2"""
        check = joint_exact_check(triangle, flat_lam, [1, 2, 3], self.estimate, subset=[1, 2])
        assert check.max_abs_diff < 1e-12


pmfs = st.lists(
    st.tuples(st.integers(0, 40), st.lists(st.floats(0.01, 1.0), min_size=1, max_size=6)),
    min_size=1, max_size=6,
)


class TestVarianceIdentities:
    """Test the decompositions add up to the pooled variance"""

    @settings(max_examples=1000, deadline=None)
    @given(pmfs)
    def test_two_terms(self, parts):
        """Test linkage plus residual equals the variance of the averaged pmf"""
        averaged = average_closed_form([spread_posterior(low, probs) for low, probs in parts])
        assert averaged.decomposition.total == pytest.approx(averaged.var, rel=1e-9, abs=1e-9)
        assert averaged.mean == pytest.approx(averaged.cond_means.mean(), rel=1e-9, abs=1e-9)
        assert sum(averaged.decomposition.shares().values()) == pytest.approx(1.0, abs=1e-9)

    @settings(max_examples=1000, deadline=None)
    @given(st.integers(1, 5), st.integers(1, 4), st.integers(0, 2**32 - 1))
    def test_three_terms(self, n_draws, n_models, seed):
        """Test linkage, model and residual terms against the mixture variance"""
        rng = np.random.default_rng(seed)
        means = rng.uniform(0, 100, size=(n_draws, n_models))
        variances = rng.uniform(0, 50, size=(n_draws, n_models))
        weights = rng.dirichlet(np.ones(n_models), size=n_draws)
        split = variance_decomposition_model(means, variances, weights)
        mass = weights / n_draws
        pooled_mean = (mass * means).sum()
        pooled_var = (mass * (variances + means ** 2)).sum() - pooled_mean ** 2
        assert split.total == pytest.approx(pooled_var, rel=1e-9, abs=1e-7)
