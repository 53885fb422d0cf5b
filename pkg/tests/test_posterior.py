import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import aps
from aps._kernels import beta_logpdf
from aps.exceptions import (
    DegenerateTruncationError,
    InputError,
    UnsupportedConfigError,
)


def _observe(state, arm, symbol):
    return aps.update_posterior(
        state, aps.SampleRecord(arm=arm, symbol=symbol, step=state.step))


class TestUpdatePosterior:
    def test_single_increment(self):
        st0 = aps.PosteriorState.from_prior(aps.PriorSpec.uniform(2, 2))
        st1 = _observe(st0, 0, 1)
        assert st1.alpha[0].tolist() == [1.0, 2.0]
        assert st1.alpha[1].tolist() == [1.0, 1.0]
        assert st1.step == 2
        assert st1.arm_counts.tolist() == [1, 0]

    def test_other_arm_unchanged(self):
        st0 = aps.PosteriorState.from_prior(aps.PriorSpec.uniform(3, 2))
        st1 = _observe(st0, 1, 0)
        assert np.array_equal(st1.alpha[0], st0.alpha[0])
        assert np.array_equal(st1.alpha[2], st0.alpha[2])

    def test_repeated_increments(self):
        st = aps.PosteriorState.from_prior(aps.PriorSpec.uniform(1, 2))
        for _ in range(10):
            st = _observe(st, 0, 0)
        assert st.alpha[0].tolist() == [11.0, 1.0]
        assert st.arm_counts[0] == 10

    def test_totals_track_counts(self):
        st = aps.PosteriorState.from_prior(aps.PriorSpec.uniform(2, 3))
        rng = np.random.default_rng(0)
        for _ in range(25):
            st = _observe(st, int(rng.integers(2)), int(rng.integers(3)))
        assert np.allclose(st.alpha_totals, 3.0 + st.arm_counts)
        assert st.arm_counts.sum() == st.step - 1

    def test_rejects_bad_indices_and_step(self):
        st = aps.PosteriorState.from_prior(aps.PriorSpec.uniform(2, 2))
        with pytest.raises(InputError):
            aps.update_posterior(st, aps.SampleRecord(arm=2, symbol=0, step=1))
        with pytest.raises(InputError):
            aps.update_posterior(st, aps.SampleRecord(arm=0, symbol=2, step=1))
        with pytest.raises(InputError):
            aps.update_posterior(st, aps.SampleRecord(arm=0, symbol=0, step=9))

    def test_state_is_immutable(self):
        st = aps.PosteriorState.from_prior(aps.PriorSpec.uniform(2, 2))
        with pytest.raises(ValueError):
            st.alpha[0, 0] = 99.0

    @given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 2)),
                    min_size=1, max_size=40))
    @settings(max_examples=60, deadline=None)
    def test_order_invariance(self, obs):
        base = aps.PosteriorState.from_prior(aps.PriorSpec.uniform(2, 3))
        fwd = base
        for arm, sym in obs:
            fwd = _observe(fwd, arm, sym)
        rev = base
        for arm, sym in reversed(obs):
            rev = _observe(rev, arm, sym)
        assert np.array_equal(fwd.alpha, rev.alpha)
        assert np.array_equal(fwd.counts, rev.counts)


class TestPriorSpec:
    def test_default_uniform(self):
        prior = aps.PriorSpec.uniform(3, 4)
        assert np.all(prior.alphas == 1.0)

    def test_rejects_nonpositive_alpha(self):
        with pytest.raises(InputError):
            aps.PriorSpec(np.array([[1.0, 0.0]]))

    def test_truncation_requires_binary_support(self):
        with pytest.raises(UnsupportedConfigError):
            aps.PriorSpec(np.ones((1, 3)), truncation=np.array([[0.1, 0.9]]))

    def test_truncation_interval_validated(self):
        with pytest.raises(InputError):
            aps.PriorSpec(np.ones((1, 2)), truncation=np.array([[0.9, 0.1]]))


class TestBetaCdf:
    def test_uniform_is_identity(self):
        assert aps.beta_cdf(0.3, 1, 1) == pytest.approx(0.3, abs=1e-15)

    def test_power_law(self):
        assert aps.beta_cdf(0.5, 2, 1) == pytest.approx(0.25, abs=1e-14)

    def test_symmetry(self):
        assert aps.beta_cdf(0.5, 3, 3) == pytest.approx(0.5, abs=1e-13)

    def test_domain_errors(self):
        with pytest.raises(InputError):
            aps.beta_cdf(1.5, 1, 1)
        with pytest.raises(InputError):
            aps.beta_cdf(0.5, -1, 1)


class TestBetaQuantile:
    def test_inverse_of_square(self):
        assert aps.beta_quantile(0.25, 2, 1) == pytest.approx(0.5, abs=1e-12)

    def test_uniform_identity(self):
        for q in (0.01, 0.37, 0.92):
            assert aps.beta_quantile(q, 1, 1) == pytest.approx(q, abs=1e-12)

    def test_endpoints_rejected(self):
        with pytest.raises(InputError):
            aps.beta_quantile(0.0, 2, 2)
        with pytest.raises(InputError):
            aps.beta_quantile(1.0, 2, 2)

    @given(st.floats(0.01, 0.99), st.floats(0.5, 500), st.floats(0.5, 500))
    @settings(max_examples=200, deadline=None)
    def test_round_trip_property(self, x, a, b):
        q = aps.beta_cdf(x, a, b)
        if not (0.0 < q < 1.0):
            return
        # Where the density is degenerate the cdf is flat to within one ulp
        # of q, so no inverse can recover x better than ulp(q) / pdf(x);
        # widen the tolerance by exactly that propagation term.
        pdf = math.exp(beta_logpdf(a, b, x))
        tol = 1e-10 + 4e-16 * max(q, 1 - q) / max(pdf, 1e-300)
        assert aps.beta_quantile(q, a, b) == pytest.approx(x, abs=tol)


class TestTruncated:
    def test_no_truncation_matches_plain_cdf(self):
        for x in (0.1, 0.5, 0.9):
            assert aps.truncated_cdf(x, 2.5, 3.5, 0.0, 1.0) == pytest.approx(
                aps.beta_cdf(x, 2.5, 3.5), rel=1e-12)

    def test_linear_case(self):
        assert aps.truncated_cdf(0.4, 1, 1, 0.2, 0.6) == pytest.approx(0.5, abs=1e-12)

    def test_square_ratio(self):
        expected = (0.5625 - 0.25) / (1.0 - 0.25)
        assert aps.truncated_cdf(0.75, 2, 1, 0.5, 1.0) == pytest.approx(
            expected, abs=1e-12)

    def test_clamps_outside_support(self):
        assert aps.truncated_cdf(0.1, 1, 1, 0.2, 0.6) == 0.0
        assert aps.truncated_cdf(0.7, 1, 1, 0.2, 0.6) == 1.0

    def test_monotone_and_onto(self):
        xs = np.linspace(0.2, 0.6, 101)
        vals = [aps.truncated_cdf(x, 3.0, 5.0, 0.2, 0.6) for x in xs]
        assert vals[0] == 0.0 and vals[-1] == 1.0
        assert np.all(np.diff(vals) >= 0)

    def test_quantile_inverts_cdf(self):
        for q in (0.05, 0.5, 0.95):
            x = aps.truncated_quantile(q, 3.0, 5.0, 0.2, 0.6)
            assert aps.truncated_cdf(x, 3.0, 5.0, 0.2, 0.6) == pytest.approx(
                q, abs=1e-9)

    def test_degenerate_mass(self):
        # Beta(500, 1) mass below 0.2 underflows to nothing.
        with pytest.raises(DegenerateTruncationError):
            aps.truncated_cdf(0.1, 500.0, 1.0, 0.0, 0.2)


def test_posterior_mean_converges_to_truth():
    rng = np.random.default_rng(99)
    p = np.array([[0.85, 0.1, 0.05], [0.2, 0.5, 0.3]])
    draws = 10_000
    counts = np.stack([rng.multinomial(draws, row) for row in p])
    state = aps.PosteriorState(np.ones_like(p), counts, step=2 * draws + 1)
    mean = state.posterior_mean()
    se = np.sqrt(p * (1 - p) / draws)
    assert np.all(np.abs(mean - p) <= 3 * se + 2 / draws)
