import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multidraft.errors import InvalidArgument
from multidraft.simplex import (
    as_distribution,
    overlap,
    residual,
    sample_categorical,
    softmax_with_temperature,
    top_token,
)

P = [0.1, 0.6, 0.3]
Q = [0.5, 0.3, 0.2]


class TestAsDistribution:
    def test_returns_readonly_copy(self):
        src = np.array([0.25, 0.75])
        d = as_distribution(src)
        assert not d.flags.writeable
        src[0] = 9
        assert d[0] == 0.25

    @pytest.mark.parametrize("bad", [[], [[0.5, 0.5]], [0.5, 0.6], [-0.1, 1.1], [np.nan, 1.0]])
    def test_rejects(self, bad):
        with pytest.raises(InvalidArgument):
            as_distribution(bad)

    def test_tolerance(self):
        as_distribution([0.5, 0.5 + 5e-10])
        with pytest.raises(InvalidArgument):
            as_distribution([0.5, 0.5 + 5e-9])


class TestSoftmax:
    def test_hand_value(self):
        np.testing.assert_allclose(softmax_with_temperature([0.0, math.log(3)], 1.0), [0.25, 0.75])

    def test_temperature_scales_logits(self):
        np.testing.assert_allclose(
            softmax_with_temperature([0.0, math.log(3)], 0.5), [0.1, 0.9], rtol=1e-12)

    def test_large_logits_are_stable(self):
        out = softmax_with_temperature([1000.0, 1000.0, -1000.0], 0.01)
        np.testing.assert_allclose(out, [0.5, 0.5, 0.0])

    @pytest.mark.parametrize("T", [0.0, -1.0, float("inf")])
    def test_bad_temperature(self, T):
        with pytest.raises(InvalidArgument):
            softmax_with_temperature([1.0, 2.0], T)


class TestOverlapResidual:
    def test_worked_instance(self):
        assert overlap(P, Q) == pytest.approx(0.6, abs=1e-15)
        r, alpha = residual(P, Q)
        np.testing.assert_allclose(r, [0.0, 0.75, 0.25], atol=1e-15)
        assert alpha == pytest.approx(0.6)

    def test_identical_has_empty_residual(self):
        r, alpha = residual(P, P)
        assert r is None and alpha == pytest.approx(1.0)

    def test_size_mismatch(self):
        with pytest.raises(InvalidArgument):
            overlap([1.0], [0.5, 0.5])

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=12), st.integers(0, 2**32 - 1))
    def test_residual_identity(self, w, seed):
        # p = overlap part + (1 - alpha) * residual
        p = np.array(w) / sum(w)
        q = np.random.default_rng(seed).dirichlet(np.ones(p.size))
        r, alpha = residual(p, q)
        back = np.minimum(p, q) + (1 - alpha) * (r if r is not None else 0)
        np.testing.assert_allclose(back, p, atol=1e-12)


def test_top_token_ties_lowest():
    assert top_token([0.2, 0.4, 0.4]) == 1


class TestSampleCategorical:
    def test_frequencies(self):
        rng = np.random.default_rng(0)
        w = np.array([0.2, 0.0, 0.5, 0.3])
        n = 40000
        counts = np.bincount([sample_categorical(w, rng) for _ in range(n)], minlength=4)
        assert counts[1] == 0
        se = np.sqrt(w * (1 - w) / n)
        assert np.all(np.abs(counts / n - w) < 5 * se + 1e-12)

    def test_unnormalized_weights(self):
        rng = np.random.default_rng(1)
        assert {sample_categorical(np.array([0.0, 3.0, 0.0]), rng) for _ in range(50)} == {1}

    def test_one_uniform_per_draw(self):
        a, b = np.random.default_rng(5), np.random.default_rng(5)
        sample_categorical(np.array([0.5, 0.5]), a)
        b.random()
        assert a.random() == b.random()

    def test_zero_vector(self):
        with pytest.raises(InvalidArgument):
            sample_categorical(np.zeros(3), np.random.default_rng(0))

    def test_trailing_zero_never_drawn(self):
        class Top:
            def random(self):
                return 1.0 - 2**-53
        assert sample_categorical(np.array([0.3, 0.7, 0.0]), Top()) == 1
