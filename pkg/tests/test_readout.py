import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from qbattery.errors import DegenerateCalibration, InvalidParam, MissingLabel
from qbattery.readout import (
    TARGET_EFF0,
    TARGET_EFF1,
    Discriminator,
    ReadoutModel,
    assignment_efficiency,
    binomial_sigma,
    calibrate,
    classify,
    estimate_p1,
    expected_efficiencies,
    sample_shots,
    solve_readout_params,
)


def efficiencies(model, n, seed):
    s0 = sample_shots(0.0, n, model, seed, 0)
    s1 = sample_shots(1.0, n, model, seed, 1)
    d = calibrate(s0, s1)
    labels = np.r_[np.zeros(n, int), np.ones(n, int)]
    return assignment_efficiency(d, labels, np.vstack([s0, s1]))


class TestSampleShots:
    def test_shape_and_means(self):
        m = ReadoutModel.ideal(10.0)
        s0 = sample_shots(0.0, 4000, m, 1)
        s1 = sample_shots(1.0, 4000, m, 1, 1)
        assert s0.shape == (4000, 2)
        np.testing.assert_allclose(s0.mean(axis=0), m.mu0, atol=5 * m.spread / math.sqrt(4000))
        np.testing.assert_allclose(s1.mean(axis=0), m.mu1, atol=5 * m.spread / math.sqrt(4000))
        assert s0.std(axis=0) == pytest.approx([m.spread] * 2, rel=0.05)

    def test_deterministic(self):
        m = ReadoutModel.tuned()
        a = sample_shots(0.3, 100, m, 5, 2)
        b = sample_shots(0.3, 100, m, 5, 2)
        c = sample_shots(0.3, 100, m, 5, 3)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_relaxation_fraction(self):
        m = ReadoutModel((-1.0, 0.0), (1.0, 0.0), 0.05, 0.95)
        s = sample_shots(1.0, 1000, m, 3)
        frac = np.mean(s[:, 0] < 0)
        assert frac == pytest.approx(0.95, abs=3 * binomial_sigma(0.95, 1000))

    def test_per_shot_probabilities(self):
        m = ReadoutModel.ideal(20.0)
        p = np.r_[np.zeros(500), np.ones(500)]
        s = sample_shots(p, 1000, m, 9)
        assert np.all(s[:500, 0] < 0) and np.all(s[500:, 0] > 0)

    @pytest.mark.parametrize("p", [-0.1, 1.1, float("nan")])
    def test_invalid_p1(self, p):
        with pytest.raises(InvalidParam):
            sample_shots(p, 10, ReadoutModel.ideal(), 0)

    def test_invalid_n(self):
        with pytest.raises(InvalidParam):
            sample_shots(0.5, 0, ReadoutModel.ideal(), 0)


class TestCalibrate:
    def test_centroids(self):
        d = calibrate([[0, 0], [2, 0]], [[4, 2], [6, 2]])
        assert d.c0 == (1.0, 0.0) and d.c1 == (5.0, 2.0)
        np.testing.assert_allclose(d.midpoint, [3.0, 1.0])

    def test_degenerate(self):
        with pytest.raises(DegenerateCalibration):
            calibrate([[1, 1], [1, 1]], [[0, 2], [2, 0]])

    @settings(max_examples=50, deadline=None)
    @given(dx=st.floats(-50, 50), dy=st.floats(-50, 50))
    def test_translation_equivariant(self, dx, dy):
        rng = np.random.default_rng(0)
        s0, s1 = rng.normal(-1, 0.3, (50, 2)), rng.normal(1, 0.3, (50, 2))
        shots = rng.normal(0, 1, (200, 2))
        d = calibrate(s0, s1)
        t = np.array([dx, dy])
        dt = calibrate(s0 + t, s1 + t)
        np.testing.assert_allclose(dt.midpoint, d.midpoint + t, atol=1e-9)
        # points exactly on the boundary are measure zero for continuous draws
        assert np.array_equal(classify(d, shots), classify(dt, shots + t))


class TestClassify:
    d = Discriminator((-1.0, 0.0), (1.0, 0.0))

    def test_examples(self):
        assert classify(self.d, (0.5, 3.0)) == 1
        assert classify(self.d, (-0.2, -7.0)) == 0

    def test_tie_goes_to_zero(self):
        assert classify(self.d, (0.0, 5.0)) == 0

    def test_array(self):
        assert classify(self.d, [[1, 0], [-1, 0], [0, 0]]).tolist() == [1, 0, 0]

    @settings(max_examples=100, deadline=None)
    @given(ang=st.floats(0, 2 * math.pi), scale=st.floats(0.1, 10.0))
    def test_rotation_and_scale_invariant(self, ang, scale):
        rng = np.random.default_rng(7)
        pts = rng.normal(0, 1.5, (100, 2))
        r = scale * np.array([[math.cos(ang), -math.sin(ang)], [math.sin(ang), math.cos(ang)]])
        c0, c1 = np.array([-1.0, 0.2]), np.array([0.8, -0.4])
        d = Discriminator(tuple(c0), tuple(c1))
        dr = Discriminator(tuple(r @ c0), tuple(r @ c1))
        far = np.abs(d.score(pts)) > 1e-9
        assert np.array_equal(classify(d, pts)[far], classify(dr, pts @ r.T)[far])


class TestEstimate:
    def test_count(self):
        d = Discriminator((-1.0, 0.0), (1.0, 0.0))
        shots = np.r_[np.tile([1.0, 0.0], (581, 1)), np.tile([-1.0, 0.0], (443, 1))]
        p = estimate_p1(d, shots)
        assert p == 581 / 1024
        assert p == pytest.approx(0.5674, abs=1e-4)

    def test_binomial_sigma(self):
        assert binomial_sigma(0.5, 1024) == pytest.approx(0.015625)


class TestEfficiency:
    @pytest.mark.parametrize("ratio", [2.0, 3.0, 4.0])
    def test_symmetric_oracle(self, ratio):
        n = 20000
        e0, e1 = efficiencies(ReadoutModel.symmetric(ratio), n, 42)
        expect = stats.norm.cdf(ratio / 2)
        tol = 3 * binomial_sigma(expect, n) + 0.005  # centroid noise
        assert e0 == pytest.approx(expect, abs=tol)
        assert e1 == pytest.approx(expect, abs=tol)

    def test_ideal_near_perfect(self):
        e0, e1 = efficiencies(ReadoutModel.ideal(10.0), 1024, 1)
        assert min(e0, e1) > 0.9999

    def test_tuned_parameters(self):
        s, p = solve_readout_params(TARGET_EFF0, TARGET_EFF1)
        assert expected_efficiencies(s, p) == pytest.approx((0.974, 0.927), abs=1e-10)
        assert s == pytest.approx(0.48300, abs=1e-4)
        assert p == pytest.approx(0.06147, abs=1e-4)

    def test_tuned_large_sample(self):
        e0, e1 = efficiencies(ReadoutModel.tuned(), 200_000, 3)
        assert e0 == pytest.approx(0.974, abs=0.002)
        assert e1 == pytest.approx(0.927, abs=0.002)

    def test_tuned_seed7(self):
        e0, e1 = efficiencies(ReadoutModel.tuned(), 1024, 7)
        assert e0 == pytest.approx(0.974, abs=0.01)
        assert e1 == pytest.approx(0.927, abs=0.01)

    def test_missing_label(self):
        d = Discriminator((-1.0, 0.0), (1.0, 0.0))
        with pytest.raises(MissingLabel):
            assignment_efficiency(d, [0, 0], [[-1, 0], [1, 0]])

    def test_bad_targets(self):
        with pytest.raises(InvalidParam):
            solve_readout_params(0.9, 0.95)


class TestSerialization:
    def test_discriminator_json(self):
        d = Discriminator((-0.123456789012345, 1e-17), (0.987654321, -2.5))
        assert Discriminator.from_json(d.to_json()) == d

    def test_model_dict(self):
        m = ReadoutModel.tuned()
        assert ReadoutModel.from_dict(m.to_dict()) == m

    def test_model_validation(self):
        with pytest.raises(InvalidParam):
            ReadoutModel((0, 0), (0, 0), 0.1)
        with pytest.raises(InvalidParam):
            ReadoutModel((0, 0), (1, 0), 0.0)
        with pytest.raises(InvalidParam):
            ReadoutModel((0, 0), (1, 0), 0.1, 1.5)
