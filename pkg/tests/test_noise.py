import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from soc_spde.noise import (
    BrownianStream,
    NoiseSpec,
    c_n_constant,
    hypothesis_ii_report,
    mode_matrix,
    noise_increment,
)
from soc_spde.spectral_grid import make_grid, sine_mode


class TestNoiseSpec:
    def test_mu_length_mismatch(self):
        with pytest.raises(ValueError, match="mu"):
            NoiseSpec(2, (0.1,))

    def test_negative_mu(self):
        with pytest.raises(ValueError):
            NoiseSpec(1, (-0.1,))

    def test_seed_range(self):
        with pytest.raises(ValueError):
            NoiseSpec(0, (), master_seed=2**64)


class TestConstants:
    @pytest.mark.parametrize(
        "mu, expected",
        [((), 0.0), ((0.1,), math.pi / 100), ((0.1, 0.1), math.pi / 4 * 13 * 0.01)],
    )
    def test_c_n(self, mu, expected):
        assert c_n_constant(NoiseSpec(len(mu), mu)) == pytest.approx(expected, rel=1e-14, abs=0)

    def test_c_n_values(self):
        assert c_n_constant(NoiseSpec(2, (0.1, 0.1))) == pytest.approx(0.102102, abs=1e-6)
        assert c_n_constant(NoiseSpec(1, (0.2,))) == pytest.approx(0.12566, abs=1e-5)

    @pytest.mark.parametrize("mu, expected", [((), 0.0), ((1.0,), 1.0), ((1.0, 1.0, 1.0), 98.0)])
    def test_hypothesis_ii(self, mu, expected):
        assert hypothesis_ii_report(NoiseSpec(len(mu), mu)) == expected


class TestIncrement:
    def test_zero_state(self):
        g = make_grid(16)
        spec = NoiseSpec(2, (0.3, 0.4))
        assert np.all(noise_increment(g, np.zeros(16), spec, [0.5, -1.0]) == 0)

    def test_zero_amplitudes(self):
        g = make_grid(16)
        spec = NoiseSpec(2, (0.0, 0.0))
        assert np.all(noise_increment(g, np.ones(16), spec, [0.5, -1.0]) == 0)

    def test_formula(self):
        g = make_grid(20)
        spec = NoiseSpec(3, (0.1, 0.2, 0.3))
        x = np.linspace(0, 1, 20)
        db = np.array([0.3, -0.2, 0.7])
        expected = sum(spec.mu[k] * x * sine_mode(g, k + 1) * db[k] for k in range(3))
        np.testing.assert_allclose(noise_increment(g, x, spec, db), expected, atol=1e-15)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 1000))
    def test_linearity(self, a, b, seed):
        g = make_grid(12)
        spec = NoiseSpec(2, (0.5, 0.25))
        rng = np.random.default_rng(seed)
        x, y = rng.normal(size=(2, 12))
        d1, d2 = rng.normal(size=(2, 2))
        inc = lambda u, d: noise_increment(g, u, spec, d)
        np.testing.assert_allclose(inc(a * x + b * y, d1), a * inc(x, d1) + b * inc(y, d1), atol=1e-12)
        np.testing.assert_allclose(inc(x, a * d1 + b * d2), a * inc(x, d1) + b * inc(x, d2), atol=1e-12)

    def test_second_moment_monte_carlo(self):
        # E|increment|_2^2 = dt * mu^2 * |e_1|_2^2 = dt for X = 1, mu_1 = 1
        g = make_grid(63)
        spec = NoiseSpec(1, (1.0,), master_seed=11)
        dt = 1e-3
        stream = BrownianStream(spec, 0, dt)
        modes = mode_matrix(g, spec)
        x = np.ones(63)
        samples = [g.l2_norm(noise_increment(g, x, spec, stream.increment(i), modes)) ** 2 for i in range(100_000)]
        assert np.mean(samples) == pytest.approx(dt, rel=0.02)


class TestBrownianStream:
    def test_reproducible_per_path(self):
        spec = NoiseSpec(3, (1, 1, 1), master_seed=99)
        a = BrownianStream(spec, 5, 0.01)
        b = BrownianStream(spec, 5, 0.01)
        # b is queried out of order and far ahead first
        late = b.increment(5000)
        early = [b.increment(i) for i in range(10)]
        assert np.array_equal(np.array([a.increment(i) for i in range(10)]), np.array(early))
        assert np.array_equal(a.increment(5000), late)

    def test_paths_differ(self):
        spec = NoiseSpec(1, (1.0,), master_seed=3)
        assert BrownianStream(spec, 0, 1.0).increment(0) != BrownianStream(spec, 1, 1.0).increment(0)

    def test_independent_of_other_paths(self):
        spec = NoiseSpec(2, (1, 1), master_seed=1)
        solo = [BrownianStream(spec, 7, 0.1).increment(i) for i in range(50)]
        streams = [BrownianStream(spec, p, 0.1) for p in range(10)]
        for i in range(50):
            for s in reversed(streams):
                s.increment(i)
        assert np.array_equal(np.array(solo), np.array([streams[7].increment(i) for i in range(50)]))

    def test_substeps_share_path(self):
        spec = NoiseSpec(2, (1, 1), master_seed=21)
        dt = 0.02
        fine = BrownianStream(spec, 0, dt / 2)
        coarse = BrownianStream(spec, 0, dt, substeps=2)
        fine2 = BrownianStream(spec, 0, dt / 2, substeps=1)
        for i in range(300):
            np.testing.assert_allclose(coarse.increment(i), fine.increment(2 * i) + fine2.increment(2 * i + 1), atol=1e-15)

    def test_variance_and_independence(self):
        spec = NoiseSpec(3, (1, 1, 1), master_seed=5)
        dt = 0.01
        s = BrownianStream(spec, 0, dt)
        inc = np.array([s.increment(i) for i in range(10_000)])
        assert np.allclose(inc.var(axis=0), dt, rtol=0.05)
        corr = np.corrcoef(inc.T)
        assert np.max(np.abs(corr[np.triu_indices(3, 1)])) <= 0.05
        lag = np.corrcoef(inc[:-1, 0], inc[1:, 0])[0, 1]
        assert abs(lag) <= 0.05

    def test_no_modes(self):
        s = BrownianStream(NoiseSpec(), 0, 0.1)
        assert s.increment(3).shape == (0,)
