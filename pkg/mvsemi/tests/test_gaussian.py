from __future__ import absolute_import, division
import math
import os
import unittest

import numpy as np
import torch

from mvsemi.gaussian import (
    DiagGaussian,
    kl_to_standard,
    log_density,
    poe_fuse,
    poe_fuse_masked,
    reparam_sample,
    standard_prior,
)
from mvsemi.tests.oracles import oracle_kl_mc, oracle_poe_grid

SLOW = bool(os.environ.get("MVSEMI_SLOW_TESTS"))


def diag(mean, log_variance):
    return DiagGaussian(np.asarray(mean, dtype=np.float64), np.asarray(log_variance, dtype=np.float64))


def gaussian(mean, variance):
    mean = torch.tensor(mean, dtype=torch.float64)
    return DiagGaussian(mean, torch.log(torch.tensor(variance, dtype=torch.float64)))


class TestDiagGaussian(unittest.TestCase):

    def test_clamp(self):
        q = diag([0.0, 0.0], [-50.0, 50.0])
        self.assertTrue(np.allclose(q.log_variance.numpy(), [-10, 10]))

    def test_shape_mismatch(self):
        with self.assertRaises(ValueError):
            diag([0.0, 0.0], [0.0])

    def test_non_finite(self):
        with self.assertRaises(ValueError):
            diag([float("nan")], [0.0])

    def test_indexing(self):
        q = DiagGaussian(torch.arange(6, dtype=torch.float64).reshape(3, 2), torch.zeros(3, 2))
        sub = q[torch.tensor([True, False, True])]
        self.assertEqual(sub.batch_shape, (2,))
        self.assertTrue(np.allclose(sub.mean.numpy(), [[0, 1], [4, 5]]))


class TestStandardPrior(unittest.TestCase):

    def test_zero_parameters(self):
        prior = standard_prior(2)
        self.assertTrue(np.allclose(prior.mean.numpy(), 0))
        self.assertTrue(np.allclose(prior.log_variance.numpy(), 0))

    def test_invalid_dim(self):
        with self.assertRaises(ValueError):
            standard_prior(0)


class TestKL(unittest.TestCase):

    def test_prior_is_zero(self):
        self.assertEqual(float(kl_to_standard(standard_prior(5))), 0.0)

    def test_known_values(self):
        q = diag([1.0], [math.log(0.25)])
        self.assertAlmostEqual(float(kl_to_standard(q)), 0.125 + math.log(2), places=12)
        q = diag([1.0, 1.0], [0.0, 0.0])
        self.assertAlmostEqual(float(kl_to_standard(q)), 1.0, places=12)

    def test_nonnegative(self):
        rng = np.random.default_rng(3)
        q = DiagGaussian(rng.normal(size=(200, 4)), rng.uniform(-3, 3, size=(200, 4)))
        self.assertTrue((kl_to_standard(q) >= 0).all())

    def test_monte_carlo(self):
        q = diag([1.0], [math.log(0.25)])
        estimate, error = oracle_kl_mc(([1.0], [0.25]), ([0.0], [1.0]), n_samples=10 ** 5, seed=1)
        self.assertLess(abs(float(kl_to_standard(q)) - estimate), 4 * error)

    @unittest.skipUnless(SLOW, "set MVSEMI_SLOW_TESTS to run")
    def test_monte_carlo_random(self):
        rng = np.random.default_rng(0)
        for trial in range(100):
            mean = rng.uniform(-2, 2, size=3)
            variance = rng.uniform(0.2, 3, size=3)
            q = DiagGaussian(mean, np.log(variance))
            estimate, error = oracle_kl_mc((mean, variance), (np.zeros(3), np.ones(3)),
                                           n_samples=10 ** 6, seed=trial)
            self.assertLess(abs(float(kl_to_standard(q)) - estimate), 4 * error)


class TestReparamSample(unittest.TestCase):

    def test_zero_noise(self):
        q = diag([0.5, -1.0], [0.3, -0.2])
        self.assertTrue(torch.equal(reparam_sample(q, torch.zeros(2, dtype=torch.float64)), q.mean))

    def test_standard(self):
        eps = torch.tensor([0.3, -1.2], dtype=torch.float64)
        self.assertTrue(torch.equal(reparam_sample(standard_prior(2), eps), eps))

    def test_affine(self):
        q = diag([0.5, -1.0], [0.3, -0.2])
        eps = torch.tensor([0.7, 0.1], dtype=torch.float64)
        lhs = reparam_sample(q, 3.0 * eps) - q.mean
        rhs = 3.0 * (reparam_sample(q, eps) - q.mean)
        self.assertTrue(np.allclose(lhs.numpy(), rhs.numpy(), atol=1e-14))

    def test_law_of_large_numbers(self):
        q = diag([0.5, -1.0], [0.3, -0.2])
        generator = torch.Generator().manual_seed(0)
        n = 10 ** 5
        draws = reparam_sample(DiagGaussian(q.mean.expand(n, 2), q.log_variance.expand(n, 2)),
                               torch.randn((n, 2), generator=generator, dtype=torch.float64))
        stderr = q.variance.sqrt() / math.sqrt(n)
        self.assertTrue(((draws.mean(dim=0) - q.mean).abs() < 4 * stderr).all())

    def test_shape_mismatch(self):
        with self.assertRaises(ValueError):
            reparam_sample(standard_prior(2), torch.zeros(3))


class TestLogDensity(unittest.TestCase):

    def test_mode(self):
        self.assertAlmostEqual(float(log_density(standard_prior(1), [0.0])), -0.5 * math.log(2 * math.pi))
        self.assertAlmostEqual(float(log_density(standard_prior(1), [1.0])),
                               -0.5 * math.log(2 * math.pi) - 0.5)

    def test_normalized(self):
        q = diag([0.4], [math.log(0.7)])
        x = torch.linspace(-12, 12, 20001, dtype=torch.float64).unsqueeze(1)
        density = log_density(q, x).exp()
        self.assertAlmostEqual(float(torch.trapezoid(density, x[:, 0])), 1.0, delta=1e-4)

    def test_dimension_mismatch(self):
        with self.assertRaises(ValueError):
            log_density(standard_prior(2), [0.0, 0.0, 0.0])


class TestPoE(unittest.TestCase):

    def test_empty(self):
        fused = poe_fuse([], standard_prior(3))
        self.assertTrue(np.allclose(fused.mean.numpy(), 0))
        self.assertTrue(np.allclose(fused.log_variance.numpy(), 0))

    def test_two_experts(self):
        fused = poe_fuse([gaussian([1.0], [1.0]), gaussian([3.0], [1.0])], standard_prior(1))
        self.assertAlmostEqual(float(fused.mean), 4.0 / 3, places=12)
        self.assertAlmostEqual(float(fused.variance), 1.0 / 3, places=12)

    def test_identical_experts(self):
        for k in range(1, 6):
            fused = poe_fuse([standard_prior(2)] * k, standard_prior(2))
            self.assertTrue(np.allclose(fused.mean.numpy(), 0))
            self.assertTrue(np.allclose(fused.variance.numpy(), 1.0 / (k + 1)))

    def test_dimension_mismatch(self):
        with self.assertRaises(ValueError):
            poe_fuse([standard_prior(2)], standard_prior(3))

    def test_variance_shrinks(self):
        rng = np.random.default_rng(1)
        experts = [DiagGaussian(rng.normal(size=4), rng.uniform(-2, 2, size=4)) for _ in range(3)]
        prior = standard_prior(4)
        fused = poe_fuse(experts, prior)
        smallest = torch.stack([q.variance for q in experts + [prior]]).min(dim=0).values
        self.assertTrue((fused.variance <= smallest + 1e-15).all())

    def test_permutation(self):
        rng = np.random.default_rng(2)
        experts = [DiagGaussian(rng.normal(size=4), rng.uniform(-2, 2, size=4)) for _ in range(4)]
        a = poe_fuse(experts, standard_prior(4))
        b = poe_fuse(experts[::-1], standard_prior(4))
        self.assertTrue(np.allclose(a.mean.numpy(), b.mean.numpy(), rtol=0, atol=1e-12))
        self.assertTrue(np.allclose(a.log_variance.numpy(), b.log_variance.numpy(), rtol=0, atol=1e-12))

    def test_masked_matches_list(self):
        rng = np.random.default_rng(4)
        means = torch.tensor(rng.normal(size=(3, 5, 2)))
        log_variances = torch.tensor(rng.uniform(-1, 1, size=(3, 5, 2)))
        mask = torch.tensor(rng.random((3, 5)) < 0.6)
        fused = poe_fuse_masked(means, log_variances, mask)
        for b in range(5):
            experts = [DiagGaussian(means[v, b], log_variances[v, b]) for v in range(3) if mask[v, b]]
            expected = poe_fuse(experts, standard_prior(2))
            self.assertTrue(np.allclose(fused.mean[b].numpy(), expected.mean.numpy()))
            self.assertTrue(np.allclose(fused.log_variance[b].numpy(), expected.log_variance.numpy()))

    def test_masked_ignores_absent(self):
        means = torch.zeros(2, 1, 3, dtype=torch.float64)
        log_variances = torch.zeros(2, 1, 3, dtype=torch.float64)
        mask = torch.tensor([[True], [False]])
        a = poe_fuse_masked(means, log_variances, mask)
        means[1] = 123.0
        log_variances[1] = -7.0
        b = poe_fuse_masked(means, log_variances, mask)
        self.assertTrue(torch.equal(a.mean, b.mean))
        self.assertTrue(torch.equal(a.log_variance, b.log_variance))


class TestPoEOracle(unittest.TestCase):

    def check(self, n_sets, seed):
        rng = np.random.default_rng(seed)
        for _ in range(n_sets):
            k = int(rng.integers(0, 5))
            means = rng.uniform(-3, 3, size=k)
            variances = rng.uniform(0.1, 5, size=k)
            experts = [gaussian([m], [v]) for m, v in zip(means, variances)]
            fused = poe_fuse(experts, standard_prior(1))
            mean, variance = oracle_poe_grid(list(zip(means, variances)), (0.0, 1.0),
                                             grid_bounds=(-30.0, 30.0), grid_points=600001)
            self.assertAlmostEqual(float(fused.mean), mean, delta=1e-6)
            self.assertAlmostEqual(float(fused.variance), variance, delta=1e-6)

    def test_oracle_known_case(self):
        mean, variance = oracle_poe_grid([(1.0, 1.0), (3.0, 1.0)], (0.0, 1.0), grid_bounds=(-15.0, 15.0))
        self.assertAlmostEqual(mean, 4.0 / 3, delta=1e-6)
        self.assertAlmostEqual(variance, 1.0 / 3, delta=1e-6)

    def test_random_sets(self):
        self.check(20, seed=0)

    @unittest.skipUnless(SLOW, "set MVSEMI_SLOW_TESTS to run")
    def test_many_random_sets(self):
        self.check(500, seed=1)


if __name__ == '__main__':
    unittest.main()
