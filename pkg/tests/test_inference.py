"""Tests for the sigma-point measurement update and the LS baseline.

Oracles used here:
  * closed-form Kalman filter for linear measurement maps (the unscented
    transform is exact for linear h);
  * dense grid integration of the true nonlinear posterior;
  * direct trilateration geometry for the LS estimator.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coopnav.errors import InvalidArgumentError, NumericFailureError
from coopnav.inference import (
    DEFAULT_UT,
    LsOptions,
    MeasurementBatch,
    MeasurementEntry,
    UtParams,
    build_stacked_prior,
    generate_sigma_points,
    ls_estimate,
    ls_residual,
    marginalize_position,
    sigma_point_update,
    spbp_update,
)
from coopnav.model import GaussianBelief, symmetrize


def random_spd(rng, n, scale=1.0):
    a = rng.normal(size=(n, n))
    return symmetrize(scale * (a @ a.T + n * np.eye(n)))


class TestSigmaPoints:
    def test_count_and_weights_sum(self):
        rng = np.random.default_rng(0)
        for dim in (1, 2, 3, 6, 9):
            cov = random_spd(rng, dim)
            sp = generate_sigma_points(np.zeros(dim), cov)
            assert sp.points.shape == (2 * dim + 1, dim)
            assert np.isclose(sp.mean_weights.sum(), 1.0)

    def test_reconstructs_mean_and_covariance(self):
        rng = np.random.default_rng(1)
        for dim in (2, 3, 6, 9):
            mean = rng.normal(size=dim)
            cov = random_spd(rng, dim)
            sp = generate_sigma_points(mean, cov)
            rmean = sp.mean_weights @ sp.points
            d = sp.points - mean
            rcov = d.T @ (sp.cov_weights[:, None] * d)
            assert np.allclose(rmean, mean, atol=1e-10)
            assert np.allclose(rcov, cov, atol=1e-8)

    def test_default_scaling_keeps_spread_constant(self):
        # With kappa = 3 - L, the sigma-point spread scale L + lambda is 3.
        for dim in (1, 3, 6, 9):
            assert DEFAULT_UT.lam(dim) + dim == pytest.approx(3.0)

    def test_non_psd_raises_with_min_eigenvalue(self):
        cov = np.diag([1.0, -0.5])
        with pytest.raises(NumericFailureError) as err:
            generate_sigma_points(np.zeros(2), cov)
        assert err.value.min_eigenvalue == pytest.approx(-1.5, rel=1e-6)


class TestLinearExactness:
    @staticmethod
    def kalman(mean, cov, hmat, z, r):
        s = hmat @ cov @ hmat.T + r
        k = cov @ hmat.T @ np.linalg.inv(s)
        post_mean = mean + k @ (z - hmat @ mean)
        post_cov = cov - k @ s @ k.T
        return post_mean, symmetrize(post_cov)

    def test_single_linear_system(self):
        rng = np.random.default_rng(3)
        dim, mdim = 6, 2
        mean = rng.normal(size=dim)
        cov = random_spd(rng, dim)
        hmat = rng.normal(size=(mdim, dim))
        r = random_spd(rng, mdim, 0.1)
        z = rng.normal(size=mdim)
        got_mean, got_cov, _ = sigma_point_update(
            mean, cov, lambda x: hmat @ x, z, r
        )
        want_mean, want_cov = self.kalman(mean, cov, hmat, z, r)
        assert np.allclose(got_mean, want_mean, rtol=1e-9, atol=1e-9)
        assert np.allclose(got_cov, want_cov, rtol=1e-9, atol=1e-9)


class TestGridOracle:
    def test_posterior_position_matches_grid_integration(self):
        # 3-D position prior, two range measurements; integrate the true
        # posterior on a dense grid and compare first two moments.
        prior_mean = np.array([1.0, 2.0, 0.5, 0.0, 0.0, 0.0])
        prior_cov = np.diag([0.25, 0.25, 0.09, 0.01, 0.01, 0.01])
        anchors = [np.array([0.0, 0.0, 0.0]), np.array([4.0, 0.0, 1.0])]
        truth = np.array([1.2, 2.2, 0.6])
        var = 0.02**2
        zs = [float(np.linalg.norm(truth - a)) for a in anchors]

        entries = tuple(
            MeasurementEntry(i, zs[i], var, anchors[i], np.zeros((3, 3)))
            for i in range(2)
        )
        prior = GaussianBelief(prior_mean, prior_cov)
        post = spbp_update(prior, MeasurementBatch(entries))
        mu_p, c_p = marginalize_position(post)

        # Grid integration oracle over the position block.
        n = 61
        axes = [
            np.linspace(prior_mean[i] - 2.0, prior_mean[i] + 2.0, n) for i in range(3)
        ]
        gx, gy, gz = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([gx, gy, gz], axis=-1)
        logp = np.zeros(pts.shape[:3])
        for i in range(3):
            logp -= (pts[..., i] - prior_mean[i]) ** 2 / (2 * prior_cov[i, i])
        for a, z in zip(anchors, zs):
            d = np.linalg.norm(pts - a, axis=-1)
            logp -= (d - z) ** 2 / (2 * var)
        w = np.exp(logp - logp.max())
        w /= w.sum()
        grid_mean = np.array([(w * pts[..., i]).sum() for i in range(3)])

        assert np.linalg.norm(mu_p - grid_mean) < 0.15
        assert np.all(np.diag(c_p) > 0)


class TestSpbpUpdate:
    def _batch(self, rng, n):
        entries = []
        for i in range(n):
            anchor = rng.uniform(-5, 5, size=3)
            entries.append(
                MeasurementEntry(
                    i, float(rng.uniform(1, 10)), 0.01, anchor, np.zeros((3, 3))
                )
            )
        return MeasurementBatch(tuple(entries))

    def test_empty_batch_rejected(self):
        prior = GaussianBelief(np.zeros(6), np.eye(6))
        with pytest.raises(InvalidArgumentError):
            spbp_update(prior, MeasurementBatch(()))

    def test_duplicate_neighbors_rejected(self):
        e = MeasurementEntry(1, 5.0, 0.01, np.zeros(3), np.zeros((3, 3)))
        with pytest.raises(InvalidArgumentError):
            MeasurementBatch((e, e))

    def test_stacked_prior_block_diagonal(self):
        rng = np.random.default_rng(4)
        prior = GaussianBelief(rng.normal(size=6), random_spd(rng, 6))
        batch = self._batch(rng, 3)
        stacked = build_stacked_prior(prior, batch)
        assert stacked.dim == 6 + 9
        assert np.allclose(stacked.covariance[:6, :6], prior.covariance)
        assert np.allclose(stacked.covariance[:6, 6:], 0.0)
        for i, e in enumerate(batch.entries):
            blk = slice(6 + 3 * i, 9 + 3 * i)
            assert np.allclose(stacked.covariance[blk, blk], e.c_p)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(5)
        prior = GaussianBelief(rng.normal(size=6), random_spd(rng, 6))
        batch = self._batch(rng, 4)
        fwd = spbp_update(prior, batch)
        rev = spbp_update(prior, MeasurementBatch(tuple(reversed(batch.entries))))
        assert np.allclose(fwd.mean, rev.mean, atol=1e-9)
        assert np.allclose(fwd.covariance, rev.covariance, atol=1e-9)

    def test_anchor_folding_reduces_uncertainty(self):
        # Measuring a perfectly known anchor shrinks position uncertainty.
        prior = GaussianBelief(
            np.array([1.0, 1.0, 1.0, 0, 0, 0]), np.diag([1, 1, 1, 0.1, 0.1, 0.1])
        )
        anchor = np.array([4.0, 1.0, 1.0])
        z = 4.0  # prior says 3.0: clearly inconsistent, the update must correct
        e = MeasurementEntry(0, z, 0.001, anchor, np.zeros((3, 3)))
        post = spbp_update(prior, MeasurementBatch((e,)))
        assert np.trace(post.covariance[:3, :3]) < np.trace(prior.covariance[:3, :3])
        # mean moves toward satisfying the range
        d_post = abs(np.linalg.norm(post.mean[:3] - anchor) - z)
        d_prior = abs(np.linalg.norm(prior.mean[:3] - anchor) - z)
        assert d_post < d_prior

    def test_uncertain_neighbor_weakens_update(self):
        prior = GaussianBelief(
            np.array([1.0, 1.0, 1.0, 0, 0, 0]), np.diag([1, 1, 1, 0.1, 0.1, 0.1])
        )
        anchor = np.array([4.0, 1.0, 1.0])
        precise = MeasurementEntry(0, 3.1, 0.001, anchor, np.zeros((3, 3)))
        vague = MeasurementEntry(0, 3.1, 0.001, anchor, 0.5 * np.eye(3))
        t_precise = np.trace(
            spbp_update(prior, MeasurementBatch((precise,))).covariance[:3, :3]
        )
        t_vague = np.trace(
            spbp_update(prior, MeasurementBatch((vague,))).covariance[:3, :3]
        )
        assert t_precise < t_vague


class TestLs:
    def test_recovers_position_from_exact_ranges(self):
        truth = np.array([2.0, 3.0, 1.0])
        anchors = [
            np.array([0.0, 0.0, 0.0]),
            np.array([5.0, 0.0, 2.0]),
            np.array([0.0, 6.0, 0.5]),
            np.array([5.0, 6.0, 0.0]),  # not coplanar with the others
        ]
        entries = tuple(
            MeasurementEntry(i, float(np.linalg.norm(truth - a)), 0.01, a, np.zeros((3, 3)))
            for i, a in enumerate(anchors)
        )
        est = ls_estimate(truth + 0.5, MeasurementBatch(entries))
        assert np.linalg.norm(est - truth) < 1e-2

    def test_residual_decreases(self):
        truth = np.array([2.0, 3.0, 1.0])
        anchors = [np.array([0.0, 0.0, 0.0]), np.array([5.0, 0.0, 2.0]),
                   np.array([0.0, 6.0, 0.5])]
        entries = tuple(
            MeasurementEntry(i, float(np.linalg.norm(truth - a)), 0.01, a, np.zeros((3, 3)))
            for i, a in enumerate(anchors)
        )
        batch = MeasurementBatch(entries)
        start = truth + np.array([0.8, -0.6, 0.3])
        est = ls_estimate(start, batch)
        assert ls_residual(est, batch) < ls_residual(start, batch)

    def test_empty_batch_rejected(self):
        with pytest.raises(InvalidArgumentError):
            ls_estimate(np.zeros(3), MeasurementBatch(()))


@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_posterior_covariance_psd(n, seed):
    rng = np.random.default_rng(seed)
    prior = GaussianBelief(rng.normal(size=6), random_spd(rng, 6))
    entries = tuple(
        MeasurementEntry(
            i,
            float(rng.uniform(0.5, 15)),
            float(rng.uniform(1e-4, 1.0)),
            rng.uniform(-10, 10, size=3),
            np.zeros((3, 3)),
        )
        for i in range(n)
    )
    post = spbp_update(prior, MeasurementBatch(entries))
    assert post.is_psd()
