import numpy as np
import pytest
from conftest import rel_err, subspace_dist

from rgntensor.initialization import (
    completion_init,
    random_init,
    spectral_init_regression,
    spectral_init_svd,
)
from rgntensor.measurement import (
    Completion,
    Identity,
    completion_sample,
    gaussian_ensemble,
)
from rgntensor.rgn import rgn_solve
from rgntensor.tensor import matricize, vec
from rgntensor.tucker import random_tucker, t_hosvd, tucker_rank


def scaled_to_lambda(x, lam):
    """Rescale a dense tensor so its smallest leading mode singular value equals lam."""
    smin = min(np.linalg.svd(matricize(x, k), compute_uv=False)[r - 1]
               for k, r in enumerate(tucker_rank(x)))
    return x * (lam / smin)


class TestSpectralRegression:
    def test_identity_is_t_hosvd(self, rng):
        Y = rng.standard_normal((5, 6, 4))
        x = spectral_init_regression(vec(Y), Identity(Y.shape), (2, 2, 2))
        assert np.array_equal(x.to_dense(), t_hosvd(Y, (2, 2, 2)).to_dense())

    def test_zero_data(self):
        ens = gaussian_ensemble(20, (4, 4, 4), seed=0)
        with pytest.warns(RuntimeWarning):
            x = spectral_init_regression(np.zeros(20), ens, (1, 1, 1))
        assert not np.any(x.to_dense())

    def test_scale_free_subspaces(self, rng):
        truth = random_tucker((6, 6, 6), (2, 2, 2), rng)
        a = gaussian_ensemble(300, truth.shape, seed=1)
        b = gaussian_ensemble(300, truth.shape, variance=1 / 300, seed=1)
        xa = spectral_init_regression(a.apply(truth.to_dense()), a, truth.rank)
        xb = spectral_init_regression(b.apply(truth.to_dense()), b, truth.rank)
        assert rel_err(xa.to_dense(), xb.to_dense()) <= 1e-10

    def test_monte_carlo_quality(self):
        """Noiseless, 1/n variance, p=20, r=2, n = 8 p^(3/2) r: init error < 0.5 in 45 of 50 seeds."""
        p, r = 20, 2
        n = int(np.ceil(8 * p ** 1.5 * r))
        good = 0
        for seed in range(50):
            rng = np.random.default_rng(seed)
            truth = random_tucker((p,) * 3, (r,) * 3, rng)
            ens = gaussian_ensemble(n, truth.shape, variance=1 / n, seed=rng)
            x = spectral_init_regression(ens.apply(truth.to_dense()), ens, truth.rank)
            good += rel_err(x.to_dense(), truth.to_dense()) < 0.5
        assert good >= 45


class TestSpectralSvd:
    def test_exact(self, rng):
        x = random_tucker((7, 6, 5), (2, 3, 2), rng).to_dense()
        assert rel_err(spectral_init_svd(x, (2, 3, 2)).to_dense(), x) <= 1e-12

    def test_monte_carlo_quality(self):
        """p=30, r=2, sigma=1, lambda_min = 30 p^(3/4): init error < 0.1 ||X*|| in 45 of 50 seeds."""
        p, r = 30, 2
        good = 0
        for seed in range(50):
            rng = np.random.default_rng(seed)
            xs = scaled_to_lambda(random_tucker((p,) * 3, (r,) * 3, rng).to_dense(), 30 * p ** 0.75)
            Y = xs + rng.standard_normal(xs.shape)
            good += rel_err(spectral_init_svd(Y, (r,) * 3).to_dense(), xs) < 0.1
        assert good >= 45

    def test_permutation_consistent(self, rng):
        Y = rng.standard_normal((4, 5, 6))
        perm = (2, 0, 1)
        a = spectral_init_svd(Y, (2, 3, 2)).to_dense()
        b = spectral_init_svd(np.transpose(Y, perm), (2, 2, 3)).to_dense()
        assert rel_err(np.transpose(a, perm), b) <= 1e-12


class TestCompletionInit:
    def test_full_observation_matches_t_hosvd(self):
        # Hadamard factors and a superdiagonal core make the removed Gram diagonal a
        # multiple of the identity, so the eigenvectors are untouched by the removal.
        from scipy.linalg import hadamard
        p, r = 8, 2
        u = hadamard(p)[:, 1:1 + r] / np.sqrt(p)
        core = np.zeros((r, r, r))
        core[np.arange(r), np.arange(r), np.arange(r)] = [3.0, 2.0]
        x = t_hosvd(np.einsum("abc,ia,jb,kc->ijk", core, u, u, u), (r, r, r)).to_dense()
        idx = np.array(np.unravel_index(np.arange(x.size), x.shape)).T
        ens = Completion(idx, x.shape)
        z = completion_init(ens, ens.apply(x), (r, r, r))
        ref = t_hosvd(x, (r, r, r))
        for a, b in zip(z.factors, ref.factors):
            assert subspace_dist(a, b) <= 1e-6
        assert rel_err(z.to_dense(), x) <= 1e-10

    def test_full_observation_generic_gap(self, rng):
        # generic factors: the diagonal removal costs O(r/p) in subspace distance
        x = random_tucker((60, 60, 60), (2, 2, 2), rng).to_dense()
        idx = np.array(np.unravel_index(np.arange(x.size), x.shape)).T
        ens = Completion(idx, x.shape)
        z = completion_init(ens, ens.apply(x), (2, 2, 2))
        for a, b in zip(z.factors, t_hosvd(x, (2, 2, 2)).factors):
            assert subspace_dist(a, b) <= 0.5

    def test_zero_values(self):
        ens = completion_sample(40, (5, 5, 5), seed=0)
        z = completion_init(ens, np.zeros(40), (2, 2, 2))
        assert not np.any(z.to_dense())
        for u in z.factors:
            np.testing.assert_allclose(u.T @ u, np.eye(2), atol=1e-12)

    def test_validation(self):
        ens = completion_sample(10, (3, 3, 3), seed=0)
        with pytest.raises(TypeError):
            completion_init(gaussian_ensemble(10, (3, 3, 3)), np.zeros(10), (1, 1, 1))
        with pytest.raises(ValueError):
            completion_init(ens, np.zeros(10), (1, 1, 1), rho=0.0)
        with pytest.raises(ValueError):
            Completion(np.zeros((0, 3), dtype=int), (3, 3, 3))

    def test_end_to_end(self):
        """p=50, r=3, 30% observed, noiseless: RGN from this start goes below 1e-12."""
        p, r = 50, 3
        rng = np.random.default_rng(0)
        truth = random_tucker((p,) * 3, (r,) * 3, rng)
        ens = completion_sample(int(0.3 * p ** 3), truth.shape, seed=rng)
        y = ens.apply(truth.to_dense())
        x0 = completion_init(ens, y, truth.rank)
        _, tr = rgn_solve(y, ens, truth.rank, x0, truth=truth.to_dense())
        assert tr.rel_rmse[-1] < 1e-12


class TestRandomInit:
    def test_reproducible_and_valid(self):
        a, b = random_init((5, 6, 7), (2, 3, 2), seed=3), random_init((5, 6, 7), (2, 3, 2), seed=3)
        assert np.array_equal(a.to_dense(), b.to_dense())
        for u in a.factors:
            np.testing.assert_allclose(u.T @ u, np.eye(u.shape[1]), atol=1e-12)
        assert tucker_rank(a.to_dense()) == (2, 3, 2)
        assert not np.array_equal(random_init((5, 6, 7), (2, 3, 2), seed=4).core, a.core)

    @pytest.mark.slow
    def test_convergence_from_random_start(self):
        """p=30, r=3, n = 8 p^(3/2) r: RGN from a random start reaches 1e-12 in 35 of 50 seeds."""
        p, r = 30, 3
        n = int(round(8 * p ** 1.5 * r))
        good = 0
        for seed in range(50):
            rng = np.random.default_rng(seed)
            truth = random_tucker((p,) * 3, (r,) * 3, rng)
            ens = gaussian_ensemble(n, truth.shape, seed=rng)
            x0 = random_init(truth.shape, truth.rank, seed=rng)
            _, tr = rgn_solve(ens.apply(truth.to_dense()), ens, truth.rank, x0, truth=truth.to_dense())
            good += tr.rel_rmse[-1] < 1e-12
        print(f"random start converged in {good}/50 seeds")
        assert good >= 35
