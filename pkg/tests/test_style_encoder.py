"""Variational set-encoder tests: permutation invariance, reparameterization,
the KL closed form against numerical quadrature, and gradient checks."""

import numpy as np
import pytest

from stylefit import autodiff as ad
from stylefit import style_encoder as se
from stylefit.autodiff import Tape, Tensor

from helpers import check_gradients, kl_quadrature

TINY = se.EncoderConfig(
    feature_dim=6, hidden=8, style_dim=4, blocks=1, attn_heads=2,
    classifier_hidden=5, n_styles=3,
)


@pytest.fixture
def tiny_encoder():
    return se.StyleEncoder.create(TINY, np.random.default_rng(0))


class TestEncode:
    def test_permutation_invariance_bitwise(self, tiny_encoder):
        rng = np.random.default_rng(1)
        feats = rng.standard_normal((5, TINY.feature_dim))
        g1 = tiny_encoder.encode(feats)
        for seed in range(5):
            perm = np.random.default_rng(seed).permutation(5)
            g2 = tiny_encoder.encode(feats[perm])
            assert np.array_equal(g1.mu.data, g2.mu.data)
            assert np.array_equal(g1.log_var.data, g2.log_var.data)

    def test_variable_set_sizes(self, tiny_encoder):
        rng = np.random.default_rng(2)
        for n in range(1, 11):
            g = tiny_encoder.encode(rng.standard_normal((n, TINY.feature_dim)))
            assert g.mu.shape == (TINY.style_dim,)
            assert np.all(np.isfinite(g.mu.data))
            assert np.all(np.isfinite(g.log_var.data))

    def test_empty_set_rejected(self, tiny_encoder):
        with pytest.raises(ad.ContractError):
            tiny_encoder.encode(np.zeros((0, TINY.feature_dim)))

    def test_wrong_feature_dim_rejected(self, tiny_encoder):
        with pytest.raises(ad.ShapeError):
            tiny_encoder.encode(np.zeros((3, TINY.feature_dim + 1)))

    def test_gradients_of_mu_through_full_encoder(self, tiny_encoder):
        rng = np.random.default_rng(3)
        feats = rng.standard_normal((3, TINY.feature_dim))
        weights = rng.standard_normal(TINY.style_dim)
        params = tiny_encoder.params
        names = sorted(params)

        def loss():
            g = se.encode(feats, params, TINY)
            return ad.sum_(ad.mul(g.mu, Tensor(weights)))

        check_gradients(loss, [params[n] for n in names], rtol=1e-4)

    def test_gradients_of_log_var_heads(self, tiny_encoder):
        rng = np.random.default_rng(4)
        feats = rng.standard_normal((4, TINY.feature_dim))
        params = tiny_encoder.params

        def loss():
            g = se.encode(feats, params, TINY)
            return ad.mean(g.log_var)

        check_gradients(loss, [params["logvar.W"], params["logvar.b"]], rtol=1e-4)


class TestReparameterize:
    def test_collapse_when_variance_vanishes(self):
        mu = Tensor(np.array([0.3, -1.2, 0.0, 2.0]))
        log_var = Tensor(np.full(4, -30.0))
        sample = se.reparameterize(se.StyleGaussian(mu, log_var), np.random.default_rng(0))
        np.testing.assert_allclose(sample.z.data, mu.data, atol=1e-6)

    def test_monte_carlo_mean(self):
        rng = np.random.default_rng(5)
        mu = np.array([0.5, -0.25, 1.0, 0.0])
        log_var = np.array([0.2, -0.5, 0.0, 0.4])
        g = se.StyleGaussian(Tensor(mu), Tensor(log_var))
        n = 100_000
        draws = np.stack([se.reparameterize(g, rng).z.data for _ in range(n)])
        sigma = np.exp(0.5 * log_var)
        np.testing.assert_array_less(
            np.abs(draws.mean(axis=0) - mu), 3.0 * sigma / np.sqrt(n)
        )

    def test_fixed_seed_reproducible(self):
        g = se.StyleGaussian(Tensor(np.zeros(4)), Tensor(np.zeros(4)))
        z1 = se.reparameterize(g, np.random.default_rng(7)).z.data
        z2 = se.reparameterize(g, np.random.default_rng(7)).z.data
        np.testing.assert_array_equal(z1, z2)

    def test_differentiable_through_sample(self):
        rng = np.random.default_rng(6)
        mu = Tensor(rng.standard_normal(4), requires_grad=True)
        log_var = Tensor(rng.standard_normal(4) * 0.3, requires_grad=True)
        eps_rng_seed = 11

        def loss():
            g = se.StyleGaussian(mu, log_var)
            sample = se.reparameterize(g, np.random.default_rng(eps_rng_seed))
            return ad.sum_(ad.mul(sample.z, sample.z))

        check_gradients(loss, [mu, log_var], rtol=1e-4)


class TestKl:
    def test_zero_at_unit_gaussian(self):
        g = se.StyleGaussian(Tensor(np.zeros(64)), Tensor(np.zeros(64)))
        assert se.kl_to_unit(g).item() == 0.0

    def test_closed_form_mu_ones(self):
        g = se.StyleGaussian(Tensor(np.ones(64)), Tensor(np.zeros(64)))
        assert se.kl_to_unit(g).item() == pytest.approx(32.0, abs=1e-12)

    def test_nonnegative_random(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            g = se.StyleGaussian(
                Tensor(rng.standard_normal(16) * 2),
                Tensor(rng.standard_normal(16)),
            )
            assert se.kl_to_unit(g).item() >= 0.0

    def test_zero_only_at_origin(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            mu = rng.standard_normal(8) * 0.5
            lv = rng.standard_normal(8) * 0.5
            if np.allclose(mu, 0) and np.allclose(lv, 0):
                continue
            g = se.StyleGaussian(Tensor(mu), Tensor(lv))
            assert se.kl_to_unit(g).item() > 0.0

    def test_matches_quadrature_2d(self):
        rng = np.random.default_rng(10)
        for _ in range(5):
            mu = rng.standard_normal(2)
            log_var = rng.standard_normal(2) * 0.8
            g = se.StyleGaussian(Tensor(mu), Tensor(log_var))
            closed = se.kl_to_unit(g).item()
            numeric = kl_quadrature(mu, log_var)
            assert closed == pytest.approx(numeric, abs=1e-6)

    def test_gradients(self):
        rng = np.random.default_rng(11)
        mu = Tensor(rng.standard_normal(6), requires_grad=True)
        lv = Tensor(rng.standard_normal(6) * 0.5, requires_grad=True)
        check_gradients(lambda: se.kl_to_unit(se.StyleGaussian(mu, lv)), [mu, lv], rtol=1e-4)


class TestClassifier:
    def test_zero_weights_give_uniform(self):
        params = {
            "cls.W1": Tensor(np.zeros((4, 5)), requires_grad=True),
            "cls.b1": Tensor(np.zeros(5), requires_grad=True),
            "cls.W2": Tensor(np.zeros((5, 3)), requires_grad=True),
            "cls.b2": Tensor(np.zeros(3), requires_grad=True),
        }
        logits = se.classify_style(Tensor(np.array([1.0, -2.0, 0.5, 3.0])), params)
        probs = ad.softmax(logits, axis=0).data
        np.testing.assert_allclose(probs, np.full(3, 1 / 3), atol=1e-15)

    @pytest.mark.parametrize("n_styles", [2, 3, 7, 11])
    def test_logit_length_matches_vocabulary(self, n_styles):
        config = se.EncoderConfig(
            feature_dim=6, hidden=8, style_dim=4, classifier_hidden=5, n_styles=n_styles
        )
        enc = se.StyleEncoder.create(config, np.random.default_rng(0))
        logits = enc.classify(Tensor(np.zeros(4)))
        assert logits.shape == (n_styles,)

    def test_cross_entropy_matches_manual(self):
        logits = Tensor(np.array([2.0, -1.0, 0.5]))
        ce = se.cross_entropy(logits, 0).item()
        probs = np.exp(logits.data) / np.exp(logits.data).sum()
        assert ce == pytest.approx(-np.log(probs[0]), abs=1e-12)

    def test_cross_entropy_gradient(self):
        rng = np.random.default_rng(12)
        x = Tensor(rng.standard_normal(5), requires_grad=True)
        check_gradients(lambda: se.cross_entropy(x, 2), [x], rtol=1e-4)


class TestBundle:
    def test_checkpoint_round_trip(self, tmp_path, tiny_encoder):
        path = tmp_path / "enc.json"
        tiny_encoder.save(path)
        loaded = se.StyleEncoder.load(path)
        assert loaded.config == TINY
        assert loaded.checksum() == tiny_encoder.checksum()
        feats = np.random.default_rng(1).standard_normal((3, TINY.feature_dim))
        np.testing.assert_array_equal(
            loaded.encode(feats).mu.data, tiny_encoder.encode(feats).mu.data
        )

    def test_freeze_marks_not_trainable(self, tiny_encoder):
        se.freeze(tiny_encoder.params)
        assert all(not t.requires_grad for t in tiny_encoder.params.values())

    def test_frozen_inference_records_nothing_without_tape(self, tiny_encoder):
        feats = np.random.default_rng(2).standard_normal((3, TINY.feature_dim))
        with Tape() as tape:
            pass  # encoding happens outside the tape
        tiny_encoder.encode(feats)
        assert len(tape) == 0

    def test_frozen_inference_safe_across_threads(self, tiny_encoder):
        from concurrent.futures import ThreadPoolExecutor

        se.freeze(tiny_encoder.params)
        rng = np.random.default_rng(3)
        batches = [rng.standard_normal((4, TINY.feature_dim)) for _ in range(16)]
        expected = [tiny_encoder.encode(f).mu.data for f in batches]
        with ThreadPoolExecutor(max_workers=8) as pool:
            got = list(pool.map(lambda f: tiny_encoder.encode(f).mu.data, batches))
        for e, g in zip(expected, got):
            np.testing.assert_array_equal(e, g)
