"""Subspace-attention embedder tests: attention contracts, degenerate
cases forced by the formulas, and gradient checks on both loss heads."""

import numpy as np
import pytest

from stylefit import autodiff as ad
from stylefit import subspace as sub
from stylefit.autodiff import Tensor

from helpers import check_gradients

CFG = sub.EmbedderConfig(
    feature_dim=10, embed_dim=12, n_categories=4, style_dim=6,
    proj_dim=8, attn_hidden=8, subspaces=5,
)


@pytest.fixture
def embedder():
    return sub.SubspaceEmbedder.create(CFG, np.random.default_rng(0))


def make_query(rng, item_cat=0, target_cat=1, style=None):
    return sub.EmbeddingQuery(
        features=rng.standard_normal(CFG.feature_dim),
        item_category=item_cat,
        target_category=target_cat,
        style_vector=style if style is not None else rng.standard_normal(CFG.style_dim),
    )


class TestEmbed:
    def test_attention_weights_sum_to_one(self, embedder):
        rng = np.random.default_rng(1)
        for _ in range(20):
            q = make_query(rng, int(rng.integers(4)), int(rng.integers(4)))
            w = sub.attention_weights(q, embedder.params, CFG).data
            assert w.shape == (1, CFG.subspaces)
            assert abs(w.sum() - 1.0) <= 1e-9
            assert np.all(w >= 0)

    def test_equal_masks_make_attention_irrelevant(self, embedder):
        rng = np.random.default_rng(2)
        embedder.params["masks"] = Tensor(
            np.tile(np.linspace(0.5, 1.5, CFG.embed_dim), (CFG.subspaces, 1)),
            requires_grad=True,
        )
        feats = rng.standard_normal(CFG.feature_dim)
        outs = []
        for target in range(CFG.n_categories):
            for _ in range(3):
                q = sub.EmbeddingQuery(feats, 0, target, rng.standard_normal(CFG.style_dim))
                outs.append(embedder.embed(q))
        for o in outs[1:]:
            np.testing.assert_allclose(o, outs[0], atol=1e-12)

    def test_style_changes_weights_not_masked_embeddings(self, embedder):
        rng = np.random.default_rng(3)
        feats = rng.standard_normal(CFG.feature_dim)
        q1 = sub.EmbeddingQuery(feats, 0, 1, rng.standard_normal(CFG.style_dim))
        q2 = sub.EmbeddingQuery(feats, 0, 1, rng.standard_normal(CFG.style_dim))
        masked1 = sub.masked_embeddings(q1.features, embedder.params, CFG).data
        masked2 = sub.masked_embeddings(q2.features, embedder.params, CFG).data
        assert np.array_equal(masked1, masked2)
        w1 = sub.attention_weights(q1, embedder.params, CFG).data
        w2 = sub.attention_weights(q2, embedder.params, CFG).data
        assert not np.array_equal(w1, w2)

    def test_swapping_categories_changes_weights(self, embedder):
        rng = np.random.default_rng(4)
        style = rng.standard_normal(CFG.style_dim)
        feats = rng.standard_normal(CFG.feature_dim)
        w_forward = sub.attention_weights(
            sub.EmbeddingQuery(feats, 0, 2, style), embedder.params, CFG
        ).data
        w_swapped = sub.attention_weights(
            sub.EmbeddingQuery(feats, 2, 0, style), embedder.params, CFG
        ).data
        assert not np.array_equal(w_forward, w_swapped)

    def test_deterministic(self, embedder):
        rng = np.random.default_rng(5)
        q = make_query(rng)
        np.testing.assert_array_equal(embedder.embed(q), embedder.embed(q))

    def test_invalid_category_rejected(self, embedder):
        rng = np.random.default_rng(6)
        q = make_query(rng, item_cat=7)
        with pytest.raises(ad.ContractError):
            embedder.embed(q)

    def test_embedding_gradients(self, embedder):
        rng = np.random.default_rng(7)
        q = make_query(rng)
        weights = Tensor(rng.standard_normal(CFG.embed_dim))
        names = sorted(embedder.params)

        def loss():
            e = sub.embed(q, embedder.params, CFG)
            return ad.sum_(ad.mul(e, weights))

        check_gradients(loss, [embedder.params[n] for n in names], rtol=1e-4)


class TestTripletLoss:
    def test_identical_positive_negative_gives_margin(self, embedder):
        rng = np.random.default_rng(8)
        a = make_query(rng, 0, 1)
        p = make_query(rng, 1, 0, style=a.style_vector)
        n = sub.EmbeddingQuery(p.features, p.item_category, p.target_category, a.style_vector)
        loss = sub.triplet_compat_loss(a, p, n, 0.2, embedder.params, CFG)
        assert loss.item() == pytest.approx(0.2, abs=1e-12)

    def test_inactive_hinge_is_zero(self, embedder):
        rng = np.random.default_rng(9)
        a = make_query(rng, 0, 1)
        p = sub.EmbeddingQuery(a.features, 1, 0, a.style_vector)  # same features: d_ap small
        n = make_query(rng, 1, 0, style=a.style_vector)
        e_a = embedder.embed(a)
        e_p = embedder.embed(p)
        e_n = embedder.embed(n)
        d_ap = float(((e_a - e_p) ** 2).sum())
        d_an = float(((e_a - e_n) ** 2).sum())
        assert d_ap + 0.05 <= d_an, "fixture must make the hinge inactive"
        loss = sub.triplet_compat_loss(a, p, n, 0.05, embedder.params, CFG)
        assert loss.item() == 0.0

    def test_gradients(self, embedder):
        rng = np.random.default_rng(10)
        a = make_query(rng, 0, 1)
        p = make_query(rng, 1, 0, style=a.style_vector)
        n = make_query(rng, 1, 0, style=a.style_vector)
        e_a, e_p, e_n = (embedder.embed(q) for q in (a, p, n))
        # margin chosen from the actual gap so the hinge stays active
        margin = float(((e_a - e_n) ** 2).sum() - ((e_a - e_p) ** 2).sum()) + 1.0
        active = sub.triplet_compat_loss(a, p, n, margin, embedder.params, CFG)
        assert active.item() > 0.0
        names = sorted(embedder.params)
        check_gradients(
            lambda: sub.triplet_compat_loss(a, p, n, margin, embedder.params, CFG),
            [embedder.params[n_] for n_ in names],
            rtol=1e-4,
        )


class TestWrongStyleLoss:
    def test_identical_style_rejected(self, embedder):
        rng = np.random.default_rng(11)
        a = make_query(rng, 0, 1)
        p = sub.EmbeddingQuery(rng.standard_normal(CFG.feature_dim), 1, 0, a.style_vector)
        with pytest.raises(ad.ContractError):
            sub.wrong_style_loss(a, p, np.array(a.style_vector), 0.2, embedder.params, CFG)

    def test_style_blind_embedder_pays_full_margin(self, embedder):
        # zero style projector: embeddings identical under any style vector
        embedder.params["styleproj.W"] = Tensor(
            np.zeros((CFG.style_dim, CFG.proj_dim)), requires_grad=True
        )
        embedder.params["styleproj.b"] = Tensor(np.zeros(CFG.proj_dim), requires_grad=True)
        rng = np.random.default_rng(12)
        a = make_query(rng, 0, 1)
        p = make_query(rng, 1, 0, style=a.style_vector)
        wrong = rng.standard_normal(CFG.style_dim)
        loss = sub.wrong_style_loss(a, p, wrong, 0.3, embedder.params, CFG)
        assert loss.item() == pytest.approx(0.3, abs=1e-12)

    def test_gradients(self, embedder):
        rng = np.random.default_rng(13)
        a = make_query(rng, 0, 1)
        p = make_query(rng, 1, 0, style=a.style_vector)
        wrong = rng.standard_normal(CFG.style_dim)
        active = sub.wrong_style_loss(a, p, wrong, 5.0, embedder.params, CFG)
        assert active.item() > 0.0
        names = sorted(embedder.params)
        check_gradients(
            lambda: sub.wrong_style_loss(a, p, wrong, 5.0, embedder.params, CFG),
            [embedder.params[n] for n in names],
            rtol=1e-4,
        )


class TestTrainedModelContracts:
    """Contracts that only bite on a trained, non-degenerate model."""

    def test_category_swap_changes_argmax_subspace_somewhere(self, world, trained):
        # existence, not universality: some query must route to a different
        # dominant subspace when item/target categories are swapped
        vocab = world["vocab"]
        emb = trained["embedder"]
        pooled = trained["pooled"]
        found = False
        for style in sorted(pooled):
            z = pooled[style].pooled_mu
            for item in world["catalog"].items[:40]:
                for target in range(len(vocab.categories)):
                    if target == item.coarse_category:
                        continue
                    w_fwd = sub.attention_weights(
                        sub.EmbeddingQuery(item.features, item.coarse_category, target, z),
                        emb.params, emb.config,
                    ).data
                    w_swp = sub.attention_weights(
                        sub.EmbeddingQuery(item.features, target, item.coarse_category, z),
                        emb.params, emb.config,
                    ).data
                    if int(np.argmax(w_fwd)) != int(np.argmax(w_swp)):
                        found = True
                        break
                if found:
                    break
            if found:
                break
        assert found

    def test_outputs_finite_for_entire_catalog(self, world, trained):
        vocab = world["vocab"]
        emb = trained["embedder"]
        pooled = trained["pooled"]
        feats = np.stack([it.features for it in world["catalog"].items])
        cats = np.array([it.coarse_category for it in world["catalog"].items])
        for style in sorted(pooled):
            z = pooled[style].pooled_mu
            for item_cat in range(len(vocab.categories)):
                rows = feats[cats == item_cat]
                for target in range(len(vocab.categories)):
                    if target == item_cat:
                        continue
                    out = emb.embed_slice(rows, item_cat, target, z)
                    assert np.all(np.isfinite(out))


class TestBundle:
    def test_checkpoint_round_trip(self, tmp_path, embedder):
        path = tmp_path / "emb.json"
        embedder.save(path)
        loaded = sub.SubspaceEmbedder.load(path)
        assert loaded.config == CFG
        assert loaded.checksum() == embedder.checksum()

    def test_finite_outputs_for_catalog_scale_batch(self, embedder):
        rng = np.random.default_rng(14)
        for _ in range(200):
            q = make_query(rng, int(rng.integers(4)), int(rng.integers(4)))
            out = embedder.embed(q)
            assert np.all(np.isfinite(out))
