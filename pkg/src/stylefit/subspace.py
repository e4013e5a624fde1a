"""Subspace-attention item embedder: maps an item's raw features to a
final embedding conditioned on (item category, target category, style
vector). Five learned masks carve the backbone embedding into
compatibility subspaces; a small attention net, fed the one-hot category
pair and the style vector, softmax-weights the masked embeddings.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

N_SUBSPACES = 5


@dataclass
class EmbedderConfig:
    feature_dim: int = 64
    embed_dim: int = 64
    n_categories: int = 5
    style_dim: int = 64
    proj_dim: int = 32
    attn_hidden: int = 32
    subspaces: int = N_SUBSPACES
    margin: float = 0.2
    margin_s: float = 0.2

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EmbedderConfig":
        return cls(**d)


@dataclass
class EmbeddingQuery:
    """One embedding request: which item, seen from which category pair,
    under which style vector."""

    features: np.ndarray
    item_category: int
    target_category: int
    style_vector: np.ndarray | Tensor


def init_params(config: EmbedderConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    p: dict[str, Tensor] = {}

    def glorot(fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return Tensor(rng.uniform(-limit, limit, size=(fan_in, fan_out)), requires_grad=True)

    def zeros(n):
        return Tensor(np.zeros(n), requires_grad=True)

    p["backbone.W"] = glorot(config.feature_dim, config.embed_dim)
    p["backbone.b"] = zeros(config.embed_dim)
    # masks start near one so all subspaces initially pass the embedding through
    p["masks"] = Tensor(
        1.0 + 0.1 * rng.standard_normal((config.subspaces, config.embed_dim)),
        requires_grad=True,
    )
    p["catproj.W"] = glorot(2 * config.n_categories, config.proj_dim)
    p["catproj.b"] = zeros(config.proj_dim)
    p["styleproj.W"] = glorot(config.style_dim, config.proj_dim)
    p["styleproj.b"] = zeros(config.proj_dim)
    p["attn.W1"] = glorot(2 * config.proj_dim, config.attn_hidden)
    p["attn.b1"] = zeros(config.attn_hidden)
    p["attn.W2"] = glorot(config.attn_hidden, config.subspaces)
    p["attn.b2"] = zeros(config.subspaces)
    return p


def _category_onehot(item_cat: int, target_cat: int, n_categories: int) -> np.ndarray:
    for cat in (item_cat, target_cat):
        if not 0 <= cat < n_categories:
            raise ad.ContractError(
                f"category index {cat} outside vocabulary of size {n_categories}"
            )
    v = np.zeros((1, 2 * n_categories))
    v[0, item_cat] = 1.0
    v[0, n_categories + target_cat] = 1.0
    return v


def attention_weights(q: EmbeddingQuery, params, config: EmbedderConfig) -> Tensor:
    """Softmax weights over the subspaces for one query, shape (1, K)."""
    onehot = Tensor(_category_onehot(q.item_category, q.target_category, config.n_categories))
    cat32 = ad.linear(onehot, params["catproj.W"], params["catproj.b"])
    style = q.style_vector if isinstance(q.style_vector, Tensor) else Tensor(q.style_vector)
    style_row = ad.reshape(style, (1, config.style_dim))
    sty32 = ad.linear(style_row, params["styleproj.W"], params["styleproj.b"])
    joint = ad.concat([cat32, sty32], axis=1)
    hidden = ad.relu(ad.linear(joint, params["attn.W1"], params["attn.b1"]))
    logits = ad.linear(hidden, params["attn.W2"], params["attn.b2"])
    return ad.softmax(logits, axis=1)


def masked_embeddings(features: np.ndarray, params, config: EmbedderConfig) -> Tensor:
    """Backbone embedding gated by each subspace mask, shape (K, D)."""
    x = Tensor(np.asarray(features, dtype=np.float64).reshape(1, config.feature_dim))
    f = ad.linear(x, params["backbone.W"], params["backbone.b"])
    tiled = ad.concat([f] * config.subspaces, axis=0)
    return ad.mul(params["masks"], tiled)


def embed(q: EmbeddingQuery, params: dict[str, Tensor], config: EmbedderConfig) -> Tensor:
    """Final embedding: attention-weighted sum of the masked embeddings."""
    masked = masked_embeddings(q.features, params, config)
    w = attention_weights(q, params, config)
    return ad.reshape(ad.matmul(w, masked), (config.embed_dim,))


def triplet_compat_loss(
    anchor_q: EmbeddingQuery,
    positive_q: EmbeddingQuery,
    negative_q: EmbeddingQuery,
    margin: float,
    params: dict[str, Tensor],
    config: EmbedderConfig,
) -> Tensor:
    """Hinge on squared distances: the positive must beat the negative by
    ``margin`` under the outfit's own style vector."""
    e_a = embed(anchor_q, params, config)
    e_p = embed(positive_q, params, config)
    e_n = embed(negative_q, params, config)
    gap = ad.sub(ad.squared_distance(e_a, e_p), ad.squared_distance(e_a, e_n))
    return ad.relu(ad.add_const(gap, margin))


def wrong_style_loss(
    anchor_q: EmbeddingQuery,
    positive_q: EmbeddingQuery,
    wrong_style_vector: np.ndarray,
    margin_s: float,
    params: dict[str, Tensor],
    config: EmbedderConfig,
) -> Tensor:
    """Hinge penalizing style-blind embeddings: the same item pair must be
    closer under its true style vector than under a mismatched one."""

    def as_array(v):
        return v.data if isinstance(v, Tensor) else np.asarray(v, dtype=np.float64)

    wrong = as_array(wrong_style_vector)
    if np.array_equal(as_array(anchor_q.style_vector), wrong):
        raise ad.ContractError("wrong-style vector equals the outfit's own style vector")
    e_a = embed(anchor_q, params, config)
    e_p = embed(positive_q, params, config)
    a_wrong = EmbeddingQuery(
        anchor_q.features, anchor_q.item_category, anchor_q.target_category, wrong
    )
    p_wrong = EmbeddingQuery(
        positive_q.features, positive_q.item_category, positive_q.target_category, wrong
    )
    e_aw = embed(a_wrong, params, config)
    e_pw = embed(p_wrong, params, config)
    gap = ad.sub(ad.squared_distance(e_a, e_p), ad.squared_distance(e_aw, e_pw))
    return ad.relu(ad.add_const(gap, margin_s))


@dataclass
class SubspaceEmbedder:
    """Bundled parameters + config for the embedder."""

    params: dict[str, Tensor]
    config: EmbedderConfig

    @classmethod
    def create(cls, config: EmbedderConfig, rng: np.random.Generator) -> "SubspaceEmbedder":
        return cls(params=init_params(config, rng), config=config)

    def embed(self, q: EmbeddingQuery) -> np.ndarray:
        return embed(q, self.params, self.config).data

    def embed_item(
        self, features, item_category: int, target_category: int, style_vector
    ) -> np.ndarray:
        q = EmbeddingQuery(features, item_category, target_category, style_vector)
        return self.embed(q)

    def embed_slice(
        self, features: np.ndarray, item_category: int, target_category: int, style_vector
    ) -> np.ndarray:
        """Inference fast path for a batch sharing one (category pair, style).

        The attention weights do not depend on item features, so the whole
        slice collapses to a single masked linear map. Matches ``embed``
        up to floating-point summation order.
        """
        p = self.params
        probe = EmbeddingQuery(
            np.zeros(self.config.feature_dim), item_category, target_category, style_vector
        )
        w = attention_weights(probe, p, self.config).data  # (1, K)
        combined_mask = (w @ p["masks"].data).reshape(-1)  # (D,)
        f = np.asarray(features, dtype=np.float64) @ p["backbone.W"].data + p["backbone.b"].data
        return f * combined_mask

    def checksum(self) -> str:
        return ad.params_checksum(self.params)

    def save(self, path) -> None:
        ad.save_checkpoint(path, self.params, self.config.to_dict())

    @classmethod
    def load(cls, path, trainable: bool = False) -> "SubspaceEmbedder":
        params, config = ad.load_checkpoint(path, requires_grad=trainable)
        return cls(params=params, config=EmbedderConfig.from_dict(config))
