"""Variational set encoder: an outfit's item features in, a diagonal
Gaussian over the latent style space out, plus a small classifier head
that predicts the outfit's style from a reparameterized sample.

The encoder is permutation-invariant by construction: input rows are
canonicalized to a sorted order before any arithmetic, attention runs
over the full set, and pooling is a mean over rows, so two orderings of
the same set produce bitwise-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass
class EncoderConfig:
    feature_dim: int = 64
    hidden: int = 32
    style_dim: int = 64
    blocks: int = 1
    attn_heads: int = 2
    classifier_hidden: int = 32
    n_styles: int = 7

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        return cls(**d)


@dataclass
class StyleGaussian:
    """First two moments of the latent style distribution (log-variance
    parameterization keeps the variance positive with no constraints)."""

    mu: Tensor
    log_var: Tensor

    @property
    def mu_array(self) -> np.ndarray:
        return self.mu.data

    @property
    def var_array(self) -> np.ndarray:
        return np.exp(self.log_var.data)


@dataclass
class StyleSample:
    z: Tensor
    source: StyleGaussian
    eps: np.ndarray


def init_params(config: EncoderConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    p: dict[str, Tensor] = {}

    def glorot(fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return Tensor(rng.uniform(-limit, limit, size=(fan_in, fan_out)), requires_grad=True)

    def zeros(n):
        return Tensor(np.zeros(n), requires_grad=True)

    def ones(n):
        return Tensor(np.ones(n), requires_grad=True)

    h = config.hidden
    p["input.W"] = glorot(config.feature_dim, h)
    p["input.b"] = zeros(h)
    for i in range(config.blocks):
        pre = f"block{i}."
        for name in ("Wq", "Wk", "Wv", "Wo"):
            p[pre + name] = glorot(h, h)
        for name in ("bq", "bk", "bv", "bo"):
            p[pre + name] = zeros(h)
        p[pre + "ln1.g"] = ones(h)
        p[pre + "ln1.b"] = zeros(h)
        p[pre + "ff.W1"] = glorot(h, h)
        p[pre + "ff.b1"] = zeros(h)
        p[pre + "ff.W2"] = glorot(h, h)
        p[pre + "ff.b2"] = zeros(h)
        p[pre + "ln2.g"] = ones(h)
        p[pre + "ln2.b"] = zeros(h)
    p["mu.W"] = glorot(h, config.style_dim)
    p["mu.b"] = zeros(config.style_dim)
    p["logvar.W"] = glorot(h, config.style_dim)
    p["logvar.b"] = zeros(config.style_dim)
    p["cls.W1"] = glorot(config.style_dim, config.classifier_hidden)
    p["cls.b1"] = zeros(config.classifier_hidden)
    p["cls.W2"] = glorot(config.classifier_hidden, config.n_styles)
    p["cls.b2"] = zeros(config.n_styles)
    return p


def canonical_order(features: np.ndarray) -> np.ndarray:
    """Sort rows lexicographically; any ordering of a set maps to one input."""
    return features[np.lexsort(features.T[::-1])]


def _attention_block(x: Tensor, params, prefix: str, heads: int) -> Tensor:
    h = x.shape[1]
    if h % heads != 0:
        raise ad.ShapeError(f"hidden dim {h} not divisible by {heads} heads")
    dh = h // heads
    q = ad.linear(x, params[prefix + "Wq"], params[prefix + "bq"])
    k = ad.linear(x, params[prefix + "Wk"], params[prefix + "bk"])
    v = ad.linear(x, params[prefix + "Wv"], params[prefix + "bv"])
    outs = []
    for i in range(heads):
        qi = ad.narrow(q, 1, i * dh, dh)
        ki = ad.narrow(k, 1, i * dh, dh)
        vi = ad.narrow(v, 1, i * dh, dh)
        scores = ad.scale(ad.matmul(qi, ad.transpose(ki)), 1.0 / np.sqrt(dh))
        attn = ad.softmax(scores, axis=1)
        outs.append(ad.matmul(attn, vi))
    o = ad.linear(ad.concat(outs, axis=1), params[prefix + "Wo"], params[prefix + "bo"])
    hres = ad.layer_norm(ad.add(x, o), params[prefix + "ln1.g"], params[prefix + "ln1.b"])
    ff = ad.linear(
        ad.relu(ad.linear(hres, params[prefix + "ff.W1"], params[prefix + "ff.b1"])),
        params[prefix + "ff.W2"],
        params[prefix + "ff.b2"],
    )
    return ad.layer_norm(ad.add(hres, ff), params[prefix + "ln2.g"], params[prefix + "ln2.b"])


def encode(features, params: dict[str, Tensor], config: EncoderConfig) -> StyleGaussian:
    """Encode a non-empty set of item feature vectors into a StyleGaussian."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim == 1:
        feats = feats[None, :]
    if feats.shape[0] == 0:
        raise ad.ContractError("encode requires at least one item")
    if feats.shape[1] != config.feature_dim:
        raise ad.ShapeError(
            f"expected feature dimension {config.feature_dim}, got {feats.shape[1]}"
        )
    x = ad.linear(Tensor(canonical_order(feats)), params["input.W"], params["input.b"])
    for i in range(config.blocks):
        x = _attention_block(x, params, f"block{i}.", config.attn_heads)
    pooled = ad.mean(x, axis=0, keepdims=True)
    mu = ad.reshape(ad.linear(pooled, params["mu.W"], params["mu.b"]), (config.style_dim,))
    log_var = ad.reshape(
        ad.linear(pooled, params["logvar.W"], params["logvar.b"]), (config.style_dim,)
    )
    return StyleGaussian(mu=mu, log_var=log_var)


def reparameterize(g: StyleGaussian, rng: np.random.Generator) -> StyleSample:
    """z = mu + exp(log_var / 2) * eps with eps ~ N(0, I), recorded."""
    eps = rng.standard_normal(g.mu.shape[0])
    std = ad.exp(ad.scale(g.log_var, 0.5))
    z = ad.add(g.mu, ad.mul(std, Tensor(eps)))
    return StyleSample(z=z, source=g, eps=eps)


def kl_to_unit(g: StyleGaussian) -> Tensor:
    """KL divergence from N(mu, diag(var)) to the unit Gaussian.

    0.5 * sum(mu^2 + var - log var - 1); zero exactly at mu=0, log_var=0.
    """
    terms = ad.add_const(
        ad.sub(ad.add(ad.mul(g.mu, g.mu), ad.exp(g.log_var)), g.log_var), -1.0
    )
    return ad.scale(ad.sum_(terms), 0.5)


def classify_style(z: Tensor, params: dict[str, Tensor]) -> Tensor:
    """Two-layer MLP from a style sample to raw logits over styles."""
    row = ad.reshape(z, (1, z.shape[0]))
    hidden = ad.relu(ad.linear(row, params["cls.W1"], params["cls.b1"]))
    logits = ad.linear(hidden, params["cls.W2"], params["cls.b2"])
    return ad.reshape(logits, (logits.shape[1],))


def cross_entropy(logits: Tensor, label: int) -> Tensor:
    """Negative log-likelihood of ``label`` under softmax(logits)."""
    log_probs = ad.log_softmax(ad.reshape(logits, (1, logits.shape[0])), axis=1)
    onehot = np.zeros((1, logits.shape[0]))
    onehot[0, label] = 1.0
    return ad.neg(ad.sum_(ad.mul(log_probs, Tensor(onehot))))


def freeze(params: dict[str, Tensor]) -> dict[str, Tensor]:
    for t in params.values():
        t.requires_grad = False
        t.grad = None
    return params


@dataclass
class StyleEncoder:
    """Bundled parameters + config, the unit checkpoints work with."""

    params: dict[str, Tensor]
    config: EncoderConfig

    @classmethod
    def create(cls, config: EncoderConfig, rng: np.random.Generator) -> "StyleEncoder":
        return cls(params=init_params(config, rng), config=config)

    def encode(self, features) -> StyleGaussian:
        return encode(features, self.params, self.config)

    def encode_mean(self, features) -> np.ndarray:
        """Deterministic style vector (the Gaussian mean) for evaluation."""
        return self.encode(features).mu.data

    def classify(self, z: Tensor) -> Tensor:
        return classify_style(z, self.params)

    def checksum(self) -> str:
        return ad.params_checksum(self.params)

    def save(self, path) -> None:
        ad.save_checkpoint(path, self.params, self.config.to_dict())

    @classmethod
    def load(cls, path, trainable: bool = False) -> "StyleEncoder":
        params, config = ad.load_checkpoint(path, requires_grad=trainable)
        return cls(params=params, config=EncoderConfig.from_dict(config))
