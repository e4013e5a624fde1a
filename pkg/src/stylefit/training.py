"""Two-stage optimization.

Stage 1 fits the style encoder with classification + KL losses; stage 2
freezes it (checksum-verified) and fits the subspace embedder with the
compatibility triplet loss plus the wrong-style penalty. Both stages run
single-threaded with an explicit RNG, so a fixed seed reproduces losses
bit for bit.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from . import style_encoder as se
from . import subspace as sub
from .autodiff import Tape, Tensor
from .data import Catalog, Outfit, sample_soft_negative
from .generation import PooledStyle, pool_styles, sample_style_vector


class TrainingError(RuntimeError):
    """Training aborted (non-finite loss or violated invariant)."""


@dataclass
class Stage1Config:
    lr: float = 5e-6
    batch: int = 128
    kl_weight: float = 0.05
    epochs: int = 10


@dataclass
class Stage2Config:
    lr: float = 1e-6
    batch_triplets: int = 32
    epochs: int = 10
    lambda_compat: float = 1.0
    lambda_style: float = 0.5
    margin: float = 0.2
    margin_s: float = 0.2
    triplets_per_outfit: int = 1


@dataclass
class AdamConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class TrainConfig:
    stage1: Stage1Config = field(default_factory=Stage1Config)
    stage2: Stage2Config = field(default_factory=Stage2Config)
    adam: AdamConfig = field(default_factory=AdamConfig)
    seed: int = 0

    def __post_init__(self):
        for name, value in (
            ("kl_weight", self.stage1.kl_weight),
            ("lambda_compat", self.stage2.lambda_compat),
            ("lambda_style", self.stage2.lambda_style),
        ):
            if value < 0:
                raise ValueError(f"{name} must be nonnegative, got {value}")

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        with open(path) as f:
            raw = json.load(f)
        return cls(
            stage1=Stage1Config(**raw.get("stage1", {})),
            stage2=Stage2Config(**raw.get("stage2", {})),
            adam=AdamConfig(**raw.get("adam", {})),
            seed=raw.get("seed", 0),
        )

    def to_dict(self) -> dict:
        return asdict(self)


class Adam:
    """Adam with bias correction over a named parameter dict."""

    def __init__(self, params: dict[str, Tensor], lr: float, config: AdamConfig | None = None):
        self.params = params
        self.lr = lr
        self.config = config or AdamConfig()
        self.t = 0
        self.m = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in params.items()}

    def step(self) -> None:
        b1, b2, eps = self.config.beta1, self.config.beta2, self.config.eps
        self.t += 1
        for name, tensor in self.params.items():
            g = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            m_hat = self.m[name] / (1 - b1**self.t)
            v_hat = self.v[name] / (1 - b2**self.t)
            tensor.data -= self.lr * m_hat / (np.sqrt(v_hat) + eps)

    def zero_grad(self) -> None:
        ad.zero_grads(self.params)


def adam_step(params, grads, state, lr, config: AdamConfig | None = None):
    """Functional single step for plain arrays (state = (t, m, v) dicts)."""
    cfg = config or AdamConfig()
    t, m, v = state
    t += 1
    new_params, new_m, new_v = {}, {}, {}
    for k in params:
        g = grads[k]
        new_m[k] = cfg.beta1 * m[k] + (1 - cfg.beta1) * g
        new_v[k] = cfg.beta2 * v[k] + (1 - cfg.beta2) * g * g
        m_hat = new_m[k] / (1 - cfg.beta1**t)
        v_hat = new_v[k] / (1 - cfg.beta2**t)
        new_params[k] = params[k] - lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return new_params, (t, new_m, new_v)


def total_loss(
    components: dict[str, Tensor], weights: dict[str, float] | None = None
) -> Tensor:
    """Weighted sum of named loss terms (for joint-training experiments)."""
    weights = weights or {}
    out = None
    for name in sorted(components):
        term = ad.scale(components[name], weights.get(name, 1.0))
        out = term if out is None else ad.add(out, term)
    if out is None:
        raise ValueError("no loss components given")
    return out


@dataclass
class EpochRecord:
    epoch: int
    losses: dict[str, float]


def write_metrics_csv(path, records: list[EpochRecord]) -> None:
    if not records:
        return
    keys = sorted({k for r in records for k in r.losses})
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch"] + keys)
        for r in records:
            writer.writerow([r.epoch] + [f"{r.losses.get(k, float('nan')):.10g}" for k in keys])


def _check_finite(value: float, context: str) -> None:
    if not np.isfinite(value):
        raise TrainingError(f"non-finite loss ({value}) during {context}")


# ---------------------------------------------------------------------------
# stage 1: style encoder


def train_style_encoder(
    catalog: Catalog,
    outfits: list[Outfit],
    encoder: se.StyleEncoder,
    config: TrainConfig,
    val_outfits: list[Outfit] | None = None,
) -> list[EpochRecord]:
    """Minimize mean over outfits of CE(classify(sample), style) + w * KL."""
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    opt = Adam(encoder.params, config.stage1.lr, config.adam)
    records: list[EpochRecord] = []
    for epoch in range(config.stage1.epochs):
        order = rng.permutation(len(outfits))
        ce_sum = kl_sum = 0.0
        n_batches = 0
        for start in range(0, len(order), config.stage1.batch):
            batch = [outfits[int(i)] for i in order[start : start + config.stage1.batch]]
            with Tape() as tape:
                terms = []
                ce_val = kl_val = 0.0
                for outfit in batch:
                    feats = catalog.features_of(outfit.item_ids)
                    gaussian = encoder.encode(feats)
                    kl = se.kl_to_unit(gaussian)
                    sample = se.reparameterize(gaussian, rng)
                    logits = encoder.classify(sample.z)
                    ce = se.cross_entropy(logits, outfit.style)
                    terms.append(ad.add(ce, ad.scale(kl, config.stage1.kl_weight)))
                    ce_val += ce.item()
                    kl_val += kl.item()
                loss = ad.scale(_sum_terms(terms), 1.0 / len(batch))
                _check_finite(loss.item(), f"stage 1 epoch {epoch}")
                tape.backward(loss)
            opt.step()
            opt.zero_grad()
            ce_sum += ce_val / len(batch)
            kl_sum += kl_val / len(batch)
            n_batches += 1
        losses = {
            "ce": ce_sum / n_batches,
            "kl": kl_sum / n_batches,
            "total": (ce_sum + config.stage1.kl_weight * kl_sum) / n_batches,
        }
        if val_outfits:
            losses["val_accuracy"] = style_accuracy(catalog, val_outfits, encoder)
        records.append(EpochRecord(epoch, losses))
    return records


def _sum_terms(terms: list[Tensor]) -> Tensor:
    out = terms[0]
    for t in terms[1:]:
        out = ad.add(out, t)
    return out


def style_accuracy(catalog: Catalog, outfits: list[Outfit], encoder: se.StyleEncoder) -> float:
    """Top-1 accuracy of the classifier on deterministic (mean) encodings."""
    correct = 0
    for outfit in outfits:
        gaussian = encoder.encode(catalog.features_of(outfit.item_ids))
        logits = encoder.classify(gaussian.mu)
        if int(np.argmax(logits.data)) == outfit.style:
            correct += 1
    return correct / len(outfits)


# ---------------------------------------------------------------------------
# stage 2: subspace embedder under a frozen style encoder


@dataclass
class Triplet:
    outfit: Outfit
    anchor_id: str
    positive_id: str
    negative_id: str


def sample_triplets(
    outfits: list[Outfit],
    catalog: Catalog,
    rng: np.random.Generator,
    per_outfit: int = 1,
) -> list[Triplet]:
    """Anchor/positive are distinct items of one outfit; the negative
    replaces the positive with a coarse-category (soft) match. Fine
    categories are reserved for evaluation-time negatives."""
    triplets: list[Triplet] = []
    for outfit in outfits:
        ids = outfit.item_ids
        for _ in range(per_outfit):
            a, p = rng.choice(len(ids), size=2, replace=False)
            positive = catalog.get(ids[int(p)])
            negative = sample_soft_negative(outfit, positive, catalog, rng)
            triplets.append(Triplet(outfit, ids[int(a)], ids[int(p)], negative.item_id))
    return triplets


def train_subspace_embedder(
    catalog: Catalog,
    outfits: list[Outfit],
    frozen_encoder: se.StyleEncoder,
    embedder: sub.SubspaceEmbedder,
    config: TrainConfig,
    pooled: dict[int, PooledStyle] | None = None,
) -> list[EpochRecord]:
    """Stage 2: triplet compatibility + wrong-style penalty, embedder only.

    The style encoder must already be frozen; its checksum is verified
    unchanged after every epoch.
    """
    se.freeze(frozen_encoder.params)
    encoder_checksum = frozen_encoder.checksum()
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 2]))
    if pooled is None:
        pooled = pool_styles(catalog, outfits, frozen_encoder)
    styles_with_moments = sorted(pooled)
    if len(styles_with_moments) < 2:
        raise TrainingError(
            "wrong-style loss needs pooled moments for at least 2 styles"
        )
    opt = Adam(embedder.params, config.stage2.lr, config.adam)
    cfg2 = config.stage2
    records: list[EpochRecord] = []
    for epoch in range(cfg2.epochs):
        triplets = sample_triplets(outfits, catalog, rng, cfg2.triplets_per_outfit)
        order = rng.permutation(len(triplets))
        compat_sum = style_sum = 0.0
        n_batches = 0
        for start in range(0, len(order), cfg2.batch_triplets):
            batch = [triplets[int(i)] for i in order[start : start + cfg2.batch_triplets]]
            with Tape() as tape:
                terms = []
                compat_val = style_val = 0.0
                for tr in batch:
                    feats = catalog.features_of(tr.outfit.item_ids)
                    z = se.reparameterize(frozen_encoder.encode(feats), rng).z.data
                    anchor = catalog.get(tr.anchor_id)
                    positive = catalog.get(tr.positive_id)
                    negative = catalog.get(tr.negative_id)
                    a_q = sub.EmbeddingQuery(
                        anchor.features, anchor.coarse_category, positive.coarse_category, z
                    )
                    p_q = sub.EmbeddingQuery(
                        positive.features, positive.coarse_category, anchor.coarse_category, z
                    )
                    n_q = sub.EmbeddingQuery(
                        negative.features, negative.coarse_category, anchor.coarse_category, z
                    )
                    compat = sub.triplet_compat_loss(
                        a_q, p_q, n_q, cfg2.margin, embedder.params, embedder.config
                    )
                    wrong_choices = [s for s in styles_with_moments if s != tr.outfit.style]
                    wrong_style = wrong_choices[int(rng.integers(len(wrong_choices)))]
                    wrong_vec = sample_style_vector(pooled[wrong_style], rng)
                    wrong = sub.wrong_style_loss(
                        a_q, p_q, wrong_vec, cfg2.margin_s, embedder.params, embedder.config
                    )
                    terms.append(
                        ad.add(
                            ad.scale(compat, cfg2.lambda_compat),
                            ad.scale(wrong, cfg2.lambda_style),
                        )
                    )
                    compat_val += compat.item()
                    style_val += wrong.item()
                loss = ad.scale(_sum_terms(terms), 1.0 / len(batch))
                _check_finite(loss.item(), f"stage 2 epoch {epoch}")
                tape.backward(loss)
            opt.step()
            opt.zero_grad()
            compat_sum += compat_val / len(batch)
            style_sum += style_val / len(batch)
            n_batches += 1
        if frozen_encoder.checksum() != encoder_checksum:
            raise TrainingError("style encoder parameters changed during stage 2")
        records.append(
            EpochRecord(
                epoch,
                {
                    "compat": compat_sum / n_batches,
                    "wrong_style": style_sum / n_batches,
                    "total": (
                        cfg2.lambda_compat * compat_sum + cfg2.lambda_style * style_sum
                    )
                    / n_batches,
                },
            )
        )
    return records
