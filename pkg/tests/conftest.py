"""Session fixtures: a small synthetic world and a quick two-stage trained
model shared by the training/evaluation/generation/service tests. The
acceptance suite trains its own full-size world separately."""

import numpy as np
import pytest

from stylefit import data as d
from stylefit import style_encoder as se
from stylefit import subspace as sub
from stylefit import training as tr
from stylefit.evaluation import CompatibilityModel
from stylefit.generation import pool_styles

WORLD_SEED = 20240811


def make_world_config():
    return d.SynthConfig(
        feature_dim=24,
        items_per_cluster=6,
        n_outfits=700,
        outfit_sizes=[3, 4],
        fine_per_coarse=3,
        noise_scale=0.25,
    )


def make_train_config(seed=0):
    return tr.TrainConfig(
        stage1=tr.Stage1Config(lr=3e-3, batch=64, kl_weight=0.05, epochs=5),
        stage2=tr.Stage2Config(
            lr=3e-3, batch_triplets=32, epochs=4, triplets_per_outfit=1
        ),
        seed=seed,
    )


@pytest.fixture(scope="session")
def world():
    config = make_world_config()
    catalog, outfits, vocab = d.generate_synthetic(config, seed=WORLD_SEED)
    train, val, test = d.split(outfits, seed=WORLD_SEED)
    return {
        "config": config,
        "catalog": catalog,
        "outfits": outfits,
        "vocab": vocab,
        "train": train,
        "val": val,
        "test": test,
    }


@pytest.fixture(scope="session")
def trained(world):
    config = make_train_config()
    enc_cfg = se.EncoderConfig(
        feature_dim=world["config"].feature_dim,
        n_styles=world["vocab"].n_styles,
    )
    encoder = se.StyleEncoder.create(enc_cfg, np.random.default_rng(1))
    stage1 = tr.train_style_encoder(
        world["catalog"], world["train"], encoder, config, val_outfits=world["val"]
    )
    se.freeze(encoder.params)
    pooled = pool_styles(world["catalog"], world["train"], encoder)
    emb_cfg = sub.EmbedderConfig(
        feature_dim=world["config"].feature_dim,
        n_categories=len(world["vocab"].categories),
    )
    embedder = sub.SubspaceEmbedder.create(emb_cfg, np.random.default_rng(2))
    stage2 = tr.train_subspace_embedder(
        world["catalog"], world["train"], encoder, embedder, config, pooled=pooled
    )
    return {
        "encoder": encoder,
        "embedder": embedder,
        "pooled": pooled,
        "stage1": stage1,
        "stage2": stage2,
        "model": CompatibilityModel(encoder=encoder, embedder=embedder),
    }
