"""Command-line entry points: synthetic data, the two training stages,
evaluation, embedding precompute, generation, benchmarking, and the demo
service."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import data as d
from . import evaluation as ev
from . import generation as gen
from . import style_encoder as se
from . import subspace as sub
from . import training as tr

DEFAULT_TEMPLATES = [
    {"name": "top-first", "slots": ["topwear", "bottomwear", "footwear", "bag"]},
    {"name": "bottom-first", "slots": ["bottomwear", "topwear", "footwear", "jewellery"]},
    {"name": "shoes-first", "slots": ["footwear", "topwear", "bottomwear", "bag"]},
]


def _load_data_dir(directory: Path):
    vocab = d.load_styles(directory / "styles.json")
    catalog = d.load_catalog(directory / "catalog.jsonl", vocab)
    outfits = d.load_outfits(directory / "outfits.jsonl", catalog, vocab)
    splits_path = directory / "splits.json"
    if splits_path.exists():
        train, val, test = d.load_split(splits_path, outfits)
    else:
        train, val, test = d.split(outfits)
    return vocab, catalog, outfits, (train, val, test)


def _read_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as f:
        return json.load(f)


def _train_config(raw: dict) -> tr.TrainConfig:
    return tr.TrainConfig(
        stage1=tr.Stage1Config(**raw.get("stage1", {})),
        stage2=tr.Stage2Config(**raw.get("stage2", {})),
        adam=tr.AdamConfig(**raw.get("adam", {})),
        seed=raw.get("seed", 0),
    )


def cmd_synth(args) -> int:
    if args.config:
        config = d.SynthConfig.from_json(args.config)
    else:
        config = d.SynthConfig()
    catalog, outfits, vocab = d.generate_synthetic(config, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    d.save_styles(out / "styles.json", vocab)
    d.save_catalog(out / "catalog.jsonl", catalog, vocab)
    d.save_outfits(out / "outfits.jsonl", outfits, vocab)
    train, val, test = d.split(outfits, seed=args.seed)
    d.save_split(out / "splits.json", train, val, test)
    print(
        f"wrote {len(catalog)} items, {len(outfits)} outfits "
        f"({len(train)}/{len(val)}/{len(test)} train/val/test) to {out}"
    )
    return 0


def cmd_train_vsen(args) -> int:
    directory = Path(args.data)
    vocab, catalog, _, (train, val, _) = _load_data_dir(directory)
    raw = _read_config(args.config)
    config = _train_config(raw)
    feature_dim = catalog.items[0].features.shape[0]
    enc_cfg = se.EncoderConfig(
        feature_dim=feature_dim, n_styles=vocab.n_styles, **raw.get("encoder", {})
    )
    encoder = se.StyleEncoder.create(enc_cfg, np.random.default_rng(config.seed))
    records = tr.train_style_encoder(catalog, train, encoder, config, val_outfits=val)
    encoder.save(args.out)
    metrics = args.metrics or (args.out + ".metrics.csv")
    tr.write_metrics_csv(metrics, records)
    last = records[-1].losses
    print(
        f"stage 1 done: total {last['total']:.4f}, "
        f"val accuracy {last.get('val_accuracy', float('nan')):.3f} -> {args.out}"
    )
    return 0


def cmd_train_sca(args) -> int:
    directory = Path(args.data)
    vocab, catalog, _, (train, _, _) = _load_data_dir(directory)
    raw = _read_config(args.config)
    config = _train_config(raw)
    encoder = se.StyleEncoder.load(args.vsen)
    se.freeze(encoder.params)
    feature_dim = catalog.items[0].features.shape[0]
    emb_cfg = sub.EmbedderConfig(
        feature_dim=feature_dim,
        n_categories=len(vocab.categories),
        margin=config.stage2.margin,
        margin_s=config.stage2.margin_s,
        **raw.get("embedder", {}),
    )
    embedder = sub.SubspaceEmbedder.create(emb_cfg, np.random.default_rng(config.seed + 1))
    records = tr.train_subspace_embedder(catalog, train, encoder, embedder, config)
    embedder.save(args.out)
    metrics = args.metrics or (args.out + ".metrics.csv")
    tr.write_metrics_csv(metrics, records)
    print(f"stage 2 done: total {records[-1].losses['total']:.4f} -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    directory = Path(args.data)
    _, catalog, _, (_, _, test) = _load_data_dir(directory)
    model = ev.CompatibilityModel.load(args.vsen, args.sca)
    modes = ("sn", "hn") if args.mode == "both" else (args.mode,)
    data = ev.build_eval_data(test, catalog, modes=modes, n_sets=args.n_sets, seed=args.seed)
    report = ev.evaluate(model, data)
    if args.out:
        report.save(args.out)
    for line in report.summary_lines():
        print(line)
    return 0


def cmd_precompute(args) -> int:
    vocab = d.load_styles(args.styles)
    catalog = d.load_catalog(args.catalog, vocab)
    outfits = d.load_outfits(args.outfits, catalog, vocab)
    encoder = se.StyleEncoder.load(args.vsen)
    embedder = sub.SubspaceEmbedder.load(args.sca)
    pooled = gen.pool_styles(catalog, outfits, encoder)
    categories = args.categories.split(",") if args.categories else list(vocab.categories)
    styles = args.gen_styles.split(",") if args.gen_styles else list(vocab.styles)
    rng = np.random.default_rng(args.seed) if args.stochastic else None
    store = gen.precompute_embeddings(
        catalog, vocab, categories, styles, embedder, pooled,
        deterministic=not args.stochastic, rng=rng,
    )
    store.save(args.out)
    print(
        f"stored embeddings for {len(categories)} categories x {len(styles)} styles "
        f"-> {args.out}"
    )
    return 0


def cmd_generate(args) -> int:
    store = gen.EmbeddingStore.load(args.store)
    template = args.template.split(",")
    results = gen.beam_search(
        args.anchor, template, args.style, store,
        beam_width=args.beam, top_k=args.topk,
    )
    for rank, outfit in enumerate(results, start=1):
        print(f"#{rank} score {outfit.score:.4f}: " + " + ".join(outfit.item_ids))
    return 0


def cmd_benchmark(args) -> int:
    config = gen.BenchmarkConfig(
        n_anchors=args.anchors,
        candidates_per_category=args.candidates,
        slots=args.slots,
        beam_width=args.beam,
        worker_counts=tuple(int(w) for w in args.workers.split(",")),
    )
    report = gen.benchmark(config)
    print(f"outputs identical across worker counts: {report.outputs_identical}")
    for workers in config.worker_counts:
        print(
            f"workers {workers}: {report.seconds[workers]:.2f}s "
            f"({report.anchors_per_second[workers]:.1f} anchors/s, "
            f"speedup {report.speedup(workers):.2f}x)"
        )
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceArtifacts, create_app

    artifacts = ServiceArtifacts.load(args.artifacts)
    if args.ui:
        artifacts.ui_dir = Path(args.ui)
    app = create_app(artifacts)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_demo(args) -> int:
    """One-shot pipeline: synthetic data -> two-stage training -> store,
    producing a directory the service can run from."""
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.quick:
        synth = d.SynthConfig(feature_dim=32, items_per_cluster=5, n_outfits=600,
                              outfit_sizes=[3, 4])
        config = tr.TrainConfig(
            stage1=tr.Stage1Config(lr=3e-3, batch=64, kl_weight=0.05, epochs=4),
            stage2=tr.Stage2Config(lr=3e-3, batch_triplets=32, epochs=3),
            seed=args.seed,
        )
    else:
        synth = d.SynthConfig()
        config = tr.TrainConfig(
            stage1=tr.Stage1Config(lr=2e-3, batch=128, kl_weight=0.05, epochs=8),
            stage2=tr.Stage2Config(lr=2e-3, batch_triplets=32, epochs=6),
            seed=args.seed,
        )
    catalog, outfits, vocab = d.generate_synthetic(synth, seed=args.seed)
    d.save_styles(out / "styles.json", vocab)
    d.save_catalog(out / "catalog.jsonl", catalog, vocab)
    d.save_outfits(out / "outfits.jsonl", outfits, vocab)
    train, val, test = d.split(outfits, seed=args.seed)
    d.save_split(out / "splits.json", train, val, test)

    encoder = se.StyleEncoder.create(
        se.EncoderConfig(feature_dim=synth.feature_dim, n_styles=vocab.n_styles),
        np.random.default_rng(config.seed),
    )
    records = tr.train_style_encoder(catalog, train, encoder, config, val_outfits=val)
    print(f"stage 1: val accuracy {records[-1].losses['val_accuracy']:.3f}")
    encoder.save(out / "encoder.json")
    se.freeze(encoder.params)
    pooled = gen.pool_styles(catalog, train, encoder)
    embedder = sub.SubspaceEmbedder.create(
        sub.EmbedderConfig(feature_dim=synth.feature_dim, n_categories=len(vocab.categories)),
        np.random.default_rng(config.seed + 1),
    )
    tr.train_subspace_embedder(catalog, train, encoder, embedder, config, pooled=pooled)
    embedder.save(out / "embedder.json")

    store = gen.precompute_embeddings(
        catalog, vocab, list(vocab.categories), list(vocab.styles), embedder, pooled
    )
    store.save(out / "store")
    with open(out / "templates.json", "w") as f:
        json.dump({"templates": DEFAULT_TEMPLATES}, f, indent=2)
    with open(out / "service.json", "w") as f:
        json.dump({"top_k": 5, "beam_width": 3}, f, indent=2)
    print(f"demo artifacts ready in {out}; run: stylefit serve --artifacts {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stylefit")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--config", help="SynthConfig JSON file")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_synth)

    p = commands.add_parser("train-vsen", help="stage 1: train the style encoder")
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="TrainConfig JSON file")
    p.add_argument("--out", required=True)
    p.add_argument("--metrics", help="CSV path (default: <out>.metrics.csv)")
    p.set_defaults(fn=cmd_train_vsen)

    p = commands.add_parser("train-sca", help="stage 2: train the subspace embedder")
    p.add_argument("--data", required=True)
    p.add_argument("--vsen", required=True, help="frozen style-encoder checkpoint")
    p.add_argument("--config", help="TrainConfig JSON file")
    p.add_argument("--out", required=True)
    p.add_argument("--metrics", help="CSV path (default: <out>.metrics.csv)")
    p.set_defaults(fn=cmd_train_sca)

    p = commands.add_parser("eval", help="FITB accuracy and compatibility AUROC")
    p.add_argument("--data", required=True)
    p.add_argument("--vsen", required=True)
    p.add_argument("--sca", required=True)
    p.add_argument("--mode", choices=["sn", "hn", "both"], default="both")
    p.add_argument("--n-sets", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="report JSON path")
    p.set_defaults(fn=cmd_eval)

    p = commands.add_parser("precompute", help="build the embedding store")
    p.add_argument("--catalog", required=True)
    p.add_argument("--outfits", required=True)
    p.add_argument("--styles", required=True)
    p.add_argument("--vsen", required=True)
    p.add_argument("--sca", required=True)
    p.add_argument("--categories", help="comma-separated template categories (default: all)")
    p.add_argument("--gen-styles", help="comma-separated styles (default: all)")
    p.add_argument("--stochastic", action="store_true",
                   help="sample style vectors instead of using pooled means")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_precompute)

    p = commands.add_parser("generate", help="beam-search outfits from an anchor")
    p.add_argument("--anchor", required=True)
    p.add_argument("--style", required=True)
    p.add_argument("--template", required=True, help="comma-separated category slots")
    p.add_argument("--beam", type=int, default=3)
    p.add_argument("--topk", type=int, default=5)
    p.add_argument("--store", required=True)
    p.set_defaults(fn=cmd_generate)

    p = commands.add_parser("benchmark", help="parallel generation throughput")
    p.add_argument("--anchors", type=int, default=600)
    p.add_argument("--candidates", type=int, default=300)
    p.add_argument("--slots", type=int, default=5)
    p.add_argument("--beam", type=int, default=3)
    p.add_argument("--workers", default="1,2,4,8")
    p.set_defaults(fn=cmd_benchmark)

    p = commands.add_parser("serve", help="run the demo HTTP service")
    p.add_argument("--artifacts", required=True)
    p.add_argument("--ui", help="static UI directory (e.g. frontend/dist)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(fn=cmd_serve)

    p = commands.add_parser("demo", help="build a full artifact bundle end to end")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quick", action="store_true", help="small dataset, short training")
    p.set_defaults(fn=cmd_demo)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
