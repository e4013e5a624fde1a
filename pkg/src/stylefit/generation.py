"""Style-guided outfit generation.

Per-style Gaussians are pooled from encoded outfits; item embeddings for
every (item, target category, style) combination are precomputed into an
immutable store; template-driven beam search then grows outfits from an
anchor item, and a sharded runner fans independent searches out across
worker processes.
"""

from __future__ import annotations

import json
import struct
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Catalog, Outfit, Vocabulary

STORE_FORMAT = "stylefit.store.v1"


class GenerationError(RuntimeError):
    """Outfit generation cannot proceed (empty pool, missing style, ...)."""


# ---------------------------------------------------------------------------
# pooled per-style Gaussians


@dataclass
class PooledStyle:
    style: int
    pooled_mu: np.ndarray
    pooled_var: np.ndarray
    n_outfits: int


def pool_style(
    catalog: Catalog,
    outfits_of_style: list[Outfit],
    encoder,
    style: int,
    mixture_variance: bool = False,
) -> PooledStyle:
    """Arithmetic mean of the per-outfit means and variances.

    With ``mixture_variance`` the between-outfit dispersion of the means
    is added (moment-matched mixture), which widens the pooled Gaussian.
    """
    if not outfits_of_style:
        raise GenerationError(
            f"no outfits encode style {style}; fall back to the unit Gaussian "
            "N(0, I) if a style vector is still required"
        )
    mus, variances = [], []
    for outfit in outfits_of_style:
        g = encoder.encode(catalog.features_of(outfit.item_ids))
        mus.append(g.mu.data)
        variances.append(np.exp(g.log_var.data))
    mus = np.stack(mus)
    variances = np.stack(variances)
    pooled_mu = mus.mean(axis=0)
    pooled_var = variances.mean(axis=0)
    if mixture_variance:
        pooled_var = pooled_var + (mus**2).mean(axis=0) - pooled_mu**2
    return PooledStyle(style, pooled_mu, pooled_var, len(outfits_of_style))


def pool_styles(
    catalog: Catalog,
    outfits: list[Outfit],
    encoder,
    mixture_variance: bool = False,
) -> dict[int, PooledStyle]:
    by_style: dict[int, list[Outfit]] = {}
    for o in outfits:
        by_style.setdefault(o.style, []).append(o)
    return {
        s: pool_style(catalog, by_style[s], encoder, s, mixture_variance)
        for s in sorted(by_style)
    }


def style_vector_for_generation(
    pooled: PooledStyle,
    rng: np.random.Generator | None = None,
    deterministic: bool = True,
) -> np.ndarray:
    """Pooled mean by default; a draw from the pooled Gaussian otherwise."""
    if deterministic:
        return pooled.pooled_mu.copy()
    if rng is None:
        raise ValueError("stochastic style vectors need an rng")
    return sample_style_vector(pooled, rng)


def sample_style_vector(pooled: PooledStyle, rng: np.random.Generator) -> np.ndarray:
    eps = rng.standard_normal(pooled.pooled_mu.shape[0])
    return pooled.pooled_mu + np.sqrt(pooled.pooled_var) * eps


# ---------------------------------------------------------------------------
# embedding store


@dataclass
class EmbeddingStore:
    """Immutable map (item, target category, style) -> embedding.

    Internally sliced by (style, item category, target category) so beam
    search can score a whole candidate category with one matrix op. Once
    built (or loaded) the store is read-only and safe to share across
    worker processes.
    """

    dim: int
    styles: list[str]
    categories: list[str]
    style_vectors: dict[str, np.ndarray]
    item_categories: dict[str, str]
    _slices: dict[tuple[str, str, str], tuple[list[str], np.ndarray]] = field(
        default_factory=dict
    )
    _rows: dict[tuple[str, str, str], dict[str, int]] = field(default_factory=dict)
    _canonical_ids: dict[tuple[str, str], list[str]] = field(default_factory=dict)

    def add_slice(self, style: str, item_cat: str, target_cat: str, ids, matrix) -> None:
        key = (style, item_cat, target_cat)
        ids = list(ids)
        # beam search scores whole categories with one matrix op, which
        # requires every slice of one (style, item category) to list items
        # in the same order
        canonical = self._canonical_ids.setdefault((style, item_cat), ids)
        if ids != canonical:
            raise GenerationError(
                f"inconsistent item ordering for category {item_cat!r} under "
                f"style {style!r}"
            )
        matrix = np.ascontiguousarray(matrix, dtype=np.float64)
        matrix.flags.writeable = False  # the store is immutable once built
        self._slices[key] = (ids, matrix)
        self._rows[key] = {iid: i for i, iid in enumerate(ids)}
        for iid in ids:
            self.item_categories[iid] = item_cat

    def candidates(self, style: str, item_cat: str, target_cat: str):
        """All items of ``item_cat`` with embeddings toward ``target_cat``."""
        key = (style, item_cat, target_cat)
        if key not in self._slices:
            raise GenerationError(
                f"store has no embeddings for items of {item_cat!r} toward "
                f"{target_cat!r} under style {style!r}"
            )
        return self._slices[key]

    def vector(self, style: str, item_id: str, target_cat: str) -> np.ndarray:
        item_cat = self.item_categories.get(item_id)
        if item_cat is None:
            raise GenerationError(f"item {item_id!r} is not in the store")
        ids, matrix = self.candidates(style, item_cat, target_cat)
        return matrix[self._rows[(style, item_cat, target_cat)][item_id]]

    def has_style(self, style: str) -> bool:
        return style in self.style_vectors

    # -- persistence: one binary shard per (style, target category) --------

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        shards = []
        by_target: dict[tuple[str, str], list[tuple[str, list[str], np.ndarray]]] = {}
        for (style, item_cat, target_cat), (ids, matrix) in sorted(self._slices.items()):
            by_target.setdefault((style, target_cat), []).append((item_cat, ids, matrix))
        for (style, target_cat), groups in sorted(by_target.items()):
            fname = f"{_slug(style)}__{_slug(target_cat)}.bin"
            segments = []
            count = 0
            with open(directory / fname, "wb") as f:
                header = {
                    "dim": self.dim,
                    "count": sum(len(ids) for _, ids, _ in groups),
                    "style": style,
                    "category": target_cat,
                }
                f.write(json.dumps(header).encode() + b"\n")
                for item_cat, ids, matrix in groups:
                    segments.append(
                        {"item_category": item_cat, "start": count, "count": len(ids)}
                    )
                    for iid, row in zip(ids, matrix):
                        encoded = iid.encode()
                        f.write(struct.pack("<H", len(encoded)))
                        f.write(encoded)
                        f.write(row.astype("<f8").tobytes())
                    count += len(ids)
            shards.append(
                {
                    "style": style,
                    "target_category": target_cat,
                    "file": fname,
                    "count": count,
                    "segments": segments,
                }
            )
        manifest = {
            "format": STORE_FORMAT,
            "dim": self.dim,
            "styles": self.styles,
            "categories": self.categories,
            "style_vectors": {s: v.tolist() for s, v in self.style_vectors.items()},
            "shards": shards,
        }
        with open(directory / "manifest.json", "w") as f:
            json.dump(manifest, f)

    @classmethod
    def load(cls, directory) -> "EmbeddingStore":
        directory = Path(directory)
        with open(directory / "manifest.json") as f:
            manifest = json.load(f)
        if manifest.get("format") != STORE_FORMAT:
            raise GenerationError(
                f"unsupported store format {manifest.get('format')!r} in {directory}"
            )
        store = cls(
            dim=manifest["dim"],
            styles=manifest["styles"],
            categories=manifest["categories"],
            style_vectors={
                s: np.array(v, dtype=np.float64)
                for s, v in manifest["style_vectors"].items()
            },
            item_categories={},
        )
        for shard in manifest["shards"]:
            with open(directory / shard["file"], "rb") as f:
                header = json.loads(f.readline().decode())
                if header["dim"] != store.dim:
                    raise GenerationError(f"dim mismatch in shard {shard['file']}")
                ids, rows = [], []
                for _ in range(header["count"]):
                    (id_len,) = struct.unpack("<H", f.read(2))
                    ids.append(f.read(id_len).decode())
                    rows.append(np.frombuffer(f.read(8 * store.dim), dtype="<f8"))
            matrix = np.stack(rows) if rows else np.zeros((0, store.dim))
            for seg in shard["segments"]:
                lo, hi = seg["start"], seg["start"] + seg["count"]
                store.add_slice(
                    shard["style"],
                    seg["item_category"],
                    shard["target_category"],
                    ids[lo:hi],
                    matrix[lo:hi],
                )
        return store


def _slug(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "-" for c in name)


def precompute_embeddings(
    catalog: Catalog,
    vocab: Vocabulary,
    template_categories: list[str],
    styles: list[str],
    embedder,
    pooled: dict[int, PooledStyle],
    deterministic: bool = True,
    rng: np.random.Generator | None = None,
) -> EmbeddingStore:
    """Embed every catalog item of the template categories toward every
    other template category, under each style's generation vector."""
    for cat in template_categories:
        if cat not in vocab.category_index:
            raise GenerationError(f"unknown category {cat!r}")
    store = EmbeddingStore(
        dim=embedder.config.embed_dim,
        styles=list(styles),
        categories=list(template_categories),
        style_vectors={},
        item_categories={},
    )
    items_by_cat: dict[str, list] = {c: [] for c in template_categories}
    for item in catalog.items:
        cat_name = vocab.categories[item.coarse_category]
        if cat_name in items_by_cat:
            items_by_cat[cat_name].append(item)
    for cat in template_categories:
        items_by_cat[cat].sort(key=lambda it: it.item_id)

    for style in styles:
        style_idx = vocab.style_index.get(style)
        if style_idx is None or style_idx not in pooled:
            raise GenerationError(f"no pooled moments for style {style!r}")
        style_vec = style_vector_for_generation(pooled[style_idx], rng, deterministic)
        store.style_vectors[style] = style_vec
        for item_cat in template_categories:
            items = items_by_cat[item_cat]
            if not items:
                continue
            feats = np.stack([it.features for it in items])
            ids = [it.item_id for it in items]
            for target_cat in template_categories:
                if target_cat == item_cat:
                    continue
                matrix = embedder.embed_slice(
                    feats,
                    vocab.category_index[item_cat],
                    vocab.category_index[target_cat],
                    style_vec,
                )
                store.add_slice(style, item_cat, target_cat, ids, matrix)
    return store


# ---------------------------------------------------------------------------
# beam search


@dataclass
class GeneratedOutfit:
    item_ids: tuple[str, ...]
    categories: tuple[str, ...]
    score: float


def beam_search(
    anchor_id: str,
    template: list[str],
    style: str,
    store: EmbeddingStore,
    beam_width: int = 3,
    top_k: int | None = None,
) -> list[GeneratedOutfit]:
    """Grow outfits slot by slot, keeping the ``beam_width`` best partials.

    Extending a beam with a candidate adds the summed negative squared
    distance between the candidate's and each chosen item's mutual
    embeddings. Ties break toward lexicographically smaller item ids.
    """
    if len(template) < 2:
        raise GenerationError("template needs at least 2 slots")
    if len(set(template)) != len(template):
        raise GenerationError("template categories must be distinct")
    anchor_cat = store.item_categories.get(anchor_id)
    if anchor_cat is None:
        raise GenerationError(f"anchor {anchor_id!r} is not in the store")
    if anchor_cat != template[0]:
        raise GenerationError(
            f"anchor category {anchor_cat!r} does not match template slot 0 "
            f"({template[0]!r})"
        )
    if not store.has_style(style):
        raise GenerationError(f"style {style!r} has no embeddings in the store")

    beams: list[tuple[float, tuple[str, ...]]] = [(0.0, (anchor_id,))]
    chosen_cats = [template[0]]
    for slot_index, slot_cat in enumerate(template[1:], start=1):
        try:
            cand_ids, _ = store.candidates(style, slot_cat, chosen_cats[0])
        except GenerationError as e:
            raise GenerationError(f"slot {slot_index} ({slot_cat!r}): {e}") from e
        if not cand_ids:
            raise GenerationError(f"slot {slot_index} ({slot_cat!r}) has no candidates")
        expanded: list[tuple[float, tuple[str, ...]]] = []
        for score, items in beams:
            delta = np.zeros(len(cand_ids))
            for chosen_id, chosen_cat in zip(items, chosen_cats):
                toward_cand = store.vector(style, chosen_id, slot_cat)
                ids, matrix = store.candidates(style, slot_cat, chosen_cat)
                diff = matrix - toward_cand
                delta -= np.einsum("ij,ij->i", diff, diff)
            for cand, d in zip(cand_ids, delta):
                expanded.append((score + float(d), items + (cand,)))
        expanded.sort(key=lambda e: (-e[0], e[1]))
        beams = expanded[:beam_width]
        chosen_cats.append(slot_cat)

    results = [
        GeneratedOutfit(items, tuple(template), score) for score, items in beams
    ]
    if top_k is not None:
        results = results[:top_k]
    return results


# ---------------------------------------------------------------------------
# parallel batch generation


@dataclass(frozen=True)
class GenerationTask:
    anchor_id: str
    template: tuple[str, ...]
    style: str


_WORKER_STORE: EmbeddingStore | None = None
_WORKER_ARGS: tuple[int, int | None] = (3, None)


def _init_worker(store, beam_width, top_k):
    global _WORKER_STORE, _WORKER_ARGS
    _WORKER_STORE = store
    _WORKER_ARGS = (beam_width, top_k)


def _run_chunk(tasks: list[GenerationTask]):
    beam_width, top_k = _WORKER_ARGS
    return [
        (t, beam_search(t.anchor_id, list(t.template), t.style, _WORKER_STORE,
                        beam_width, top_k))
        for t in tasks
    ]


def generate_batch(
    tasks: list[GenerationTask],
    store: EmbeddingStore,
    beam_width: int = 3,
    top_k: int | None = None,
    parallelism: int = 1,
) -> list[tuple[GenerationTask, list[GeneratedOutfit]]]:
    """Run independent beam searches, sharded across worker processes.

    Results are ordered by (anchor id, style, template) regardless of the
    worker count or scheduling, so any parallelism level is bit-identical
    to sequential execution.
    """
    order_key = lambda pair: (pair[0].anchor_id, pair[0].style, pair[0].template)
    if not tasks:
        return []
    if parallelism <= 1:
        _init_worker(store, beam_width, top_k)
        return sorted(_run_chunk(list(tasks)), key=order_key)
    chunks = [list(c) for c in np.array_split(tasks, parallelism * 4) if len(c)]
    results = []
    with ProcessPoolExecutor(
        max_workers=parallelism,
        initializer=_init_worker,
        initargs=(store, beam_width, top_k),
    ) as pool:
        for chunk_result in pool.map(_run_chunk, chunks):
            results.extend(chunk_result)
    return sorted(results, key=order_key)


# ---------------------------------------------------------------------------
# throughput benchmark


@dataclass
class BenchmarkConfig:
    n_anchors: int = 600
    candidates_per_category: int = 300
    slots: int = 5
    beam_width: int = 3
    worker_counts: tuple[int, ...] = (1, 2, 4, 8)
    dim: int = 64
    seed: int = 0


@dataclass
class BenchmarkReport:
    config: BenchmarkConfig
    seconds: dict[int, float]
    anchors_per_second: dict[int, float]
    outputs_identical: bool

    def speedup(self, workers: int) -> float:
        return self.seconds[1] / self.seconds[workers]


def synthetic_store(config: BenchmarkConfig) -> tuple[EmbeddingStore, list[str]]:
    """Random-embedding store shaped like the benchmark grid; the anchors
    are the items of the first category."""
    rng = np.random.default_rng(config.seed)
    cats = [f"cat{i}" for i in range(config.slots)]
    store = EmbeddingStore(
        dim=config.dim,
        styles=["bench"],
        categories=cats,
        style_vectors={"bench": np.zeros(config.dim)},
        item_categories={},
    )
    ids_by_cat = {}
    for ci, cat in enumerate(cats):
        n = config.n_anchors if ci == 0 else config.candidates_per_category
        ids_by_cat[cat] = [f"{cat}-{i:06d}" for i in range(n)]
    for item_cat in cats:
        for target_cat in cats:
            if item_cat == target_cat:
                continue
            matrix = rng.standard_normal((len(ids_by_cat[item_cat]), config.dim))
            store.add_slice("bench", item_cat, target_cat, ids_by_cat[item_cat], matrix)
    return store, ids_by_cat[cats[0]]


def benchmark(config: BenchmarkConfig | None = None) -> BenchmarkReport:
    config = config or BenchmarkConfig()
    store, anchors = synthetic_store(config)
    template = tuple(store.categories)
    tasks = [GenerationTask(a, template, "bench") for a in anchors]
    seconds: dict[int, float] = {}
    outputs = {}
    for workers in config.worker_counts:
        start = time.perf_counter()
        outputs[workers] = generate_batch(
            tasks, store, beam_width=config.beam_width, parallelism=workers
        )
        seconds[workers] = time.perf_counter() - start
    baseline = outputs[config.worker_counts[0]]
    identical = all(outputs[w] == baseline for w in config.worker_counts)
    return BenchmarkReport(
        config=config,
        seconds=seconds,
        anchors_per_second={w: len(tasks) / s for w, s in seconds.items()},
        outputs_identical=identical,
    )
