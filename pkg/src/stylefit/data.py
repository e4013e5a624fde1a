"""Catalog/outfit data model, JSONL persistence, synthetic data with planted
style structure, and the negative samplers used to build evaluation sets.

File formats (one JSON object per line):
  catalog.jsonl  {"item_id", "coarse_category", "fine_category"?, "features": [...]}
  outfits.jsonl  {"outfit_id", "item_ids": [...], "style"}
  styles.json    ordered list of style names
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

DEFAULT_STYLES = ["Work", "Casual", "Party", "Relax", "Travel", "Athleisure", "Sporty"]
DEFAULT_CATEGORIES = ["topwear", "bottomwear", "footwear", "bag", "jewellery"]

MAX_SAMPLING_ATTEMPTS = 100


class LoadError(ValueError):
    """A dataset file failed validation; message carries the line number."""


class ConfigError(ValueError):
    """A synthetic-data configuration cannot be satisfied."""


class SamplingError(RuntimeError):
    """No admissible negative exists for the requested blank."""


@dataclass
class Item:
    item_id: str
    coarse_category: int
    features: np.ndarray
    fine_category: int | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)


@dataclass
class Outfit:
    """An unordered set of item ids with a single style label.

    ``item_ids`` is stored sorted so that set semantics survive
    serialization round trips and iteration order is reproducible.
    """

    outfit_id: str
    item_ids: tuple[str, ...]
    style: int

    def __post_init__(self):
        self.item_ids = tuple(sorted(self.item_ids))


@dataclass
class Vocabulary:
    """Ordered name lists for styles and categories, with index lookups."""

    styles: list[str]
    categories: list[str]
    fine_categories: list[str] = field(default_factory=list)
    fine_to_coarse: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.styles)) != len(self.styles):
            raise ConfigError("style names must be unique")
        if len(self.styles) < 2:
            raise ConfigError("need at least 2 styles")
        self.style_index = {name: i for i, name in enumerate(self.styles)}
        self.category_index = {name: i for i, name in enumerate(self.categories)}
        self.fine_index = {name: i for i, name in enumerate(self.fine_categories)}

    @property
    def n_styles(self) -> int:
        return len(self.styles)


@dataclass
class FITBQuestion:
    query_items: tuple[str, ...]
    options: tuple[str, str, str, str]
    answer_index: int
    style: int
    blank_category: int  # coarse index for SN, fine index for HN
    mode: str  # "sn" | "hn"


@dataclass
class CompatExample:
    item_ids: tuple[str, ...]
    label: int  # 1 positive, 0 negative
    style: int


@dataclass
class Catalog:
    items: list[Item]

    def __post_init__(self):
        self.by_id = {it.item_id: it for it in self.items}
        self.by_coarse: dict[int, list[str]] = {}
        self.by_fine: dict[int, list[str]] = {}
        for it in self.items:
            self.by_coarse.setdefault(it.coarse_category, []).append(it.item_id)
            if it.fine_category is not None:
                self.by_fine.setdefault(it.fine_category, []).append(it.item_id)

    def __len__(self) -> int:
        return len(self.items)

    def get(self, item_id: str) -> Item:
        return self.by_id[item_id]

    def features_of(self, item_ids) -> np.ndarray:
        return np.stack([self.by_id[i].features for i in item_ids])


# ---------------------------------------------------------------------------
# persistence


def save_catalog(path, catalog: Catalog, vocab: Vocabulary) -> None:
    with open(path, "w") as f:
        for it in catalog.items:
            rec = {
                "item_id": it.item_id,
                "coarse_category": vocab.categories[it.coarse_category],
                "features": it.features.tolist(),
            }
            if it.fine_category is not None:
                rec["fine_category"] = vocab.fine_categories[it.fine_category]
            f.write(json.dumps(rec) + "\n")


def save_outfits(path, outfits: list[Outfit], vocab: Vocabulary) -> None:
    with open(path, "w") as f:
        for o in outfits:
            rec = {
                "outfit_id": o.outfit_id,
                "item_ids": list(o.item_ids),
                "style": vocab.styles[o.style],
            }
            f.write(json.dumps(rec) + "\n")


def save_styles(path, vocab: Vocabulary) -> None:
    with open(path, "w") as f:
        json.dump(
            {
                "styles": vocab.styles,
                "categories": vocab.categories,
                "fine_categories": vocab.fine_categories,
                "fine_to_coarse": {
                    vocab.fine_categories[k]: vocab.categories[v]
                    for k, v in vocab.fine_to_coarse.items()
                },
            },
            f,
            indent=2,
        )


def load_styles(path) -> Vocabulary:
    with open(path) as f:
        raw = json.load(f)
    fine = raw.get("fine_categories", [])
    vocab = Vocabulary(
        styles=raw["styles"],
        categories=raw["categories"],
        fine_categories=fine,
    )
    mapping = raw.get("fine_to_coarse", {})
    vocab.fine_to_coarse = {
        vocab.fine_index[k]: vocab.category_index[v] for k, v in mapping.items()
    }
    return vocab


def load_catalog(path, vocab: Vocabulary) -> Catalog:
    items: list[Item] = []
    seen: set[str] = set()
    feature_dim: int | None = None
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise LoadError(f"{path}:{lineno}: malformed JSON ({e.msg})") from e
            try:
                item_id = rec["item_id"]
                coarse_name = rec["coarse_category"]
                features = rec["features"]
            except KeyError as e:
                raise LoadError(f"{path}:{lineno}: missing field {e}") from e
            if feature_dim is None:
                feature_dim = len(features)
            elif len(features) != feature_dim:
                raise LoadError(
                    f"{path}:{lineno}: feature vector has length {len(features)}, "
                    f"expected {feature_dim}"
                )
            if item_id in seen:
                raise LoadError(f"{path}:{lineno}: duplicate item id {item_id!r}")
            seen.add(item_id)
            if coarse_name not in vocab.category_index:
                raise LoadError(
                    f"{path}:{lineno}: unknown coarse category {coarse_name!r}"
                )
            coarse = vocab.category_index[coarse_name]
            fine = None
            if "fine_category" in rec and rec["fine_category"] is not None:
                fine_name = rec["fine_category"]
                if fine_name not in vocab.fine_index:
                    raise LoadError(
                        f"{path}:{lineno}: unknown fine category {fine_name!r}"
                    )
                fine = vocab.fine_index[fine_name]
                if vocab.fine_to_coarse.get(fine) != coarse:
                    raise LoadError(
                        f"{path}:{lineno}: fine category {fine_name!r} does not belong "
                        f"to coarse category {coarse_name!r}"
                    )
            items.append(Item(item_id, coarse, features, fine))
    return Catalog(items)


def load_outfits(path, catalog: Catalog, vocab: Vocabulary) -> list[Outfit]:
    outfits: list[Outfit] = []
    seen: set[str] = set()
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise LoadError(f"{path}:{lineno}: malformed JSON ({e.msg})") from e
            try:
                outfit_id = rec["outfit_id"]
                item_ids = rec["item_ids"]
                style_name = rec["style"]
            except KeyError as e:
                raise LoadError(f"{path}:{lineno}: missing field {e}") from e
            if outfit_id in seen:
                raise LoadError(f"{path}:{lineno}: duplicate outfit id {outfit_id!r}")
            seen.add(outfit_id)
            if len(set(item_ids)) != len(item_ids):
                raise LoadError(f"{path}:{lineno}: duplicate item ids in outfit")
            if len(item_ids) < 2:
                raise LoadError(f"{path}:{lineno}: outfit needs at least 2 items")
            for iid in item_ids:
                if iid not in catalog.by_id:
                    raise LoadError(f"{path}:{lineno}: unknown item id {iid!r}")
            if style_name not in vocab.style_index:
                raise LoadError(f"{path}:{lineno}: unknown style {style_name!r}")
            outfits.append(Outfit(outfit_id, tuple(item_ids), vocab.style_index[style_name]))
    return outfits


# ---------------------------------------------------------------------------
# synthetic data with planted style-conditional structure


@dataclass
class SynthConfig:
    """Knobs for the planted-structure generator.

    Every (coarse category, style) pair gets a hidden prototype direction.
    Prototypes of styles that share a fine category also share a base
    direction, so fine-category mates are genuinely closer in feature
    space; that is what makes hard negatives hard.
    """

    styles: list[str] = field(default_factory=lambda: list(DEFAULT_STYLES))
    categories: list[str] = field(default_factory=lambda: list(DEFAULT_CATEGORIES))
    feature_dim: int = 64
    items_per_cluster: int = 30
    n_outfits: int = 5000
    proportions: list[float] | None = None  # per-style, defaults to uniform
    outfit_sizes: list[int] = field(default_factory=lambda: [3, 4, 5])
    fine_per_coarse: int = 3
    noise_scale: float = 0.25
    style_spread: float = 1.0

    @classmethod
    def from_json(cls, path) -> "SynthConfig":
        with open(path) as f:
            raw = json.load(f)
        return cls(**raw)


def _build_vocab(config: SynthConfig) -> Vocabulary:
    fine_names: list[str] = []
    fine_to_coarse: dict[int, int] = {}
    for ci, cat in enumerate(config.categories):
        for g in range(config.fine_per_coarse):
            fine_to_coarse[len(fine_names)] = ci
            fine_names.append(f"{cat}-f{g}")
    vocab = Vocabulary(
        styles=list(config.styles),
        categories=list(config.categories),
        fine_categories=fine_names,
    )
    vocab.fine_to_coarse = fine_to_coarse
    return vocab


def _style_counts(config: SynthConfig) -> list[int]:
    s = len(config.styles)
    props = config.proportions or [1.0 / s] * s
    if len(props) != s:
        raise ConfigError("proportions must have one entry per style")
    total = sum(props)
    props = [p / total for p in props]
    # largest-remainder allocation keeps counts within one outfit of exact
    raw = [p * config.n_outfits for p in props]
    counts = [int(x) for x in raw]
    remainders = sorted(
        range(s), key=lambda i: (raw[i] - counts[i], -i), reverse=True
    )
    for i in remainders[: config.n_outfits - sum(counts)]:
        counts[i] += 1
    return counts


def generate_synthetic(config: SynthConfig, seed: int) -> tuple[Catalog, list[Outfit], Vocabulary]:
    """Deterministically generate a catalog and outfits from ``(config, seed)``.

    Items of cluster (category, style) are the style's per-category
    prototype plus isotropic noise; an outfit of style ``s`` draws each of
    its items from ``s``'s clusters, so item compatibility is
    style-conditional by construction.
    """
    if max(config.outfit_sizes) > len(config.categories):
        raise ConfigError(
            f"outfit size {max(config.outfit_sizes)} exceeds the "
            f"{len(config.categories)} available category slots"
        )
    if config.items_per_cluster < 2:
        raise ConfigError("need at least 2 items per (category, style) cluster")
    vocab = _build_vocab(config)
    rng = np.random.default_rng(seed)
    n_styles = len(config.styles)
    n_cats = len(config.categories)
    dim = config.feature_dim

    def unit(v: np.ndarray) -> np.ndarray:
        return v / np.linalg.norm(v)

    # shared base per (category, fine group) + per-style offset
    bases = {
        (ci, g): unit(rng.standard_normal(dim))
        for ci in range(n_cats)
        for g in range(config.fine_per_coarse)
    }
    prototypes = {}
    for ci in range(n_cats):
        for si in range(n_styles):
            g = si % config.fine_per_coarse
            offset = unit(rng.standard_normal(dim))
            prototypes[(ci, si)] = unit(bases[(ci, g)] + config.style_spread * offset)

    items: list[Item] = []
    cluster_ids: dict[tuple[int, int], list[str]] = {}
    counter = 0
    for ci in range(n_cats):
        for si in range(n_styles):
            fine = ci * config.fine_per_coarse + si % config.fine_per_coarse
            ids = []
            for _ in range(config.items_per_cluster):
                feats = prototypes[(ci, si)] + config.noise_scale * rng.standard_normal(dim)
                items.append(Item(f"item-{counter:06d}", ci, feats, fine))
                ids.append(f"item-{counter:06d}")
                counter += 1
            cluster_ids[(ci, si)] = ids

    outfits: list[Outfit] = []
    counts = _style_counts(config)
    oid = 0
    for si, n in enumerate(counts):
        for _ in range(n):
            size = int(rng.choice(config.outfit_sizes))
            cats = rng.permutation(n_cats)[:size]
            chosen = [
                cluster_ids[(int(ci), si)][int(rng.integers(config.items_per_cluster))]
                for ci in cats
            ]
            outfits.append(Outfit(f"outfit-{oid:06d}", tuple(chosen), si))
            oid += 1
    return Catalog(items), outfits, vocab


# ---------------------------------------------------------------------------
# negative samplers


def sample_soft_negative(
    outfit: Outfit, blank_item: Item, catalog: Catalog, rng: np.random.Generator
) -> Item:
    """Uniform item from the blank's coarse category, excluding the outfit."""
    pool = [
        iid
        for iid in catalog.by_coarse.get(blank_item.coarse_category, [])
        if iid not in outfit.item_ids
    ]
    if not pool:
        raise SamplingError(
            f"no soft-negative candidate in coarse category {blank_item.coarse_category}"
        )
    return catalog.get(pool[int(rng.integers(len(pool)))])


def sample_hard_negative(
    outfit: Outfit, blank_item: Item, catalog: Catalog, rng: np.random.Generator
) -> Item:
    """Uniform item from the blank's fine category, excluding the outfit."""
    if blank_item.fine_category is None:
        raise SamplingError(f"item {blank_item.item_id} has no fine category")
    pool = [
        iid
        for iid in catalog.by_fine.get(blank_item.fine_category, [])
        if iid not in outfit.item_ids
    ]
    if not pool:
        raise SamplingError(
            f"no hard-negative candidate in fine category {blank_item.fine_category}"
        )
    return catalog.get(pool[int(rng.integers(len(pool)))])


def _sampler(mode: str):
    if mode == "sn":
        return sample_soft_negative
    if mode == "hn":
        return sample_hard_negative
    raise ValueError(f"unknown negative mode {mode!r} (expected 'sn' or 'hn')")


def _distinct_negatives(outfit, blank, catalog, rng, mode, count) -> list[str]:
    sampler = _sampler(mode)
    picked: list[str] = []
    attempts = 0
    while len(picked) < count:
        if attempts >= MAX_SAMPLING_ATTEMPTS:
            raise SamplingError(
                f"could not draw {count} distinct {mode} negatives for "
                f"blank {blank.item_id} within {MAX_SAMPLING_ATTEMPTS} attempts"
            )
        attempts += 1
        cand = sampler(outfit, blank, catalog, rng)
        if cand.item_id not in picked:
            picked.append(cand.item_id)
    return picked


def build_fitb_set(
    outfits: list[Outfit],
    catalog: Catalog,
    mode: str,
    n_sets: int = 5,
    rng: np.random.Generator | None = None,
    seed: int | None = None,
) -> list[list[FITBQuestion]]:
    """One question per outfit per set: hold out a random item, offer it
    against three mode-sampled negatives from the matching category."""
    streams = _streams(rng, seed, n_sets)
    sets: list[list[FITBQuestion]] = []
    for sr in streams:
        questions: list[FITBQuestion] = []
        for outfit in outfits:
            question = None
            order = sr.permutation(len(outfit.item_ids))
            for pos in order:  # retry other blank positions if one is unsamplable
                blank_id = outfit.item_ids[int(pos)]
                blank = catalog.get(blank_id)
                try:
                    negatives = _distinct_negatives(outfit, blank, catalog, sr, mode, 3)
                except SamplingError:
                    continue
                options = negatives + [blank_id]
                perm = sr.permutation(4)
                options = [options[int(i)] for i in perm]
                answer = options.index(blank_id)
                blank_cat = (
                    blank.coarse_category if mode == "sn" else blank.fine_category
                )
                question = FITBQuestion(
                    query_items=tuple(i for i in outfit.item_ids if i != blank_id),
                    options=tuple(options),
                    answer_index=answer,
                    style=outfit.style,
                    blank_category=blank_cat,
                    mode=mode,
                )
                break
            if question is None:
                raise SamplingError(
                    f"outfit {outfit.outfit_id}: no blank position admits "
                    f"3 distinct {mode} negatives"
                )
            questions.append(question)
        sets.append(questions)
    return sets


def build_compat_set(
    outfits: list[Outfit],
    catalog: Catalog,
    mode: str,
    n_sets: int = 5,
    rng: np.random.Generator | None = None,
    seed: int | None = None,
) -> list[list[CompatExample]]:
    """Each positive outfit paired with a negative whose every item is
    replaced by a mode-sampled negative of the matching category."""
    sampler = _sampler(mode)
    streams = _streams(rng, seed, n_sets)
    sets: list[list[CompatExample]] = []
    for sr in streams:
        examples: list[CompatExample] = []
        for outfit in outfits:
            examples.append(CompatExample(outfit.item_ids, 1, outfit.style))
            replaced = tuple(
                sampler(outfit, catalog.get(iid), catalog, sr).item_id
                for iid in outfit.item_ids
            )
            examples.append(CompatExample(replaced, 0, outfit.style))
        sets.append(examples)
    return sets


def _streams(rng, seed, n_sets) -> list[np.random.Generator]:
    """Independent per-set RNG streams so sets can be built in parallel."""
    if rng is not None:
        return [rng] * n_sets
    if seed is None:
        raise ValueError("provide either rng or seed")
    return [np.random.default_rng(np.random.SeedSequence([seed, k])) for k in range(n_sets)]


# ---------------------------------------------------------------------------
# splits


def split(
    outfits: list[Outfit],
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> tuple[list[Outfit], list[Outfit], list[Outfit]]:
    """Disjoint train/val/test split, stratified by style, seeded."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must sum to 1, got {ratios}")
    rng = np.random.default_rng(seed)
    by_style: dict[int, list[Outfit]] = {}
    for o in outfits:
        by_style.setdefault(o.style, []).append(o)
    train: list[Outfit] = []
    val: list[Outfit] = []
    test: list[Outfit] = []
    for style in sorted(by_style):
        group = by_style[style]
        order = rng.permutation(len(group))
        n = len(group)
        n_train = round(ratios[0] * n)
        n_val = round(ratios[1] * n)
        for rank, idx in enumerate(order):
            if rank < n_train:
                train.append(group[int(idx)])
            elif rank < n_train + n_val:
                val.append(group[int(idx)])
            else:
                test.append(group[int(idx)])
    key = lambda o: o.outfit_id
    return sorted(train, key=key), sorted(val, key=key), sorted(test, key=key)


def save_split(path, train, val, test) -> None:
    with open(path, "w") as f:
        json.dump(
            {
                "train": [o.outfit_id for o in train],
                "val": [o.outfit_id for o in val],
                "test": [o.outfit_id for o in test],
            },
            f,
        )


def load_split(path, outfits: list[Outfit]):
    with open(path) as f:
        ids = json.load(f)
    by_id = {o.outfit_id: o for o in outfits}
    return tuple([by_id[i] for i in ids[part]] for part in ("train", "val", "test"))
