"""Fill-in-the-blank accuracy and compatibility AUROC over repeated test
sets, reported as mean +/- std in percent.

Scoring is deterministic: the style vector is the encoded Gaussian's mean
(no sampling), and FITB ties resolve to the lowest option index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import Catalog, CompatExample, FITBQuestion, Item, Outfit, build_compat_set, build_fitb_set
from .style_encoder import StyleEncoder
from .subspace import EmbeddingQuery, SubspaceEmbedder


@dataclass
class CompatibilityModel:
    """Frozen encoder + embedder pair used by every evaluation path."""

    encoder: StyleEncoder
    embedder: SubspaceEmbedder

    @classmethod
    def load(cls, encoder_path, embedder_path) -> "CompatibilityModel":
        return cls(
            encoder=StyleEncoder.load(encoder_path),
            embedder=SubspaceEmbedder.load(embedder_path),
        )


def outfit_score(
    items: list[Item],
    model: CompatibilityModel,
    style_vector: np.ndarray | None = None,
) -> float:
    """Mean over ordered item pairs of the negative squared embedding
    distance; the style vector defaults to the mean encoding of the
    candidate set itself."""
    if len(items) < 2:
        raise ValueError("outfit_score needs at least 2 items")
    features = np.stack([it.features for it in items])
    z = style_vector if style_vector is not None else model.encoder.encode_mean(features)
    cats = [it.coarse_category for it in items]
    cached: dict[tuple[int, int], np.ndarray] = {}

    def emb(i: int, target_cat: int) -> np.ndarray:
        key = (i, target_cat)
        if key not in cached:
            cached[key] = model.embedder.embed(
                EmbeddingQuery(items[i].features, cats[i], target_cat, z)
            )
        return cached[key]

    total = 0.0
    n = len(items)
    for i in range(n):
        for j in range(i + 1, n):
            diff = emb(i, cats[j]) - emb(j, cats[i])
            total += -float(diff @ diff)
    # each unordered pair contributes the same value for both orders
    return total / (n * (n - 1) / 2)


def fitb_accuracy(
    questions: list[FITBQuestion],
    catalog: Catalog,
    model: CompatibilityModel,
    scorer=None,
) -> float:
    """Percent of questions whose best-scoring option is the held-out item.

    ``scorer`` defaults to ``outfit_score``; tests inject oracles here.
    """
    scorer = scorer or (lambda items: outfit_score(items, model))
    correct = 0
    for q in questions:
        query = [catalog.get(i) for i in q.query_items]
        scores = [scorer(query + [catalog.get(opt)]) for opt in q.options]
        if int(np.argmax(scores)) == q.answer_index:
            correct += 1
    return 100.0 * correct / len(questions)


def auroc(scores, labels) -> float:
    """Rank-sum (Mann-Whitney) AUROC in [0, 1], ties handled by mid-ranks."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC needs both positive and negative examples")
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    ranks = np.empty(len(scores))
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # mid-rank, 1-based
        i = j + 1
    rank_sum = ranks[pos].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def compat_auroc(
    examples: list[CompatExample],
    catalog: Catalog,
    model: CompatibilityModel,
    scorer=None,
) -> float:
    """AUROC (percent) of outfit scores against the positive/negative labels."""
    scorer = scorer or (lambda items: outfit_score(items, model))
    scores = [scorer([catalog.get(i) for i in ex.item_ids]) for ex in examples]
    labels = [ex.label for ex in examples]
    return 100.0 * auroc(scores, labels)


# ---------------------------------------------------------------------------
# reporting over the five SN and five HN sets


@dataclass
class MetricSummary:
    mean: float
    std: float
    values: list[float]

    @classmethod
    def of(cls, values: list[float]) -> "MetricSummary":
        arr = np.asarray(values, dtype=np.float64)
        return cls(mean=float(arr.mean()), std=float(arr.std()), values=list(map(float, values)))


@dataclass
class EvalReport:
    fitb: dict[str, MetricSummary]
    auc: dict[str, MetricSummary]

    def notes(self) -> list[str]:
        """Soft expectations (reported, not asserted): hard negatives should
        not score above soft negatives for a trained model."""
        out = []
        if "sn" in self.fitb and "hn" in self.fitb:
            if self.fitb["hn"].mean > self.fitb["sn"].mean:
                out.append("unexpected: FITB HN mean exceeds SN mean")
            if self.auc["hn"].mean > self.auc["sn"].mean:
                out.append("unexpected: AUC HN mean exceeds SN mean")
        return out

    def to_dict(self) -> dict:
        return {
            "fitb": {m: vars(s) for m, s in self.fitb.items()},
            "auc": {m: vars(s) for m, s in self.auc.items()},
            "notes": self.notes(),
        }

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)

    def summary_lines(self) -> list[str]:
        lines = []
        for mode in sorted(self.fitb):
            lines.append(
                f"{mode.upper()}: FITB {self.fitb[mode].mean:.2f} +/- {self.fitb[mode].std:.2f}  "
                f"AUC {self.auc[mode].mean:.2f} +/- {self.auc[mode].std:.2f}"
            )
        return lines


@dataclass
class EvalData:
    catalog: Catalog
    fitb_sets: dict[str, list[list[FITBQuestion]]]
    compat_sets: dict[str, list[list[CompatExample]]]


def build_eval_data(
    test_outfits: list[Outfit],
    catalog: Catalog,
    modes: tuple[str, ...] = ("sn", "hn"),
    n_sets: int = 5,
    seed: int = 0,
) -> EvalData:
    fitb_sets = {}
    compat_sets = {}
    for k, mode in enumerate(modes):
        fitb_sets[mode] = build_fitb_set(
            test_outfits, catalog, mode=mode, n_sets=n_sets, seed=seed * 1000 + 2 * k
        )
        compat_sets[mode] = build_compat_set(
            test_outfits, catalog, mode=mode, n_sets=n_sets, seed=seed * 1000 + 2 * k + 1
        )
    return EvalData(catalog, fitb_sets, compat_sets)


def evaluate(model: CompatibilityModel, data: EvalData) -> EvalReport:
    fitb = {}
    auc = {}
    for mode in sorted(data.fitb_sets):
        fitb[mode] = MetricSummary.of(
            [fitb_accuracy(qs, data.catalog, model) for qs in data.fitb_sets[mode]]
        )
        auc[mode] = MetricSummary.of(
            [compat_auroc(ex, data.catalog, model) for ex in data.compat_sets[mode]]
        )
    return EvalReport(fitb=fitb, auc=auc)
