"""HTTP demo backend: catalog browsing plus on-demand style-guided outfit
generation over a precomputed embedding store.

All state is loaded once at startup and immutable afterwards, so identical
requests produce identical responses and handlers are safe to run
concurrently. Failures always carry a structured envelope
``{"error": {"code", "message"}}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .data import Catalog, Vocabulary, load_catalog, load_styles
from .generation import EmbeddingStore, GenerationError, beam_search


class ServiceError(Exception):
    def __init__(self, code: str, message: str, status: int = 400):
        super().__init__(message)
        self.code = code
        self.message = message
        self.status = status


@dataclass
class Template:
    name: str
    slots: list[str]


@dataclass
class ServiceArtifacts:
    vocab: Vocabulary
    catalog: Catalog
    store: EmbeddingStore
    templates: list[Template]
    legitimate_styles: dict[str, list[str]] = field(default_factory=dict)
    top_k: int = 5
    beam_width: int = 3
    ui_dir: Path | None = None

    @classmethod
    def load(cls, directory) -> "ServiceArtifacts":
        directory = Path(directory)
        vocab = load_styles(directory / "styles.json")
        catalog = load_catalog(directory / "catalog.jsonl", vocab)
        store = EmbeddingStore.load(directory / "store")
        with open(directory / "templates.json") as f:
            raw = json.load(f)
        templates = [Template(t["name"], list(t["slots"])) for t in raw["templates"]]
        settings = {}
        settings_path = directory / "service.json"
        if settings_path.exists():
            with open(settings_path) as f:
                settings = json.load(f)
        ui_dir = directory / "ui"
        return cls(
            vocab=vocab,
            catalog=catalog,
            store=store,
            templates=templates,
            legitimate_styles=settings.get("legitimate_styles", {}),
            top_k=settings.get("top_k", 5),
            beam_width=settings.get("beam_width", 3),
            ui_dir=ui_dir if ui_dir.is_dir() else None,
        )

    def styles_for_category(self, category: str) -> list[str]:
        allowed = self.legitimate_styles.get(category)
        if allowed is None:
            return list(self.vocab.styles)
        return [s for s in self.vocab.styles if s in allowed]

    def template_by_name(self, name: str) -> Template | None:
        for t in self.templates:
            if t.name == name:
                return t
        return None


class GenerateRequest(BaseModel):
    anchor_item_id: str
    style: str = "all"  # a style name, or "all" for per-style results
    template: str | list[str] | None = None  # name, explicit slots, or default
    top_k: int = 5


def create_app(artifacts: ServiceArtifacts) -> FastAPI:
    app = FastAPI(title="stylefit demo service")
    vocab = artifacts.vocab
    catalog = artifacts.catalog

    @app.exception_handler(ServiceError)
    async def service_error_handler(request: Request, exc: ServiceError):
        return JSONResponse(
            status_code=exc.status,
            content={"error": {"code": exc.code, "message": exc.message}},
        )

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/categories")
    def categories():
        return {"categories": list(vocab.categories)}

    @app.get("/styles")
    def styles(category: str | None = None):
        if category is None:
            return {"styles": list(vocab.styles)}
        if category not in vocab.category_index:
            raise ServiceError("unknown_category", f"unknown category {category!r}", 404)
        return {"styles": artifacts.styles_for_category(category)}

    @app.get("/items")
    def items(category: str, page: int = 0, page_size: int = 50):
        if category not in vocab.category_index:
            raise ServiceError("unknown_category", f"unknown category {category!r}", 404)
        if page < 0 or page_size < 1:
            raise ServiceError("bad_paging", "page must be >= 0 and page_size >= 1")
        cat_idx = vocab.category_index[category]
        ids = catalog.by_coarse.get(cat_idx, [])
        lo = page * page_size
        records = [
            {
                "item_id": iid,
                "coarse_category": category,
                "fine_category": (
                    vocab.fine_categories[catalog.get(iid).fine_category]
                    if catalog.get(iid).fine_category is not None
                    else None
                ),
            }
            for iid in ids[lo : lo + page_size]
        ]
        return {"items": records, "page": page, "page_size": page_size, "total": len(ids)}

    @app.get("/templates")
    def templates():
        return {"templates": [{"name": t.name, "slots": t.slots} for t in artifacts.templates]}

    @app.post("/generate")
    def generate(req: GenerateRequest):
        if req.top_k < 1:
            raise ServiceError("bad_top_k", "top_k must be >= 1")
        if req.anchor_item_id not in catalog.by_id:
            raise ServiceError(
                "unknown_item", f"anchor item {req.anchor_item_id!r} not found", 404
            )
        anchor = catalog.get(req.anchor_item_id)
        anchor_cat = vocab.categories[anchor.coarse_category]
        slots = _resolve_template(artifacts, req.template, anchor_cat)
        if req.style == "all":
            style_names = artifacts.styles_for_category(anchor_cat)
        else:
            if req.style not in vocab.style_index:
                raise ServiceError("unknown_style", f"unknown style {req.style!r}", 404)
            style_names = [req.style]
        width = max(artifacts.beam_width, req.top_k)
        results = []
        for style in style_names:
            if not artifacts.store.has_style(style):
                raise ServiceError(
                    "missing_style_embeddings",
                    f"style {style!r} has no embeddings in the store",
                )
            try:
                outfits = beam_search(
                    req.anchor_item_id, slots, style, artifacts.store,
                    beam_width=width, top_k=req.top_k,
                )
            except GenerationError as e:
                raise ServiceError("generation_failed", str(e)) from e
            results.append(
                {
                    "style": style,
                    "outfits": [
                        {
                            "item_ids": list(o.item_ids),
                            "categories": list(o.categories),
                            "score": o.score,
                        }
                        for o in outfits
                    ],
                }
            )
        return {
            "anchor_item_id": req.anchor_item_id,
            "template": slots,
            "results": results,
        }

    if artifacts.ui_dir is not None:
        app.mount("/", StaticFiles(directory=artifacts.ui_dir, html=True), name="ui")

    return app


def _resolve_template(
    artifacts: ServiceArtifacts, template: str | list[str] | None, anchor_cat: str
) -> list[str]:
    if template is None:
        # default: first configured template whose slot 0 matches the anchor
        for t in artifacts.templates:
            if t.slots and t.slots[0] == anchor_cat:
                return list(t.slots)
        raise ServiceError(
            "no_template_for_category",
            f"no configured template starts with category {anchor_cat!r}",
        )
    if isinstance(template, str):
        found = artifacts.template_by_name(template)
        if found is None:
            raise ServiceError("unknown_template", f"unknown template {template!r}", 404)
        slots = list(found.slots)
    else:
        slots = list(template)
    if len(slots) < 2:
        raise ServiceError("invalid_template", "template needs at least 2 slots")
    for slot in slots:
        if slot not in artifacts.vocab.category_index:
            raise ServiceError("invalid_template", f"unknown category {slot!r} in template")
    if slots[0] != anchor_cat:
        raise ServiceError(
            "anchor_category_mismatch",
            f"anchor category {anchor_cat!r} does not match template slot 0 ({slots[0]!r})",
        )
    return slots
