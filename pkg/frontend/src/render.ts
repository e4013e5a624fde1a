// HTML renderers. Pure string builders: the ordering of rendered outfit
// rows is exactly the response ordering (no client-side re-ranking), and
// item images are stand-in cards colored by category and labeled with the
// item id.

import type { GenerateResponse, ItemSummary } from "./api.js";
import type { ErrorInfo } from "./state.js";

export function colorForCategory(category: string): string {
  let hash = 0;
  for (const ch of category) {
    hash = (hash * 31 + ch.charCodeAt(0)) >>> 0;
  }
  return `hsl(${hash % 360}, 55%, 72%)`;
}

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderCategoryPicker(categories: string[], selected: string | null): string {
  const buttons = categories
    .map((cat) => {
      const cls = cat === selected ? "category-btn selected" : "category-btn";
      return `<button class="${cls}" data-category="${escapeHtml(cat)}"
        style="border-color: ${colorForCategory(cat)}">${escapeHtml(cat)}</button>`;
    })
    .join("");
  return `<div class="category-picker">${buttons}</div>`;
}

export function renderItemCard(item: ItemSummary, selected = false): string {
  const cls = selected ? "item-card selected" : "item-card";
  const fine = item.fine_category ? `<span class="fine">${escapeHtml(item.fine_category)}</span>` : "";
  return `<div class="${cls}" data-item-id="${escapeHtml(item.item_id)}"
    style="background: ${colorForCategory(item.coarse_category)}">
    <span class="cat">${escapeHtml(item.coarse_category)}</span>
    <span class="id">${escapeHtml(item.item_id)}</span>${fine}</div>`;
}

export function renderAnchorPicker(items: ItemSummary[], selected: string | null): string {
  if (items.length === 0) {
    return `<div class="anchor-grid empty">no items in this category</div>`;
  }
  const cards = items.map((it) => renderItemCard(it, it.item_id === selected)).join("");
  return `<div class="anchor-grid">${cards}</div>`;
}

export function renderOutfitBoard(response: GenerateResponse | null): string {
  if (response === null) {
    return `<div class="board empty">pick an anchor item and generate outfits</div>`;
  }
  const sections = response.results.map((styleBlock) => {
    if (styleBlock.outfits.length === 0) {
      return `<section class="style-section" data-style="${escapeHtml(styleBlock.style)}">
        <h3>${escapeHtml(styleBlock.style)}</h3>
        <div class="no-outfits">no outfits</div></section>`;
    }
    const rows = styleBlock.outfits
      .map((outfit, rank) => {
        const cards = outfit.item_ids
          .map((id, i) =>
            renderItemCard({
              item_id: id,
              coarse_category: outfit.categories[i],
              fine_category: null,
            }),
          )
          .join("");
        return `<div class="outfit-row" data-rank="${rank}">
          <span class="rank">#${rank + 1}</span>${cards}
          <span class="score">score ${outfit.score.toFixed(3)}</span></div>`;
      })
      .join("");
    return `<section class="style-section" data-style="${escapeHtml(styleBlock.style)}">
      <h3>${escapeHtml(styleBlock.style)}</h3>${rows}</section>`;
  });
  if (sections.length === 0) {
    return `<div class="board empty">no outfits</div>`;
  }
  return `<div class="board">${sections.join("")}</div>`;
}

export function renderErrorBanner(error: ErrorInfo | null): string {
  if (error === null) {
    return "";
  }
  return `<div class="error-banner" role="alert">
    <strong>${escapeHtml(error.code)}</strong>: ${escapeHtml(error.message)}</div>`;
}

export function renderStyleOptions(styles: string[], selected: string): string {
  const all = [`<option value="all"${selected === "all" ? " selected" : ""}>all styles</option>`];
  for (const style of styles) {
    all.push(
      `<option value="${escapeHtml(style)}"${style === selected ? " selected" : ""}>${escapeHtml(style)}</option>`,
    );
  }
  return all.join("");
}
