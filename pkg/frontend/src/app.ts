// DOM glue: wires the state machine, renderers, and API client together.

import { ApiClient, ApiError } from "./api.js";
import * as state from "./state.js";
import {
  renderAnchorPicker,
  renderCategoryPicker,
  renderErrorBanner,
  renderOutfitBoard,
  renderStyleOptions,
} from "./render.js";

const api = new ApiClient("");
let ui = state.initialState();

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function redraw(): void {
  el("categories").innerHTML = renderCategoryPicker(ui.categories, ui.selectedCategory);
  el("items").innerHTML = renderAnchorPicker(ui.items, ui.selectedAnchor);
  el<HTMLSelectElement>("style-select").innerHTML = renderStyleOptions(
    ui.styles,
    ui.selectedStyle,
  );
  el("board").innerHTML = ui.loading
    ? `<div class="board loading">generating outfits...</div>`
    : renderOutfitBoard(ui.response);
  el("banner").innerHTML = renderErrorBanner(ui.error);
  const button = el<HTMLButtonElement>("generate-btn");
  button.disabled = !state.canGenerate(ui) || ui.loading;
}

function showError(err: unknown): void {
  const info =
    err instanceof ApiError
      ? { code: err.code, message: err.message }
      : { code: "client_error", message: String(err) };
  ui = { ...ui, loading: false, error: info };
  redraw();
}

async function pickCategory(category: string): Promise<void> {
  ui = state.selectCategory(ui, category);
  redraw();
  try {
    const page = await api.getItems(category);
    ui = state.withItems(ui, page.items);
  } catch (err) {
    showError(err);
    return;
  }
  redraw();
}

async function pickAnchor(anchorId: string): Promise<void> {
  ui = state.selectAnchor(ui, anchorId);
  redraw();
  try {
    const styles = await api.getStyles(ui.selectedCategory ?? undefined);
    ui = state.withStyles(ui, styles.styles);
  } catch (err) {
    showError(err);
    return;
  }
  redraw();
  await generate();
}

async function generate(): Promise<void> {
  if (!state.canGenerate(ui)) return;
  ui = state.generateStarted(ui);
  const seq = ui.requestSeq;
  redraw();
  try {
    const response = await api.generate({
      anchor_item_id: ui.selectedAnchor!,
      style: ui.selectedStyle,
      top_k: 5,
    });
    ui = state.generateSucceeded(ui, seq, response);
  } catch (err) {
    const info =
      err instanceof ApiError
        ? { code: err.code, message: err.message }
        : { code: "client_error", message: String(err) };
    ui = state.generateFailed(ui, seq, info);
  }
  redraw();
}

async function boot(): Promise<void> {
  el("categories").addEventListener("click", (event) => {
    const target = (event.target as HTMLElement).closest("[data-category]");
    if (target) void pickCategory(target.getAttribute("data-category")!);
  });
  el("items").addEventListener("click", (event) => {
    const target = (event.target as HTMLElement).closest("[data-item-id]");
    if (target) void pickAnchor(target.getAttribute("data-item-id")!);
  });
  el<HTMLSelectElement>("style-select").addEventListener("change", (event) => {
    ui = state.selectStyle(ui, (event.target as HTMLSelectElement).value);
    redraw();
    void generate();
  });
  el<HTMLButtonElement>("generate-btn").addEventListener("click", () => void generate());
  try {
    const body = await api.getCategories();
    ui = state.withCategories(ui, body.categories);
  } catch (err) {
    showError(err);
    return;
  }
  redraw();
}

void boot();
