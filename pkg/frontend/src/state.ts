// UI state machine. Pure transition functions so the guarded flow
// (category -> anchor -> style -> generate) is testable without a DOM.
//
// Generation requests carry a sequence token: a response only lands if it
// is still the newest request, so stale results never overwrite fresher
// selections.

import type { GenerateResponse, ItemSummary } from "./api.js";

export interface ErrorInfo {
  code: string;
  message: string;
}

export interface UiState {
  categories: string[];
  selectedCategory: string | null;
  items: ItemSummary[];
  selectedAnchor: string | null;
  styles: string[];
  selectedStyle: string; // "all" or a style name
  response: GenerateResponse | null;
  loading: boolean;
  error: ErrorInfo | null;
  requestSeq: number; // token of the newest in-flight generate request
}

export function initialState(): UiState {
  return {
    categories: [],
    selectedCategory: null,
    items: [],
    selectedAnchor: null,
    styles: [],
    selectedStyle: "all",
    response: null,
    loading: false,
    error: null,
    requestSeq: 0,
  };
}

export function canGenerate(state: UiState): boolean {
  return state.selectedCategory !== null && state.selectedAnchor !== null;
}

export function withCategories(state: UiState, categories: string[]): UiState {
  return { ...state, categories };
}

export function selectCategory(state: UiState, category: string): UiState {
  // changing category invalidates the anchor and any shown outfits
  return {
    ...state,
    selectedCategory: category,
    items: [],
    selectedAnchor: null,
    styles: [],
    selectedStyle: "all",
    response: null,
    error: null,
  };
}

export function withItems(state: UiState, items: ItemSummary[]): UiState {
  return { ...state, items };
}

export function selectAnchor(state: UiState, anchorId: string): UiState {
  return { ...state, selectedAnchor: anchorId, response: null, error: null };
}

export function withStyles(state: UiState, styles: string[]): UiState {
  const selectedStyle =
    state.selectedStyle === "all" || styles.includes(state.selectedStyle)
      ? state.selectedStyle
      : "all";
  return { ...state, styles, selectedStyle };
}

export function selectStyle(state: UiState, style: string): UiState {
  return { ...state, selectedStyle: style };
}

export function generateStarted(state: UiState): UiState {
  if (!canGenerate(state)) {
    throw new Error("generate requires a selected category and anchor");
  }
  return {
    ...state,
    loading: true,
    error: null,
    requestSeq: state.requestSeq + 1,
  };
}

export function generateSucceeded(
  state: UiState,
  seq: number,
  response: GenerateResponse,
): UiState {
  if (seq !== state.requestSeq) {
    return state; // a newer request superseded this one
  }
  return { ...state, loading: false, response, error: null };
}

export function generateFailed(state: UiState, seq: number, error: ErrorInfo): UiState {
  if (seq !== state.requestSeq) {
    return state;
  }
  return { ...state, loading: false, response: null, error };
}
