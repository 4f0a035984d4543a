/** Client-side refinement state and its pure transitions.
 *
 * The displayed query is always the base query followed by applied
 * facet values in application order, so every refinement step
 * token-contains its predecessor by construction. Applied values are
 * pairwise distinct under normalization.
 */

import type { Pill } from "./types.js";

export interface AppliedFacet {
  facetType: string;
  value: string;
}

export interface UiState {
  baseQuery: string;
  applied: readonly AppliedFacet[];
  suggestions: readonly Pill[];
  pending: boolean;
}

export function emptyState(): UiState {
  return { baseQuery: "", applied: [], suggestions: [], pending: false };
}

// Mirrors the server's name normalization closely enough for client-side
// duplicate detection; the server remains the authority.
export function normalizeValue(value: string): string {
  return value
    .toLowerCase()
    .replace(/[^\p{L}\p{N}\s]/gu, " ")
    .replace(/\s+/g, " ")
    .trim();
}

export function refinedQuery(state: UiState): string {
  const parts = [state.baseQuery.trim(), ...state.applied.map((a) => a.value)];
  return parts.filter((p) => p.length > 0).join(" ");
}

export function tokens(text: string): string[] {
  return normalizeValue(text).split(" ").filter((t) => t.length > 0);
}

/** Token-multiset containment: every token of prev occurs in next at least as often. */
export function tokenContains(prev: string, next: string): boolean {
  const counts = new Map<string, number>();
  for (const t of tokens(next)) counts.set(t, (counts.get(t) ?? 0) + 1);
  for (const t of tokens(prev)) {
    const n = counts.get(t) ?? 0;
    if (n === 0) return false;
    counts.set(t, n - 1);
  }
  return true;
}

export function setBaseQuery(state: UiState, baseQuery: string): UiState {
  return { ...state, baseQuery };
}

/** Drop pills whose value is already applied; cap the rendered slate at five. */
export function setSuggestions(state: UiState, pills: readonly Pill[]): UiState {
  const taken = new Set(state.applied.map((a) => normalizeValue(a.value)));
  const fresh = pills.filter((p) => !taken.has(normalizeValue(p.value))).slice(0, 5);
  return { ...state, suggestions: fresh };
}

export function applyPill(state: UiState, pill: Pill): UiState {
  const key = normalizeValue(pill.value);
  if (!state.suggestions.some((p) => normalizeValue(p.value) === key)) {
    throw new Error(`pill ${pill.value} is not among the current suggestions`);
  }
  if (state.applied.some((a) => normalizeValue(a.value) === key)) {
    throw new Error(`facet value ${pill.value} is already applied`);
  }
  return {
    ...state,
    applied: [...state.applied, { facetType: pill.facet_type, value: pill.value }],
    suggestions: state.suggestions.filter((p) => normalizeValue(p.value) !== key),
  };
}

export function dismissPill(state: UiState, value: string): UiState {
  const key = normalizeValue(value);
  return { ...state, applied: state.applied.filter((a) => normalizeValue(a.value) !== key) };
}
