/** Thin fetch wrapper around POST /v1/suggest.
 *
 * At most one request is in flight: starting a new one aborts the
 * previous. Callers still guard against stale responses by sequence
 * number, since an abort is advisory.
 */

import type { AppliedFacet } from "./state.js";
import type { MemberPayload, SuggestionResponse, SuggestRequestWire } from "./types.js";

export interface SuggestParams {
  query: string;
  applied: readonly AppliedFacet[];
  member?: MemberPayload;
}

export class SuggestClient {
  private inflight: AbortController | null = null;

  constructor(private readonly baseUrl: string = "") {}

  async suggest(params: SuggestParams): Promise<SuggestionResponse> {
    this.inflight?.abort();
    const controller = new AbortController();
    this.inflight = controller;

    const body: SuggestRequestWire = {
      query: params.query,
      member: params.member ?? null,
      applied_facets: params.applied.map((a) => ({ facet_type: a.facetType, value: a.value })),
    };
    const res = await fetch(`${this.baseUrl}/v1/suggest`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
      signal: controller.signal,
    });
    if (!res.ok) {
      throw new Error(`suggestion request failed with status ${res.status}`);
    }
    return (await res.json()) as SuggestionResponse;
  }
}

export function isAbortError(err: unknown): boolean {
  return err instanceof DOMException && err.name === "AbortError";
}
