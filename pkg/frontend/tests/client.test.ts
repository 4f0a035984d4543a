import { afterEach, describe, expect, it, vi } from "vitest";

import { isAbortError, SuggestClient } from "../src/client.js";
import type { SuggestionResponse } from "../src/types.js";

const SLATE: SuggestionResponse = {
  query: "registered nurse",
  suggestions: [{ facet_type: "DomainKnowledge", value: "Telemetry", p_yes: 0.91 }],
};

function okResponse(body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status: 200,
    headers: { "content-type": "application/json" },
  });
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("SuggestClient", () => {
  it("POSTs the wire shape to /v1/suggest", async () => {
    const fetchMock = vi.fn(async () => okResponse(SLATE));
    vi.stubGlobal("fetch", fetchMock);

    const client = new SuggestClient("http://api.test");
    const out = await client.suggest({
      query: "registered nurse",
      applied: [{ facetType: "DomainKnowledge", value: "Telemetry" }],
    });

    expect(out).toEqual(SLATE);
    expect(fetchMock).toHaveBeenCalledTimes(1);
    const [url, init] = fetchMock.mock.calls[0] as unknown as [string, RequestInit];
    expect(url).toBe("http://api.test/v1/suggest");
    expect(init.method).toBe("POST");
    expect(JSON.parse(init.body as string)).toEqual({
      query: "registered nurse",
      member: null,
      applied_facets: [{ facet_type: "DomainKnowledge", value: "Telemetry" }],
    });
  });

  it("forwards the member payload when given one", async () => {
    const fetchMock = vi.fn(async () => okResponse(SLATE));
    vi.stubGlobal("fetch", fetchMock);

    await new SuggestClient().suggest({
      query: "nurse",
      applied: [],
      member: { preferred_titles: ["registered nurse"] },
    });

    const [, init] = fetchMock.mock.calls[0] as unknown as [string, RequestInit];
    expect(JSON.parse(init.body as string).member).toEqual({
      preferred_titles: ["registered nurse"],
    });
  });

  it("throws with the status on a non-ok response", async () => {
    vi.stubGlobal("fetch", vi.fn(async () => new Response("boom", { status: 503 })));
    await expect(
      new SuggestClient().suggest({ query: "nurse", applied: [] }),
    ).rejects.toThrow(/503/);
  });

  it("aborts the previous request when a new one starts", async () => {
    const seen: AbortSignal[] = [];
    const fetchMock = vi.fn((_url: string, init?: RequestInit) => {
      const signal = init?.signal as AbortSignal;
      seen.push(signal);
      return new Promise<Response>((resolve, reject) => {
        signal.addEventListener("abort", () =>
          reject(new DOMException("Aborted", "AbortError")),
        );
        if (seen.length === 2) resolve(okResponse(SLATE));
      });
    });
    vi.stubGlobal("fetch", fetchMock);

    const client = new SuggestClient();
    const first = client.suggest({ query: "nur", applied: [] });
    const second = client.suggest({ query: "nurse", applied: [] });

    expect(seen[0]?.aborted).toBe(true);
    expect(seen[1]?.aborted).toBe(false);
    await expect(first).rejects.toSatisfy(isAbortError);
    await expect(second).resolves.toEqual(SLATE);
  });
});

describe("isAbortError", () => {
  it("recognizes only abort-shaped failures", () => {
    expect(isAbortError(new DOMException("Aborted", "AbortError"))).toBe(true);
    expect(isAbortError(new Error("network down"))).toBe(false);
    expect(isAbortError("AbortError")).toBe(false);
  });
});
