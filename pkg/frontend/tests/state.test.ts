import { describe, expect, it } from "vitest";

import {
  applyPill,
  dismissPill,
  emptyState,
  normalizeValue,
  refinedQuery,
  setBaseQuery,
  setSuggestions,
  tokenContains,
  UiState,
} from "../src/state.js";
import type { Pill } from "../src/types.js";

const pill = (value: string, facet_type: Pill["facet_type"] = "DomainKnowledge"): Pill => ({
  facet_type,
  value,
  p_yes: 0.9,
});

function loaded(values: string[]): UiState {
  return setSuggestions(setBaseQuery(emptyState(), "registered nurse"), values.map((v) => pill(v)));
}

describe("refinedQuery", () => {
  it("joins base and applied values in application order", () => {
    let state = loaded(["Telemetry", "Remote"]);
    state = applyPill(state, pill("Telemetry"));
    state = setSuggestions(state, [pill("Remote", "WorkplaceType")]);
    state = applyPill(state, pill("Remote", "WorkplaceType"));
    expect(refinedQuery(state)).toBe("registered nurse Telemetry Remote");
  });

  it("is just the trimmed base before any refinement", () => {
    expect(refinedQuery(setBaseQuery(emptyState(), "  attorney  "))).toBe("attorney");
  });
});

describe("applyPill", () => {
  it("moves the pill from suggestions to applied", () => {
    const state = applyPill(loaded(["Telemetry", "Remote"]), pill("Telemetry"));
    expect(state.applied.map((a) => a.value)).toEqual(["Telemetry"]);
    expect(state.suggestions.map((p) => p.value)).toEqual(["Remote"]);
  });

  it("rejects a pill that is not currently suggested", () => {
    expect(() => applyPill(loaded(["Remote"]), pill("Telemetry"))).toThrow(/not among/);
  });

  it("never produces duplicate applied values", () => {
    let state = applyPill(loaded(["Telemetry"]), pill("Telemetry"));
    state = { ...state, suggestions: [pill("telemetry")] };
    expect(() => applyPill(state, pill("telemetry"))).toThrow(/already applied/);
  });

  it("dismiss undoes apply up to the suggestion refresh", () => {
    const before = loaded(["Telemetry", "Remote"]);
    const after = dismissPill(applyPill(before, pill("Telemetry")), "Telemetry");
    expect(after.applied).toEqual(before.applied);
    expect(after.baseQuery).toBe(before.baseQuery);
  });
});

describe("setSuggestions", () => {
  it("filters values that are already applied", () => {
    const state = applyPill(loaded(["Telemetry"]), pill("Telemetry"));
    const next = setSuggestions(state, [pill("Telemetry"), pill("Cardiology")]);
    expect(next.suggestions.map((p) => p.value)).toEqual(["Cardiology"]);
  });

  it("caps the slate at five pills", () => {
    const many = ["a", "b", "c", "d", "e", "f", "g"].map((v) => pill(v));
    expect(setSuggestions(emptyState(), many).suggestions).toHaveLength(5);
  });
});

describe("token containment", () => {
  it("holds along every step of a refinement chain", () => {
    let state = loaded(["Telemetry", "Remote", "Healthcare"]);
    let prev = refinedQuery(state);
    for (const value of ["Telemetry", "Remote", "Healthcare"]) {
      state = applyPill(state, pill(value));
      const next = refinedQuery(state);
      expect(tokenContains(prev, next)).toBe(true);
      prev = next;
      state = setSuggestions(state, [pill("Remote"), pill("Healthcare")]);
    }
    expect(prev).toBe("registered nurse Telemetry Remote Healthcare");
  });

  it("is a multiset check, not a substring check", () => {
    expect(tokenContains("nurse nurse", "nurse telemetry")).toBe(false);
    expect(tokenContains("nurse telemetry", "telemetry icu nurse")).toBe(true);
    expect(tokenContains("nurse", "nursery")).toBe(false);
  });
});

describe("normalizeValue", () => {
  it("lowercases, strips punctuation, collapses whitespace", () => {
    expect(normalizeValue("  Interventional-Cardiology  ")).toBe("interventional cardiology");
  });
});
