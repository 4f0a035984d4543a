/** Wire types for the suggestion API. Field names match the JSON exactly. */

export type FacetType = "WorkplaceType" | "Industry" | "Function" | "DomainKnowledge";

export interface Pill {
  facet_type: FacetType;
  value: string;
  p_yes: number;
}

export interface SuggestionResponse {
  query: string;
  suggestions: Pill[];
  timing?: Record<string, number>;
}

export interface MemberPayload {
  preferred_titles?: string[];
  industries?: string[];
}

export interface AppliedFacetWire {
  facet_type: string;
  value: string;
}

export interface SuggestRequestWire {
  query: string;
  member: MemberPayload | null;
  applied_facets: AppliedFacetWire[];
}
