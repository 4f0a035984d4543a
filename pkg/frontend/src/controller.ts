/** DOM controller for the refinement loop.
 *
 * Free-text edits are debounced before fetching; pill clicks fetch
 * immediately. A sequence counter makes sure only the newest response
 * is ever rendered, and a failed fetch shows a banner without touching
 * the rest of the state.
 */

import { isAbortError, SuggestClient } from "./client.js";
import {
  applyPill,
  dismissPill,
  emptyState,
  refinedQuery,
  setBaseQuery,
  setSuggestions,
  UiState,
} from "./state.js";
import type { FacetType, Pill } from "./types.js";

const TYPE_ORDER: FacetType[] = ["WorkplaceType", "Industry", "Function", "DomainKnowledge"];
const TYPE_LABELS: Record<FacetType, string> = {
  WorkplaceType: "Workplace type",
  Industry: "Industry",
  Function: "Function",
  DomainKnowledge: "Domain knowledge",
};

export interface ControllerOptions {
  debounceMs?: number;
}

export class RefineController {
  private state: UiState = emptyState();
  private seq = 0;
  private debounceHandle: ReturnType<typeof setTimeout> | null = null;
  private errorMessage: string | null = null;
  private readonly debounceMs: number;

  private readonly input: HTMLInputElement;
  private readonly refinedEl: HTMLElement;
  private readonly appliedEl: HTMLElement;
  private readonly bannerEl: HTMLElement;
  private readonly noticeEl: HTMLElement;
  private readonly pillsEl: HTMLElement;

  constructor(
    private readonly root: HTMLElement,
    private readonly client: SuggestClient,
    options: ControllerOptions = {},
  ) {
    this.debounceMs = options.debounceMs ?? 300;
    root.innerHTML = `
      <div class="refine">
        <input type="search" data-testid="query-input" placeholder="Search jobs" aria-label="Search jobs" />
        <div class="refined-query" data-testid="refined-query"></div>
        <div class="applied" data-testid="applied"></div>
        <div class="banner" data-testid="banner" hidden></div>
        <div class="notice" data-testid="notice" hidden></div>
        <div class="pills" data-testid="pills"></div>
      </div>`;
    this.input = this.query<HTMLInputElement>("query-input");
    this.refinedEl = this.query("refined-query");
    this.appliedEl = this.query("applied");
    this.bannerEl = this.query("banner");
    this.noticeEl = this.query("notice");
    this.pillsEl = this.query("pills");

    this.input.addEventListener("input", () => this.onType());
    this.render();
  }

  getState(): UiState {
    return this.state;
  }

  displayedQuery(): string {
    return refinedQuery(this.state);
  }

  private query<T extends HTMLElement = HTMLElement>(testId: string): T {
    const el = this.root.querySelector(`[data-testid="${testId}"]`);
    if (!el) throw new Error(`missing element ${testId}`);
    return el as T;
  }

  private onType(): void {
    this.state = setBaseQuery(this.state, this.input.value);
    if (this.debounceHandle !== null) clearTimeout(this.debounceHandle);
    this.debounceHandle = setTimeout(() => {
      this.debounceHandle = null;
      void this.refresh();
    }, this.debounceMs);
    this.render();
  }

  async refresh(): Promise<void> {
    // The wire query is the base text only; the server appends applied
    // facets itself, so sending the composed query would double them.
    const base = this.state.baseQuery.trim();
    if (base.length === 0) {
      this.state = { ...this.state, suggestions: [], pending: false };
      this.errorMessage = null;
      this.render();
      return;
    }
    const seq = ++this.seq;
    this.state = { ...this.state, pending: true };
    this.render();
    try {
      const response = await this.client.suggest({
        query: base,
        applied: this.state.applied,
      });
      if (seq !== this.seq) return;
      this.state = setSuggestions({ ...this.state, pending: false }, response.suggestions);
      this.errorMessage = null;
    } catch (err) {
      if (seq !== this.seq || isAbortError(err)) return;
      // Keep pills and applied facets as they were; only surface the failure.
      this.state = { ...this.state, pending: false };
      this.errorMessage = err instanceof Error ? err.message : String(err);
    }
    this.render();
  }

  private onPillClick(pill: Pill): void {
    this.state = applyPill(this.state, pill);
    this.errorMessage = null;
    this.render();
    void this.refresh();
  }

  private onDismiss(value: string): void {
    this.state = dismissPill(this.state, value);
    this.render();
    void this.refresh();
  }

  private render(): void {
    this.refinedEl.textContent = refinedQuery(this.state);

    this.appliedEl.replaceChildren(
      ...this.state.applied.map((facet) => {
        const chip = document.createElement("span");
        chip.className = "chip";
        chip.dataset.value = facet.value;
        chip.append(facet.value);
        const remove = document.createElement("button");
        remove.type = "button";
        remove.className = "chip-remove";
        remove.setAttribute("aria-label", `Remove ${facet.value}`);
        remove.textContent = "×";
        remove.addEventListener("click", () => this.onDismiss(facet.value));
        chip.append(remove);
        return chip;
      }),
    );

    this.bannerEl.hidden = this.errorMessage === null;
    this.bannerEl.textContent = this.errorMessage ?? "";

    const hasQuery = refinedQuery(this.state).length > 0;
    const empty = hasQuery && !this.state.pending && this.state.suggestions.length === 0;
    this.noticeEl.hidden = !(empty && this.errorMessage === null);
    this.noticeEl.textContent = this.noticeEl.hidden ? "" : "no refinements";

    this.pillsEl.replaceChildren(...this.renderGroups());
    this.pillsEl.classList.toggle("pending", this.state.pending);
  }

  private renderGroups(): HTMLElement[] {
    const groups: HTMLElement[] = [];
    for (const ftype of TYPE_ORDER) {
      const pills = this.state.suggestions.filter((p) => p.facet_type === ftype);
      if (pills.length === 0) continue;
      const section = document.createElement("section");
      section.className = "pill-group";
      section.dataset.facetType = ftype;
      const heading = document.createElement("h3");
      heading.textContent = TYPE_LABELS[ftype];
      section.append(heading);
      for (const pill of pills) {
        const button = document.createElement("button");
        button.type = "button";
        button.className = "pill";
        button.dataset.value = pill.value;
        button.textContent = pill.value;
        button.title = `p(yes) ${pill.p_yes.toFixed(2)}`;
        button.addEventListener("click", () => this.onPillClick(pill));
        section.append(button);
      }
      groups.push(section);
    }
    return groups;
  }
}
