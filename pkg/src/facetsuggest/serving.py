"""Serving layer: suggestion pipeline, refinement state, and cost model.

The cost model separates prefill from decode. With the prefix cache on,
a batch of per-candidate requests that share one prompt prefix bills the
prefix once; decode cost is driven by the longest sequential generation,
which is where the listwise formulation pays and the pointwise one does
not.
"""

from __future__ import annotations

import json
import logging
import time
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .ontology import MemberContext, member_text
from .ranker import (
    GATE_LIMIT,
    GATE_THRESHOLD,
    ParametricScorer,
    rank_and_gate,
    score_listwise,
    score_pointwise,
    token_length,
)
from .retrieval import (
    EncoderParams,
    FacetIndex,
    QuotaConfig,
    ScoredCandidate,
    encode_query,
    retrieve_with_quotas,
)
from .taxonomy import FacetType
from .textproc import normalize_name, tokenize

logger = logging.getLogger(__name__)


class Formulation(str, Enum):
    POINTWISE = "pointwise"
    LISTWISE = "listwise"


@dataclass(frozen=True)
class CostModel:
    """Per-token serving costs in abstract time units."""

    prefill_cost_per_token: float = 0.05
    decode_cost_per_token: float = 3.5
    fixed_overhead_per_request: float = 20.0
    cache_enabled: bool = True

    def __post_init__(self) -> None:
        if self.prefill_cost_per_token < 0 or self.decode_cost_per_token < 0:
            raise ValueError("per-token costs must be non-negative")
        if self.fixed_overhead_per_request < 0:
            raise ValueError("fixed overhead must be non-negative")
        if self.decode_cost_per_token < self.prefill_cost_per_token:
            raise ValueError("decode cost must be at least prefill cost")


@dataclass(frozen=True)
class ExecutionPlan:
    """Token accounting for one scoring batch."""

    formulation: Formulation
    shared_prefix_tokens: int
    per_candidate_suffix_tokens: tuple[int, ...]
    generated_tokens: int  # per logical request
    billed_prefill_tokens: int

    def __post_init__(self) -> None:
        if self.shared_prefix_tokens < 0:
            raise ValueError("prefix token count must be non-negative")
        if any(s < 0 for s in self.per_candidate_suffix_tokens):
            raise ValueError("suffix token counts must be non-negative")
        if self.formulation is Formulation.POINTWISE and self.generated_tokens != 1:
            raise ValueError("pointwise plans generate exactly one token per request")
        if self.generated_tokens < 1:
            raise ValueError("generated token count must be positive")


def plan_batch(
    query_prompt_tokens: int,
    candidate_suffix_tokens: Sequence[int],
    formulation: Formulation,
    cost_model: CostModel,
    listwise_generated_tokens: int | None = None,
) -> ExecutionPlan:
    """Billed-token plan for scoring one candidate slate.

    Pointwise with the cache on bills the shared prefix once plus every
    suffix; with the cache off every request re-bills the prefix. The
    listwise formulation is a single request, so it always bills the
    prefix once, and its generation length must be supplied by the
    caller because it emits candidate names, not single answers.
    """
    if not candidate_suffix_tokens:
        raise ValueError("cannot plan a batch with no candidates")
    suffixes = tuple(int(s) for s in candidate_suffix_tokens)
    suffix_sum = sum(suffixes)
    if formulation is Formulation.POINTWISE:
        if cost_model.cache_enabled:
            billed = query_prompt_tokens + suffix_sum
        else:
            billed = len(suffixes) * query_prompt_tokens + suffix_sum
        generated = 1
    else:
        if listwise_generated_tokens is None:
            raise ValueError("listwise plans need the generated token count")
        billed = query_prompt_tokens + suffix_sum
        generated = int(listwise_generated_tokens)
    return ExecutionPlan(
        formulation=formulation,
        shared_prefix_tokens=query_prompt_tokens,
        per_candidate_suffix_tokens=suffixes,
        generated_tokens=generated,
        billed_prefill_tokens=billed,
    )


def simulate_cost(plan: ExecutionPlan, cost_model: CostModel) -> float:
    """Cost in time units: overhead, billed prefill, sequential decode.

    Pointwise decodes its single answer token for every candidate in
    parallel, so its sequential decode length is one; listwise decodes
    its whole output serially.
    """
    return (
        cost_model.fixed_overhead_per_request
        + cost_model.prefill_cost_per_token * plan.billed_prefill_tokens
        + cost_model.decode_cost_per_token * plan.generated_tokens
    )


@dataclass(frozen=True)
class LatencyStats:
    p50: float
    p95: float
    mean: float
    samples: int

    def __post_init__(self) -> None:
        if self.samples < 1:
            raise ValueError("latency stats need at least one sample")
        if self.p50 > self.p95:
            raise ValueError(f"p50 {self.p50} exceeds p95 {self.p95}")

    @classmethod
    def from_samples(cls, values: Sequence[float]) -> "LatencyStats":
        arr = np.asarray(values, dtype=np.float64)
        if arr.size == 0:
            raise ValueError("latency stats need at least one sample")
        return cls(
            p50=float(np.percentile(arr, 50)),
            p95=float(np.percentile(arr, 95)),
            mean=float(arr.mean()),
            samples=int(arr.size),
        )


@dataclass(frozen=True)
class Suggestion:
    facet_type: FacetType
    value: str
    p_yes: float

    def to_json_dict(self) -> dict:
        return {"facet_type": self.facet_type.value, "value": self.value, "p_yes": self.p_yes}


@dataclass(frozen=True)
class SuggestionResponse:
    query: str
    suggestions: tuple[Suggestion, ...]
    timing: dict[str, float] = field(compare=False, default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.suggestions) > GATE_LIMIT:
            raise ValueError(f"at most {GATE_LIMIT} suggestions may be served")
        values = [normalize_name(s.value) for s in self.suggestions]
        if len(set(values)) != len(values):
            raise ValueError("served suggestions contain duplicate values")
        for s in self.suggestions:
            if not s.p_yes > GATE_THRESHOLD:
                raise ValueError(f"suggestion {s.value!r} served with p_yes {s.p_yes} <= gate")

    def to_json_dict(self) -> dict:
        return {
            "query": self.query,
            "suggestions": [s.to_json_dict() for s in self.suggestions],
            "timing": dict(self.timing),
        }


@dataclass(frozen=True)
class RefinedQuery:
    """Base query plus facets applied so far; text is append-only."""

    base: str
    applied: tuple[Suggestion, ...] = ()

    def __post_init__(self) -> None:
        if not self.base.strip():
            raise ValueError("base query must be non-empty")
        values = [normalize_name(s.value) for s in self.applied]
        if len(set(values)) != len(values):
            raise ValueError("applied facets contain duplicate values")

    @property
    def text(self) -> str:
        parts = [self.base] + [s.value for s in self.applied]
        return " ".join(parts)


def apply_facet(query: RefinedQuery | str, suggestion: Suggestion) -> RefinedQuery:
    """Append one suggestion to the query; re-applying a value is an error."""
    if isinstance(query, str):
        query = RefinedQuery(base=query)
    applied_values = {normalize_name(s.value) for s in query.applied}
    if normalize_name(suggestion.value) in applied_values:
        raise ValueError(f"facet value {suggestion.value!r} is already applied")
    return RefinedQuery(base=query.base, applied=(*query.applied, suggestion))


@dataclass(frozen=True)
class TokenBudget:
    """Prompt accounting used when planning scoring batches."""

    instruction_tokens: int = 280
    per_candidate_overhead_tokens: int = 8

    def prompt_tokens(self, query: str, member: MemberContext | None) -> int:
        count = self.instruction_tokens + len(tokenize(query))
        if member is not None:
            count += len(tokenize(member_text(member)))
        return count

    def suffix_tokens(self, candidate: ScoredCandidate) -> int:
        return self.per_candidate_overhead_tokens + token_length(candidate.keyword)


class StageError(RuntimeError):
    """Pipeline failure tagged with the stage that raised it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage} stage failed: {cause}")
        self.stage = stage
        self.cause = cause


class PermissiveJobCounts:
    """Fallback provider: everything is liquid."""

    def job_count(self, query: str) -> int:  # noqa: ARG002 - contract signature
        return 1_000_000


class SuggestionService:
    """End-to-end pipeline: encode, retrieve, score, gate, liquidity-check."""

    def __init__(
        self,
        index: FacetIndex,
        encoder: EncoderParams,
        scorer: ParametricScorer,
        quotas: QuotaConfig | None = None,
        cost_model: CostModel | None = None,
        token_budget: TokenBudget | None = None,
        job_counts=None,
        liquidity_threshold: int = 50,
    ):
        self.index = index
        self.encoder = encoder
        self.scorer = scorer
        self.quotas = quotas or QuotaConfig()
        self.cost_model = cost_model or CostModel()
        self.token_budget = token_budget or TokenBudget()
        self.job_counts = job_counts or PermissiveJobCounts()
        self.liquidity_threshold = liquidity_threshold

    def suggest(
        self,
        query: str,
        member: MemberContext | None = None,
        applied: Sequence[Suggestion] = (),
    ) -> SuggestionResponse:
        response, _ = self.suggest_detailed(query, member, applied)
        return response

    def suggest_detailed(
        self,
        query: str,
        member: MemberContext | None = None,
        applied: Sequence[Suggestion] = (),
    ) -> tuple[SuggestionResponse, list[ScoredCandidate]]:
        """Suggest plus the full scored slate, for offline evaluation."""
        if not query.strip():
            raise ValueError("query must be non-empty")
        refined = RefinedQuery(base=query, applied=tuple(applied))
        text = refined.text

        t0 = time.perf_counter()
        try:
            q_emb = encode_query(text, member, self.encoder)
            candidates = retrieve_with_quotas(q_emb, self.index, self.quotas)
        except ValueError:
            raise
        except Exception as exc:
            raise StageError("retrieval", exc) from exc
        t1 = time.perf_counter()

        applied_values = {normalize_name(s.value) for s in refined.applied}
        candidates = [
            c for c in candidates if normalize_name(c.keyword.canonical_name) not in applied_values
        ]

        try:
            scored = [
                replace(c, p_yes=score_pointwise(text, member, c, self.scorer))
                for c in candidates
            ]
        except Exception as exc:
            raise StageError("scoring", exc) from exc
        t2 = time.perf_counter()

        gated = rank_and_gate(scored)
        kept: list[Suggestion] = []
        try:
            for c in gated:
                expanded = f"{text} {c.keyword.canonical_name}"
                if self.job_counts.job_count(expanded) >= self.liquidity_threshold:
                    kept.append(
                        Suggestion(
                            facet_type=c.keyword.facet_type,
                            value=c.keyword.canonical_name,
                            p_yes=c.p_yes,
                        )
                    )
        except Exception as exc:
            raise StageError("liquidity", exc) from exc
        t3 = time.perf_counter()

        response = SuggestionResponse(
            query=text,
            suggestions=tuple(kept),
            timing={
                "retrieval_ms": (t1 - t0) * 1e3,
                "scoring_ms": (t2 - t1) * 1e3,
                "gating_ms": (t3 - t2) * 1e3,
            },
        )
        return response, scored

    def plan_for(
        self,
        query: str,
        member: MemberContext | None,
        candidates: Sequence[ScoredCandidate],
        formulation: Formulation,
    ) -> ExecutionPlan:
        prompt = self.token_budget.prompt_tokens(query, member)
        suffixes = [self.token_budget.suffix_tokens(c) for c in candidates]
        generated = (
            sum(token_length(c.keyword) for c in candidates)
            if formulation is Formulation.LISTWISE
            else None
        )
        return plan_batch(prompt, suffixes, formulation, self.cost_model, generated)


@dataclass(frozen=True)
class BenchReport:
    cost_stats: dict[Formulation, LatencyStats]
    wall_ms_stats: dict[Formulation, LatencyStats]
    queries: int


def run_bench(
    service: SuggestionService,
    workload: Sequence[str],
    report_path: str | Path | None = None,
    min_queries: int = 100,
) -> BenchReport:
    """Cost-model and wall-clock latency for both formulations.

    Every workload query is retrieved once; each formulation is then
    planned and simulated on the same slate, and its scoring pass timed.
    """
    if len(workload) < min_queries:
        raise ValueError(f"workload has {len(workload)} queries, need at least {min_queries}")

    costs: dict[Formulation, list[float]] = {f: [] for f in Formulation}
    walls: dict[Formulation, list[float]] = {f: [] for f in Formulation}
    for query in workload:
        q_emb = encode_query(query, None, service.encoder)
        candidates = retrieve_with_quotas(q_emb, service.index, service.quotas)

        w0 = time.perf_counter()
        for c in candidates:
            score_pointwise(query, None, c, service.scorer)
        w1 = time.perf_counter()
        score_listwise(query, None, candidates, service.scorer)
        w2 = time.perf_counter()

        for formulation in Formulation:
            plan = service.plan_for(query, None, candidates, formulation)
            costs[formulation].append(simulate_cost(plan, service.cost_model))
        walls[Formulation.POINTWISE].append((w1 - w0) * 1e3)
        walls[Formulation.LISTWISE].append((w2 - w1) * 1e3)

    report = BenchReport(
        cost_stats={f: LatencyStats.from_samples(costs[f]) for f in Formulation},
        wall_ms_stats={f: LatencyStats.from_samples(walls[f]) for f in Formulation},
        queries=len(workload),
    )
    if report_path is not None:
        _write_bench_report(report, report_path)
    return report


def _write_bench_report(report: BenchReport, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for formulation in Formulation:
            for unit, stats in (
                ("cost-units", report.cost_stats[formulation]),
                ("wall-ms", report.wall_ms_stats[formulation]),
            ):
                fh.write(
                    json.dumps(
                        {
                            "formulation": formulation.value,
                            "unit": unit,
                            "p50": stats.p50,
                            "p95": stats.p95,
                            "mean": stats.mean,
                            "samples": stats.samples,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )


def cached_prefill_ratio(prefix_tokens: int, suffix_tokens: int, n_candidates: int) -> float:
    """Billed-prefill ratio of cached to uncached pointwise batches."""
    if n_candidates < 1:
        raise ValueError("need at least one candidate")
    cached = prefix_tokens + n_candidates * suffix_tokens
    uncached = n_candidates * (prefix_tokens + suffix_tokens)
    return cached / uncached
