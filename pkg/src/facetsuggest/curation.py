"""Candidate curation: policy, liquidity, and popularity filters in order.

Each candidate passes through the three filters with short-circuit
semantics, so a record rejected at one stage carries no verdicts from
later stages. Survivors wait for human review, which is the only path
to a Validated keyword.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Sequence
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Protocol

from .judge import Judge, JudgeVerdict, VerdictLabel, evaluate
from .taxonomy import FacetKeyword, KeywordStatus, SeedQuery

logger = logging.getLogger(__name__)


class CurationStatus(str, Enum):
    ACCEPTED = "Accepted"
    REJECTED_POLICY = "RejectedPolicy"
    REJECTED_LIQUIDITY = "RejectedLiquidity"
    REJECTED_POPULARITY = "RejectedPopularity"
    PENDING_REVIEW = "PendingReview"


class JobCountProvider(Protocol):
    def job_count(self, query: str) -> int: ...


class PopularityProvider(Protocol):
    def popularity(self, query: str) -> float: ...


@dataclass(frozen=True)
class CurationConfig:
    liquidity_threshold: int = 50
    popularity_threshold: float = 0.05

    def __post_init__(self) -> None:
        if self.liquidity_threshold < 0:
            raise ValueError("liquidity threshold must be non-negative")
        if not 0.0 <= self.popularity_threshold <= 1.0:
            raise ValueError("popularity threshold must be in [0, 1]")


@dataclass(frozen=True)
class CurationRecord:
    """Provenance for one candidate through the filter chain.

    ``policy_verdict`` is absent only when the judge itself failed;
    ``job_count`` and ``popularity`` are absent whenever an earlier stage
    rejected the candidate or errored. ``failure`` tags provider or judge
    errors with the stage that raised them.
    """

    seed: SeedQuery
    keyword: FacetKeyword
    final_status: CurationStatus
    policy_verdict: JudgeVerdict | None = None
    job_count: int | None = None
    popularity: float | None = None
    failure: str | None = None
    review_note: str | None = None

    def __post_init__(self) -> None:
        if self.job_count is not None and (
            self.policy_verdict is None or self.policy_verdict.label is not VerdictLabel.OKAY
        ):
            raise ValueError("job_count present without an Okay policy verdict")
        if self.popularity is not None and self.job_count is None:
            raise ValueError("popularity present without a job count")
        if self.final_status is CurationStatus.REJECTED_POLICY and self.job_count is not None:
            if self.review_note is None:
                raise ValueError("policy rejection carries later-stage verdicts")

    def to_json_dict(self) -> dict:
        return {
            "seed": {"text": self.seed.text, "source": self.seed.source.value},
            "keyword": self.keyword.to_json_dict(),
            "final_status": self.final_status.value,
            "policy_verdict": self.policy_verdict.to_json_dict() if self.policy_verdict else None,
            "job_count": self.job_count,
            "popularity": self.popularity,
            "failure": self.failure,
            "review_note": self.review_note,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "CurationRecord":
        from .taxonomy import SeedSource

        return cls(
            seed=SeedQuery(text=obj["seed"]["text"], source=SeedSource(obj["seed"]["source"])),
            keyword=FacetKeyword.from_json_dict(obj["keyword"]),
            final_status=CurationStatus(obj["final_status"]),
            policy_verdict=(
                JudgeVerdict.from_json_dict(obj["policy_verdict"]) if obj.get("policy_verdict") else None
            ),
            job_count=obj.get("job_count"),
            popularity=obj.get("popularity"),
            failure=obj.get("failure"),
            review_note=obj.get("review_note"),
        )


def _expanded_query(seed: SeedQuery, keyword: FacetKeyword) -> str:
    return f"{seed.text} {keyword.canonical_name}"


def curate(
    candidates: Sequence[FacetKeyword],
    seed: SeedQuery,
    judge: Judge,
    jobs: JobCountProvider,
    traffic: PopularityProvider,
    cfg: CurationConfig | None = None,
) -> list[CurationRecord]:
    """Run every candidate through the filter chain, in input order.

    A judge or provider error marks the record as rejected at that stage
    with a failure tag; nothing is ever silently accepted.
    """
    cfg = cfg or CurationConfig()
    records: list[CurationRecord] = []
    for kw in candidates:
        record = _curate_one(kw, seed, judge, jobs, traffic, cfg)
        records.append(record)
    return records


def _curate_one(
    kw: FacetKeyword,
    seed: SeedQuery,
    judge: Judge,
    jobs: JobCountProvider,
    traffic: PopularityProvider,
    cfg: CurationConfig,
) -> CurationRecord:
    try:
        verdict = evaluate(seed.text, None, kw, judge)
    except Exception as exc:
        logger.warning("policy judge failed for %s: %s", kw.id, exc)
        return CurationRecord(
            seed=seed, keyword=kw, final_status=CurationStatus.REJECTED_POLICY,
            failure=f"policy: {exc}",
        )
    if verdict.label is not VerdictLabel.OKAY:
        return CurationRecord(
            seed=seed, keyword=kw, final_status=CurationStatus.REJECTED_POLICY,
            policy_verdict=verdict,
        )

    expanded = _expanded_query(seed, kw)
    try:
        count = jobs.job_count(expanded)
    except Exception as exc:
        logger.warning("job count provider failed for %s: %s", kw.id, exc)
        return CurationRecord(
            seed=seed, keyword=kw, final_status=CurationStatus.REJECTED_LIQUIDITY,
            policy_verdict=verdict, failure=f"liquidity: {exc}",
        )
    if count < cfg.liquidity_threshold:
        return CurationRecord(
            seed=seed, keyword=kw, final_status=CurationStatus.REJECTED_LIQUIDITY,
            policy_verdict=verdict, job_count=count,
        )

    try:
        pop = traffic.popularity(expanded)
    except Exception as exc:
        logger.warning("popularity provider failed for %s: %s", kw.id, exc)
        return CurationRecord(
            seed=seed, keyword=kw, final_status=CurationStatus.REJECTED_POPULARITY,
            policy_verdict=verdict, job_count=count, failure=f"popularity: {exc}",
        )
    if pop < cfg.popularity_threshold:
        return CurationRecord(
            seed=seed, keyword=kw, final_status=CurationStatus.REJECTED_POPULARITY,
            policy_verdict=verdict, job_count=count, popularity=pop,
        )

    return CurationRecord(
        seed=seed, keyword=kw, final_status=CurationStatus.PENDING_REVIEW,
        policy_verdict=verdict, job_count=count, popularity=pop,
    )


def apply_review(
    records: Sequence[CurationRecord], keyword_id: str, approve: bool, note: str | None = None
) -> list[CurationRecord]:
    """Resolve one pending record by human decision.

    Approval accepts the record and validates its keyword; rejection is
    treated as a policy override and retires the keyword. Only records in
    PendingReview can be reviewed.
    """
    out: list[CurationRecord] = []
    found = False
    for rec in records:
        if rec.keyword.id != keyword_id:
            out.append(rec)
            continue
        found = True
        if rec.final_status is not CurationStatus.PENDING_REVIEW:
            raise ValueError(
                f"record for {keyword_id} is {rec.final_status.value}, not PendingReview"
            )
        if approve:
            out.append(
                replace(
                    rec,
                    final_status=CurationStatus.ACCEPTED,
                    keyword=replace(rec.keyword, status=KeywordStatus.VALIDATED),
                    review_note=note or "approved",
                )
            )
        else:
            out.append(
                replace(
                    rec,
                    final_status=CurationStatus.REJECTED_POLICY,
                    keyword=replace(rec.keyword, status=KeywordStatus.RETIRED),
                    review_note=note or "rejected by reviewer",
                )
            )
    if not found:
        raise KeyError(f"no curation record for keyword {keyword_id!r}")
    return out


def save_records(records: Sequence[CurationRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json_dict(), sort_keys=True) + "\n")


def load_records(path: str | Path) -> list[CurationRecord]:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(CurationRecord.from_json_dict(json.loads(line)))
    return out
