"""Suggestion quality judging.

A judge decides whether appending a facet keyword to a query is a good
refinement, by three axes: faithfulness to the query, plausibility for
the member, and utility over what the query already says. The rule-based
:class:`OracleJudge` answers from the synthetic ontology, which makes it
exact, deterministic, and free, and lets generated corpora be labeled
and re-checked by the same rules.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Protocol

from .ontology import MemberContext, SyntheticOntology
from .taxonomy import FacetKeyword, KeywordStatus
from .textproc import normalize_name, tokenize

logger = logging.getLogger(__name__)


class VerdictLabel(str, Enum):
    OKAY = "Okay"
    POOR = "Poor"


@dataclass(frozen=True)
class JudgeVerdict:
    """Three-axis verdict; the label is Okay exactly when all axes hold."""

    label: VerdictLabel
    c1_query_faithful: bool
    c2_member_plausible: bool
    c3_adds_refinement: bool
    rationale: str | None = None

    def __post_init__(self) -> None:
        axes_ok = self.c1_query_faithful and self.c2_member_plausible and self.c3_adds_refinement
        if (self.label is VerdictLabel.OKAY) != axes_ok:
            raise ValueError(
                f"label {self.label.value} inconsistent with axes "
                f"({self.c1_query_faithful}, {self.c2_member_plausible}, {self.c3_adds_refinement})"
            )

    @classmethod
    def from_axes(
        cls, c1: bool, c2: bool, c3: bool, rationale: str | None = None
    ) -> "JudgeVerdict":
        label = VerdictLabel.OKAY if (c1 and c2 and c3) else VerdictLabel.POOR
        return cls(label, c1, c2, c3, rationale)

    def to_json_dict(self) -> dict:
        return {
            "label": self.label.value,
            "c1_query_faithful": self.c1_query_faithful,
            "c2_member_plausible": self.c2_member_plausible,
            "c3_adds_refinement": self.c3_adds_refinement,
            "rationale": self.rationale,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "JudgeVerdict":
        return cls(
            label=VerdictLabel(obj["label"]),
            c1_query_faithful=obj["c1_query_faithful"],
            c2_member_plausible=obj["c2_member_plausible"],
            c3_adds_refinement=obj["c3_adds_refinement"],
            rationale=obj.get("rationale"),
        )


class Judge(Protocol):
    def evaluate(
        self, query: str, member: MemberContext | None, keyword: FacetKeyword
    ) -> JudgeVerdict: ...


def evaluate(
    query: str, member: MemberContext | None, keyword: FacetKeyword, judge: Judge
) -> JudgeVerdict:
    """Judge one (query, member, keyword) triple.

    Retired keywords must never reach a judge; that is a caller bug.
    """
    if keyword.status is KeywordStatus.RETIRED:
        raise ValueError(f"keyword {keyword.id} is retired and cannot be judged")
    if not query.strip():
        raise ValueError("query must be non-empty")
    return judge.evaluate(query, member, keyword)


class OracleJudge:
    """Deterministic judge backed by the synthetic ontology.

    C1 holds when the keyword is linked to the occupation the query
    resolves to; an unresolvable query fails C1 outright. C2 is vacuous
    without a member, or when the member's occupation family differs from
    the query's; otherwise the keyword must be linked to the member's own
    occupation or appear among the member's industries. C3 holds when no
    keyword name token is already present in the query.
    """

    def __init__(self, ontology: SyntheticOntology):
        self._ontology = ontology

    def evaluate(
        self, query: str, member: MemberContext | None, keyword: FacetKeyword
    ) -> JudgeVerdict:
        ont = self._ontology
        occ = ont.resolve_query_occupation(query)

        if occ is None:
            c1 = False
        else:
            c1 = keyword.id in occ.linked_ids()

        c2 = True
        if member is not None and occ is not None:
            member_occ = ont.member_occupation(member)
            if member_occ is not None and member_occ.family == occ.family:
                linked_to_member = keyword.id in member_occ.linked_ids()
                in_industries = normalize_name(keyword.canonical_name) in {
                    normalize_name(i) for i in member.industries
                }
                c2 = linked_to_member or in_industries

        name_tokens = set(tokenize(keyword.canonical_name))
        c3 = not (name_tokens & set(tokenize(query)))

        rationale = None
        if occ is None:
            rationale = "fails C1: query resolves to no known occupation"
        elif not c1:
            rationale = f"fails C1: {keyword.canonical_name!r} is not linked to {occ.title!r}"
        elif not c2:
            rationale = f"fails C2: {keyword.canonical_name!r} is implausible for this member"
        elif not c3:
            rationale = f"fails C3: query already contains {keyword.canonical_name!r}"
        return JudgeVerdict.from_axes(c1, c2, c3, rationale)


@dataclass(frozen=True)
class LabeledExample:
    query: str
    member: MemberContext | None
    keyword: FacetKeyword
    verdict: JudgeVerdict

    @property
    def is_positive(self) -> bool:
        return self.verdict.label is VerdictLabel.OKAY

    def to_json_dict(self) -> dict:
        return {
            "query": self.query,
            "member": self.member.to_json_dict() if self.member else None,
            "keyword": self.keyword.to_json_dict(),
            "verdict": self.verdict.to_json_dict(),
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "LabeledExample":
        return cls(
            query=obj["query"],
            member=MemberContext.from_json_dict(obj["member"]) if obj.get("member") else None,
            keyword=FacetKeyword.from_json_dict(obj["keyword"]),
            verdict=JudgeVerdict.from_json_dict(obj["verdict"]),
        )


def label_dataset(
    pairs: Sequence[tuple[str, MemberContext | None, FacetKeyword]], judge: Judge
) -> list[LabeledExample]:
    """Label triples in order; per-item failures are skipped and logged."""
    out: list[LabeledExample] = []
    for index, (query, member, keyword) in enumerate(pairs):
        try:
            verdict = evaluate(query, member, keyword, judge)
        except Exception as exc:
            logger.warning("skipped item %d (query=%r, keyword=%s): %s", index, query, keyword.id, exc)
            continue
        out.append(LabeledExample(query=query, member=member, keyword=keyword, verdict=verdict))
    return out


def save_examples(examples: Sequence[LabeledExample], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_json_dict(), sort_keys=True) + "\n")


def load_examples(path: str | Path) -> list[LabeledExample]:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(LabeledExample.from_json_dict(json.loads(line)))
    return out


def cohens_kappa(a: Sequence, b: Sequence) -> float:
    """Chance-corrected agreement between two aligned label sequences.

    Expected agreement is the product of the raters' marginal label
    frequencies. When expected agreement is already perfect (both raters
    emit one identical label throughout), agreement is 1 by convention.
    """
    if len(a) != len(b):
        raise ValueError(f"label sequences differ in length: {len(a)} vs {len(b)}")
    if not a:
        raise ValueError("label sequences must be non-empty")
    n = len(a)
    observed = sum(1 for x, y in zip(a, b) if x == y) / n
    counts_a = Counter(a)
    counts_b = Counter(b)
    labels = set(counts_a) | set(counts_b)
    expected = sum((counts_a[lab] / n) * (counts_b[lab] / n) for lab in labels)
    if expected >= 1.0:
        return 1.0
    return (observed - expected) / (1.0 - expected)
