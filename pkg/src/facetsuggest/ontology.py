"""Synthetic occupation ontology used as ground truth.

The ontology links occupations to typed facet keywords and carries member
profiles with an occupation affinity. It backs the rule-based judge, the
candidate generator, and the job-count and popularity providers, so the
same structure that generates data also adjudicates it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .taxonomy import (
    FacetKeyword,
    FacetType,
    KeywordStatus,
    SeedQuery,
    Taxonomy,
)
from .textproc import normalize_name, stable_bucket, tokenize

QUERY_SUFFIXES = ("jobs", "careers", "openings", "roles", "positions", "hiring", "vacancies")

# Facets co-linked across a two-occupation family, by type.
SHARED_DOMAIN_KNOWLEDGE = 4
SHARED_FUNCTIONS = 1
SHARED_INDUSTRIES = 1

_WORKPLACE_NAMES = ("Remote", "Hybrid", "Onsite")


@dataclass(frozen=True)
class MemberContext:
    """Member profile visible to the engine: titles and industries only."""

    preferred_titles: tuple[str, ...] = ()
    industries: tuple[str, ...] = ()

    def to_json_dict(self) -> dict:
        return {
            "preferred_titles": list(self.preferred_titles),
            "industries": list(self.industries),
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "MemberContext":
        return cls(
            preferred_titles=tuple(obj.get("preferred_titles", ())),
            industries=tuple(obj.get("industries", ())),
        )


def member_text(member: MemberContext) -> str:
    """Serialize a member profile to the text form the encoder consumes."""
    return (
        f"titles: {', '.join(member.preferred_titles)}; "
        f"industries: {', '.join(member.industries)}"
    )


@dataclass(frozen=True)
class Occupation:
    id: str
    title: str
    family: str
    linked: dict[FacetType, tuple[str, ...]]

    def linked_ids(self, facet_type: FacetType | None = None) -> frozenset[str]:
        if facet_type is not None:
            return frozenset(self.linked.get(facet_type, ()))
        return frozenset(i for ids in self.linked.values() for i in ids)


@dataclass(frozen=True)
class OntologyMember:
    context: MemberContext
    occupation_id: str


@dataclass
class SyntheticOntology:
    """Occupations, members, and their facet links."""

    occupations: dict[str, Occupation]
    members: tuple[OntologyMember, ...]
    seed: int
    _title_index: dict[str, str] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        self._title_index = {
            normalize_name(occ.title): occ.id for occ in self.occupations.values()
        }

    def resolve_query_occupation(self, query: str) -> Occupation | None:
        """Match a query to the occupation whose title tokens it contains.

        The longest matching title wins; remaining ties break on id.
        """
        qtokens = set(tokenize(query))
        best: tuple[int, str] | None = None
        for occ in self.occupations.values():
            ttokens = tokenize(occ.title)
            if ttokens and set(ttokens) <= qtokens:
                key = (-len(ttokens), occ.id)
                if best is None or key < best:
                    best = key
        return self.occupations[best[1]] if best else None

    def occupation_by_title(self, title: str) -> Occupation | None:
        occ_id = self._title_index.get(normalize_name(title))
        return self.occupations.get(occ_id) if occ_id else None

    def member_occupation(self, member: MemberContext) -> Occupation | None:
        for title in member.preferred_titles:
            occ = self.occupation_by_title(title)
            if occ is not None:
                return occ
        return None

    def is_linked(self, occupation_id: str, keyword_id: str) -> bool:
        occ = self.occupations.get(occupation_id)
        return occ is not None and keyword_id in occ.linked_ids()

    def members_for(self, occupation_id: str) -> list[OntologyMember]:
        return [m for m in self.members if m.occupation_id == occupation_id]

    def to_json_dict(self) -> dict:
        return {
            "seed": self.seed,
            "occupations": [
                {
                    "id": occ.id,
                    "title": occ.title,
                    "family": occ.family,
                    "linked": {ft.value: list(ids) for ft, ids in occ.linked.items()},
                }
                for occ in (self.occupations[i] for i in sorted(self.occupations))
            ],
            "members": [
                {"context": m.context.to_json_dict(), "occupation_id": m.occupation_id}
                for m in self.members
            ],
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "SyntheticOntology":
        occupations = {}
        for rec in obj["occupations"]:
            occupations[rec["id"]] = Occupation(
                id=rec["id"],
                title=rec["title"],
                family=rec["family"],
                linked={FacetType(ft): tuple(ids) for ft, ids in rec["linked"].items()},
            )
        members = tuple(
            OntologyMember(
                context=MemberContext.from_json_dict(rec["context"]),
                occupation_id=rec["occupation_id"],
            )
            for rec in obj["members"]
        )
        return cls(occupations=occupations, members=members, seed=obj["seed"])


def save_ontology(ontology: SyntheticOntology, path: str | Path) -> None:
    Path(path).write_text(json.dumps(ontology.to_json_dict(), indent=2), encoding="utf-8")


def load_ontology(path: str | Path) -> SyntheticOntology:
    return SyntheticOntology.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class OntologySizes:
    """Corpus sizing; validated against per-type retrieval quotas."""

    occupations: int = 15
    domain_knowledge_per_occupation: int = 16
    functions_per_occupation: int = 5
    industries_per_occupation: int = 5
    workplace_types: int = 3
    members: int = 30

    def validate_against_quotas(self, quotas: dict[FacetType, int]) -> None:
        """Reject sizes that cannot satisfy serving quotas for every occupation.

        With an odd occupation count one occupation has no family partner
        and links only its own facets, so own counts must meet the quota.
        """
        own = {
            FacetType.DOMAIN_KNOWLEDGE: self.domain_knowledge_per_occupation,
            FacetType.FUNCTION: self.functions_per_occupation,
            FacetType.INDUSTRY: self.industries_per_occupation,
            FacetType.WORKPLACE_TYPE: 1 if self.workplace_types >= 1 else 0,
        }
        for ftype, need in quotas.items():
            if own.get(ftype, 0) < need:
                raise ValueError(
                    f"infeasible sizes: {ftype.value} provides {own.get(ftype, 0)} "
                    f"linked keywords per occupation, quota needs {need}"
                )
        if self.occupations < 1:
            raise ValueError("infeasible sizes: need at least one occupation")
        if self.members < 0:
            raise ValueError("infeasible sizes: member count must be non-negative")


_ONSETS = ("b", "br", "c", "cr", "d", "dr", "f", "g", "gr", "k", "l", "m", "n", "p", "pr",
           "qu", "r", "s", "st", "t", "tr", "v", "z")
_VOWELS = ("a", "e", "i", "o", "u", "ia", "ea")
_CODAS = ("n", "r", "l", "x", "th", "s", "m", "d", "k")


class _WordForge:
    """Deterministic pseudo-word source with global uniqueness."""

    def __init__(self, rng: np.random.Generator, reserved: set[str]):
        self._rng = rng
        self._used = {normalize_name(w) for w in reserved}

    def word(self, syllables: int = 2) -> str:
        for _ in range(10_000):
            parts = []
            for _ in range(syllables):
                parts.append(str(self._rng.choice(_ONSETS)) + str(self._rng.choice(_VOWELS)))
            candidate = "".join(parts) + str(self._rng.choice(_CODAS))
            if candidate not in self._used:
                self._used.add(candidate)
                return candidate
        raise RuntimeError("pseudo-word space exhausted")

    def name(self, tokens: int) -> str:
        return " ".join(self.word() for _ in range(tokens)).title()


def _definition(name: str, facet_type: FacetType, owner_titles: list[str], separable: bool) -> str:
    # No type-level phrase here: a token shared by exactly the facets of
    # one type becomes a bucket that smears their labels together under
    # hashed crossing. Connectives are shared by every facet, which is
    # harmless; the discriminative content is the linked titles.
    base = name.lower()
    if separable and owner_titles:
        return f"{base} for {' and '.join(owner_titles)} roles"
    return base


def generate_ontology(
    seed: int,
    sizes: OntologySizes | None = None,
    separability: float = 1.0,
    quotas: dict[FacetType, int] | None = None,
) -> tuple[SyntheticOntology, list[FacetKeyword]]:
    """Build a deterministic ontology and its validated keyword pool.

    Occupations are paired into families that co-link a slice of each
    other's facets; facet definitions name their linked occupations with
    probability ``separability`` so text models can recover the links.
    The first two occupations and a handful of facets carry fixed names
    used throughout the unit fixtures.
    """
    sizes = sizes or OntologySizes()
    from .retrieval import DEFAULT_QUOTAS  # local import to avoid a cycle

    sizes.validate_against_quotas(quotas or DEFAULT_QUOTAS)
    if not 0.0 <= separability <= 1.0:
        raise ValueError(f"separability must be in [0, 1], got {separability}")

    rng = np.random.default_rng(seed)
    named_titles = ["registered nurse", "attorney"]
    reserved = set(_WORKPLACE_NAMES) | set(QUERY_SUFFIXES)
    reserved.update(t for title in named_titles for t in title.split())
    reserved.update(["telemetry", "cardiology", "healthcare", "pharma", "litigation"])
    forge = _WordForge(rng, reserved)

    titles: list[str] = []
    for i in range(sizes.occupations):
        if i < len(named_titles):
            titles.append(named_titles[i])
        else:
            titles.append(forge.name(1 if rng.random() < 0.5 else 2).lower())

    # Litigation sits past the family-shared prefix so it stays exclusive
    # to the second occupation; the fixtures rely on that.
    named_facets: dict[tuple[int, FacetType, int], str] = {
        (0, FacetType.DOMAIN_KNOWLEDGE, 0): "Telemetry",
        (0, FacetType.DOMAIN_KNOWLEDGE, 1): "Cardiology",
        (0, FacetType.INDUSTRY, 0): "Healthcare",
        (0, FacetType.INDUSTRY, 1): "Pharma",
        (1, FacetType.DOMAIN_KNOWLEDGE, SHARED_DOMAIN_KNOWLEDGE): "Litigation",
    }

    per_type_counts = {
        FacetType.DOMAIN_KNOWLEDGE: sizes.domain_knowledge_per_occupation,
        FacetType.FUNCTION: sizes.functions_per_occupation,
        FacetType.INDUSTRY: sizes.industries_per_occupation,
    }

    own_ids: dict[tuple[int, FacetType], list[str]] = {}
    facet_names: dict[str, tuple[FacetType, str]] = {}
    counter = 0
    for i in range(sizes.occupations):
        for ftype, count in per_type_counts.items():
            ids = []
            for j in range(count):
                kid = f"kw_{counter:04d}"
                counter += 1
                name = named_facets.get((i, ftype, j))
                if name is None:
                    name = forge.name(1 if rng.random() < 0.7 else 2)
                facet_names[kid] = (ftype, name)
                ids.append(kid)
            own_ids[(i, ftype)] = ids

    workplace_ids: list[str] = []
    for w in range(sizes.workplace_types):
        kid = f"kw_{counter:04d}"
        counter += 1
        name = _WORKPLACE_NAMES[w] if w < len(_WORKPLACE_NAMES) else forge.name(1)
        facet_names[kid] = (FacetType.WORKPLACE_TYPE, name)
        workplace_ids.append(kid)

    # Family pairing and cross-links: partner co-links a prefix of each list.
    shared_counts = {
        FacetType.DOMAIN_KNOWLEDGE: SHARED_DOMAIN_KNOWLEDGE,
        FacetType.FUNCTION: SHARED_FUNCTIONS,
        FacetType.INDUSTRY: SHARED_INDUSTRIES,
    }
    linked: dict[int, dict[FacetType, list[str]]] = {}
    for i in range(sizes.occupations):
        partner = i + 1 if i % 2 == 0 and i + 1 < sizes.occupations else (i - 1 if i % 2 == 1 else None)
        per_occ: dict[FacetType, list[str]] = {}
        for ftype in per_type_counts:
            ids = list(own_ids[(i, ftype)])
            if partner is not None:
                ids.extend(own_ids[(partner, ftype)][: shared_counts[ftype]])
            per_occ[ftype] = ids
        per_occ[FacetType.WORKPLACE_TYPE] = [workplace_ids[i % len(workplace_ids)]]
        linked[i] = per_occ

    owners: dict[str, list[int]] = {}
    for i, per_occ in linked.items():
        for ids in per_occ.values():
            for kid in ids:
                owners.setdefault(kid, []).append(i)

    keywords: list[FacetKeyword] = []
    for kid in sorted(facet_names):
        ftype, name = facet_names[kid]
        owner_titles = [titles[i] for i in sorted(owners.get(kid, []))]
        separable = bool(rng.random() < separability)
        keywords.append(
            FacetKeyword(
                id=kid,
                facet_type=ftype,
                canonical_name=name,
                definition=_definition(name, ftype, owner_titles, separable),
                status=KeywordStatus.VALIDATED,
            )
        )
    by_id = {k.id: k for k in keywords}

    occupations: dict[str, Occupation] = {}
    for i in range(sizes.occupations):
        occ_id = f"occ_{i:02d}"
        occupations[occ_id] = Occupation(
            id=occ_id,
            title=titles[i],
            family=f"fam_{i // 2:02d}",
            linked={ft: tuple(ids) for ft, ids in linked[i].items()},
        )

    members: list[OntologyMember] = []
    occ_ids = sorted(occupations)
    for m in range(sizes.members):
        occ = occupations[occ_ids[m % len(occ_ids)]]
        industry_ids = list(occ.linked[FacetType.INDUSTRY])
        if m % 5 == 4:
            industries: tuple[str, ...] = ()
        else:
            picked = rng.choice(len(industry_ids), size=min(2, len(industry_ids)), replace=False)
            industries = tuple(by_id[industry_ids[int(p)]].canonical_name for p in sorted(picked))
        members.append(
            OntologyMember(
                context=MemberContext(preferred_titles=(occ.title,), industries=industries),
                occupation_id=occ.id,
            )
        )

    ontology = SyntheticOntology(occupations=occupations, members=tuple(members), seed=seed)
    return ontology, keywords


def build_query_pool(ontology: SyntheticOntology, total: int) -> list[str]:
    """Deterministic query variants: titles plus common search suffixes."""
    if total < 1:
        raise ValueError("query pool size must be positive")
    occ_ids = sorted(ontology.occupations)
    variants = [""] + list(QUERY_SUFFIXES)
    pool: list[str] = []
    for suffix in variants:
        for occ_id in occ_ids:
            title = ontology.occupations[occ_id].title
            pool.append(f"{title} {suffix}".strip())
            if len(pool) == total:
                return pool
    raise ValueError(
        f"cannot build {total} distinct queries from {len(occ_ids)} occupations "
        f"and {len(variants)} variants"
    )


class OntologyCandidateGenerator:
    """Candidate source that proposes every facet linked to the seed's occupation."""

    def __init__(self, ontology: SyntheticOntology, taxonomy: Taxonomy):
        self._ontology = ontology
        self._taxonomy = taxonomy

    def generate(self, seed: SeedQuery) -> list[FacetKeyword]:
        occ = self._ontology.resolve_query_occupation(seed.text)
        if occ is None:
            return []
        out = []
        for kid in sorted(occ.linked_ids()):
            kw = self._taxonomy.keywords.get(kid)
            if kw is not None:
                out.append(kw)
        return out


def _refinement_is_linked(ontology: SyntheticOntology, taxonomy: Taxonomy, query: str) -> bool:
    """True when every non-title query token belongs to a linked facet name."""
    occ = ontology.resolve_query_occupation(query)
    if occ is None:
        return False
    leftover = set(tokenize(query)) - set(tokenize(occ.title))
    if not leftover:
        return True
    covered: set[str] = set()
    for kid in occ.linked_ids():
        kw = taxonomy.keywords.get(kid)
        if kw is not None:
            covered.update(tokenize(kw.canonical_name))
    return leftover <= covered


class OntologyJobCounts:
    """Deterministic job-count provider; linked refinements are liquid."""

    def __init__(self, ontology: SyntheticOntology, taxonomy: Taxonomy):
        self._ontology = ontology
        self._taxonomy = taxonomy

    def job_count(self, query: str) -> int:
        jitter = stable_bucket("jobs:" + normalize_name(query), 120)
        if _refinement_is_linked(self._ontology, self._taxonomy, query):
            return 60 + jitter
        return jitter % 20


class OntologyPopularity:
    """Deterministic popularity provider over expanded queries, in [0, 1]."""

    def __init__(self, ontology: SyntheticOntology, taxonomy: Taxonomy):
        self._ontology = ontology
        self._taxonomy = taxonomy

    def popularity(self, query: str) -> float:
        jitter = stable_bucket("pop:" + normalize_name(query), 1000) / 1000.0
        if _refinement_is_linked(self._ontology, self._taxonomy, query):
            return 0.1 + 0.8 * jitter
        return 0.004
