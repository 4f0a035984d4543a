"""Faceted keyword taxonomy: domain types, alias resolution, persistence.

A taxonomy is the serving-side vocabulary of refinement keywords, each
typed by the facet it belongs to. Candidate keywords enter through a
generator, survive curation (see :mod:`facetsuggest.curation`), and are
merged here into a deduplicated, alias-mapped store.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Protocol

from .textproc import normalize_name, normalize_surface

logger = logging.getLogger(__name__)

FILE_FORMAT = "facet-taxonomy"
FILE_VERSION = 1


class FacetType(str, Enum):
    DOMAIN_KNOWLEDGE = "DomainKnowledge"
    FUNCTION = "Function"
    INDUSTRY = "Industry"
    WORKPLACE_TYPE = "WorkplaceType"


class KeywordStatus(str, Enum):
    CANDIDATE = "Candidate"
    VALIDATED = "Validated"
    RETIRED = "Retired"


class SeedSource(str, Enum):
    PARENT_OCCUPATION = "ParentOccupation"
    SHORT_QUERY = "ShortQuery"


@dataclass(frozen=True)
class FacetKeyword:
    """One refinement keyword, typed by facet.

    ``aliases`` holds alternate surface forms; they must not collapse to
    duplicates under name normalization.
    """

    id: str
    facet_type: FacetType
    canonical_name: str
    definition: str
    aliases: tuple[str, ...] = ()
    status: KeywordStatus = KeywordStatus.CANDIDATE

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("keyword id must be non-empty")
        if not normalize_name(self.canonical_name):
            raise ValueError(f"keyword {self.id}: canonical_name must be non-empty")
        object.__setattr__(self, "aliases", tuple(self.aliases))
        seen: set[str] = set()
        for alias in self.aliases:
            key = normalize_name(alias)
            if key in seen:
                raise ValueError(f"keyword {self.id}: duplicate alias {alias!r} after normalization")
            seen.add(key)

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "facet_type": self.facet_type.value,
            "canonical_name": self.canonical_name,
            "definition": self.definition,
            "aliases": list(self.aliases),
            "status": self.status.value,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "FacetKeyword":
        return cls(
            id=obj["id"],
            facet_type=FacetType(obj["facet_type"]),
            canonical_name=obj["canonical_name"],
            definition=obj["definition"],
            aliases=tuple(obj.get("aliases", ())),
            status=KeywordStatus(obj.get("status", KeywordStatus.CANDIDATE.value)),
        )


@dataclass(frozen=True)
class SeedQuery:
    """Entry point for candidate generation.

    Short queries are capped at three words; parent-occupation seeds are
    occupation titles and carry no length cap.
    """

    text: str
    source: SeedSource

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("seed query text must be non-empty")
        if self.source is SeedSource.SHORT_QUERY and len(self.text.split()) > 3:
            raise ValueError(f"short query seed exceeds 3 words: {self.text!r}")


class CandidateGenerator(Protocol):
    """Produces candidate keywords for one seed query."""

    def generate(self, seed: SeedQuery) -> list[FacetKeyword]: ...


class CandidateGenerationError(RuntimeError):
    """Generator failure; carries the seed so the pipeline can retry it."""

    def __init__(self, seed: SeedQuery, cause: str, retriable: bool = True):
        super().__init__(f"candidate generation failed for seed {seed.text!r}: {cause}")
        self.seed = seed
        self.retriable = retriable


def generate_candidates(seed: SeedQuery, generator: CandidateGenerator) -> list[FacetKeyword]:
    """Run one generator call, normalizing results to Candidate status.

    An empty result is valid. Generator exceptions are wrapped in a
    retriable error that names the seed.
    """
    try:
        produced = generator.generate(seed)
    except Exception as exc:
        raise CandidateGenerationError(seed, str(exc)) from exc
    out = []
    for kw in produced:
        if kw.status is not KeywordStatus.CANDIDATE:
            kw = replace(kw, status=KeywordStatus.CANDIDATE)
        out.append(kw)
    return out


def _merge_key(keyword: FacetKeyword) -> tuple[str, str]:
    return (keyword.facet_type.value, normalize_name(keyword.canonical_name))


@dataclass
class Taxonomy:
    """Immutable-by-convention keyword store with an alias lookup map.

    ``alias_map`` keys are surface-normalized and name-normalized forms of
    every canonical name and alias, all pointing at keyword ids. It is
    always derived from ``keywords``, never persisted.
    """

    keywords: dict[str, FacetKeyword]
    alias_map: dict[str, str]
    warnings: list[str] = field(default_factory=list, compare=False, repr=False)

    @classmethod
    def from_keywords(cls, keywords: Iterable[FacetKeyword]) -> "Taxonomy":
        by_id: dict[str, FacetKeyword] = {}
        for kw in keywords:
            if kw.id in by_id:
                raise ValueError(f"duplicate keyword id {kw.id!r}")
            by_id[kw.id] = kw
        validated_names: dict[tuple[str, str], str] = {}
        for kw in by_id.values():
            if kw.status is not KeywordStatus.VALIDATED:
                continue
            key = _merge_key(kw)
            if key in validated_names:
                raise ValueError(
                    f"validated keywords {validated_names[key]!r} and {kw.id!r} share "
                    f"normalized name {key[1]!r} within facet type {key[0]}"
                )
            validated_names[key] = kw.id
        return cls(keywords=by_id, alias_map=_build_alias_map(by_id.values()))

    def get(self, keyword_id: str) -> FacetKeyword:
        return self.keywords[keyword_id]

    def lookup(self, text: str) -> FacetKeyword | None:
        """Resolve a surface form (canonical or alias) to its keyword."""
        kid = self.alias_map.get(normalize_surface(text))
        if kid is None:
            kid = self.alias_map.get(normalize_name(text))
        return self.keywords.get(kid) if kid is not None else None

    def validated(self) -> list[FacetKeyword]:
        return [k for k in self.sorted_keywords() if k.status is KeywordStatus.VALIDATED]

    def sorted_keywords(self) -> list[FacetKeyword]:
        return [self.keywords[i] for i in sorted(self.keywords)]

    def __len__(self) -> int:
        return len(self.keywords)


def _build_alias_map(keywords: Iterable[FacetKeyword]) -> dict[str, str]:
    amap: dict[str, str] = {}
    for kw in sorted(keywords, key=lambda k: k.id):
        for form in (kw.canonical_name, *kw.aliases):
            for key in (normalize_surface(form), normalize_name(form)):
                if key and key not in amap:
                    amap[key] = kw.id
    return amap


def resolve_aliases(pool: Sequence[FacetKeyword]) -> Taxonomy:
    """Merge keywords whose normalized names coincide within a facet type.

    The survivor is the lexicographically smallest id; absorbed canonical
    names join the survivor's alias set so every known surface form still
    resolves. Name collisions across facet types are never merged, only
    reported as warnings.
    """
    groups: dict[tuple[str, str], list[FacetKeyword]] = {}
    for kw in pool:
        groups.setdefault(_merge_key(kw), []).append(kw)

    merged: list[FacetKeyword] = []
    for group in groups.values():
        group = sorted(group, key=lambda k: k.id)
        survivor = group[0]
        alias_forms: list[str] = list(survivor.aliases)
        seen = {normalize_name(survivor.canonical_name)}
        seen.update(normalize_name(a) for a in survivor.aliases)
        seen_surface = {normalize_surface(survivor.canonical_name)}
        seen_surface.update(normalize_surface(a) for a in survivor.aliases)
        for other in group[1:]:
            for form in (other.canonical_name, *other.aliases):
                surf = normalize_surface(form)
                if surf in seen_surface:
                    continue
                seen_surface.add(surf)
                seen.add(normalize_name(form))
                alias_forms.append(form)
        merged.append(replace(survivor, aliases=tuple(alias_forms)))

    warnings = []
    by_name: dict[str, set[str]] = {}
    for ftype, name in groups:
        by_name.setdefault(name, set()).add(ftype)
    for name, ftypes in sorted(by_name.items()):
        if len(ftypes) > 1:
            msg = f"name {name!r} appears under multiple facet types: {sorted(ftypes)}; not merged"
            logger.warning(msg)
            warnings.append(msg)

    taxonomy = Taxonomy.from_keywords(merged)
    taxonomy.warnings.extend(warnings)
    return taxonomy


class TaxonomyFormatError(ValueError):
    """Raised on malformed taxonomy files; message names line and field."""


_REQUIRED_FIELDS = ("id", "facet_type", "canonical_name", "definition", "aliases", "status")


def export_taxonomy(taxonomy: Taxonomy, path: str | Path) -> None:
    """Write one keyword per line as JSON, preceded by a header line."""
    path = Path(path)
    header = {"format": FILE_FORMAT, "version": FILE_VERSION, "count": len(taxonomy)}
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for kw in taxonomy.sorted_keywords():
            fh.write(json.dumps(kw.to_json_dict(), sort_keys=True) + "\n")


def load_taxonomy(path: str | Path) -> Taxonomy:
    """Read a taxonomy file, validating every record.

    Malformed lines raise :class:`TaxonomyFormatError` naming the line
    number and the offending field.
    """
    path = Path(path)
    keywords: list[FacetKeyword] = []
    with path.open("r", encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise TaxonomyFormatError("line 1: missing header")
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise TaxonomyFormatError(f"line 1: invalid header JSON ({exc})") from exc
        if header.get("format") != FILE_FORMAT:
            raise TaxonomyFormatError("line 1: field 'format' is not a taxonomy header")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TaxonomyFormatError(f"line {lineno}: invalid JSON ({exc})") from exc
            if not isinstance(obj, dict):
                raise TaxonomyFormatError(f"line {lineno}: record must be an object")
            for fname in _REQUIRED_FIELDS:
                if fname not in obj:
                    raise TaxonomyFormatError(f"line {lineno}: missing field '{fname}'")
            try:
                keywords.append(FacetKeyword.from_json_dict(obj))
            except (ValueError, KeyError) as exc:
                field_name = _blame_field(obj, exc)
                raise TaxonomyFormatError(f"line {lineno}: invalid field '{field_name}' ({exc})") from exc
    declared = header.get("count")
    if isinstance(declared, int) and declared != len(keywords):
        raise TaxonomyFormatError(
            f"line 1: field 'count' declares {declared} records, file has {len(keywords)}"
        )
    return Taxonomy.from_keywords(keywords)


def _blame_field(obj: dict, exc: Exception) -> str:
    try:
        FacetType(obj["facet_type"])
    except ValueError:
        return "facet_type"
    try:
        KeywordStatus(obj.get("status", KeywordStatus.CANDIDATE.value))
    except ValueError:
        return "status"
    if not str(obj.get("canonical_name", "")).strip():
        return "canonical_name"
    if not str(obj.get("id", "")):
        return "id"
    return "aliases" if "alias" in str(exc) else "record"
