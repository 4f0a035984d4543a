"""Offline evaluation: synthetic corpus generation and quality metrics.

The corpus generator plants positives and failure-mode negatives with an
exact schedule and verifies every label against the oracle judge, so
corpus bookkeeping and judged labels can never drift apart. The offline
harness holds out a fifth of the queries, runs the full serving pipeline
on them, and scores the served facets with the judge.
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .judge import (
    Judge,
    LabeledExample,
    OracleJudge,
    VerdictLabel,
    cohens_kappa,
    evaluate,
)
from .ontology import (
    MemberContext,
    OntologySizes,
    SyntheticOntology,
    build_query_pool,
    generate_ontology,
)
from .ranker import (
    ParametricScorer,
    ScorerTrainConfig,
    init_scorer,
    train_supervised,
)
from .retrieval import (
    EncoderParams,
    EncoderTrainConfig,
    FacetIndex,
    build_index,
    encode_query,
    retrieve_with_quotas,
    train_encoder,
)
from .serving import SuggestionService, TokenBudget
from .taxonomy import FacetKeyword, FacetType, Taxonomy
from .textproc import tokenize

logger = logging.getLogger(__name__)

HOLDOUT_FRACTION = 0.2

_NEGATIVE_MODES = ("c1", "c2", "c3")


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs for corpus difficulty and composition.

    Member rates describe positives; negatives pick up members at the
    matched rate so that member presence alone carries no label signal.
    """

    positive_rate: float = 0.5
    negative_mode_weights: tuple[float, float, float] = (0.6, 0.2, 0.2)
    member_rate: float = 0.4
    partner_member_rate: float = 0.15
    separability: float = 1.0
    examples: int = 2400
    queries: int = 120

    def __post_init__(self) -> None:
        if not 0.0 <= self.positive_rate <= 1.0:
            raise ValueError("positive rate must be in [0, 1]")
        if self.examples < 1 or self.queries < 1:
            raise ValueError("examples and queries must be positive")
        if any(w < 0 for w in self.negative_mode_weights) or sum(self.negative_mode_weights) == 0:
            raise ValueError("negative mode weights must be non-negative and sum > 0")


@dataclass
class GeneratedCorpus:
    ontology: SyntheticOntology
    taxonomy: Taxonomy
    examples: list[LabeledExample]
    queries: list[str]
    planted_positive_rate: float
    seed: int

    def positive_rate(self) -> float:
        return sum(1 for ex in self.examples if ex.is_positive) / len(self.examples)


def _weighted_choice(rng: np.random.Generator, options: Sequence[str], weights: Sequence[float]) -> str:
    w = np.asarray(weights, dtype=np.float64)
    return str(options[int(rng.choice(len(options), p=w / w.sum()))])


def generate_corpus(
    seed: int,
    sizes: OntologySizes | None = None,
    cfg: GeneratorConfig | None = None,
) -> GeneratedCorpus:
    """Deterministic ontology, taxonomy, and labeled example corpus.

    Exactly ``round(positive_rate * examples)`` examples are planted as
    positives; the rest are negatives constructed to fail exactly one
    judging axis. Every planted label is re-checked with the oracle
    judge before the corpus is returned.
    """
    sizes = sizes or OntologySizes()
    cfg = cfg or GeneratorConfig()
    ontology, keywords = generate_ontology(seed, sizes, cfg.separability)
    taxonomy = Taxonomy.from_keywords(keywords)
    judge = OracleJudge(ontology)
    rng = np.random.default_rng(seed + 1)

    queries = build_query_pool(ontology, cfg.queries)
    occ_ids = sorted(ontology.occupations)
    by_id = taxonomy.keywords

    n_pos = round(cfg.positive_rate * cfg.examples)
    slots = np.array([True] * n_pos + [False] * (cfg.examples - n_pos))
    rng.shuffle(slots)

    examples: list[LabeledExample] = []
    for positive in slots:
        query = queries[int(rng.integers(len(queries)))]
        occ = ontology.resolve_query_occupation(query)
        assert occ is not None, f"corpus query {query!r} resolves to no occupation"
        if positive:
            ex = _plant_positive(rng, ontology, by_id, query, occ, cfg)
        else:
            ex = _plant_negative(rng, ontology, by_id, occ_ids, query, occ, cfg)
        check = evaluate(ex.query, ex.member, ex.keyword, judge)
        if check.label is not ex.verdict.label:
            raise AssertionError(
                f"generator bookkeeping disagrees with judge for {ex.keyword.id} on {ex.query!r}"
            )
        examples.append(ex)

    corpus = GeneratedCorpus(
        ontology=ontology,
        taxonomy=taxonomy,
        examples=examples,
        queries=queries,
        planted_positive_rate=n_pos / cfg.examples,
        seed=seed,
    )
    return corpus


def _family_partner(ontology: SyntheticOntology, occ) -> "object | None":
    for other in ontology.occupations.values():
        if other.id != occ.id and other.family == occ.family:
            return other
    return None


def _non_redundant(keyword: FacetKeyword, query: str) -> bool:
    return not (set(tokenize(keyword.canonical_name)) & set(tokenize(query)))


def _plant_positive(rng, ontology, by_id, query, occ, cfg) -> LabeledExample:
    judge = OracleJudge(ontology)
    roll = rng.random()
    member: MemberContext | None = None
    pool: list[str]
    partner = _family_partner(ontology, occ)
    if roll < cfg.partner_member_rate and partner is not None and ontology.members_for(partner.id):
        choice = ontology.members_for(partner.id)
        member = choice[int(rng.integers(len(choice)))].context
        pool = sorted(occ.linked_ids() & partner.linked_ids())
    elif roll < cfg.partner_member_rate + cfg.member_rate and ontology.members_for(occ.id):
        choice = ontology.members_for(occ.id)
        member = choice[int(rng.integers(len(choice)))].context
        pool = sorted(occ.linked_ids())
    else:
        pool = sorted(occ.linked_ids())
    candidates = [kid for kid in pool if _non_redundant(by_id[kid], query)]
    if not candidates:
        candidates = [kid for kid in sorted(occ.linked_ids()) if _non_redundant(by_id[kid], query)]
        member = None
    # A uniform draw gives the lone linked workplace type ~1/25 of the
    # positives, far below its share of served slates; floor it so the
    # scorer sees both sides of the workplace-type boundary.
    wt = [kid for kid in candidates if by_id[kid].facet_type is FacetType.WORKPLACE_TYPE]
    if wt and rng.random() < 0.12:
        candidates = wt
    kid = candidates[int(rng.integers(len(candidates)))]
    verdict = evaluate(query, member, by_id[kid], judge)
    return LabeledExample(query=query, member=member, keyword=by_id[kid], verdict=verdict)


def _matched_rate_member(rng, ontology, occ, cfg) -> MemberContext | None:
    """Member for a c1/c3 negative, attached at the rate that equalizes
    member presence across labels: c2 negatives always carry one, so the
    remaining modes compensate to hit the positives' overall rate."""
    roll = rng.random()
    w_c2 = cfg.negative_mode_weights[1] / sum(cfg.negative_mode_weights)
    if w_c2 >= 1.0:
        return None
    rate = (cfg.member_rate + cfg.partner_member_rate - w_c2) / (1.0 - w_c2)
    members = ontology.members_for(occ.id)
    if rate <= 0.0 or roll >= rate or not members:
        return None
    return members[int(rng.integers(len(members)))].context


def _plant_negative(rng, ontology, by_id, occ_ids, query, occ, cfg) -> LabeledExample:
    judge = OracleJudge(ontology)
    mode = _weighted_choice(rng, _NEGATIVE_MODES, cfg.negative_mode_weights)
    partner = _family_partner(ontology, occ)

    if mode == "c2" and partner is not None and ontology.members_for(partner.id):
        # Linked to the query occupation but foreign to the member's.
        exclusive = sorted(occ.linked_ids() - partner.linked_ids())
        exclusive = [kid for kid in exclusive if _non_redundant(by_id[kid], query)]
        members = ontology.members_for(partner.id)
        for m in members:
            industries = {i.lower() for i in m.context.industries}
            usable = [k for k in exclusive if by_id[k].canonical_name.lower() not in industries]
            if usable:
                kid = usable[int(rng.integers(len(usable)))]
                member = m.context
                verdict = evaluate(query, member, by_id[kid], judge)
                return LabeledExample(query=query, member=member, keyword=by_id[kid], verdict=verdict)
        mode = "c1"  # no usable exclusive facet; fall back

    if mode == "c3":
        linked = [kid for kid in sorted(occ.linked_ids()) if _non_redundant(by_id[kid], query)]
        if linked:
            kid = linked[int(rng.integers(len(linked)))]
            token = tokenize(by_id[kid].canonical_name)[0]
            redundant_query = f"{query} {token}"
            member = _matched_rate_member(rng, ontology, occ, cfg)
            verdict = evaluate(redundant_query, member, by_id[kid], judge)
            return LabeledExample(query=redundant_query, member=member, keyword=by_id[kid], verdict=verdict)
        mode = "c1"

    # Default: an unlinked facet. Two deliberate slices cover boundary
    # categories that a plain foreign-family draw would never hit: the
    # family partner's exclusive facets, and workplace types the query
    # occupation does not carry. Without those the scorer drifts toward
    # accepting anything family-adjacent or workplace-flavored.
    roll = rng.random()
    partner_exclusive = []
    if partner is not None:
        partner_exclusive = [
            kid
            for kid in sorted(partner.linked_ids() - occ.linked_ids())
            if by_id[kid].facet_type is not FacetType.WORKPLACE_TYPE
            and _non_redundant(by_id[kid], query)
        ]
    unlinked_wt = [
        kw.id
        for kw in sorted(by_id.values(), key=lambda k: k.id)
        if kw.facet_type is FacetType.WORKPLACE_TYPE
        and kw.id not in occ.linked_ids()
        and _non_redundant(kw, query)
    ]
    if partner_exclusive and roll < 0.3:
        kid = partner_exclusive[int(rng.integers(len(partner_exclusive)))]
    elif unlinked_wt and roll < 0.45:
        kid = unlinked_wt[int(rng.integers(len(unlinked_wt)))]
    else:
        family_ids = occ.linked_ids() | (partner.linked_ids() if partner else frozenset())
        foreign = [
            kid
            for oid in occ_ids
            if ontology.occupations[oid].family != occ.family
            for kid in sorted(ontology.occupations[oid].linked_ids())
            if kid not in family_ids
            and by_id[kid].facet_type is not FacetType.WORKPLACE_TYPE
            and _non_redundant(by_id[kid], query)
        ]
        kid = foreign[int(rng.integers(len(foreign)))]
    member = _matched_rate_member(rng, ontology, occ, cfg)
    verdict = evaluate(query, member, by_id[kid], judge)
    return LabeledExample(query=query, member=member, keyword=by_id[kid], verdict=verdict)


def split_queries(queries: Sequence[str], seed: int, holdout: float = HOLDOUT_FRACTION) -> tuple[list[str], list[str]]:
    """Deterministic train/held-out partition of the query pool."""
    if not 0.0 < holdout < 1.0:
        raise ValueError("holdout fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(queries))
    n_hold = max(1, round(holdout * len(queries)))
    held = sorted(queries[int(i)] for i in order[:n_hold])
    train = sorted(queries[int(i)] for i in order[n_hold:])
    return train, held


def precision_at_k(
    served: Sequence, relevant: Callable[[object], bool], k: int = 5
) -> float:
    """Fraction of the first k served items that are relevant.

    The denominator is what was actually served, so a short slate is not
    penalized for its length. An empty slate has no defined precision;
    callers must count it separately.
    """
    if k < 1:
        raise ValueError("k must be positive")
    top = list(served[:k])
    if not top:
        raise ValueError("no served items; precision is undefined")
    return sum(1 for item in top if relevant(item)) / len(top)


def f1_score(predictions: Sequence[bool], labels: Sequence[bool]) -> float:
    """F1 of the positive class; 0 when precision and recall are both 0."""
    if len(predictions) != len(labels):
        raise ValueError("predictions and labels differ in length")
    if not predictions:
        raise ValueError("cannot compute F1 on empty input")
    tp = sum(1 for p, y in zip(predictions, labels) if p and y)
    fp = sum(1 for p, y in zip(predictions, labels) if p and not y)
    fn = sum(1 for p, y in zip(predictions, labels) if not p and y)
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class EvalReport:
    precision_at_5: float
    f1: float
    per_facet_type: dict[str, float]
    config_fingerprint: str
    pairs: int
    no_suggestion_pairs: int
    kappa: float | None = None

    def __post_init__(self) -> None:
        for name, value in (("precision_at_5", self.precision_at_5), ("f1", self.f1)):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} outside [0, 1]: {value}")
        for ftype, value in self.per_facet_type.items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"precision for {ftype} outside [0, 1]: {value}")

    def to_json_dict(self) -> dict:
        return {
            "precision_at_5": self.precision_at_5,
            "f1": self.f1,
            "per_facet_type": dict(self.per_facet_type),
            "config_fingerprint": self.config_fingerprint,
            "pairs": self.pairs,
            "no_suggestion_pairs": self.no_suggestion_pairs,
            "kappa": self.kappa,
        }


def config_fingerprint(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


@dataclass
class TrainedStack:
    encoder: EncoderParams
    scorer_params: "object"
    index: FacetIndex
    service: SuggestionService
    encoder_losses: tuple[float, ...] = ()
    scorer_losses: tuple[float, ...] = ()


@dataclass(frozen=True)
class StackConfig:
    encoder: EncoderTrainConfig = field(default_factory=EncoderTrainConfig)
    scorer: ScorerTrainConfig = field(default_factory=ScorerTrainConfig)
    feature_mode: str = "full"
    liquidity_threshold: int = 50

    def fingerprint_dict(self) -> dict:
        return {
            "encoder": vars(self.encoder).copy(),
            "scorer": vars(self.scorer).copy(),
            "feature_mode": self.feature_mode,
            "liquidity_threshold": self.liquidity_threshold,
        }


def train_stack(
    corpus: GeneratedCorpus,
    cfg: StackConfig | None = None,
    train_queries: Sequence[str] | None = None,
    job_counts=None,
) -> TrainedStack:
    """Train encoder and scorer on the training split and assemble a service."""
    cfg = cfg or StackConfig()
    if train_queries is None:
        train_queries, _ = split_queries(corpus.queries, corpus.seed)
    train_set = set(train_queries)
    pool = set(corpus.queries)
    train_examples = [
        ex for ex in corpus.examples if _base_query(ex.query, pool) in train_set
    ]
    if not train_examples:
        raise ValueError("training split contains no examples")

    enc_result = train_encoder(train_examples, cfg.encoder)
    index = build_index(corpus.taxonomy, enc_result.params)

    student = init_scorer(feature_mode=cfg.feature_mode, seed=cfg.scorer.seed)
    sc_result = train_supervised(student, train_examples, cfg.scorer)
    scorer = ParametricScorer(sc_result.params)

    service = SuggestionService(
        index=index,
        encoder=enc_result.params,
        scorer=scorer,
        job_counts=job_counts,
        liquidity_threshold=cfg.liquidity_threshold,
        token_budget=TokenBudget(),
    )
    return TrainedStack(
        encoder=enc_result.params,
        scorer_params=sc_result.params,
        index=index,
        service=service,
        encoder_losses=enc_result.epoch_losses,
        scorer_losses=sc_result.epoch_losses,
    )


def _base_query(query: str, pool: set[str]) -> str:
    """Map redundancy-planted example queries back to their pool query."""
    if query in pool:
        return query
    head, _, _ = query.rpartition(" ")
    return head if head in pool else query


def eval_pairs(
    corpus: GeneratedCorpus, held_out: Sequence[str]
) -> list[tuple[str, MemberContext | None]]:
    """Evaluation pairs: each held-out query bare and with an affine member."""
    pairs: list[tuple[str, MemberContext | None]] = []
    for query in held_out:
        pairs.append((query, None))
        occ = corpus.ontology.resolve_query_occupation(query)
        if occ is not None:
            members = corpus.ontology.members_for(occ.id)
            if members:
                pairs.append((query, members[0].context))
    return pairs


def run_offline_eval(
    stack: TrainedStack,
    corpus: GeneratedCorpus,
    judge: Judge | None = None,
    second_judge: Judge | None = None,
    config: dict | None = None,
) -> EvalReport:
    """Serve every held-out pair and judge what came back.

    Precision averages over pairs that produced at least one suggestion;
    pairs with none are counted separately. F1 is computed over the full
    scored slate (served or not) against the judge's labels. When a
    second judge is given, agreement between the two is reported as
    kappa over the same slate.
    """
    judge = judge or OracleJudge(corpus.ontology)
    _, held_out = split_queries(corpus.queries, corpus.seed)
    pairs = eval_pairs(corpus, held_out)

    precisions: list[float] = []
    type_hits: dict[str, list[int]] = {}
    predictions: list[bool] = []
    labels: list[bool] = []
    labels_b: list[bool] = []
    empty = 0
    for query, member in pairs:
        response, scored = stack.service.suggest_detailed(query, member)
        verdicts = {
            c.keyword.id: evaluate(query, member, c.keyword, judge) for c in scored
        }
        for c in scored:
            predictions.append(c.p_yes > 0.5)
            labels.append(verdicts[c.keyword.id].label is VerdictLabel.OKAY)
            if second_judge is not None:
                vb = evaluate(query, member, c.keyword, second_judge)
                labels_b.append(vb.label is VerdictLabel.OKAY)
        if not response.suggestions:
            empty += 1
            continue
        served_ids = {s.value: s for s in response.suggestions}
        okay = {
            c.keyword.id
            for c in scored
            if verdicts[c.keyword.id].label is VerdictLabel.OKAY
        }
        by_value = {c.keyword.canonical_name: c.keyword for c in scored}
        relevant = lambda s: by_value[s.value].id in okay  # noqa: E731
        precisions.append(precision_at_k(list(response.suggestions), relevant, k=5))
        for s in response.suggestions:
            type_hits.setdefault(s.facet_type.value, []).append(int(relevant(s)))

    report = EvalReport(
        precision_at_5=float(np.mean(precisions)) if precisions else 0.0,
        f1=f1_score(predictions, labels) if predictions else 0.0,
        per_facet_type={t: float(np.mean(h)) for t, h in sorted(type_hits.items())},
        config_fingerprint=config_fingerprint(config or {"corpus_seed": corpus.seed}),
        pairs=len(pairs),
        no_suggestion_pairs=empty,
        kappa=(
            cohens_kappa(labels, labels_b) if second_judge is not None and labels_b else None
        ),
    )
    return report


def oracle_positive_ids(
    corpus: GeneratedCorpus, query: str, member: MemberContext | None = None
) -> set[str]:
    """Keywords the judge would accept for this pair, over the whole taxonomy."""
    judge = OracleJudge(corpus.ontology)
    out = set()
    for kw in corpus.taxonomy.sorted_keywords():
        if evaluate(query, member, kw, judge).label is VerdictLabel.OKAY:
            out.add(kw.id)
    return out


def recall_at_quota(
    corpus: GeneratedCorpus, encoder: EncoderParams, queries: Sequence[str]
) -> float:
    """Mean oracle-positive recall of the quota-retrieved slate."""
    index = build_index(corpus.taxonomy, encoder)
    recalls: list[float] = []
    for query in queries:
        positives = oracle_positive_ids(corpus, query)
        if not positives:
            continue
        emb = encode_query(query, None, encoder)
        retrieved = {c.keyword.id for c in retrieve_with_quotas(emb, index)}
        recalls.append(len(retrieved & positives) / len(positives))
    if not recalls:
        raise ValueError("no queries with oracle positives")
    return float(np.mean(recalls))
