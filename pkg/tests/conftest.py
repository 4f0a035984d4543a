"""Shared fixtures: one generated corpus and one trained stack per session.

Everything downstream keys off corpus seed 7; regenerating or retraining
per test would dominate the suite's runtime.
"""

import pytest

from facetsuggest import evaluation, ranker, retrieval, serving
from facetsuggest.taxonomy import FacetKeyword, FacetType, KeywordStatus, Taxonomy

CORPUS_SEED = 7


@pytest.fixture(scope="session")
def corpus():
    return evaluation.generate_corpus(CORPUS_SEED)


@pytest.fixture(scope="session")
def stack(corpus):
    return evaluation.train_stack(corpus)


@pytest.fixture(scope="session")
def ontology(corpus):
    return corpus.ontology


@pytest.fixture(scope="session")
def taxonomy(corpus):
    return corpus.taxonomy


@pytest.fixture(scope="session")
def by_name(taxonomy):
    return {k.canonical_name: k for k in taxonomy.keywords.values()}


@pytest.fixture(scope="session")
def train_examples(corpus):
    train_q, _ = evaluation.split_queries(corpus.queries, corpus.seed)
    pool = set(corpus.queries)
    picked = set(train_q)
    return [ex for ex in corpus.examples if evaluation._base_query(ex.query, pool) in picked]


@pytest.fixture(scope="session")
def micro_service(corpus, stack, by_name, ontology):
    """Ten-keyword service: the five named positives for the nurse
    occupation, the two foreign workplace types, and three facets from an
    occupation outside the nurse family."""
    nurse = ontology.resolve_query_occupation("registered nurse")
    foreign_occ = ontology.occupations["occ_04"]
    assert foreign_occ.family != nurse.family
    foreign = sorted(foreign_occ.linked[FacetType.DOMAIN_KNOWLEDGE])[:3]
    names = ["Telemetry", "Cardiology", "Healthcare", "Pharma", "Remote", "Hybrid", "Onsite"]
    pool = [by_name[n] for n in names] + [corpus.taxonomy.get(i) for i in foreign]
    assert len(pool) == 10
    tax = Taxonomy.from_keywords(pool)
    index = retrieval.build_index(tax, stack.encoder)
    return serving.SuggestionService(
        index=index,
        encoder=stack.encoder,
        scorer=ranker.ParametricScorer(stack.scorer_params),
    )


def make_keyword(
    kid="kw_test",
    facet_type=FacetType.DOMAIN_KNOWLEDGE,
    name="Telemetry",
    definition="cardiac monitoring",
    aliases=(),
    status=KeywordStatus.CANDIDATE,
):
    return FacetKeyword(
        id=kid,
        facet_type=facet_type,
        canonical_name=name,
        definition=definition,
        aliases=aliases,
        status=status,
    )
