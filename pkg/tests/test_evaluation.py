"""Corpus generation, metrics, the offline eval loop, and its report."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from facetsuggest import evaluation
from facetsuggest.evaluation import (
    EvalReport,
    GeneratorConfig,
    StackConfig,
    config_fingerprint,
    eval_pairs,
    f1_score,
    generate_corpus,
    oracle_positive_ids,
    precision_at_k,
    recall_at_quota,
    run_offline_eval,
    split_queries,
    train_stack,
)
from facetsuggest.judge import OracleJudge, VerdictLabel, evaluate
from facetsuggest.ontology import OntologySizes, generate_ontology
from facetsuggest.ranker import ParametricScorer, init_scorer
from facetsuggest.retrieval import DEFAULT_QUOTAS, build_index, init_encoder
from facetsuggest.serving import SuggestionService, TokenBudget
from facetsuggest.taxonomy import FacetType


# ---- generator ----


def test_generator_config_validation():
    with pytest.raises(ValueError):
        GeneratorConfig(positive_rate=1.5)
    with pytest.raises(ValueError):
        GeneratorConfig(examples=0)
    with pytest.raises(ValueError):
        GeneratorConfig(negative_mode_weights=(0.0, 0.0, 0.0))


def test_default_taxonomy_has_about_400_keywords(corpus):
    assert 350 <= len(corpus.taxonomy.sorted_keywords()) <= 450


def test_same_seed_reproduces_corpus(corpus):
    again = generate_corpus(seed=corpus.seed)
    assert again.queries == corpus.queries
    assert again.examples == corpus.examples
    assert again.planted_positive_rate == corpus.planted_positive_rate


def test_planted_rate_is_exact():
    cfg = GeneratorConfig(positive_rate=0.3, examples=400, queries=40)
    corpus = generate_corpus(seed=11, cfg=cfg)
    assert corpus.positive_rate() == 0.3


def test_infeasible_sizes_name_the_quota():
    sizes = OntologySizes(domain_knowledge_per_occupation=4)
    with pytest.raises(ValueError, match="DomainKnowledge"):
        generate_ontology(seed=1, sizes=sizes)


def test_ontology_links_satisfy_quotas(corpus):
    for occ in corpus.ontology.occupations.values():
        for ftype, need in DEFAULT_QUOTAS.items():
            assert len(occ.linked_ids(ftype)) >= need, (occ.id, ftype)


def test_oracle_consistency(corpus):
    judge = OracleJudge(corpus.ontology)
    for ex in corpus.examples[::37]:
        again = evaluate(ex.query, ex.member, ex.keyword, judge)
        assert again == ex.verdict


def test_oracle_positive_ids_fixture(corpus, by_name):
    ids = oracle_positive_ids(corpus, "registered nurse")
    assert by_name["Telemetry"].id in ids
    assert by_name["Remote"].id in ids
    assert by_name["Litigation"].id not in ids


# ---- split ----


def test_split_is_deterministic_and_disjoint(corpus):
    a_train, a_held = split_queries(corpus.queries, corpus.seed)
    b_train, b_held = split_queries(corpus.queries, corpus.seed)
    assert a_train == b_train and a_held == b_held
    assert not (set(a_train) & set(a_held))
    assert sorted(a_train + a_held) == sorted(corpus.queries)
    assert len(a_held) == max(1, round(0.2 * len(corpus.queries)))
    assert a_train == sorted(a_train) and a_held == sorted(a_held)


def test_split_rejects_bad_holdout(corpus):
    with pytest.raises(ValueError):
        split_queries(corpus.queries, 0, holdout=0.0)
    with pytest.raises(ValueError):
        split_queries(corpus.queries, 0, holdout=1.0)


# ---- metrics ----


def test_precision_fixtures():
    assert precision_at_k([1] * 5, lambda x: True) == 1.0
    assert precision_at_k([1] * 5, lambda x: False) == 0.0
    served = ["a", "b", "c", "d"]
    assert precision_at_k(served, lambda x: x != "d") == 0.75


def test_precision_errors():
    with pytest.raises(ValueError):
        precision_at_k([], lambda x: True)
    with pytest.raises(ValueError):
        precision_at_k([1], lambda x: True, k=0)


def test_precision_uses_served_denominator():
    assert precision_at_k(["a", "b"], lambda x: x == "a", k=5) == 0.5


def test_f1_fixtures():
    assert f1_score([True, False], [True, False]) == 1.0
    assert f1_score([False, False], [True, False]) == 0.0
    # TP=3, FP=1, FN=2 -> precision 0.75, recall 0.6, F1 = 2/3
    preds = [True, True, True, True, False, False, False]
    labels = [True, True, True, False, True, True, False]
    assert f1_score(preds, labels) == pytest.approx(2 / 3)


def test_f1_errors():
    with pytest.raises(ValueError):
        f1_score([True], [True, False])
    with pytest.raises(ValueError):
        f1_score([], [])


@settings(max_examples=500, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=30))
def test_f1_matches_bruteforce_counting(rows):
    preds = [p for p, _ in rows]
    labels = [y for _, y in rows]
    tp = sum(p and y for p, y in rows)
    fp = sum(p and not y for p, y in rows)
    fn = sum(not p and y for p, y in rows)
    if tp == 0:
        expected = 0.0
    else:
        prec, rec = tp / (tp + fp), tp / (tp + fn)
        expected = 2 * prec * rec / (prec + rec)
    assert f1_score(preds, labels) == pytest.approx(expected)


@settings(max_examples=500, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=12), st.integers(1, 8))
def test_precision_matches_bruteforce_counting(flags, k):
    served = list(range(len(flags)))
    top = flags[:k]
    expected = sum(top) / len(top)
    assert precision_at_k(served, lambda i: flags[i], k=k) == pytest.approx(expected)


# ---- offline eval ----


def test_trained_stack_beats_090_precision(stack, corpus):
    report = run_offline_eval(stack, corpus)
    assert report.precision_at_5 >= 0.9
    assert 0.0 <= report.f1 <= 1.0


def test_untrained_stack_tracks_base_rate(corpus):
    judge = OracleJudge(corpus.ontology)
    encoder = init_encoder(seed=3)
    index = build_index(corpus.taxonomy, encoder)
    service = SuggestionService(
        index=index,
        encoder=encoder,
        scorer=ParametricScorer(init_scorer(seed=3)),
        token_budget=TokenBudget(),
    )
    _, held = split_queries(corpus.queries, corpus.seed)
    precisions, base_rates = [], []
    for query, member in eval_pairs(corpus, held):
        resp, scored = service.suggest_detailed(query, member)
        okay = {
            c.keyword.id
            for c in scored
            if evaluate(query, member, c.keyword, judge).label is VerdictLabel.OKAY
        }
        if scored:
            base_rates.append(len(okay) / len(scored))
        if resp.suggestions:
            by_value = {c.keyword.canonical_name: c.keyword for c in scored}
            precisions.append(
                precision_at_k(list(resp.suggestions), lambda s: by_value[s.value].id in okay, k=5)
            )
    assert precisions, "untrained stack served nothing at all"
    diff = abs(float(np.mean(precisions)) - float(np.mean(base_rates)))
    assert diff <= 0.1


def test_eval_report_is_deterministic(stack, corpus):
    a = run_offline_eval(stack, corpus)
    b = run_offline_eval(stack, corpus)
    assert a == b


def test_eval_report_with_second_judge_reports_kappa(stack, corpus):
    judge = OracleJudge(corpus.ontology)
    report = run_offline_eval(stack, corpus, judge=judge, second_judge=judge)
    assert report.kappa == 1.0


def test_eval_report_json_round_trip(stack, corpus):
    report = run_offline_eval(stack, corpus)
    doc = report.to_json_dict()
    assert set(doc) == {
        "precision_at_5", "f1", "per_facet_type", "config_fingerprint",
        "pairs", "no_suggestion_pairs", "kappa",
    }
    assert doc["pairs"] == report.pairs


def test_eval_report_validates_ranges():
    with pytest.raises(ValueError):
        EvalReport(precision_at_5=1.2, f1=0.5, per_facet_type={},
                   config_fingerprint="x", pairs=1, no_suggestion_pairs=0)
    with pytest.raises(ValueError):
        EvalReport(precision_at_5=0.5, f1=0.5, per_facet_type={"DomainKnowledge": -0.1},
                   config_fingerprint="x", pairs=1, no_suggestion_pairs=0)


def test_config_fingerprint_stable_and_order_free():
    a = config_fingerprint({"b": 2, "a": 1})
    b = config_fingerprint({"a": 1, "b": 2})
    assert a == b
    assert len(a) == 16
    assert a != config_fingerprint({"a": 1, "b": 3})


def test_eval_pairs_cover_bare_and_member(corpus):
    _, held = split_queries(corpus.queries, corpus.seed)
    pairs = eval_pairs(corpus, held)
    by_query = {}
    for q, m in pairs:
        by_query.setdefault(q, []).append(m)
    for q in held:
        assert None in by_query[q]
    assert any(m is not None for ms in by_query.values() for m in ms)


def test_train_stack_rejects_empty_split(corpus):
    with pytest.raises(ValueError):
        train_stack(corpus, train_queries=["no such query"])


def test_recall_at_quota_rejects_positive_free_input(stack, corpus):
    with pytest.raises(ValueError):
        recall_at_quota(corpus, stack.encoder, [])


def test_stack_config_fingerprint_dict_round_trips():
    cfg = StackConfig()
    doc = cfg.fingerprint_dict()
    assert doc["feature_mode"] == "full"
    assert doc["scorer"]["epochs"] == 20
    assert doc["encoder"]["batch_size"] == 256


def test_base_query_maps_expanded_queries_back(corpus):
    pool = set(corpus.queries)
    expanded = [ex for ex in corpus.examples if ex.query not in pool]
    assert expanded, "corpus plants no redundancy examples"
    for ex in expanded[:10]:
        base = evaluation._base_query(ex.query, pool)
        assert base in pool
        assert ex.query.startswith(base)
