"""Token scorer, gating, listwise parity, and distillation mechanics."""

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_keyword
from facetsuggest import ranker
from facetsuggest.ranker import (
    DistillConfig,
    ParametricScorer,
    ScorerTrainConfig,
    TokenDistribution,
    Trajectory,
    content_features,
    distill_objective,
    distill_on_policy,
    forward_kl,
    init_scorer,
    load_scorer,
    measure_distill_kl,
    rank_and_gate,
    sample_trajectory,
    save_scorer,
    score_listwise,
    score_pointwise,
    scorer_input_dim,
    step_input,
    token_length,
    train_supervised,
    training_accuracy,
)
from facetsuggest.retrieval import ScoredCandidate


def dist(p_yes):
    return TokenDistribution(probs={"Yes": p_yes, "No": 1.0 - p_yes})


def candidates_from(p_list, sims=None):
    out = []
    for i, p in enumerate(p_list):
        kw = make_keyword(kid=f"kw_{i:03d}", name=f"skill{i}")
        sim = sims[i] if sims else 0.5
        out.append(ScoredCandidate(keyword=kw, retrieval_similarity=sim, p_yes=p))
    return out


# ---- distributions ----


def test_distribution_validates_mass():
    with pytest.raises(ValueError):
        TokenDistribution(probs={"Yes": 0.7, "No": 0.7})
    with pytest.raises(ValueError):
        TokenDistribution(probs={"Yes": 1.0})


def test_uniform_logits_give_half():
    d = TokenDistribution.from_logits(("Yes", "No"), np.zeros(2))
    assert d.p_yes == pytest.approx(0.5, abs=1e-12)


def test_saturated_yes_logit():
    d = TokenDistribution.from_logits(("Yes", "No"), np.array([20.0, 0.0]))
    assert d.p_yes > 0.999


def test_trained_scorer_confirms_fixture_pair(stack, by_name):
    scorer = ParametricScorer(stack.scorer_params)
    p = scorer.distribution("registered nurse", None, by_name["Telemetry"]).p_yes
    assert p > 0.5


# ---- features ----


def test_compact_dim_is_ceil_third():
    full = scorer_input_dim("full")
    compact = scorer_input_dim("compact")
    assert compact == math.ceil(full / 3)


def test_compact_dim_odd_block():
    assert scorer_input_dim("full", block_size=11) == 33
    assert scorer_input_dim("compact", block_size=11) == 11


def test_content_features_modes_differ(by_name):
    full = content_features("registered nurse", None, by_name["Telemetry"], "full")
    compact = content_features("registered nurse", None, by_name["Telemetry"], "compact")
    assert full.shape[0] == 3 * compact.shape[0]


def test_step_input_context_block():
    content = np.ones(4)
    x = step_input(content, -1, 2)
    assert x.shape == (7,)
    assert x[4] == 1.0 and x[5] == 0.0 and x[6] == 0.0
    x = step_input(content, 1, 2)
    assert x[4] == 0.0 and x[6] == 1.0
    with pytest.raises(ValueError):
        step_input(content, 2, 2)


def test_p_yes_monotone_in_yes_logit():
    params = init_scorer(seed=0)
    scorer = ParametricScorer(params)
    kw = make_keyword()
    base = scorer.distribution("registered nurse", None, kw).p_yes
    w = params.weights.copy()
    w[params.yes_index, :] += 0.5
    bumped = ParametricScorer(replace(params, weights=w))
    assert bumped.distribution("registered nurse", None, kw).p_yes > base


# ---- gate ----


def test_gate_keeps_top5_drops_sixth():
    cands = candidates_from([0.9, 0.8, 0.7, 0.6, 0.55, 0.52])
    kept = rank_and_gate(cands)
    assert [c.p_yes for c in kept] == [0.9, 0.8, 0.7, 0.6, 0.55]


def test_gate_filters_below_half():
    cands = candidates_from([0.9, 0.4, 0.3])
    assert len(rank_and_gate(cands)) == 1


def test_gate_threshold_is_strict():
    cands = candidates_from([0.5])
    assert rank_and_gate(cands) == []


def test_gate_rejects_unscored():
    kw = make_keyword()
    with pytest.raises(ValueError):
        rank_and_gate([ScoredCandidate(keyword=kw, retrieval_similarity=0.5)])


def test_gate_tie_break_on_similarity_then_id():
    cands = candidates_from([0.8, 0.8, 0.8], sims=[0.1, 0.9, 0.9])
    kept = rank_and_gate(cands)
    assert [c.keyword.id for c in kept] == ["kw_001", "kw_002", "kw_000"]


def gate_oracle(cands, threshold=0.5, limit=5):
    pool = [c for c in cands if c.p_yes > threshold]
    pool.sort(key=lambda c: (-c.p_yes, -c.retrieval_similarity, c.keyword.id))
    return pool[:limit]


@settings(max_examples=200, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.floats(0.0, 1.0, allow_nan=False),
            st.floats(-1.0, 1.0, allow_nan=False),
        ),
        min_size=0,
        max_size=27,
    )
)
def test_gate_matches_bruteforce_oracle(rows):
    cands = candidates_from([p for p, _ in rows], sims=[s for _, s in rows])
    assert rank_and_gate(cands) == gate_oracle(cands)


# ---- listwise ----


def test_listwise_single_candidate(stack, by_name):
    scorer = ParametricScorer(stack.scorer_params)
    cand = ScoredCandidate(keyword=by_name["Telemetry"], retrieval_similarity=0.9)
    res = score_listwise("registered nurse", None, [cand], scorer)
    assert len(res.ordered) == 1
    assert res.generated_tokens == token_length(by_name["Telemetry"])


def test_listwise_pointwise_parity(stack, corpus):
    from facetsuggest.retrieval import encode_query, retrieve_with_quotas

    scorer = ParametricScorer(stack.scorer_params)
    for q in corpus.queries[:8]:
        emb = encode_query(q, None, stack.encoder)
        cands = retrieve_with_quotas(emb, stack.index)
        scored = [
            replace(c, p_yes=score_pointwise(q, None, c, scorer)) for c in cands
        ]
        point_top = [c.keyword.id for c in rank_and_gate(scored)]
        listwise = score_listwise(q, None, cands, scorer)
        list_top = [c.keyword.id for c in rank_and_gate(list(listwise.ordered))]
        assert point_top == list_top


def test_listwise_generated_token_count():
    parts = [
        ScoredCandidate(
            keyword=make_keyword(kid=f"kw_{i:03d}", name="alpha beta gamma"),
            retrieval_similarity=0.5,
        )
        for i in range(27)
    ]
    params = init_scorer(seed=0)
    res = score_listwise("registered nurse", None, parts, ParametricScorer(params))
    assert res.generated_tokens == 81


# ---- forward KL ----


def test_kl_identical_is_zero():
    d = dist(0.3)
    assert forward_kl(d, d) <= 1e-12


def test_kl_onehot_vs_uniform():
    assert forward_kl(dist(1.0), dist(0.5)) == pytest.approx(math.log(2.0), abs=1e-12)


def test_kl_frozen_value():
    expected = 0.8 * math.log(0.8 / 0.6) + 0.2 * math.log(0.2 / 0.4)
    assert forward_kl(dist(0.8), dist(0.6)) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.0915, abs=5e-5)


def test_kl_vocab_mismatch():
    a = TokenDistribution(probs={"Yes": 0.5, "No": 0.5})
    b = TokenDistribution(probs={"Yes": 0.4, "No": 0.3, "Maybe": 0.3})
    with pytest.raises(ValueError):
        forward_kl(a, b)


@settings(max_examples=1000, deadline=None)
@given(st.floats(0.0, 1.0, allow_nan=False), st.floats(0.0, 1.0, allow_nan=False))
def test_kl_nonnegative_property(p, q):
    assert forward_kl(dist(p), dist(q)) >= 0.0


# ---- supervised training ----


def test_train_lr_zero_is_identity(train_examples):
    student = init_scorer(seed=0)
    cfg = ScorerTrainConfig(learning_rate=0.0, epochs=1)
    out = train_supervised(student, train_examples[:64], cfg)
    assert np.array_equal(out.params.weights, student.weights)


def test_train_deterministic(train_examples):
    student = init_scorer(seed=0)
    cfg = ScorerTrainConfig(epochs=2, seed=9)
    a = train_supervised(student, train_examples[:128], cfg)
    b = train_supervised(student, train_examples[:128], cfg)
    assert np.array_equal(a.params.weights, b.params.weights)


def test_train_loss_decreases(stack):
    assert stack.scorer_losses[-1] < stack.scorer_losses[0]


def test_trained_accuracy_beats_090(stack, train_examples):
    assert training_accuracy(stack.scorer_params, train_examples) > 0.9


def test_train_empty_corpus_rejected():
    with pytest.raises(ValueError):
        train_supervised(init_scorer(), [], ScorerTrainConfig())


def test_compact_mode_trains(train_examples):
    student = init_scorer(feature_mode="compact", seed=0)
    out = train_supervised(student, train_examples[:256], ScorerTrainConfig(epochs=4))
    assert out.params.feature_mode == "compact"
    assert out.params.feature_dim == scorer_input_dim("compact")


# ---- distillation ----


def fixture_distill_task(corpus, block_size=32, n_train=120, n_held=60):
    teacher0 = init_scorer(feature_mode="full", block_size=block_size, seed=0)
    teacher = train_supervised(
        teacher0, corpus.examples[:600], ScorerTrainConfig(block_size=block_size, epochs=10)
    ).params
    rng = np.random.default_rng(42)
    idx = rng.permutation(len(corpus.examples))
    feats = lambda ex: content_features(ex.query, ex.member, ex.keyword, "full", block_size)
    train_inputs = [feats(corpus.examples[int(i)]) for i in idx[:n_train]]
    held_inputs = [feats(corpus.examples[int(i)]) for i in idx[n_train : n_train + n_held]]
    return teacher, train_inputs, held_inputs


def test_equal_student_teacher_is_noop(corpus):
    teacher, train_inputs, _ = fixture_distill_task(corpus)
    student = replace(teacher)
    kl = measure_distill_kl(student, teacher, train_inputs[:20])
    assert kl <= 1e-12
    res = distill_on_policy(student, teacher, train_inputs[:20], DistillConfig(steps=3))
    assert np.allclose(res.params.weights, teacher.weights, atol=1e-12)


def test_distill_reduces_held_out_kl(corpus):
    teacher, train_inputs, held_inputs = fixture_distill_task(corpus)
    student = init_scorer(feature_mode="full", block_size=32, seed=101)
    initial = measure_distill_kl(student, teacher, held_inputs, seed=0)
    res = distill_on_policy(
        student, teacher, train_inputs,
        DistillConfig(steps=200, learning_rate=3.5, batch_size=len(train_inputs), seed=0),
    )
    final = measure_distill_kl(res.params, teacher, held_inputs, seed=0)
    assert final < 0.1 * initial


def test_distill_objective_gradient_matches_fd(corpus):
    teacher, train_inputs, _ = fixture_distill_task(corpus)
    student = init_scorer(feature_mode="full", block_size=32, seed=55)
    rng = np.random.default_rng(8)
    trajectories = [
        sample_trajectory(student, teacher, f, 2, rng) for f in train_inputs[:6]
    ]
    w = student.weights.copy()
    _, grad = distill_objective(w, teacher, trajectories)
    eps = 1e-6
    probes = [(int(rng.integers(w.shape[0])), int(rng.integers(w.shape[1]))) for _ in range(30)]
    for i, j in probes:
        w[i, j] += eps
        up = distill_objective(w, teacher, trajectories)[0]
        w[i, j] -= 2 * eps
        down = distill_objective(w, teacher, trajectories)[0]
        w[i, j] += eps
        fd = (up - down) / (2 * eps)
        assert abs(fd - grad[i, j]) <= 1e-4 * max(1.0, abs(grad[i, j]))


def test_trajectory_sampling_deterministic(corpus):
    teacher, train_inputs, _ = fixture_distill_task(corpus)
    student = init_scorer(feature_mode="full", block_size=32, seed=7)
    a = sample_trajectory(student, teacher, train_inputs[0], 3, np.random.default_rng(1))
    b = sample_trajectory(student, teacher, train_inputs[0], 3, np.random.default_rng(1))
    assert a.tokens == b.tokens


def test_trajectory_validates_alignment():
    with pytest.raises(ValueError):
        Trajectory(content=np.ones(3), tokens=(), student_dists=(), teacher_dists=())


def test_distill_vocab_mismatch_rejected(corpus):
    teacher, train_inputs, _ = fixture_distill_task(corpus)
    student = init_scorer(
        feature_mode="full", block_size=32, vocab=("Yes", "No", "Skip"), seed=0
    )
    with pytest.raises(ValueError):
        distill_on_policy(student, teacher, train_inputs, DistillConfig(steps=1))


def test_distill_argmax_agreement_improves(corpus):
    teacher, train_inputs, held_inputs = fixture_distill_task(corpus)
    student = init_scorer(feature_mode="full", block_size=32, seed=102)

    def agreement(params):
        hits = 0
        for f in held_inputs:
            x = step_input(f, -1, len(params.vocab))
            s = int(np.argmax(params.weights @ x))
            t = int(np.argmax(teacher.weights @ x))
            hits += int(s == t)
        return hits / len(held_inputs)

    before = agreement(student)
    res = distill_on_policy(
        student, teacher, train_inputs,
        DistillConfig(steps=200, learning_rate=3.5, batch_size=len(train_inputs), seed=0),
    )
    assert agreement(res.params) >= before


# ---- persistence ----


def test_scorer_artifact_round_trip(stack, tmp_path):
    path = tmp_path / "scorer.bin"
    save_scorer(stack.scorer_params, path)
    loaded = load_scorer(path)
    assert np.array_equal(loaded.weights, stack.scorer_params.weights)
    assert loaded.vocab == stack.scorer_params.vocab
    assert loaded.feature_mode == stack.scorer_params.feature_mode
