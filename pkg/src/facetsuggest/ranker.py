"""Candidate ranking by a parametric token scorer.

The scorer is a linear softmax over hashed text features that emits a
distribution over answer tokens; the probability mass on "Yes" ranks
candidates. A pointwise pass scores each candidate independently, the
listwise pass orders the whole slate in one request, and both agree
exactly because they share the same parameters. Training is supervised
cross-entropy on judge labels, optionally followed by on-policy
distillation that matches a student's per-step token distributions to a
teacher's under forward KL.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .judge import LabeledExample
from .ontology import MemberContext
from .persist import read_array_artifact, write_array_artifact
from .retrieval import ScoredCandidate
from .taxonomy import FacetKeyword
from .textproc import normalize_name, stable_bucket, tokenize

YES_TOKEN = "Yes"
NO_TOKEN = "No"
DEFAULT_VOCAB = (YES_TOKEN, NO_TOKEN)

DEFAULT_BLOCK_SIZE = 512
GATE_THRESHOLD = 0.5
GATE_LIMIT = 5
KL_FLOOR = 1e-12

_DIST_SUM_TOL = 1e-9


@dataclass(frozen=True)
class TokenDistribution:
    """Probabilities over an answer vocabulary that includes Yes and No."""

    probs: dict[str, float]

    def __post_init__(self) -> None:
        if YES_TOKEN not in self.probs or NO_TOKEN not in self.probs:
            raise ValueError("vocabulary must contain Yes and No")
        total = 0.0
        for token, p in self.probs.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability for {token!r} outside [0, 1]: {p}")
            total += p
        if abs(total - 1.0) > _DIST_SUM_TOL:
            raise ValueError(f"probabilities sum to {total!r}, expected 1")
        object.__setattr__(self, "probs", dict(self.probs))

    @property
    def p_yes(self) -> float:
        return self.probs[YES_TOKEN]

    @classmethod
    def from_logits(cls, vocab: Sequence[str], logits: np.ndarray) -> "TokenDistribution":
        probs = softmax(np.asarray(logits, dtype=np.float64))
        return cls(probs=dict(zip(vocab, probs.tolist())))


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    exp = np.exp(shifted)
    return exp / exp.sum()


def scorer_input_dim(feature_mode: str, block_size: int = DEFAULT_BLOCK_SIZE) -> int:
    """Content dimension by mode; compact keeps a third of the full width."""
    full = 3 * block_size
    if feature_mode == "full":
        return full
    if feature_mode == "compact":
        return math.ceil(full / 3)
    raise ValueError(f"unknown feature mode {feature_mode!r}")


def content_features(
    query: str,
    member: MemberContext | None,
    keyword: FacetKeyword,
    feature_mode: str = "full",
    block_size: int = DEFAULT_BLOCK_SIZE,
) -> np.ndarray:
    """Hashed scorer input, L2-normalized.

    The first block crosses query tokens with keyword tokens and flags
    keyword name tokens already present in the query; the second holds
    per-side token counts; the third crosses member profile tokens with
    the keyword. Compact mode keeps only the first block, dropping the
    member context entirely.
    """
    dim = scorer_input_dim(feature_mode, block_size)
    vec = np.zeros(dim, dtype=np.float64)
    qtokens = tokenize(query)
    name_tokens = tokenize(keyword.canonical_name)
    ktokens = name_tokens + tokenize(keyword.definition)

    for a in qtokens:
        for b in ktokens:
            vec[stable_bucket(f"x:{a}|{b}", block_size)] += 1.0
    qset = set(qtokens)
    for t in name_tokens:
        if t in qset:
            vec[stable_bucket(f"dup:{t}", block_size)] += 2.0
            # Aggregate coordinate: redundancy must stay visible after
            # normalization even when member features dominate the norm.
            vec[stable_bucket("dup-any", block_size)] += 3.0

    if feature_mode == "full":
        for t in qtokens:
            vec[block_size + stable_bucket("q:" + t, block_size)] += 1.0
        for t in ktokens:
            vec[block_size + stable_bucket("k:" + t, block_size)] += 1.0
        if member is not None:
            mtokens = [t for title in member.preferred_titles for t in tokenize(title)]
            mtokens += [t for ind in member.industries for t in tokenize(ind)]
            for a in mtokens:
                for b in ktokens:
                    vec[2 * block_size + stable_bucket(f"m:{a}|{b}", block_size)] += 1.0
            if normalize_name(keyword.canonical_name) in {
                normalize_name(i) for i in member.industries
            }:
                vec[2 * block_size + stable_bucket("industry-match", block_size)] += 2.0

    norm = float(np.linalg.norm(vec))
    if norm > 0.0:
        vec /= norm
    return vec


@dataclass(frozen=True)
class ScorerParams:
    """Linear scorer weights.

    The input to each row is the content features plus a one-hot context
    block (start marker, then previous answer token), so the matrix has
    ``feature_dim + 1 + len(vocab)`` columns.
    """

    weights: np.ndarray
    vocab: tuple[str, ...]
    feature_dim: int
    feature_mode: str
    seed: int

    def __post_init__(self) -> None:
        if YES_TOKEN not in self.vocab or NO_TOKEN not in self.vocab:
            raise ValueError("scorer vocabulary must contain Yes and No")
        if len(set(self.vocab)) != len(self.vocab):
            raise ValueError("scorer vocabulary contains duplicates")
        w = np.asarray(self.weights, dtype=np.float64)
        expected = (len(self.vocab), self.feature_dim + 1 + len(self.vocab))
        if w.shape != expected:
            raise ValueError(f"weights shape {w.shape}, expected {expected}")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights contain non-finite values")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "vocab", tuple(self.vocab))

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    @property
    def yes_index(self) -> int:
        return self.vocab.index(YES_TOKEN)


def init_scorer(
    feature_mode: str = "full",
    block_size: int = DEFAULT_BLOCK_SIZE,
    vocab: Sequence[str] = DEFAULT_VOCAB,
    seed: int = 0,
    scale: float = 0.01,
) -> ScorerParams:
    dim = scorer_input_dim(feature_mode, block_size)
    rng = np.random.default_rng(seed)
    weights = rng.normal(0.0, scale, (len(vocab), dim + 1 + len(vocab)))
    return ScorerParams(
        weights=weights, vocab=tuple(vocab), feature_dim=dim, feature_mode=feature_mode, seed=seed
    )


def step_input(content: np.ndarray, prev_index: int, vocab_size: int) -> np.ndarray:
    """Content features with the context one-hot appended.

    ``prev_index`` of -1 marks the start of generation; otherwise it is
    the vocabulary index of the previously emitted token.
    """
    if not -1 <= prev_index < vocab_size:
        raise ValueError(f"prev_index {prev_index} outside [-1, {vocab_size})")
    ctx = np.zeros(1 + vocab_size, dtype=np.float64)
    ctx[prev_index + 1] = 1.0
    return np.concatenate([content, ctx])


class ParametricScorer:
    """Bundles scorer parameters with their featurization mode."""

    def __init__(self, params: ScorerParams, block_size: int = DEFAULT_BLOCK_SIZE):
        if params.feature_dim != scorer_input_dim(params.feature_mode, block_size):
            raise ValueError("params feature_dim inconsistent with block size")
        self.params = params
        self.block_size = block_size

    def features(self, query: str, member: MemberContext | None, keyword: FacetKeyword) -> np.ndarray:
        return content_features(query, member, keyword, self.params.feature_mode, self.block_size)

    def distribution_from_features(self, content: np.ndarray, prev_index: int = -1) -> TokenDistribution:
        x = step_input(content, prev_index, self.params.vocab_size)
        return TokenDistribution.from_logits(self.params.vocab, self.params.weights @ x)

    def distribution(
        self, query: str, member: MemberContext | None, keyword: FacetKeyword
    ) -> TokenDistribution:
        return self.distribution_from_features(self.features(query, member, keyword))


def score_pointwise(
    query: str, member: MemberContext | None, candidate: ScoredCandidate, scorer: ParametricScorer
) -> float:
    """Probability that the scorer answers Yes for one candidate."""
    dist = scorer.distribution(query, member, candidate.keyword)
    return dist.p_yes


def _rank_key(candidate: ScoredCandidate) -> tuple[float, float, str]:
    return (-candidate.p_yes, -candidate.retrieval_similarity, candidate.keyword.id)


def rank_and_gate(
    candidates: Sequence[ScoredCandidate],
    threshold: float = GATE_THRESHOLD,
    limit: int = GATE_LIMIT,
) -> list[ScoredCandidate]:
    """Sort by p_yes, keep strict passers, truncate to the serving limit.

    Ties break on retrieval similarity, then keyword id, so the output is
    a deterministic function of its input set.
    """
    for c in candidates:
        if c.p_yes is None:
            raise ValueError(f"candidate {c.keyword.id} has no p_yes; score before gating")
    ordered = sorted(candidates, key=_rank_key)
    return [c for c in ordered if c.p_yes > threshold][:limit]


def token_length(keyword: FacetKeyword) -> int:
    return max(1, len(tokenize(keyword.canonical_name)))


@dataclass(frozen=True)
class ListwiseResult:
    ordered: tuple[ScoredCandidate, ...]
    generated_tokens: int


def score_listwise(
    query: str,
    member: MemberContext | None,
    candidates: Sequence[ScoredCandidate],
    scorer: ParametricScorer,
) -> ListwiseResult:
    """Order a whole slate in one logical request.

    Internally each candidate still gets the same per-candidate Yes
    probability as the pointwise path, so the two formulations agree
    exactly; what differs is the serving shape, which must emit every
    candidate's name and therefore generates one token per name token.
    """
    scored = [
        replace(c, p_yes=score_pointwise(query, member, c, scorer)) for c in candidates
    ]
    ordered = tuple(sorted(scored, key=_rank_key))
    generated = sum(token_length(c.keyword) for c in candidates)
    return ListwiseResult(ordered=ordered, generated_tokens=generated)


def forward_kl(p: TokenDistribution, q: TokenDistribution, floor: float = KL_FLOOR) -> float:
    """Forward KL divergence from p to q over an identical vocabulary.

    The student side is floored at ``floor`` before the log so that a
    hard zero under q cannot produce an infinity; zero-mass terms of p
    contribute nothing.
    """
    if set(p.probs) != set(q.probs):
        raise ValueError("distributions have mismatched vocabularies")
    total = 0.0
    for token, pi in p.probs.items():
        if pi > 0.0:
            total += pi * math.log(pi / max(q.probs[token], floor))
    # The floor can push the sum a hair below zero when p carries mass
    # smaller than the floor exactly where q is zero; true KL never is.
    return max(0.0, total)


@dataclass(frozen=True)
class ScorerTrainConfig:
    learning_rate: float = 2.0
    epochs: int = 20
    batch_size: int = 64
    seed: int = 0
    block_size: int = DEFAULT_BLOCK_SIZE

    def __post_init__(self) -> None:
        if self.learning_rate < 0:
            raise ValueError("learning rate must be non-negative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch size must be positive")


@dataclass(frozen=True)
class ScorerTrainResult:
    params: ScorerParams
    epoch_losses: tuple[float, ...]

    @property
    def final_loss(self) -> float:
        return self.epoch_losses[-1]


def train_supervised(
    student: ScorerParams, corpus: Sequence[LabeledExample], cfg: ScorerTrainConfig | None = None
) -> ScorerTrainResult:
    """Cross-entropy on the judge's Okay/Poor labels mapped to Yes/No."""
    cfg = cfg or ScorerTrainConfig()
    if not corpus:
        raise ValueError("training corpus is empty")
    yes_idx = student.yes_index
    no_idx = student.vocab.index(NO_TOKEN)

    feats = np.stack(
        [
            step_input(
                content_features(ex.query, ex.member, ex.keyword, student.feature_mode, cfg.block_size),
                -1,
                student.vocab_size,
            )
            for ex in corpus
        ]
    )
    targets = np.array([yes_idx if ex.is_positive else no_idx for ex in corpus])

    rng = np.random.default_rng(cfg.seed)
    weights = student.weights.copy()
    n = len(corpus)
    epoch_losses: list[float] = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            x = feats[batch]
            logits = x @ weights.T
            shifted = logits - logits.max(axis=1, keepdims=True)
            exp = np.exp(shifted)
            probs = exp / exp.sum(axis=1, keepdims=True)
            idx = targets[batch]
            total += float(-np.sum(shifted[np.arange(len(batch)), idx] - np.log(exp.sum(axis=1))))
            if cfg.learning_rate > 0.0:
                grad_logits = probs
                grad_logits[np.arange(len(batch)), idx] -= 1.0
                grad_logits /= len(batch)
                weights -= cfg.learning_rate * (grad_logits.T @ x)
        epoch_losses.append(total / n)

    params = ScorerParams(
        weights=weights,
        vocab=student.vocab,
        feature_dim=student.feature_dim,
        feature_mode=student.feature_mode,
        seed=student.seed,
    )
    return ScorerTrainResult(params=params, epoch_losses=tuple(epoch_losses))


def training_accuracy(params: ScorerParams, corpus: Sequence[LabeledExample]) -> float:
    scorer = ParametricScorer(params)
    hits = 0
    for ex in corpus:
        p = scorer.distribution(ex.query, ex.member, ex.keyword).p_yes
        hits += int((p > GATE_THRESHOLD) == ex.is_positive)
    return hits / len(corpus)


@dataclass(frozen=True)
class Trajectory:
    """Student-sampled answer rollout with both sides' per-step distributions."""

    content: np.ndarray
    tokens: tuple[str, ...]
    student_dists: tuple[TokenDistribution, ...]
    teacher_dists: tuple[TokenDistribution, ...]

    def __post_init__(self) -> None:
        if not self.tokens:
            raise ValueError("trajectory must contain at least one step")
        if not len(self.tokens) == len(self.student_dists) == len(self.teacher_dists):
            raise ValueError("trajectory fields disagree on step count")


def sample_trajectory(
    student: ScorerParams,
    teacher: ScorerParams,
    content: np.ndarray,
    length: int,
    rng: np.random.Generator,
) -> Trajectory:
    """Roll the student forward ``length`` steps, recording both sides."""
    if length < 1:
        raise ValueError("trajectory length must be at least 1")
    if student.vocab != teacher.vocab:
        raise ValueError("student and teacher vocabularies differ")
    tokens: list[str] = []
    sdists: list[TokenDistribution] = []
    tdists: list[TokenDistribution] = []
    prev = -1
    for _ in range(length):
        x = step_input(content, prev, student.vocab_size)
        sd = TokenDistribution.from_logits(student.vocab, student.weights @ x)
        td = TokenDistribution.from_logits(teacher.vocab, teacher.weights @ x)
        probs = np.array([sd.probs[tok] for tok in student.vocab])
        probs = probs / probs.sum()
        choice = int(rng.choice(len(student.vocab), p=probs))
        tokens.append(student.vocab[choice])
        sdists.append(sd)
        tdists.append(td)
        prev = choice
    return Trajectory(
        content=content, tokens=tuple(tokens), student_dists=tuple(sdists), teacher_dists=tuple(tdists)
    )


def distill_objective(
    weights: np.ndarray, teacher: ScorerParams, trajectories: Sequence[Trajectory]
) -> tuple[float, np.ndarray]:
    """Mean per-trajectory sum of forward KL terms, with its gradient.

    Teacher distributions are taken from the trajectories as fixed
    targets; the gradient is with respect to the student weight matrix
    that re-scores each recorded context.
    """
    if not trajectories:
        raise ValueError("no trajectories to evaluate")
    vocab = teacher.vocab
    total = 0.0
    grad = np.zeros_like(weights)
    for traj in trajectories:
        prev = -1
        for step, token in enumerate(traj.tokens):
            x = step_input(traj.content, prev, len(vocab))
            logits = weights @ x
            q = softmax(logits)
            p = np.array([traj.teacher_dists[step].probs[tok] for tok in vocab])
            mask = p > 0.0
            total += float(np.sum(p[mask] * np.log(p[mask] / np.maximum(q[mask], KL_FLOOR))))
            grad += np.outer(q - p, x)
            prev = vocab.index(token)
    n = len(trajectories)
    return total / n, grad / n


@dataclass(frozen=True)
class DistillConfig:
    trajectory_len: int = 1
    learning_rate: float = 3.5
    steps: int = 200
    batch_size: int = 400
    seed: int = 0

    def __post_init__(self) -> None:
        if self.trajectory_len < 1:
            raise ValueError("trajectory length must be at least 1")
        if self.learning_rate < 0:
            raise ValueError("learning rate must be non-negative")
        if self.steps < 1 or self.batch_size < 1:
            raise ValueError("steps and batch size must be positive")


@dataclass(frozen=True)
class DistillResult:
    params: ScorerParams
    step_objectives: tuple[float, ...]


def distill_on_policy(
    student: ScorerParams,
    teacher: ScorerParams,
    inputs: Sequence[np.ndarray],
    cfg: DistillConfig | None = None,
) -> DistillResult:
    """Match the student to the teacher on the student's own rollouts.

    Each step samples a minibatch of inputs, rolls the current student to
    produce contexts, and descends the forward KL between the teacher's
    and student's distributions at every step of every rollout.
    """
    cfg = cfg or DistillConfig()
    if student.vocab != teacher.vocab:
        raise ValueError("student and teacher vocabularies differ")
    if student.feature_dim != teacher.feature_dim:
        raise ValueError("student and teacher feature dimensions differ")
    if not inputs:
        raise ValueError("no distillation inputs")

    rng = np.random.default_rng(cfg.seed)
    weights = student.weights.copy()
    objectives: list[float] = []
    for _ in range(cfg.steps):
        size = min(cfg.batch_size, len(inputs))
        batch = rng.choice(len(inputs), size=size, replace=False)
        current = replace(student, weights=weights)
        trajectories = [
            sample_trajectory(current, teacher, inputs[int(i)], cfg.trajectory_len, rng)
            for i in batch
        ]
        obj, grad = distill_objective(weights, teacher, trajectories)
        objectives.append(obj)
        weights -= cfg.learning_rate * grad
    return DistillResult(
        params=replace(student, weights=weights), step_objectives=tuple(objectives)
    )


def measure_distill_kl(
    student: ScorerParams,
    teacher: ScorerParams,
    inputs: Sequence[np.ndarray],
    trajectory_len: int = 1,
    seed: int = 0,
) -> float:
    """Mean on-policy KL objective over a fixed input set."""
    rng = np.random.default_rng(seed)
    trajectories = [
        sample_trajectory(student, teacher, f, trajectory_len, rng) for f in inputs
    ]
    obj, _ = distill_objective(student.weights, teacher, trajectories)
    return obj


def save_scorer(params: ScorerParams, path: str | Path) -> None:
    write_array_artifact(
        path,
        meta={
            "kind": "scorer",
            "vocab": list(params.vocab),
            "feature_dim": params.feature_dim,
            "feature_mode": params.feature_mode,
            "seed": params.seed,
        },
        arrays={"weights": params.weights},
    )


def load_scorer(path: str | Path) -> ScorerParams:
    meta, arrays = read_array_artifact(path)
    if meta.get("kind") != "scorer":
        raise ValueError(f"{path}: not a scorer artifact")
    return ScorerParams(
        weights=arrays["weights"],
        vocab=tuple(meta["vocab"]),
        feature_dim=int(meta["feature_dim"]),
        feature_mode=str(meta["feature_mode"]),
        seed=int(meta["seed"]),
    )
