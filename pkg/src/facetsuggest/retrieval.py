"""Embedding retrieval: shared-weight text encoder and per-type quotas.

Queries and facet keywords are embedded by one linear projection over
hashed text features, L2-normalized so cosine similarity is a plain dot
product. Training contrasts each query against every other facet in its
batch; a binary-label objective is kept as a baseline. Retrieval fills a
fixed per-type quota with the nearest keywords of each facet type and
never backfills across types.
"""

from __future__ import annotations

import logging
from collections import deque
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .judge import LabeledExample
from .ontology import MemberContext, member_text
from .persist import read_array_artifact, write_array_artifact
from .taxonomy import FacetKeyword, FacetType, KeywordStatus, Taxonomy
from .textproc import hashed_text_features

logger = logging.getLogger(__name__)

DEFAULT_FEATURE_DIM = 4096
DEFAULT_EMBED_DIM = 64

DEFAULT_QUOTAS: dict[FacetType, int] = {
    FacetType.DOMAIN_KNOWLEDGE: 16,
    FacetType.FUNCTION: 5,
    FacetType.INDUSTRY: 5,
    FacetType.WORKPLACE_TYPE: 1,
}

UNIT_NORM_TOL = 1e-9


def featurize(text: str, dim: int = DEFAULT_FEATURE_DIM) -> np.ndarray:
    """Hashed token and character-trigram counts, L2-normalized."""
    return hashed_text_features(text, dim)


@dataclass(frozen=True)
class EncoderParams:
    """Shared projection used for both sides of the encoder."""

    projection: np.ndarray  # (embed_dim, feature_dim)
    seed: int

    def __post_init__(self) -> None:
        proj = np.asarray(self.projection, dtype=np.float64)
        if proj.ndim != 2:
            raise ValueError(f"projection must be 2-D, got shape {proj.shape}")
        if not np.all(np.isfinite(proj)):
            raise ValueError("projection contains non-finite values")
        proj = proj.copy()
        proj.setflags(write=False)
        object.__setattr__(self, "projection", proj)

    @property
    def embed_dim(self) -> int:
        return int(self.projection.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.projection.shape[1])


def init_encoder(
    feature_dim: int = DEFAULT_FEATURE_DIM, embed_dim: int = DEFAULT_EMBED_DIM, seed: int = 0
) -> EncoderParams:
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(feature_dim)
    return EncoderParams(projection=rng.normal(0.0, scale, (embed_dim, feature_dim)), seed=seed)


def _project_unit(params: EncoderParams, features: np.ndarray, what: str) -> np.ndarray:
    if float(np.linalg.norm(features)) == 0.0:
        raise ValueError(f"cannot encode {what}: feature vector is zero")
    raw = params.projection @ features
    norm = float(np.linalg.norm(raw))
    if norm == 0.0:
        raise ValueError(f"cannot encode {what}: projection collapsed to zero")
    return raw / norm


def query_side_text(query: str, member: MemberContext | None) -> str:
    """Query plus serialized member profile, as one encoder input."""
    if member is None:
        return query
    return f"{query} {member_text(member)}"


def encode_query(query: str, member: MemberContext | None, params: EncoderParams) -> np.ndarray:
    return _project_unit(params, featurize(query_side_text(query, member), params.feature_dim), "query")


def facet_side_text(keyword: FacetKeyword) -> str:
    return f"{keyword.canonical_name} {keyword.definition}".strip()


def encode_facet(keyword: FacetKeyword, params: EncoderParams) -> np.ndarray:
    return _project_unit(params, featurize(facet_side_text(keyword), params.feature_dim), f"keyword {keyword.id}")


def _as_matrix(embs: Sequence[np.ndarray] | np.ndarray, name: str) -> np.ndarray:
    mat = np.asarray(embs, dtype=np.float64)
    if mat.ndim == 1:
        mat = mat[None, :]
    if mat.ndim != 2 or mat.shape[0] == 0:
        raise ValueError(f"{name} must be a non-empty batch of vectors")
    if not np.all(np.isfinite(mat)):
        raise ValueError(f"{name} contains non-finite values")
    return mat


def infonce_loss(
    query_embs: Sequence[np.ndarray] | np.ndarray,
    facet_embs: Sequence[np.ndarray] | np.ndarray,
    tau: float = 0.05,
) -> tuple[float, tuple[np.ndarray, np.ndarray]]:
    """In-batch contrastive loss and analytic gradients.

    Row i of the scaled similarity matrix is a softmax contest between
    facet i and every other facet in the batch; the loss is the mean
    negative log-probability of the matched pair. With a single pair the
    contest is trivial and the loss is exactly zero. Gradients are with
    respect to both embedding batches as given.
    """
    if tau <= 0.0:
        raise ValueError(f"temperature must be positive, got {tau}")
    q = _as_matrix(query_embs, "query embeddings")
    d = _as_matrix(facet_embs, "facet embeddings")
    if q.shape != d.shape:
        raise ValueError(f"embedding batches differ in shape: {q.shape} vs {d.shape}")
    n = q.shape[0]

    scores = (q @ d.T) / tau
    shifted = scores - scores.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    denom = exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(denom)
    loss = float(-np.mean(np.diag(log_probs)))

    soft = exp / denom
    coeff = (soft - np.eye(n)) / n
    grad_q = (coeff @ d) / tau
    grad_d = (coeff.T @ q) / tau
    return loss, (grad_q, grad_d)


def bce_loss(
    scores: Sequence[float] | np.ndarray, labels: Sequence[float] | np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy over logits, numerically stable.

    Uses max(s, 0) - s*y + log(1 + exp(-|s|)) so large logits neither
    overflow nor lose the tail; the gradient is (sigmoid(s) - y) / n.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("scores must be a non-empty 1-D array")
    if s.shape != y.shape:
        raise ValueError(f"scores and labels differ in shape: {s.shape} vs {y.shape}")
    if np.any((y != 0.0) & (y != 1.0)):
        raise ValueError("labels must be 0 or 1")
    per_item = np.maximum(s, 0.0) - s * y + np.log1p(np.exp(-np.abs(s)))
    sig = np.where(s >= 0, 1.0 / (1.0 + np.exp(-s)), np.exp(s) / (1.0 + np.exp(s)))
    return float(per_item.mean()), (sig - y) / s.size


@dataclass(frozen=True)
class EncoderTrainConfig:
    tau: float = 0.05
    learning_rate: float = 0.05
    epochs: int = 10
    batch_size: int = 256
    seed: int = 0
    feature_dim: int = DEFAULT_FEATURE_DIM
    embed_dim: int = DEFAULT_EMBED_DIM
    objective: str = "infonce"  # or "bce"

    def __post_init__(self) -> None:
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning rate must be non-negative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch size must be positive")
        if self.objective not in ("infonce", "bce"):
            raise ValueError(f"unknown objective {self.objective!r}")


@dataclass(frozen=True)
class EncoderTrainResult:
    params: EncoderParams
    epoch_losses: tuple[float, ...]


def _distinct_facet_batches(
    facet_ids: list[str], order: np.ndarray, batch_size: int
) -> list[list[int]]:
    """Pack indices into batches with pairwise-distinct facet ids.

    Indices whose facet already occurs in the open batch are deferred to
    later batches, preserving relative order, so in-batch negatives are
    never accidental positives.
    """
    pending = deque(int(i) for i in order)
    batches: list[list[int]] = []
    while pending:
        batch: list[int] = []
        seen: set[str] = set()
        deferred: list[int] = []
        while pending and len(batch) < batch_size:
            i = pending.popleft()
            fid = facet_ids[i]
            if fid in seen:
                deferred.append(i)
            else:
                batch.append(i)
                seen.add(fid)
        pending.extendleft(reversed(deferred))
        batches.append(batch)
    return batches


def _norm_rows(mat: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError(f"{what} produced a zero vector; training input is empty text")
    return mat / norms, norms


def _backprop_unit_rows(grad_unit: np.ndarray, unit: np.ndarray, norms: np.ndarray) -> np.ndarray:
    # d/du of u/|u| applied to upstream row gradients.
    inner = np.sum(grad_unit * unit, axis=1, keepdims=True)
    return (grad_unit - inner * unit) / norms


def train_encoder(corpus: Sequence[LabeledExample], cfg: EncoderTrainConfig | None = None) -> EncoderTrainResult:
    """Fit the shared projection on positive (query, facet) pairs.

    Only Okay-labeled examples are used. The run is fully determined by
    the config seed: initialization, shuffling, and batch packing all
    draw from the same generator.
    """
    cfg = cfg or EncoderTrainConfig()
    positives = [ex for ex in corpus if ex.is_positive]
    if not positives:
        raise ValueError("corpus contains no positive examples to train on")

    texts_q = [query_side_text(ex.query, ex.member) for ex in positives]
    texts_d = [facet_side_text(ex.keyword) for ex in positives]
    facet_ids = [ex.keyword.id for ex in positives]

    feat_cache: dict[str, np.ndarray] = {}

    def feats(text: str) -> np.ndarray:
        got = feat_cache.get(text)
        if got is None:
            got = featurize(text, cfg.feature_dim)
            feat_cache[text] = got
        return got

    fq = np.stack([feats(t) for t in texts_q])
    fd = np.stack([feats(t) for t in texts_d])
    if np.any(np.linalg.norm(fq, axis=1) == 0.0) or np.any(np.linalg.norm(fd, axis=1) == 0.0):
        raise ValueError("corpus contains examples with empty text")

    rng = np.random.default_rng(cfg.seed)
    weights = init_encoder(cfg.feature_dim, cfg.embed_dim, cfg.seed).projection.copy()

    epoch_losses: list[float] = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(positives))
        batches = _distinct_facet_batches(facet_ids, order, cfg.batch_size)
        total, count = 0.0, 0
        for batch in batches:
            bq, bd = fq[batch], fd[batch]
            uq = bq @ weights.T
            ud = bd @ weights.T
            eq, nq = _norm_rows(uq, "query side")
            ed, nd = _norm_rows(ud, "facet side")
            if cfg.objective == "infonce":
                loss, (geq, ged) = infonce_loss(eq, ed, cfg.tau)
            else:
                loss, (geq, ged) = _bce_pair_objective(eq, ed, cfg.tau)
            total += loss * len(batch)
            count += len(batch)
            if cfg.learning_rate > 0.0:
                gq = _backprop_unit_rows(geq, eq, nq)
                gd = _backprop_unit_rows(ged, ed, nd)
                grad_w = gq.T @ bq + gd.T @ bd
                weights -= cfg.learning_rate * grad_w
        epoch_losses.append(total / count)

    return EncoderTrainResult(
        params=EncoderParams(projection=weights, seed=cfg.seed),
        epoch_losses=tuple(epoch_losses),
    )


def _bce_pair_objective(
    eq: np.ndarray, ed: np.ndarray, tau: float
) -> tuple[float, tuple[np.ndarray, np.ndarray]]:
    """Binary baseline: matched pairs are 1, one shifted negative each is 0."""
    n = eq.shape[0]
    pos_logits = np.sum(eq * ed, axis=1) / tau
    if n > 1:
        shift = np.roll(np.arange(n), -1)
        neg_logits = np.sum(eq * ed[shift], axis=1) / tau
        logits = np.concatenate([pos_logits, neg_logits])
        labels = np.concatenate([np.ones(n), np.zeros(n)])
    else:
        shift = None
        logits = pos_logits
        labels = np.ones(1)
    loss, grad_logits = bce_loss(logits, labels)
    gp = grad_logits[:n, None] / tau
    geq = gp * ed
    ged = gp * eq
    if shift is not None:
        gn = grad_logits[n:, None] / tau
        geq += gn * ed[shift]
        np.add.at(ged, shift, gn * eq)
    return loss, (geq, ged)


@dataclass(frozen=True)
class QuotaConfig:
    """Per-type retrieval counts; defaults sum to 27."""

    counts: dict[FacetType, int] = field(default_factory=lambda: dict(DEFAULT_QUOTAS))

    def __post_init__(self) -> None:
        for ftype, n in self.counts.items():
            if n < 0:
                raise ValueError(f"quota for {ftype.value} must be non-negative, got {n}")

    @property
    def total(self) -> int:
        return sum(self.counts.values())


@dataclass(frozen=True)
class ScoredCandidate:
    """A retrieved keyword; ``p_yes`` is filled in by the scorer."""

    keyword: FacetKeyword
    retrieval_similarity: float
    p_yes: float | None = None


@dataclass(frozen=True)
class FacetIndex:
    keywords: tuple[FacetKeyword, ...]
    matrix: np.ndarray  # (n, embed_dim), unit rows

    def __post_init__(self) -> None:
        mat = np.asarray(self.matrix, dtype=np.float64).copy()
        if mat.ndim != 2 or mat.shape[0] != len(self.keywords):
            raise ValueError("index matrix rows must align with keywords")
        norms = np.linalg.norm(mat, axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
            raise ValueError("index rows must be unit-normalized")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    def __len__(self) -> int:
        return len(self.keywords)


def build_index(taxonomy: Taxonomy, params: EncoderParams) -> FacetIndex:
    """Embed every Validated keyword, sorted by id for determinism."""
    validated = [k for k in taxonomy.sorted_keywords() if k.status is KeywordStatus.VALIDATED]
    if not validated:
        raise ValueError("taxonomy has no validated keywords to index")
    rows = np.stack([encode_facet(kw, params) for kw in validated])
    return FacetIndex(keywords=tuple(validated), matrix=rows)


def retrieve_with_quotas(
    query_emb: np.ndarray, index: FacetIndex, quotas: QuotaConfig | None = None
) -> list[ScoredCandidate]:
    """Nearest keywords under a per-type quota, best-first overall.

    Each facet type contributes at most its quota; a type short of
    keywords contributes what it has and no other type fills the gap.
    Ties break on keyword id ascending.
    """
    quotas = quotas or QuotaConfig()
    q = np.asarray(query_emb, dtype=np.float64)
    if q.shape != (index.matrix.shape[1],):
        raise ValueError(f"query embedding has shape {q.shape}, index expects ({index.matrix.shape[1]},)")
    norm = float(np.linalg.norm(q))
    if abs(norm - 1.0) > UNIT_NORM_TOL:
        raise ValueError(f"query embedding must be unit-normalized, got norm {norm!r}")

    sims = index.matrix @ q
    picked: list[tuple[float, str, FacetKeyword]] = []
    for ftype, quota in quotas.counts.items():
        if quota == 0:
            continue
        members = [
            (float(-sims[i]), kw.id, kw)
            for i, kw in enumerate(index.keywords)
            if kw.facet_type is ftype
        ]
        members.sort(key=lambda t: (t[0], t[1]))
        picked.extend(members[:quota])
    picked.sort(key=lambda t: (t[0], t[1]))
    return [
        ScoredCandidate(keyword=kw, retrieval_similarity=-neg_sim)
        for neg_sim, _, kw in picked
    ]


def save_encoder(params: EncoderParams, path: str | Path) -> None:
    write_array_artifact(
        path,
        meta={"kind": "encoder", "seed": params.seed,
              "embed_dim": params.embed_dim, "feature_dim": params.feature_dim},
        arrays={"projection": params.projection},
    )


def load_encoder(path: str | Path) -> EncoderParams:
    meta, arrays = read_array_artifact(path)
    if meta.get("kind") != "encoder":
        raise ValueError(f"{path}: not an encoder artifact")
    return EncoderParams(projection=arrays["projection"], seed=int(meta["seed"]))
