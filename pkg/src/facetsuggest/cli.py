"""Command-line interface for the full pipeline.

Artifacts flow between commands as files: an ontology JSON, taxonomy and
example JSONL, and binary parameter artifacts for the encoder, index,
and scorer. A JSON config file can override serving thresholds and cost
calibration; its path comes from --config or the FACETSUGGEST_CONFIG
environment variable.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__, curation, evaluation, judge as judge_mod, ranker, retrieval, serving
from .ontology import (
    MemberContext,
    OntologyCandidateGenerator,
    OntologyJobCounts,
    OntologyPopularity,
    OntologySizes,
    load_ontology,
    save_ontology,
)
from .persist import read_array_artifact, write_array_artifact
from .taxonomy import (
    SeedQuery,
    SeedSource,
    Taxonomy,
    export_taxonomy,
    generate_candidates,
    load_taxonomy,
    resolve_aliases,
)

CONFIG_ENV = "FACETSUGGEST_CONFIG"


def _load_config(path: str | None) -> dict:
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _cost_model(config: dict) -> serving.CostModel:
    return serving.CostModel(**config.get("cost_model", {}))


def _token_budget(config: dict) -> serving.TokenBudget:
    return serving.TokenBudget(**config.get("token_budget", {}))


@click.group()
@click.version_option(version=__version__)
def main() -> None:
    """Dynamic facet suggestion pipeline."""


@main.command("gen-corpus")
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--examples", type=int, default=2400, show_default=True)
@click.option("--queries", type=int, default=120, show_default=True)
@click.option("--positive-rate", type=float, default=0.5, show_default=True)
def gen_corpus(seed: int, out_dir: str, examples: int, queries: int, positive_rate: float) -> None:
    """Generate the synthetic ontology, taxonomy, and labeled corpus."""
    cfg = evaluation.GeneratorConfig(examples=examples, queries=queries, positive_rate=positive_rate)
    corpus = evaluation.generate_corpus(seed, OntologySizes(), cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_ontology(corpus.ontology, out / "ontology.json")
    export_taxonomy(corpus.taxonomy, out / "taxonomy.jsonl")
    judge_mod.save_examples(corpus.examples, out / "examples.jsonl")
    (out / "queries.json").write_text(json.dumps(corpus.queries, indent=2), encoding="utf-8")
    click.echo(
        f"wrote {len(corpus.taxonomy)} keywords, {len(corpus.examples)} examples, "
        f"{len(corpus.queries)} queries to {out}"
    )


@main.command()
@click.option("--seeds", "seeds_path", type=click.Path(exists=True), required=True)
@click.option("--ontology", "ontology_path", type=click.Path(exists=True), required=True)
@click.option("--taxonomy", "taxonomy_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--liquidity-threshold", type=int, default=None)
@click.option("--popularity-threshold", type=float, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def curate(seeds_path, ontology_path, taxonomy_path, out_path, liquidity_threshold, popularity_threshold, config_path) -> None:
    """Run seed queries through candidate generation and the filter chain."""
    config = _load_config(config_path)
    kwargs = dict(config.get("curation", {}))
    if liquidity_threshold is not None:
        kwargs["liquidity_threshold"] = liquidity_threshold
    if popularity_threshold is not None:
        kwargs["popularity_threshold"] = popularity_threshold
    cfg = curation.CurationConfig(**kwargs)

    ontology = load_ontology(ontology_path)
    taxonomy = load_taxonomy(taxonomy_path)
    generator = OntologyCandidateGenerator(ontology, taxonomy)
    oracle = judge_mod.OracleJudge(ontology)
    jobs = OntologyJobCounts(ontology, taxonomy)
    traffic = OntologyPopularity(ontology, taxonomy)

    records: list[curation.CurationRecord] = []
    with Path(seeds_path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            seed = SeedQuery(text=obj["text"], source=SeedSource(obj["source"]))
            candidates = generate_candidates(seed, generator)
            records.extend(curation.curate(candidates, seed, oracle, jobs, traffic, cfg))
    curation.save_records(records, out_path)
    by_status: dict[str, int] = {}
    for rec in records:
        by_status[rec.final_status.value] = by_status.get(rec.final_status.value, 0) + 1
    click.echo(f"curated {len(records)} candidates: {json.dumps(by_status, sort_keys=True)}")


@main.command()
@click.option("--records", "records_path", type=click.Path(exists=True), required=True)
@click.option("--approve", "approve_id", type=str, default=None)
@click.option("--reject", "reject_id", type=str, default=None)
@click.option("--note", type=str, default=None)
def review(records_path, approve_id, reject_id, note) -> None:
    """Resolve one PendingReview record by keyword id."""
    if (approve_id is None) == (reject_id is None):
        raise click.UsageError("pass exactly one of --approve or --reject")
    records = curation.load_records(records_path)
    keyword_id = approve_id or reject_id
    updated = curation.apply_review(records, keyword_id, approve=approve_id is not None, note=note)
    curation.save_records(updated, records_path)
    verb = "approved" if approve_id else "rejected"
    click.echo(f"{verb} {keyword_id}")


@main.group()
def taxonomy() -> None:
    """Taxonomy file operations."""


@taxonomy.command("export")
@click.option("--records", "records_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def taxonomy_export(records_path, out_path) -> None:
    """Merge accepted keywords from curation records into a taxonomy file."""
    records = curation.load_records(records_path)
    pool = [r.keyword for r in records if r.final_status is curation.CurationStatus.ACCEPTED]
    if not pool:
        raise click.ClickException("no accepted records to export")
    merged = resolve_aliases(pool)
    export_taxonomy(merged, out_path)
    click.echo(f"exported {len(merged)} keywords to {out_path}")


@taxonomy.command("load")
@click.option("--in", "in_path", type=click.Path(exists=True), required=True)
def taxonomy_load(in_path) -> None:
    """Validate a taxonomy file and print a summary."""
    tax = load_taxonomy(in_path)
    by_type: dict[str, int] = {}
    for kw in tax.keywords.values():
        by_type[kw.facet_type.value] = by_type.get(kw.facet_type.value, 0) + 1
    click.echo(f"{len(tax)} keywords, {len(tax.alias_map)} alias entries")
    click.echo(json.dumps(by_type, sort_keys=True))


@main.command()
@click.option("--pairs", "pairs_path", type=click.Path(exists=True), required=True)
@click.option("--ontology", "ontology_path", type=click.Path(exists=True), required=True)
@click.option("--taxonomy", "taxonomy_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def label(pairs_path, ontology_path, taxonomy_path, out_path) -> None:
    """Judge (query, member?, keyword_id) triples from a JSONL file."""
    ontology = load_ontology(ontology_path)
    tax = load_taxonomy(taxonomy_path)
    oracle = judge_mod.OracleJudge(ontology)
    pairs = []
    with Path(pairs_path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            member = MemberContext.from_json_dict(obj["member"]) if obj.get("member") else None
            pairs.append((obj["query"], member, tax.get(obj["keyword_id"])))
    examples = judge_mod.label_dataset(pairs, oracle)
    judge_mod.save_examples(examples, out_path)
    skipped = len(pairs) - len(examples)
    click.echo(f"labeled {len(examples)} of {len(pairs)} pairs ({skipped} skipped)")


@main.command()
@click.option("--a", "path_a", type=click.Path(exists=True), required=True)
@click.option("--b", "path_b", type=click.Path(exists=True), required=True)
def kappa(path_a, path_b) -> None:
    """Agreement between two labeled example files, by verdict label."""
    labels_a = [ex.verdict.label.value for ex in judge_mod.load_examples(path_a)]
    labels_b = [ex.verdict.label.value for ex in judge_mod.load_examples(path_b)]
    click.echo(f"kappa: {judge_mod.cohens_kappa(labels_a, labels_b):.4f}")


@main.command("train-encoder")
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--objective", type=click.Choice(["infonce", "bce"]), default="infonce", show_default=True)
@click.option("--epochs", type=int, default=5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def train_encoder_cmd(corpus_path, out_path, objective, epochs, seed) -> None:
    """Fit the shared-weight encoder on labeled positives."""
    examples = judge_mod.load_examples(corpus_path)
    cfg = retrieval.EncoderTrainConfig(objective=objective, epochs=epochs, seed=seed)
    result = retrieval.train_encoder(examples, cfg)
    retrieval.save_encoder(result.params, out_path)
    losses = ", ".join(f"{x:.4f}" for x in result.epoch_losses)
    click.echo(f"saved encoder to {out_path}; epoch losses: {losses}")


@main.command("build-index")
@click.option("--taxonomy", "taxonomy_path", type=click.Path(exists=True), required=True)
@click.option("--encoder", "encoder_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def build_index_cmd(taxonomy_path, encoder_path, out_path) -> None:
    """Embed every validated keyword into an index artifact."""
    tax = load_taxonomy(taxonomy_path)
    params = retrieval.load_encoder(encoder_path)
    index = retrieval.build_index(tax, params)
    write_array_artifact(
        out_path,
        meta={"kind": "facet-index", "ids": [k.id for k in index.keywords]},
        arrays={"matrix": index.matrix},
    )
    click.echo(f"indexed {len(index)} keywords to {out_path}")


def _load_index(index_path: str, tax: Taxonomy) -> retrieval.FacetIndex:
    meta, arrays = read_array_artifact(index_path)
    if meta.get("kind") != "facet-index":
        raise click.ClickException(f"{index_path}: not an index artifact")
    keywords = tuple(tax.get(i) for i in meta["ids"])
    return retrieval.FacetIndex(keywords=keywords, matrix=arrays["matrix"])


@main.command()
@click.option("--query", type=str, required=True)
@click.option("--taxonomy", "taxonomy_path", type=click.Path(exists=True), required=True)
@click.option("--encoder", "encoder_path", type=click.Path(exists=True), required=True)
@click.option("--index", "index_path", type=click.Path(exists=True), default=None)
def retrieve(query, taxonomy_path, encoder_path, index_path) -> None:
    """Quota-constrained nearest keywords for a query."""
    tax = load_taxonomy(taxonomy_path)
    params = retrieval.load_encoder(encoder_path)
    index = _load_index(index_path, tax) if index_path else retrieval.build_index(tax, params)
    emb = retrieval.encode_query(query, None, params)
    for cand in retrieval.retrieve_with_quotas(emb, index):
        kw = cand.keyword
        click.echo(f"{cand.retrieval_similarity:+.4f}  {kw.facet_type.value:16s}  {kw.canonical_name}")


@main.command("train-ranker")
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--mode", type=click.Choice(["supervised", "distill", "compact"]), default="supervised", show_default=True)
@click.option("--teacher", "teacher_path", type=click.Path(exists=True), default=None,
              help="Teacher scorer artifact; required for distill mode.")
@click.option("--epochs", type=int, default=20, show_default=True)
@click.option("--steps", type=int, default=200, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def train_ranker_cmd(corpus_path, out_path, mode, teacher_path, epochs, steps, seed) -> None:
    """Train the Yes/No scorer: supervised, distilled, or compact-feature."""
    examples = judge_mod.load_examples(corpus_path)
    if mode == "distill":
        if teacher_path is None:
            raise click.UsageError("distill mode needs --teacher")
        teacher = ranker.load_scorer(teacher_path)
        student = ranker.init_scorer(feature_mode=teacher.feature_mode, seed=seed)
        inputs = [
            ranker.content_features(ex.query, ex.member, ex.keyword, teacher.feature_mode)
            for ex in examples
        ]
        result = ranker.distill_on_policy(
            student, teacher, inputs, ranker.DistillConfig(steps=steps, seed=seed)
        )
        ranker.save_scorer(result.params, out_path)
        click.echo(
            f"distilled scorer to {out_path}; objective {result.step_objectives[0]:.4f} "
            f"-> {result.step_objectives[-1]:.4f}"
        )
        return
    feature_mode = "compact" if mode == "compact" else "full"
    student = ranker.init_scorer(feature_mode=feature_mode, seed=seed)
    cfg = ranker.ScorerTrainConfig(epochs=epochs, seed=seed)
    result = ranker.train_supervised(student, examples, cfg)
    acc = ranker.training_accuracy(result.params, examples)
    ranker.save_scorer(result.params, out_path)
    click.echo(f"saved {feature_mode} scorer to {out_path}; training accuracy {acc:.3f}")


@main.command()
@click.option("--query", type=str, required=True)
@click.option("--taxonomy", "taxonomy_path", type=click.Path(exists=True), required=True)
@click.option("--encoder", "encoder_path", type=click.Path(exists=True), required=True)
@click.option("--scorer", "scorer_path", type=click.Path(exists=True), required=True)
def score(query, taxonomy_path, encoder_path, scorer_path) -> None:
    """Retrieve and score one query, printing the gated slate."""
    service = _build_service(taxonomy_path, encoder_path, scorer_path, None, {})
    response = service.suggest(query)
    if not response.suggestions:
        click.echo("no suggestions")
        return
    for s in response.suggestions:
        click.echo(f"{s.p_yes:.4f}  {s.facet_type.value:16s}  {s.value}")


def _build_service(taxonomy_path, encoder_path, scorer_path, ontology_path, config) -> serving.SuggestionService:
    tax = load_taxonomy(taxonomy_path)
    encoder = retrieval.load_encoder(encoder_path)
    scorer_params = ranker.load_scorer(scorer_path)
    index = retrieval.build_index(tax, encoder)
    job_counts = None
    if ontology_path:
        ontology = load_ontology(ontology_path)
        job_counts = OntologyJobCounts(ontology, tax)
    return serving.SuggestionService(
        index=index,
        encoder=encoder,
        scorer=ranker.ParametricScorer(scorer_params),
        cost_model=_cost_model(config),
        token_budget=_token_budget(config),
        job_counts=job_counts,
        liquidity_threshold=config.get("curation", {}).get("liquidity_threshold", 50),
    )


@main.command()
@click.option("--taxonomy", "taxonomy_path", type=click.Path(exists=True), required=True)
@click.option("--encoder", "encoder_path", type=click.Path(exists=True), required=True)
@click.option("--scorer", "scorer_path", type=click.Path(exists=True), required=True)
@click.option("--ontology", "ontology_path", type=click.Path(exists=True), default=None)
@click.option("--ui-dir", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--host", type=str, default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def serve(taxonomy_path, encoder_path, scorer_path, ontology_path, ui_dir, host, port, config_path) -> None:
    """Serve the wire API (and optionally a static UI bundle)."""
    import uvicorn

    from .api import create_app

    config = _load_config(config_path)
    service = _build_service(taxonomy_path, encoder_path, scorer_path, ontology_path, config)
    app = create_app(service, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port)


@main.command()
@click.option("--taxonomy", "taxonomy_path", type=click.Path(exists=True), required=True)
@click.option("--encoder", "encoder_path", type=click.Path(exists=True), required=True)
@click.option("--scorer", "scorer_path", type=click.Path(exists=True), required=True)
@click.option("--queries", "queries_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.option("--repeat", type=int, default=1, show_default=True, help="Cycle the workload to this multiple.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def bench(taxonomy_path, encoder_path, scorer_path, queries_path, out_path, repeat, config_path) -> None:
    """Cost-model and wall-clock benchmark over a query workload."""
    config = _load_config(config_path)
    service = _build_service(taxonomy_path, encoder_path, scorer_path, None, config)
    workload = json.loads(Path(queries_path).read_text(encoding="utf-8")) * repeat
    report = serving.run_bench(service, workload, report_path=out_path)
    for formulation in serving.Formulation:
        stats = report.cost_stats[formulation]
        click.echo(
            f"{formulation.value:9s}  p50 {stats.p50:8.1f}  p95 {stats.p95:8.1f}  "
            f"mean {stats.mean:8.1f}  (cost units, n={stats.samples})"
        )
    ratio = report.cost_stats[serving.Formulation.LISTWISE].p95 / report.cost_stats[serving.Formulation.POINTWISE].p95
    click.echo(f"listwise/pointwise p95 ratio: {ratio:.2f}")


@main.command("eval")
@click.option("--corpus-dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--encoder", "encoder_path", type=click.Path(exists=True), default=None)
@click.option("--scorer", "scorer_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
def eval_cmd(corpus_dir, encoder_path, scorer_path, seed, out_path) -> None:
    """Offline evaluation on the held-out query split.

    Without explicit artifacts, trains the stack from the corpus first.
    """
    corpus_dir = Path(corpus_dir)
    ontology = load_ontology(corpus_dir / "ontology.json")
    tax = load_taxonomy(corpus_dir / "taxonomy.jsonl")
    examples = judge_mod.load_examples(corpus_dir / "examples.jsonl")
    queries = json.loads((corpus_dir / "queries.json").read_text(encoding="utf-8"))
    corpus = evaluation.GeneratedCorpus(
        ontology=ontology,
        taxonomy=tax,
        examples=examples,
        queries=queries,
        planted_positive_rate=float("nan"),
        seed=seed,
    )
    if encoder_path and scorer_path:
        encoder = retrieval.load_encoder(encoder_path)
        scorer_params = ranker.load_scorer(scorer_path)
        index = retrieval.build_index(tax, encoder)
        service = serving.SuggestionService(
            index=index,
            encoder=encoder,
            scorer=ranker.ParametricScorer(scorer_params),
            job_counts=OntologyJobCounts(ontology, tax),
        )
        stack = evaluation.TrainedStack(
            encoder=encoder, scorer_params=scorer_params, index=index, service=service
        )
    else:
        stack = evaluation.train_stack(corpus, job_counts=OntologyJobCounts(ontology, tax))
    report = evaluation.run_offline_eval(stack, corpus)
    payload = json.dumps(report.to_json_dict(), indent=2, sort_keys=True)
    click.echo(payload)
    if out_path:
        Path(out_path).write_text(payload + "\n", encoding="utf-8")


if __name__ == "__main__":
    sys.exit(main())
