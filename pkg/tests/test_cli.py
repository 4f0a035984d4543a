"""End-to-end artifact flow through the command-line interface.

One session fixture drives the whole chain on a small corpus in a tmp
directory; the tests then assert on each stage's exit code, printed
summary, and on-disk artifact.
"""

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from facetsuggest import curation
from facetsuggest.cli import main
from facetsuggest.taxonomy import load_taxonomy


def invoke(*args, env=None):
    return CliRunner().invoke(main, [str(a) for a in args], env=env)


@pytest.fixture(scope="module")
def flow(tmp_path_factory):
    """Run gen-corpus through eval once; hand each test the pieces."""
    root = tmp_path_factory.mktemp("cli-flow")
    corpus_dir = root / "corpus"
    out = {}

    out["gen"] = invoke(
        "gen-corpus", "--seed", 7, "--out", corpus_dir,
        "--examples", 240, "--queries", 24,
    )
    taxonomy_path = corpus_dir / "taxonomy.jsonl"
    ontology_path = corpus_dir / "ontology.json"
    examples_path = corpus_dir / "examples.jsonl"

    seeds_path = root / "seeds.jsonl"
    seeds_path.write_text(
        json.dumps({"text": "registered nurse", "source": "ParentOccupation"}) + "\n",
        encoding="utf-8",
    )
    records_path = root / "records.jsonl"
    out["curate"] = invoke(
        "curate", "--seeds", seeds_path, "--ontology", ontology_path,
        "--taxonomy", taxonomy_path, "--out", records_path,
    )
    records = curation.load_records(records_path)
    pending = [r for r in records if r.final_status is curation.CurationStatus.PENDING_REVIEW]
    out["pending_ids"] = [r.keyword.id for r in pending]
    out["approve"] = invoke("review", "--records", records_path, "--approve", pending[0].keyword.id)
    out["reject"] = invoke(
        "review", "--records", records_path, "--reject", pending[1].keyword.id, "--note", "off topic"
    )
    curated_tax = root / "curated.jsonl"
    out["export"] = invoke("taxonomy", "export", "--records", records_path, "--out", curated_tax)
    out["load"] = invoke("taxonomy", "load", "--in", curated_tax)
    out["curated_tax"] = curated_tax

    tax = load_taxonomy(taxonomy_path)
    by_name = {k.canonical_name: k for k in tax.keywords.values()}
    pairs_path = root / "pairs.jsonl"
    with pairs_path.open("w", encoding="utf-8") as fh:
        for name in ("Telemetry", "Litigation", "Remote"):
            fh.write(json.dumps(
                {"query": "registered nurse", "member": None, "keyword_id": by_name[name].id}
            ) + "\n")
    labeled_path = root / "labeled.jsonl"
    out["label"] = invoke(
        "label", "--pairs", pairs_path, "--ontology", ontology_path,
        "--taxonomy", taxonomy_path, "--out", labeled_path,
    )
    out["kappa"] = invoke("kappa", "--a", labeled_path, "--b", labeled_path)

    encoder_path = root / "encoder.bin"
    out["encoder"] = invoke(
        "train-encoder", "--corpus", examples_path, "--out", encoder_path, "--epochs", 2
    )
    index_path = root / "index.bin"
    out["index"] = invoke(
        "build-index", "--taxonomy", taxonomy_path, "--encoder", encoder_path, "--out", index_path
    )
    out["retrieve"] = invoke(
        "retrieve", "--query", "registered nurse", "--taxonomy", taxonomy_path,
        "--encoder", encoder_path, "--index", index_path,
    )

    scorer_path = root / "scorer.bin"
    out["ranker"] = invoke(
        "train-ranker", "--corpus", examples_path, "--out", scorer_path, "--epochs", 3
    )
    student_path = root / "student.bin"
    out["distill"] = invoke(
        "train-ranker", "--corpus", examples_path, "--out", student_path,
        "--mode", "distill", "--teacher", scorer_path, "--steps", 20,
    )
    compact_path = root / "compact.bin"
    out["compact"] = invoke(
        "train-ranker", "--corpus", examples_path, "--out", compact_path,
        "--mode", "compact", "--epochs", 3,
    )
    out["score"] = invoke(
        "score", "--query", "registered nurse", "--taxonomy", taxonomy_path,
        "--encoder", encoder_path, "--scorer", scorer_path,
    )

    bench_report = root / "bench.jsonl"
    out["bench"] = invoke(
        "bench", "--taxonomy", taxonomy_path, "--encoder", encoder_path,
        "--scorer", scorer_path, "--queries", corpus_dir / "queries.json",
        "--out", bench_report, "--repeat", 5,
    )
    out["bench_report"] = bench_report

    eval_out = root / "report.json"
    out["eval"] = invoke(
        "eval", "--corpus-dir", corpus_dir, "--encoder", encoder_path,
        "--scorer", scorer_path, "--out", eval_out,
    )
    out["eval_report"] = eval_out

    out["root"] = root
    out["paths"] = {
        "corpus_dir": corpus_dir, "taxonomy": taxonomy_path, "examples": examples_path,
        "encoder": encoder_path, "scorer": scorer_path, "records": records_path,
    }
    return out


def test_gen_corpus_writes_all_artifacts(flow):
    assert flow["gen"].exit_code == 0, flow["gen"].output
    d = flow["paths"]["corpus_dir"]
    for name in ("ontology.json", "taxonomy.jsonl", "examples.jsonl", "queries.json"):
        assert (d / name).exists()
    assert "240 examples" in flow["gen"].output
    assert "24 queries" in flow["gen"].output


def test_curate_summarizes_statuses(flow):
    assert flow["curate"].exit_code == 0, flow["curate"].output
    assert "curated" in flow["curate"].output
    assert "PendingReview" in flow["curate"].output
    assert len(flow["pending_ids"]) >= 2


def test_review_resolves_pending_records(flow):
    assert flow["approve"].exit_code == 0, flow["approve"].output
    assert "approved" in flow["approve"].output
    assert flow["reject"].exit_code == 0, flow["reject"].output
    assert "rejected" in flow["reject"].output
    records = curation.load_records(flow["paths"]["records"])
    by_id = {r.keyword.id: r for r in records}
    assert by_id[flow["pending_ids"][0]].final_status is curation.CurationStatus.ACCEPTED
    rejected = by_id[flow["pending_ids"][1]]
    assert rejected.final_status is curation.CurationStatus.REJECTED_POLICY
    assert rejected.review_note == "off topic"


def test_taxonomy_export_round_trips_accepted(flow):
    assert flow["export"].exit_code == 0, flow["export"].output
    assert "exported 1 keywords" in flow["export"].output
    tax = load_taxonomy(flow["curated_tax"])
    assert len(tax) == 1
    assert flow["load"].exit_code == 0
    assert "1 keywords" in flow["load"].output


def test_label_and_kappa(flow):
    assert flow["label"].exit_code == 0, flow["label"].output
    assert "labeled 3 of 3 pairs" in flow["label"].output
    assert flow["kappa"].exit_code == 0
    assert "kappa: 1.0000" in flow["kappa"].output


def test_train_encoder_reports_losses(flow):
    assert flow["encoder"].exit_code == 0, flow["encoder"].output
    assert "epoch losses:" in flow["encoder"].output
    assert flow["paths"]["encoder"].exists()


def test_build_index_counts_keywords(flow):
    assert flow["index"].exit_code == 0, flow["index"].output
    assert "indexed" in flow["index"].output


def test_retrieve_prints_quota_slate(flow):
    assert flow["retrieve"].exit_code == 0, flow["retrieve"].output
    lines = [ln for ln in flow["retrieve"].output.splitlines() if ln.strip()]
    assert len(lines) == 27
    assert sum(1 for ln in lines if "WorkplaceType" in ln) == 1


def test_train_ranker_all_modes(flow):
    assert flow["ranker"].exit_code == 0, flow["ranker"].output
    assert "training accuracy" in flow["ranker"].output
    assert flow["distill"].exit_code == 0, flow["distill"].output
    assert "distilled scorer" in flow["distill"].output
    assert flow["compact"].exit_code == 0, flow["compact"].output
    assert "compact scorer" in flow["compact"].output


def test_score_prints_slate_or_empty(flow):
    assert flow["score"].exit_code == 0, flow["score"].output
    assert flow["score"].output.strip()


def test_bench_reports_both_formulations(flow):
    assert flow["bench"].exit_code == 0, flow["bench"].output
    assert "pointwise" in flow["bench"].output
    assert "listwise" in flow["bench"].output
    assert "p95 ratio" in flow["bench"].output
    rows = [json.loads(ln) for ln in flow["bench_report"].read_text().splitlines() if ln.strip()]
    assert len(rows) == 4


def test_eval_writes_report(flow):
    assert flow["eval"].exit_code == 0, flow["eval"].output
    doc = json.loads(flow["eval_report"].read_text())
    assert 0.0 <= doc["precision_at_5"] <= 1.0
    assert doc["pairs"] > 0


def test_version_flag():
    result = invoke("--version")
    assert result.exit_code == 0
    assert "version" in result.output


def test_review_requires_exactly_one_action(flow):
    result = invoke(
        "review", "--records", flow["paths"]["records"], "--approve", "a", "--reject", "b"
    )
    assert result.exit_code != 0
    assert "exactly one" in result.output


def test_distill_requires_teacher(flow):
    result = invoke(
        "train-ranker", "--corpus", flow["paths"]["examples"],
        "--out", flow["root"] / "nope.bin", "--mode", "distill",
    )
    assert result.exit_code != 0
    assert "--teacher" in result.output


def test_export_requires_accepted_records(flow, tmp_path):
    records = curation.load_records(flow["paths"]["records"])
    rejected_only = [r for r in records if r.final_status is curation.CurationStatus.REJECTED_POLICY]
    path = tmp_path / "rejected.jsonl"
    curation.save_records(rejected_only, path)
    result = invoke("taxonomy", "export", "--records", path, "--out", tmp_path / "tax.jsonl")
    assert result.exit_code != 0
    assert "no accepted records" in result.output


def test_retrieve_rejects_wrong_artifact_kind(flow):
    result = invoke(
        "retrieve", "--query", "registered nurse",
        "--taxonomy", flow["paths"]["taxonomy"], "--encoder", flow["paths"]["encoder"],
        "--index", flow["paths"]["scorer"],
    )
    assert result.exit_code != 0
    assert "not an index artifact" in result.output


def test_bench_honors_config_file(flow, tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"cost_model": {"decode_cost_per_token": 7.0}}))
    result = invoke(
        "bench", "--taxonomy", flow["paths"]["taxonomy"], "--encoder", flow["paths"]["encoder"],
        "--scorer", flow["paths"]["scorer"], "--queries", flow["paths"]["corpus_dir"] / "queries.json",
        "--repeat", 5, "--config", config,
    )
    assert result.exit_code == 0, result.output
    assert "p95 ratio" in result.output
