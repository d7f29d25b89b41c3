"""Command line pipeline: ingest through assembled collection.

Each subcommand is one pipeline stage writing into its own directory
under the configured output root, finishing with a stage manifest that
records the config hash and the files produced.  A stage whose manifest
matches the current config and whose outputs all exist is skipped on
rerun, which makes ``totsim pipeline`` resumable; ``--force`` reruns
regardless.  All diagnostics go to stderr; outputs contain no
timestamps, so identical inputs and seed give byte-identical trees.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .collection import (
    CollectionSpec,
    assemble_collection,
    validate_collection,
    write_bundle,
)
from .config import PipelineConfig, load_config
from .corpus import (
    Corpus,
    Partition,
    assign_domain,
    default_domain_mapping,
    filter_by_length,
    filter_by_popularity,
    ingest_corpus,
    load_domain_mapping,
    partition_corpus,
)
from .errors import ConfigError, EvaluationError, TotsimError
from .evaluation import (
    METRICS,
    CorrelationResult,
    MetricCorrelation,
    MetricReport,
    correlate,
    evaluate_pool,
    load_qrels,
    select_best_strategy,
    write_qrels,
)
from .generation import (
    PromptVariation,
    TemplateSet,
    generate_batch,
    read_query_manifest,
    write_query_manifest,
)
from .retrieval import (
    RunResult,
    Tokenizer,
    build_index,
    default_lexical_pool,
    load_external_run,
    load_index,
    run_search,
    save_index,
    tokenizer_for_language,
    write_run_file,
)
from .sampling import (
    RNG_ALGORITHM,
    SamplingConfig,
    read_candidate_manifest,
    sample_candidates,
    stratify,
    write_candidate_manifest,
)
from .util import atomic_write_text, read_json, read_jsonl, write_json, write_jsonl

logger = logging.getLogger(__name__)

STAGE_ORDER = (
    "ingest",
    "partition",
    "sample",
    "generate",
    "index",
    "search",
    "evaluate",
    "correlate",
    "select",
    "assemble",
)


def _stage_dir(config: PipelineConfig, stage: str) -> Path:
    return config.output_dir / ("collection" if stage == "assemble" else stage)


def _stage_complete(config: PipelineConfig, stage: str) -> bool:
    stage_dir = _stage_dir(config, stage)
    manifest_path = stage_dir / "manifest.json"
    if not manifest_path.exists():
        return False
    try:
        manifest = read_json(manifest_path)
    except (OSError, ValueError):
        return False
    if manifest.get("stage") != stage or manifest.get("config_hash") != config.content_hash():
        return False
    return all((stage_dir / rel).exists() for rel in manifest.get("outputs", []))


def _finish_stage(
    config: PipelineConfig, stage: str, outputs: Sequence[Path], extra: Mapping | None = None
) -> None:
    stage_dir = _stage_dir(config, stage)
    manifest = {
        "stage": stage,
        "schema_version": 1,
        "config_hash": config.content_hash(),
        "seed": config.seed,
        "outputs": sorted(str(path.relative_to(stage_dir)) for path in outputs),
    }
    if extra:
        manifest.update(extra)
    write_json(stage_dir / "manifest.json", manifest)


def _skip(config: PipelineConfig, stage: str, force: bool) -> bool:
    if not force and _stage_complete(config, stage):
        logger.info("%s: outputs match current config; skipping (use --force to rerun)", stage)
        return True
    return False


def _require_output(path: Path, producer: str) -> Path:
    if not path.exists():
        raise ConfigError(f"missing {path}; run 'totsim {producer}' first")
    return path


def _load_corpus(config: PipelineConfig, code: str) -> Corpus:
    return ingest_corpus(config.language(code).corpus, code)


def _load_english(config: PipelineConfig) -> Corpus | None:
    if config.english_corpus is None:
        return None
    return ingest_corpus(config.english_corpus, "en")


def _partitions_for(code: str) -> tuple[Partition, ...]:
    if code == "en":
        return (Partition.FULL,)
    return (Partition.MONOLINGUAL, Partition.BILINGUAL)


def _variations_for(code: str, partition: Partition) -> tuple[PromptVariation, ...]:
    # English is its own source language, so the translated-prompt and
    # English-article axes collapse to plain V1.
    if code == "en":
        return (PromptVariation.V1,)
    return PromptVariation.for_partition(partition)


def _set_name(partition: Partition, variation: PromptVariation) -> str:
    return f"{partition.value}-{variation.value}"


def _partition_map_path(config: PipelineConfig, code: str) -> Path:
    return _stage_dir(config, "partition") / f"{code}.tsv"


def _read_partition_map(path: Path) -> dict[str, Partition]:
    mapping: dict[str, Partition] = {}
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ConfigError(f"{path.name} line {line_no}: expected 'doc_id<TAB>partition'")
            mapping[parts[0]] = Partition(parts[1])
    return mapping


def _load_queries_tsv(path: Path) -> dict[str, str]:
    queries: dict[str, str] = {}
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t", 1)
            if len(parts) != 2:
                raise ConfigError(f"{path.name} line {line_no}: expected 'query_id<TAB>text'")
            if parts[0] in queries:
                raise ConfigError(f"{path.name} line {line_no}: duplicate query id {parts[0]}")
            queries[parts[0]] = parts[1]
    return queries


def _accepted_queries(records) -> tuple[dict[str, str], dict[str, str]]:
    queries: dict[str, str] = {}
    qrels: dict[str, str] = {}
    for record in records:
        if not record.discarded:
            queries[record.query_id] = record.text
            qrels[record.query_id] = record.target_doc_id
    return queries, qrels


def cmd_ingest(config: PipelineConfig, force: bool = False) -> None:
    if _skip(config, "ingest", force):
        return
    counts: dict[str, int] = {}
    for entry in config.languages:
        corpus = ingest_corpus(entry.corpus, entry.code)
        counts[entry.code] = len(corpus)
    if config.english_corpus is not None and "en" not in counts:
        counts["en"] = len(ingest_corpus(config.english_corpus, "en"))
    _finish_stage(config, "ingest", [], {"document_counts": counts})


def cmd_partition(config: PipelineConfig, force: bool = False) -> None:
    if _skip(config, "partition", force):
        return
    stage_dir = _stage_dir(config, "partition")
    english = _load_english(config)
    outputs: list[Path] = []
    counts: dict[str, dict[str, int]] = {}
    for entry in config.languages:
        if entry.code == "en":
            continue
        if english is None:
            raise ConfigError("missing config key english_corpus (needed for partitioning)")
        corpus = _load_corpus(config, entry.code)
        mapping = partition_corpus(corpus, english)
        path = stage_dir / f"{entry.code}.tsv"
        atomic_write_text(
            path,
            "".join(f"{doc_id}\t{mapping[doc_id].value}\n" for doc_id in sorted(mapping)),
        )
        outputs.append(path)
        per_partition: dict[str, int] = {}
        for partition in mapping.values():
            per_partition[partition.value] = per_partition.get(partition.value, 0) + 1
        counts[entry.code] = per_partition
    _finish_stage(config, "partition", outputs, {"partition_counts": counts})


def _domain_mapping(config: PipelineConfig):
    if config.domain_mapping is not None:
        return load_domain_mapping(config.domain_mapping)
    return default_domain_mapping()


def cmd_sample(config: PipelineConfig, force: bool = False) -> None:
    if _skip(config, "sample", force):
        return
    stage_dir = _stage_dir(config, "sample")
    mapping = _domain_mapping(config)
    outputs: list[Path] = []
    counts: dict[str, dict[str, int]] = {}
    for entry in config.languages:
        corpus = _load_corpus(config, entry.code)
        if entry.code == "en":
            partition_of = {doc.doc_id: Partition.FULL for doc in corpus}
        else:
            partition_of = _read_partition_map(
                _require_output(_partition_map_path(config, entry.code), "partition")
            )
        for partition in _partitions_for(entry.code):
            pool = [doc for doc in corpus if partition_of[doc.doc_id] is partition]
            pool = filter_by_popularity(pool, config.popularity_top_fraction)
            pool = filter_by_length(pool, config.min_chars)
            by_domain: dict = {}
            for doc in pool:
                by_domain.setdefault(assign_domain(doc, mapping), []).append(doc)
            stratified = {
                domain: stratify(docs, config.bucket_count)
                for domain, docs in by_domain.items()
            }
            target = (
                config.effective_full_target()
                if partition is Partition.FULL
                else config.target_count
            )
            sampling_config = SamplingConfig(
                target_count=target,
                bucket_count=config.bucket_count,
                domain_ratio=dict(config.domain_ratio),
                seed=config.seed,
            )
            candidates = sample_candidates(stratified, sampling_config, partition)
            path = stage_dir / f"{entry.code}-{partition.value}.jsonl"
            write_candidate_manifest(path, candidates, sampling_config)
            outputs.append(path)
            counts[f"{entry.code}-{partition.value}"] = {
                "pool": len(pool),
                "sampled": len(candidates),
            }
    _finish_stage(config, "sample", outputs, {"sample_counts": counts, "rng": RNG_ALGORITHM})


def cmd_generate(config: PipelineConfig, force: bool = False) -> None:
    if _skip(config, "generate", force):
        return
    stage_dir = _stage_dir(config, "generate")
    templates = TemplateSet.load(config.templates_dir)
    generator = config.make_generator()
    translator = config.make_translator()
    english = _load_english(config)
    outputs: list[Path] = []
    counts: dict[str, dict[str, int]] = {}
    for entry in config.languages:
        corpus = _load_corpus(config, entry.code)
        for partition in _partitions_for(entry.code):
            manifest_path = _require_output(
                _stage_dir(config, "sample") / f"{entry.code}-{partition.value}.jsonl", "sample"
            )
            candidates = read_candidate_manifest(manifest_path)
            for variation in _variations_for(entry.code, partition):
                records = generate_batch(
                    candidates,
                    variation,
                    corpus,
                    english,
                    generator,
                    templates,
                    translator=translator,
                    char_budget=config.char_budget,
                    workers=config.workers,
                )
                path = stage_dir / entry.code / f"{_set_name(partition, variation)}.jsonl"
                write_query_manifest(path, records)
                outputs.append(path)
                discarded = sum(1 for r in records if r.discarded)
                counts[f"{entry.code}/{_set_name(partition, variation)}"] = {
                    "accepted": len(records) - discarded,
                    "discarded": discarded,
                }
    _finish_stage(config, "generate", outputs, {"generation_counts": counts})


def cmd_index(config: PipelineConfig, force: bool = False) -> None:
    if _skip(config, "index", force):
        return
    stage_dir = _stage_dir(config, "index")
    outputs: list[Path] = []
    stats: dict[str, dict[str, int]] = {}
    for entry in config.languages:
        corpus = _load_corpus(config, entry.code)
        if entry.tokenizer is not None:
            tokenizer = Tokenizer(mode=entry.tokenizer)
        else:
            tokenizer = tokenizer_for_language(entry.code)
        index = build_index(corpus, tokenizer)
        path = stage_dir / f"{entry.code}.json"
        save_index(index, path)
        outputs.append(path)
        stats[entry.code] = {"documents": index.doc_count, "terms": len(index.postings)}
    _finish_stage(config, "index", outputs, {"index_stats": stats})


def _query_sets(config: PipelineConfig, code: str) -> dict[str, dict[str, str]]:
    """All query sets for a language: synthetic per partition-variation, plus real."""
    sets: dict[str, dict[str, str]] = {}
    entry = config.language(code)
    for partition in _partitions_for(code):
        for variation in _variations_for(code, partition):
            name = _set_name(partition, variation)
            manifest_path = _require_output(
                _stage_dir(config, "generate") / code / f"{name}.jsonl", "generate"
            )
            queries, _ = _accepted_queries(read_query_manifest(manifest_path))
            sets[name] = queries
    if entry.real_queries is not None:
        sets["real"] = _load_queries_tsv(entry.real_queries)
    return sets


def cmd_search(config: PipelineConfig, force: bool = False) -> None:
    if _skip(config, "search", force):
        return
    stage_dir = _stage_dir(config, "search")
    outputs: list[Path] = []
    for entry in config.languages:
        index = load_index(
            _require_output(_stage_dir(config, "index") / f"{entry.code}.json", "index")
        )
        for set_name, queries in sorted(_query_sets(config, entry.code).items()):
            for system in default_lexical_pool():
                run = run_search(system, queries, index, depth=config.depth)
                path = stage_dir / entry.code / set_name / f"{system.system_id}.run"
                write_run_file(run, path)
                outputs.append(path)
    _finish_stage(config, "search", outputs)


def _set_qrels(config: PipelineConfig, code: str) -> dict[str, dict[str, str]]:
    qrels_by_set: dict[str, dict[str, str]] = {}
    entry = config.language(code)
    for partition in _partitions_for(code):
        for variation in _variations_for(code, partition):
            name = _set_name(partition, variation)
            manifest_path = _require_output(
                _stage_dir(config, "generate") / code / f"{name}.jsonl", "generate"
            )
            _, qrels = _accepted_queries(read_query_manifest(manifest_path))
            qrels_by_set[name] = qrels
    if entry.real_qrels is not None:
        qrels_by_set["real"] = load_qrels(entry.real_qrels)
    return qrels_by_set


def _pool_runs(
    config: PipelineConfig, code: str, set_name: str, qrels: Mapping[str, str]
) -> list[RunResult]:
    """Load the shared system pool's runs for one query set."""
    entry = config.language(code)
    runs: list[RunResult] = []
    expected = sorted(qrels)
    for system in default_lexical_pool():
        path = _require_output(
            _stage_dir(config, "search") / code / set_name / f"{system.system_id}.run", "search"
        )
        runs.append(
            load_external_run(path, expected, depth=config.depth, system_id=system.system_id)
        )
    for system_id in sorted(entry.external_runs):
        runs.append(
            load_external_run(
                entry.external_runs[system_id], expected, depth=config.depth, system_id=system_id
            )
        )
    return runs


def _write_reports(path: Path, reports: Sequence[MetricReport]) -> None:
    write_jsonl(path, (r.to_dict() for r in sorted(reports, key=lambda r: r.system_id)))


def _read_reports(path: Path) -> list[MetricReport]:
    return [MetricReport.from_dict(row) for row in read_jsonl(path)]


def cmd_evaluate(config: PipelineConfig, force: bool = False) -> None:
    if _skip(config, "evaluate", force):
        return
    stage_dir = _stage_dir(config, "evaluate")
    outputs: list[Path] = []
    for entry in config.languages:
        qrels_by_set = _set_qrels(config, entry.code)
        for set_name, qrels in sorted(qrels_by_set.items()):
            if not qrels:
                logger.warning("%s/%s has no queries; skipping evaluation", entry.code, set_name)
                continue
            runs = _pool_runs(config, entry.code, set_name, qrels)
            reports = evaluate_pool(runs, qrels)
            path = stage_dir / entry.code / f"{set_name}.jsonl"
            _write_reports(path, reports)
            outputs.append(path)
        real_qrels = qrels_by_set.get("real")
        if real_qrels and entry.code != "en" and config.slice_real_by_partition:
            partition_of = _read_partition_map(
                _require_output(_partition_map_path(config, entry.code), "partition")
            )
            runs = _pool_runs(config, entry.code, "real", real_qrels)
            for partition in _partitions_for(entry.code):
                kept = {
                    qid: doc for qid, doc in real_qrels.items()
                    if _real_partition(qid, doc, partition_of) is partition
                }
                if not kept:
                    logger.warning(
                        "%s: no real queries fall in the %s partition; correlation there "
                        "will fall back to the full real set",
                        entry.code,
                        partition.value,
                    )
                    continue
                sliced = [
                    RunResult(
                        system_id=run.system_id,
                        rankings={qid: run.rankings.get(qid, []) for qid in kept},
                    )
                    for run in runs
                ]
                reports = evaluate_pool(sliced, kept)
                path = stage_dir / entry.code / f"real-{partition.value}.jsonl"
                _write_reports(path, reports)
                outputs.append(path)
    _finish_stage(config, "evaluate", outputs)


def _real_partition(
    query_id: str, doc_id: str, partition_of: Mapping[str, Partition]
) -> Partition:
    partition = partition_of.get(doc_id)
    if partition is None:
        raise EvaluationError(
            f"real query {query_id} targets {doc_id}, which is not in the partition map"
        )
    return partition


def _correlations_path(config: PipelineConfig, code: str) -> Path:
    return _stage_dir(config, "correlate") / f"{code}.jsonl"


def _correlation_row(
    partition: Partition, variation: PromptVariation, result: CorrelationResult
) -> dict:
    row: dict = {"partition": partition.value, "variation": variation.value}
    for metric in METRICS:
        row[f"{metric}_tau"] = result.per_metric[metric].tau
        row[f"{metric}_pearson"] = result.per_metric[metric].pearson
    row["mean_tau"] = result.mean_tau
    row["mean_pearson"] = result.mean_pearson
    return row


def _result_from_row(row: Mapping) -> CorrelationResult:
    return CorrelationResult.from_per_metric(
        {
            metric: MetricCorrelation(
                tau=row[f"{metric}_tau"], pearson=row[f"{metric}_pearson"]
            )
            for metric in METRICS
        }
    )


def _correlation_table(rows: Sequence[dict]) -> str:
    headers = ["partition", "variation"]
    for metric in METRICS:
        headers.extend([f"{metric}_tau", f"{metric}_r"])
    headers.extend(["mean_tau", "mean_r"])
    lines = ["\t".join(headers)]
    for row in rows:
        cells = [row["partition"], row["variation"]]
        for metric in METRICS:
            cells.extend(
                [f"{row[f'{metric}_tau']:.4f}", f"{row[f'{metric}_pearson']:.4f}"]
            )
        cells.extend([f"{row['mean_tau']:.4f}", f"{row['mean_pearson']:.4f}"])
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


def cmd_correlate(config: PipelineConfig, force: bool = False) -> None:
    if _skip(config, "correlate", force):
        return
    stage_dir = _stage_dir(config, "correlate")
    outputs: list[Path] = []
    for entry in config.languages:
        if entry.real_qrels is None:
            logger.warning(
                "%s has no real query set; skipping correlation", entry.code
            )
            continue
        evaluate_dir = _stage_dir(config, "evaluate") / entry.code
        rows: list[dict] = []
        for partition in _partitions_for(entry.code):
            sliced_path = evaluate_dir / f"real-{partition.value}.jsonl"
            if partition is not Partition.FULL and sliced_path.exists():
                real_reports = _read_reports(sliced_path)
            else:
                if partition is not Partition.FULL:
                    logger.warning(
                        "%s: using the full real set for the %s partition",
                        entry.code,
                        partition.value,
                    )
                real_reports = _read_reports(
                    _require_output(evaluate_dir / "real.jsonl", "evaluate")
                )
            for variation in _variations_for(entry.code, partition):
                synthetic_path = _require_output(
                    evaluate_dir / f"{_set_name(partition, variation)}.jsonl", "evaluate"
                )
                result = correlate(real_reports, _read_reports(synthetic_path))
                rows.append(_correlation_row(partition, variation, result))
        path = _correlations_path(config, entry.code)
        write_jsonl(path, rows)
        table_path = stage_dir / f"{entry.code}.txt"
        atomic_write_text(table_path, _correlation_table(rows))
        outputs.extend([path, table_path])
    _finish_stage(config, "correlate", outputs)


def cmd_select(config: PipelineConfig, force: bool = False) -> None:
    if _skip(config, "select", force):
        return
    stage_dir = _stage_dir(config, "select")
    outputs: list[Path] = []
    for entry in config.languages:
        path = stage_dir / f"{entry.code}.json"
        if entry.code == "en":
            strategy = {Partition.FULL.value: PromptVariation.V1.value}
        elif entry.real_qrels is None:
            logger.warning(
                "%s has no correlations; defaulting every partition to V1", entry.code
            )
            strategy = {
                partition.value: PromptVariation.V1.value
                for partition in _partitions_for(entry.code)
            }
        else:
            results = {
                (Partition(row["partition"]), row["variation"]): _result_from_row(row)
                for row in read_jsonl(
                    _require_output(_correlations_path(config, entry.code), "correlate")
                )
            }
            selected = select_best_strategy(results)
            strategy = {partition.value: variation for partition, variation in selected.items()}
        write_json(path, strategy)
        outputs.append(path)
    _finish_stage(config, "select", outputs)


def cmd_assemble(config: PipelineConfig, force: bool = False) -> None:
    if _skip(config, "assemble", force):
        return
    stage_dir = _stage_dir(config, "assemble")
    outputs: list[Path] = []
    for entry in config.languages:
        corpus = _load_corpus(config, entry.code)
        strategy_raw = read_json(
            _require_output(_stage_dir(config, "select") / f"{entry.code}.json", "select")
        )
        strategy_map = {
            Partition(partition): PromptVariation(variation)
            for partition, variation in strategy_raw.items()
        }
        candidates = {}
        records = []
        for partition in _partitions_for(entry.code):
            for candidate in read_candidate_manifest(
                _require_output(
                    _stage_dir(config, "sample") / f"{entry.code}-{partition.value}.jsonl",
                    "sample",
                )
            ):
                candidates[candidate.doc_id] = candidate
            variation = strategy_map[partition]
            records.extend(
                read_query_manifest(
                    _require_output(
                        _stage_dir(config, "generate")
                        / entry.code
                        / f"{_set_name(partition, variation)}.jsonl",
                        "generate",
                    )
                )
            )
        spec = CollectionSpec(
            language=entry.code,
            strategy_map=strategy_map,
            seed=config.seed,
            split_ratio=config.split_ratio,
            domain_ratio=dict(config.domain_ratio),
        )
        bundle = assemble_collection(records, candidates, spec, corpus)
        bundle_dir = stage_dir / entry.code
        write_bundle(bundle, bundle_dir)
        report = validate_collection(bundle, corpus)
        if not report.ok:
            preview = "; ".join(report.violations[:3])
            raise TotsimError(
                f"{entry.code}: collection failed validation with "
                f"{len(report.violations)} violations ({preview})"
            )
        logger.info("%s: collection validated clean", entry.code)
        for name in ("queries.tsv", "qrels.txt", "splits.tsv", "manifest.json"):
            outputs.append(bundle_dir / name)
    _finish_stage(config, "assemble", outputs)


def cmd_pipeline(config: PipelineConfig, force: bool = False) -> None:
    for stage in STAGE_ORDER:
        COMMANDS[stage](config, force)


COMMANDS: dict[str, Callable[[PipelineConfig, bool], None]] = {
    "ingest": cmd_ingest,
    "partition": cmd_partition,
    "sample": cmd_sample,
    "generate": cmd_generate,
    "index": cmd_index,
    "search": cmd_search,
    "evaluate": cmd_evaluate,
    "correlate": cmd_correlate,
    "select": cmd_select,
    "assemble": cmd_assemble,
    "pipeline": cmd_pipeline,
}


def parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="totsim",
        description="Build and validate simulated tip-of-the-tongue test collections.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        sub = subparsers.add_parser(command, help=f"run the {command} stage")
        sub.add_argument("--config", required=True, type=Path, help="pipeline YAML config")
        sub.add_argument("--seed", type=int, default=None, help="override the config seed")
        sub.add_argument("--workers", type=int, default=None, help="override worker count")
        sub.add_argument(
            "--force", action="store_true", help="rerun even if outputs are up to date"
        )
    return parser.parse_args(argv)


def main(argv: Sequence[str] | None = None) -> int:
    args = parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        config = load_config(args.config, overrides={"seed": args.seed, "workers": args.workers})
        COMMANDS[args.command](config, args.force)
    except (TotsimError, OSError) as exc:
        print(f"error: {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
