"""Stage commands: ingest -> prompts -> train -> evaluate -> compare/report.

Every stage is idempotent: completed work is detected through provenance
files embedding the pipeline config hash and skipped unless forced.
"""

from __future__ import annotations

import fnmatch
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .. import __version__
from ..datasets.camus import (
    load_test_patients,
    read_patient_metadata,
    scan_camus,
    split_diagnostics,
    split_official,
)
from ..datasets.sdm import EXPECTED_COUNTS, scan_sdm
from ..errors import (
    ConfigError,
    EvaluationError,
    IncompleteMatrixError,
    TrainingError,
)
from ..evaluation.evaluate import evaluate, read_results, write_results
from ..evaluation.report import ReportRun, make_report, structural_na
from ..evaluation.stats import compare_strategies
from ..io_utils import canonical_hash, read_meta
from ..prompts.attributes import required_attributes
from ..prompts.triplets import (
    emit_triplets,
    materialize_binary_masks,
    read_triplets,
    write_triplets,
)
from ..records import (
    DatasetSplit,
    PatientMetadata,
    SampleRecord,
    Source,
    read_manifest,
    write_manifest,
)
from ..training.config import ExperimentConfig, Strategy, run_slug
from ..training.loop import TrainingHistory
from ..training.strategies import RunPlan, enumerate_runs, execute_run
from ..vqa.client import build_client
from ..vqa.shapes import ShapeCache, resolve_shapes
from .config import PipelineConfig
from .provenance import require_fresh, stage_complete, write_provenance

log = logging.getLogger(__name__)

DEFAULT_TEST_LISTING = "subgroup_testing.txt"


@dataclass
class Workspace:
    """The output-directory layout used by every stage."""

    root: Path

    @property
    def manifests_dir(self) -> Path:
        return self.root / "manifests"

    @property
    def provenance_dir(self) -> Path:
        return self.root / "provenance"

    @property
    def binary_masks_dir(self) -> Path:
        return self.root / "binary_masks"

    @property
    def triplets_dir(self) -> Path:
        return self.root / "triplets"

    @property
    def shape_cache_path(self) -> Path:
        return self.root / "shape_cache" / "answers.jsonl"

    @property
    def runs_dir(self) -> Path:
        return self.root / "runs"

    @property
    def results_dir(self) -> Path:
        return self.root / "results"

    @property
    def comparisons_dir(self) -> Path:
        return self.root / "comparisons"

    @property
    def report_dir(self) -> Path:
        return self.root / "report"

    @property
    def metadata_path(self) -> Path:
        return self.manifests_dir / "metadata.json"

    def manifest_path(self, source: Source, split: str) -> Path:
        return self.manifests_dir / f"{source.value}_{split}.jsonl"

    def triplet_path(self, source: Source, split: str, level: int) -> Path:
        return self.triplets_dir / f"{source.value}_{split}_P{level}.jsonl"

    def stage_provenance(self, stage: str) -> Path:
        return self.provenance_dir / f"{stage}.json"

    def results_path(self, slug: str) -> Path:
        return self.results_dir / f"{slug}.jsonl"


def _workspace(config: PipelineConfig) -> Workspace:
    return Workspace(Path(config.output_dir))


# ---------------------------------------------------------------------------
# validate


def cmd_validate(config: PipelineConfig) -> dict:
    """Check roots, splits, and matrix; returns diagnostics, writes nothing."""
    diagnostics: dict = {"status": "OK", "notes": []}

    records = scan_camus(config.camus_root)
    test_patients = load_test_patients(
        config.test_patients_file or DEFAULT_TEST_LISTING, root=config.camus_root
    )
    split = split_official(records, test_patients, config.val_patient_count)
    diagnostics["real"] = {
        name: {
            "images": len(getattr(split, name)),
            "patients": len(split.patients(name)),
        }
        for name in ("train", "val", "test")
    }
    diagnostics["notes"].extend(split_diagnostics(split))

    if Source.SYNTHETIC in config.needed_sources():
        synth = scan_sdm(config.sdm_root)
        diagnostics["synthetic"] = {
            name: {"images": len(records_)} for name, records_ in synth.items()
        }
        for name, records_ in synth.items():
            expected = EXPECTED_COUNTS.get(name)
            if expected is not None and len(records_) != expected:
                diagnostics["notes"].append(
                    f"synthetic {name} split: {len(records_)} records vs published "
                    f"reference count {expected}"
                )

    plans = _plans(config)
    diagnostics["matrix"] = {
        "runs": len(plans),
        "slugs": [plan.slug for plan in plans],
    }
    diagnostics["config_hash"] = config.config_hash
    return diagnostics


# ---------------------------------------------------------------------------
# ingest


def cmd_ingest(config: PipelineConfig, *, force: bool = False) -> dict:
    ws = _workspace(config)
    provenance_path = ws.stage_provenance("ingest")
    expected_files = [
        ws.manifest_path(Source.REAL, split) for split in ("train", "val", "test")
    ]
    if Source.SYNTHETIC in config.needed_sources():
        expected_files += [
            ws.manifest_path(Source.SYNTHETIC, split) for split in ("train", "val")
        ]
    expected_files.append(ws.metadata_path)

    if (
        not force
        and stage_complete(provenance_path, config.config_hash)
        and all(path.exists() for path in expected_files)
    ):
        return {"status": "skipped", "stage": "ingest"}

    records = scan_camus(config.camus_root)
    test_patients = load_test_patients(
        config.test_patients_file or DEFAULT_TEST_LISTING, root=config.camus_root
    )
    split = split_official(records, test_patients, config.val_patient_count)
    for note in split_diagnostics(split):
        log.warning("%s", note)

    counts: dict = {"real": {}, "synthetic": {}}
    for name in ("train", "val", "test"):
        bucket = getattr(split, name)
        write_manifest(bucket, ws.manifest_path(Source.REAL, name), split=name)
        counts["real"][name] = len(bucket)

    metadata = {
        patient_id: read_patient_metadata(Path(config.camus_root) / patient_id)
        for patient_id in sorted({r.patient_id for r in records})
    }
    ws.metadata_path.parent.mkdir(parents=True, exist_ok=True)
    ws.metadata_path.write_text(
        json.dumps(
            {pid: meta.to_json_dict() for pid, meta in metadata.items()},
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )

    if Source.SYNTHETIC in config.needed_sources():
        synth = scan_sdm(config.sdm_root)
        for name in ("train", "val"):
            write_manifest(
                synth[name], ws.manifest_path(Source.SYNTHETIC, name), split=name
            )
            counts["synthetic"][name] = len(synth[name])

    write_provenance(
        provenance_path, "ingest", config.config_hash,
        counts=counts,
        test_patients=sorted(test_patients),
    )
    return {"status": "ingested", "stage": "ingest", "counts": counts}


# ---------------------------------------------------------------------------
# prompts


def _plans(config: PipelineConfig) -> list[RunPlan]:
    overrides = dict(config.training_overrides)
    overrides.setdefault("precision", config.precision)
    return enumerate_runs(
        config.matrix.model_kinds,
        config.matrix.strategies,
        config.matrix.levels,
        config.matrix.freeze_flags,
        seed=config.seed,
        config_overrides=overrides,
    )


def _needed_triplet_groups(config: PipelineConfig) -> dict[tuple[Source, str], set[int]]:
    """(source, split) -> prompt levels the matrix needs materialized."""
    needed: dict[tuple[Source, str], set[int]] = {}

    def add(source: Source, split: str, level: int) -> None:
        needed.setdefault((source, split), set()).add(level)

    plans = _plans(config)
    for plan in plans:
        source = plan.config.strategy.trains_on
        add(source, "train", plan.config.prompt_level)
        add(source, "val", plan.config.prompt_level)
        # every run is evaluated on the real test split at its own level
        add(Source.REAL, "test", plan.config.prompt_level)
    return needed


def _read_metadata(ws: Workspace) -> dict[str, PatientMetadata]:
    payload = json.loads(ws.metadata_path.read_text(encoding="utf-8"))
    return {
        pid: PatientMetadata.from_json_dict(obj) for pid, obj in payload.items()
    }


def cmd_prompts(config: PipelineConfig, *, force: bool = False) -> dict:
    ws = _workspace(config)
    require_fresh(ws.stage_provenance("ingest"), "ingest", config.config_hash)
    provenance_path = ws.stage_provenance("prompts")
    needed = _needed_triplet_groups(config)
    expected_files = [
        ws.triplet_path(source, split, level)
        for (source, split), levels in needed.items()
        for level in levels
    ]
    if (
        not force
        and stage_complete(provenance_path, config.config_hash)
        and all(path.exists() for path in expected_files)
    ):
        return {"status": "skipped", "stage": "prompts"}

    metadata = _read_metadata(ws)
    targets = config.targets()
    group_records: dict[tuple[Source, str], list[SampleRecord]] = {
        key: read_manifest(ws.manifest_path(*key)) for key in needed
    }

    all_records: dict[str, SampleRecord] = {}
    for records in group_records.values():
        for record in records:
            all_records[record.sample_key] = record
    mask_refs = materialize_binary_masks(
        sorted(all_records.values(), key=lambda r: r.sample_key),
        targets,
        ws.binary_masks_dir,
        force=force,
    )

    # Shape answers are needed only where a requested level consumes them.
    shape_records: dict[str, SampleRecord] = {}
    for (source, split), levels in sorted(needed.items()):
        if any("shape" in required_attributes(lv, source) for lv in levels):
            for record in group_records[(source, split)]:
                shape_records[record.sample_key] = record

    cache = ShapeCache(ws.shape_cache_path)
    client = build_client(config.vqa)
    shapes = {}
    if shape_records:
        shapes = resolve_shapes(
            sorted(shape_records.values(), key=lambda r: r.sample_key),
            targets,
            mask_refs,
            client,
            cache,
            max_in_flight=config.vqa_max_in_flight,
            retries=config.vqa.retries,
        )
    vqa_calls = getattr(client, "call_count", None)

    meta = {"config_hash": config.config_hash, "version": __version__}
    file_counts: dict[str, int] = {}
    for (source, split), levels in sorted(needed.items()):
        records = group_records[(source, split)]
        for level in sorted(levels):
            entries = emit_triplets(
                records,
                targets,
                [level],
                source=source,
                split=split,
                metadata=metadata,
                shapes=shapes,
                binary_mask_refs=mask_refs,
            )
            path = ws.triplet_path(source, split, level)
            write_triplets(entries, path, meta=meta)
            file_counts[path.name] = len(entries)

    write_provenance(
        provenance_path, "prompts", config.config_hash,
        triplet_counts=file_counts,
        binary_masks=len(mask_refs),
        vqa_calls=vqa_calls,
        shape_answers=len(cache),
    )
    return {
        "status": "generated",
        "stage": "prompts",
        "triplet_counts": file_counts,
        "vqa_calls": vqa_calls,
    }


# ---------------------------------------------------------------------------
# train


def _select_plans(plans: list[RunPlan], selector: str | None) -> list[RunPlan]:
    if not selector:
        return plans
    patterns = [p.strip() for p in selector.split(",") if p.strip()]
    by_slug = {plan.slug: plan for plan in plans}
    chosen: dict[str, RunPlan] = {}
    for pattern in patterns:
        matched = [s for s in by_slug if fnmatch.fnmatch(s, pattern)]
        if not matched:
            raise ConfigError(
                f"run selector {pattern!r} matches no planned run; "
                f"known runs: {sorted(by_slug)}"
            )
        for slug in matched:
            chosen[slug] = by_slug[slug]
    # keep upstream dependencies of selected fine-tuning runs
    for plan in list(chosen.values()):
        if plan.upstream_slug and plan.upstream_slug not in chosen:
            chosen[plan.upstream_slug] = by_slug[plan.upstream_slug]
    return [plan for plan in plans if plan.slug in chosen]


def _test_sample_keys(ws: Workspace) -> set[str]:
    return {r.sample_key for r in read_manifest(ws.manifest_path(Source.REAL, "test"))}


def _train_one(
    plan: RunPlan,
    config: PipelineConfig,
    ws: Workspace,
    test_keys: set[str],
    *,
    force: bool,
) -> tuple[str, str]:
    spec = config.model_spec(plan.config.model_kind)

    def entries_for(source: Source, split: str, level: int):
        path = ws.triplet_path(source, split, level)
        if not path.exists():
            raise TrainingError(
                f"run {plan.slug}: triplet manifest {path} missing; "
                "run the prompts stage first"
            )
        return read_triplets(path)

    outcome = execute_run(
        plan, spec, entries_for, ws.runs_dir, force=force
    )
    provenance_file = outcome.run_dir / "provenance.json"
    provenance = json.loads(provenance_file.read_text(encoding="utf-8"))
    touched_real = {
        key for key, source in map(tuple, provenance["touched_samples"])
        if source == Source.REAL.value
    }
    leaked = sorted(touched_real & test_keys)
    if leaked:
        raise TrainingError(
            f"run {plan.slug} touched test samples during training: {leaked[:5]}"
        )
    return outcome.slug, outcome.status


def _train_worker(args) -> tuple[str, str]:
    plan, config, ws, test_keys, force = args
    return _train_one(plan, config, ws, test_keys, force=force)


def cmd_train(
    config: PipelineConfig, *, runs: str | None = None, force: bool = False
) -> dict:
    ws = _workspace(config)
    require_fresh(ws.stage_provenance("prompts"), "prompts", config.config_hash)
    plans = _select_plans(_plans(config), runs)
    test_keys = _test_sample_keys(ws)

    statuses: dict[str, str] = {}
    waves = [
        [plan for plan in plans if plan.upstream_slug is None],
        [plan for plan in plans if plan.upstream_slug is not None],
    ]
    for wave in waves:
        if not wave:
            continue
        if config.parallelism > 1 and len(wave) > 1:
            with ProcessPoolExecutor(max_workers=config.parallelism) as pool:
                for slug, status in pool.map(
                    _train_worker,
                    [(plan, config, ws, test_keys, force) for plan in wave],
                ):
                    statuses[slug] = status
        else:
            for plan in wave:
                slug, status = _train_one(plan, config, ws, test_keys, force=force)
                statuses[slug] = status

    write_provenance(
        ws.stage_provenance("train"), "train", config.config_hash, runs=statuses
    )
    return {"status": "trained", "stage": "train", "runs": statuses}


# ---------------------------------------------------------------------------
# evaluate


def cmd_evaluate(
    config: PipelineConfig, *, runs: str | None = None, force: bool = False
) -> dict:
    ws = _workspace(config)
    require_fresh(ws.stage_provenance("prompts"), "prompts", config.config_hash)
    plans = _select_plans(_plans(config), runs)
    statuses: dict[str, str] = {}
    meta = {"config_hash": config.config_hash, "version": __version__}

    for plan in plans:
        slug = plan.slug
        results_path = ws.results_path(slug)
        if not force and results_path.exists():
            file_meta = read_meta(results_path) or {}
            if file_meta.get("config_hash") == config.config_hash:
                statuses[slug] = "skipped"
                continue
        checkpoint = ws.runs_dir / slug / "best.pt"
        if not checkpoint.exists():
            raise TrainingError(
                f"run {slug} has no checkpoint at {checkpoint}; train it first"
            )
        run_provenance = json.loads(
            (ws.runs_dir / slug / "provenance.json").read_text(encoding="utf-8")
        )
        expected = canonical_hash(plan.config.to_json_dict())
        if run_provenance.get("config_hash") != expected:
            raise TrainingError(
                f"run {slug}: checkpoint was trained under a different run "
                "configuration; re-train it (or --force the training stage)"
            )
        entries = read_triplets(
            ws.triplet_path(Source.REAL, "test", plan.config.prompt_level)
        )
        spec = config.model_spec(plan.config.model_kind)
        results = evaluate(
            spec, checkpoint, entries, batch_size=plan.config.batch_size
        )
        write_results(results, results_path, run_slug=slug, meta=meta)
        statuses[slug] = "evaluated"

    write_provenance(
        ws.stage_provenance("evaluate"), "evaluate", config.config_hash, runs=statuses
    )
    return {"status": "evaluated", "stage": "evaluate", "runs": statuses}


# ---------------------------------------------------------------------------
# compare / report


def cmd_compare(
    config: PipelineConfig,
    *,
    baseline: str,
    candidate: str,
    levels: list[int] | None = None,
) -> dict:
    if not baseline or not candidate:
        raise ConfigError("compare needs both --baseline and --candidate run slugs")
    ws = _workspace(config)
    for slug in (baseline, candidate):
        if not ws.results_path(slug).exists():
            raise EvaluationError(
                f"no persisted results for run {slug!r} at {ws.results_path(slug)}; "
                "run the evaluate stage first"
            )
    result = compare_strategies(
        read_results(ws.results_path(baseline)),
        read_results(ws.results_path(candidate)),
        baseline_id=baseline,
        candidate_id=candidate,
        levels=levels,
    )
    ws.comparisons_dir.mkdir(parents=True, exist_ok=True)
    out_path = ws.comparisons_dir / f"{baseline}__vs__{candidate}.json"
    payload = {
        "_meta": {"config_hash": config.config_hash, "version": __version__},
        "baseline": baseline,
        "candidate": candidate,
        "levels": list(result.levels),
        "n_pairs": result.n_pairs,
        "mean_diff": result.mean_diff,
        "statistic": result.wilcoxon.statistic,
        "p_value": result.wilcoxon.p_value,
        "method": result.wilcoxon.method,
        "pairing_key": result.pairing_key,
    }
    out_path.write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return {"status": "compared", "output": str(out_path), **{
        k: payload[k] for k in ("mean_diff", "statistic", "p_value", "n_pairs")
    }}


def cmd_report(config: PipelineConfig, *, force: bool = False) -> dict:
    ws = _workspace(config)
    require_fresh(ws.stage_provenance("prompts"), "prompts", config.config_hash)

    report_runs: list[ReportRun] = []
    for kind in config.matrix.model_kinds:
        for strategy in config.matrix.strategies:
            for level in config.matrix.levels:
                for trainable in config.matrix.freeze_flags:
                    if structural_na(strategy, level):
                        continue
                    run_config = _cell_config(config, kind, strategy, level, trainable)
                    slug = run_slug(run_config)
                    results_path = ws.results_path(slug)
                    if not results_path.exists():
                        raise IncompleteMatrixError(
                            f"missing evaluation results for cell (model={kind.value}, "
                            f"strategy={strategy.value}, level=P{level}, "
                            f"encoders={'unfrozen' if trainable else 'frozen'}); "
                            f"expected {results_path}"
                        )
                    history_path = ws.runs_dir / slug / "history.csv"
                    history = (
                        TrainingHistory.from_csv(history_path)
                        if history_path.exists()
                        else None
                    )
                    report_runs.append(ReportRun(
                        config=run_config,
                        results=read_results(results_path),
                        history=history,
                    ))

    report = make_report(
        report_runs,
        config.matrix.to_json_dict(),
        ws.report_dir,
        meta={"config_hash": config.config_hash, "version": __version__},
    )
    write_provenance(
        ws.stage_provenance("report"), "report", config.config_hash,
        cells=len(report.cells),
        comparisons=len(report.comparisons),
    )
    artifacts = sorted(p.name for p in ws.report_dir.iterdir() if p.is_file())
    return {
        "status": "reported",
        "stage": "report",
        "cells": len(report.cells),
        "artifacts": artifacts,
    }


def _cell_config(
    config: PipelineConfig, kind, strategy, level, trainable
) -> ExperimentConfig:
    overrides = dict(config.training_overrides)
    overrides.setdefault("precision", config.precision)
    return ExperimentConfig.for_kind(
        kind, strategy, level, trainable, seed=config.seed, **overrides
    )
