"""Single command-line entry point: ingest, build, validate, eval, judge,
and serve, all driven by one JSON config file.

Exit codes: 0 success, 1 validation/build failure, 2 config or usage
error. Data artifacts go to the output directory only; logs go to stderr
as key=value lines.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from . import __version__
from .corpus import (
    BuildSettings,
    ConversaRecipe,
    StageMixConfig,
    build_corpus,
    config_hash,
    write_corpus,
)
from .domain import (
    TaskKind,
    manifest_from_dict,
    record_from_dict,
    record_to_dict,
    sample_from_dict,
)
from .errors import ConfigError, CorpusBuildError, ForgeError, IngestError, ValidationError
from .ingest import IngestAdapterConfig, ingest_file, load_dimensions_index
from .jsonl import iter_jsonl, write_jsonl
from .metrics.evalio import (
    load_caption_corpus,
    load_grounding_items,
    load_judge_items,
    load_phrase_items,
    load_predictions,
    load_vqa_items,
)
from .metrics.report import (
    caption_report,
    grounding_report,
    phrase_grounding_report,
    render_table,
    vqa_report,
)
from .review import decision_from_dict, read_decision_log
from .templating import load_default_pools, load_pools_from_dir

CONFIG_ENV_VAR = "SKYEYE_FORGE_CONFIG"

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2


def log(event: str, **fields) -> None:
    parts = [f"event={event}"] + [f"{key}={value}" for key, value in fields.items()]
    click.echo(" ".join(parts), err=True)


def fail(code: int, message: str) -> "click.exceptions.Exit":
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


class ForgeConfig:
    """Parsed config file plus path resolution relative to its location."""

    def __init__(self, document: dict, base_dir: Path):
        self.document = document
        self.base_dir = base_dir

    def resolve(self, value: str | None) -> Path | None:
        if value is None:
            return None
        path = Path(value)
        return path if path.is_absolute() else self.base_dir / path

    def get(self, key: str, default=None):
        return self.document.get(key, default)

    @property
    def hash(self) -> str:
        return config_hash(self.document)


def load_config(config_path: str | None) -> ForgeConfig:
    path = config_path or os.environ.get(CONFIG_ENV_VAR)
    if not path:
        raise ConfigError(f"no config file (use --config or ${CONFIG_ENV_VAR})")
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return ForgeConfig(document, path.parent.resolve())


def _task_kind(value: str, where: str) -> TaskKind:
    try:
        return TaskKind(value)
    except ValueError as exc:
        raise ConfigError(f"{where}: unknown task kind {value!r}") from exc


def _adapter_configs(config: ForgeConfig) -> list[tuple[IngestAdapterConfig, Path, Path | None]]:
    datasets = config.get("datasets", [])
    if not datasets:
        raise ConfigError("config has no datasets")
    adapters = []
    for index, entry in enumerate(datasets):
        where = f"datasets[{index}]"
        try:
            adapter = IngestAdapterConfig(
                dataset_id=entry["dataset_id"],
                kind=_task_kind(entry["kind"], where),
                input_format=entry["input_format"],
                split_map=entry.get("split_map", {"*": "train"}),
                field_map=entry.get("field_map", {}),
                media_kind=entry.get("media_kind", "image"),
            )
            data_path = config.resolve(entry["path"])
        except KeyError as exc:
            raise ConfigError(f"{where}: missing key {exc.args[0]!r}") from exc
        dims_path = config.resolve(entry.get("dimensions_index"))
        adapters.append((adapter, data_path, dims_path))
    return adapters


def _recipes(config: ForgeConfig) -> list[ConversaRecipe]:
    recipes = []
    for index, entry in enumerate(config.get("recipes", [])):
        where = f"recipes[{index}]"
        try:
            recipes.append(
                ConversaRecipe(
                    name=entry["name"],
                    member_kinds=tuple(
                        _task_kind(k, where) for k in entry["member_kinds"]
                    ),
                    source_dataset_ids=tuple(entry["source_dataset_ids"]),
                    turns_per_sample=(
                        tuple(entry["turns_per_sample"])
                        if entry.get("turns_per_sample")
                        else None
                    ),
                )
            )
        except KeyError as exc:
            raise ConfigError(f"{where}: missing key {exc.args[0]!r}") from exc
    return recipes


def _settings(config: ForgeConfig, seed: int | None, jobs: int | None) -> BuildSettings:
    tokens = None
    if config.get("identifier_tokens"):
        tokens = {
            _task_kind(kind, "identifier_tokens"): token
            for kind, token in config.get("identifier_tokens").items()
        }
    return BuildSettings(
        seed=seed if seed is not None else int(config.get("seed", 0)),
        identifiers_enabled=bool(config.get("identifiers_enabled", True)),
        identifier_tokens=tokens,
        box_delimiter=config.get("box_delimiter", "<delim>"),
        jobs=jobs if jobs and jobs > 0 else (os.cpu_count() or 1),
    )


def _pools(config: ForgeConfig):
    template_dir = config.resolve(config.get("template_dir"))
    if template_dir is not None:
        pools = load_pools_from_dir(template_dir)
        if not pools:
            raise ConfigError(f"template_dir {template_dir} holds no pool files")
        defaults = load_default_pools()
        defaults.update(pools)
        return defaults
    return load_default_pools()


def _ingest_all(config: ForgeConfig, lenient: bool, jobs: int | None):
    jobs = jobs if jobs and jobs > 0 else (os.cpu_count() or 1)
    adapters = _adapter_configs(config)

    def run_one(entry):
        adapter, data_path, dims_path = entry
        dims = load_dimensions_index(dims_path) if dims_path else None
        if not data_path.is_file():
            raise IngestError(f"annotation file {data_path} does not exist",
                              source=adapter.dataset_id)
        result = ingest_file(adapter, data_path, dims, lenient)
        return adapter, result

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as executor:
            return list(executor.map(run_one, adapters))
    return [run_one(entry) for entry in adapters]


@click.group(name="skyeye-forge")
@click.version_option(version=__version__)
def main() -> None:
    """Corpus forge and evaluation toolkit for remote-sensing
    vision-language instruction tuning."""


@main.command()
@click.option("--config", "config_path", type=str, default=None, help="Config file path.")
@click.option("--out", "out_dir", type=str, default=None, help="Output directory override.")
@click.option("--strict/--lenient", default=True, show_default=True,
              help="Fail on the first bad unit, or skip and report.")
@click.option("--jobs", type=int, default=None, help="Parallel workers (default: all cores).")
def ingest(config_path, out_dir, strict, jobs):
    """Parse annotation files into SourceRecord JSONL (+ error reports)."""
    try:
        config = load_config(config_path)
        out = Path(out_dir) if out_dir else config.resolve(config.get("output_dir", "out"))
        records_dir = out / "records"
        results = _ingest_all(config, lenient=not strict, jobs=jobs)
    except ConfigError as exc:
        fail(EXIT_CONFIG, str(exc))
    except (IngestError, ValidationError) as exc:
        fail(EXIT_VALIDATION, str(exc))
    # several adapter entries may feed one dataset_id; merge their outputs
    merged_records: dict[str, list] = {}
    merged_issues: dict[str, list] = {}
    for adapter, result in results:
        merged_records.setdefault(adapter.dataset_id, []).extend(
            record_to_dict(r) for r in result.records
        )
        merged_issues.setdefault(adapter.dataset_id, []).extend(
            issue.to_dict() for issue in result.issues
        )
    for dataset_id, rows in merged_records.items():
        write_jsonl(records_dir / f"{dataset_id}.records.jsonl", rows)
        issues = merged_issues.get(dataset_id, [])
        log("ingested", dataset=dataset_id, records=len(rows), issues=len(issues))
        if issues:
            write_jsonl(records_dir / f"{dataset_id}.errors.jsonl", issues)


@main.command()
@click.option("--config", "config_path", type=str, default=None)
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out", "out_dir", type=str, default=None)
@click.option("--strict/--lenient", default=True, show_default=True)
@click.option("--require-accept", is_flag=True, default=False,
              help="Emit only accepted/edited samples.")
@click.option("--jobs", type=int, default=None, help="Parallel workers (default: all cores).")
def build(config_path, seed, out_dir, strict, require_accept, jobs):
    """Build the instruction corpus: samples, streams, manifest, report."""
    try:
        config = load_config(config_path)
        settings = _settings(config, seed, jobs)
        pools = _pools(config)
        recipes = _recipes(config)
        results = _ingest_all(config, lenient=not strict, jobs=jobs)
        records = [r for _, result in results for r in result.records]
        log("ingest-complete", records=len(records))

        review_config = config.get("review", {})
        decisions = []
        log_path = config.resolve(review_config.get("decision_log"))
        if log_path and log_path.exists():
            decisions = read_decision_log(log_path)
            log("review-log-loaded", decisions=len(decisions))
        require = require_accept or bool(review_config.get("require_accept", False))

        mix = config.get("stage_mix")
        stage_mix = None
        if mix:
            stage_mix = StageMixConfig(
                stage=2,
                single_task_weight=float(mix.get("single_task_weight", 0.8)),
                conversation_weight=float(mix.get("conversation_weight", 0.2)),
                seed=settings.seed,
                epoch_length=int(mix["epoch_length"]) if mix.get("epoch_length") else 0,
            )

        result = build_corpus(
            records,
            recipes,
            pools,
            settings,
            stage_mix=stage_mix,
            decisions=decisions,
            require_accept=require,
            strict=strict,
            build_config_hash=config.hash,
        )
        out = Path(out_dir) if out_dir else config.resolve(config.get("output_dir", "out"))
        paths = write_corpus(result, out)
    except ConfigError as exc:
        fail(EXIT_CONFIG, str(exc))
    except (IngestError, CorpusBuildError, ValidationError) as exc:
        fail(EXIT_VALIDATION, str(exc))
    log("build-complete", samples=result.manifest.total,
        stage1=result.manifest.stage1_total, stage2=result.manifest.stage2_total,
        out=str(out))
    for name, path in paths.items():
        log("artifact", name=name, path=str(path))


@main.command()
@click.argument("artifact", type=click.Path(exists=True, dir_okay=False))
@click.option("--schema", type=click.Choice(["records", "samples", "manifest", "decisions"]),
              default=None, help="Schema to validate against (inferred from filename).")
def validate(artifact, schema):
    """Validate any artifact file against its schema and invariants."""
    path = Path(artifact)
    if schema is None:
        name = path.name
        if "records" in name:
            schema = "records"
        elif "manifest" in name:
            schema = "manifest"
        elif "decision" in name:
            schema = "decisions"
        elif "corpus" in name or "samples" in name:
            schema = "samples"
        else:
            fail(EXIT_CONFIG, f"cannot infer schema from {name!r}; pass --schema")
    checkers = {
        "records": lambda row: record_from_dict(row),
        "samples": lambda row: sample_from_dict(row),
        "decisions": lambda row: decision_from_dict(row),
    }
    errors = 0
    count = 0
    if schema == "manifest":
        try:
            manifest = manifest_from_dict(json.loads(path.read_text(encoding="utf-8")))
            row_total = sum(r.sample_count for r in manifest.rows)
            if row_total != manifest.total:
                raise ValidationError(
                    f"manifest rows sum to {row_total}, total says {manifest.total}"
                )
            count = 1
        except (ValidationError, json.JSONDecodeError) as exc:
            click.echo(f"{path}: {exc}", err=True)
            errors += 1
    else:
        checker = checkers[schema]
        for lineno, row in iter_jsonl(path):
            count += 1
            try:
                checker(row)
            except ValidationError as exc:
                click.echo(f"{path}:{lineno}: {exc}", err=True)
                errors += 1
    if errors:
        fail(EXIT_VALIDATION, f"{errors} invalid of {count} checked")
    log("validated", path=str(path), schema=schema, checked=count)


@main.command(name="eval")
@click.option("--task", type=click.Choice(["caption", "vqa", "grounding", "phrase-grounding"]),
              required=True)
@click.option("--references", "references_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--predictions", "predictions_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--dataset-id", type=str, default="dataset")
@click.option("--threshold", type=float, default=0.5, show_default=True,
              help="IoU threshold for grounding accuracy.")
@click.option("--out", "out_path", type=str, default=None, help="Report JSON path.")
def eval_cmd(task, references_path, predictions_path, dataset_id, threshold, out_path):
    """Score a prediction file against references; prints the table."""
    try:
        predictions = load_predictions(predictions_path)
        if task == "caption":
            corpus = load_caption_corpus(references_path, predictions)
            report = caption_report(dataset_id, corpus)
        elif task == "vqa":
            report = vqa_report(dataset_id, load_vqa_items(references_path, predictions))
        elif task == "grounding":
            report = grounding_report(
                dataset_id, load_grounding_items(references_path, predictions), threshold
            )
        else:
            report = phrase_grounding_report(
                dataset_id, load_phrase_items(references_path, predictions), threshold
            )
    except ValidationError as exc:
        fail(EXIT_VALIDATION, str(exc))
    click.echo(render_table(report))
    if out_path:
        out = Path(out_path)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(report.to_dict(), indent=2, ensure_ascii=False) + "\n",
                       encoding="utf-8")
        log("report-written", path=str(out))


@main.command()
@click.option("--config", "config_path", type=str, default=None)
@click.option("--references", "references_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--predictions", "predictions_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", type=str, default=None)
def judge(config_path, references_path, predictions_path, seed, out_dir):
    """Run the two-prompt caption judge against the configured endpoint."""
    from .judge import EndpointConfig, judge_corpus

    try:
        config = load_config(config_path)
        judge_config = config.get("judge") or {}
        if "endpoint_url" not in judge_config or "model" not in judge_config:
            raise ConfigError("judge config needs endpoint_url and model")
        api_key = None
        if judge_config.get("api_key_env"):
            api_key = os.environ.get(judge_config["api_key_env"])
        endpoint = EndpointConfig(
            url=judge_config["endpoint_url"],
            model=judge_config["model"],
            temperature=float(judge_config.get("temperature", 0.0)),
            max_retries=int(judge_config.get("max_retries", 3)),
            timeout_seconds=float(judge_config.get("timeout_seconds", 30.0)),
            requests_per_second=judge_config.get("requests_per_second"),
            max_in_flight=int(judge_config.get("max_in_flight", 4)),
            api_key=api_key,
        )
        prompt_templates = None
        if judge_config.get("prompt_files"):
            prompt_templates = {
                int(variant): config.resolve(path).read_text(encoding="utf-8").strip()
                for variant, path in judge_config["prompt_files"].items()
            }
        items = load_judge_items(references_path, load_predictions(predictions_path))
        out = Path(out_dir) if out_dir else config.resolve(config.get("output_dir", "out"))
        out.mkdir(parents=True, exist_ok=True)
        run_seed = seed if seed is not None else int(config.get("seed", 0))
        summary = judge_corpus(items, endpoint, run_seed, out / "judge_verdicts.jsonl",
                               prompt_templates=prompt_templates)
        (out / "judge_summary.json").write_text(
            json.dumps(summary, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
        )
    except ConfigError as exc:
        fail(EXIT_CONFIG, str(exc))
    except ForgeError as exc:
        fail(EXIT_VALIDATION, str(exc))
    for variant, scores in summary["variants"].items():
        log("judge-accuracy", variant=variant, accuracy=f"{scores['accuracy']:.4f}",
            unparseable_rate=f"{scores['unparseable_rate']:.4f}")


@main.command()
@click.option("--config", "config_path", type=str, default=None)
@click.option("--corpus", "corpus_path", type=str, default=None,
              help="Sample JSONL to review (default: <output_dir>/corpus.samples.jsonl).")
@click.option("--log", "log_path", type=str, default=None,
              help="Decision log path (default: <output_dir>/decisions.jsonl).")
@click.option("--host", type=str, default=None)
@click.option("--port", type=int, default=None)
def serve(config_path, corpus_path, log_path, host, port):
    """Serve the review API (and UI, when built) over HTTP."""
    import uvicorn

    from .service import ReviewStore, ServiceSettings, create_app

    try:
        config = load_config(config_path)
        serve_config = config.get("serve", {})
        out = config.resolve(config.get("output_dir", "out"))
        corpus = Path(corpus_path) if corpus_path else (
            config.resolve(serve_config.get("corpus")) or out / "corpus.samples.jsonl"
        )
        if not corpus.is_file():
            raise ConfigError(f"corpus file {corpus} does not exist (run build first)")
        decisions = Path(log_path) if log_path else (
            config.resolve(serve_config.get("decision_log")) or out / "decisions.jsonl"
        )
        store = ReviewStore.from_corpus_file(corpus, decisions)
        settings = ServiceSettings(
            auth_token=serve_config.get("auth_token"),
            media_root=config.resolve(serve_config.get("media_root")),
            ui_dir=config.resolve(serve_config.get("ui_dir")),
            media_placeholder=config.get("media_placeholder", "<Img><ImageHere></Img>"),
        )
        app = create_app(store, settings)
    except ConfigError as exc:
        fail(EXIT_CONFIG, str(exc))
    except (ValidationError, OSError) as exc:
        fail(EXIT_VALIDATION, str(exc))
    bind_host = host or serve_config.get("host", "127.0.0.1")
    bind_port = port or int(serve_config.get("port", 8321))
    log("serving", host=bind_host, port=bind_port, samples=len(store),
        decision_log=str(decisions))
    uvicorn.run(app, host=bind_host, port=bind_port, log_level="warning")


if __name__ == "__main__":
    main()
