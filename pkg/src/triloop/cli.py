"""Command-line front end.

Every subcommand is deterministic given its flags and seed: identical
invocations produce identical output bytes.  Diagnostics go to standard
error only.  Exit codes: 0 on success, 1 on I/O failure, 2 on
validation failure.

Examples::

    triloop transform --input seed.jsonl --output tasks.jsonl
    triloop score --input pairs.jsonl --output scored.jsonl
    triloop filter --input scored.jsonl --retained keep.jsonl --top 0.2
    triloop stats --input seed.jsonl --field both
    triloop synth run --rounds 3 --seed 0
    triloop loop --seed-data seed.jsonl --manifest images.txt \
        --model table:mock.jsonl --out-dir out/
"""

from __future__ import annotations

import functools
import json
import logging
import os
import sys
from pathlib import Path

import click

from . import consistency, refine, taskgen
from .errors import ConfigError, TriloopError
from .metrics import diversity_report
from .models import HttpModel, TableModel
from .providers import ServiceEmbeddingProvider
from .records import read_triplets, write_triplets
from .similarity import SimilarityBackend, lexical_backend, provider_backend
from .synthlab import SynthConfig, self_refine
from .taskgen import MaskRatios

SERVICE_URL_ENV = "TRILOOP_EMBED_URL"

logging.basicConfig(level=logging.WARNING, stream=sys.stderr, format="%(levelname)s %(message)s")


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def guarded(fn):
    """Map exceptions to the exit-code contract."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except OSError as e:
            _fail(1, str(e))
        except TriloopError as e:
            # errors caused by unreadable files count as I/O failures
            code = 1 if isinstance(e.__cause__, OSError) else 2
            _fail(code, str(e))

    return wrapper


def _parse_ratios(text: str) -> MaskRatios:
    parts = text.split(",")
    if len(parts) != 3:
        raise click.BadParameter("expected three comma-separated fractions")
    try:
        values = tuple(float(p) for p in parts)
    except ValueError as e:
        raise click.BadParameter(str(e)) from e
    return MaskRatios(*values)


def _resolve_backend(name: str, service_url: str | None) -> SimilarityBackend:
    if name == "lexical":
        return lexical_backend()
    url = service_url or os.environ.get(SERVICE_URL_ENV)
    if not url:
        raise click.BadParameter(
            f"--text-backend service needs --service-url or ${SERVICE_URL_ENV}"
        )
    return provider_backend(ServiceEmbeddingProvider(url), name="service")


@click.group()
@click.version_option(package_name="triloop")
def main() -> None:
    """Consistency-filtered data curation tools."""


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(path_type=Path))
@click.option("--output", "output_path", required=True, type=click.Path(path_type=Path))
@click.option("--ratios", default="0.5,0.2,0.3", show_default=True,
              help="Fractions for pair/question/answer masking.")
@click.option("--seed", default=42, show_default=True)
@guarded
def transform(input_path: Path, output_path: Path, ratios: str, seed: int) -> None:
    """Turn a seed dataset into the three-task training corpus."""
    mask_ratios = _parse_ratios(ratios)
    with open(input_path, encoding="utf-8") as fh:
        triplets = read_triplets(fh)
    tasks = taskgen.build_tasks(triplets, mask_ratios, seed)
    with open(output_path, "w", encoding="utf-8") as fh:
        n = taskgen.write_tasks(tasks, fh)
    click.echo(f"wrote {n} task records to {output_path}", err=True)


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(path_type=Path),
              help="JSONL records carrying q_prime and a_prime fields.")
@click.option("--output", "output_path", required=True, type=click.Path(path_type=Path))
@click.option("--text-backend", type=click.Choice(["lexical", "service"]),
              default="lexical", show_default=True)
@click.option("--service-url", default=None, help=f"Overrides ${SERVICE_URL_ENV}.")
@click.option("--workers", default=1, show_default=True)
@click.option("--seed", default=42, show_default=True)
@guarded
def score(input_path: Path, output_path: Path, text_backend: str,
          service_url: str | None, workers: int, seed: int) -> None:
    """Score reconstruction agreement for each record."""
    backend = _resolve_backend(text_backend, service_url)
    with open(input_path, encoding="utf-8") as fh:
        pairs = consistency.read_pairs(fh)
    scored = consistency.score_records(pairs, backend, workers=workers)
    with open(output_path, "w", encoding="utf-8") as fh:
        n = consistency.write_scored(consistency.canonical_order(scored), fh)
    click.echo(f"scored {n} records to {output_path}", err=True)


@main.command(name="filter")
@click.option("--input", "input_path", required=True, type=click.Path(path_type=Path))
@click.option("--retained", "retained_path", required=True, type=click.Path(path_type=Path))
@click.option("--excluded", "excluded_path", default=None, type=click.Path(path_type=Path))
@click.option("--top", default=0.2, show_default=True, help="Fraction to retain.")
@click.option("--per-type/--global", "per_type", default=True, show_default=True)
@guarded
def filter_cmd(input_path: Path, retained_path: Path, excluded_path: Path | None,
               top: float, per_type: bool) -> None:
    """Keep the best-scoring fraction of a scored file."""
    with open(input_path, encoding="utf-8") as fh:
        scored = consistency.read_scored(fh)
    retained, excluded = consistency.filter_top(scored, top, per_type)
    with open(retained_path, "w", encoding="utf-8") as fh:
        consistency.write_scored(retained, fh)
    if excluded_path is not None:
        with open(excluded_path, "w", encoding="utf-8") as fh:
            consistency.write_scored(excluded, fh)
    click.echo(f"retained {len(retained)} of {len(scored)} records", err=True)


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(path_type=Path))
@click.option("--field", type=click.Choice(["question", "answer", "both"]),
              default="both", show_default=True)
@guarded
def stats(input_path: Path, field: str) -> None:
    """Print corpus diversity statistics as one JSON object."""
    with open(input_path, encoding="utf-8") as fh:
        triplets = read_triplets(fh)
    click.echo(diversity_report(triplets, field).to_json())


@main.group()
def synth() -> None:
    """Synthetic self-training experiment."""


def _synth_overrides(**kwargs) -> dict:
    return {k: v for k, v in kwargs.items() if v is not None}


@synth.command(name="run")
@click.option("--config", "config_path", default=None, type=click.Path(path_type=Path),
              help="JSON file with config fields; flags override it.")
@click.option("--d", type=int, default=None)
@click.option("--n-lab", type=int, default=None)
@click.option("--n-unl", type=int, default=None)
@click.option("--n-test", type=int, default=None)
@click.option("--x-scale", type=float, default=None)
@click.option("--noise-scale", type=float, default=None)
@click.option("--hidden", default=None, help="Comma-separated layer widths.")
@click.option("--lr", type=float, default=None)
@click.option("--batch", type=int, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--keep-frac", type=float, default=None)
@click.option("--rounds", type=int, default=None)
@click.option("--seed", "rng_seed", type=int, default=None)
@click.option("--nll-reduction", type=click.Choice(["mean", "sum"]), default=None)
@click.option("--relabel/--no-relabel", default=None)
@click.option("--warm-start/--no-warm-start", default=None)
@guarded
def synth_run(config_path: Path | None, hidden: str | None, **kwargs) -> None:
    """Run the experiment, emitting one JSON line per round."""
    base: dict = {}
    if config_path is not None:
        with open(config_path, encoding="utf-8") as fh:
            try:
                base = json.load(fh)
            except json.JSONDecodeError as e:
                raise ConfigError(f"config file is not valid JSON: {e.msg}") from e
        if not isinstance(base, dict):
            raise ConfigError("config file must hold a JSON object")
    overrides = _synth_overrides(**kwargs)
    if hidden is not None:
        overrides["hidden"] = tuple(int(w) for w in hidden.split(","))
    config = SynthConfig.from_dict({**base, **overrides})

    def emit(round_index: int, metrics) -> None:
        click.echo(json.dumps({"round": round_index, **metrics.to_dict()}))

    self_refine(config, on_round=emit)


@main.command()
@click.option("--seed-data", "seed_data", required=True, type=click.Path(path_type=Path))
@click.option("--manifest", required=True, type=click.Path(path_type=Path))
@click.option("--out-dir", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--model", "model_spec", required=True,
              help="table:PATH for a mock table, http:URL for a remote endpoint.")
@click.option("--rounds", default=1, show_default=True)
@click.option("--top", default=0.2, show_default=True)
@click.option("--per-type/--global", "per_type", default=True, show_default=True)
@click.option("--exact", is_flag=True, default=False,
              help="Keep only literal question and answer agreement.")
@click.option("--text-backend", type=click.Choice(["lexical", "service"]),
              default="lexical", show_default=True)
@click.option("--service-url", default=None)
@click.option("--workers", default=refine.DEFAULT_IN_FLIGHT, show_default=True)
@click.option("--seed", default=42, show_default=True)
@guarded
def loop(seed_data: Path, manifest: Path, out_dir: Path, model_spec: str, rounds: int,
         top: float, per_type: bool, exact: bool, text_backend: str,
         service_url: str | None, workers: int, seed: int) -> None:
    """Run refinement rounds, writing per-round outputs to a directory."""
    backend = _resolve_backend(text_backend, service_url)
    config = refine.LoopConfig(
        seed_dataset=seed_data,
        unlabeled_manifest=manifest,
        rounds=rounds,
        filter_fraction=top,
        per_type=per_type,
        seed=seed,
        workers=workers,
        exact=exact,
    )

    if model_spec.startswith("table:"):
        with open(model_spec[len("table:"):], encoding="utf-8") as fh:
            model = TableModel.from_jsonl(fh)
    elif model_spec.startswith("http:") or model_spec.startswith("https:"):
        model = HttpModel(model_spec, seed=seed)
    else:
        raise click.BadParameter("--model must be table:PATH or an http(s) URL")

    out_dir.mkdir(parents=True, exist_ok=True)

    def save(k: int, filtered, merged, report) -> None:
        with open(out_dir / f"filtered-round{k}.jsonl", "w", encoding="utf-8") as fh:
            consistency.write_scored(filtered, fh)
        with open(out_dir / f"merged-round{k}.jsonl", "w", encoding="utf-8") as fh:
            write_triplets(merged, fh)
        with open(out_dir / f"report-round{k}.json", "w", encoding="utf-8") as fh:
            fh.write(report.to_json() + "\n")
        click.echo(report.to_json())

    refine.iterate(lambda k: model, config, backend, on_round=save)


if __name__ == "__main__":
    main()
