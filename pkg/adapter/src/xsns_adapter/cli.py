"""Command-line extraction driver.

Exit codes follow the toolkit convention: 0 success, 1 domain error,
2 missing input or usage error, 3 unexpected internal failure.
"""

from __future__ import annotations

import functools
from pathlib import Path

import click

from . import checkpoint as checkpoint_mod
from . import extract, formats
from .jobs import (
    AdapterError,
    ExtractionJob,
    job_output_path,
    load_corpus,
    parse_seeds,
    read_config,
    sample_sentences,
)


def _fail(code: int, message: str) -> None:
    click.echo(f"xsns-adapter: error: {message}", err=True)
    raise SystemExit(code)


def _guarded(f):
    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except AdapterError as exc:
            _fail(1, str(exc))
        except FileNotFoundError as exc:
            _fail(2, f"missing input: {exc}")
        except (click.ClickException, click.exceptions.Exit, SystemExit):
            raise
        except Exception as exc:  # pragma: no cover - catch-all guard
            _fail(3, f"internal error: {type(exc).__name__}: {exc}")

    return wrapper


def _setting(ctx, flag_value, key, default, cast=str):
    """Resolution order: explicit flag, then config file, then default."""
    if flag_value is not None:
        return flag_value
    raw = (ctx.obj or {}).get(key)
    if raw is None:
        return default
    try:
        return cast(raw)
    except (TypeError, ValueError):
        raise AdapterError(f"bad value {raw!r} for config key {key!r}") from None


@click.group()
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="key=value defaults applied beneath explicit flags.",
)
@click.pass_context
@_guarded
def main(ctx, config_path):
    """Extract gradient dumps and language embeddings from checkpoints."""
    ctx.obj = read_config(config_path) if config_path else {}


@main.command("make-checkpoint")
@click.argument("destination", type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--hidden-size", type=int, default=32, show_default=True)
@click.option("--layers", type=int, default=2, show_default=True)
@click.option("--heads", type=int, default=4, show_default=True)
@click.option("--intermediate", type=int, default=64, show_default=True)
@click.option("--max-positions", type=int, default=128, show_default=True)
@_guarded
def make_checkpoint_cmd(destination, seed, hidden_size, layers, heads,
                        intermediate, max_positions):
    """Write a small random-weight fixture checkpoint for local runs."""
    try:
        path = checkpoint_mod.build_checkpoint(
            destination,
            seed=seed,
            hidden_size=hidden_size,
            num_layers=layers,
            num_heads=heads,
            intermediate_size=intermediate,
            max_positions=max_positions,
        )
    except ValueError as exc:
        raise AdapterError(str(exc)) from None
    click.echo(
        f"wrote checkpoint {path} "
        f"(hidden {hidden_size}, layers {layers}, heads {heads})"
    )


@main.command("fisher")
@click.argument("corpus", type=click.Path(exists=True, dir_okay=False))
@click.option("--model", "model_path", default=None,
              help="Checkpoint directory or identifier.")
@click.option("--language", default=None, help="Code recorded in the dumps.")
@click.option("--objective",
              type=click.Choice(formats.OBJECTIVES), default=None)
@click.option("--corpus-tag",
              type=click.Choice(formats.CORPUS_TAGS), default=None)
@click.option("--seeds", "seeds_text", default=None,
              help="Comma-separated; one dump per seed.")
@click.option("--sample-size", type=int, default=None)
@click.option("--max-length", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--loop", "use_loop", is_flag=True,
              help="One sentence per forward pass instead of padded batches.")
@click.option("--model-label", default=None,
              help="Overrides the derived model identity string.")
@click.option("--out-dir", type=click.Path(file_okay=False), default=None)
@click.pass_context
@_guarded
def fisher_cmd(ctx, corpus, model_path, language, objective, corpus_tag,
               seeds_text, sample_size, max_length, batch_size, use_loop,
               model_label, out_dir):
    """Average squared per-sentence gradients into one dump per seed."""
    model_path = _setting(ctx, model_path, "model", None)
    if not model_path:
        raise AdapterError("no model given (use --model or config key model=)")
    if not language:
        raise AdapterError("'--language' is required")
    objective = _setting(ctx, objective, "objective", "lm_masked")
    corpus_tag = _setting(ctx, corpus_tag, "corpus_tag", "task_corpus")
    seeds = parse_seeds(_setting(ctx, seeds_text, "seeds", "0,1,2"))
    sample_size = _setting(ctx, sample_size, "sample_size", 1024, int)
    max_length = _setting(ctx, max_length, "max_length", 256, int)
    batch_size = _setting(ctx, batch_size, "batch_size", 16, int)
    model_label = _setting(ctx, model_label, "model_label", None)
    out_dir = Path(_setting(ctx, out_dir, "out_dir", "."))
    out_dir.mkdir(parents=True, exist_ok=True)

    warn = lambda message: click.echo(f"warning: {message}", err=True)
    for seed in seeds:
        job = ExtractionJob(
            model=str(model_path),
            corpus=str(corpus),
            language=language,
            output=str(job_output_path(out_dir, language, objective, seed)),
            objective=objective,
            corpus_tag=corpus_tag,
            sample_size=sample_size,
            seed=seed,
            max_length=max_length,
            batch_size=batch_size,
            model_label=model_label,
        )
        dest = extract.run_fisher_job(
            job, method="loop" if use_loop else "batched", warn=warn
        )
        click.echo(f"wrote {dest} ({sample_size} examples)")


@main.command("embed")
@click.argument("corpora", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@click.option("--model", "model_path", default=None,
              help="Checkpoint directory or identifier.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--sample-size", type=int, default=None)
@click.option("--max-length", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--model-label", default=None)
@click.option("-o", "--output", type=click.Path(dir_okay=False),
              default="emb_vectors.txt", show_default=True)
@click.pass_context
@_guarded
def embed_cmd(ctx, corpora, model_path, seed, sample_size, max_length,
              batch_size, model_label, output):
    """Pool final hidden states into one vector per corpus.

    Language codes come from the corpus file stems.
    """
    model_path = _setting(ctx, model_path, "model", None)
    if not model_path:
        raise AdapterError("no model given (use --model or config key model=)")
    sample_size = _setting(ctx, sample_size, "sample_size", 1024, int)
    max_length = _setting(ctx, max_length, "max_length", 256, int)
    batch_size = _setting(ctx, batch_size, "batch_size", 16, int)
    model_label = _setting(ctx, model_label, "model_label", None)

    codes = [Path(path).stem for path in corpora]
    if len(set(codes)) != len(codes):
        raise AdapterError("duplicate language codes among corpus stems")

    model, tokenizer = extract.load_model(str(model_path))
    warn = lambda message: click.echo(f"warning: {message}", err=True)
    items = []
    for code, path in zip(codes, corpora):
        picked = sample_sentences(load_corpus(path), sample_size, seed, warn=warn)
        vector = extract.extract_embeddings(
            model, tokenizer, picked,
            max_length=max_length, batch_size=batch_size,
        )
        items.append((code, vector))

    model_id = extract.derived_model_id(model.config, max_length, model_label)
    formats.write_language_vectors(
        output,
        items,
        metadata=(
            f"model_id={model_id}",
            f"pooling={extract.POOLING_NOTE}",
            f"sample_size={sample_size} seed={seed}",
        ),
    )
    dim = len(items[0][1])
    click.echo(f"wrote {output} ({len(items)} languages, dim {dim})")
