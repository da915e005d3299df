"""Command-line surface for the toolkit.

Exit codes are a stable contract: 0 success, 1 validation failure,
2 missing input, 3 internal error. Every CSV output embeds the resolved
run configuration and FNV-1a digests of its inputs, so runs can be audited
and reproduced from the artifacts alone.
"""
from __future__ import annotations

import functools
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import click
import numpy as np

from . import baselines, evalrank, refmodel, subnet, tensorstore
from . import regress as regress_mod
from .errors import LayoutMismatchError, ValidationError, XsnsError
from .fisher import accumulate_stream


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class RunConfig:
    p: float = subnet.DEFAULT_P
    sample_size: int = 1024
    seeds: tuple[int, ...] = (0, 1, 2)
    k: int = evalrank.DEFAULT_K
    objective: str = "lm_masked"
    corpus_tag: str = "task_corpus"
    out_dir: str = "."

    def validate(self) -> None:
        if not (0.0 < self.p <= 1.0):
            raise ValidationError(f"p={self.p} outside (0, 1]")
        if self.sample_size < 1:
            raise ValidationError("sample_size must be >= 1")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ValidationError("seeds must be a nonempty set of distinct ints")
        if self.k < 1:
            raise ValidationError("k must be >= 1")
        if self.objective not in tensorstore.OBJECTIVES:
            raise ValidationError(f"unknown objective {self.objective!r}")
        if self.corpus_tag not in tensorstore.CORPUS_TAGS:
            raise ValidationError(f"unknown corpus_tag {self.corpus_tag!r}")

    def describe(self) -> str:
        seeds = ",".join(str(s) for s in self.seeds)
        return (
            f"config: p={self.p:g} sample_size={self.sample_size} "
            f"seeds={seeds} k={self.k} objective={self.objective} "
            f"corpus_tag={self.corpus_tag}"
        )

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        """key=value lines; '#' starts a comment; seeds are comma-separated."""
        values: dict = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValidationError(f"{path}:{lineno}: expected key=value")
                key, _, value = (part.strip() for part in line.partition("="))
                if key == "p":
                    values[key] = float(value)
                elif key in ("sample_size", "k"):
                    values[key] = int(value)
                elif key == "seeds":
                    values[key] = _parse_seeds(value)
                elif key in ("objective", "corpus_tag", "out_dir"):
                    values[key] = value
                else:
                    raise ValidationError(f"{path}:{lineno}: unknown key {key!r}")
        config = cls(**values)
        config.validate()
        return config


def _parse_seeds(text: str | None) -> tuple[int, ...] | None:
    if text is None:
        return None
    try:
        return tuple(int(part) for part in text.split(",") if part.strip() != "")
    except ValueError:
        raise ValidationError(f"seeds must be comma-separated ints, got {text!r}") from None


def _resolved(config: RunConfig, **overrides) -> RunConfig:
    actual = {key: value for key, value in overrides.items() if value is not None}
    config = replace(config, **actual)
    config.validate()
    return config


# ---------------------------------------------------------------------------
# plumbing


def _fail(code: int, message: str) -> None:
    click.echo(f"xsns: error: {message}", err=True)
    sys.exit(code)


def _guarded(fn):
    """Map exceptions onto the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except FileNotFoundError as exc:
            _fail(2, f"missing input: {exc}")
        except XsnsError as exc:
            _fail(1, str(exc))
        except Exception as exc:  # anything else is a bug, not user error
            _fail(3, f"internal error: {type(exc).__name__}: {exc}")

    return wrapper


def _input_notes(paths) -> list[str]:
    notes = []
    for path in paths:
        digest = tensorstore.fnv1a_64(Path(path).read_bytes())
        notes.append(f"input {Path(path).name} fnv1a=0x{digest:016x}")
    return notes


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _model_options(fn):
    for deco in (
        click.option("--model-seed", type=int, default=0, show_default=True,
                     help="reference-model weight initialization seed"),
        click.option("--hidden-dim", type=int, default=32, show_default=True),
        click.option("--embed-dim", type=int, default=16, show_default=True),
        click.option("--vocab-size", type=int, default=64, show_default=True),
    ):
        fn = deco(fn)
    return fn


def _build_model(vocab_size, embed_dim, hidden_dim, model_seed) -> refmodel.ToyModel:
    return refmodel.ToyModel(
        vocab_size=vocab_size,
        embed_dim=embed_dim,
        hidden_dim=hidden_dim,
        rng_seed=model_seed,
    )


def _sample(sentences, size: int, seed: int):
    """Uniform sample of `size` sentences; falls back to sampling with
    replacement (with a warning) when the corpus is too small."""
    rng = np.random.default_rng([seed, len(sentences)])
    if size <= len(sentences):
        idx = rng.choice(len(sentences), size=size, replace=False)
    else:
        click.echo(
            f"warning: corpus has {len(sentences)} sentences, fewer than "
            f"sample size {size}; sampling with replacement",
            err=True,
        )
        idx = rng.choice(len(sentences), size=size, replace=True)
    return [sentences[int(i)] for i in idx]


def _language_dumps(model, language, sentences, config, sample_size):
    dumps = []
    for seed in config.seeds:
        sample = _sample(sentences, sample_size, seed)
        dumps.append(
            refmodel.compute_fisher_dump(
                model,
                language,
                sample,
                objective=config.objective,
                corpus_tag=config.corpus_tag,
                seed=seed,
            )
        )
    return dumps


def _parse_pairs(items) -> list[tuple[str, Path]]:
    pairs = []
    for item in items:
        code, sep, path = item.partition("=")
        if not sep or not code or not path:
            raise ValidationError(
                f"expected CODE=PATH, got {item!r}"
            )
        pairs.append((code, Path(path)))
    codes = [code for code, _ in pairs]
    if len(set(codes)) != len(codes):
        raise ValidationError("duplicate language codes in corpus list")
    return pairs


def _read_lines(path) -> list[str]:
    with open(path, "r", encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh if line.strip()]


def _matrix_from_dump_dir(path: Path, p: float) -> tensorstore.SimilarityMatrix:
    files = sorted(path.glob("*.fgrd"))
    if len(files) < 2:
        raise ValidationError(f"need >= 2 dumps in {path}, found {len(files)}")
    dumps = [(f, tensorstore.load_dump(f)) for f in files]
    reference = dumps[0][1].manifest.layout_hash
    offending = [str(f) for f, d in dumps[1:] if d.manifest.layout_hash != reference]
    if offending:
        raise LayoutMismatchError(
            f"parameter layout differs from {dumps[0][0]}: " + ", ".join(offending)
        )
    return subnet.similarity_matrix([subnet.build_mask(d, p) for _, d in dumps])


# ---------------------------------------------------------------------------
# command group


@click.group(name="xsns")
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="key=value file with run defaults (flags still win)",
)
@click.pass_context
@_guarded
def main(ctx, config_path):
    """Cross-lingual sub-network similarity toolkit.

    Extracts per-parameter importance from gradients, derives top-share
    masks per language, scores language pairs by mask overlap and evaluates
    the resulting source rankings against gold transfer results.
    """
    ctx.obj = RunConfig.from_file(config_path) if config_path else RunConfig()


@main.command()
@click.argument("corpus", type=click.Path(exists=True, dir_okay=False))
@click.option("--language", default=None,
              help="language code stamped into the dumps (token corpora only)")
@click.option("--sample-size", type=int, default=None)
@click.option("--seeds", default=None, help="comma-separated extraction seeds")
@click.option("--objective", type=click.Choice(tensorstore.OBJECTIVES), default=None)
@click.option("--corpus-tag", type=click.Choice(tensorstore.CORPUS_TAGS), default=None)
@click.option("--out-dir", type=click.Path(file_okay=False), default=None)
@_model_options
@click.pass_obj
@_guarded
def fisher(config, corpus, language, sample_size, seeds, objective, corpus_tag,
           out_dir, vocab_size, embed_dim, hidden_dim, model_seed):
    """Extract importance dumps from a token corpus or a gradient stream.

    A token corpus (one sentence of integer ids per line) is run through
    the built-in reference model, one dump per seed. A per-example gradient
    stream file (detected by its magic) is accumulated as-is.
    """
    config = _resolved(
        config,
        sample_size=sample_size,
        seeds=_parse_seeds(seeds),
        objective=objective,
        corpus_tag=corpus_tag,
        out_dir=out_dir,
    )
    out = _out_dir(config)
    with open(corpus, "rb") as fh:
        magic = fh.read(4)
    if magic == tensorstore.MAGIC_STREAM:
        with open(corpus, "rb") as fh:
            dump = accumulate_stream(fh).finalize()
        dest = out / f"{dump.language}_{dump.objective}_s{dump.seed}.fgrd"
        tensorstore.save_dump(dump, dest)
        click.echo(f"wrote {dest} (examples: {dump.example_count})")
        return
    if not language:
        raise ValidationError("--language is required for token corpora")
    sentences = refmodel.read_token_corpus(corpus)
    model = _build_model(vocab_size, embed_dim, hidden_dim, model_seed)
    for dump in _language_dumps(model, language, sentences, config,
                                config.sample_size):
        dest = out / f"{language}_{config.objective}_s{dump.seed}.fgrd"
        tensorstore.save_dump(dump, dest)
        click.echo(f"wrote {dest} (examples: {dump.example_count})")


@main.command()
@click.argument("dumps", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@click.option("--p", type=float, default=None,
              help="selected share of parameters, in (0, 1]")
@click.option("--out-dir", type=click.Path(file_okay=False), default=None)
@click.pass_obj
@_guarded
def mask(config, dumps, p, out_dir):
    """Build top-share parameter masks from importance dumps."""
    config = _resolved(config, p=p, out_dir=out_dir)
    out = _out_dir(config)
    for path in dumps:
        dump = tensorstore.load_dump(path)
        net = subnet.build_mask(dump, config.p)
        dest = out / f"{Path(path).stem}_p{config.p:g}.fmsk"
        tensorstore.save_mask(net.mask, dest)
        click.echo(
            f"wrote {dest} (selected {net.mask.k_selected} of "
            f"{net.mask.total_params})"
        )


@main.command()
@click.argument("files", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@click.option("--p", type=float, default=None,
              help="selected share for files that are dumps, not masks")
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None)
@click.pass_obj
@_guarded
def sim(config, files, p, output):
    """Seed-averaged pairwise overlap matrix from dumps or prebuilt masks."""
    config = _resolved(config, p=p)
    nets = []
    model_ids = set()
    for path in files:
        with open(path, "rb") as fh:
            magic = fh.read(4)
        if magic == tensorstore.MAGIC_MASK:
            loaded = tensorstore.load_mask(path)
            nets.append(subnet.SubNetwork(mask=loaded, language=loaded.language))
        else:
            dump = tensorstore.load_dump(path)
            model_ids.add(dump.manifest.model_id)
            nets.append(subnet.build_mask(dump, config.p))
    matrix = subnet.similarity_matrix(nets)
    notes = [config.describe(), *_input_notes(files)]
    if model_ids:
        notes.append("model_id=" + ";".join(sorted(model_ids)))
    dest = Path(output) if output else _out_dir(config) / "xsns_matrix.csv"
    tensorstore.save_matrix(matrix, dest, extra_metadata=notes)
    click.echo(f"wrote {dest} ({len(matrix.languages)} languages)")


@main.command()
@click.argument("source", type=click.Path(exists=True))
@click.option("--target", required=True, help="target language code")
@click.option("--top", type=int, default=None,
              help="print only the best N sources (multi-source shortlist)")
@click.option("--p", type=float, default=None)
@click.option("--include-self", is_flag=True,
              help="keep the target in its own candidate pool")
@click.pass_obj
@_guarded
def rank(config, source, target, top, p, include_self):
    """Rank candidate source languages for a target.

    SOURCE is either a directory of importance dumps (the matrix is built
    on the fly) or an existing similarity-matrix CSV.
    """
    config = _resolved(config, p=p)
    path = Path(source)
    if path.is_dir():
        matrix = _matrix_from_dump_dir(path, config.p)
    else:
        matrix = tensorstore.load_matrix(path)
    ranking = evalrank.rank_sources(target, matrix, include_self=include_self)
    rows = list(zip(ranking.ordered_sources, ranking.predicted_scores))
    if top is not None:
        if top < 1:
            raise ValidationError("--top must be >= 1")
        rows = rows[:top]
    width = max(len(code) for code, _ in rows)
    click.echo(f"target: {target} (method: {matrix.method}, higher is better)")
    for position, (code, score) in enumerate(rows, 1):
        click.echo(f"{position:>3}  {code.ljust(width)}  {score:.6f}")


# ---------------------------------------------------------------------------
# baselines


@main.group()
def baseline():
    """Comparison methods producing similarity matrices."""


def _save_baseline_matrix(config, matrix, output, default_name, inputs):
    notes = [config.describe(), *_input_notes(inputs)]
    dest = Path(output) if output else _out_dir(config) / default_name
    tensorstore.save_matrix(matrix, dest, extra_metadata=notes)
    click.echo(f"wrote {dest} ({len(matrix.languages)} languages)")


@baseline.command("lex")
@click.argument("corpora", nargs=-1, required=True)
@click.option("--vocab", type=click.Path(exists=True, dir_okay=False), default=None,
              help="subword vocabulary, one token per line")
@click.option("--pretokenized", is_flag=True,
              help="corpora hold integer token ids instead of text")
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None)
@click.pass_obj
@_guarded
def baseline_lex(config, corpora, vocab, pretokenized, output):
    """Subword-distribution divergence. CORPORA are CODE=PATH pairs.

    Stored values are negated divergences so that, like every other
    matrix, higher means more similar.
    """
    pairs = _parse_pairs(corpora)
    if pretokenized:
        dists = [
            baselines.unigram_distribution(
                refmodel.read_token_corpus(path), language=code, vocab_id=0
            )
            for code, path in pairs
        ]
        vocab_inputs = []
    else:
        if vocab is None:
            raise ValidationError("--vocab is required unless --pretokenized")
        vocabulary = baselines.Vocabulary.load(vocab)
        dists = [
            baselines.unigram_distribution(
                _read_lines(path), vocabulary, language=code
            )
            for code, path in pairs
        ]
        vocab_inputs = [vocab]
    matrix = baselines.lex_matrix(dists)
    _save_baseline_matrix(config, matrix, output, "lex_matrix.csv",
                          [path for _, path in pairs] + vocab_inputs)


@baseline.command("sue")
@click.argument("corpora", nargs=-1, required=True)
@click.option("--vocab", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None)
@click.pass_obj
@_guarded
def baseline_sue(config, corpora, vocab, output):
    """Segmentation-evenness angle per source. CORPORA are CODE=PATH pairs.

    The score depends on the source alone, so each row repeats one value;
    stored values are negated angles (more uneven ranks higher).
    """
    pairs = _parse_pairs(corpora)
    vocabulary = baselines.Vocabulary.load(vocab)
    scores = {}
    for code, path in pairs:
        cloud = baselines.sue_point_cloud(_read_lines(path), vocabulary)
        scores[code] = baselines.sue_score(cloud)
    matrix = baselines.sue_matrix(scores)
    _save_baseline_matrix(config, matrix, output, "sue_matrix.csv",
                          [path for _, path in pairs] + [vocab])


@baseline.command("emb")
@click.argument("inputs", nargs=-1, required=True)
@click.option("--from-toy-model", is_flag=True,
              help="inputs are CODE=TOKEN_CORPUS pairs; vectors are "
                   "mean-pooled reference-model embeddings")
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None)
@_model_options
@click.pass_obj
@_guarded
def baseline_emb(config, inputs, from_toy_model, output, vocab_size, embed_dim,
                 hidden_dim, model_seed):
    """Cosine similarity of pooled embedding vectors.

    INPUTS is a single language-vector file, or CODE=PATH corpus pairs
    with --from-toy-model.
    """
    if from_toy_model:
        model = _build_model(vocab_size, embed_dim, hidden_dim, model_seed)
        pairs = _parse_pairs(inputs)
        vectors = [
            refmodel.embedding_vector(
                model, code, refmodel.read_token_corpus(path)
            )
            for code, path in pairs
        ]
        input_files = [path for _, path in pairs]
    else:
        if len(inputs) != 1:
            raise ValidationError(
                "expected exactly one language-vector file "
                "(or CODE=PATH pairs with --from-toy-model)"
            )
        vectors = baselines.read_language_vectors(inputs[0], kind="embedding")
        input_files = list(inputs)
    matrix = baselines.cosine_matrix(vectors, "emb")
    _save_baseline_matrix(config, matrix, output, "emb_matrix.csv", input_files)


@baseline.command("l2v")
@click.argument("vectors_file", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None)
@click.pass_obj
@_guarded
def baseline_l2v(config, vectors_file, output):
    """Cosine similarity of typological feature vectors."""
    vectors = baselines.read_language_vectors(vectors_file, kind="typological")
    matrix = baselines.cosine_matrix(vectors, "l2v")
    _save_baseline_matrix(config, matrix, output, "l2v_matrix.csv", [vectors_file])


# ---------------------------------------------------------------------------
# evaluation, regression, sweeps, synthetic fixtures


@main.command("eval")
@click.argument("matrices", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@click.option("--gold", required=True, type=click.Path(exists=True, dir_okay=False),
              help="gold transfer scores (task,source,target,seed,score)")
@click.option("--task", "tasks", multiple=True,
              help="task(s) to evaluate; default: every task in the gold table")
@click.option("--k", type=int, default=None)
@click.option("--include-self", is_flag=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None)
@click.pass_obj
@_guarded
def cmd_eval(config, matrices, gold, tasks, k, include_self, output):
    """Score similarity matrices against gold transfer results."""
    config = _resolved(config, k=k)
    table = evalrank.read_gold_table(gold)
    task_list = list(tasks) if tasks else table.tasks()
    reports = []
    for task in task_list:
        for matrix_path in matrices:
            matrix = tensorstore.load_matrix(matrix_path)
            reports.append(
                evalrank.evaluate(
                    matrix, table, task, config.k, include_self=include_self
                )
            )
    dest = Path(output) if output else _out_dir(config) / "eval_report.csv"
    notes = [config.describe(), *_input_notes([gold, *matrices])]
    evalrank.write_report_csv(dest, reports, notes)
    for task in task_list:
        click.echo(
            evalrank.format_report_table([r for r in reports if r.task == task])
        )
    click.echo(f"wrote {dest}")


@main.command()
@click.option("--matrix", "matrix_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--gold", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--task", required=True)
@click.option("--method", type=click.Choice(["ols", "mer", "both"]),
              default="both", show_default=True)
@click.option("--k", type=int, default=None)
@click.option("--include-self", is_flag=True)
@click.option("--out-dir", type=click.Path(file_okay=False), default=None)
@click.pass_obj
@_guarded
def regress(config, matrix_path, gold, task, method, k, include_self, out_dir):
    """Fit transfer scores from similarity and score the fitted rankings."""
    config = _resolved(config, k=k, out_dir=out_dir)
    matrix = tensorstore.load_matrix(matrix_path)
    table = evalrank.read_gold_table(gold)
    data = regress_mod.dataset_from(matrix, table, task, include_self=include_self)
    methods = ["ols", "mer"] if method == "both" else [method]
    out = _out_dir(config)
    notes = [config.describe(), f"task={task}",
             *_input_notes([matrix_path, gold])]
    for name in methods:
        fit = regress_mod.ols_fit(data) if name == "ols" else regress_mod.mer_fit(data)
        score = regress_mod.predict_and_score(fit, data, config.k)
        dest = out / f"regress_{name}.csv"
        regress_mod.write_fit_summary(dest, fit, score, notes)
        click.echo(regress_mod.format_fit_summary(fit, score))
        click.echo(f"wrote {dest}")


@main.command()
@click.option("--axis", type=click.Choice(["p", "sample_size"]), required=True)
@click.option("--values", required=True, help="comma-separated axis values")
@click.option("--corpus-dir", required=True,
              type=click.Path(exists=True, file_okay=False),
              help="directory of CODE.txt token corpora")
@click.option("--gold", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--task", "tasks", multiple=True)
@click.option("--sample-size", type=int, default=None)
@click.option("--seeds", default=None)
@click.option("--p", type=float, default=None)
@click.option("--k", type=int, default=None)
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None)
@_model_options
@click.pass_obj
@_guarded
def sweep(config, axis, values, corpus_dir, gold, tasks, sample_size, seeds, p,
          k, output, vocab_size, embed_dim, hidden_dim, model_seed):
    """Ranking-quality curve along one hyperparameter axis.

    Holds everything else at the resolved config and reports mean NDCG@k
    per axis value per task.
    """
    config = _resolved(config, sample_size=sample_size,
                       seeds=_parse_seeds(seeds), p=p, k=k)
    table = evalrank.read_gold_table(gold)
    task_list = list(tasks) if tasks else table.tasks()
    corpus_files = sorted(Path(corpus_dir).glob("*.txt"))
    corpora = {path.stem: refmodel.read_token_corpus(path) for path in corpus_files}
    if len(corpora) < 2:
        raise ValidationError(
            f"need >= 2 corpora in {corpus_dir}, found {len(corpora)}"
        )
    model = _build_model(vocab_size, embed_dim, hidden_dim, model_seed)

    if axis == "p":
        axis_values = [float(v) for v in values.split(",")]
        dumps = {
            code: _language_dumps(model, code, sents, config, config.sample_size)
            for code, sents in corpora.items()
        }
        matrices = []
        for value in axis_values:
            nets = [
                subnet.build_mask(dump, value)
                for per_language in dumps.values()
                for dump in per_language
            ]
            matrices.append((value, subnet.similarity_matrix(nets)))
    else:
        axis_values = [int(v) for v in values.split(",")]
        matrices = []
        for value in axis_values:
            nets = []
            for code, sents in corpora.items():
                for dump in _language_dumps(model, code, sents, config, value):
                    nets.append(subnet.build_mask(dump, config.p))
            matrices.append((value, subnet.similarity_matrix(nets)))

    rows = []
    for value, matrix in matrices:
        for task in task_list:
            report = evalrank.evaluate(matrix, table, task, config.k)
            rows.append((value, task, report.means["ndcg"]))

    dest = Path(output) if output else _out_dir(config) / f"sweep_{axis}.csv"
    notes = [config.describe(), f"axis={axis}",
             f"model_id={model.manifest.model_id}",
             *_input_notes([gold, *corpus_files])]
    with open(dest, "w", encoding="utf-8", newline="") as fh:
        for note in notes:
            fh.write(f"# {note}\n")
        fh.write(f"axis,value,task,ndcg_at_{config.k}\n")
        for value, task, ndcg in rows:
            fh.write(f"{axis},{value:g},{task},{ndcg:.9g}\n")
    for value, task, ndcg in rows:
        click.echo(f"{axis}={value:<8g} task={task}  ndcg@{config.k}={ndcg:.2f}")
    click.echo(f"wrote {dest}")


@main.command()
@click.option("--families", type=int, default=3, show_default=True)
@click.option("--per-family", type=int, default=2, show_default=True)
@click.option("--noise", type=float, default=0.2, show_default=True)
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--sentences", type=int, default=2048, show_default=True)
@click.option("--len-range", default="6,12", show_default=True,
              help="inclusive sentence-length range LO,HI")
@click.option("--vocab-size", type=int, default=64, show_default=True)
@click.option("--task-name", default="synthetic", show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False), default=None)
@click.pass_obj
@_guarded
def synth(config, families, per_family, noise, seed, sentences, len_range,
          vocab_size, task_name, out_dir):
    """Generate synthetic-language corpora plus a matching gold table.

    Gold transfer scores are 100 x distribution overlap between source and
    target, so rankings against this table have a known ground truth.
    """
    config = _resolved(config, out_dir=out_dir)
    parts = len_range.split(",")
    if len(parts) != 2:
        raise ValidationError(f"--len-range must be LO,HI, got {len_range!r}")
    bounds = (int(parts[0]), int(parts[1]))
    languages = refmodel.make_families(families, per_family, noise, seed,
                                       vocab_size=vocab_size)
    out = _out_dir(config)
    for lang in languages:
        corpus = refmodel.generate_corpus(lang, sentences, bounds)
        refmodel.write_token_corpus(out / f"{lang.code}.txt", corpus)
        click.echo(f"wrote {out / (lang.code + '.txt')} ({sentences} sentences)")
    rows = [
        (task_name, a.code, b.code, 0, 100.0 * refmodel.affinity(a, b))
        for a in languages
        for b in languages
    ]
    gold_table = evalrank.TransferScoreTable(rows=rows)
    evalrank.write_gold_table(out / "gold.csv", gold_table)
    click.echo(f"wrote {out / 'gold.csv'} ({len(rows)} pairs)")


if __name__ == "__main__":
    main()
