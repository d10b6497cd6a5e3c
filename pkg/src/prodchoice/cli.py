"""prodchoice command line.

Subcommands mirror the pipeline stages; ``run`` executes all of them with
content-hash skipping. Exit codes: 0 ok, 2 config error, 3 data error,
4 backend error, 5 analysis error.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from . import __version__
from .config import PipelineConfig, load_config
from .errors import ProdChoiceError
from .pipeline import (
    make_gateway,
    run_pipeline,
    stage_analyze_condlogit,
    stage_analyze_diffs,
    stage_analyze_pairwise,
    stage_analyze_rank,
    stage_cost,
    stage_generate,
    stage_judge,
    stage_preprocess,
    stage_report,
    stage_score,
    stage_stratify,
)


def _fail(exc: ProdChoiceError) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(exc.exit_code)


def _load(ctx: click.Context, **path_overrides) -> PipelineConfig:
    params = ctx.obj or {}
    overrides: dict = {}
    paths = {k: str(v) for k, v in path_overrides.items() if v is not None}
    if paths:
        overrides["paths"] = paths
    seeds = params.get("seeds") or {}
    try:
        return load_config(
            params.get("config"),
            overrides=overrides,
            mode=params.get("mode"),
            seed_overrides=seeds,
        )
    except ProdChoiceError as exc:
        _fail(exc)
        raise  # unreachable


def _run(stage_fn, config: PipelineConfig, needs_gateway: bool = True) -> None:
    try:
        gateway = make_gateway(config) if needs_gateway else None
        stage_fn(config, gateway)
    except ProdChoiceError as exc:
        _fail(exc)


@click.group()
@click.version_option(version=__version__, prog_name="prodchoice")
@click.option("--config", "config_path", type=click.Path(path_type=Path),
              default=None, help="Pipeline config JSON.")
@click.option("--mode", type=click.Choice(["live", "record", "replay"]),
              default=None, help="Override gateway mode.")
@click.option("--seed", "seeds", multiple=True, metavar="NAME=INT",
              help="Override a named seed, e.g. --seed stratify=7.")
@click.pass_context
def main(ctx: click.Context, config_path: Path | None, mode: str | None,
         seeds: tuple[str, ...]) -> None:
    parsed = {}
    for spec in seeds:
        if "=" not in spec:
            click.echo(f"error: bad --seed {spec!r}, expected NAME=INT", err=True)
            sys.exit(2)
        name, value = spec.split("=", 1)
        try:
            parsed[name] = int(value)
        except ValueError:
            click.echo(f"error: seed {name!r} must be an integer", err=True)
            sys.exit(2)
    ctx.obj = {"config": config_path, "mode": mode, "seeds": parsed}


@main.command()
@click.option("--in", "transcripts", type=click.Path(path_type=Path),
              help="Transcript JSONL (one utterance per line).")
@click.option("--annotations", type=click.Path(path_type=Path),
              help="Choice-point annotation JSONL.")
@click.option("--out", "items", type=click.Path(path_type=Path),
              help="Output ChoiceItem JSONL.")
@click.option("--token-budget", type=int, default=None,
              help="History token budget (default 1024).")
@click.pass_context
def preprocess(ctx, transcripts, annotations, items, token_budget):
    """Clean transcripts, select targets, attach history."""
    config = _load(ctx, transcripts=transcripts, annotations=annotations,
                   items=items)
    if token_budget is not None:
        config.token_budget = token_budget
    _run(stage_preprocess, config)


@main.command()
@click.option("--items", type=click.Path(path_type=Path),
              help="ChoiceItem JSONL from preprocess.")
@click.option("--out", "alternatives", type=click.Path(path_type=Path),
              help="Output alternatives JSONL.")
@click.option("--n", "n", type=int, default=None,
              help="Candidates per method per context (default 10).")
@click.pass_context
def generate(ctx, items, alternatives, n):
    """Generate goal-agnostic and goal-directed alternatives."""
    config = _load(ctx, items=items, alternatives=alternatives)
    if n is not None:
        config.n_per_condition = n
        config.n_paraphrases = n
    _run(stage_generate, config)


@main.command()
@click.option("--in", "alternatives", type=click.Path(path_type=Path),
              help="Alternatives JSONL.")
@click.option("--out", "judged", type=click.Path(path_type=Path),
              help="Output judged JSONL.")
@click.pass_context
def judge(ctx, alternatives, judged):
    """Reclassify alternatives with the paraphrase judge."""
    config = _load(ctx, alternatives=alternatives, judged=judged)
    _run(stage_judge, config)


@main.command()
@click.option("--items", type=click.Path(path_type=Path))
@click.option("--alternatives", "judged", type=click.Path(path_type=Path),
              help="Judged alternatives JSONL.")
@click.option("--out", "scored", type=click.Path(path_type=Path),
              help="Output scored JSONL.")
@click.pass_context
def score(ctx, items, judged, scored):
    """Compute per-word surprisal profiles via the scorer backend."""
    config = _load(ctx, items=items, judged=judged, scored=scored)
    _run(stage_score, config)


@main.command()
@click.option("--scored", type=click.Path(path_type=Path))
@click.option("--out", "costs", type=click.Path(path_type=Path),
              help="Output cost JSONL (a .csv sibling is also written).")
@click.pass_context
def cost(ctx, scored, costs):
    """Assemble the four cost measures per candidate."""
    config = _load(ctx, scored=scored, costs=costs)
    _run(stage_cost, config, needs_gateway=False)


@main.command()
@click.option("--costs", type=click.Path(path_type=Path))
@click.option("--seed", "seed", type=int, default=None,
              help="Sampling seed (overrides seeds.stratify).")
@click.option("--out", "stratification", type=click.Path(path_type=Path),
              help="Output stratification JSON.")
@click.pass_context
def stratify(ctx, costs, seed, stratification):
    """Align generated cost distributions to the human distribution."""
    config = _load(ctx, costs=costs, stratification=stratification)
    if seed is not None:
        config.seeds["stratify"] = seed
    _run(stage_stratify, config, needs_gateway=False)


@main.group()
def analyze():
    """Rank, pairwise, conditional-logit and paired-diff analyses."""


def _analyze_cmd(name, stage_fn, doc):
    @analyze.command(name=name, help=doc)
    @click.option("--costs", type=click.Path(path_type=Path))
    @click.option("--out", "analysis_dir", type=click.Path(path_type=Path),
                  help="Analysis output directory.")
    @click.pass_context
    def _cmd(ctx, costs, analysis_dir):
        config = _load(ctx, costs=costs, analysis_dir=analysis_dir)
        _run(stage_fn, config, needs_gateway=False)
    return _cmd


_analyze_cmd("rank", stage_analyze_rank,
             "Rank-1 shares with exact Poisson-binomial chance tests.")
_analyze_cmd("pairwise", stage_analyze_pairwise,
             "Pairwise logistic fits with cluster-robust errors.")
_analyze_cmd("condlogit", stage_analyze_condlogit,
             "Conditional logit sensitivity fits per condition.")
_analyze_cmd("diffs", stage_analyze_diffs,
             "One-sided tests on sampled per-context cost differences.")


@main.command()
@click.option("--analysis", "analysis_dir", type=click.Path(path_type=Path),
              help="Directory with analysis outputs.")
@click.option("--out", "report_dir", type=click.Path(path_type=Path),
              help="Report output directory.")
@click.pass_context
def report(ctx, analysis_dir, report_dir):
    """Emit result tables and plot-ready CSV bundles."""
    config = _load(ctx, analysis_dir=analysis_dir, report_dir=report_dir)
    _run(stage_report, config, needs_gateway=False)


@main.command()
@click.pass_context
def run(ctx):
    """Run the full pipeline with content-hash stage skipping."""
    config = _load(ctx)
    try:
        run_pipeline(config, echo=click.echo)
    except ProdChoiceError as exc:
        _fail(exc)


if __name__ == "__main__":
    main()
