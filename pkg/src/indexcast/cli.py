"""Command-line interface.

A JSON config file supplies defaults; flags override the file; `--seed`
sets the global RNG seed.  Reports are written as JSON, sweeps as CSV.
"""

import json
import logging
import sys
from dataclasses import replace
from datetime import date
from pathlib import Path

import click

from .config import RunConfig, VARIANTS, config_from_dict, load_config
from .errors import IndexcastError
from .evaluation import ablation_run, lambda_sweep, walk_forward, write_sweep_csv
from .forecast import PipelineState, forecast_day
from .market_data import load_bars, load_manifest
from .synthetic import SyntheticMarketSpec, generate_synthetic_market

logger = logging.getLogger(__name__)


def _build_config(config_path, **overrides) -> RunConfig:
    cfg = load_config(config_path) if config_path else RunConfig()
    filtered = {k: v for k, v in overrides.items() if v is not None}
    if filtered:
        cfg = config_from_dict(filtered, base=cfg)
    return cfg


_shared_options = [
    click.option("--config", "config_path", type=click.Path(exists=True), default=None,
                 help="JSON config file with RunConfig keys."),
    click.option("--bars", "bars_path", type=click.Path(exists=True), default=None),
    click.option("--manifest", "manifest_path", type=click.Path(exists=True), default=None),
    click.option("--lambda", "blend_lambda", type=float, default=None,
                 help="Stock-edge blend coefficient in (0,1)."),
    click.option("--k-clusters", "k_clusters", type=int, default=None),
    click.option("--k-neighbors", "k_neighbors", type=int, default=None),
    click.option("--train-days", "train_days", type=int, default=None),
    click.option("--validation-days", "validation_days", type=int, default=None),
    click.option("--constituents-per-index", "constituents_per_index", type=int, default=None),
    click.option("--seed", type=int, default=None),
    click.option("--n-jobs", "n_jobs", type=int, default=None),
]


def shared_options(fn):
    for opt in reversed(_shared_options):
        fn = opt(fn)
    return fn


@click.group()
@click.option("--verbose", is_flag=True, default=False)
def main(verbose):
    """Graph-based multi-index movement forecasting."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command()
@shared_options
def ingest(config_path, **overrides):
    """Validate bar data and the universe manifest; print a summary."""
    cfg = _build_config(config_path, **overrides)
    bars = load_bars(cfg.bars_path)
    manifest = load_manifest(cfg.manifest_path)
    manifest.validate(cfg.constituents_per_index)
    calendar = next(iter(bars.values())).dates
    click.echo(f"symbols: {len(bars)}")
    click.echo(f"trading days: {len(calendar)} ({calendar[0]} .. {calendar[-1]})")
    click.echo(f"indices: {', '.join(ix.index_id for ix in manifest.indices)}")
    missing = [s for s in manifest.all_stocks() if s not in bars]
    if missing:
        raise click.ClickException(f"constituents without bars: {missing[:10]}")
    click.echo("ok")


@main.command("build-graph")
@shared_options
@click.option("--day", "day_str", required=True, help="Build anchor day (YYYY-MM-DD).")
@click.option("--out", "out_path", type=click.Path(), default="network.json")
def build_graph(config_path, day_str, out_path, **overrides):
    """Build the prediction network for a day and write its JSON snapshot."""
    cfg = _build_config(config_path, **overrides)
    state = PipelineState.from_config(cfg)
    network = state.ensure_network(date.fromisoformat(day_str))
    Path(out_path).write_text(network.to_json())
    click.echo(
        f"{out_path}: {len(network.stock_nodes)} stocks, "
        f"{len(network.stock_stock_edges)} stock-stock edges"
    )


@main.command()
@shared_options
@click.option("--day", "day_str", required=True, help="Prediction day (YYYY-MM-DD).")
@click.option("--out", "out_path", type=click.Path(), default=None)
def forecast(config_path, day_str, out_path, **overrides):
    """Forecast one day and print (or write) the per-day report."""
    cfg = _build_config(config_path, **overrides)
    state = PipelineState.from_config(cfg)
    result = forecast_day(state, date.fromisoformat(day_str))
    payload = {
        "day": result.day.isoformat(),
        "index_labels": dict(sorted(result.index_labels.items())),
        "stock_labels": dict(sorted(result.stock_labels.items())),
        "seed_labels": dict(sorted(result.seed_labels.labels.items())),
        "diagnostics": result.diagnostics,
    }
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out_path:
        Path(out_path).write_text(text)
        click.echo(out_path)
    else:
        click.echo(text)


@main.command()
@shared_options
@click.option("--from", "from_str", required=True, help="First test day (YYYY-MM-DD).")
@click.option("--to", "to_str", required=True, help="Last test day (YYYY-MM-DD).")
@click.option("--out", "out_path", type=click.Path(), default="report.json")
def evaluate(config_path, from_str, to_str, out_path, **overrides):
    """Walk-forward evaluation over a date range."""
    cfg = _build_config(config_path, **overrides)
    cfg = replace(
        cfg,
        test_start=date.fromisoformat(from_str),
        test_end=date.fromisoformat(to_str),
    )
    report = walk_forward(cfg)
    Path(out_path).write_text(report.to_json())
    for ix, stats in sorted(report.per_index.items()):
        click.echo(f"{ix}: macro_f1={stats['macro_f1']}")
    click.echo(f"mean macro_f1: {report.mean_macro_f1:.4f} -> {out_path}")


@main.command("sweep-lambda")
@shared_options
@click.option("--values", required=True, help="Comma-separated lambda values in (0,1).")
@click.option("--from", "from_str", required=True)
@click.option("--to", "to_str", required=True)
@click.option("--out", "out_path", type=click.Path(), default="sweep.csv")
def sweep_lambda(config_path, values, from_str, to_str, out_path, **overrides):
    """Walk-forward once per lambda; write a CSV of macro-F1 per value."""
    cfg = _build_config(config_path, **overrides)
    cfg = replace(
        cfg,
        test_start=date.fromisoformat(from_str),
        test_end=date.fromisoformat(to_str),
    )
    lams = [float(v) for v in values.split(",") if v.strip()]
    sweep = lambda_sweep(cfg, lams)
    write_sweep_csv(sweep, out_path)
    for row in sweep["rows"]:
        click.echo(f"lambda={row['lambda']}: mean_macro_f1={row['mean_macro_f1']:.4f}")
    click.echo(out_path)


@main.command()
@shared_options
@click.option("--variant", required=True, type=click.Choice(VARIANTS))
@click.option("--from", "from_str", required=True)
@click.option("--to", "to_str", required=True)
@click.option("--out", "out_path", type=click.Path(), default="ablation.json")
def ablate(config_path, variant, from_str, to_str, out_path, **overrides):
    """Walk-forward with a node-selection / index-labeling variant."""
    cfg = _build_config(config_path, **overrides)
    cfg = replace(
        cfg,
        test_start=date.fromisoformat(from_str),
        test_end=date.fromisoformat(to_str),
    )
    report = ablation_run(cfg, variant)
    Path(out_path).write_text(report.to_json())
    click.echo(f"{variant}: mean macro_f1 {report.mean_macro_f1:.4f} -> {out_path}")


@main.command()
@click.option("--spec", "spec_path", type=click.Path(exists=True), default=None,
              help="JSON file with SyntheticMarketSpec fields.")
@click.option("--out-dir", type=click.Path(), default="synthetic")
@click.option("--seed", type=int, default=None)
def synth(spec_path, out_dir, seed):
    """Generate a planted synthetic market (bars, manifest, truth record)."""
    raw = {}
    if spec_path:
        raw = json.loads(Path(spec_path).read_text())
    if "start" in raw:
        raw["start"] = date.fromisoformat(raw["start"])
    if seed is not None:
        raw["seed"] = seed
    market = generate_synthetic_market(SyntheticMarketSpec(**raw), out_dir)
    click.echo(str(market.bars_path))
    click.echo(str(market.manifest_path))
    click.echo(str(market.truth_path))


def _run():
    try:
        main()
    except IndexcastError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(2)


if __name__ == "__main__":
    _run()
