from __future__ import annotations

import logging
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence, cast

import rich_click as click
from click.core import ParameterSource
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from hydrosample.config import PipelineConfig, Profile, get_config_for_profile
from hydrosample.evaluation import (
    TIERS,
    evaluate_plan,
    export_plot_data,
    load_report,
    save_report,
)
from hydrosample.exception import HydroSampleError, PlanError, pretty_print_error
from hydrosample.gft import (
    DEFAULT_RANK_TOL,
    Strategy,
    build_gft_operator,
    save_operator,
    select_sampling_set,
)
from hydrosample.hydraulics import solve_flows
from hydrosample.inp import load_network, load_scenario
from hydrosample.mlp import load_model, save_model
from hydrosample.network import VariantSpec
from hydrosample.neural import (
    TrainingParams,
    ZeroRows,
    train_decoder,
    train_encoder,
)
from hydrosample.pipeline import run_pipeline
from hydrosample.plans import (
    Provenance,
    SamplingPlan,
    budget_from_fraction,
    filter_subset_datasets,
    gft_frequent_budget_plan,
    gft_frequent_plan,
    gft_important_budget_plan,
    gft_important_plan,
    laplacian_plan,
    load_plan,
    random_plan,
    save_plan,
)
from hydrosample.transport import (
    read_data_matrix,
    run_scenario_sweep,
    simulate_transport,
)

GREEN = "#45FFCA"
YELLOW = "#FEFFAC"
PINK = "#FFB6D9"
PURPLE = "#D67BFF"

DEFAULT_OUT = "hydrosample-out"

# general
click.rich_click.USE_RICH_MARKUP = True
click.rich_click.STYLE_OPTIONS_TABLE_LEADING = 1
click.rich_click.STYLE_OPTIONS_TABLE_BOX = "SIMPLE"
click.rich_click.STYLE_OPTIONS_PANEL_BORDER = YELLOW
click.rich_click.STYLE_USAGE = f"bold {YELLOW}"
click.rich_click.STYLE_USAGE_COMMAND = "regular"
click.rich_click.STYLE_HELPTEXT = "regular"
click.rich_click.STYLE_OPTION = PINK
click.rich_click.STYLE_ARGUMENT = PINK
click.rich_click.STYLE_COMMAND = PINK
click.rich_click.STYLE_SWITCH = GREEN

# metavars
click.rich_click.SHOW_METAVARS_COLUMN = False
click.rich_click.APPEND_METAVARS_HELP = True
click.rich_click.STYLE_METAVAR_APPEND = PURPLE
click.rich_click.STYLE_METAVAR_SEPARATOR = PURPLE

# errors
click.rich_click.STYLE_ERRORS_SUGGESTION = "italic"
click.rich_click.ERRORS_SUGGESTION = (
    "Try 'hydrosample --help' to view available options."
)

PATH_IN = click.Path(
    exists=True, file_okay=True, dir_okay=False, resolve_path=True, path_type=Path
)


class HydroSampleGroup(click.RichGroup):
    """
    Exit codes: 0 success, 1 invalid input (including usage errors), 2 runtime
    failure.
    """

    def make_context(
        self,
        info_name: str | None,
        args: list[str],
        parent: click.Context | None = None,
        **extra: Any,
    ) -> click.Context:
        try:
            return super().make_context(info_name, args, parent=parent, **extra)
        except click.UsageError as e:
            e.exit_code = 1
            raise

    def invoke(self, ctx: click.Context) -> Any:
        try:
            return super().invoke(ctx)
        except click.UsageError as e:
            e.exit_code = 1
            raise
        except HydroSampleError as e:
            pretty_print_error(e)
            ctx.exit(e.exit_code)


def _configure_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(message)s",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


def _profile(ctx: click.Context) -> Profile:
    obj: dict[str, Any] = ctx.ensure_object(dict)
    if "profile_values" not in obj:
        obj["profile_values"] = get_config_for_profile(
            config_path=obj.get("config"), profile=obj.get("profile")
        )
    profile: Profile = obj["profile_values"]
    return profile


def _setting(ctx: click.Context, name: str, value: Any, default: Any) -> Any:
    if value is not None and value != ():
        return value
    return _profile(ctx).get(name, default)


def _out_dir(ctx: click.Context) -> Path:
    out: Path = ctx.obj["out"]
    out.mkdir(parents=True, exist_ok=True)
    return out


def _training_params(ctx: click.Context, **cli: Any) -> TrainingParams:
    defaults = TrainingParams()
    values = {
        name: _setting(ctx, name, cli.get(name), getattr(defaults, name))
        for name in ("hidden_layers", "epochs", "learning_rate", "batch_size")
    }
    return TrainingParams(seed=ctx.obj["seed"], **values)


@click.group(cls=HydroSampleGroup)
@click.version_option(package_name="hydrosample")
@click.option(
    "--seed",
    type=click.IntRange(min=0),
    default=0,
    show_default=True,
    help="Seed for training and random plans.",
)
@click.option(
    "--out",
    type=click.Path(file_okay=False, dir_okay=True, path_type=Path),
    default=DEFAULT_OUT,
    show_default=True,
    help="Directory that receives every artifact.",
)
@click.option(
    "--config",
    type=PATH_IN,
    help=(
        "By default, hydrosample finds files named .hydrosample.toml (and the "
        "[tool.hydrosample] table of pyproject.toml) in the current directory and "
        "the home directory (~) and merges them. Use this option to load a single "
        "config file instead."
    ),
)
@click.option(
    "-P",
    "--profile",
    help=(
        "Select a profile from an available config file to load its values. "
        "Options passed on the command line take precedence over the profile."
    ),
)
@click.option("-v", "--verbose", is_flag=True, help="Log debug messages.")
@click.option("-q", "--quiet", is_flag=True, help="Only log warnings and errors.")
@click.option("--no-cache", is_flag=True, help="Do not read or write the sweep cache.")
@click.pass_context
def cli(
    ctx: click.Context,
    seed: int,
    out: Path,
    config: Path | None,
    profile: str | None,
    verbose: bool,
    quiet: bool,
    no_cache: bool,
) -> None:
    """
    Simulate contaminant injections on a pipe network, choose sensor nodes with a
    data-driven graph Fourier transform, and reconstruct every junction from
    those sensors with a small neural network.
    """
    _configure_logging(verbose, quiet)
    ctx.ensure_object(dict)
    ctx.obj.update(
        seed=seed,
        seed_given=ctx.get_parameter_source("seed") != ParameterSource.DEFAULT,
        out=out,
        config=config,
        profile=profile,
        no_cache=no_cache,
    )


@cli.command()
@click.argument("network", type=PATH_IN)
@click.option(
    "--scenario",
    type=PATH_IN,
    help="A scenario TOML file; overrides the sweep options.",
)
@click.option(
    "--source", "sources", multiple=True, help="Injection junction (repeatable)."
)
@click.option(
    "--rate",
    "rates",
    type=float,
    multiple=True,
    help="Injection rate in mg/s (repeatable).",
)
@click.option(
    "--duration",
    "durations",
    type=float,
    multiple=True,
    help="Injection duration in s (repeatable).",
)
@click.option(
    "--start",
    "starts",
    type=float,
    multiple=True,
    help="Injection start in s (repeatable).",
)
@click.option("--timestep", type=float, help="Time step in s.")
@click.option("--max-steps", type=int, help="Maximum number of simulated steps.")
@click.pass_context
def simulate(
    ctx: click.Context,
    network: Path,
    scenario: Path | None,
    sources: Sequence[str],
    rates: Sequence[float],
    durations: Sequence[float],
    starts: Sequence[float],
    timestep: float | None,
    max_steps: int | None,
) -> None:
    """
    Simulate injection scenarios and write one CSV (+ JSON sidecar) per scenario.
    """
    net = load_network(network)
    flows = solve_flows(net)
    if scenario is not None:
        matrices = [simulate_transport(net, flows, load_scenario(scenario))]
    else:
        sources = _setting(ctx, "sources", tuple(sources), ())
        if not sources:
            raise click.UsageError("Pass --source at least once, or --scenario.")
        variants = VariantSpec(
            rates=tuple(_setting(ctx, "rates", tuple(rates), (5.0,))),
            durations=tuple(_setting(ctx, "durations", tuple(durations), (600.0,))),
            starts=tuple(_setting(ctx, "starts", tuple(starts), (0.0,))),
            timestep=_setting(ctx, "timestep", timestep, 60.0),
            max_steps=_setting(ctx, "max_steps", max_steps, 2000),
        )
        matrices = run_scenario_sweep(net, list(sources), variants, flows)
    out = _out_dir(ctx) / "scenarios"
    for x in matrices:
        csv_path, _ = x.write(out / f"{x.scenario_id}.csv")
        click.echo(str(csv_path))


@cli.command()
@click.argument("matrix", type=PATH_IN)
@click.option(
    "--rank-tol", type=float, help="Relative pivot magnitude that ends the rank."
)
@click.option(
    "--strategy",
    type=click.Choice(["greedy", "exhaustive"]),
    default="greedy",
    show_default=True,
)
@click.pass_context
def gft(
    ctx: click.Context, matrix: Path, rank_tol: float | None, strategy: str
) -> None:
    """
    Build the GFT operator of a scenario matrix and select its sampling set.
    Writes the operator and the scenario's GFT dataset (a plan).
    """
    x = read_data_matrix(matrix)
    tol = _setting(ctx, "rank_tol", rank_tol, DEFAULT_RANK_TOL)
    op = build_gft_operator(x, rank_tol=tol)
    s = select_sampling_set(op, strategy=cast(Strategy, strategy))
    dataset = SamplingPlan(
        nodes=s.nodes,
        provenance=Provenance(kind="gft_specific", source=x.scenario.source),
        scores=s.scores,
    )
    out = _out_dir(ctx)
    (out / "gft").mkdir(exist_ok=True)
    (out / "plans").mkdir(exist_ok=True)
    save_operator(out / "gft" / f"{x.scenario_id}.json", op, s)
    save_plan(out / "plans" / f"{dataset.plan_id}.json", dataset)
    names = ", ".join(x.node_index[i] for i in s.nodes)
    click.echo(f"rank {op.rank}: {names}")


@cli.command()
@click.argument(
    "kind", type=click.Choice(["frequent", "important", "laplacian", "random"])
)
@click.option(
    "--dataset",
    "datasets",
    type=PATH_IN,
    multiple=True,
    help="A GFT dataset plan file (repeatable).",
)
@click.option(
    "--network", type=PATH_IN, help="Network file, for laplacian and random plans."
)
@click.option(
    "--threshold", type=click.IntRange(min=1), help="GFT-F minimum dataset count."
)
@click.option(
    "-n",
    "--n",
    "n",
    type=click.IntRange(min=1),
    help="GFT-I nodes taken from each dataset.",
)
@click.option(
    "--budget", type=float, help="Node budget as a fraction of the junctions."
)
@click.option(
    "--no-filter", is_flag=True, help="Keep GFT datasets that are subsets of others."
)
@click.pass_context
def plan(
    ctx: click.Context,
    kind: str,
    datasets: Sequence[Path],
    network: Path | None,
    threshold: int | None,
    n: int | None,
    budget: float | None,
    no_filter: bool,
) -> None:
    """
    Derive a sampling plan: GFT-F (frequent), GFT-I (important), or the
    Laplacian and random baselines.
    """
    if kind in ("frequent", "important"):
        loaded = [load_plan(p) for p in datasets]
        if not loaded:
            raise click.UsageError(f"A {kind} plan needs at least one --dataset.")
        net = load_network(network) if network is not None else None
        index = net.junction_index if net is not None else None
        kept = loaded if no_filter else filter_subset_datasets(loaded, index)
        n_nodes = None
        if budget is not None:
            if net is None:
                raise click.UsageError("A budget needs --network to count junctions.")
            n_nodes = net.n_junctions
        size = None
        if n_nodes is not None and budget is not None:
            size = budget_from_fraction(budget, n_nodes)
        if kind == "frequent":
            if n_nodes is not None and size is not None:
                result = gft_frequent_budget_plan(kept, size, n_nodes)
            elif threshold is not None:
                result = gft_frequent_plan(kept, threshold)
            else:
                raise click.UsageError("A frequent plan needs --threshold or --budget.")
        else:
            if n_nodes is not None and size is not None:
                result = gft_important_budget_plan(kept, size, n_nodes)
            elif n is not None:
                result = gft_important_plan(kept, n)
            else:
                raise click.UsageError("An important plan needs -n or --budget.")
    else:
        if network is None or budget is None:
            raise click.UsageError(f"A {kind} plan needs --network and --budget.")
        net = load_network(network)
        size = budget_from_fraction(budget, net.n_junctions)
        result = (
            laplacian_plan(net, size)
            if kind == "laplacian"
            else random_plan(net, size, ctx.obj["seed"])
        )
    out = _out_dir(ctx) / "plans"
    out.mkdir(exist_ok=True)
    save_plan(out / f"{result.plan_id}.json", result)
    click.echo(f"{result.plan_id}: {list(result.nodes)}")


@cli.command()
@click.argument("matrices", type=PATH_IN, nargs=-1, required=True)
@click.option("--plan", "plan_path", type=PATH_IN, help="Plan file (decoder role).")
@click.option(
    "--role",
    type=click.Choice(["decoder", "encoder"]),
    default="decoder",
    show_default=True,
)
@click.option(
    "--dataset",
    "datasets",
    type=PATH_IN,
    multiple=True,
    help="GFT dataset per source (encoder role).",
)
@click.option(
    "--split-seed",
    type=click.IntRange(min=0),
    help="Seed of the 80/20 variant split.",
)
@click.option("--epochs", type=click.IntRange(min=1))
@click.option("--learning-rate", type=float)
@click.option("--batch-size", type=click.IntRange(min=1))
@click.option("--hidden-layers", type=click.IntRange(min=0))
@click.option(
    "--zero-rows",
    type=click.Choice(["drop", "negative"]),
    default="drop",
    show_default=True,
)
@click.pass_context
def train(
    ctx: click.Context,
    matrices: Sequence[Path],
    plan_path: Path | None,
    role: str,
    datasets: Sequence[Path],
    split_seed: int | None,
    zero_rows: str,
    **hyper: Any,
) -> None:
    """
    Train a decoder for a plan, or the node-importance encoder.
    """
    loaded = [read_data_matrix(p) for p in matrices]
    params = _training_params(ctx, **hyper)
    seed = _setting(ctx, "split_seed", split_seed, 0)
    out = _out_dir(ctx) / "models"
    out.mkdir(exist_ok=True)
    if role == "decoder":
        if plan_path is None:
            raise click.UsageError("The decoder role needs --plan.")
        p = load_plan(plan_path)
        model = train_decoder(p, loaded, seed, params)
        path = out / f"{p.plan_id}.json"
    else:
        by_source = {
            d.provenance.source: d for d in (load_plan(f) for f in datasets)
        }
        missing = sorted({x.scenario.source for x in loaded} - set(by_source))
        if missing:
            raise PlanError(
                f"No --dataset given for source(s) {', '.join(missing)}."
            )
        plans = [by_source[x.scenario.source] for x in loaded]
        model = train_encoder(
            loaded, plans, seed, params, zero_rows=cast(ZeroRows, zero_rows)
        )
        path = out / "encoder.json"
    save_model(path, model)
    click.echo(f"{path} (train loss {model.train_meta['final_train_loss']:.4g})")


@cli.command()
@click.argument("matrices", type=PATH_IN, nargs=-1, required=True)
@click.option("--plan", "plan_path", type=PATH_IN, required=True)
@click.option("--model", "model_path", type=PATH_IN, required=True)
@click.pass_context
def evaluate(
    ctx: click.Context, matrices: Sequence[Path], plan_path: Path, model_path: Path
) -> None:
    """
    Score a plan's decoder on held-out scenario matrices.
    """
    p = load_plan(plan_path)
    test_set = [read_data_matrix(m) for m in matrices]
    report = evaluate_plan(p, load_model(model_path), test_set)
    out = _out_dir(ctx) / "reports"
    out.mkdir(exist_ok=True)
    save_report(out / f"{p.plan_id}.json", report)
    table = Table(title=f"{p.plan_id} ({report.budget_fraction:.0%} of junctions)")
    table.add_column("tier")
    table.add_column("sensitivity", justify="right")
    table.add_column("specificity", justify="right")
    for tier in TIERS:
        table.add_row(
            tier, f"{report.sensitivity[tier]:.3f}", f"{report.specificity[tier]:.3f}"
        )
    Console().print(table)


@cli.command()
@click.option(
    "--network", type=PATH_IN, help="Network file; overrides the profile."
)
@click.option(
    "--source", "sources", multiple=True, help="Injection junction (repeatable)."
)
@click.option(
    "--reduce-tier",
    type=click.Choice(list(TIERS)),
    help="Also reduce every GFT dataset at this accuracy tier.",
)
@click.option("--epochs", type=click.IntRange(min=1))
@click.pass_context
def pipeline(
    ctx: click.Context,
    network: Path | None,
    sources: Sequence[str],
    reduce_tier: str | None,
    epochs: int | None,
) -> None:
    """
    Run the full experiment described by the active profile.
    """
    config = PipelineConfig.from_profile(
        _profile(ctx),
        network=network,
        sources=list(sources) or None,
        reduce_tier=reduce_tier,
        epochs=epochs,
        seed=ctx.obj["seed"] if ctx.obj["seed_given"] else None,
    )
    if ctx.obj["no_cache"]:
        config = replace(config, use_cache=False)
    bundle = run_pipeline(config, _out_dir(ctx))
    click.echo(f"{bundle.manifest_path} ({len(bundle.reports)} reports)")


@cli.command()
@click.argument("reports", type=PATH_IN, nargs=-1)
@click.option(
    "--from-dir",
    type=click.Path(exists=True, file_okay=False, dir_okay=True, path_type=Path),
    help="Export every report under DIR/reports.",
)
@click.pass_context
def export(
    ctx: click.Context, reports: Sequence[Path], from_dir: Path | None
) -> None:
    """
    Write plot-ready CSV data (plan, budget_fraction, tier, sensitivity,
    specificity, mean_nrmse) from report files.
    """
    paths = list(reports)
    if from_dir is not None:
        paths += sorted((from_dir / "reports").glob("*.json"))
    if not paths:
        raise click.UsageError("Pass report files or --from-dir.")
    csv_path = _out_dir(ctx) / "plot_data.csv"
    csv_path.write_text(
        export_plot_data([load_report(p) for p in paths]), encoding="utf-8"
    )
    click.echo(str(csv_path))


def hydrosample() -> None:
    """
    The main entrypoint for the hydrosample CLI.
    """
    cli()
