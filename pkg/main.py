#!/usr/bin/env python3
import functools
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import click
import numpy as np
import pandas as pd
from rich.console import Console

from src import __version__
from src.data.config import RunConfig, get_config_path, resolve_threads
from src.data.covariates import CovariateSet, build_covariates, load_raw_covariates
from src.data.panel import FLOAT_FORMAT, ObservationPanel, load_panel, read_table, write_panel
from src.data.store import PosteriorStore
from src.model.engine import run_chain, summarize
from src.model.params import ModelParams, random_truth
from src.model.selection import score_model, spatial_diagnostics
from src.model.simulation import CovariateSpec, generate_synthetic, seasonal_summary, simulate_panels
from src.model.states import most_probable_states, state_rainfall_profile, state_seasonal_counts
from src.util.errors import ConfigurationError, NHMMError
from src.util.logging import logger as setup_logging
from src.util.progress import ProgressTracker, RichProgressView
from src.util.rng import StreamFactory

term = Console(stderr=True)
log = logging.getLogger("nhmm")

EXIT_ERROR = 1
EXIT_INTERNAL = 3


def reported(func):
    """Failures leave as one JSON object on stderr and a nonzero exit status."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (click.ClickException, click.exceptions.Exit, click.Abort):
            raise
        except NHMMError as e:
            log.error(f"{e.kind}: {e.message}")
            click.echo(json.dumps(e.to_json()), err=True)
            sys.exit(EXIT_ERROR)
        except Exception as e:
            log.exception("internal error")
            click.echo(
                json.dumps({"error": "internal", "message": str(e), "details": {"type": type(e).__name__}}),
                err=True,
            )
            sys.exit(EXIT_INTERNAL)

    return wrapper


def write_json(data, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")
    log.info(f"wrote {path}")
    return path


@dataclass
class PreparedData:
    panel: ObservationPanel
    covariates: CovariateSet
    held_out: Optional[ObservationPanel]
    held_covariates: Optional[CovariateSet]


def prepare_data(config: RunConfig) -> PreparedData:
    """Loads the panel and covariates, splitting off the holdout window.

    Standardization constants come from the fitting window only; the
    holdout is standardized with them.
    """
    config.validate()
    full = load_panel(Path(config.panel))
    config.validate(full.T)
    fit_T = full.T - config.holdout

    x, x_names, w, w_names = load_raw_covariates(
        Path(config.x) if config.x else None,
        Path(config.w) if config.w else None,
        full.stations,
        full.T,
    )
    covariates = build_covariates(
        x[:fit_T], x_names, w[:fit_T], w_names, config.add_harmonics, config.add_drift
    )

    held_out = held_covariates = None
    if config.holdout:
        held_out = full.slice(fit_T)
        held_covariates = covariates.apply(x[fit_T:], w[fit_T:], start_day=fit_T)

    return PreparedData(full.slice(0, fit_T), covariates, held_out, held_covariates)


def load_run(output: Path) -> RunConfig:
    path = output / "run.json"
    if not path.exists():
        raise ConfigurationError(f"no fitted run in {output}", {"path": str(output)})
    return RunConfig.load(path)


def write_simulations(sims, stations, directory: Path, observed, start_day: int) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for c, sim in enumerate(sims):
        write_panel(ObservationPanel.from_array(sim.y_star, stations), directory / f"chain_{c:04d}.csv")
    summary = seasonal_summary(
        np.stack([s.y_star for s in sims]), stations, observed=observed, start_day=start_day
    )
    summary.to_csv(directory / "seasonal_summary.csv", index=False, float_format=FLOAT_FORMAT)
    log.info(f"wrote {len(sims)} chains to {directory}")


@click.group()
@click.option("--debug", is_flag=True, help="debug logging to stderr")
@click.version_option(version=__version__, prog_name="nhmm")
def cli(debug):
    """nhmm - bayesian non-homogeneous hidden markov rainfall models"""
    setup_logging(debug)


@cli.command()
@click.option("--panel", type=click.Path(), help="observation csv")
@click.option("--x", "x_path", type=click.Path(), help="daily common covariates csv")
@click.option("--w", "w_path", type=click.Path(), help="station covariates (long csv or directory)")
@click.option("-K", "--states", type=int, help="number of hidden states")
@click.option("--iterations", type=int, help="retained-phase sweeps")
@click.option("--burn-in", "burn_in_fraction", type=float, help="extra burn-in as a fraction of iterations")
@click.option("--thinning", type=int, help="keep every n-th sweep")
@click.option("--seed", type=int, help="root seed")
@click.option("--holdout", type=int, help="days held out from the end for scoring")
@click.option("-o", "--output", type=click.Path(), help="output directory")
@click.option("--config", "config_path", type=click.Path(), help="json or toml run config")
@click.option("--add-harmonics", is_flag=True, default=None, help="annual and semi-annual sin/cos terms")
@click.option("--add-drift", is_flag=True, default=None, help="linear trend in station covariates")
@click.option("--order-rates", is_flag=True, default=None, help="summaries with light rate >= heavy rate")
@click.option("--threads", type=int, help="worker threads (env NHMM_THREADS)")
@click.option("--credibility", type=float, default=0.95, show_default=True)
@reported
def fit(config_path, threads, credibility, x_path, w_path, **flags):
    """run the gibbs sampler and write the posterior store"""
    config = RunConfig.load(Path(config_path)) if config_path else RunConfig.default()
    # unset flags and unset switches leave the file value
    flags = {k: v for k, v in flags.items() if v is not None and v is not False}
    config = config.merge({**flags, "x": x_path, "w": w_path, "threads": resolve_threads(threads)})

    data = prepare_data(config)
    output = Path(config.output)
    if config.mcmc.retained < 2:
        raise ConfigurationError(
            "fit must keep at least 2 draws", {"iterations": config.mcmc.iterations, "thinning": config.mcmc.thinning}
        )

    tracker = ProgressTracker.for_chain("fit", config.mcmc.burn_in, config.mcmc.iterations)
    with RichProgressView(tracker, term):
        try:
            store = run_chain(
                data.panel,
                data.covariates,
                config.mcmc,
                config.priors,
                threads=config.threads,
                on_sweep=tracker.on_sweep,
            )
        except NHMMError as e:
            phase = tracker.running_step()
            tracker.fail_step(phase, e.message)
            e.details.setdefault("phase", phase)
            raise

    run = config.to_json()
    # thread count does not change results
    run.pop("threads")
    store.manifest["run"] = run
    store.save(output / "store")
    RunConfig.from_json(run).save(output / "run.json")

    K = config.mcmc.states
    modal = most_probable_states(store.states, K)
    means, days = state_rainfall_profile(data.panel.values, data.panel.mask, modal, K)
    table = summarize(store, credibility, ordered_rates=config.order_rates)
    write_json(
        {
            "credibility": credibility,
            "draws": len(store),
            "parameters": table.to_dict(orient="records"),
            "states": {
                "most_probable": (modal + 1).tolist(),
                "days": days.tolist(),
                "mean_rainfall": np.where(np.isfinite(means), means, None).tolist(),
            },
            "diagnostics": store.manifest["diagnostics"],
        },
        output / "summary.json",
    )
    counts = pd.DataFrame(state_seasonal_counts(modal, K), columns=[f"state_{k + 1}" for k in range(K)])
    counts.insert(0, "day_of_year", np.arange(1, counts.shape[0] + 1))
    counts.to_csv(output / "state_seasonal_counts.csv", index=False)

    term.print(f"[green]fit complete:[/green] {len(store)} draws in {output}")


@cli.command()
@click.option("-o", "--output", type=click.Path(exists=True, file_okay=False), required=True, help="fit output directory")
@click.option("--seed", type=int, default=None, help="seed for predictive paths")
@reported
def score(output, seed):
    """loglik, bic and pls of a fitted run"""
    output = Path(output)
    config = load_run(output)
    data = prepare_data(config)
    store = PosteriorStore.load(output / "store")
    seed = config.mcmc.seed if seed is None else seed

    result = score_model(data.panel, data.covariates, store, data.held_out, data.held_covariates, seed)
    report = result.to_json()
    write_json(report, output / "scores.json")
    click.echo(json.dumps(report, sort_keys=True))


@cli.command()
@click.option("-o", "--output", type=click.Path(exists=True, file_okay=False), required=True, help="fit output directory")
@click.option("--chains", type=int, default=100, show_default=True)
@click.option("--seed", type=int, default=None)
@reported
def simulate(output, chains, seed):
    """predictive chains over the fitting period"""
    output = Path(output)
    config = load_run(output)
    data = prepare_data(config)
    store = PosteriorStore.load(output / "store")
    factory = StreamFactory(config.mcmc.seed if seed is None else seed)

    sims = simulate_panels(store, data.covariates, chains, factory, init_state=0)
    write_simulations(sims, data.panel.stations, output / "simulations", data.panel, data.covariates.start_day)
    term.print(f"[green]simulated {chains} chains[/green]")


@cli.command()
@click.option("-o", "--output", type=click.Path(exists=True, file_okay=False), required=True, help="fit output directory")
@click.option("--x", "x_path", type=click.Path(exists=True), help="new common covariates")
@click.option("--w", "w_path", type=click.Path(exists=True), help="new station covariates")
@click.option("--days", type=int, help="forecast length when reading new covariates")
@click.option("--chains", type=int, default=100, show_default=True)
@click.option("--seed", type=int, default=None)
@reported
def forecast(output, x_path, w_path, days, chains, seed):
    """predictive chains past the fitting period"""
    output = Path(output)
    config = load_run(output)
    data = prepare_data(config)
    store = PosteriorStore.load(output / "store")
    factory = StreamFactory(config.mcmc.seed if seed is None else seed)
    start = data.panel.T

    if x_path or w_path:
        if x_path:
            days = read_table(Path(x_path)).shape[0]
        elif days is None:
            raise ConfigurationError("--days is required with long-format --w only")
        x, _, w, _ = load_raw_covariates(
            Path(x_path) if x_path else None, Path(w_path) if w_path else None, data.panel.stations, days
        )
        window = data.covariates.apply(x, w, start_day=start)
        observed = None
    elif data.held_covariates is not None:
        window = data.held_covariates
        observed = data.held_out
    else:
        raise ConfigurationError("nothing to forecast: fit without --holdout and no --x/--w given")

    sims = simulate_panels(store, window, chains, factory)
    write_simulations(sims, data.panel.stations, output / "forecasts", observed, start)
    term.print(f"[green]forecast {window.T} days over {chains} chains[/green]")


@cli.command()
@click.option("-o", "--output", type=click.Path(), required=True, help="directory for the synthetic data")
@click.option("-K", "--states", type=int, default=2, show_default=True)
@click.option("--stations", type=int, default=5, show_default=True)
@click.option("--days", type=int, default=2000, show_default=True)
@click.option("--x-columns", type=int, default=1, show_default=True)
@click.option("--w-columns", type=int, default=1, show_default=True)
@click.option("--missing", type=float, default=0.0, show_default=True, help="fraction of cells masked")
@click.option("--truth", "truth_path", type=click.Path(exists=True), help="parameter json instead of a random truth")
@click.option("--seed", type=int, default=0, show_default=True)
@reported
def synth(output, states, stations, days, x_columns, w_columns, missing, truth_path, seed):
    """data drawn from a known model"""
    output = Path(output)
    if truth_path:
        with open(truth_path, "r") as f:
            truth = ModelParams.from_json(json.load(f)).validate()
        states, stations, w_columns, x_columns = truth.dims
    else:
        if states < 1:
            raise ConfigurationError("K must be at least 1", {"states": states})
        truth = random_truth(states, stations, w_columns, x_columns, StreamFactory(seed).stream("synth", 4))

    panel, covariates, chain = generate_synthetic(
        truth, days, stations, CovariateSpec(B=x_columns, A=w_columns), missing, seed
    )

    output.mkdir(parents=True, exist_ok=True)
    write_panel(panel, output / "panel.csv")
    if covariates.B:
        pd.DataFrame(covariates.x, columns=covariates.x_names).to_csv(
            output / "x.csv", index=False, float_format=FLOAT_FORMAT
        )
    if covariates.A:
        t, s, a = np.indices(covariates.w.shape).reshape(3, -1)
        pd.DataFrame(
            {
                "day": t + 1,
                "station": np.asarray(panel.stations)[s],
                "name": np.asarray(covariates.w_names)[a],
                "value": covariates.w.reshape(-1),
            }
        ).to_csv(output / "w.csv", index=False, float_format=FLOAT_FORMAT)
    pd.DataFrame({"state": chain + 1}).to_csv(output / "states.csv", index=False)
    write_json(truth.to_json(), output / "truth.json")

    term.print(f"[green]synthetic data:[/green] K={states}, T={days}, S={stations} in {output}")


@cli.command()
@click.option("--observed", type=click.Path(exists=True), required=True, help="observed panel csv")
@click.option("--simulated", type=click.Path(exists=True), required=True, help="simulated panel csv")
@click.option("-o", "--output", type=click.Path(), default="diagnostics.csv", show_default=True)
@reported
def diagnose(observed, simulated, output):
    """pairwise occurrence log-odds and rank correlation, observed vs simulated"""
    frame = spatial_diagnostics(load_panel(Path(observed)), load_panel(Path(simulated)))
    output = Path(output)
    output.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(output, index=False, float_format=FLOAT_FORMAT)
    log.info(f"wrote {output}")
    term.print(f"[green]{frame.shape[0]} station pairs[/green] written to {output}")


@cli.command("config")
@click.option("--path", "config_path", type=click.Path(), help="where to write the defaults")
def write_default_config(config_path):
    """write a default run config"""
    path = Path(config_path) if config_path else get_config_path()
    RunConfig.default().save(path)
    term.print(f"[dim]config written to {path}[/dim]")


if __name__ == "__main__":
    cli()
