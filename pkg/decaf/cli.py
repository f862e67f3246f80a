"""The `decaf` command line.

Every subcommand takes --config, --out, --seed, --workers, --set key=value (repeatable) and --verbose.
DECAF_OUT, when set, wins over --out.  Exit codes: 0 success, 1 usage errors, 2 runtime failures.
"""
import json
import logging
import os

import click
import pandas as pd

from decaf.config import apply_overrides, load_config
from decaf.envs import EnvKind
from decaf.exceptions import DecafError
from decaf.experiments import (
    EVAL_COLUMNS,
    cmd_evaluate,
    cmd_heatmap,
    cmd_pareto_approx,
    cmd_select,
    cmd_sweep,
    cmd_train,
    write_rows,
)
from decaf.fairness import FairnessKind
from decaf.learner import LearnerMode
from decaf.theorems import run_theorem_check

logger = logging.getLogger(__name__)

OUT_ENVVAR = "DECAF_OUT"
SUMMARY_COLUMNS = ["run_id", "beta_test", "utility_mean", "variance_mean", "fairness_mean", "status"]

ENV_CHOICE = click.Choice([kind.value for kind in EnvKind], case_sensitive=False)
MODE_CHOICE = click.Choice([mode.value for mode in LearnerMode], case_sensitive=False)
FAIRNESS_CHOICE = click.Choice([kind.value for kind in FairnessKind], case_sensitive=False)


def common_options(command):
    options = (
        click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="JSON config."),
        click.option("--out", "out_dir", type=click.Path(file_okay=False), help="Output root directory."),
        click.option("--seed", type=int, default=0, show_default=True),
        click.option("--workers", type=int, default=None, help="Parallel runs (defaults to every core)."),
        click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE", help="Config override."),
        click.option("--verbose", "-v", is_flag=True, help="Log at INFO."),
        click.option("--progress/--no-progress", default=True, help="Show progress bars."),
    )
    for option in reversed(options):
        command = option(command)

    return command


class RunContext:
    """What every subcommand needs: the merged config and where to write."""

    def __init__(self, config_path, out_dir, seed, workers, overrides, verbose, progress):
        logging.basicConfig(
            level=logging.INFO if verbose else logging.WARNING,
            format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        )

        self.config_path = config_path
        self.config = apply_overrides(load_config(config_path), overrides)
        self.out_dir = os.environ.get(OUT_ENVVAR) or out_dir or self.config["output"]["directory"]
        self.seed = seed
        self.workers = workers or os.cpu_count() or 1
        self.progress = progress

    def output(self, key):
        os.makedirs(self.out_dir, exist_ok=True)
        return os.path.join(self.out_dir, self.config["output"][key])

    def pick(self, env=None, mode=None, beta=None, fairness=None):
        if env is not None:
            self.config["env"]["kind"] = env
        if mode is not None:
            self.config["learner"]["mode"] = mode
        if beta is not None:
            self.config["learner"]["beta"] = beta
        if fairness is not None:
            self.config["fairness"]["kind"] = fairness


def echo_frame(frame, columns=None):
    if columns is not None:
        frame = frame[[column for column in columns if column in frame]]
    click.echo(frame.to_string(index=False))


@click.group()
def cli():
    """Fair multi-agent resource allocation: learned per-agent values plus an exact allocator."""


@cli.command()
@common_options
@click.option("--env", type=ENV_CHOICE, help="Environment (required unless --config names one).")
@click.option("--mode", type=MODE_CHOICE)
@click.option("--beta", type=click.FloatRange(0.0, 1.0))
@click.option("--fairness", type=FAIRNESS_CHOICE)
@click.option("--frozen-u", type=click.Path(exists=True, dir_okay=False), help="FO frozen utility checkpoint.")
def train(env, mode, beta, fairness, frozen_u, **common):
    """Train one model and write its run directory."""
    if env is None and common["config_path"] is None:
        raise click.UsageError("Pick an environment with --env (or a --config naming one).")

    ctx = RunContext(**common)
    ctx.pick(env=env, mode=mode, beta=beta, fairness=fairness)
    record = cmd_train(ctx.config, ctx.out_dir, seed=ctx.seed, progress=ctx.progress, frozen_u_path=frozen_u)

    click.echo(record.run_dir)
    echo_frame(pd.DataFrame([record.row], columns=EVAL_COLUMNS), SUMMARY_COLUMNS)


@cli.command()
@common_options
@click.option("--env", type=ENV_CHOICE)
@click.option("--fairness", type=FAIRNESS_CHOICE)
def sweep(env, fairness, **common):
    """Train every mode x beta x seed of the sweep block and aggregate the results."""
    ctx = RunContext(**common)
    ctx.pick(env=env, fairness=fairness)
    frame, front = cmd_sweep(ctx.config, ctx.out_dir, workers=ctx.workers, progress=ctx.progress)

    failed = frame[frame["status"] != "ok"]
    if len(failed):
        click.echo(f"{len(failed)} of {len(frame)} runs failed, see the status column.", err=True)
    echo_frame(front)


@cli.command()
@common_options
@click.argument("run_dirs", nargs=-1, required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--beta-test", "beta_tests", type=click.FloatRange(0.0, 1.0), multiple=True)
@click.option("--n-eval", type=int, default=None, help="Episodes per cell (defaults to learner.n_eval).")
def heatmap(run_dirs, beta_tests, n_eval, **common):
    """Evaluate SO/FO runs over the full beta_train x beta_test grid."""
    ctx = RunContext(**common)
    beta_tests = beta_tests or ctx.config["sweep"]["beta_tests"]
    frame = cmd_heatmap(
        run_dirs,
        beta_tests,
        out_path=ctx.output("heatmap"),
        n_eval=n_eval,
        seed=ctx.seed,
        progress=ctx.progress,
    )
    echo_frame(frame)


@cli.command("pareto-approx")
@common_options
@click.argument("run_dirs", nargs=-1, required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--beta-test", "beta_tests", type=click.FloatRange(0.0, 1.0), multiple=True)
@click.option("--n-eval", type=int, default=None)
def pareto_approx(run_dirs, beta_tests, n_eval, **common):
    """Approximate a Pareto front from a few SO/FO runs (nearest beta_train per beta_test)."""
    ctx = RunContext(**common)
    beta_tests = beta_tests or ctx.config["sweep"]["beta_tests"]
    frame = cmd_pareto_approx(
        run_dirs,
        beta_tests,
        out_path=ctx.output("pareto_approx"),
        n_eval=n_eval,
        seed=ctx.seed,
        progress=ctx.progress,
    )
    echo_frame(frame)


@cli.command()
@common_options
@click.argument("eval_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--w-u", type=float, default=None, help="Utility weight (defaults to select.w_u).")
@click.option("--w-f", type=float, default=None, help="Variance weight (defaults to select.w_f).")
def select(eval_csv, w_u, w_f, **common):
    """Pick the best beta_train per (env, mode) by w_u * U - w_f * var(Z)."""
    ctx = RunContext(**common)
    weights = ctx.config["select"]
    best = cmd_select(
        eval_csv,
        w_u=weights["w_u"] if w_u is None else w_u,
        w_f=weights["w_f"] if w_f is None else w_f,
    )
    best.to_csv(ctx.output("select"), index=False)
    echo_frame(best)


@cli.command("theorem-check")
@common_options
@click.option("--instances", type=click.IntRange(1), default=500, show_default=True)
@click.pass_context
def theorem_check(click_ctx, instances, **common):
    """Check the eta trade-off guarantees of the allocator on random one-step instances."""
    ctx = RunContext(**common)
    report = run_theorem_check(n_instances=instances, seed=ctx.seed)
    if report.ok:
        click.echo(f"{report.instances} instances x {len(report.etas)} etas: no violations.")
        return

    path = os.path.join(ctx.out_dir, "theorem_violations.json")
    os.makedirs(ctx.out_dir, exist_ok=True)
    with open(path, "w") as fo:
        json.dump(report.violations, fo, indent=2)
    click.echo(f"{len(report.violations)} violations, repro dumps in {path}", err=True)
    click_ctx.exit(2)


@cli.command()
@common_options
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--beta-test", type=click.FloatRange(0.0, 1.0), default=None)
@click.option("--n-eval", type=int, default=None)
def evaluate(run_dir, beta_test, n_eval, **common):
    """Evaluate a finished run at beta_test (SO/FO) or at its own beta (JO)."""
    ctx = RunContext(**common)
    row = cmd_evaluate(run_dir, beta_test=beta_test, n_eval=n_eval, seed=ctx.seed, progress=ctx.progress)
    frame = write_rows([row], ctx.output("eval"), columns=EVAL_COLUMNS)
    echo_frame(frame, SUMMARY_COLUMNS)


def main(args=None):
    """Console entry point; returns the process exit code."""
    try:
        result = cli.main(args=args, prog_name="decaf", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("Aborted!", err=True)
        return 1
    except click.ClickException as e:
        e.show()
        return 1
    except (DecafError, OSError) as e:
        logger.debug("Run failed", exc_info=True)
        click.echo(f"Error: {e}", err=True)
        return 2

    return result if isinstance(result, int) else 0
