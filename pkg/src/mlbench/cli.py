"""Command-line entry point ``mlbench``.

Exit codes: 0 success, 2 invalid configuration, 3 every replicate failed.
"""

from __future__ import annotations

import sys

import click

from . import bench
from .errors import InvalidArgumentError
from .tempered import make_ladder

EXIT_INVALID = 2
EXIT_ALL_FAILED = 3


def _fail_invalid(exc: Exception):
    click.echo(f"error: {exc}", err=True)
    sys.exit(EXIT_INVALID)


@click.group()
def main():
    """Marginal-likelihood estimators and benchmark runner."""


@main.command()
@click.option("--config", type=click.Path(), default=None, help="JSON file mirroring the experiment spec.")
@click.option("--target", default=None, help="Target id.")
@click.option("--target-arg", multiple=True, help="Target parameter as key=value (repeatable).")
@click.option("--method", default=None, help="Method id.")
@click.option("--method-arg", multiple=True, help="Method parameter as key=value (repeatable).")
@click.option("--budget", type=int, default=None, help="Model evaluations per replicate.")
@click.option("--replicates", type=int, default=None, help="Number of replicates R.")
@click.option("--seed", type=int, default=None, help="Base seed; replicate r uses seed + r.")
@click.option("--out", type=click.Path(), default=None, help="CSV output path (stdout if omitted).")
@click.option("--workers", type=int, default=1, show_default=True, help="Worker processes.")
@click.option("--no-timing", is_flag=True, help="Write runtime_ms as 0 for byte-stable output.")
def estimate(config, target, target_arg, method, method_arg, budget, replicates, seed, out, workers, no_timing):
    """Run one method on one target and write per-replicate CSV rows."""
    try:
        d = bench.load_config(config) if config else {}
        if target is not None:
            d["target"] = target
        if method is not None:
            d["method"] = method
        if target_arg:
            d["target_params"] = {**d.get("target_params", {}), **bench.parse_kv(target_arg)}
        if method_arg:
            d["method_params"] = {**d.get("method_params", {}), **bench.parse_kv(method_arg)}
        for key, val in (("budget", budget), ("replicates", replicates), ("seed", seed), ("out", out)):
            if val is not None:
                d[key] = val
        spec = bench.ExperimentSpec.from_dict(d)
    except (InvalidArgumentError, TypeError) as exc:
        _fail_invalid(exc)
    rows = bench.run_experiment(spec, workers=workers, timing=not no_timing)
    if not spec.out:
        click.echo(bench.rows_to_csv(rows), nl=False)
    ok = [r for r in rows if r["status"] == "ok"]
    if not ok:
        click.echo("error: all replicates failed", err=True)
        sys.exit(EXIT_ALL_FAILED)
    try:
        ref = bench.exact_log_Z_for(spec.target, spec.target_params)
        click.echo(bench.format_metrics(bench.metrics(rows, ref)), err=True)
    except Exception:  # noqa: BLE001 - metrics are informational only
        pass


@main.command(name="bench")
@click.argument("name")
@click.option("--out", type=click.Path(), required=True, help="Output directory.")
@click.option("--replicates", type=int, default=None, help="Override the replicate count.")
@click.option("--workers", type=int, default=1, show_default=True, help="Worker processes.")
@click.option("--no-timing", is_flag=True, help="Write runtime_ms as 0 for byte-stable output.")
def bench_cmd(name, out, replicates, workers, no_timing):
    """Run a named experiment, or ``all`` of them, into OUT."""
    names = list(bench.EXPERIMENTS) if name == "all" else [name]
    try:
        for n in names:
            bench.experiment_specs(n)
    except InvalidArgumentError as exc:
        _fail_invalid(exc)
    any_ok = False
    for n in names:
        rows = bench.run_named(n, out, replicates, workers, timing=not no_timing)
        any_ok = any_ok or any(r["status"] == "ok" for r in rows)
        click.echo(f"{n}: {len(rows)} rows", err=True)
    if not any_ok:
        sys.exit(EXIT_ALL_FAILED)


@main.command()
@click.option("--K", "K", type=int, required=True, help="Number of ladder steps.")
@click.option("--alpha", type=float, default=1.0, show_default=True, help="Ladder shape in (0, 1].")
def ladder(K, alpha):
    """Print the inverse temperatures (k / K)^(1 / alpha), one per line."""
    try:
        lad = make_ladder(K, alpha)
    except InvalidArgumentError as exc:
        _fail_invalid(exc)
    for b in lad.betas:
        click.echo(repr(float(b)))


if __name__ == "__main__":
    main()
