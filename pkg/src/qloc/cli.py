"""``qloc`` command line: run, sweep, catalog, weights-table and the spectral-flow shortcuts."""

from __future__ import annotations

import json
import sys

import click

from . import harness, weightfn
from .errors import ConfigurationError

_PIPELINE_HELP = "\n".join(f"  {name}.csv: {cols}" for name, cols in harness.COLUMNS_DOC.items())


def _config(path, pipeline):
    if path is None:
        return harness.default_config(pipeline or "weights")
    return harness.load_config(path)


def _overrides(pairs, seed=None) -> dict:
    out = {}
    for item in pairs:
        if "=" not in item:
            raise click.BadParameter(f"expected section.key=value, got {item!r}", param_hint="--set")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    if seed is not None:
        out["scenario.seed"] = str(seed)
    return out


def _summary(report) -> None:
    state = "PASS" if report.passed else "FAIL"
    click.echo(f"{state} {report.pipeline}: {len(report.records)} audits, {len(report.failures)} failed, "
               f"{report.wall_time:.1f}s")
    if report.error:
        click.echo(f"  error: {report.error}")
    for r in report.failures[:10]:
        click.echo(f"  {r.name}: {r.lhs!r} > {r.rhs!r} + {r.tol!r}")


def _run(config, pipeline, out, parallelism, sets, seed):
    try:
        cfg = _config(config, pipeline)
        over = _overrides(sets, seed)
        report = harness.run(cfg, pipeline=pipeline, parallelism=parallelism, overrides=over, catch=True)
    except ConfigurationError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(2)
    report.write(out or report.config["scenario.out"])
    _summary(report)
    sys.exit(report.exit_code())


_common = [
    click.option("--config", "config", type=click.Path(exists=True, dir_okay=False), help="scenario file"),
    click.option("--out", type=click.Path(file_okay=False), help="output directory (overrides scenario.out)"),
    click.option("--parallelism", type=click.IntRange(1), default=1, show_default=True,
                 help="worker processes"),
    click.option("--set", "sets", multiple=True, metavar="SECTION.KEY=VALUE",
                 help="override a config key; repeatable; wins over the file"),
    click.option("--seed", type=int, help="override scenario.seed"),
]


def common(fn):
    for opt in reversed(_common):
        fn = opt(fn)
    return fn


@click.group(help=f"Locality audits for quantum lattice dynamics.\n\nCSV columns per pipeline:\n\n\b\n{_PIPELINE_HELP}")
def main():
    pass


@main.command(help="Run one audit pipeline; exit status 1 iff an audit fails, 2 on configuration errors.")
@common
@click.option("--pipeline", type=click.Choice(harness.PIPELINES), help="pipeline (overrides scenario.pipeline)")
def run(config, out, parallelism, sets, seed, pipeline):
    _run(config, pipeline, out, parallelism, sets, seed)


@main.command(help="Run one instance per value of a numeric config key.")
@common
@click.option("--pipeline", type=click.Choice(harness.PIPELINES))
@click.option("--axis", required=True, help="numeric config key, e.g. audit.gamma")
@click.option("--values", "values", required=True, help="comma-separated values")
@click.option("--fail-fast", is_flag=True, help="stop after the first failing batch")
def sweep(config, out, parallelism, sets, seed, pipeline, axis, values, fail_fast):
    try:
        cfg = _config(config, pipeline)
        if pipeline is not None and pipeline != cfg.pipeline:
            cfg = harness._rebase(cfg, pipeline)
        vals = [float(v) for v in values.split(",") if v.strip()]
        report = harness.sweep(cfg, axis, vals, parallelism, fail_fast, overrides=_overrides(sets, seed))
    except (ConfigurationError, ValueError) as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(2)
    report.write(out or cfg["scenario.out"])
    for v, r in zip(report.values, report.reports):
        click.echo(f"{'PASS' if r.passed else 'FAIL'} {axis}={v}: {len(r.failures)} failed")
    for v in report.skipped:
        click.echo(f"SKIP {axis}={v}")
    sys.exit(0 if report.passed else 1)


@main.command(help="List model presets with their parameters and desk-scale sizes.")
@click.option("--json", "as_json", is_flag=True, help="machine-readable output")
def catalog(as_json):
    items = harness.catalog()
    if as_json:
        click.echo(json.dumps(items, indent=2))
        return
    for p in items:
        tags = f" [{', '.join(p['tags'])}]" if p["tags"] else ""
        click.echo(f"{p['name']}: {p['summary']}{tags}")
        for k, v in p["params"].items():
            click.echo(f"  {k}: {v}")
        click.echo(f"  sizes: {', '.join(map(str, p['desk_sizes']))}")


@main.command("schema", help="Print every config key with its type and default.")
def schema():
    click.echo(harness.schema_text())


@main.command("weights-table", help="Write t, w_gamma, W_gamma on a uniform grid as CSV.")
@click.option("--gamma", type=float, default=1.0, show_default=True)
@click.option("--t-max", type=float, default=10.0, show_default=True)
@click.option("--points", type=click.IntRange(2), default=81, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), help="CSV path; stdout when omitted")
def weights_table(gamma, t_max, points, out):
    import numpy as np

    tables = weightfn.constants()
    t = np.linspace(-t_max, t_max, points)
    rows = weightfn.weight_table(tables, gamma, t)
    text = harness.Table("weights", ["t", "w_gamma", "W_gamma"], rows).csv_text()
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


def _shortcut(name, pipeline, text):
    @main.command(name, help=text)
    @common
    def cmd(config, out, parallelism, sets, seed):
        _run(config, pipeline, out, parallelism, sets, seed)

    return cmd


_shortcut("flow-verify", "flow", "Projector transport along the configured curve (pipeline flow).")
_shortcut("gap-audit", "gap", "Gap and cluster profile along the curve (pipeline gap).")
_shortcut("automorphic-audit", "equivalence", "Pairwise transport residuals (pipeline equivalence).")


if __name__ == "__main__":
    main()
