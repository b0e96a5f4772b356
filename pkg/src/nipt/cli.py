"""Command line front end.

Every subcommand that takes a CONFIG file reads the YAML schema documented
on harness.ScenarioConfig and build_model; any flag repeated in the config
wins when passed on the command line. Floats print at 9 significant digits
everywhere so runs diff cleanly.
"""

from __future__ import annotations

import sys
from collections import Counter

import click
import numpy as np

from .analysis import bound_report
from .detector import ALARM_CONFIRMED, Detector, ThresholdSchedule
from .harness import (
    default_table_n_max,
    build_model,
    draw_post_change_sets,
    estimate_arl,
    estimate_wadd,
    format_curve_csv,
    load_config,
    operating_curve,
    point_setup,
    reference_scenario,
    resolve_affected,
    save_config,
)
from .projection import ProjectionTable, build_table, project


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def _print_fields(pairs) -> None:
    width = max(len(label) for label, _ in pairs) + 2
    for label, value in pairs:
        click.echo(f"{label:<{width}}{_fmt(value)}")


def _progress(message: str) -> None:
    click.echo(message, err=True)


@click.group()
def main():
    """Sensor-network change detection with projection-based confirmation."""


@main.command("project")
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@click.option("--eta", type=float, default=None, help="Target statistic level (overrides --n).")
@click.option("--n", "window_len", type=int, default=None, help="Window length; target is threshold/n + drift.")
@click.option("--scan-threshold", type=float, default=None)
@click.option("--drift", type=float, default=None)
@click.option("--tol", type=float, default=1e-6)
def project_cmd(config, eta, window_len, scan_threshold, drift, tol):
    """Solve one projection and print its factors."""
    cfg = load_config(config)
    model = build_model(cfg.model)
    drift = cfg.drift if drift is None else drift
    if eta is None:
        if window_len is None:
            raise click.UsageError("pass --eta or --n")
        if scan_threshold is None:
            scan_threshold = cfg.scan_thresholds[0]
        eta = scan_threshold / window_len + drift
    result = project(model, eta, tol)
    _print_fields(
        [
            ("status", result.status),
            ("eta", result.eta),
            ("lambda", result.lam),
            ("achieved_q", result.achieved_q),
            ("kl", result.kl_value),
            ("iterations", result.iterations),
        ]
    )
    for j, factor in enumerate(result.factors):
        probs = " ".join(f"{p:.9g}" for p in factor.probs)
        click.echo(f"factor_{j}  {probs}")


@main.command("table")
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Output table file.")
@click.option("--scan-threshold", type=float, default=None)
@click.option("--drift", type=float, default=None)
@click.option("--n-max", type=int, default=None)
@click.option("--eps", type=float, default=None)
@click.option("--workers", type=int, default=None)
def table_cmd(config, out, scan_threshold, drift, n_max, eps, workers):
    """Build a projection table over n = 1..n_max and save it."""
    cfg = load_config(config)
    model = build_model(cfg.model)
    scan_threshold = cfg.scan_thresholds[0] if scan_threshold is None else scan_threshold
    drift = cfg.drift if drift is None else drift
    if n_max is None:
        if cfg.table_n_max is not None:
            n_max = cfg.table_n_max
        else:
            schedule = ThresholdSchedule.from_model(
                model, scan_threshold, drift, cfg.rho,
                confirm_level=cfg.confirm_level, n_low=cfg.n_low,
            )
            n_max = default_table_n_max(schedule)
    table = build_table(
        model,
        scan_threshold,
        drift,
        n_max,
        eps=cfg.table_eps if eps is None else eps,
        workers=cfg.workers if workers is None else workers,
    )
    table.save(out)
    statuses = Counter(table.entries[n].status for n in range(1, table.n_max + 1))
    _print_fields(
        [
            ("entries", table.n_max),
            ("first_feasible_n", table.first_feasible_n()),
            ("statuses", ", ".join(f"{k}={v}" for k, v in sorted(statuses.items()))),
            ("saved_to", out),
        ]
    )


@main.command("detect")
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@click.option("--input", "source", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Sample file; stdin when omitted.")
@click.option("--table", "table_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Saved projection table; built on the fly when omitted.")
@click.option("--scan-threshold", type=float, default=None)
@click.option("--drift", type=float, default=None)
@click.option("--n-max", type=int, default=None)
@click.option("--emit-quiet", is_flag=True, help="Also print lines for quiet steps.")
def detect_cmd(config, source, table_path, scan_threshold, drift, n_max, emit_quiet):
    """Stream samples through a detector.

    Input lines are "k,sym_1,...,sym_J" with symbols written as alphabet
    labels; blank lines and lines starting with # are skipped. Output lines
    are "k,event,S,n,D,threshold" (D and threshold empty on quiet steps).
    """
    cfg = load_config(config)
    model = build_model(cfg.model)
    scan_threshold = cfg.scan_thresholds[0] if scan_threshold is None else scan_threshold
    drift = cfg.drift if drift is None else drift
    schedule = ThresholdSchedule.from_model(
        model, scan_threshold, drift, cfg.rho,
        confirm_level=cfg.confirm_level, n_low=cfg.n_low,
    )
    if table_path is not None:
        table = ProjectionTable.load(table_path, model)
    else:
        n_max = n_max or cfg.table_n_max or default_table_n_max(schedule)
        table = build_table(model, scan_threshold, drift, n_max,
                            eps=cfg.table_eps, workers=cfg.workers)
    detector = Detector(model, schedule, table, engine=cfg.engine)
    lookup = [
        {str(label): idx for idx, label in enumerate(sensor.alphabet.labels)}
        for sensor in model.sensors
    ]
    stream = open(source) if source else sys.stdin
    try:
        for line in stream:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = [part.strip() for part in line.split(",")]
            if len(fields) != 1 + model.n_sensors:
                raise click.ClickException(
                    f"line {detector.k + 1}: expected k plus {model.n_sensors} "
                    f"symbols, got {len(fields)} fields"
                )
            k = int(fields[0])
            if k != detector.k + 1:
                raise click.ClickException(
                    f"stream says k={k} but the detector is at step {detector.k + 1}"
                )
            row = np.empty(model.n_sensors, dtype=np.int32)
            for j, token in enumerate(fields[1:]):
                try:
                    row[j] = lookup[j][token]
                except KeyError:
                    raise click.ClickException(
                        f"k={k}: symbol {token!r} not in sensor {j}'s alphabet"
                    ) from None
            event = detector.step(row)
            if event.divergence is None:
                if emit_quiet:
                    click.echo(f"{event.k},{event.kind},{event.scan_value:.9g},{event.window_len},,")
            else:
                click.echo(
                    f"{event.k},{event.kind},{event.scan_value:.9g},{event.window_len},"
                    f"{event.divergence:.9g},{event.confirm_threshold:.9g}"
                )
    finally:
        if source:
            stream.close()


_BOUNDS_COLUMNS = (
    "drift", "q_lower", "lipschitz", "log_mgf_root", "surrogate",
    "scan_threshold", "arl_bound", "wadd_direct",
    "gamma", "wadd_gamma_bound", "calibrated_scan_threshold",
)


@main.command("bounds")
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@click.option("--drift", type=float, default=None)
@click.option("--scan-threshold", type=float, default=None,
              help="Adds the run-length bound and the direct delay bound.")
@click.option("--gamma", type=float, default=None,
              help="Adds the delay bound at this run-length constraint.")
@click.option("--csv", "as_csv", is_flag=True, help="Emit a CSV row instead of aligned text.")
def bounds_cmd(config, drift, scan_threshold, gamma, as_csv):
    """Print theoretical run-length and delay bounds for the model."""
    cfg = load_config(config)
    model = build_model(cfg.model)
    drift = cfg.drift if drift is None else drift
    report = bound_report(model, drift)
    values = {
        "drift": report.drift,
        "q_lower": report.q_lower,
        "lipschitz": report.lipschitz,
        "log_mgf_root": report.v_star,
        "surrogate": report.surrogate,
        "scan_threshold": scan_threshold,
        "arl_bound": None,
        "wadd_direct": None,
        "gamma": gamma,
        "wadd_gamma_bound": None,
        "calibrated_scan_threshold": None,
    }
    if scan_threshold is not None:
        values["arl_bound"] = report.arl_lower(scan_threshold)[0]
        values["wadd_direct"] = report.wadd_upper(scan_threshold)
    if gamma is not None:
        values["wadd_gamma_bound"] = report.gamma_bound(gamma)
        values["calibrated_scan_threshold"] = report.calibrated_scan_threshold(gamma)
    if as_csv:
        click.echo(",".join(_BOUNDS_COLUMNS))
        click.echo(",".join(_fmt(values[c]) for c in _BOUNDS_COLUMNS))
    else:
        _print_fields([(c, values[c]) for c in _BOUNDS_COLUMNS if values[c] is not None])


@main.command("simulate")
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", type=click.Choice(["arl", "wadd"]), required=True)
@click.option("--scan-threshold", type=float, default=None,
              help="Threshold point; first grid entry when omitted.")
@click.option("--trials", type=int, default=None,
              help="Overrides arl_trials or wadd_trials_per_cell.")
@click.option("--seed", type=int, default=None)
@click.option("--workers", type=int, default=None)
@click.option("--max-steps", type=int, default=None)
@click.option("--engine", type=click.Choice(["compiled", "pure"]), default=None)
def simulate_cmd(config, mode, scan_threshold, trials, seed, workers, max_steps, engine):
    """Estimate the run length or the worst delay at one threshold."""
    cfg = load_config(config).with_overrides(
        seed=seed, workers=workers, engine=engine, max_steps=max_steps,
        arl_trials=trials if mode == "arl" else None,
        wadd_trials_per_cell=trials if mode == "wadd" else None,
    )
    model = build_model(cfg.model)
    if scan_threshold is None:
        scan_threshold = cfg.scan_thresholds[0]
    point = next(
        (i for i, c in enumerate(cfg.scan_thresholds) if abs(c - scan_threshold) < 1e-12),
        0,
    )
    setup = point_setup(cfg, model, scan_threshold)
    if mode == "arl":
        est = estimate_arl(
            model, setup.schedule, setup.table,
            trials=cfg.arl_trials, seed=cfg.seed, max_steps=setup.max_steps,
            workers=cfg.workers, engine=cfg.engine, point=point,
        )
        _print_fields(
            [
                ("scan_threshold", scan_threshold),
                ("trials", est.trials),
                ("arl_mean", est.mean),
                ("arl_se", est.se),
                ("censored", est.censored),
                ("censored_fraction", est.censored_fraction),
                ("lower_bound_mean", est.lower_bound_mean),
                ("max_steps", est.max_steps),
            ]
        )
    else:
        affected = resolve_affected(model, cfg.affected, cfg.seed)
        f1_draws = draw_post_change_sets(model, affected, cfg.post_change_draws, cfg.seed)
        est = estimate_wadd(
            model, setup.schedule, setup.table, f1_draws, affected, cfg.t1_grid,
            trials_per_cell=cfg.wadd_trials_per_cell, seed=cfg.seed,
            delay_cap=setup.delay_cap, workers=cfg.workers, engine=cfg.engine,
            point=point,
        )
        _print_fields(
            [
                ("scan_threshold", scan_threshold),
                ("cells", len(est.cells)),
                ("worst_mean", est.worst_mean),
                ("worst_se", est.worst_se),
                ("worst_draw", est.worst_draw),
                ("worst_t1", est.worst_t1),
            ]
        )
        click.echo("t1,mean,se")
        for t1, mean, se in est.t1_stats():
            click.echo(f"{t1},{mean:.9g},{se:.9g}")


@main.command("curve")
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="CSV destination; stdout when neither this nor the config sets one.")
@click.option("--workers", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--engine", type=click.Choice(["compiled", "pure"]), default=None)
def curve_cmd(config, out, workers, seed, engine):
    """Estimate the full threshold grid and write the operating-curve CSV."""
    cfg = load_config(config).with_overrides(
        csv_path=out, workers=workers, seed=seed, engine=engine
    )
    rows = operating_curve(cfg, progress=_progress)
    if cfg.csv_path:
        click.echo(f"wrote {cfg.csv_path}")
    else:
        click.echo(format_curve_csv(rows), nl=False)


@main.command("reproduce")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="CSV destination (default reproduction.csv).")
@click.option("--workers", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--arl-trials", type=int, default=None)
@click.option("--wadd-trials-per-cell", type=int, default=None)
@click.option("--post-change-draws", type=int, default=None)
@click.option("--max-steps", type=int, default=None)
@click.option("--engine", type=click.Choice(["compiled", "pure"]), default=None)
@click.option("--save-config", "save_config_to", type=click.Path(dir_okay=False), default=None,
              help="Also write the resolved scenario config as YAML.")
def reproduce_cmd(out, workers, seed, arl_trials, wadd_trials_per_cell,
                  post_change_draws, max_steps, engine, save_config_to):
    """Run the bundled reduced-scale scenario end to end."""
    cfg = reference_scenario().with_overrides(
        csv_path=out, workers=workers, seed=seed, arl_trials=arl_trials,
        wadd_trials_per_cell=wadd_trials_per_cell,
        post_change_draws=post_change_draws, max_steps=max_steps, engine=engine,
    )
    if save_config_to:
        save_config(cfg, save_config_to)
    rows = operating_curve(cfg, progress=_progress)
    click.echo(",".join(("scan_threshold", "arl_est", "wadd_est", "wadd_bound")))
    for row in rows:
        click.echo(
            f"{row.scan_threshold:.9g},{row.arl_est:.9g},"
            f"{row.wadd_est:.9g},{row.wadd_bound:.9g}"
        )
    click.echo(f"wrote {cfg.csv_path}", err=True)


if __name__ == "__main__":
    main()
