"""Monte Carlo estimation of run lengths and detection delays.

Everything here is deterministic given the configured seed, including
under process parallelism: each trial derives its generator from a seed
sequence keyed by (master seed, namespace, threshold index, cell, trial),
so the sampled streams do not depend on how trials are distributed over
workers, and aggregation walks trials in index order so float summation
order is fixed too.

Delay accounting is 1-based: a run with change point t1 that confirms at
t_confirm scores (t_confirm - t1 + 1)+, so confirming on the first
post-change sample costs delay 1, and a (false) confirmation before t1
scores 0. Censored trials are excluded from means and reported separately;
a fully censored estimate is an error, not a number.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .analysis import BoundReport, bound_report
from .detector import Detector, RunRecord, ThresholdSchedule
from .distributions import Alphabet, Pmf, discrete_gaussian_pmf
from .projection import ProjectionTable, build_table
from .statistics import (
    NetworkModel,
    Sensor,
    make_mean_statistic,
    make_variance_statistic,
)

logger = logging.getLogger(__name__)

CHUNK = 4096
CSV_COLUMNS = (
    "scan_threshold",
    "drift",
    "arl_est",
    "wadd_est",
    "arl_bound",
    "wadd_bound",
    "log_mgf_root",
)

# seed-sequence namespaces, so the per-purpose streams never collide
_NS_POST_CHANGE = 1
_NS_WADD = 2
_NS_ARL = 3
_NS_AFFECTED = 4


class EstimationError(RuntimeError):
    """Raised when an estimate cannot be formed (e.g. everything censored)."""


class SamplerError(RuntimeError):
    """Raised when rejection sampling fails to find acceptable draws."""


# ----------------------------------------------------------------------------
# configuration


@dataclass
class ScenarioConfig:
    """One simulation campaign: model, thresholds, and trial counts.

    ``model`` follows the schema consumed by :func:`build_model`.
    ``affected`` is a list of sensor indices, "all", or "random" (a nonempty
    subset drawn once from the seed). ``max_steps`` censors no-change runs;
    None derives it as 100x the ARL bound at each threshold (clamped to
    [10^3, 10^8]). ``wadd_max_steps`` caps post-change steps per delay run;
    None derives max(500, ceil(60 * threshold / q_lower)).
    """

    model: dict
    scan_thresholds: list = field(default_factory=lambda: [2.0])
    drift: float = 0.25
    rho: float = 0.2
    confirm_level: float | None = None
    n_low: int | None = None
    seed: int = 0
    arl_trials: int = 200
    wadd_trials_per_cell: int = 4
    post_change_draws: int = 20
    t1_grid: list = field(default_factory=lambda: [1])
    affected: object = "all"
    max_steps: int | None = None
    wadd_max_steps: int | None = None
    table_n_max: int | None = None
    table_eps: float = 1e-6
    workers: int = 1
    engine: str | None = None
    csv_path: str | None = None

    def __post_init__(self):
        if not self.scan_thresholds:
            raise ValueError("scan_thresholds must be a nonempty list")
        if any(not t1 >= 1 for t1 in self.t1_grid):
            raise ValueError(f"t1 grid entries must be >= 1, got {self.t1_grid}")
        if self.arl_trials < 1 or self.wadd_trials_per_cell < 1:
            raise ValueError("trial counts must be at least 1")
        if self.post_change_draws < 1:
            raise ValueError("post_change_draws must be at least 1")
        if isinstance(self.affected, str):
            if self.affected not in ("all", "random"):
                raise ValueError(f"affected must be 'all', 'random', or a list, got {self.affected!r}")
        else:
            self.affected = [int(j) for j in self.affected]
            if not self.affected:
                raise ValueError("affected sensor list must be nonempty")

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def with_overrides(self, **overrides) -> "ScenarioConfig":
        """Copy with any non-None overrides applied (CLI flag precedence)."""
        data = self.to_dict()
        for key, value in overrides.items():
            if value is not None:
                data[key] = value
        return ScenarioConfig.from_dict(data)


def load_config(path) -> ScenarioConfig:
    with Path(path).open() as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path} does not contain a config mapping")
    return ScenarioConfig.from_dict(data)


def save_config(config: ScenarioConfig, path) -> None:
    with Path(path).open("w") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=False)


def _build_alphabet(spec: dict) -> Alphabet:
    if "labels" in spec:
        return Alphabet(spec["labels"])
    if "low" in spec and "high" in spec:
        return Alphabet.integer_range(int(spec["low"]), int(spec["high"]))
    raise ValueError(f"alphabet spec needs 'labels' or 'low'/'high', got {sorted(spec)}")


def _build_f0(alphabet: Alphabet, spec: dict) -> Pmf:
    kind = spec.get("kind", "uniform")
    if kind == "uniform":
        return Pmf.uniform(alphabet)
    if kind == "discrete_gaussian":
        return discrete_gaussian_pmf(alphabet, float(spec.get("width", 1.0)))
    if kind == "probs":
        return Pmf(alphabet, np.asarray(spec["probs"], dtype=np.float64))
    raise ValueError(f"unknown f0 kind {kind!r}")


def _build_statistic(f0: Pmf, spec: dict):
    kind = spec.get("kind")
    floor = spec.get("floor")
    if kind == "variance":
        offset = spec.get("offset")
        return make_variance_statistic(f0, offset, floor=floor)
    if kind == "mean":
        scores = spec.get("scores", "identity")
        if scores == "identity":
            scores = f0.alphabet.values
        return make_mean_statistic(scores, f0, floor=floor)
    raise ValueError(f"unknown statistic kind {kind!r} (config supports mean, variance)")


def build_model(spec: dict) -> NetworkModel:
    """Build a NetworkModel from its config mapping.

    Schema: {"sensors": [{"alphabet": {...}, "f0": {...}, "statistic": {...}},
    ...]}; alphabet is {"labels": [...]} or {"low": int, "high": int}; f0 is
    {"kind": "uniform" | "discrete_gaussian" (+width) | "probs" (+probs)};
    statistic is {"kind": "mean" (+scores or "identity") | "variance"
    (+optional offset), "floor": float}.
    """
    sensors = []
    for entry in spec["sensors"]:
        alphabet = _build_alphabet(entry["alphabet"])
        f0 = _build_f0(alphabet, entry.get("f0", {}))
        statistic = _build_statistic(f0, entry["statistic"])
        sensors.append(Sensor(alphabet, f0, statistic))
    return NetworkModel(sensors)


def reference_scenario() -> ScenarioConfig:
    """The bundled reduced-scale reproduction scenario.

    Three sensors on {-4..4} with a discrete-Gaussian pre-change pmf and the
    variance statistic (floor 1), drift 0.25. Threshold grid and caps were
    pilot-calibrated so estimated run lengths span roughly 1e2..1e4 within a
    few minutes of compute.
    """
    sensor = {
        "alphabet": {"low": -4, "high": 4},
        "f0": {"kind": "discrete_gaussian", "width": 1.0},
        "statistic": {"kind": "variance", "floor": 1.0},
    }
    return ScenarioConfig(
        model={"sensors": [sensor, sensor, sensor]},
        scan_thresholds=[12.0, 26.0, 40.0, 54.0, 68.0],
        drift=0.25,
        rho=0.2,
        seed=1729,
        arl_trials=1000,
        wadd_trials_per_cell=17,
        post_change_draws=200,
        t1_grid=[1, 3, 10, 30, 100, 300],
        affected="all",
        max_steps=200_000,
        csv_path="reproduction.csv",
    )


# ----------------------------------------------------------------------------
# sampling


def sample_post_change(
    sensor: Sensor,
    rng,
    *,
    max_draws: int = 100_000,
) -> Pmf:
    """One post-change pmf for this sensor: Dirichlet(1) with rejection on
    the statistic reaching the sensor's floor.

    The flat Dirichlet is the uniform distribution on the simplex, so this
    samples the post-change set uniformly; a vanishing acceptance rate means
    that set is too thin for rejection and raises instead of spinning.
    """
    rng = np.random.default_rng(rng)
    stat = sensor.statistic
    if stat.floor is None:
        raise ValueError(f"statistic {stat.name!r} has no floor to sample against")
    m = sensor.alphabet.size
    for attempt in range(1, max_draws + 1):
        candidate = Pmf(sensor.alphabet, rng.dirichlet(np.ones(m)))
        if stat(candidate) >= stat.floor:
            logger.debug(
                "accepted post-change pmf after %d draws (%s >= %g)",
                attempt, stat.name, stat.floor,
            )
            return candidate
    raise SamplerError(
        f"no draw with {stat.name} >= {stat.floor} in {max_draws} attempts "
        f"(acceptance below {1.0 / max_draws:.1e}); use a sampler adapted to "
        "this constraint region"
    )


def _sample_column(rng, pmf: Pmf, size: int) -> np.ndarray:
    return rng.choice(pmf.alphabet.size, size=size, p=pmf.probs).astype(np.int32)


def _stream_chunks(model, f1_map, t1, max_steps, rng, chunk=CHUNK):
    """Yield (c, J) sample chunks; rows 1..t1-1 pre-change, t1.. post-change.

    ``f1_map`` maps affected sensor index to its post-change pmf; ``t1``
    None means no change ever. The per-chunk, per-sensor draw order is fixed
    so the stream depends only on the generator state, not the consumer.
    """
    k = 0
    while k < max_steps:
        c = min(chunk, max_steps - k)
        cols = []
        for j, sensor in enumerate(model.sensors):
            if t1 is None or j not in f1_map:
                cols.append(_sample_column(rng, sensor.f0, c))
            else:
                pre = max(0, min(c, (t1 - 1) - k))
                parts = []
                if pre:
                    parts.append(_sample_column(rng, sensor.f0, pre))
                if c - pre:
                    parts.append(_sample_column(rng, f1_map[j], c - pre))
                cols.append(parts[0] if len(parts) == 1 else np.concatenate(parts))
        yield np.stack(cols, axis=1)
        k += c


def generate_stream(model, f1s, affected, t1, length, seed) -> np.ndarray:
    """One (length, J) sample array; see _stream_chunks for the regime rule.

    ``f1s`` lists post-change pmfs aligned with ``affected``; ``t1`` may be
    None or inf for no change. ``seed`` is anything accepted by
    numpy's default_rng (including a Generator).
    """
    if t1 is not None and math.isinf(t1):
        t1 = None
    if t1 is not None and t1 < 1:
        raise ValueError(f"t1 must be >= 1, got {t1}")
    rng = np.random.default_rng(seed)
    f1_map = dict(zip(list(affected), list(f1s))) if t1 is not None else {}
    chunks = list(_stream_chunks(model, f1_map, t1, length, rng))
    return np.concatenate(chunks, axis=0) if chunks else np.zeros((0, model.n_sensors), np.int32)


def draw_post_change_sets(model, affected, draws: int, seed: int):
    """``draws`` independent per-affected-sensor pmf lists, seed-stable."""
    out = []
    for d in range(draws):
        rng = np.random.default_rng(np.random.SeedSequence((seed, _NS_POST_CHANGE, d)))
        out.append([sample_post_change(model.sensors[j], rng) for j in affected])
    return out


def resolve_affected(model, affected, seed: int) -> tuple:
    if affected == "all":
        return tuple(range(model.n_sensors))
    if affected == "random":
        rng = np.random.default_rng(np.random.SeedSequence((seed, _NS_AFFECTED)))
        count = int(rng.integers(1, model.n_sensors + 1))
        return tuple(sorted(rng.choice(model.n_sensors, size=count, replace=False).tolist()))
    subset = tuple(int(j) for j in affected)
    if not subset:
        raise ValueError("affected subset must be nonempty")
    if len(set(subset)) != len(subset) or any(not 0 <= j < model.n_sensors for j in subset):
        raise ValueError(f"invalid affected subset {subset} for {model.n_sensors} sensors")
    return subset


# ----------------------------------------------------------------------------
# trial execution (shared by serial and process-parallel paths)

_STATE: dict | None = None


def _init_worker(payload):
    global _STATE
    _STATE = payload


def _arl_trial(trial: int):
    st = _STATE
    rng = np.random.default_rng(
        np.random.SeedSequence((st["seed"], _NS_ARL, st["point"], trial))
    )
    detector = Detector(
        st["model"], st["schedule"], st["table"], engine=st["engine"], capacity=2048
    )
    chunks = _stream_chunks(st["model"], {}, None, st["max_steps"], rng)
    record = detector.run(
        chunks,
        max_steps=st["max_steps"],
        collect_segments=st["collect_segments"],
        trial=trial,
    )
    return (
        record.t_confirm,
        record.steps,
        record.suppressions,
        record.censored,
        record.first_cross,
        record.segments,
    )


def _wadd_trial(args):
    draw, t1_idx, trial = args
    st = _STATE
    t1 = st["t1_grid"][t1_idx]
    cell = draw * len(st["t1_grid"]) + t1_idx + 1
    rng = np.random.default_rng(
        np.random.SeedSequence((st["seed"], _NS_WADD, st["point"], cell, trial))
    )
    cap = (t1 - 1) + st["delay_cap"]
    f1_map = dict(zip(st["affected"], st["f1_draws"][draw]))
    detector = Detector(
        st["model"], st["schedule"], st["table"], engine=st["engine"], capacity=2048
    )
    record = detector.run(
        _stream_chunks(st["model"], f1_map, t1, cap, rng),
        max_steps=cap,
        trial=trial,
        t1=t1,
    )
    return draw, t1_idx, trial, record.t_confirm, record.censored


def _map_jobs(fn, jobs, payload, workers: int):
    if workers <= 1:
        _init_worker(payload)
        return [fn(job) for job in jobs]
    chunksize = max(1, len(jobs) // (workers * 8))
    with ProcessPoolExecutor(
        max_workers=workers, initializer=_init_worker, initargs=(payload,)
    ) as pool:
        return list(pool.map(fn, jobs, chunksize=chunksize))


# ----------------------------------------------------------------------------
# estimators


@dataclass
class ArlEstimate:
    """Mean run length to a confirmed alarm under the no-change law.

    ``mean`` averages confirmed runs only; ``lower_bound_mean`` counts each
    censored run at the censoring cap, making it a lower bound on the true
    ARL whenever censoring occurred.
    """

    mean: float
    se: float
    trials: int
    censored: int
    max_steps: int
    lower_bound_mean: float
    records: list[RunRecord] | None = None

    @property
    def censored_fraction(self) -> float:
        return self.censored / self.trials


def _mean_se(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return mean, se


def estimate_arl(
    model,
    schedule,
    table,
    *,
    trials: int,
    seed: int,
    max_steps: int,
    workers: int = 1,
    engine: str | None = None,
    point: int = 0,
    collect_segments: bool = False,
    keep_records: bool = False,
) -> ArlEstimate:
    """Monte Carlo ARL at one threshold point; no change is ever injected."""
    payload = {
        "model": model,
        "schedule": schedule,
        "table": table,
        "engine": engine,
        "seed": seed,
        "point": point,
        "max_steps": max_steps,
        "collect_segments": collect_segments,
    }
    results = _map_jobs(_arl_trial, list(range(trials)), payload, workers)
    confirmed = [t for t, _, _, censored, _, _ in results if not censored]
    n_censored = trials - len(confirmed)
    if not confirmed:
        raise EstimationError(
            f"all {trials} runs censored at max_steps={max_steps}; raise the cap"
        )
    mean, se = _mean_se(confirmed)
    lower = float(np.mean([steps if censored else t for t, steps, _, censored, _, _ in results]))
    records = None
    if keep_records or collect_segments:
        records = [
            RunRecord(
                trial=i,
                t1=None,
                first_cross=first,
                t_confirm=t,
                suppressions=sup,
                steps=steps,
                censored=censored,
                segments=segments,
            )
            for i, (t, steps, sup, censored, first, segments) in enumerate(results)
        ]
    return ArlEstimate(
        mean=mean,
        se=se,
        trials=trials,
        censored=n_censored,
        max_steps=max_steps,
        lower_bound_mean=lower,
        records=records,
    )


@dataclass
class CellStats:
    draw: int
    t1: int
    mean: float
    se: float
    trials: int
    censored: int


@dataclass
class WaddEstimate:
    """Worst mean delay over (post-change draw x change point) cells."""

    worst_mean: float
    worst_draw: int
    worst_t1: int
    worst_se: float
    cells: list[CellStats]

    def t1_stats(self) -> list[tuple[int, float, float]]:
        """Per-change-point (t1, mean, se) pooled across draws."""
        by_t1: dict[int, list[CellStats]] = {}
        for cell in self.cells:
            by_t1.setdefault(cell.t1, []).append(cell)
        out = []
        for t1 in sorted(by_t1):
            group = by_t1[t1]
            total = sum(c.trials - c.censored for c in group)
            mean = sum(c.mean * (c.trials - c.censored) for c in group) / total
            var = sum((c.se**2) * (c.trials - c.censored) ** 2 for c in group) / total**2
            out.append((t1, mean, math.sqrt(var)))
        return out


def estimate_wadd(
    model,
    schedule,
    table,
    f1_draws,
    affected,
    t1_grid,
    *,
    trials_per_cell: int,
    seed: int,
    delay_cap: int,
    workers: int = 1,
    engine: str | None = None,
    point: int = 0,
) -> WaddEstimate:
    """Worst-cell mean delay over sampled post-change laws and change points."""
    t1_grid = list(t1_grid)
    payload = {
        "model": model,
        "schedule": schedule,
        "table": table,
        "engine": engine,
        "seed": seed,
        "point": point,
        "t1_grid": t1_grid,
        "delay_cap": delay_cap,
        "f1_draws": f1_draws,
        "affected": tuple(affected),
    }
    jobs = [
        (draw, t1_idx, trial)
        for draw in range(len(f1_draws))
        for t1_idx in range(len(t1_grid))
        for trial in range(trials_per_cell)
    ]
    results = _map_jobs(_wadd_trial, jobs, payload, workers)
    delays: dict[tuple[int, int], list[int]] = {}
    censored: dict[tuple[int, int], int] = {}
    for draw, t1_idx, _, t_confirm, was_censored in results:
        key = (draw, t1_idx)
        if was_censored:
            censored[key] = censored.get(key, 0) + 1
        else:
            t1 = t1_grid[t1_idx]
            delays.setdefault(key, []).append(max(0, t_confirm - t1 + 1))
    cells = []
    for draw in range(len(f1_draws)):
        for t1_idx, t1 in enumerate(t1_grid):
            key = (draw, t1_idx)
            cell_delays = delays.get(key, [])
            n_censored = censored.get(key, 0)
            if not cell_delays:
                raise EstimationError(
                    f"cell (draw {draw}, t1 {t1}) fully censored at delay cap "
                    f"{delay_cap}; raise wadd_max_steps"
                )
            mean, se = _mean_se(cell_delays)
            cells.append(
                CellStats(
                    draw=draw,
                    t1=t1,
                    mean=mean,
                    se=se,
                    trials=trials_per_cell,
                    censored=n_censored,
                )
            )
    worst = max(cells, key=lambda c: c.mean)
    return WaddEstimate(
        worst_mean=worst.mean,
        worst_draw=worst.draw,
        worst_t1=worst.t1,
        worst_se=worst.se,
        cells=cells,
    )


# ----------------------------------------------------------------------------
# the operating curve


@dataclass
class CurveRow:
    scan_threshold: float
    drift: float
    arl_est: float
    wadd_est: float
    arl_bound: float
    wadd_bound: float
    log_mgf_root: float

    def values(self):
        return [getattr(self, name) for name in CSV_COLUMNS]


def format_curve_csv(rows) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        lines.append(",".join(f"{value:.9g}" for value in row.values()))
    return "\n".join(lines) + "\n"


def write_curve_csv(rows, path) -> None:
    Path(path).write_text(format_curve_csv(rows))


def default_max_steps(report: BoundReport, scan_threshold: float) -> int:
    """100x the run-length bound, clamped to [1e3, 1e8].

    The bound is asymptotic and can be far off at small thresholds, hence
    the floor; the ceiling keeps a bad calibration from hanging a run.
    """
    bound, _ = report.arl_lower(scan_threshold)
    if not math.isfinite(bound):
        return 100_000_000
    return int(min(max(1000.0, 100.0 * bound), 1e8))


def default_delay_cap(schedule: ThresholdSchedule) -> int:
    return max(500, math.ceil(60.0 * schedule.scan_threshold / schedule.q_lower))


def default_table_n_max(schedule: ThresholdSchedule) -> int:
    # crossing windows concentrate well below threshold/drift steps; 12x
    # covers the tail, and the detector raises if one ever lands beyond
    return max(64, math.ceil(12.0 * schedule.scan_threshold / schedule.drift))


@dataclass
class PointSetup:
    """Everything needed to simulate one threshold point."""

    schedule: ThresholdSchedule
    table: ProjectionTable
    max_steps: int
    delay_cap: int


def point_setup(config: ScenarioConfig, model, scan_threshold: float, report=None) -> PointSetup:
    schedule = ThresholdSchedule.from_model(
        model,
        scan_threshold,
        config.drift,
        config.rho,
        confirm_level=config.confirm_level,
        n_low=config.n_low,
    )
    n_max = config.table_n_max or default_table_n_max(schedule)
    table = build_table(
        model,
        scan_threshold,
        config.drift,
        n_max,
        eps=config.table_eps,
        workers=config.workers,
    )
    if config.max_steps is not None:
        max_steps = config.max_steps
    else:
        if report is None:
            report = bound_report(model, config.drift)
        max_steps = default_max_steps(report, scan_threshold)
    delay_cap = config.wadd_max_steps or default_delay_cap(schedule)
    return PointSetup(schedule=schedule, table=table, max_steps=max_steps, delay_cap=delay_cap)


def operating_curve(config: ScenarioConfig, *, progress=None) -> list[CurveRow]:
    """Estimate (ARL, WADD) across the threshold grid and attach bounds.

    Writes ``config.csv_path`` when set. The wadd_bound column evaluates the
    calibrated delay bound at gamma = the estimated ARL of the same row;
    arl_bound is the run-length bound at that row's threshold.
    """
    model = build_model(config.model)
    report = bound_report(model, config.drift)
    affected = resolve_affected(model, config.affected, config.seed)
    f1_draws = draw_post_change_sets(model, affected, config.post_change_draws, config.seed)
    rows = []
    for point, scan_threshold in enumerate(config.scan_thresholds):
        setup = point_setup(config, model, scan_threshold, report)
        if progress:
            progress(f"threshold {scan_threshold:g}: table of {setup.table.n_max} entries built")
        arl = estimate_arl(
            model,
            setup.schedule,
            setup.table,
            trials=config.arl_trials,
            seed=config.seed,
            max_steps=setup.max_steps,
            workers=config.workers,
            engine=config.engine,
            point=point,
        )
        wadd = estimate_wadd(
            model,
            setup.schedule,
            setup.table,
            f1_draws,
            affected,
            config.t1_grid,
            trials_per_cell=config.wadd_trials_per_cell,
            seed=config.seed,
            delay_cap=setup.delay_cap,
            workers=config.workers,
            engine=config.engine,
            point=point,
        )
        arl_bound, _ = report.arl_lower(scan_threshold)
        rows.append(
            CurveRow(
                scan_threshold=float(scan_threshold),
                drift=float(config.drift),
                arl_est=arl.mean,
                wadd_est=wadd.worst_mean,
                arl_bound=arl_bound,
                wadd_bound=report.gamma_bound(max(arl.mean, 1.0)),
                log_mgf_root=report.v_star,
            )
        )
        if progress:
            progress(
                f"threshold {scan_threshold:g}: arl {arl.mean:.4g} "
                f"(censored {arl.censored}/{arl.trials}), wadd {wadd.worst_mean:.4g}"
            )
    if config.csv_path:
        write_curve_csv(rows, config.csv_path)
    return rows
